// sacn: dataset preparation, training, evaluation, gradient checking, sweeps and prediction.
//
// Exit codes: 0 ok, 1 validation failure, 2 I/O failure, 3 numeric failure.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sacn/sacn.hpp"

namespace fs = std::filesystem;
using namespace sacn;

namespace {

struct PrepareArgs {
  std::string train, valid, test, attributes, out;
};

struct TrainArgs {
  std::string config, data, out;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
};

struct EvaluateArgs {
  std::string checkpoint, data, split = "test", out;
  bool indegree = true;
};

struct GradcheckArgs {
  std::size_t toy_size = 6;
  std::uint64_t seed = 7;
  double tolerance = 1e-4;
};

struct SweepArgs {
  std::string grid, config, data, out;
  std::optional<std::uint64_t> seed;
};

struct PredictArgs {
  std::string checkpoint, data, subject, relation;
  std::size_t topk = 10;
};

void require_file(const std::string& path) {
  if (!fs::is_regular_file(path)) throw IoError("no such file: " + path);
}

TrainConfig resolve_config(const std::string& path, const std::string& data, std::optional<std::uint64_t> seed,
                           const std::vector<std::string>& overrides) {
  TrainConfig c;
  if (!path.empty()) {
    require_file(path);
    c = load_config(path);
  }
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ValidationError("--set expects key=value, got '" + kv + "'");
    set_config_value(c, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!data.empty()) c.data_dir = data;
  if (seed) c.seed = *seed;
  if (c.data_dir.empty()) throw ValidationError("no dataset: pass --data or set data_dir in the config");
  validate(c);
  return c;
}

int run_prepare(const PrepareArgs& a) {
  for (const auto* p : {&a.train, &a.valid, &a.test}) require_file(*p);
  const auto train = parse_triples(fs::path(a.train));
  const auto valid = parse_triples(fs::path(a.valid));
  const auto test = parse_triples(fs::path(a.test));
  EncodeReport enc;
  Dataset ds = assemble_dataset(train, valid, test, &enc);
  if (!a.attributes.empty()) {
    require_file(a.attributes);
    AttributeMergeReport rep;
    ds = merge_attributes(std::move(ds), parse_triples(fs::path(a.attributes)), &rep);
    std::cout << "attributes: " << rep.retained << " retained, " << rep.dropped_unknown_entity
              << " dropped (unknown entity), " << rep.duplicates_dropped << " duplicates, " << rep.new_attribute_nodes
              << " attribute nodes, " << rep.new_relations << " attribute relations\n";
  }
  if (enc.duplicates_dropped > 0) std::cout << "duplicate triples dropped: " << enc.duplicates_dropped << '\n';
  ds = add_reciprocal(std::move(ds));
  save_prepared(ds, a.out);
  write_stats_text(std::cout, compute_stats(ds));
  return 0;
}

template <typename T>
int train_as(const TrainConfig& c, const std::string& out) {
  const Dataset data = load_prepared(c.data_dir);
  for (const auto& note : grid_notes(c)) std::cerr << "note: " << note << '\n';
  Trainer<T> trainer(c, data);
  const FitResult r = trainer.fit(out, &std::cout);
  std::cout << "best epoch " << r.best_epoch;
  if (r.best_mrr >= 0) std::cout << " valid mrr " << r.best_mrr;
  if (r.stopped_early) std::cout << " (early stop)";
  std::cout << "\ncheckpoint " << r.best_checkpoint.string() << '\n';
  return 0;
}

int run_train(const TrainArgs& a) {
  const TrainConfig c = resolve_config(a.config, a.data, a.seed, a.overrides);
  return c.precision == Precision::float64 ? train_as<double>(c, a.out) : train_as<float>(c, a.out);
}

template <typename T>
int evaluate_as(const EvaluateArgs& a, const Dataset& data) {
  TrainConfig c;
  KbcModel<T> model = load_model<T>(a.checkpoint, data, &c);
  const auto adj = RelationAdjacency::from_dataset(data);
  const auto filter = build_filter_index(data);
  std::vector<RankedQuery> ranked;
  const MetricReport global =
      evaluate_model(model, adj, data.store, parse_split(a.split), filter, c.eval_batch_size, &ranked);
  std::vector<BucketReport> buckets;
  if (a.indegree) {
    const auto degree = adj.degrees();
    const std::size_t max_degree = degree.empty() ? 0 : *std::max_element(degree.begin(), degree.end());
    buckets = indegree_report(ranked, degree, default_indegree_buckets(max_degree));
  }
  write_report_text(std::cout, global, buckets);
  if (!a.out.empty()) {
    std::error_code ec;
    fs::create_directories(a.out, ec);
    if (ec) throw IoError("cannot create " + a.out + ": " + ec.message());
    std::ofstream txt(fs::path(a.out) / "report.txt");
    std::ofstream csv(fs::path(a.out) / "indegree.csv");
    if (!txt || !csv) throw IoError("cannot write report under " + a.out);
    write_report_text(txt, global, buckets);
    write_report_csv(csv, buckets);
  }
  return 0;
}

int run_evaluate(const EvaluateArgs& a) {
  require_file(a.checkpoint);
  const Dataset data = load_prepared(a.data);
  const auto header = nn::read_checkpoint_header(a.checkpoint);
  return header.dtype == nn::dtype_code<double>() ? evaluate_as<double>(a, data) : evaluate_as<float>(a, data);
}

int run_gradcheck(const GradcheckArgs& a) {
  const GradCheckSummary s = model_grad_check(a.toy_size, a.seed);
  std::cout << "toy graph: " << s.num_entities << " nodes, " << s.num_edge_types << " relation types\n";
  for (const auto& e : s.entries) {
    std::cout << std::left << std::setw(32) << e.name << std::right << std::setw(6) << e.checked << "  max rel err "
              << std::scientific << std::setprecision(3) << e.max_rel_error << std::defaultfloat << '\n';
  }
  const bool ok = s.worst < a.tolerance;
  std::cout << "max rel err " << std::scientific << std::setprecision(3) << s.worst << (ok ? " < " : " >= ")
            << a.tolerance << std::defaultfloat << '\n';
  if (!ok) throw NumericError("gradient check failed");
  return 0;
}

/// Grid file: one `key=v1,v2,...` per line; runs the cartesian product in file order.
std::vector<std::pair<std::string, std::vector<std::string>>> load_grid(const std::string& path) {
  require_file(path);
  std::ifstream in(path);
  std::vector<std::pair<std::string, std::vector<std::string>>> grid;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(path, lineno, "expected key=v1,v2,...");
    std::string key(detail::trim(std::string_view(line).substr(0, eq)));
    std::vector<std::string> values;
    std::stringstream rest(line.substr(eq + 1));
    std::string v;
    while (std::getline(rest, v, ',')) values.emplace_back(detail::trim(v));
    if (values.empty() || std::any_of(values.begin(), values.end(), [](const auto& s) { return s.empty(); })) {
      throw ParseError(path, lineno, "empty value list for '" + key + "'");
    }
    try {
      TrainConfig probe;
      for (const auto& val : values) set_config_value(probe, key, val);
    } catch (const ValidationError& e) {
      throw ParseError(path, lineno, e.what());
    }
    grid.emplace_back(std::move(key), std::move(values));
  }
  if (grid.empty()) throw ValidationError("grid file " + path + " declares no parameters");
  return grid;
}

int run_sweep(const SweepArgs& a) {
  const auto grid = load_grid(a.grid);
  const TrainConfig base = resolve_config(a.config, a.data, a.seed, {});
  std::size_t total = 1;
  for (const auto& [k, vs] : grid) total *= vs.size();

  std::error_code ec;
  fs::create_directories(a.out, ec);
  if (ec) throw IoError("cannot create " + a.out + ": " + ec.message());
  std::ofstream csv(fs::path(a.out) / "sweep.csv", std::ios::binary);
  if (!csv) throw IoError("cannot write " + (fs::path(a.out) / "sweep.csv").string());
  csv << "run";
  for (const auto& [k, vs] : grid) csv << ',' << k;
  csv << ",best_epoch,mrr,hits1,hits3,hits10\n";

  const Dataset data = load_prepared(base.data_dir);
  for (std::size_t run = 0; run < total; ++run) {
    TrainConfig c = base;
    std::vector<std::string> chosen;
    std::size_t rest = run;
    for (auto it = grid.rbegin(); it != grid.rend(); ++it) {
      chosen.push_back(it->second[rest % it->second.size()]);
      rest /= it->second.size();
    }
    std::reverse(chosen.begin(), chosen.end());
    for (std::size_t i = 0; i < grid.size(); ++i) set_config_value(c, grid[i].first, chosen[i]);
    validate(c);

    std::ostringstream name;
    name << "run_" << std::setw(3) << std::setfill('0') << run;
    std::cout << name.str();
    for (std::size_t i = 0; i < grid.size(); ++i) std::cout << ' ' << grid[i].first << '=' << chosen[i];
    std::cout << '\n';

    FitResult r;
    MetricReport best;
    const auto fs_out = fs::path(a.out) / name.str();
    if (c.precision == Precision::float64) {
      Trainer<double> t(c, data);
      r = t.fit(fs_out);
    } else {
      Trainer<float> t(c, data);
      r = t.fit(fs_out);
    }
    for (const auto& m : r.epochs)
      if (m.evaluated && m.epoch == r.best_epoch) best = m.valid;

    csv << name.str();
    for (const auto& v : chosen) csv << ',' << v;
    csv << std::setprecision(10) << ',' << r.best_epoch << ',' << best.mrr << ',' << best.hits1 << ','
        << best.hits3 << ',' << best.hits10 << '\n';
    csv.flush();
  }
  std::cout << "wrote " << (fs::path(a.out) / "sweep.csv").string() << '\n';
  return 0;
}

template <typename T>
int predict_as(const PredictArgs& a, const Dataset& data) {
  const EntityId s = data.vocab.entity_id(a.subject);
  const RelationId r = data.vocab.relation_id(a.relation);
  KbcModel<T> model = load_model<T>(a.checkpoint, data);
  const auto adj = RelationAdjacency::from_dataset(data);
  const Matrix<T> entities = model.entity_embeddings(adj);
  const Query q{s, r};
  const Matrix<T> scores = model.score(entities, std::span<const Query>(&q, 1));
  const auto p = prob<T>(scores.row(0));

  std::vector<std::size_t> order(p.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t k = std::min(a.topk, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t x, std::size_t y) { return p[x] != p[y] ? p[x] > p[y] : x < y; });
  std::cout << a.subject << '\t' << a.relation << '\n';
  for (std::size_t i = 0; i < k; ++i) {
    std::cout << std::setw(4) << i + 1 << "  " << std::fixed << std::setprecision(6) << p[order[i]] << "  "
              << data.vocab.entity_name(static_cast<EntityId>(order[i])) << '\n';
  }
  return 0;
}

int run_predict(const PredictArgs& a) {
  require_file(a.checkpoint);
  const Dataset data = load_prepared(a.data);
  if (a.topk == 0) throw ValidationError("--topk must be >= 1");
  const auto header = nn::read_checkpoint_header(a.checkpoint);
  return header.dtype == nn::dtype_code<double>() ? predict_as<double>(a, data) : predict_as<float>(a, data);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Knowledge base completion with a weighted GCN encoder and Conv-TransE decoder"};
  app.require_subcommand(1, 1);

  PrepareArgs prep;
  auto* prepare = app.add_subcommand("prepare", "Encode triples (and optional attributes) into a dataset directory");
  prepare->add_option("--train", prep.train, "Training triples (head<TAB>relation<TAB>tail)")->required();
  prepare->add_option("--valid", prep.valid, "Validation triples")->required();
  prepare->add_option("--test", prep.test, "Test triples")->required();
  prepare->add_option("--attributes", prep.attributes, "Attribute triples (entity<TAB>attribute<TAB>type)");
  prepare->add_option("--out", prep.out, "Output directory")->required();

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write checkpoints plus metrics.csv");
  train_cmd->add_option("--config", train.config, "key=value config file (defaults when omitted)");
  train_cmd->add_option("--data", train.data, "Prepared dataset directory (overrides data_dir)");
  train_cmd->add_option("--out", train.out, "Output directory")->required();
  train_cmd->add_option("--seed", train.seed, "Random seed (overrides the config)");
  train_cmd->add_option("--set", train.overrides, "Config override key=value (repeatable)");

  EvaluateArgs eval;
  auto* eval_cmd = app.add_subcommand("evaluate", "Filtered MRR / Hits@k of a checkpoint on one split");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--data", eval.data, "Prepared dataset directory")->required();
  eval_cmd->add_option("--split", eval.split, "train|valid|test")->check(CLI::IsMember({"train", "valid", "test"}));
  eval_cmd->add_option("--out", eval.out, "Directory for report.txt and indegree.csv");
  eval_cmd->add_flag("!--no-indegree", eval.indegree, "Skip the per-indegree breakdown");

  GradcheckArgs gc;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every parameter on a toy graph");
  gc_cmd->add_option("--toy-size", gc.toy_size, "Number of toy graph nodes")->check(CLI::Range(3, 64));
  gc_cmd->add_option("--seed", gc.seed, "Random seed");
  gc_cmd->add_option("--tolerance", gc.tolerance, "Maximum relative error");

  SweepArgs sweep;
  auto* sweep_cmd = app.add_subcommand("sweep", "Train every point of a grid and write sweep.csv");
  sweep_cmd->add_option("--grid", sweep.grid, "Grid file, one key=v1,v2,... per line")->required();
  sweep_cmd->add_option("--config", sweep.config, "Base config file");
  sweep_cmd->add_option("--data", sweep.data, "Prepared dataset directory (overrides data_dir)");
  sweep_cmd->add_option("--out", sweep.out, "Output directory")->required();
  sweep_cmd->add_option("--seed", sweep.seed, "Random seed (overrides the config)");

  PredictArgs pred;
  auto* pred_cmd = app.add_subcommand("predict", "Top-k objects for (subject, relation) with probabilities");
  pred_cmd->add_option("--checkpoint", pred.checkpoint, "Checkpoint file")->required();
  pred_cmd->add_option("--data", pred.data, "Prepared dataset directory")->required();
  pred_cmd->add_option("--subject", pred.subject, "Subject entity name")->required();
  pred_cmd->add_option("--relation", pred.relation, "Relation name (use <name>_inv for head prediction)")->required();
  pred_cmd->add_option("--topk", pred.topk, "Number of results");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*prepare) return run_prepare(prep);
    if (*train_cmd) return run_train(train);
    if (*eval_cmd) return run_evaluate(eval);
    if (*gc_cmd) return run_gradcheck(gc);
    if (*sweep_cmd) return run_sweep(sweep);
    if (*pred_cmd) return run_predict(pred);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
