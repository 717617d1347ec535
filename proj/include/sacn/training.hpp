#pragma once

// 1-N training: each step encodes the full graph once, scores every query of the
// mini-batch against all N entities and minimizes mean binary cross-entropy against
// multi-hot (optionally smoothed) labels.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "sacn/config.hpp"
#include "sacn/evaluation.hpp"
#include "sacn/graph_adjacency.hpp"
#include "sacn/kg_data.hpp"
#include "sacn/model.hpp"
#include "sacn/nn/adam.hpp"
#include "sacn/nn/checkpoint.hpp"
#include "sacn/nn/ops.hpp"

namespace sacn {

struct QueryBatch {
  std::vector<Query> queries;
  std::vector<std::vector<EntityId>> positives;  // true train objects per query

  std::size_t size() const noexcept { return queries.size(); }

  /// B×N targets: (1 − ε)·y + ε/N.
  template <typename T>
  Matrix<T> labels(std::size_t num_entities, double smoothing = 0.0) const {
    const T off = static_cast<T>(smoothing / static_cast<double>(num_entities));
    const T on = static_cast<T>(1.0 - smoothing) + off;
    Matrix<T> y(queries.size(), num_entities, off);
    for (std::size_t b = 0; b < queries.size(); ++b)
      for (EntityId o : positives[b]) y(b, o) = on;
    return y;
  }
};

/// Unique (s, r) training queries in ascending order with their multi-hot targets.
class TrainingQueries {
 public:
  explicit TrainingQueries(const TripleStore& store) : index_(build_filter_index(store, {Split::train})) {
    queries_ = index_.keys();
    if (queries_.empty()) throw ValidationError("training split is empty");
  }

  const std::vector<Query>& queries() const noexcept { return queries_; }
  const FilterIndex& index() const noexcept { return index_; }

  QueryBatch batch(std::span<const Query> qs) const {
    QueryBatch b;
    for (const auto& q : qs) {
      b.queries.push_back(q);
      const auto objs = index_.objects(q.s, q.r);
      b.positives.emplace_back(objs.begin(), objs.end());
    }
    return b;
  }

 private:
  FilterIndex index_;
  std::vector<Query> queries_;
};

/// One epoch of shuffled mini-batches.
inline std::vector<QueryBatch> make_batches(const TrainingQueries& tq, std::size_t batch_size, nn::Rng& rng) {
  if (batch_size == 0) throw ValidationError("batch size must be >= 1");
  std::vector<Query> order = tq.queries();
  for (std::size_t i = order.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
  std::vector<QueryBatch> out;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    out.push_back(tq.batch(std::span<const Query>(order).subspan(start, end - start)));
  }
  return out;
}

/// Mean BCE of the current parameters on a batch (forward only).
template <typename T>
T batch_loss(KbcModel<T>& model, const RelationAdjacency& adj, const QueryBatch& batch, double smoothing,
             nn::Mode mode, nn::Rng& rng) {
  nn::Tape<T> tape;
  nn::Var logits = model.logits(tape, adj, batch.queries, mode, rng);
  nn::Var loss = nn::bce_with_logits_mean(tape, logits, batch.labels<T>(model.shape().num_entities, smoothing));
  return tape.value(loss)[0];
}

/// Forward, backward and one Adam update. Returns the batch loss before the update.
template <typename T>
T train_step(KbcModel<T>& model, const RelationAdjacency& adj, const QueryBatch& batch, nn::Adam<T>& adam,
             double smoothing, nn::Rng& rng) {
  adam.zero_grad();
  nn::Tape<T> tape;
  nn::Var logits = model.logits(tape, adj, batch.queries, nn::Mode::train, rng);
  nn::Var loss = nn::bce_with_logits_mean(tape, logits, batch.labels<T>(model.shape().num_entities, smoothing));
  const T value = tape.value(loss)[0];
  if (!std::isfinite(static_cast<double>(value))) {
    std::ostringstream msg;
    msg << "non-finite training loss (" << value << ") on a batch of " << batch.size() << " queries";
    throw NumericError(msg.str());
  }
  tape.backward(loss);
  adam.step();
  return value;
}

template <typename T>
nn::AdamConfig adam_config(const TrainConfig& c) {
  nn::AdamConfig a;
  a.learning_rate = c.learning_rate;
  a.weight_decay = c.weight_decay;
  a.grad_clip = c.grad_clip;
  return a;
}

/// Filtered metrics of the model on one split (eval mode, encoder run once).
template <typename T>
MetricReport evaluate_model(KbcModel<T>& model, const RelationAdjacency& adj, const TripleStore& store, Split split,
                            const FilterIndex& filter, std::size_t batch_size = 256,
                            std::vector<RankedQuery>* ranked = nullptr) {
  const Matrix<T> entities = model.entity_embeddings(adj);
  return evaluate(
      store, split, filter, [&](std::span<const Query> qs) { return model.score(entities, qs); }, batch_size, ranked);
}

struct EpochMetrics {
  std::size_t epoch = 0;
  double loss = 0.0;
  bool evaluated = false;
  MetricReport valid;
};

inline void write_metrics_header(std::ostream& os) { os << "epoch,loss,mrr,hits1,hits3,hits10\n"; }

inline void write_metrics_row(std::ostream& os, const EpochMetrics& m) {
  std::ostringstream line;
  line << std::setprecision(10) << m.epoch << ',' << m.loss << ',';
  if (m.evaluated) line << m.valid.mrr << ',' << m.valid.hits1 << ',' << m.valid.hits3 << ',' << m.valid.hits10;
  else line << ",,,";
  os << line.str() << '\n';
}

struct FitResult {
  std::vector<EpochMetrics> epochs;
  std::size_t best_epoch = 0;
  double best_mrr = -1.0;
  bool stopped_early = false;
  std::filesystem::path best_checkpoint;
  std::filesystem::path last_checkpoint;
};

/// Owns the model, graph, optimizer and RNG for one run.
template <typename T>
class Trainer {
 public:
  Trainer(TrainConfig config, const Dataset& data)
      : config_((validate(config), std::move(config))),
        data_(data),
        adj_(RelationAdjacency::from_dataset(data)),
        filter_(build_filter_index(data)),
        queries_(data.store),
        model_(config_, ModelShape::of(data.vocab)),
        rng_(config_.seed) {
    model_.initialize(rng_);
    adam_.emplace(model_.parameters(), adam_config<T>(config_));
  }

  KbcModel<T>& model() noexcept { return model_; }
  const RelationAdjacency& adjacency() const noexcept { return adj_; }
  const FilterIndex& filter() const noexcept { return filter_; }
  nn::Adam<T>& adam() noexcept { return *adam_; }

  /// Mean training loss over one shuffled epoch.
  double run_epoch() {
    const auto batches = make_batches(queries_, config_.batch_size, rng_);
    double total = 0.0;
    for (const auto& b : batches)
      total += static_cast<double>(train_step(model_, adj_, b, *adam_, config_.label_smoothing, rng_));
    return total / static_cast<double>(batches.size());
  }

  MetricReport evaluate_split(Split split, std::vector<RankedQuery>* ranked = nullptr) {
    return evaluate_model(model_, adj_, data_.store, split, filter_, config_.eval_batch_size, ranked);
  }

  std::string metadata() const { return to_string(config_); }

  void save(const std::filesystem::path& path) {
    nn::save_checkpoint<T>(path, model_.parameters(), &*adam_, metadata());
  }

  /// Epoch loop with periodic validation, best-MRR checkpointing and early stopping.
  /// Writes metrics.csv, config.txt, best.ckpt and last.ckpt under `out_dir`.
  FitResult fit(const std::filesystem::path& out_dir, std::ostream* log = nullptr) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
    {
      std::ofstream cfg(out_dir / "config.txt", std::ios::binary);
      if (!cfg) throw IoError("cannot write " + (out_dir / "config.txt").string());
      cfg << metadata();
    }
    std::ofstream metrics(out_dir / "metrics.csv", std::ios::binary);
    if (!metrics) throw IoError("cannot write " + (out_dir / "metrics.csv").string());
    write_metrics_header(metrics);

    FitResult result;
    result.best_checkpoint = out_dir / "best.ckpt";
    result.last_checkpoint = out_dir / "last.ckpt";
    save(result.best_checkpoint);

    const bool has_valid = data_.store.count(Split::valid) > 0;
    std::size_t since_best = 0;
    for (std::size_t epoch = 1; epoch <= config_.epochs; ++epoch) {
      EpochMetrics m;
      m.epoch = epoch;
      m.loss = run_epoch();
      if (has_valid && (epoch % config_.eval_every == 0 || epoch == config_.epochs)) {
        m.evaluated = true;
        m.valid = evaluate_split(Split::valid);
        if (m.valid.mrr > result.best_mrr) {
          result.best_mrr = m.valid.mrr;
          result.best_epoch = epoch;
          since_best = 0;
          save(result.best_checkpoint);
        } else {
          ++since_best;
        }
      } else if (!has_valid) {
        result.best_epoch = epoch;
        save(result.best_checkpoint);
      }
      write_metrics_row(metrics, m);
      metrics.flush();
      if (log) {
        *log << "epoch " << epoch << " loss " << m.loss;
        if (m.evaluated) *log << " valid mrr " << m.valid.mrr << " hits@10 " << m.valid.hits10;
        *log << '\n';
      }
      result.epochs.push_back(m);
      if (config_.patience > 0 && m.evaluated && since_best >= config_.patience) {
        result.stopped_early = true;
        break;
      }
    }
    save(result.last_checkpoint);
    return result;
  }

 private:
  TrainConfig config_;
  const Dataset& data_;
  RelationAdjacency adj_;
  FilterIndex filter_;
  TrainingQueries queries_;
  KbcModel<T> model_;
  nn::Rng rng_;
  std::optional<nn::Adam<T>> adam_;
};

/// Rebuilds a model for `data` from a checkpoint's embedded config and loads its parameters.
template <typename T>
KbcModel<T> load_model(const std::filesystem::path& checkpoint, const Dataset& data, TrainConfig* config_out = nullptr) {
  const auto header = nn::read_checkpoint_header(checkpoint);
  std::istringstream meta(header.metadata);
  TrainConfig config = parse_config(meta, checkpoint.string() + "#metadata");
  if (header.dtype != nn::dtype_code<T>()) throw ValidationError("checkpoint precision does not match requested type");
  KbcModel<T> model(config, ModelShape::of(data.vocab));
  nn::load_checkpoint<T>(checkpoint, model.parameters(), nullptr);
  if (config_out) *config_out = config;
  return model;
}

}  // namespace sacn
