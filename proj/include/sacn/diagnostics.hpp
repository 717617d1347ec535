#pragma once

// Small generated knowledge graphs and the end-to-end gradient check built on them.

#include <random>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "sacn/config.hpp"
#include "sacn/graph_adjacency.hpp"
#include "sacn/kg_data.hpp"
#include "sacn/model.hpp"
#include "sacn/nn/grad_check.hpp"
#include "sacn/nn/ops.hpp"
#include "sacn/training.hpp"

namespace sacn {

/// A ring e0 → e1 → … → e{n-1} → e0 cycling through the relations, plus random extra
/// edges until `num_triples` distinct non-loop triples exist. Every entity and relation
/// appears at least once when num_triples ≥ num_entities ≥ num_relations.
inline std::vector<RawTriple> toy_triples(std::size_t num_entities, std::size_t num_relations, std::size_t num_triples,
                                          std::uint64_t seed) {
  if (num_entities < 2) throw ValidationError("toy graph needs at least 2 entities");
  if (num_relations == 0) throw ValidationError("toy graph needs at least 1 relation");
  const std::size_t max_triples = num_entities * (num_entities - 1) * num_relations;
  if (num_triples < num_entities || num_triples > max_triples) {
    throw ValidationError("toy graph triple count must lie in [" + std::to_string(num_entities) + ", " +
                          std::to_string(max_triples) + "]");
  }
  std::set<std::tuple<std::size_t, std::size_t, std::size_t>> seen;
  std::vector<RawTriple> out;
  const auto add = [&](std::size_t s, std::size_t r, std::size_t o) {
    if (s == o || !seen.emplace(s, r, o).second) return;
    out.push_back(RawTriple{"e" + std::to_string(s), "r" + std::to_string(r), "e" + std::to_string(o)});
  };
  for (std::size_t i = 0; i < num_entities; ++i) add(i, i % num_relations, (i + 1) % num_entities);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> ent(0, num_entities - 1), rel(0, num_relations - 1);
  while (out.size() < num_triples) add(ent(rng), rel(rng), ent(rng));
  return out;
}

/// Toy dataset with the same triples in train, valid and test, reciprocals added.
inline Dataset toy_dataset(std::size_t num_entities, std::size_t num_relations, std::size_t num_triples,
                           std::uint64_t seed) {
  const auto raw = toy_triples(num_entities, num_relations, num_triples, seed);
  return add_reciprocal(assemble_dataset(raw, raw, raw));
}

/// Configuration used by the gradient check: tiny widths, two encoder layers, every
/// optional parameter group enabled, dropout and batch norm off.
inline TrainConfig grad_check_config() {
  TrainConfig c;
  c.embedding_size = 4;
  c.hidden_size = 3;
  c.kernel_count = 2;
  c.kernel_width = 3;
  c.layers = 2;
  c.dropout = 0.0;
  c.batchnorm = false;
  c.bias = true;
  c.label_smoothing = 0.1;
  c.precision = Precision::float64;
  return c;
}

struct GradCheckSummary {
  std::vector<nn::GradCheckEntry> entries;
  double worst = 0.0;
  std::size_t num_entities = 0;
  std::size_t num_edge_types = 0;
};

/// Finite-difference check of every trainable parameter of a float64 model on a
/// generated `toy_size`-node, 3-relation graph. The loss covers every training query.
inline GradCheckSummary model_grad_check(std::size_t toy_size, std::uint64_t seed = 7,
                                         TrainConfig config = grad_check_config(), nn::GradCheckOptions opts = {}) {
  if (toy_size < 3) throw ValidationError("toy size must be >= 3");
  const std::size_t relations = 3;
  const Dataset data = toy_dataset(toy_size, relations, std::min(2 * toy_size, toy_size * (toy_size - 1) * relations), seed);
  const auto adj = RelationAdjacency::from_dataset(data);
  const TrainingQueries tq(data.store);
  const QueryBatch batch = tq.batch(tq.queries());

  KbcModel<double> model(config, ModelShape::of(data.vocab));
  nn::Rng rng(seed);
  model.initialize(rng);
  const Matrix<double> labels = batch.labels<double>(data.vocab.num_entities(), config.label_smoothing);

  const std::function<nn::Var(nn::Tape<double>&)> loss = [&](nn::Tape<double>& tape) {
    nn::Rng unused(0);
    nn::Var logits = model.logits(tape, adj, batch.queries, nn::Mode::train, unused);
    return nn::bce_with_logits_mean(tape, logits, labels);
  };
  GradCheckSummary s;
  s.entries = nn::grad_check<double>(model.parameters(), loss, opts);
  s.worst = nn::worst_rel_error(s.entries);
  s.num_entities = data.vocab.num_entities();
  s.num_edge_types = data.vocab.num_forward_relations();
  return s;
}

}  // namespace sacn
