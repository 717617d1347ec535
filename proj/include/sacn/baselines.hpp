#pragma once

// TransE and DistMult scorers. Both follow the "higher is better" convention, so
// TransE returns the negated distance.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "sacn/error.hpp"
#include "sacn/nn/ops.hpp"
#include "sacn/nn/parameter.hpp"
#include "sacn/nn/tape.hpp"
#include "sacn/tensor.hpp"

namespace sacn {

enum class BaselineKind { transe, distmult };

/// −‖e_s + e_r − e_o‖_p, p ∈ {1, 2}.
template <typename T>
T transe_score(std::span<const T> es, std::span<const T> er, std::span<const T> eo, int p) {
  if (p != 1 && p != 2) throw ValidationError("TransE norm must be 1 or 2");
  if (es.size() != er.size() || es.size() != eo.size()) throw ShapeError("transe_score widths differ");
  T acc = 0;
  for (std::size_t k = 0; k < es.size(); ++k) {
    const T d = es[k] + er[k] - eo[k];
    acc += p == 1 ? std::abs(d) : d * d;
  }
  return p == 1 ? -acc : -std::sqrt(acc);
}

/// Σ_k e_s(k)·e_r(k)·e_o(k)
template <typename T>
T distmult_score(std::span<const T> es, std::span<const T> er, std::span<const T> eo) {
  if (es.size() != er.size() || es.size() != eo.size()) throw ShapeError("distmult_score widths differ");
  T acc = 0;
  for (std::size_t k = 0; k < es.size(); ++k) acc += es[k] * er[k] * eo[k];
  return acc;
}

/// out(b, o) = −‖q_b − e_o‖_p for query vectors q (B×F) against every entity row (N×F).
/// The subgradient of |·| and of ‖·‖₂ at zero is taken as 0.
template <typename T>
nn::Var neg_distance_all(nn::Tape<T>& tape, nn::Var queries, nn::Var entities, int p) {
  if (p != 1 && p != 2) throw ValidationError("TransE norm must be 1 or 2");
  const Matrix<T>& q = tape.value(queries);
  const Matrix<T>& e = tape.value(entities);
  if (q.cols() != e.cols()) throw ShapeError("neg_distance_all " + q.shape() + " vs " + e.shape());
  Matrix<T> out(q.rows(), e.rows());
  for (std::size_t b = 0; b < q.rows(); ++b)
    for (std::size_t o = 0; o < e.rows(); ++o) {
      T acc = 0;
      for (std::size_t k = 0; k < q.cols(); ++k) {
        const T d = q(b, k) - e(o, k);
        acc += p == 1 ? std::abs(d) : d * d;
      }
      out(b, o) = p == 1 ? -acc : -std::sqrt(acc);
    }
  return tape.record("neg_distance_all", std::move(out), {queries, entities},
                     [queries, entities, p](nn::Tape<T>& t, nn::Var self) {
                       const Matrix<T>& g = t.grad(self);
                       const Matrix<T>& q = t.value(queries);
                       const Matrix<T>& e = t.value(entities);
                       const Matrix<T>& dist = t.value(self);
                       const bool nq = t.requires_grad(queries), ne = t.requires_grad(entities);
                       Matrix<T>* gq = nq ? &t.grad(queries) : nullptr;
                       Matrix<T>* ge = ne ? &t.grad(entities) : nullptr;
                       for (std::size_t b = 0; b < q.rows(); ++b)
                         for (std::size_t o = 0; o < e.rows(); ++o) {
                           const T gv = g(b, o);
                           if (gv == T(0)) continue;
                           const T norm = -dist(b, o);
                           if (p == 2 && norm == T(0)) continue;
                           for (std::size_t k = 0; k < q.cols(); ++k) {
                             const T d = q(b, k) - e(o, k);
                             // ∂(−‖d‖)/∂d
                             const T dd = p == 1 ? (d > T(0) ? T(-1) : d < T(0) ? T(1) : T(0)) : -d / norm;
                             if (gq) (*gq)(b, k) += gv * dd;
                             if (ge) (*ge)(o, k) -= gv * dd;
                           }
                         }
                     });
}

/// Relation table plus scoring rule, trainable through the same 1-N pipeline as Conv-TransE.
template <typename T>
struct BaselineDecoder {
  BaselineKind kind = BaselineKind::distmult;
  int p_norm = 1;
  nn::Parameter<T> relation_embeddings;

  BaselineDecoder() = default;
  BaselineDecoder(BaselineKind k, std::size_t num_relations, std::size_t width, int p = 1)
      : kind(k), p_norm(p), relation_embeddings("decoder.relation_embeddings", num_relations, width) {
    if (p != 1 && p != 2) throw ValidationError("TransE norm must be 1 or 2");
  }

  std::size_t width() const noexcept { return relation_embeddings.value.cols(); }
  void initialize(nn::Rng& rng, double stddev = 0.1) { nn::init_gaussian(relation_embeddings, rng, stddev); }
  std::vector<nn::Parameter<T>*> parameters() { return {&relation_embeddings}; }
};

template <typename T>
nn::Var baseline_logits(nn::Tape<T>& tape, BaselineDecoder<T>& dec, nn::Var entities,
                        std::vector<std::size_t> subjects, std::vector<std::size_t> relations) {
  nn::Var es = nn::gather_rows(tape, entities, std::move(subjects));
  nn::Var er = nn::gather_rows(tape, tape.parameter(dec.relation_embeddings), std::move(relations));
  if (dec.kind == BaselineKind::distmult) return nn::matmul_bt(tape, nn::hadamard(tape, es, er), entities);
  return neg_distance_all(tape, nn::add(tape, es, er), entities, dec.p_norm);
}

}  // namespace sacn
