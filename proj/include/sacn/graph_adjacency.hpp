#pragma once

// Per-relation-type binary symmetric adjacencies A_t and the weighted propagation
// matrix  A = Σ_t α_t A_t + I  with its sparse-dense product and reverse pass.

#include <algorithm>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "sacn/error.hpp"
#include "sacn/kg_data.hpp"
#include "sacn/tensor.hpp"

namespace sacn {

using Index = std::uint32_t;

class RelationAdjacency {
 public:
  struct Edge {
    Index a;
    Index b;
    Index type;
  };

  RelationAdjacency() = default;

  /// Builds from undirected typed edges. Self-loops are dropped (the identity term
  /// supplies them) and duplicates collapse.
  RelationAdjacency(std::size_t num_nodes, std::size_t num_types, std::span<const Edge> edges)
      : num_nodes_(num_nodes), num_types_(num_types) {
    // Per type: symmetric neighbor lists in CSR form.
    std::vector<std::vector<std::pair<Index, Index>>> coords(num_types);
    for (const auto& e : edges) {
      if (e.a >= num_nodes || e.b >= num_nodes) throw ValidationError("edge endpoint out of range");
      if (e.type >= num_types) throw ValidationError("edge type out of range");
      if (e.a == e.b) {
        ++self_loops_dropped_;
        continue;
      }
      coords[e.type].emplace_back(e.a, e.b);
      coords[e.type].emplace_back(e.b, e.a);
    }
    type_ptr_.resize(num_types);
    type_cols_.resize(num_types);
    for (std::size_t t = 0; t < num_types; ++t) {
      auto& c = coords[t];
      std::sort(c.begin(), c.end());
      c.erase(std::unique(c.begin(), c.end()), c.end());
      auto& ptr = type_ptr_[t];
      ptr.assign(num_nodes + 1, 0);
      for (const auto& [i, j] : c) ++ptr[i + 1];
      for (std::size_t i = 0; i < num_nodes; ++i) ptr[i + 1] += ptr[i];
      type_cols_[t].reserve(c.size());
      for (const auto& [i, j] : c) type_cols_[t].push_back(j);
    }
    build_union_pattern();
  }

  /// Edges from training triples whose relation id is below `num_types` (the forward
  /// block); reciprocal relations are structurally identical once symmetrized.
  static RelationAdjacency from_store(const TripleStore& store, std::size_t num_nodes, std::size_t num_types) {
    std::vector<Edge> edges;
    for (const auto& t : store.triples) {
      if (t.split != Split::train || t.r >= num_types) continue;
      edges.push_back(Edge{t.s, t.o, t.r});
    }
    return RelationAdjacency(num_nodes, num_types, edges);
  }

  static RelationAdjacency from_dataset(const Dataset& ds) {
    return from_store(ds.store, ds.vocab.num_entities(), ds.vocab.num_forward_relations());
  }

  std::size_t num_nodes() const noexcept { return num_nodes_; }
  std::size_t num_types() const noexcept { return num_types_; }
  std::size_t self_loops_dropped() const noexcept { return self_loops_dropped_; }

  /// Neighbors of node i under type t, ascending.
  std::span<const Index> neighbors(std::size_t t, std::size_t i) const {
    const auto& ptr = type_ptr_[t];
    return std::span<const Index>(type_cols_[t]).subspan(ptr[i], ptr[i + 1] - ptr[i]);
  }
  bool has_edge(std::size_t t, std::size_t i, std::size_t j) const {
    auto n = neighbors(t, i);
    return std::binary_search(n.begin(), n.end(), static_cast<Index>(j));
  }
  /// Stored (directed) nonzeros of A_t; twice the undirected edge count.
  std::size_t nnz(std::size_t t) const { return type_cols_[t].size(); }

  /// Undirected incident-edge count per node, summed over types.
  std::vector<std::size_t> degrees() const {
    std::vector<std::size_t> d(num_nodes_, 0);
    for (std::size_t t = 0; t < num_types_; ++t)
      for (std::size_t i = 0; i < num_nodes_; ++i) d[i] += type_ptr_[t][i + 1] - type_ptr_[t][i];
    return d;
  }

  template <typename T = double>
  Matrix<T> dense(std::size_t t) const {
    Matrix<T> m(num_nodes_, num_nodes_);
    for (std::size_t i = 0; i < num_nodes_; ++i)
      for (Index j : neighbors(t, i)) m(i, j) = T(1);
    return m;
  }

  // Union sparsity pattern of I + Σ_t A_t. Each stored entry lists the types present.
  const std::vector<std::size_t>& row_ptr() const noexcept { return row_ptr_; }
  const std::vector<Index>& cols() const noexcept { return cols_; }
  const std::vector<std::size_t>& entry_type_ptr() const noexcept { return entry_type_ptr_; }
  const std::vector<Index>& entry_types() const noexcept { return entry_types_; }
  /// Count of distinct neighbors (excluding self) per node.
  std::size_t distinct_neighbors(std::size_t i) const { return row_ptr_[i + 1] - row_ptr_[i] - 1; }

 private:
  void build_union_pattern() {
    row_ptr_.assign(num_nodes_ + 1, 0);
    cols_.clear();
    entry_type_ptr_.assign(1, 0);
    entry_types_.clear();
    std::vector<std::pair<Index, Index>> row;  // (col, type)
    for (std::size_t i = 0; i < num_nodes_; ++i) {
      row.clear();
      row.emplace_back(static_cast<Index>(i), static_cast<Index>(-1));
      for (std::size_t t = 0; t < num_types_; ++t)
        for (Index j : neighbors(t, i)) row.emplace_back(j, static_cast<Index>(t));
      std::sort(row.begin(), row.end(), [](auto& x, auto& y) {
        return x.first != y.first ? x.first < y.first : x.second + 1 < y.second + 1;
      });
      for (std::size_t k = 0; k < row.size();) {
        const Index col = row[k].first;
        cols_.push_back(col);
        for (; k < row.size() && row[k].first == col; ++k)
          if (row[k].second != static_cast<Index>(-1)) entry_types_.push_back(row[k].second);
        entry_type_ptr_.push_back(entry_types_.size());
      }
      row_ptr_[i + 1] = cols_.size();
    }
  }

  std::size_t num_nodes_ = 0;
  std::size_t num_types_ = 0;
  std::size_t self_loops_dropped_ = 0;
  std::vector<std::vector<std::size_t>> type_ptr_;
  std::vector<std::vector<Index>> type_cols_;

  std::vector<std::size_t> row_ptr_;
  std::vector<Index> cols_;
  std::vector<std::size_t> entry_type_ptr_;
  std::vector<Index> entry_types_;
};

/// Sparse N×N matrix  A = diag(scale)·(Σ_t α_t A_t + I)  on the union pattern.
/// `row_scale` is all ones unless row normalization was requested.
template <typename T>
struct ComposedAdjacency {
  const RelationAdjacency* structure = nullptr;
  std::vector<T> values;     // aligned with structure->cols()
  std::vector<T> alphas;     // provenance
  std::vector<T> row_scale;  // per-row multiplier

  std::size_t num_nodes() const { return structure->num_nodes(); }

  T at(std::size_t i, std::size_t j) const {
    const auto& ptr = structure->row_ptr();
    const auto& cols = structure->cols();
    const auto b = cols.begin() + static_cast<std::ptrdiff_t>(ptr[i]);
    const auto e = cols.begin() + static_cast<std::ptrdiff_t>(ptr[i + 1]);
    auto it = std::lower_bound(b, e, static_cast<Index>(j));
    if (it == e || *it != j) return T(0);
    return values[static_cast<std::size_t>(it - cols.begin())];
  }

  Matrix<T> dense() const {
    Matrix<T> m(num_nodes(), num_nodes());
    const auto& ptr = structure->row_ptr();
    const auto& cols = structure->cols();
    for (std::size_t i = 0; i < num_nodes(); ++i)
      for (std::size_t k = ptr[i]; k < ptr[i + 1]; ++k) m(i, cols[k]) = values[k];
    return m;
  }
};

/// Σ_t α_t A_t + I. With `row_normalize`, row i is scaled by 1/(1 + distinct neighbors of i),
/// a constant that keeps the map linear in α.
template <typename T>
ComposedAdjacency<T> compose(const RelationAdjacency& adj, std::span<const T> alphas, bool row_normalize = false) {
  if (alphas.size() != adj.num_types()) {
    throw ShapeError("compose: " + std::to_string(alphas.size()) + " alphas for " +
                     std::to_string(adj.num_types()) + " edge types");
  }
  ComposedAdjacency<T> a;
  a.structure = &adj;
  a.alphas.assign(alphas.begin(), alphas.end());
  a.row_scale.assign(adj.num_nodes(), T(1));
  const auto& ptr = adj.row_ptr();
  const auto& cols = adj.cols();
  const auto& tptr = adj.entry_type_ptr();
  const auto& types = adj.entry_types();
  a.values.resize(cols.size());
  for (std::size_t i = 0; i < adj.num_nodes(); ++i) {
    if (row_normalize) a.row_scale[i] = T(1) / static_cast<T>(1 + adj.distinct_neighbors(i));
    for (std::size_t k = ptr[i]; k < ptr[i + 1]; ++k) {
      T v = cols[k] == i ? T(1) : T(0);
      for (std::size_t q = tptr[k]; q < tptr[k + 1]; ++q) v += alphas[types[q]];
      a.values[k] = a.row_scale[i] * v;
    }
  }
  return a;
}

/// A·H with fixed row-major accumulation.
template <typename T>
Matrix<T> spmm(const ComposedAdjacency<T>& a, const Matrix<T>& h) {
  if (h.rows() != a.num_nodes()) {
    throw ShapeError("spmm: adjacency is " + std::to_string(a.num_nodes()) + " wide, H is " + h.shape());
  }
  const auto& ptr = a.structure->row_ptr();
  const auto& cols = a.structure->cols();
  const std::size_t f = h.cols();
  Matrix<T> out(h.rows(), f);
  for (std::size_t i = 0; i < a.num_nodes(); ++i) {
    T* orow = out.data() + i * f;
    for (std::size_t k = ptr[i]; k < ptr[i + 1]; ++k) {
      const T v = a.values[k];
      const T* hrow = h.data() + static_cast<std::size_t>(cols[k]) * f;
      for (std::size_t c = 0; c < f; ++c) orow[c] += v * hrow[c];
    }
  }
  return out;
}

template <typename T>
struct SpmmGradients {
  Matrix<T> grad_h;
  std::vector<T> grad_alpha;
};

/// Reverse of  Y = A·H  given upstream G = ∂L/∂Y:
///   ∂L/∂H = Aᵀ G,   ∂L/∂α_t = Σ_{(i,j) ∈ A_t} scale_i ⟨G_i, H_j⟩  (both stored directions).
template <typename T>
SpmmGradients<T> spmm_backward(const ComposedAdjacency<T>& a, const Matrix<T>& h, const Matrix<T>& g) {
  if (h.rows() != a.num_nodes() || !g.same_shape(h)) {
    throw ShapeError("spmm_backward: H " + h.shape() + ", G " + g.shape());
  }
  const RelationAdjacency& adj = *a.structure;
  const auto& ptr = adj.row_ptr();
  const auto& cols = adj.cols();
  const auto& tptr = adj.entry_type_ptr();
  const auto& types = adj.entry_types();
  const std::size_t f = h.cols();

  SpmmGradients<T> out{Matrix<T>(h.rows(), f), std::vector<T>(adj.num_types(), T(0))};
  for (std::size_t i = 0; i < a.num_nodes(); ++i) {
    const T* grow = g.data() + i * f;
    for (std::size_t k = ptr[i]; k < ptr[i + 1]; ++k) {
      const std::size_t j = cols[k];
      T* dst = out.grad_h.data() + j * f;
      const T v = a.values[k];
      for (std::size_t c = 0; c < f; ++c) dst[c] += v * grow[c];
      if (tptr[k] == tptr[k + 1]) continue;
      const T* hrow = h.data() + j * f;
      T d = 0;
      for (std::size_t c = 0; c < f; ++c) d += grow[c] * hrow[c];
      d *= a.row_scale[i];
      for (std::size_t q = tptr[k]; q < tptr[k + 1]; ++q) out.grad_alpha[types[q]] += d;
    }
  }
  return out;
}

/// Coordinate-list dump, one `i j value` line per stored entry.
template <typename T>
void dump_coo(std::ostream& os, const ComposedAdjacency<T>& a) {
  const auto& ptr = a.structure->row_ptr();
  const auto& cols = a.structure->cols();
  for (std::size_t i = 0; i < a.num_nodes(); ++i)
    for (std::size_t k = ptr[i]; k < ptr[i + 1]; ++k) os << i << ' ' << cols[k] << ' ' << a.values[k] << '\n';
}

}  // namespace sacn
