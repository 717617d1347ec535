#pragma once

// Weighted graph convolutional encoder. Layer l computes
//
//   H^{l+1} = σ(A^l H^l W^l),   A^l = Σ_t α_t^l A_t + I
//
// with one learnable α per edge type and per layer. `nodewise_forward` evaluates the
// same map one node at a time by walking typed neighbor lists; it serves as the
// reference for the matrix form.

#include <string>
#include <vector>

#include "sacn/error.hpp"
#include "sacn/graph_adjacency.hpp"
#include "sacn/nn/ops.hpp"
#include "sacn/nn/parameter.hpp"
#include "sacn/nn/tape.hpp"
#include "sacn/tensor.hpp"

namespace sacn {

enum class Activation { relu, identity };

template <typename T>
struct WgcnLayer {
  nn::Parameter<T> weight;  // F^l × F^{l+1}
  nn::Parameter<T> alpha;   // 1 × T

  WgcnLayer() = default;
  WgcnLayer(const std::string& name, std::size_t in, std::size_t out, std::size_t num_types)
      : weight(name + ".weight", in, out), alpha(name + ".alpha", 1, num_types) {
    alpha.value.fill(T(1));
  }

  std::size_t in_width() const noexcept { return weight.value.rows(); }
  std::size_t out_width() const noexcept { return weight.value.cols(); }
};

struct WgcnOptions {
  double dropout = 0.0;
  Activation activation = Activation::relu;         // hidden layers
  Activation output_activation = Activation::identity;  // last layer
  bool row_normalize = false;
};

template <typename T>
struct WgcnStack {
  nn::Parameter<T> h1;  // N × F^1
  std::vector<WgcnLayer<T>> layers;
  WgcnOptions options;

  WgcnStack() = default;

  /// `widths` = {F^1, F^2, ..., F^{L+1}}; a single width means L = 0 (raw embedding table).
  WgcnStack(std::size_t num_nodes, std::size_t num_types, const std::vector<std::size_t>& widths, WgcnOptions opts)
      : h1("encoder.h1", num_nodes, widths.empty() ? 0 : widths.front()), options(opts) {
    if (widths.empty()) throw ValidationError("encoder needs at least the input width");
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
      layers.emplace_back("encoder.layer" + std::to_string(l), widths[l], widths[l + 1], num_types);
    }
  }

  void initialize(nn::Rng& rng, double embedding_stddev = 0.1) {
    nn::init_gaussian(h1, rng, embedding_stddev);
    for (auto& layer : layers) {
      nn::init_xavier_uniform(layer.weight, rng, layer.in_width(), layer.out_width());
      layer.alpha.value.fill(T(1));
    }
  }

  std::size_t output_width() const noexcept { return layers.empty() ? h1.value.cols() : layers.back().out_width(); }

  std::vector<nn::Parameter<T>*> parameters() {
    std::vector<nn::Parameter<T>*> out{&h1};
    for (auto& layer : layers) {
      out.push_back(&layer.weight);
      out.push_back(&layer.alpha);
    }
    return out;
  }
};

/// A^l · X as a tape op; gradients flow to X and to the α vector.
template <typename T>
nn::Var propagate(nn::Tape<T>& tape, const RelationAdjacency& adj, nn::Var alphas, nn::Var x, bool row_normalize) {
  const Matrix<T>& av = tape.value(alphas);
  ComposedAdjacency<T> a = compose<T>(adj, av.values(), row_normalize);
  Matrix<T> out = spmm(a, tape.value(x));
  return tape.record("propagate", std::move(out), {alphas, x},
                     [alphas, x, a = std::move(a)](nn::Tape<T>& t, nn::Var self) {
                       auto grads = spmm_backward(a, t.value(x), t.grad(self));
                       if (t.requires_grad(x)) t.grad(x) += grads.grad_h;
                       if (t.requires_grad(alphas)) {
                         Matrix<T>& ga = t.grad(alphas);
                         for (std::size_t k = 0; k < grads.grad_alpha.size(); ++k) ga[k] += grads.grad_alpha[k];
                       }
                     });
}

namespace detail {

template <typename T>
void check_layer_shapes(const Matrix<T>& h, const RelationAdjacency& adj, const WgcnLayer<T>& layer) {
  if (h.rows() != adj.num_nodes()) {
    throw ShapeError("encoder input has " + std::to_string(h.rows()) + " rows for " +
                     std::to_string(adj.num_nodes()) + " nodes");
  }
  if (h.cols() != layer.in_width()) {
    throw ShapeError("encoder input width " + std::to_string(h.cols()) + " vs layer input " +
                     std::to_string(layer.in_width()));
  }
  if (layer.alpha.size() != adj.num_types()) {
    throw ShapeError("layer has " + std::to_string(layer.alpha.size()) + " alphas for " +
                     std::to_string(adj.num_types()) + " edge types");
  }
}

}  // namespace detail

/// σ(A^l H W^l), dropout on the output in train mode.
template <typename T>
nn::Var layer_forward(nn::Tape<T>& tape, nn::Var h, const RelationAdjacency& adj, WgcnLayer<T>& layer,
                      const WgcnOptions& opts, nn::Mode mode, nn::Rng& rng) {
  detail::check_layer_shapes(tape.value(h), adj, layer);
  nn::Var w = tape.parameter(layer.weight);
  nn::Var alpha = tape.parameter(layer.alpha);
  nn::Var hw = nn::matmul(tape, h, w);
  nn::Var out = propagate(tape, adj, alpha, hw, opts.row_normalize);
  if (opts.activation == Activation::relu) out = nn::relu(tape, out);
  return nn::dropout(tape, out, opts.dropout, mode, rng);
}

/// Eval-mode matrix form on plain matrices.
template <typename T>
Matrix<T> layer_forward(const Matrix<T>& h, const RelationAdjacency& adj, WgcnLayer<T>& layer,
                        const WgcnOptions& opts) {
  nn::Tape<T> tape;
  nn::Rng rng(0);
  return tape.value(layer_forward(tape, tape.constant(h), adj, layer, opts, nn::Mode::eval, rng));
}

/// Per node i: σ(Σ_t Σ_{j ∈ N_t(i)} α_t h_j W + h_i W), by explicit neighbor iteration.
template <typename T>
Matrix<T> nodewise_forward(const Matrix<T>& h, const RelationAdjacency& adj, const WgcnLayer<T>& layer,
                           const WgcnOptions& opts) {
  detail::check_layer_shapes(h, adj, layer);
  const Matrix<T>& w = layer.weight.value;
  const std::size_t fin = w.rows();
  const std::size_t fout = w.cols();
  const auto transform = [&](std::size_t j, T scale, std::span<T> acc) {
    for (std::size_t c = 0; c < fout; ++c) {
      T s = 0;
      for (std::size_t k = 0; k < fin; ++k) s += h(j, k) * w(k, c);
      acc[c] += scale * s;
    }
  };
  Matrix<T> out(h.rows(), fout);
  for (std::size_t i = 0; i < h.rows(); ++i) {
    auto acc = out.row(i);
    const T norm = opts.row_normalize ? T(1) / static_cast<T>(1 + adj.distinct_neighbors(i)) : T(1);
    for (std::size_t t = 0; t < adj.num_types(); ++t) {
      const T alpha = layer.alpha.value[t];
      for (Index j : adj.neighbors(t, i)) transform(j, norm * alpha, acc);
    }
    transform(i, norm, acc);
    if (opts.activation == Activation::relu)
      for (auto& v : acc) v = v > T(0) ? v : T(0);
  }
  return out;
}

/// Runs every layer starting from H^1; the last layer uses `output_activation`.
/// With no layers the embedding table is returned as is.
template <typename T>
nn::Var encode(nn::Tape<T>& tape, WgcnStack<T>& stack, const RelationAdjacency& adj, nn::Mode mode, nn::Rng& rng) {
  if (stack.h1.value.rows() != adj.num_nodes()) {
    throw ShapeError("encoder table has " + std::to_string(stack.h1.value.rows()) + " rows for " +
                     std::to_string(adj.num_nodes()) + " nodes");
  }
  nn::Var h = tape.parameter(stack.h1);
  WgcnOptions last = stack.options;
  last.activation = stack.options.output_activation;
  for (std::size_t l = 0; l < stack.layers.size(); ++l) {
    const bool final_layer = l + 1 == stack.layers.size();
    h = layer_forward(tape, h, adj, stack.layers[l], final_layer ? last : stack.options, mode, rng);
  }
  return h;
}

template <typename T>
Matrix<T> encode(WgcnStack<T>& stack, const RelationAdjacency& adj) {
  nn::Tape<T> tape;
  nn::Rng rng(0);
  return tape.value(encode(tape, stack, adj, nn::Mode::eval, rng));
}

}  // namespace sacn
