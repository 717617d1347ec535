#pragma once

// Conv-TransE decoder. Subject and relation embeddings are stacked as a 2×F input and
// each of the C kernels (2×K) slides along the aligned dimension:
//
//   m_c(n) = Σ_τ ω_c(τ,0)·ê_s(n+τ) + ω_c(τ,1)·ê_r(n+τ),   n ∈ [0, F)
//
// The C×F feature map is flattened, projected by W (C·F × F), passed through ReLU and
// matched against every entity embedding by inner product.

#include <span>
#include <string>
#include <vector>

#include "sacn/error.hpp"
#include "sacn/nn/ops.hpp"
#include "sacn/nn/parameter.hpp"
#include "sacn/nn/tape.hpp"
#include "sacn/tensor.hpp"

namespace sacn {

/// Leading zeros: ⌊K/2⌋ for odd K, ⌊K/2⌋ − 1 for even K. Trailing zeros: ⌊K/2⌋.
constexpr std::size_t pad_left(std::size_t k) { return k % 2 == 1 ? k / 2 : k / 2 - 1; }
constexpr std::size_t pad_right(std::size_t k) { return k / 2; }

template <typename T>
std::vector<T> pad(std::span<const T> e, std::size_t k) {
  if (k == 0) throw ValidationError("kernel width must be >= 1");
  std::vector<T> out(pad_left(k), T(0));
  out.insert(out.end(), e.begin(), e.end());
  out.insert(out.end(), pad_right(k), T(0));
  return out;
}

namespace detail {

/// One query's feature map into `out` (length C·F, channel-major). `kernels` is C×(2K):
/// the first K columns of row c hold ω_c(·,0), the next K hold ω_c(·,1). The subject and
/// relation halves are summed separately and added once, so M(e_s, e_r) equals
/// M(e_s, 0) + M(0, e_r) bit for bit.
template <typename T>
void conv_transe_row(std::span<const T> es, std::span<const T> er, const Matrix<T>& kernels, std::size_t k,
                     std::span<T> out) {
  const std::size_t f = es.size();
  const std::size_t left = pad_left(k);
  for (std::size_t c = 0; c < kernels.rows(); ++c) {
    const T* w = kernels.data() + c * 2 * k;
    for (std::size_t n = 0; n < f; ++n) {
      T acc_s = 0, acc_r = 0;
      for (std::size_t tau = 0; tau < k; ++tau) {
        const std::ptrdiff_t p = static_cast<std::ptrdiff_t>(n + tau) - static_cast<std::ptrdiff_t>(left);
        if (p < 0 || p >= static_cast<std::ptrdiff_t>(f)) continue;
        acc_s += w[tau] * es[static_cast<std::size_t>(p)];
        acc_r += w[k + tau] * er[static_cast<std::size_t>(p)];
      }
      out[c * f + n] = acc_s + acc_r;
    }
  }
}

template <typename T>
void check_kernels(const Matrix<T>& kernels, std::size_t k) {
  if (k == 0) throw ValidationError("kernel width must be >= 1");
  if (kernels.cols() != 2 * k) throw ShapeError("kernels " + kernels.shape() + " for width " + std::to_string(k));
}

}  // namespace detail

/// C×F feature map M(e_s, e_r).
template <typename T>
Matrix<T> conv_forward(std::span<const T> es, std::span<const T> er, const Matrix<T>& kernels, std::size_t k) {
  detail::check_kernels(kernels, k);
  if (es.size() != er.size() || es.empty()) {
    throw ShapeError("subject width " + std::to_string(es.size()) + " vs relation width " + std::to_string(er.size()));
  }
  Matrix<T> m(kernels.rows(), es.size());
  detail::conv_transe_row<T>(es, er, kernels, k, m.values());
  return m;
}

/// Batched convolution on the tape: es, er are B×F, output is B×(C·F).
template <typename T>
nn::Var conv_transe(nn::Tape<T>& tape, nn::Var es, nn::Var er, nn::Var kernels, std::size_t k) {
  const Matrix<T>& s = tape.value(es);
  const Matrix<T>& r = tape.value(er);
  const Matrix<T>& w = tape.value(kernels);
  detail::check_kernels(w, k);
  s.require_same_shape(r, "conv_transe inputs");
  const std::size_t f = s.cols();
  Matrix<T> out(s.rows(), w.rows() * f);
  for (std::size_t b = 0; b < s.rows(); ++b) detail::conv_transe_row<T>(s.row(b), r.row(b), w, k, out.row(b));

  return tape.record("conv_transe", std::move(out), {es, er, kernels}, [es, er, kernels, k, f](nn::Tape<T>& t, nn::Var self) {
    const Matrix<T>& g = t.grad(self);
    const Matrix<T>& s = t.value(es);
    const Matrix<T>& r = t.value(er);
    const Matrix<T>& w = t.value(kernels);
    const bool need_s = t.requires_grad(es), need_r = t.requires_grad(er), need_w = t.requires_grad(kernels);
    Matrix<T>* gs = need_s ? &t.grad(es) : nullptr;
    Matrix<T>* gr = need_r ? &t.grad(er) : nullptr;
    Matrix<T>* gw = need_w ? &t.grad(kernels) : nullptr;
    const std::size_t left = pad_left(k);
    for (std::size_t b = 0; b < g.rows(); ++b) {
      for (std::size_t c = 0; c < w.rows(); ++c) {
        const T* wc = w.data() + c * 2 * k;
        for (std::size_t n = 0; n < f; ++n) {
          const T gv = g(b, c * f + n);
          if (gv == T(0)) continue;
          for (std::size_t tau = 0; tau < k; ++tau) {
            const std::ptrdiff_t p = static_cast<std::ptrdiff_t>(n + tau) - static_cast<std::ptrdiff_t>(left);
            if (p < 0 || p >= static_cast<std::ptrdiff_t>(f)) continue;
            const auto pi = static_cast<std::size_t>(p);
            if (gs) (*gs)(b, pi) += gv * wc[tau];
            if (gr) (*gr)(b, pi) += gv * wc[k + tau];
            if (gw) {
              (*gw)(c, tau) += gv * s(b, pi);
              (*gw)(c, k + tau) += gv * r(b, pi);
            }
          }
        }
      }
    }
  });
}

struct DecoderOptions {
  std::size_t kernel_count = 100;
  std::size_t kernel_width = 5;
  double dropout = 0.0;
  bool batchnorm = true;
  bool bias = false;
};

/// Kernels, projection and relation embeddings of the Conv-TransE decoder.
template <typename T>
struct DecoderBank {
  nn::Parameter<T> kernels;              // C × 2K (logical C×2×K)
  nn::Parameter<T> projection;           // C·F × F
  nn::Parameter<T> relation_embeddings;  // M_rel × F
  nn::Parameter<T> conv_bias;            // 1 × C, only with options.bias
  nn::Parameter<T> projection_bias;      // 1 × F, only with options.bias
  nn::BatchNorm<T> feature_bn;
  nn::BatchNorm<T> hidden_bn;
  DecoderOptions options;

  DecoderBank() = default;
  DecoderBank(std::size_t num_relations, std::size_t width, DecoderOptions opts)
      : kernels("decoder.kernels", opts.kernel_count, 2 * opts.kernel_width),
        projection("decoder.projection", opts.kernel_count * width, width),
        relation_embeddings("decoder.relation_embeddings", num_relations, width),
        conv_bias("decoder.conv_bias", 1, opts.kernel_count),
        projection_bias("decoder.projection_bias", 1, width),
        feature_bn("decoder.feature_bn", opts.kernel_count),
        hidden_bn("decoder.hidden_bn", width),
        options(opts) {
    if (opts.kernel_width == 0) throw ValidationError("kernel width must be >= 1");
    if (opts.kernel_count == 0) throw ValidationError("kernel count must be >= 1");
    kernels.dims = {opts.kernel_count, 2, opts.kernel_width};
  }

  std::size_t width() const noexcept { return projection.value.cols(); }

  void initialize(nn::Rng& rng, double embedding_stddev = 0.1) {
    const std::size_t c = options.kernel_count, k = options.kernel_width;
    nn::init_xavier_uniform(kernels, rng, 2 * k, c * k);
    nn::init_xavier_uniform(projection, rng, projection.value.rows(), projection.value.cols());
    nn::init_gaussian(relation_embeddings, rng, embedding_stddev);
    conv_bias.value.set_zero();
    projection_bias.value.set_zero();
  }

  std::vector<nn::Parameter<T>*> parameters() {
    std::vector<nn::Parameter<T>*> out{&kernels, &projection, &relation_embeddings};
    if (options.bias) {
      out.push_back(&conv_bias);
      out.push_back(&projection_bias);
    }
    if (options.batchnorm) {
      for (auto* bn : {&feature_bn, &hidden_bn}) {
        out.push_back(&bn->gamma);
        out.push_back(&bn->beta);
        out.push_back(&bn->running_mean);
        out.push_back(&bn->running_var);
      }
    }
    return out;
  }
};

/// Hidden vectors f(vec(M)·W) for a batch of looked-up (e_s, e_r) rows, B×F.
template <typename T>
nn::Var conv_transe_hidden(nn::Tape<T>& tape, DecoderBank<T>& bank, nn::Var es, nn::Var er, nn::Mode mode,
                           nn::Rng& rng) {
  const auto& o = bank.options;
  if (tape.value(es).cols() != bank.width()) {
    throw ShapeError("decoder width " + std::to_string(bank.width()) + " vs embedding " + tape.value(es).shape());
  }
  es = nn::dropout(tape, es, o.dropout, mode, rng);
  er = nn::dropout(tape, er, o.dropout, mode, rng);
  nn::Var m = conv_transe(tape, es, er, tape.parameter(bank.kernels), o.kernel_width);
  if (o.bias) m = nn::add_channel_bias(tape, m, tape.parameter(bank.conv_bias));
  if (o.batchnorm) m = nn::batch_norm(tape, m, bank.feature_bn, mode);
  m = nn::dropout(tape, m, o.dropout, mode, rng);
  nn::Var h = nn::matmul(tape, m, tape.parameter(bank.projection));
  if (o.bias) h = nn::add_channel_bias(tape, h, tape.parameter(bank.projection_bias));
  h = nn::dropout(tape, h, o.dropout, mode, rng);
  if (o.batchnorm) h = nn::batch_norm(tape, h, bank.hidden_bn, mode);
  return nn::relu(tape, h);
}

/// Logits B×N for queries whose subject rows index `entities` (N×F) and relation rows
/// index the bank's relation table.
template <typename T>
nn::Var conv_transe_logits(nn::Tape<T>& tape, DecoderBank<T>& bank, nn::Var entities,
                           std::vector<std::size_t> subjects, std::vector<std::size_t> relations, nn::Mode mode,
                           nn::Rng& rng) {
  nn::Var es = nn::gather_rows(tape, entities, std::move(subjects));
  nn::Var er = nn::gather_rows(tape, tape.parameter(bank.relation_embeddings), std::move(relations));
  nn::Var h = conv_transe_hidden(tape, bank, es, er, mode, rng);
  return nn::matmul_bt(tape, h, entities);
}

/// ψ(e_s, e_o) for every row e_o of `entities`, given explicit e_s and e_r vectors.
template <typename T>
std::vector<T> score_all(std::span<const T> es, std::span<const T> er, const Matrix<T>& entities,
                         DecoderBank<T>& bank, nn::Mode mode = nn::Mode::eval, nn::Rng* rng = nullptr) {
  if (es.size() != bank.width() || er.size() != bank.width() || entities.cols() != bank.width()) {
    throw ShapeError("score_all: widths " + std::to_string(es.size()) + "/" + std::to_string(er.size()) + "/" +
                     std::to_string(entities.cols()) + " vs decoder " + std::to_string(bank.width()));
  }
  nn::Rng local(0);
  nn::Tape<T> tape;
  nn::Var s = tape.constant(Matrix<T>::row_vector(es));
  nn::Var r = tape.constant(Matrix<T>::row_vector(er));
  nn::Var h = conv_transe_hidden(tape, bank, s, r, mode, rng ? *rng : local);
  nn::Var scores = nn::matmul_bt(tape, h, tape.constant(entities));
  const auto v = tape.value(scores).values();
  return {v.begin(), v.end()};
}

/// Elementwise logistic sigmoid of scores.
template <typename T>
std::vector<T> prob(std::span<const T> scores) {
  std::vector<T> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = nn::sigmoid(scores[i]);
  return out;
}

}  // namespace sacn
