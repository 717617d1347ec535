#pragma once

// Differentiable dense ops recorded on a Tape.

#include <algorithm>
#include <cmath>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sacn/error.hpp"
#include "sacn/nn/parameter.hpp"
#include "sacn/nn/tape.hpp"
#include "sacn/tensor.hpp"

namespace sacn::nn {

template <typename T>
T sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

/// −[y ln σ(x) + (1−y) ln(1−σ(x))] evaluated as max(x,0) − x·y + ln(1 + e^{−|x|}).
template <typename T>
T bce_with_logits(T logit, T label) {
  return std::max(logit, T(0)) - logit * label + std::log1p(std::exp(-std::abs(logit)));
}

template <typename T>
Var matmul(Tape<T>& tape, Var a, Var b) {
  return tape.record("matmul", gemm(tape.value(a), tape.value(b)), {a, b}, [a, b](Tape<T>& t, Var self) {
    const Matrix<T>& g = t.grad(self);
    if (t.requires_grad(a)) t.grad(a) += gemm_bt(g, t.value(b));
    if (t.requires_grad(b)) t.grad(b) += gemm_at(t.value(a), g);
  });
}

/// A·Bᵀ
template <typename T>
Var matmul_bt(Tape<T>& tape, Var a, Var b) {
  return tape.record("matmul_bt", gemm_bt(tape.value(a), tape.value(b)), {a, b}, [a, b](Tape<T>& t, Var self) {
    const Matrix<T>& g = t.grad(self);
    if (t.requires_grad(a)) t.grad(a) += gemm(g, t.value(b));
    if (t.requires_grad(b)) t.grad(b) += gemm_at(g, t.value(a));
  });
}

template <typename T>
Var add(Tape<T>& tape, Var a, Var b) {
  return tape.record("add", tape.value(a) + tape.value(b), {a, b}, [a, b](Tape<T>& t, Var self) {
    if (t.requires_grad(a)) t.grad(a) += t.grad(self);
    if (t.requires_grad(b)) t.grad(b) += t.grad(self);
  });
}

template <typename T>
Var hadamard(Tape<T>& tape, Var a, Var b) {
  const Matrix<T>& x = tape.value(a);
  const Matrix<T>& y = tape.value(b);
  x.require_same_shape(y, "hadamard");
  Matrix<T> out(x.rows(), x.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return tape.record("hadamard", std::move(out), {a, b}, [a, b](Tape<T>& t, Var self) {
    const Matrix<T>& g = t.grad(self);
    if (t.requires_grad(a)) {
      Matrix<T>& ga = t.grad(a);
      const Matrix<T>& y = t.value(b);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
    }
    if (t.requires_grad(b)) {
      Matrix<T>& gb = t.grad(b);
      const Matrix<T>& x = t.value(a);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
    }
  });
}

/// x (R×(C·S)) + bias (1×C) broadcast over rows and the S positions of each channel.
/// With channels == cols this is an ordinary per-column bias.
template <typename T>
Var add_channel_bias(Tape<T>& tape, Var x, Var bias) {
  const Matrix<T>& xv = tape.value(x);
  const Matrix<T>& bv = tape.value(bias);
  const std::size_t channels = bv.size();
  if (channels == 0 || xv.cols() % channels != 0) {
    throw ShapeError("channel bias of " + std::to_string(channels) + " for " + xv.shape());
  }
  const std::size_t span = xv.cols() / channels;
  Matrix<T> out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += bv[c / span];
  return tape.record("add_channel_bias", std::move(out), {x, bias}, [x, bias, span](Tape<T>& t, Var self) {
    const Matrix<T>& g = t.grad(self);
    if (t.requires_grad(x)) t.grad(x) += g;
    if (t.requires_grad(bias)) {
      Matrix<T>& gb = t.grad(bias);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gb[c / span] += g(r, c);
    }
  });
}

template <typename T>
Var relu(Tape<T>& tape, Var x) {
  Matrix<T> out = tape.value(x);
  for (auto& v : out.values()) v = v > T(0) ? v : T(0);
  return tape.record("relu", std::move(out), {x}, [x](Tape<T>& t, Var self) {
    const Matrix<T>& g = t.grad(self);
    const Matrix<T>& in = t.value(x);
    Matrix<T>& gx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (in[i] > T(0)) gx[i] += g[i];
  });
}

template <typename T>
Var sigmoid(Tape<T>& tape, Var x) {
  Matrix<T> out = tape.value(x);
  for (auto& v : out.values()) v = sigmoid(v);
  return tape.record("sigmoid", std::move(out), {x}, [x](Tape<T>& t, Var self) {
    const Matrix<T>& g = t.grad(self);
    const Matrix<T>& y = t.value(self);
    Matrix<T>& gx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (T(1) - y[i]);
  });
}

inline void validate_dropout_rate(double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ValidationError("dropout rate must be in [0, 1), got " + std::to_string(rate));
}

/// Inverted dropout: in train mode entries are zeroed with probability `rate` and
/// survivors scaled by 1/(1−rate). Identity in eval mode or at rate 0.
template <typename T>
Var dropout(Tape<T>& tape, Var x, double rate, Mode mode, Rng& rng) {
  validate_dropout_rate(rate);
  if (mode == Mode::eval || rate == 0.0) return x;
  const Matrix<T>& in = tape.value(x);
  Matrix<T> mask(in.rows(), in.cols());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  for (auto& m : mask.values()) m = u(rng) < rate ? T(0) : keep_scale;
  Matrix<T> out(in.rows(), in.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] * mask[i];
  return tape.record("dropout", std::move(out), {x}, [x, mask = std::move(mask)](Tape<T>& t, Var self) {
    const Matrix<T>& g = t.grad(self);
    Matrix<T>& gx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
  });
}

/// Row lookup: out[b] = table[index[b]]. Backward scatter-adds into the table.
template <typename T>
Var gather_rows(Tape<T>& tape, Var table, std::vector<std::size_t> index) {
  const Matrix<T>& tv = tape.value(table);
  Matrix<T> out(index.size(), tv.cols());
  for (std::size_t b = 0; b < index.size(); ++b) {
    if (index[b] >= tv.rows()) throw ShapeError("gather index " + std::to_string(index[b]) + " of " + tv.shape());
    std::copy(tv.row(index[b]).begin(), tv.row(index[b]).end(), out.row(b).begin());
  }
  return tape.record("gather_rows", std::move(out), {table}, [table, index = std::move(index)](Tape<T>& t, Var self) {
    const Matrix<T>& g = t.grad(self);
    Matrix<T>& gt = t.grad(table);
    for (std::size_t b = 0; b < index.size(); ++b) {
      auto dst = gt.row(index[b]);
      auto src = g.row(b);
      for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
    }
  });
}

/// Batch normalization over channels. Input is R×(C·S): each of the C channels owns S
/// consecutive columns and is normalized over all R·S entries.
template <typename T>
struct BatchNorm {
  Parameter<T> gamma;
  Parameter<T> beta;
  Parameter<T> running_mean;
  Parameter<T> running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  BatchNorm() = default;
  BatchNorm(const std::string& name, std::size_t channels)
      : gamma(name + ".gamma", 1, channels),
        beta(name + ".beta", 1, channels),
        running_mean(name + ".running_mean", 1, channels, false),
        running_var(name + ".running_var", 1, channels, false) {
    gamma.value.fill(T(1));
    running_var.value.fill(T(1));
  }

  std::size_t channels() const noexcept { return gamma.size(); }
};

template <typename T>
Var batch_norm(Tape<T>& tape, Var x, BatchNorm<T>& bn, Mode mode) {
  const Matrix<T>& in = tape.value(x);
  const std::size_t channels = bn.channels();
  if (channels == 0 || in.cols() % channels != 0) {
    throw ShapeError("batch_norm over " + std::to_string(channels) + " channels for " + in.shape());
  }
  const std::size_t span = in.cols() / channels;
  const std::size_t count = in.rows() * span;
  Var gamma = tape.parameter(bn.gamma);
  Var beta = tape.parameter(bn.beta);

  std::vector<T> mean(channels, T(0)), inv_std(channels, T(0));
  if (mode == Mode::train) {
    for (std::size_t r = 0; r < in.rows(); ++r)
      for (std::size_t c = 0; c < in.cols(); ++c) mean[c / span] += in(r, c);
    for (auto& m : mean) m /= static_cast<T>(count);
    std::vector<T> var(channels, T(0));
    for (std::size_t r = 0; r < in.rows(); ++r)
      for (std::size_t c = 0; c < in.cols(); ++c) {
        const T d = in(r, c) - mean[c / span];
        var[c / span] += d * d;
      }
    for (auto& v : var) v /= static_cast<T>(count);
    const T mom = static_cast<T>(bn.momentum);
    for (std::size_t k = 0; k < channels; ++k) {
      inv_std[k] = T(1) / std::sqrt(var[k] + static_cast<T>(bn.eps));
      const T unbiased = count > 1 ? var[k] * static_cast<T>(count) / static_cast<T>(count - 1) : var[k];
      bn.running_mean.value[k] = (T(1) - mom) * bn.running_mean.value[k] + mom * mean[k];
      bn.running_var.value[k] = (T(1) - mom) * bn.running_var.value[k] + mom * unbiased;
    }
  } else {
    for (std::size_t k = 0; k < channels; ++k) {
      mean[k] = bn.running_mean.value[k];
      inv_std[k] = T(1) / std::sqrt(bn.running_var.value[k] + static_cast<T>(bn.eps));
    }
  }

  Matrix<T> xhat(in.rows(), in.cols());
  Matrix<T> out(in.rows(), in.cols());
  for (std::size_t r = 0; r < in.rows(); ++r)
    for (std::size_t c = 0; c < in.cols(); ++c) {
      const std::size_t k = c / span;
      xhat(r, c) = (in(r, c) - mean[k]) * inv_std[k];
      out(r, c) = bn.gamma.value[k] * xhat(r, c) + bn.beta.value[k];
    }

  const bool batch_stats = mode == Mode::train;
  return tape.record(
      "batch_norm", std::move(out), {x, gamma, beta},
      [x, gamma, beta, span, count, batch_stats, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          Tape<T>& t, Var self) {
        const Matrix<T>& g = t.grad(self);
        const Matrix<T>& gv = t.value(gamma);
        const std::size_t channels = gv.size();
        std::vector<T> sum_g(channels, T(0)), sum_gx(channels, T(0));
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < g.cols(); ++c) {
            sum_g[c / span] += g(r, c);
            sum_gx[c / span] += g(r, c) * xhat(r, c);
          }
        if (t.requires_grad(gamma)) {
          Matrix<T>& gg = t.grad(gamma);
          for (std::size_t k = 0; k < channels; ++k) gg[k] += sum_gx[k];
        }
        if (t.requires_grad(beta)) {
          Matrix<T>& gb = t.grad(beta);
          for (std::size_t k = 0; k < channels; ++k) gb[k] += sum_g[k];
        }
        if (!t.requires_grad(x)) return;
        Matrix<T>& gx = t.grad(x);
        const T m = static_cast<T>(count);
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < g.cols(); ++c) {
            const std::size_t k = c / span;
            if (batch_stats) {
              gx(r, c) += gv[k] * inv_std[k] * (g(r, c) - sum_g[k] / m - xhat(r, c) * sum_gx[k] / m);
            } else {
              gx(r, c) += gv[k] * inv_std[k] * g(r, c);
            }
          }
      });
}

/// Mean binary cross-entropy over every cell of logits (B×N) against labels in [0, 1].
template <typename T>
Var bce_with_logits_mean(Tape<T>& tape, Var logits, Matrix<T> labels) {
  const Matrix<T>& z = tape.value(logits);
  z.require_same_shape(labels, "bce labels");
  if (z.empty()) throw ShapeError("bce on empty logits");
  T total = 0;
  for (std::size_t i = 0; i < z.size(); ++i) total += bce_with_logits(z[i], labels[i]);
  const T inv_n = T(1) / static_cast<T>(z.size());
  Matrix<T> out(1, 1, total * inv_n);
  return tape.record("bce_mean", std::move(out), {logits},
                     [logits, inv_n, labels = std::move(labels)](Tape<T>& t, Var self) {
                       const T g = t.grad(self)[0];
                       const Matrix<T>& z = t.value(logits);
                       Matrix<T>& gz = t.grad(logits);
                       for (std::size_t i = 0; i < z.size(); ++i) gz[i] += g * inv_n * (sigmoid(z[i]) - labels[i]);
                     });
}

/// ½‖x‖²
template <typename T>
Var half_sum_squares(Tape<T>& tape, Var x) {
  const Matrix<T>& v = tape.value(x);
  T s = 0;
  for (T e : v.values()) s += e * e;
  return tape.record("half_sum_squares", Matrix<T>(1, 1, s / T(2)), {x}, [x](Tape<T>& t, Var self) {
    const T g = t.grad(self)[0];
    const Matrix<T>& v = t.value(x);
    Matrix<T>& gx = t.grad(x);
    for (std::size_t i = 0; i < v.size(); ++i) gx[i] += g * v[i];
  });
}

/// Σ x ⊙ w for a fixed weight matrix; turns any tensor into a scalar probe for gradient tests.
template <typename T>
Var weighted_sum(Tape<T>& tape, Var x, Matrix<T> weights) {
  const Matrix<T>& v = tape.value(x);
  v.require_same_shape(weights, "weighted_sum");
  T s = 0;
  for (std::size_t i = 0; i < v.size(); ++i) s += v[i] * weights[i];
  return tape.record("weighted_sum", Matrix<T>(1, 1, s), {x}, [x, w = std::move(weights)](Tape<T>& t, Var self) {
    const T g = t.grad(self)[0];
    Matrix<T>& gx = t.grad(x);
    for (std::size_t i = 0; i < w.size(); ++i) gx[i] += g * w[i];
  });
}

}  // namespace sacn::nn
