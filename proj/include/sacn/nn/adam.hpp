#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "sacn/error.hpp"
#include "sacn/nn/parameter.hpp"

namespace sacn::nn {

struct AdamConfig {
  double learning_rate = 0.003;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // L2 term added to the gradient; off by default
  double grad_clip = 0.0;     // global-norm clip; 0 disables
};

/// Adam with bias correction. Moments are keyed by position in the parameter list
/// passed to the constructor; that list must stay in the same order.
template <typename T>
class Adam {
 public:
  struct Moments {
    std::string name;
    Matrix<T> m;
    Matrix<T> v;
  };

  Adam(std::vector<Parameter<T>*> params, AdamConfig config) : params_(std::move(params)), config_(config) {
    for (auto* p : params_) {
      moments_.push_back(Moments{p->name, Matrix<T>(p->value.rows(), p->value.cols()),
                                 Matrix<T>(p->value.rows(), p->value.cols())});
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

  /// Applies one update from the populated gradients, then zeroes them.
  void step() {
    for (auto* p : params_) {
      if (p->trainable && !all_finite<T>(p->grad.values())) {
        throw NumericError("non-finite gradient in parameter '" + p->name + "'");
      }
    }
    double clip_scale = 1.0;
    if (config_.grad_clip > 0.0) {
      double sq = 0.0;
      for (auto* p : params_)
        if (p->trainable)
          for (T g : p->grad.values()) sq += static_cast<double>(g) * static_cast<double>(g);
      const double norm = std::sqrt(sq);
      if (norm > config_.grad_clip) clip_scale = config_.grad_clip / norm;
    }

    ++step_;
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
    const T b1 = static_cast<T>(config_.beta1);
    const T b2 = static_cast<T>(config_.beta2);
    const T lr = static_cast<T>(config_.learning_rate);
    const T eps = static_cast<T>(config_.eps);
    const T wd = static_cast<T>(config_.weight_decay);
    const T cs = static_cast<T>(clip_scale);
    const T inv_bc1 = static_cast<T>(1.0 / bc1);
    const T inv_bc2 = static_cast<T>(1.0 / bc2);

    for (std::size_t k = 0; k < params_.size(); ++k) {
      Parameter<T>& p = *params_[k];
      if (!p.trainable) continue;
      Moments& mo = moments_[k];
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const T g = p.grad[i] * cs + wd * p.value[i];
        mo.m[i] = b1 * mo.m[i] + (T(1) - b1) * g;
        mo.v[i] = b2 * mo.v[i] + (T(1) - b2) * g * g;
        const T mhat = mo.m[i] * inv_bc1;
        const T vhat = mo.v[i] * inv_bc2;
        p.value[i] -= lr * mhat / (std::sqrt(vhat) + eps);
      }
    }
    zero_grad();
  }

  std::uint64_t step_count() const noexcept { return step_; }
  const AdamConfig& config() const noexcept { return config_; }
  const std::vector<Moments>& moments() const noexcept { return moments_; }
  const std::vector<Parameter<T>*>& parameters() const noexcept { return params_; }

  /// Restores state read from a checkpoint.
  void restore(std::uint64_t step, std::vector<Moments> moments) {
    if (moments.size() != moments_.size()) throw ValidationError("adam state has wrong parameter count");
    for (std::size_t k = 0; k < moments.size(); ++k) {
      if (moments[k].name != moments_[k].name || !moments[k].m.same_shape(moments_[k].m) ||
          !moments[k].v.same_shape(moments_[k].v)) {
        throw ValidationError("adam state mismatch for parameter '" + moments_[k].name + "'");
      }
    }
    step_ = step;
    moments_ = std::move(moments);
  }

 private:
  std::vector<Parameter<T>*> params_;
  AdamConfig config_;
  std::vector<Moments> moments_;
  std::uint64_t step_ = 0;
};

}  // namespace sacn::nn
