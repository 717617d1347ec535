#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "sacn/tensor.hpp"

namespace sacn::nn {

using Rng = std::mt19937_64;

enum class Mode { train, eval };

/// A named trainable tensor with its gradient buffer.
///
/// Rank is carried separately from the 2-D storage so checkpoints can record the
/// logical shape (e.g. C×2×K convolution kernels stored as C×(2K)).
template <typename T>
struct Parameter {
  std::string name;
  Matrix<T> value;
  Matrix<T> grad;
  std::vector<std::size_t> dims;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, std::size_t rows, std::size_t cols, bool train = true)
      : name(std::move(n)), value(rows, cols), grad(rows, cols), dims{rows, cols}, trainable(train) {}

  void zero_grad() { grad.set_zero(); }
  std::size_t size() const noexcept { return value.size(); }
};

template <typename T>
void init_gaussian(Parameter<T>& p, Rng& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& v : p.value.values()) v = static_cast<T>(dist(rng));
}

/// Uniform on ±sqrt(6 / (fan_in + fan_out)).
template <typename T>
void init_xavier_uniform(Parameter<T>& p, Rng& rng, std::size_t fan_in, std::size_t fan_out) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : p.value.values()) v = static_cast<T>(dist(rng));
}

}  // namespace sacn::nn
