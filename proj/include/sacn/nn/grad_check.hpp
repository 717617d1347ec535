#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "sacn/error.hpp"
#include "sacn/nn/parameter.hpp"
#include "sacn/nn/tape.hpp"

namespace sacn::nn {

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t checked = 0;
};

struct GradCheckOptions {
  double step = 1e-5;
  /// Denominator floor: rel = |a − n| / max(|a|, |n|, floor). Keeps entries whose true
  /// gradient is (near) zero from turning round-off into huge relative errors.
  double floor = 1e-6;
};

/// Compares tape gradients with central differences (f(x+h) − f(x−h)) / 2h for every
/// entry of every trainable parameter. `build_loss` must be deterministic and return a
/// 1×1 loss on the tape it is given.
template <typename T>
std::vector<GradCheckEntry> grad_check(const std::vector<Parameter<T>*>& params,
                                       const std::function<Var(Tape<T>&)>& build_loss,
                                       GradCheckOptions opts = {}) {
  for (auto* p : params) p->zero_grad();
  {
    Tape<T> tape;
    const Var loss = build_loss(tape);
    if (!std::isfinite(static_cast<double>(tape.value(loss)[0]))) throw NumericError("grad_check: non-finite loss");
    tape.backward(loss);
  }
  const auto eval = [&build_loss]() {
    Tape<T> tape;
    const Var loss = build_loss(tape);
    const double v = static_cast<double>(tape.value(loss)[0]);
    if (!std::isfinite(v)) throw NumericError("grad_check: non-finite loss under perturbation");
    return v;
  };

  std::vector<GradCheckEntry> report;
  for (auto* p : params) {
    if (!p->trainable) continue;
    GradCheckEntry e{p->name};
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const T saved = p->value[i];
      p->value[i] = saved + static_cast<T>(opts.step);
      const double up = eval();
      p->value[i] = saved - static_cast<T>(opts.step);
      const double down = eval();
      p->value[i] = saved;
      const double numeric = (up - down) / (2.0 * opts.step);
      const double analytic = static_cast<double>(p->grad[i]);
      if (!std::isfinite(analytic)) throw NumericError("grad_check: non-finite gradient in " + p->name);
      const double abs_err = std::abs(analytic - numeric);
      const double denom = std::max({std::abs(analytic), std::abs(numeric), opts.floor});
      e.max_abs_error = std::max(e.max_abs_error, abs_err);
      e.max_rel_error = std::max(e.max_rel_error, abs_err / denom);
      ++e.checked;
    }
    report.push_back(e);
    p->zero_grad();
  }
  return report;
}

inline double worst_rel_error(const std::vector<GradCheckEntry>& report) {
  double w = 0.0;
  for (const auto& e : report) w = std::max(w, e.max_rel_error);
  return w;
}

}  // namespace sacn::nn
