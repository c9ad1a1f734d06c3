#pragma once

#include "fewshot/tape.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fewshot {

template <typename Scalar>
struct GradientResult {
  Scalar value = 0;
  std::vector<Tensor<Scalar>> gradients;  // aligned with the parameter list
};

// Builds f on a fresh tape with `params` as leaves, runs the reverse sweep and
// returns the value with one gradient per parameter. f has the signature
// Var<Scalar>(Tape<Scalar>&, std::span<const Var<Scalar>>).
template <typename Scalar, typename Fn>
GradientResult<Scalar> forward_backward(Fn&& f, std::span<const Tensor<Scalar>> params,
                                        TapeOptions options = {}) {
  Tape<Scalar> tape(options);
  std::vector<Var<Scalar>> leaves;
  leaves.reserve(params.size());
  for (const auto& p : params) leaves.push_back(tape.parameter(p));
  Var<Scalar> out = f(tape, std::span<const Var<Scalar>>(leaves));
  tape.backward(out);
  GradientResult<Scalar> result;
  result.value = out.scalar();
  for (const auto& leaf : leaves) result.gradients.push_back(tape.gradient(leaf));
  return result;
}

// Central-difference gradient estimate of a scalar function.
template <typename Scalar>
Tensor<Scalar> finite_diff_grad(const std::function<Scalar(const Tensor<Scalar>&)>& f,
                                const Tensor<Scalar>& x, Scalar eps) {
  if (!(eps > Scalar(0))) throw std::invalid_argument("finite_diff_grad: eps must be positive");
  Tensor<Scalar> grad(x.rows(), x.cols());
  Tensor<Scalar> probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const Scalar original = probe(i);
    probe(i) = original + eps;
    const Scalar up = f(probe);
    probe(i) = original - eps;
    const Scalar down = f(probe);
    probe(i) = original;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError(Primitive::Leaf,
                         "finite_diff_grad: non-finite function value at coordinate " + std::to_string(i));
    }
    grad(i) = (up - down) / (Scalar(2) * eps);
  }
  return grad;
}

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

struct GradCheckEntry {
  std::string name;
  double max_relative_error = 0;
  Eigen::Index worst_coordinate = -1;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tolerance = 0;

  bool passed() const {
    return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.passed; });
  }
  double worst() const {
    double w = 0;
    for (const auto& e : entries) w = std::max(w, e.max_relative_error);
    return w;
  }
};

struct NamedTensor {
  std::string name;
  Tensor<double> value;
};

// Compares reverse-mode gradients against central differences for every
// named parameter. 64-bit only: single precision differences are too noisy
// for tolerances around 1e-4.
template <typename Fn>
GradCheckReport check_gradients(Fn&& f, std::span<const NamedTensor> params, double eps, double tol,
                                TapeOptions options = {}) {
  std::vector<Tensor<double>> values;
  for (const auto& p : params) values.push_back(p.value);
  const auto analytic = forward_backward<double>(f, std::span<const Tensor<double>>(values), options);

  GradCheckReport report;
  report.tolerance = tol;
  for (std::size_t j = 0; j < params.size(); ++j) {
    auto evaluate = [&](const Tensor<double>& probe) {
      std::vector<Tensor<double>> shifted = values;
      shifted[j] = probe;
      Tape<double> tape;
      std::vector<Var<double>> leaves;
      for (const auto& v : shifted) leaves.push_back(tape.constant(v));
      return f(tape, std::span<const Var<double>>(leaves)).scalar();
    };
    const Tensor<double> numeric = finite_diff_grad<double>(evaluate, values[j], eps);
    GradCheckEntry entry{params[j].name};
    for (Eigen::Index i = 0; i < numeric.size(); ++i) {
      const double err = relative_error(analytic.gradients[j](i), numeric(i));
      if (err > entry.max_relative_error) {
        entry.max_relative_error = err;
        entry.worst_coordinate = i;
      }
    }
    entry.passed = entry.max_relative_error <= tol;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace fewshot
