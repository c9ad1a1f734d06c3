#pragma once

#include "fewshot/tape.hpp"

#include <cstdint>
#include <random>

namespace testing_support {

inline fewshot::Tensor<double> random_tensor(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols,
                                             double sd = 1.0) {
  std::normal_distribution<double> dist(0.0, sd);
  fewshot::Tensor<double> t(rows, cols);
  for (Eigen::Index i = 0; i < t.size(); ++i) t(i) = dist(rng);
  return t;
}

inline fewshot::Tensor<double> column(std::initializer_list<double> values) {
  fewshot::Tensor<double> t(static_cast<Eigen::Index>(values.size()), 1);
  Eigen::Index i = 0;
  for (double v : values) t(i++) = v;
  return t;
}

}  // namespace testing_support
