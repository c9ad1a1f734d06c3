#pragma once

// Finite-difference checks of every differentiable component of the model on
// small random instances.

#include "fewshot/contrastive.hpp"
#include "fewshot/gradcheck.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace fewshot {

struct GradientSuiteOptions {
  int n_way = 2;
  int k_shot = 2;
  int m_query = 2;
  Eigen::Index dim = 4;
  double eps = 1e-4;
  double tolerance = 1e-4;
  std::uint64_t seed = 0;
  ContrastiveConfig contrastive;
  TapeOptions tape;
};

struct ComponentCheck {
  std::string component;
  GradCheckReport report;
};

std::vector<ComponentCheck> run_gradient_suite(const GradientSuiteOptions& options);

bool all_passed(const std::vector<ComponentCheck>& checks);

// One line per component: name, PASS/FAIL, worst relative error and the
// parameter it occurred in.
void print_gradient_report(std::ostream& out, const std::vector<ComponentCheck>& checks);

}  // namespace fewshot
