#pragma once

// Supervised contrastive loss over the merged support+query set of an episode.

#include "fewshot/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace fewshot {

enum class SupConForm {
  Out,  // -(1/|H|) sum_h log(exp(s_ph/tau) / sum_{t in A} exp(s_pt/tau))
  In,   // -(1/|H|) log(sum_h exp(s_ph/tau) / sum_{t in A} exp(s_pt/tau))
};

SupConForm parse_supcon_form(std::string_view s);
std::string_view to_string(SupConForm f);

struct ContrastiveConfig {
  double tau = 5.0;
  SupConForm form = SupConForm::Out;
};

// A(p) = every other instance, H(p) = the members of A(p) sharing p's label.
// Indices are zero-based.
struct ContrastiveIndexSets {
  std::vector<std::vector<int>> anchors;
  std::vector<std::vector<int>> positives;
};

ContrastiveIndexSets build_index_sets(std::span<const int> labels);

template <typename Scalar>
Scalar cosine_sim(const Vector<Scalar>& a, const Vector<Scalar>& b) {
  if (a.size() != b.size()) throw ShapeError("cosine_sim: width mismatch");
  return a.dot(b) / ((a.norm() + Scalar(1e-12)) * (b.norm() + Scalar(1e-12)));
}

namespace detail {

template <typename Scalar>
Scalar log_sum_exp(const Tensor<Scalar>& row, std::span<const int> idx, Scalar inv_tau, std::vector<Scalar>& weights) {
  Scalar peak = -std::numeric_limits<Scalar>::infinity();
  for (int t : idx) peak = std::max(peak, row(0, t) * inv_tau);
  Scalar total = 0;
  weights.resize(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    weights[k] = std::exp(row(0, idx[k]) * inv_tau - peak);
    total += weights[k];
  }
  for (auto& w : weights) w /= total;
  return peak + std::log(total);
}

}  // namespace detail

// Loss kernel on an n x n similarity matrix. Gradient per anchor row p:
//   out: (1/tau) (softmax_A(t) - [t in H] / |H|)
//   in:  (1/(tau |H|)) (softmax_A(t) - [t in H] softmax_H(t))
template <typename Scalar>
Var<Scalar> supcon_from_similarity(const Var<Scalar>& sims, std::span<const int> labels, const ContrastiveConfig& cfg) {
  if (!(cfg.tau > 0)) throw std::invalid_argument("supcon: tau must be positive");
  const auto n = static_cast<Eigen::Index>(labels.size());
  if (sims.rows() != n || sims.cols() != n) throw ShapeError("supcon: similarity matrix does not match labels");
  const auto sets = build_index_sets(labels);
  const Scalar inv_tau = Scalar(1) / static_cast<Scalar>(cfg.tau);
  const auto& s = sims.value();

  Tensor<Scalar> grad = Tensor<Scalar>::Zero(n, n);
  Scalar total = 0;
  std::vector<Scalar> soft_a, soft_h;
  for (Eigen::Index p = 0; p < n; ++p) {
    const auto& a = sets.anchors[static_cast<std::size_t>(p)];
    const auto& h = sets.positives[static_cast<std::size_t>(p)];
    if (h.empty()) {
      throw std::invalid_argument("supcon: instance " + std::to_string(p) + " has no positive (|H(p)| = 0)");
    }
    const Tensor<Scalar> row = s.row(p);
    const Scalar lse_a = detail::log_sum_exp(row, a, inv_tau, soft_a);
    const Scalar inv_h = Scalar(1) / static_cast<Scalar>(h.size());
    if (cfg.form == SupConForm::Out) {
      Scalar acc = 0;
      for (int t : h) acc += lse_a - row(0, t) * inv_tau;
      total += acc * inv_h;
      for (std::size_t k = 0; k < a.size(); ++k) grad(p, a[k]) += inv_tau * soft_a[k];
      for (int t : h) grad(p, t) -= inv_tau * inv_h;
    } else {
      const Scalar lse_h = detail::log_sum_exp(row, h, inv_tau, soft_h);
      total += inv_h * (lse_a - lse_h);
      for (std::size_t k = 0; k < a.size(); ++k) grad(p, a[k]) += inv_tau * inv_h * soft_a[k];
      for (std::size_t k = 0; k < h.size(); ++k) grad(p, h[k]) -= inv_tau * inv_h * soft_h[k];
    }
  }
  Tensor<Scalar> out(1, 1);
  out(0, 0) = total;
  return sims.tape()->record(Primitive::SupConLoss, std::move(out), {sims.id()},
                             [grad = std::move(grad)](const auto& g, auto ps) { *ps[0] += g(0, 0) * grad; });
}

// L_con = sum_p L_con^p over all reps (rows of an n x d matrix or a list of
// column vectors). Non-negative; invariant to positive rescaling of reps.
template <typename Scalar>
Var<Scalar> supcon_loss(const Var<Scalar>& rep_matrix, std::span<const int> labels, const ContrastiveConfig& cfg) {
  return supcon_from_similarity(cosine_similarity_matrix(rep_matrix), labels, cfg);
}

template <typename Scalar>
Var<Scalar> supcon_loss(std::span<const Var<Scalar>> reps, std::span<const int> labels, const ContrastiveConfig& cfg) {
  if (reps.size() != labels.size()) throw ShapeError("supcon: reps and labels differ in length");
  return supcon_loss(stack(reps), labels, cfg);
}

}  // namespace fewshot
