#pragma once

// Instance attention over support samples, attention-weighted prototypes,
// distance softmax and the prototype cross-entropy.

#include "fewshot/encoder.hpp"
#include "fewshot/tape.hpp"

#include <span>
#include <string_view>
#include <vector>

namespace fewshot {

enum class Distance { Euclidean, SquaredEuclidean, Cosine };
enum class AttentionMode { PerQuery, Aggregated };

Distance parse_distance(std::string_view s);
std::string_view to_string(Distance d);
AttentionMode parse_attention_mode(std::string_view s);
std::string_view to_string(AttentionMode m);

inline constexpr double kProbabilityFloor = 1e-12;

// sum(tanh(gs .* gq)) on already projected representations.
template <typename Scalar>
Var<Scalar> attention_score_projected(const Var<Scalar>& projected_support, const Var<Scalar>& projected_query) {
  return sum(tanh(cwise_product(projected_support, projected_query)));
}

template <typename Scalar>
Var<Scalar> attention_score(const Var<Scalar>& support_rep, const Var<Scalar>& query_rep, const ProjectionVars<Scalar>& g) {
  if (support_rep.rows() != query_rep.rows()) throw ShapeError("attention_score: width mismatch");
  return attention_score_projected(project(g, support_rep), project(g, query_rep));
}

// Softmax with max subtraction.
template <typename Scalar>
std::vector<Scalar> attention_weights(std::span<const Scalar> scores) {
  if (scores.empty()) throw std::invalid_argument("attention_weights: no scores");
  Tensor<Scalar> x(static_cast<Eigen::Index>(scores.size()), 1);
  for (std::size_t i = 0; i < scores.size(); ++i) x(static_cast<Eigen::Index>(i)) = scores[i];
  const Tensor<Scalar> y = softmax_values<Scalar>(x);
  return std::vector<Scalar>(y.data(), y.data() + y.size());
}

// w_c = sum_i softmax(scores)_i * support_i.
template <typename Scalar>
Var<Scalar> prototype(std::span<const Var<Scalar>> support_reps, std::span<const Var<Scalar>> scores) {
  return weighted_average(stack(scores), support_reps);
}

// Arithmetic-mean prototype (uniform weights).
template <typename Scalar>
Var<Scalar> mean_prototype(std::span<const Var<Scalar>> support_reps) {
  Tape<Scalar>& tape = *support_reps.front().tape();
  Var<Scalar> zeros = tape.constant(Tensor<Scalar>::Zero(static_cast<Eigen::Index>(support_reps.size()), 1));
  return weighted_average(zeros, support_reps);
}

template <typename Scalar>
Var<Scalar> distance(const Var<Scalar>& a, const Var<Scalar>& b, Distance kind) {
  switch (kind) {
    case Distance::Euclidean: return sqrt(squared_distance(a, b));
    case Distance::SquaredEuclidean: return squared_distance(a, b);
    case Distance::Cosine: {
      Tape<Scalar>& tape = *a.tape();
      return tape.constant(Tensor<Scalar>::Ones(1, 1)) - cosine_similarity(a, b);
    }
  }
  throw std::invalid_argument("unknown distance");
}

// P(c | query) = softmax_c(-d(query, w_c)).
template <typename Scalar>
Var<Scalar> classify(const Var<Scalar>& query_rep, std::span<const Var<Scalar>> prototypes, Distance kind) {
  std::vector<Var<Scalar>> negated;
  negated.reserve(prototypes.size());
  for (const auto& w : prototypes) {
    if (w.rows() != query_rep.rows()) throw ShapeError("classify: width mismatch");
    negated.push_back(-distance(query_rep, w, kind));
  }
  return softmax(stack(std::span<const Var<Scalar>>(negated)));
}

template <typename Scalar>
struct ProtoLoss {
  Var<Scalar> loss;
  int clamped = 0;  // queries whose true-class probability hit the floor
};

// L_pn = -sum_q log P(y_q | x_q), probabilities floored at 1e-12.
template <typename Scalar>
ProtoLoss<Scalar> protonet_loss(std::span<const Var<Scalar>> probabilities, std::span<const int> labels) {
  if (probabilities.size() != labels.size() || probabilities.empty()) {
    throw ShapeError("protonet_loss: one label per probability vector required");
  }
  Tape<Scalar>& tape = *probabilities.front().tape();
  const auto floor = static_cast<Scalar>(kProbabilityFloor);
  ProtoLoss<Scalar> out;
  std::vector<Var<Scalar>> terms;
  for (std::size_t q = 0; q < probabilities.size(); ++q) {
    Var<Scalar> p = element(probabilities[q], labels[q]);
    if (p.scalar() < floor) {
      ++out.clamped;
      terms.push_back(tape.constant(Tensor<Scalar>::Constant(1, 1, -std::log(floor))));
    } else {
      terms.push_back(-log(p));
    }
  }
  out.loss = sum(stack(std::span<const Var<Scalar>>(terms)));
  return out;
}

}  // namespace fewshot
