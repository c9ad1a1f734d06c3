#pragma once

// One episode through the full model: encode support (templated) and query
// (raw) texts, build attention-weighted prototypes, classify queries and
// form the multi-task objective.

#include "fewshot/contrastive.hpp"
#include "fewshot/encoder.hpp"
#include "fewshot/episode.hpp"
#include "fewshot/protonet.hpp"

#include <span>
#include <vector>

namespace fewshot {

struct ModelConfig {
  Eigen::Index dim = 64;
  Distance distance = Distance::Euclidean;
  AttentionMode attention_mode = AttentionMode::PerQuery;
  ContrastiveConfig contrastive;
  bool attention_on = true;
  bool contrastive_on = true;
};

template <typename Scalar>
struct EpisodeScores {
  std::vector<Var<Scalar>> support_reps;   // episode support order
  std::vector<Var<Scalar>> query_reps;
  std::vector<Var<Scalar>> probabilities;  // one N-vector per query
  std::vector<int> predictions;
};

// Label-free classification of queries against a support set. Per-query
// attention builds prototypes from the single query being scored; aggregated
// attention sums scores over every query and shares one prototype set.
template <typename Scalar>
EpisodeScores<Scalar> score_episode(const ModelVars<Scalar>& vars, const Featurizer& features, const ModelConfig& cfg,
                                    std::span<const SupportEntry> support, int n_way,
                                    std::span<const QueryInput> queries) {
  EpisodeScores<Scalar> out;
  std::vector<std::vector<int>> members(static_cast<std::size_t>(n_way));
  for (std::size_t i = 0; i < support.size(); ++i) {
    out.support_reps.push_back(features.represent(vars.encoder, support[i].text, support[i].row_index));
    members.at(static_cast<std::size_t>(support[i].local_label)).push_back(static_cast<int>(i));
  }
  for (const auto& q : queries) out.query_reps.push_back(features.represent(vars.encoder, q.text, q.row_index));

  auto class_reps = [&](int c) {
    std::vector<Var<Scalar>> reps;
    for (int i : members[static_cast<std::size_t>(c)]) reps.push_back(out.support_reps[static_cast<std::size_t>(i)]);
    return reps;
  };

  std::vector<Var<Scalar>> projected_support, projected_query;
  if (cfg.attention_on) {
    for (const auto& v : out.support_reps) projected_support.push_back(project(vars.projection, v));
    for (const auto& v : out.query_reps) projected_query.push_back(project(vars.projection, v));
  }
  auto scores_for = [&](int c, std::span<const Var<Scalar>> projected_queries) {
    std::vector<Var<Scalar>> scores;
    for (int i : members[static_cast<std::size_t>(c)]) {
      Var<Scalar> total;
      for (const auto& pq : projected_queries) {
        Var<Scalar> s = attention_score_projected(projected_support[static_cast<std::size_t>(i)], pq);
        total = total.valid() ? total + s : s;
      }
      scores.push_back(total);
    }
    return scores;
  };
  auto build_prototypes = [&](std::span<const Var<Scalar>> projected_queries) {
    std::vector<Var<Scalar>> protos;
    for (int c = 0; c < n_way; ++c) {
      const auto reps = class_reps(c);
      if (reps.empty()) throw std::invalid_argument("score_episode: class without support instances");
      if (cfg.attention_on) {
        const auto scores = scores_for(c, projected_queries);
        protos.push_back(prototype<Scalar>(reps, scores));
      } else {
        protos.push_back(mean_prototype<Scalar>(reps));
      }
    }
    return protos;
  };

  std::vector<Var<Scalar>> shared;
  if (cfg.attention_mode == AttentionMode::Aggregated || !cfg.attention_on) {
    shared = build_prototypes(projected_query);
  }
  for (std::size_t q = 0; q < out.query_reps.size(); ++q) {
    const auto protos = shared.empty() ? build_prototypes(std::span<const Var<Scalar>>(&projected_query[q], 1)) : shared;
    Var<Scalar> probs = classify<Scalar>(out.query_reps[q], protos, cfg.distance);
    Eigen::Index best = 0;
    probs.value().col(0).maxCoeff(&best);
    out.predictions.push_back(static_cast<int>(best));
    out.probabilities.push_back(probs);
  }
  return out;
}

template <typename Scalar>
struct EpisodeLoss {
  Var<Scalar> loss;
  double l_pn = 0;
  double l_con = 0;
  double rho = 0;  // effective weight: 0 whenever the contrastive task is off
  double accuracy = 0;
  int clamped = 0;
};

// L = (1 - rho) L_pn + rho L_con. With the contrastive task off L = L_pn
// and L_con is neither computed nor reported.
template <typename Scalar>
EpisodeLoss<Scalar> episode_loss(const ModelVars<Scalar>& vars, const Featurizer& features, const ModelConfig& cfg,
                                 const Episode& episode, double rho) {
  const auto queries = episode.query_inputs();
  const auto labels = episode.query_labels();
  auto scored = score_episode<Scalar>(vars, features, cfg, episode.support, episode.n_way(), queries);

  EpisodeLoss<Scalar> out;
  auto proto = protonet_loss<Scalar>(scored.probabilities, labels);
  out.clamped = proto.clamped;
  out.l_pn = static_cast<double>(proto.loss.scalar());
  int correct = 0;
  for (std::size_t q = 0; q < labels.size(); ++q) correct += scored.predictions[q] == labels[q];
  out.accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());

  if (!cfg.contrastive_on) {
    out.loss = proto.loss;
    return out;
  }
  std::vector<Var<Scalar>> all = scored.support_reps;
  all.insert(all.end(), scored.query_reps.begin(), scored.query_reps.end());
  std::vector<int> all_labels;
  for (const auto& s : episode.support) all_labels.push_back(s.local_label);
  all_labels.insert(all_labels.end(), labels.begin(), labels.end());
  Var<Scalar> con = supcon_loss<Scalar>(std::span<const Var<Scalar>>(all), all_labels, cfg.contrastive);
  out.l_con = static_cast<double>(con.scalar());
  out.rho = rho;
  const auto r = static_cast<Scalar>(rho);
  out.loss = scale(proto.loss, Scalar(1) - r) + scale(con, r);
  return out;
}

}  // namespace fewshot
