#include "fewshot/protonet.hpp"

namespace fewshot {

Distance parse_distance(std::string_view s) {
  if (s == "euclidean") return Distance::Euclidean;
  if (s == "sqeuclidean") return Distance::SquaredEuclidean;
  if (s == "cosine") return Distance::Cosine;
  throw std::invalid_argument("distance must be one of euclidean|sqeuclidean|cosine");
}

std::string_view to_string(Distance d) {
  switch (d) {
    case Distance::Euclidean: return "euclidean";
    case Distance::SquaredEuclidean: return "sqeuclidean";
    case Distance::Cosine: return "cosine";
  }
  return "?";
}

AttentionMode parse_attention_mode(std::string_view s) {
  if (s == "per-query") return AttentionMode::PerQuery;
  if (s == "aggregated") return AttentionMode::Aggregated;
  throw std::invalid_argument("attention mode must be 'per-query' or 'aggregated'");
}

std::string_view to_string(AttentionMode m) { return m == AttentionMode::PerQuery ? "per-query" : "aggregated"; }

}  // namespace fewshot
