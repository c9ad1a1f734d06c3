#include "fewshot/contrastive.hpp"

namespace fewshot {

ContrastiveIndexSets build_index_sets(std::span<const int> labels) {
  ContrastiveIndexSets sets;
  const auto n = static_cast<int>(labels.size());
  sets.anchors.resize(labels.size());
  sets.positives.resize(labels.size());
  for (int p = 0; p < n; ++p) {
    for (int t = 0; t < n; ++t) {
      if (t == p) continue;
      sets.anchors[static_cast<std::size_t>(p)].push_back(t);
      if (labels[static_cast<std::size_t>(t)] == labels[static_cast<std::size_t>(p)]) {
        sets.positives[static_cast<std::size_t>(p)].push_back(t);
      }
    }
  }
  return sets;
}

SupConForm parse_supcon_form(std::string_view s) {
  if (s == "out") return SupConForm::Out;
  if (s == "in") return SupConForm::In;
  throw std::invalid_argument("supcon form must be 'out' or 'in'");
}

std::string_view to_string(SupConForm f) { return f == SupConForm::Out ? "out" : "in"; }

}  // namespace fewshot
