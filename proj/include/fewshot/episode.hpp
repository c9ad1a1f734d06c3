#pragma once

#include "fewshot/dataset.hpp"
#include "fewshot/text.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace fewshot {

struct EpisodeSpec {
  int n_way = 5;
  int k_shot = 1;
  int m_query = 5;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SupportEntry {
  std::string text;  // templated unless templating is off
  int local_label = 0;
  std::string class_name;
  std::size_t row_index = 0;
};

// What the classifier sees of a query: no label.
struct QueryInput {
  std::string text;
  std::size_t row_index = 0;
};

struct QueryEntry {
  QueryInput input;
  int local_label = 0;
};

struct Episode {
  std::vector<SupportEntry> support;    // grouped by local label, K each
  std::vector<QueryEntry> query;        // grouped by local label, M each
  std::vector<std::string> class_map;   // local label -> class name
  int k_shot = 0;
  int m_query = 0;

  int n_way() const { return static_cast<int>(class_map.size()); }
  std::vector<QueryInput> query_inputs() const;
  std::vector<int> query_labels() const;
};

// splitmix64 mix of (base, stream, index); used for every derived RNG seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index);

class EpisodeSampler {
 public:
  EpisodeSampler(const Dataset& dataset, const SplitAssignment& splits);

  // N classes uniformly without replacement from the split, then K+M distinct
  // rows per class; the first K are templated into the support set.
  Episode sample(Split split, const EpisodeSpec& spec, const std::optional<LabelTemplate>& tmpl,
                 std::mt19937_64& rng) const;

  // Throws the error sample() would raise for any draw: too few classes in the
  // split, or a split class with fewer than K+M rows.
  void check_feasible(Split split, const EpisodeSpec& spec) const;

  const Dataset& dataset() const { return *dataset_; }
  const SplitAssignment& splits() const { return *splits_; }

 private:
  const Dataset* dataset_;
  const SplitAssignment* splits_;
  std::vector<std::vector<std::size_t>> rows_by_class_;  // by class id
};

Episode sample_episode(const Dataset& dataset, const SplitAssignment& splits, Split split, const EpisodeSpec& spec,
                       const std::optional<LabelTemplate>& tmpl, std::mt19937_64& rng);

// Empty when the episode satisfies every structural invariant: balance,
// support/query disjointness, split membership, support-only templating.
std::vector<std::string> episode_violations(const Episode& episode, const Dataset& dataset,
                                            const SplitAssignment& splits, Split split,
                                            const std::optional<LabelTemplate>& tmpl);

}  // namespace fewshot
