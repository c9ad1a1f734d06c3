#pragma once

#include "fewshot/trainer.hpp"

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

namespace fewshot {

struct AblationToggle {
  std::string_view id;
  bool attention;
  bool contrastive;
  bool label_template;
};

// Component combinations compared in the ablation table.
inline constexpr std::array<AblationToggle, 6> kAblationRows{{
    {"none", false, false, false},
    {"lt", false, false, true},
    {"cl", false, true, false},
    {"at", true, false, false},
    {"at_cl", true, true, false},
    {"at_cl_lt", true, true, true},
}};

struct AblationRow {
  AblationToggle toggle;
  Metrics one_shot;
  Metrics five_shot;
};

struct AblationOptions {
  int test_episodes = 1000;
  std::vector<int> shots{1, 5};
};

TrainConfig apply_toggle(TrainConfig cfg, const AblationToggle& toggle, int k_shot);

// Trains and tests one model per (row, shot). Every run shares the seed, so
// all rows see the same training episodes and the same test episodes.
std::vector<AblationRow> run_ablation(const TrainConfig& base, const Dataset& dataset, const SplitAssignment& splits,
                                      const AblationOptions& options,
                                      const std::optional<FixedEmbeddingTable>& fixed = std::nullopt);

// row id, at, cl, lt, acc_1shot, f1_1shot, acc_5shot, f1_5shot
void write_ablation_csv(std::ostream& out, std::span<const AblationRow> rows);

// Per-episode accuracy differences of every row against the "none" row.
void write_paired_differences_csv(std::ostream& out, std::span<const AblationRow> rows);

struct PairedDifference {
  double mean = 0;
  double std = 0;
  int episodes = 0;
};
PairedDifference paired_difference(const Metrics& treatment, const Metrics& baseline);

struct EmbeddingRow {
  std::size_t row_index = 0;
  std::string class_name;
  Vector<float> values;
};

// Representations of `count` untemplated instances sampled from the split.
// With `classes` > 0 the instances come from that many randomly chosen
// classes of the split.
std::vector<EmbeddingRow> dump_embeddings(const TrainedModel& model, const Dataset& dataset,
                                          const SplitAssignment& splits, Split split, int count, std::uint64_t seed,
                                          int classes = 0);

void write_embeddings_csv(std::ostream& out, std::span<const EmbeddingRow> rows);

Featurizer make_featurizer(const TrainConfig& cfg, const Dataset& dataset, const SplitAssignment& splits,
                           const std::optional<FixedEmbeddingTable>& fixed);

}  // namespace fewshot
