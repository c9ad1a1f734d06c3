#pragma once

#include "fewshot/dataset.hpp"

#include <cstdint>
#include <iosfwd>

namespace fewshot {

// Bag-of-token classes: background tokens drawn uniformly from a shared pool,
// each position replaced by one of the class's own keywords with probability
// `injection_rate`. Keyword sets are disjoint across classes.
struct SynthSpec {
  int classes = 12;
  int instances_per_class = 60;
  int vocab_size = 15;  // shared background tokens
  int keywords_per_class = 1;
  double injection_rate = 0.3;
  bool label_informative = true;  // class name = one of the class keywords
  int min_length = 11;
  int max_length = 17;

  void validate() const;
};

std::string synth_background_token(int index);
std::string synth_keyword(int class_index, int keyword_index);

// Rows grouped by class in class order.
Dataset generate_synthetic(const SynthSpec& spec, std::uint64_t seed);

// First `train` classes to train, next `valid` to valid, rest to test.
SplitAssignment split_by_class_order(const Dataset& dataset, int train, int valid);

void write_jsonl(std::ostream& out, const Dataset& dataset);

}  // namespace fewshot
