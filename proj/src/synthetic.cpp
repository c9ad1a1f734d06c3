#include "fewshot/synthetic.hpp"

#include <json.hpp>

#include <cstdio>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace fewshot {

void SynthSpec::validate() const {
  if (classes < 2) throw std::invalid_argument("synth: need at least 2 classes");
  if (instances_per_class < 1) throw std::invalid_argument("synth: instances per class must be >= 1");
  if (vocab_size < 1) throw std::invalid_argument("synth: background vocabulary must be non-empty");
  if (keywords_per_class < 1) throw std::invalid_argument("synth: keywords per class must be >= 1");
  if (!(injection_rate >= 0.0 && injection_rate <= 1.0)) throw std::invalid_argument("synth: injection rate in [0, 1]");
  if (min_length < 1 || max_length < min_length) throw std::invalid_argument("synth: invalid text length range");
}

std::string synth_background_token(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "w%04d", index);
  return buf;
}

std::string synth_keyword(int class_index, int keyword_index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "c%02dk%02d", class_index, keyword_index);
  return buf;
}

Dataset generate_synthetic(const SynthSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> length(spec.min_length, spec.max_length);
  std::uniform_int_distribution<int> background(0, spec.vocab_size - 1);
  std::uniform_int_distribution<int> keyword(0, spec.keywords_per_class - 1);
  std::bernoulli_distribution inject(spec.injection_rate);

  std::ostringstream jsonl;
  for (int c = 0; c < spec.classes; ++c) {
    char opaque[32];
    std::snprintf(opaque, sizeof(opaque), "class%02d", c);
    const std::string name = spec.label_informative ? synth_keyword(c, 0) : std::string(opaque);
    for (int i = 0; i < spec.instances_per_class; ++i) {
      std::string text;
      const int n = length(rng);
      for (int t = 0; t < n; ++t) {
        if (t > 0) text += ' ';
        text += inject(rng) ? synth_keyword(c, keyword(rng)) : synth_background_token(background(rng));
      }
      jsonl << nlohmann::json{{"text", text}, {"label", name}}.dump() << '\n';
    }
  }
  std::istringstream in(jsonl.str());
  return parse_dataset(in);
}

SplitAssignment split_by_class_order(const Dataset& dataset, int train, int valid) {
  const int total = static_cast<int>(dataset.class_names.size());
  if (train < 1 || valid < 0 || train + valid > total) throw std::invalid_argument("split_by_class_order: bad counts");
  SplitAssignment s;
  for (int c = 0; c < total; ++c) {
    auto& target = c < train ? s.train : c < train + valid ? s.valid : s.test;
    target.push_back(dataset.class_names[static_cast<std::size_t>(c)]);
  }
  return s;
}

void write_jsonl(std::ostream& out, const Dataset& dataset) {
  for (const auto& inst : dataset.instances) {
    out << nlohmann::json{{"text", inst.text}, {"label", inst.class_name}}.dump() << '\n';
  }
}

}  // namespace fewshot
