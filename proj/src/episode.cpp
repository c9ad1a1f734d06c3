#include "fewshot/episode.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace fewshot {

void EpisodeSpec::validate() const {
  if (n_way < 2) throw std::invalid_argument("episode spec: n_way must be >= 2");
  if (k_shot < 1) throw std::invalid_argument("episode spec: k_shot must be >= 1");
  if (m_query < 1) throw std::invalid_argument("episode spec: m_query must be >= 1");
}

std::vector<QueryInput> Episode::query_inputs() const {
  std::vector<QueryInput> out;
  out.reserve(query.size());
  for (const auto& q : query) out.push_back(q.input);
  return out;
}

std::vector<int> Episode::query_labels() const {
  std::vector<int> out;
  out.reserve(query.size());
  for (const auto& q : query) out.push_back(q.local_label);
  return out;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(base) ^ stream) ^ index);
}

EpisodeSampler::EpisodeSampler(const Dataset& dataset, const SplitAssignment& splits)
    : dataset_(&dataset), splits_(&splits), rows_by_class_(dataset.class_names.size()) {
  for (const auto& inst : dataset.instances) {
    rows_by_class_[static_cast<std::size_t>(inst.class_id)].push_back(inst.row_index);
  }
}

namespace {

// Moves `count` uniformly chosen elements to the front (partial Fisher-Yates).
template <typename T>
void choose_prefix(std::vector<T>& items, std::size_t count, std::mt19937_64& rng) {
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, items.size() - 1);
    std::swap(items[i], items[pick(rng)]);
  }
}

void require_classes(Split split, std::size_t have, std::size_t n) {
  if (have < n) {
    throw std::runtime_error(std::string(to_string(split)) + " split has " + std::to_string(have) +
                             " classes, episode needs " + std::to_string(n) + " (short by " + std::to_string(n - have) +
                             ")");
  }
}

void require_rows(const std::string& name, std::size_t have, std::size_t per_class) {
  if (have < per_class) {
    throw std::runtime_error("class '" + name + "' has " + std::to_string(have) + " instances, episode needs " +
                             std::to_string(per_class) + " (short by " + std::to_string(per_class - have) + ")");
  }
}

}  // namespace

void EpisodeSampler::check_feasible(Split split, const EpisodeSpec& spec) const {
  spec.validate();
  const auto& classes = splits_->classes(split);
  require_classes(split, classes.size(), static_cast<std::size_t>(spec.n_way));
  const auto per_class = static_cast<std::size_t>(spec.k_shot + spec.m_query);
  for (const auto& name : classes) {
    require_rows(name, rows_by_class_[static_cast<std::size_t>(dataset_->class_id(name))].size(), per_class);
  }
}

Episode EpisodeSampler::sample(Split split, const EpisodeSpec& spec, const std::optional<LabelTemplate>& tmpl,
                               std::mt19937_64& rng) const {
  spec.validate();
  std::vector<std::string> classes = splits_->classes(split);
  const auto n = static_cast<std::size_t>(spec.n_way);
  require_classes(split, classes.size(), n);
  choose_prefix(classes, n, rng);
  const auto per_class = static_cast<std::size_t>(spec.k_shot + spec.m_query);

  Episode ep;
  ep.k_shot = spec.k_shot;
  ep.m_query = spec.m_query;
  ep.class_map.assign(classes.begin(), classes.begin() + static_cast<std::ptrdiff_t>(n));
  for (std::size_t c = 0; c < n; ++c) {
    const int id = dataset_->class_id(ep.class_map[c]);
    std::vector<std::size_t> rows = rows_by_class_[static_cast<std::size_t>(id)];
    require_rows(ep.class_map[c], rows.size(), per_class);
    choose_prefix(rows, per_class, rng);
    const int label = static_cast<int>(c);
    for (std::size_t i = 0; i < static_cast<std::size_t>(spec.k_shot); ++i) {
      const auto& inst = dataset_->instances[rows[i]];
      ep.support.push_back(SupportEntry{tmpl ? apply_template(*tmpl, inst.class_name, inst.text) : inst.text, label,
                                        inst.class_name, inst.row_index});
    }
    for (std::size_t i = static_cast<std::size_t>(spec.k_shot); i < per_class; ++i) {
      const auto& inst = dataset_->instances[rows[i]];
      ep.query.push_back(QueryEntry{QueryInput{inst.text, inst.row_index}, label});
    }
  }
  return ep;
}

Episode sample_episode(const Dataset& dataset, const SplitAssignment& splits, Split split, const EpisodeSpec& spec,
                       const std::optional<LabelTemplate>& tmpl, std::mt19937_64& rng) {
  return EpisodeSampler(dataset, splits).sample(split, spec, tmpl, rng);
}

std::vector<std::string> episode_violations(const Episode& ep, const Dataset& dataset, const SplitAssignment& splits,
                                            Split split, const std::optional<LabelTemplate>& tmpl) {
  std::vector<std::string> v;
  const int n = ep.n_way();
  std::vector<int> support_count(static_cast<std::size_t>(n), 0), query_count(static_cast<std::size_t>(n), 0);
  std::set<std::size_t> support_rows;
  const auto& allowed = splits.classes(split);
  auto in_split = [&](const std::string& name) {
    return std::find(allowed.begin(), allowed.end(), name) != allowed.end();
  };
  for (const auto& name : ep.class_map) {
    if (!in_split(name)) v.push_back("class '" + name + "' not in split");
  }
  for (const auto& s : ep.support) {
    if (s.local_label < 0 || s.local_label >= n) {
      v.push_back("support label out of range");
      continue;
    }
    ++support_count[static_cast<std::size_t>(s.local_label)];
    support_rows.insert(s.row_index);
    const auto& inst = dataset.instances.at(s.row_index);
    if (inst.class_name != ep.class_map[static_cast<std::size_t>(s.local_label)]) v.push_back("support label mismatch");
    if (tmpl) {
      const std::string label_sentence = tmpl->render(inst.class_name);
      const bool placed = tmpl->position == TemplatePosition::After
                              ? s.text.size() >= label_sentence.size() &&
                                    s.text.compare(s.text.size() - label_sentence.size(), std::string::npos,
                                                   label_sentence) == 0
                              : s.text.rfind(label_sentence, 0) == 0;
      if (!placed) v.push_back("support text missing its template");
    } else if (s.text != inst.text) {
      v.push_back("support text modified with templating off");
    }
  }
  for (const auto& q : ep.query) {
    if (q.local_label < 0 || q.local_label >= n) {
      v.push_back("query label out of range");
      continue;
    }
    ++query_count[static_cast<std::size_t>(q.local_label)];
    if (support_rows.contains(q.input.row_index)) v.push_back("query row also in support");
    const auto& inst = dataset.instances.at(q.input.row_index);
    if (inst.class_name != ep.class_map[static_cast<std::size_t>(q.local_label)]) v.push_back("query label mismatch");
    if (q.input.text != inst.text) v.push_back("query text modified");
    if (tmpl && q.input.text.find(tmpl->text) != std::string::npos && inst.text.find(tmpl->text) == std::string::npos) {
      v.push_back("query text contains template");
    }
  }
  if (support_rows.size() != ep.support.size()) v.push_back("duplicate support rows");
  std::set<std::size_t> query_rows;
  for (const auto& q : ep.query) query_rows.insert(q.input.row_index);
  if (query_rows.size() != ep.query.size()) v.push_back("duplicate query rows");
  for (int c = 0; c < n; ++c) {
    if (support_count[static_cast<std::size_t>(c)] != ep.k_shot) v.push_back("unbalanced support");
    if (query_count[static_cast<std::size_t>(c)] != ep.m_query) v.push_back("unbalanced query");
  }
  return v;
}

}  // namespace fewshot
