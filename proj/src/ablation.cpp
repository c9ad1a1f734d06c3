#include "fewshot/ablation.hpp"

#include "fewshot/format.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <set>

namespace fewshot {

Featurizer make_featurizer(const TrainConfig& cfg, const Dataset& dataset, const SplitAssignment& splits,
                           const std::optional<FixedEmbeddingTable>& fixed) {
  if (fixed) return Featurizer::fixed(*fixed);
  return Featurizer::tokens(build_training_vocabulary(cfg, dataset, splits), cfg.max_sequence_length);
}

TrainConfig apply_toggle(TrainConfig cfg, const AblationToggle& toggle, int k_shot) {
  cfg.model.attention_on = toggle.attention;
  cfg.model.contrastive_on = toggle.contrastive;
  cfg.template_on = toggle.label_template;
  cfg.episode.k_shot = k_shot;
  return cfg;
}

std::vector<AblationRow> run_ablation(const TrainConfig& base, const Dataset& dataset, const SplitAssignment& splits,
                                      const AblationOptions& options, const std::optional<FixedEmbeddingTable>& fixed) {
  const Featurizer features = make_featurizer(base, dataset, splits, fixed);
  const EpisodeSampler sampler(dataset, splits);
  for (int shots : options.shots) {
    const TrainConfig cfg = apply_toggle(base, kAblationRows.front(), shots);
    for (Split split : {Split::Train, Split::Valid, Split::Test}) sampler.check_feasible(split, cfg.episode);
  }
  std::vector<AblationRow> rows;
  for (const auto& toggle : kAblationRows) {
    AblationRow row{toggle, {}, {}};
    for (int shots : options.shots) {
      const TrainConfig cfg = apply_toggle(base, toggle, shots);
      const TrainResult trained = train(cfg, dataset, splits, features);
      const TrainedModel model{trained.best_params, features, cfg.model};
      EpisodeSpec spec = cfg.episode;
      spec.seed = cfg.seed;
      Metrics m = evaluate(model, sampler, Split::Test, options.test_episodes, spec, cfg.active_template());
      (shots == 1 ? row.one_shot : row.five_shot) = std::move(m);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_ablation_csv(std::ostream& out, std::span<const AblationRow> rows) {
  out << "row,at,cl,lt,acc_1shot,f1_1shot,acc_5shot,f1_5shot\n";
  auto cell = [](const Metrics& m, double v) { return m.episodes > 0 ? format_number(v) : std::string(); };
  for (const auto& r : rows) {
    out << r.toggle.id << ',' << r.toggle.attention << ',' << r.toggle.contrastive << ',' << r.toggle.label_template
        << ',' << cell(r.one_shot, r.one_shot.accuracy) << ',' << cell(r.one_shot, r.one_shot.macro_f1) << ','
        << cell(r.five_shot, r.five_shot.accuracy) << ',' << cell(r.five_shot, r.five_shot.macro_f1) << '\n';
  }
}

PairedDifference paired_difference(const Metrics& treatment, const Metrics& baseline) {
  if (treatment.episode_accuracy.size() != baseline.episode_accuracy.size()) {
    throw std::invalid_argument("paired_difference: episode counts differ");
  }
  PairedDifference d;
  d.episodes = static_cast<int>(treatment.episode_accuracy.size());
  if (d.episodes == 0) return d;
  std::vector<double> diff;
  for (std::size_t i = 0; i < treatment.episode_accuracy.size(); ++i) {
    diff.push_back(treatment.episode_accuracy[i] - baseline.episode_accuracy[i]);
  }
  for (double x : diff) d.mean += x;
  d.mean /= d.episodes;
  for (double x : diff) d.std += (x - d.mean) * (x - d.mean);
  d.std = std::sqrt(d.std / d.episodes);
  return d;
}

void write_paired_differences_csv(std::ostream& out, std::span<const AblationRow> rows) {
  out << "row,shot,mean_diff_vs_none,std_diff,episodes\n";
  const auto none = std::find_if(rows.begin(), rows.end(), [](const auto& r) { return r.toggle.id == "none"; });
  if (none == rows.end()) return;
  for (const auto& r : rows) {
    for (int shot : {1, 5}) {
      const Metrics& t = shot == 1 ? r.one_shot : r.five_shot;
      const Metrics& b = shot == 1 ? none->one_shot : none->five_shot;
      if (t.episodes == 0) continue;
      const auto d = paired_difference(t, b);
      out << r.toggle.id << ',' << shot << ',' << format_number(d.mean) << ',' << format_number(d.std) << ','
          << d.episodes << '\n';
    }
  }
}

std::vector<EmbeddingRow> dump_embeddings(const TrainedModel& model, const Dataset& dataset,
                                          const SplitAssignment& splits, Split split, int count, std::uint64_t seed,
                                          int classes) {
  std::vector<std::string> names = splits.classes(split);
  std::mt19937_64 rng(seed);
  if (classes > 0) {
    if (classes > static_cast<int>(names.size())) throw std::invalid_argument("dump_embeddings: not enough classes in split");
    std::shuffle(names.begin(), names.end(), rng);
    names.resize(static_cast<std::size_t>(classes));
  }
  const std::set<std::string> chosen(names.begin(), names.end());
  std::vector<std::size_t> rows;
  for (const auto& inst : dataset.instances) {
    if (chosen.contains(inst.class_name)) rows.push_back(inst.row_index);
  }
  if (count < 0 || static_cast<std::size_t>(count) > rows.size()) {
    throw std::invalid_argument("dump_embeddings: count " + std::to_string(count) + " exceeds split population " +
                                std::to_string(rows.size()));
  }
  std::shuffle(rows.begin(), rows.end(), rng);
  rows.resize(static_cast<std::size_t>(count));

  std::vector<EmbeddingRow> out;
  Tape<float> tape;
  const auto vars = ModelVars<float>::bind(tape, model.params);
  for (std::size_t row : rows) {
    const auto& inst = dataset.instances[row];
    const auto rep = model.features.represent(vars.encoder, inst.text, inst.row_index);
    out.push_back(EmbeddingRow{row, inst.class_name, rep.value().col(0)});
  }
  return out;
}

void write_embeddings_csv(std::ostream& out, std::span<const EmbeddingRow> rows) {
  const Eigen::Index d = rows.empty() ? 0 : rows.front().values.size();
  out << "row_index,class_name";
  for (Eigen::Index i = 0; i < d; ++i) out << ",e" << i;
  out << '\n';
  for (const auto& r : rows) {
    std::string name = r.class_name;
    if (name.find_first_of(",\"\n") != std::string::npos) {
      std::string quoted = "\"";
      for (char ch : name) quoted += ch == '"' ? std::string("\"\"") : std::string(1, ch);
      name = quoted + "\"";
    }
    out << r.row_index << ',' << name;
    for (Eigen::Index i = 0; i < r.values.size(); ++i) out << ',' << format_number(r.values(i));
    out << '\n';
  }
}

}  // namespace fewshot
