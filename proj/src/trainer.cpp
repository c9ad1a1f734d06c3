#include "fewshot/trainer.hpp"

#include "fewshot/format.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>
#include <set>

namespace fewshot {

double rho_schedule(std::int64_t step, std::int64_t max_iterations) {
  if (max_iterations <= 0) throw std::invalid_argument("rho_schedule: max_iterations must be positive");
  if (step < 0 || step > max_iterations) throw std::invalid_argument("rho_schedule: step outside [0, max_iterations]");
  return static_cast<double>(step) / static_cast<double>(max_iterations);
}

RhoSchedule RhoSchedule::parse(std::string_view spec) {
  RhoSchedule s;
  if (spec == "linear") return s;
  constexpr std::string_view prefix = "constant:";
  if (spec.starts_with(prefix)) {
    s.linear = false;
    s.constant = std::stod(std::string(spec.substr(prefix.size())));
    if (!(s.constant >= 0.0 && s.constant <= 1.0)) throw std::invalid_argument("rho constant must lie in [0, 1]");
    return s;
  }
  throw std::invalid_argument("rho schedule must be 'linear' or 'constant:<value>'");
}

std::string RhoSchedule::str() const { return linear ? "linear" : "constant:" + format_number(constant); }

double RhoSchedule::at(std::int64_t step, std::int64_t max_iterations) const {
  return linear ? rho_schedule(step, max_iterations) : constant;
}

double combined_loss(double l_pn, double l_con, double rho) { return (1.0 - rho) * l_pn + rho * l_con; }

VocabScope parse_vocab_scope(std::string_view s) {
  if (s == "train") return VocabScope::Train;
  if (s == "all") return VocabScope::All;
  throw std::invalid_argument("vocab scope must be 'train' or 'all'");
}

std::string_view to_string(VocabScope v) { return v == VocabScope::Train ? "train" : "all"; }

void TrainConfig::validate() const {
  episode.validate();
  if (!(learning_rate > 0)) throw std::invalid_argument("learning rate must be positive");
  if (max_iterations < 1) throw std::invalid_argument("max iterations must be >= 1");
  if (eval_every < 1 || eval_every > max_iterations) throw std::invalid_argument("eval_every must lie in [1, max_iterations]");
  if (patience < 1) throw std::invalid_argument("patience must be >= 1");
  if (episodes_per_eval < 1) throw std::invalid_argument("episodes per evaluation must be >= 1");
  if (!(model.contrastive.tau > 0)) throw std::invalid_argument("tau must be positive");
  if (model.dim < 2) throw std::invalid_argument("dim must be >= 2");
  if (min_frequency < 1) throw std::invalid_argument("min frequency must be >= 1");
}

Vocabulary build_training_vocabulary(const TrainConfig& cfg, const Dataset& dataset, const SplitAssignment& splits) {
  std::vector<std::string> corpus;
  if (cfg.vocab_scope == VocabScope::All) {
    corpus = dataset.texts();
  } else {
    const std::set<std::string> train(splits.train.begin(), splits.train.end());
    for (const auto& inst : dataset.instances) {
      if (train.contains(inst.class_name)) corpus.push_back(inst.text);
    }
  }
  std::vector<std::string> forced{cfg.label_template.text};
  forced.insert(forced.end(), splits.train.begin(), splits.train.end());
  return Vocabulary::build(corpus, cfg.min_frequency, forced);
}

EpisodeResult score_predictions(std::span<const int> predictions, std::span<const int> labels, int n_way) {
  if (predictions.size() != labels.size() || labels.empty()) {
    throw std::invalid_argument("score_predictions: one prediction per label required");
  }
  std::vector<int> tp(static_cast<std::size_t>(n_way)), fp(tp), fn(tp);
  int correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto y = static_cast<std::size_t>(labels[i]);
    const auto p = static_cast<std::size_t>(predictions[i]);
    if (p == y) {
      ++correct;
      ++tp[y];
    } else {
      ++fp[p];
      ++fn[y];
    }
  }
  double f1_total = 0;
  for (std::size_t c = 0; c < tp.size(); ++c) {
    const double denom = 2.0 * tp[c] + fp[c] + fn[c];
    f1_total += denom > 0 ? 2.0 * tp[c] / denom : 0.0;
  }
  return {static_cast<double>(correct) / static_cast<double>(labels.size()), f1_total / n_way};
}

Metrics summarize(std::vector<double> accuracy, std::vector<double> f1) {
  Metrics m;
  m.episodes = static_cast<int>(accuracy.size());
  auto mean_std = [](const std::vector<double>& v, double& mean, double& sd) {
    if (v.empty()) return;
    mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double sq = 0;
    for (double x : v) sq += (x - mean) * (x - mean);
    sd = std::sqrt(sq / static_cast<double>(v.size()));
  };
  mean_std(accuracy, m.accuracy, m.accuracy_std);
  mean_std(f1, m.macro_f1, m.macro_f1_std);
  m.episode_accuracy = std::move(accuracy);
  m.episode_f1 = std::move(f1);
  return m;
}

void write_history_csv(std::ostream& out, std::span<const HistoryRow> history) {
  out << "iteration,l_pn,l_con,rho,loss,train_acc,val_acc,val_f1\n";
  for (const auto& row : history) {
    const auto& r = row.report;
    out << r.iteration << ',' << format_number(r.l_pn) << ',' << format_number(r.l_con) << ','
        << format_number(r.rho) << ',' << format_number(r.loss) << ',' << format_number(r.train_accuracy) << ','
        << (row.val_accuracy ? format_number(*row.val_accuracy) : "") << ','
        << (row.val_f1 ? format_number(*row.val_f1) : "") << '\n';
  }
}

std::uint64_t eval_stream(Split split) {
  switch (split) {
    case Split::Train: return 0x3003;
    case Split::Valid: return 0x4004;
    case Split::Test: return 0x5005;
  }
  return 0;
}

Metrics evaluate(const TrainedModel& model, const EpisodeSampler& sampler, Split split, int episodes,
                 const EpisodeSpec& spec, const std::optional<LabelTemplate>& tmpl) {
  if (episodes < 1) throw std::invalid_argument("evaluate: episodes must be >= 1");
  sampler.check_feasible(split, spec);
  std::vector<double> accuracy, f1;
  accuracy.reserve(static_cast<std::size_t>(episodes));
  f1.reserve(static_cast<std::size_t>(episodes));
  for (int e = 0; e < episodes; ++e) {
    std::mt19937_64 rng(derive_seed(spec.seed, eval_stream(split), static_cast<std::uint64_t>(e)));
    const Episode episode = sampler.sample(split, spec, tmpl, rng);
    const auto queries = episode.query_inputs();
    std::vector<int> predictions;
    {
      Tape<float> tape;
      const auto vars = ModelVars<float>::bind(tape, model.params);
      predictions = score_episode<float>(vars, model.features, model.config, episode.support, episode.n_way(), queries)
                        .predictions;
    }
    const auto labels = episode.query_labels();
    const auto result = score_predictions(predictions, labels, episode.n_way());
    accuracy.push_back(result.accuracy);
    f1.push_back(result.macro_f1);
  }
  return summarize(std::move(accuracy), std::move(f1));
}

TrainResult train(const TrainConfig& cfg, const Dataset& dataset, const SplitAssignment& splits,
                  const Featurizer& features, const TrainHooks& hooks) {
  cfg.validate();
  const EpisodeSampler sampler(dataset, splits);
  sampler.check_feasible(Split::Train, cfg.episode);
  sampler.check_feasible(Split::Valid, cfg.episode);
  const auto tmpl = cfg.active_template();

  TrainedModel model{init_model_params<float>(cfg.model.dim, features.vocab_size(), features.input_width(cfg.model.dim),
                                              derive_seed(cfg.seed, kInitStream, 0)),
                     features, cfg.model};
  OptimizerState<float> optimizer;
  TrainResult result;
  result.best_params = model.params;
  int stale = 0;

  EpisodeSpec eval_spec = cfg.episode;
  eval_spec.seed = cfg.seed;

  for (std::int64_t it = 1; it <= cfg.max_iterations; ++it) {
    std::mt19937_64 rng(derive_seed(cfg.seed, kTrainStream, static_cast<std::uint64_t>(it)));
    const Episode episode = sampler.sample(Split::Train, cfg.episode, tmpl, rng);
    const double rho = cfg.rho.at(it, cfg.max_iterations);

    HistoryRow row;
    {
      Tape<float> tape;
      const auto vars = ModelVars<float>::bind(tape, model.params);
      const auto loss = episode_loss<float>(vars, features, cfg.model, episode, rho);
      tape.backward(loss.loss);
      const auto grads = vars.gradients(tape);
      adam_step(model.params, grads, optimizer, cfg.learning_rate, it);
      row.report = LossReport{it, loss.l_pn, loss.l_con, loss.rho, combined_loss(loss.l_pn, loss.l_con, loss.rho),
                              loss.accuracy, loss.clamped};
    }
    result.iterations_run = it;

    if (it % cfg.eval_every == 0) {
      const Metrics val = evaluate(model, sampler, Split::Valid, cfg.episodes_per_eval, eval_spec, tmpl);
      row.val_accuracy = val.accuracy;
      row.val_f1 = val.macro_f1;
      if (val.accuracy > result.best_val_accuracy) {
        result.best_val_accuracy = val.accuracy;
        result.best_iteration = it;
        result.best_params = model.params;
        stale = 0;
        if (hooks.on_best) hooks.on_best(model.params, it, val.accuracy);
      } else {
        ++stale;
      }
    }
    if (hooks.on_row) hooks.on_row(row);
    result.history.push_back(std::move(row));
    if (stale >= cfg.patience) {
      result.early_stopped = true;
      break;
    }
  }
  result.final_params = model.params;
  return result;
}

}  // namespace fewshot
