#pragma once

#include "fewshot/encoder.hpp"
#include "fewshot/episode.hpp"
#include "fewshot/model.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace fewshot {

// rho = step / max_iterations.
double rho_schedule(std::int64_t step, std::int64_t max_iterations);

// "linear" (default) or "constant:<value>".
struct RhoSchedule {
  bool linear = true;
  double constant = 0;

  static RhoSchedule parse(std::string_view spec);
  std::string str() const;
  double at(std::int64_t step, std::int64_t max_iterations) const;
};

double combined_loss(double l_pn, double l_con, double rho);

class NonFiniteGradient : public std::runtime_error {
 public:
  NonFiniteGradient(std::int64_t iteration, std::string parameter)
      : std::runtime_error("non-finite gradient in '" + parameter + "' at iteration " + std::to_string(iteration)),
        iteration_(iteration),
        parameter_(std::move(parameter)) {}
  std::int64_t iteration() const { return iteration_; }
  const std::string& parameter() const { return parameter_; }

 private:
  std::int64_t iteration_;
  std::string parameter_;
};

template <typename Scalar>
struct OptimizerState {
  std::vector<Tensor<Scalar>> first_moment;
  std::vector<Tensor<Scalar>> second_moment;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Bias-corrected Adam over parallel lists of parameters and gradients. Every
// gradient is checked before anything is modified, so a rejected step leaves
// params and state untouched.
template <typename Scalar>
void adam_step(std::span<Tensor<Scalar>* const> params, std::span<const Tensor<Scalar>* const> grads,
               OptimizerState<Scalar>& state, double lr, std::span<const std::string_view> names = {},
               std::int64_t iteration = -1) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam_step: params/grads length mismatch");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i]->rows() != params[i]->rows() || grads[i]->cols() != params[i]->cols()) {
      throw ShapeError("adam_step: gradient shape does not match parameter");
    }
    if (!grads[i]->allFinite()) {
      throw NonFiniteGradient(iteration, i < names.size() ? std::string(names[i]) : "#" + std::to_string(i));
    }
  }
  if (state.first_moment.empty()) {
    for (auto* p : params) {
      state.first_moment.push_back(Tensor<Scalar>::Zero(p->rows(), p->cols()));
      state.second_moment.push_back(Tensor<Scalar>::Zero(p->rows(), p->cols()));
    }
  }
  ++state.step;
  const auto b1 = static_cast<Scalar>(state.beta1), b2 = static_cast<Scalar>(state.beta2);
  const auto c1 = static_cast<Scalar>(1.0 - std::pow(state.beta1, static_cast<double>(state.step)));
  const auto c2 = static_cast<Scalar>(1.0 - std::pow(state.beta2, static_cast<double>(state.step)));
  const auto rate = static_cast<Scalar>(lr), eps = static_cast<Scalar>(state.epsilon);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    const auto& g = *grads[i];
    m = b1 * m + (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g.cwiseProduct(g);
    params[i]->array() -= rate * (m.array() / c1) / ((v.array() / c2).unaryExpr([](Scalar s) { return std::sqrt(s); }) + eps);
  }
}

template <typename Scalar>
void adam_step(ModelParams<Scalar>& params, const ModelParams<Scalar>& grads, OptimizerState<Scalar>& state, double lr,
               std::int64_t iteration = -1) {
  auto p = params.tensors();
  auto g = grads.tensors();
  adam_step<Scalar>(std::span<Tensor<Scalar>* const>(p), std::span<const Tensor<Scalar>* const>(g), state, lr,
                    std::span<const std::string_view>(kParameterNames), iteration);
}

enum class VocabScope {
  Train,  // texts of training-split classes only
  All,    // texts of every row (unlabeled); class names still train-only
};

VocabScope parse_vocab_scope(std::string_view s);
std::string_view to_string(VocabScope v);

struct TrainConfig {
  double learning_rate = 1e-3;
  std::int64_t max_iterations = 10000;
  std::int64_t eval_every = 100;
  int patience = 3;
  int episodes_per_eval = 1000;
  RhoSchedule rho;
  EpisodeSpec episode;
  std::uint64_t seed = 0;
  bool template_on = true;
  LabelTemplate label_template;
  ModelConfig model;
  int min_frequency = 1;
  VocabScope vocab_scope = VocabScope::All;
  std::size_t max_sequence_length = kDefaultMaxSequenceLength;

  void validate() const;
  std::optional<LabelTemplate> active_template() const {
    return template_on ? std::optional<LabelTemplate>(label_template) : std::nullopt;
  }
};

// Vocabulary for the token path: tokens of the configured corpus plus the
// template stem and the training class names, so support templates never
// map to the unknown id.
Vocabulary build_training_vocabulary(const TrainConfig& cfg, const Dataset& dataset, const SplitAssignment& splits);

struct LossReport {
  std::int64_t iteration = 0;
  double l_pn = 0;
  double l_con = 0;
  double rho = 0;
  double loss = 0;
  double train_accuracy = 0;
  int clamped = 0;
};

struct Metrics {
  double accuracy = 0;
  double accuracy_std = 0;
  double macro_f1 = 0;
  double macro_f1_std = 0;
  int episodes = 0;
  std::vector<double> episode_accuracy;
  std::vector<double> episode_f1;
};

struct EpisodeResult {
  double accuracy = 0;
  double macro_f1 = 0;
};

// Accuracy over queries and the unweighted mean of per-class F1 over the
// episode's N classes.
EpisodeResult score_predictions(std::span<const int> predictions, std::span<const int> labels, int n_way);

Metrics summarize(std::vector<double> accuracy, std::vector<double> f1);

struct HistoryRow {
  LossReport report;
  std::optional<double> val_accuracy;
  std::optional<double> val_f1;
};

void write_history_csv(std::ostream& out, std::span<const HistoryRow> history);

struct TrainedModel {
  ModelParams<float> params;
  Featurizer features;
  ModelConfig config;
};

// Seed streams for derive_seed.
inline constexpr std::uint64_t kInitStream = 0x1001;
inline constexpr std::uint64_t kTrainStream = 0x2002;
std::uint64_t eval_stream(Split split);

// Average metrics over `episodes` episodes; episode e draws from a generator
// seeded with derive_seed(seed, eval_stream(split), e).
Metrics evaluate(const TrainedModel& model, const EpisodeSampler& sampler, Split split, int episodes,
                 const EpisodeSpec& spec, const std::optional<LabelTemplate>& tmpl);

struct TrainResult {
  ModelParams<float> best_params;
  ModelParams<float> final_params;
  std::vector<HistoryRow> history;
  std::int64_t best_iteration = 0;
  double best_val_accuracy = -1;
  std::int64_t iterations_run = 0;
  bool early_stopped = false;
};

struct TrainHooks {
  std::function<void(const ModelParams<float>&, std::int64_t iteration, double val_accuracy)> on_best;
  std::function<void(const HistoryRow&)> on_row;
};

// Episodic training: sample a train episode, compute the combined loss with
// rho(iteration), backprop, Adam step; evaluate on the validation split every
// eval_every iterations and keep the best-accuracy parameters (earliest wins
// ties); stop after `patience` evaluations without improvement.
TrainResult train(const TrainConfig& cfg, const Dataset& dataset, const SplitAssignment& splits,
                  const Featurizer& features, const TrainHooks& hooks = {});

}  // namespace fewshot
