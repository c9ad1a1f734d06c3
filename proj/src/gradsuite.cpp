#include "fewshot/gradsuite.hpp"

#include "fewshot/model.hpp"

#include <algorithm>
#include <iomanip>
#include <ostream>
#include <random>

namespace fewshot {

namespace {

using T = Tensor<double>;
using V = Var<double>;
using Leaves = std::span<const V>;

class Draw {
 public:
  explicit Draw(std::uint64_t seed) : rng_(seed) {}
  T normal(Eigen::Index rows, Eigen::Index cols, double sd = 1.0) {
    std::normal_distribution<double> dist(0.0, sd);
    T t(rows, cols);
    for (Eigen::Index i = 0; i < t.size(); ++i) t(i) = dist(rng_);
    return t;
  }
  std::mt19937_64& rng() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

// Contracts a vector output against a fixed random direction so every output
// coordinate contributes to the checked scalar.
V readout(const V& v, const T& direction) { return sum(cwise_product(v, v.tape()->constant(direction))); }

std::vector<V> columns(Leaves leaves, std::size_t first, std::size_t count) {
  return {leaves.begin() + static_cast<std::ptrdiff_t>(first),
          leaves.begin() + static_cast<std::ptrdiff_t>(first + count)};
}

Episode random_episode(const GradientSuiteOptions& o, std::mt19937_64& rng) {
  static const std::vector<std::string> pool{"alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel"};
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  std::uniform_int_distribution<int> length(2, 5);
  auto text = [&] {
    std::string s;
    for (int n = length(rng), i = 0; i < n; ++i) s += (i ? " " : "") + pool[pick(rng)];
    return s;
  };
  Episode ep;
  ep.k_shot = o.k_shot;
  ep.m_query = o.m_query;
  std::size_t row = 0;
  for (int c = 0; c < o.n_way; ++c) {
    ep.class_map.push_back(pool[static_cast<std::size_t>(c) % pool.size()]);
    for (int k = 0; k < o.k_shot; ++k) {
      ep.support.push_back({apply_template(LabelTemplate{}, ep.class_map.back(), text()), c, ep.class_map.back(), row++});
    }
  }
  for (int c = 0; c < o.n_way; ++c) {
    for (int m = 0; m < o.m_query; ++m) ep.query.push_back({{text(), row++}, c});
  }
  return ep;
}

Featurizer episode_featurizer(const Episode& ep) {
  std::vector<std::string> corpus;
  for (const auto& s : ep.support) corpus.push_back(s.text);
  for (const auto& q : ep.query) corpus.push_back(q.input.text);
  return Featurizer::tokens(Vocabulary::build(corpus, 1));
}

}  // namespace

std::vector<ComponentCheck> run_gradient_suite(const GradientSuiteOptions& o) {
  if (o.n_way < 2 || o.k_shot < 1 || o.m_query < 1 || o.dim < 2) {
    throw std::invalid_argument("gradient suite: need N >= 2, K >= 1, M >= 1, d >= 2");
  }
  Draw draw(o.seed);
  const Eigen::Index d = o.dim;
  const auto n = static_cast<std::size_t>(o.n_way);
  const auto k = static_cast<std::size_t>(o.k_shot);
  std::vector<ComponentCheck> out;
  auto check = [&](std::string component, auto&& f, const std::vector<NamedTensor>& params) {
    out.push_back({std::move(component),
                   check_gradients(f, std::span<const NamedTensor>(params), o.eps, o.tolerance, o.tape)});
  };

  const Episode episode = random_episode(o, draw.rng());
  const Featurizer features = episode_featurizer(episode);
  const auto init = init_model_params<double>(d, features.vocab_size(), d, draw.rng()());
  auto model_params = [&] {
    std::vector<NamedTensor> p;
    auto tensors = init.tensors();
    for (std::size_t i = 0; i < tensors.size(); ++i) p.push_back({std::string(kParameterNames[i]), *tensors[i]});
    p[2].value = draw.normal(d, 1, 0.1);
    p[4].value = draw.normal(d, 1, 0.1);
    p[6].value = draw.normal(d, 1, 0.1);
    return p;
  }();
  auto bind = [](Leaves l) { return ModelVars<double>{{l[0], l[1], l[2], l[3], l[4]}, {l[5], l[6]}}; };

  {
    const T direction = draw.normal(d, 1);
    std::vector<NamedTensor> params(model_params.begin(), model_params.begin() + 5);
    check("encoder", [&](Tape<double>&, Leaves l) {
      const EncoderVars<double> enc{l[0], l[1], l[2], l[3], l[4]};
      V total;
      for (const auto& s : episode.support) {
        V r = readout(features.represent(enc, s.text, s.row_index), direction);
        total = total.valid() ? total + r : r;
      }
      return total;
    }, params);
  }
  {
    const T direction = draw.normal(d, 1);
    check("projection", [&](Tape<double>&, Leaves l) {
      return readout(project(ProjectionVars<double>{l[0], l[1]}, l[2]), direction);
    }, {{"projection.weight", model_params[5].value}, {"projection.bias", model_params[6].value},
        {"input", draw.normal(d, 1)}});
  }
  {
    const int total = o.n_way * (o.k_shot + o.m_query);
    std::vector<int> labels;
    for (int i = 0; i < total; ++i) labels.push_back(i % o.n_way);
    const T reps = draw.normal(total, d);
    for (auto form : {SupConForm::Out, SupConForm::In}) {
      ContrastiveConfig cfg = o.contrastive;
      cfg.form = form;
      check("supcon." + std::string(to_string(form)), [&](Tape<double>&, Leaves l) {
        return supcon_loss<double>(l[0], labels, cfg);
      }, {{"reps", reps}});
    }
  }
  {
    const T direction = draw.normal(d, 1);
    std::vector<NamedTensor> params{{"projection.weight", model_params[5].value},
                                    {"projection.bias", model_params[6].value},
                                    {"query", draw.normal(d, 1)}};
    for (std::size_t i = 0; i < k; ++i) params.push_back({"support." + std::to_string(i), draw.normal(d, 1)});
    check("attention", [&](Tape<double>&, Leaves l) {
      const ProjectionVars<double> g{l[0], l[1]};
      const auto support = columns(l, 3, k);
      std::vector<V> scores;
      for (const auto& s : support) scores.push_back(attention_score(s, l[2], g));
      return readout(prototype<double>(support, scores), direction);
    }, params);
  }
  for (auto kind : {Distance::Euclidean, Distance::SquaredEuclidean, Distance::Cosine}) {
    std::vector<NamedTensor> params{{"query", draw.normal(d, 1)}};
    for (std::size_t c = 0; c < n; ++c) params.push_back({"prototype." + std::to_string(c), draw.normal(d, 1)});
    check("classifier." + std::string(to_string(kind)), [&](Tape<double>&, Leaves l) {
      const auto protos = columns(l, 1, n);
      const std::vector<V> probs{classify<double>(l[0], protos, kind)};
      const std::vector<int> label{1};
      return protonet_loss<double>(probs, label).loss;
    }, params);
  }
  for (auto mode : {AttentionMode::PerQuery, AttentionMode::Aggregated}) {
    ModelConfig cfg;
    cfg.dim = d;
    cfg.contrastive = o.contrastive;
    cfg.attention_mode = mode;
    check("combined." + std::string(to_string(mode)), [&](Tape<double>&, Leaves l) {
      return episode_loss<double>(bind(l), features, cfg, episode, 0.5).loss;
    }, model_params);
  }
  return out;
}

bool all_passed(const std::vector<ComponentCheck>& checks) {
  return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.report.passed(); });
}

void print_gradient_report(std::ostream& out, const std::vector<ComponentCheck>& checks) {
  std::size_t width = 0;
  for (const auto& c : checks) width = std::max(width, c.component.size());
  for (const auto& c : checks) {
    std::string worst_param = "-";
    double worst = -1;
    for (const auto& e : c.report.entries) {
      if (e.max_relative_error > worst) {
        worst = e.max_relative_error;
        worst_param = e.name;
      }
    }
    out << std::left << std::setw(static_cast<int>(width)) << c.component << "  "
        << (c.report.passed() ? "PASS" : "FAIL") << "  max_rel_err=" << std::scientific << std::setprecision(3)
        << c.report.worst() << std::defaultfloat << "  (" << worst_param << ")\n";
  }
}

}  // namespace fewshot
