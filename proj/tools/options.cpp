#include "options.hpp"

#include "fewshot/contrastive.hpp"
#include "fewshot/protonet.hpp"

#include <charconv>
#include <fstream>
#include <stdexcept>

namespace cli {

using nlohmann::json;

void add_global_options(CLI::App& app, GlobalOptions& o) {
  app.option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.add_option("--seed", o.seed, "Seed for initialization, episode sampling and evaluation");
  app.add_option("--config", o.config, "JSON file of flag settings (keys are flag names; explicit flags win)");
  app.add_option("--data", o.data, "Dataset, JSON lines with \"text\" and \"label\"");
  app.add_option("--splits", o.splits, "Class split file {\"train\":[...],\"valid\":[...],\"test\":[...]}");
  app.add_option("--out-dir", o.out_dir, "Output directory");
  app.add_option("--embeddings", o.embeddings, "Fixed-embedding file (FSEB); replaces the token encoder input");
  app.add_option("--template", o.template_text, "Label template stem");
  app.add_option("--template-position", o.template_position, "Where the label sentence goes relative to the text")
      ->check(CLI::IsMember({"after", "before"}));
  app.add_option("--distance", o.distance, "Query-prototype distance")
      ->check(CLI::IsMember({"euclidean", "sqeuclidean", "cosine"}));
  app.add_option("--attention-mode", o.attention_mode, "Attention scores per query or summed over all queries")
      ->check(CLI::IsMember({"per-query", "aggregated"}));
  app.add_option("--supcon-form", o.supcon_form, "Supervised contrastive loss variant")
      ->check(CLI::IsMember({"out", "in"}));
  app.add_option("--tau", o.tau, "Contrastive temperature")->check(CLI::PositiveNumber);
  app.add_option("--rho-schedule", o.rho_schedule, "Multi-task weight: linear (0 to 1) or constant:<value>");
  app.add_option("--n-way", o.n_way, "Classes per episode")->check(CLI::Range(2, 1 << 20));
  app.add_option("--k-shot", o.k_shot, "Support instances per class")->check(CLI::PositiveNumber);
  app.add_option("--m-query", o.m_query, "Query instances per class")->check(CLI::PositiveNumber);
  app.add_option("--lr", o.lr, "Adam learning rate")->check(CLI::PositiveNumber);
  app.add_option("--max-iters", o.max_iters, "Training iterations")->check(CLI::PositiveNumber);
  app.add_option("--eval-every", o.eval_every, "Iterations between validation runs")->check(CLI::PositiveNumber);
  app.add_option("--patience", o.patience, "Validation runs without improvement before stopping")
      ->check(CLI::PositiveNumber);
  app.add_option("--episodes", o.episodes, "Evaluation episodes")->check(CLI::PositiveNumber);
  app.add_option("--val-episodes", o.val_episodes, "Episodes per validation run (0: same as --episodes)")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--dim", o.dim, "Representation width d")->check(CLI::Range(2, 1 << 16));
  app.add_option("--max-seq-len", o.max_seq_len, "Tokens kept per text")->check(CLI::PositiveNumber);
  app.add_option("--min-freq", o.min_freq, "Minimum token count for the vocabulary")->check(CLI::PositiveNumber);
  app.add_option("--vocab-scope", o.vocab_scope, "Texts that feed the vocabulary")
      ->check(CLI::IsMember({"train", "all"}));
  app.add_flag("--no-attention", o.no_attention, "Plain class-mean prototypes [default: off]");
  app.add_flag("--no-contrastive", o.no_contrastive, "Drop the contrastive task [default: off]");
  app.add_flag("--no-template", o.no_template, "Leave support texts untemplated [default: off]");
}

fewshot::TrainConfig to_train_config(const GlobalOptions& o) {
  using namespace fewshot;
  TrainConfig cfg;
  cfg.seed = o.seed;
  cfg.learning_rate = o.lr;
  cfg.max_iterations = o.max_iters;
  cfg.eval_every = o.eval_every;
  cfg.patience = o.patience;
  cfg.episodes_per_eval = o.val_episodes > 0 ? o.val_episodes : o.episodes;
  cfg.rho = RhoSchedule::parse(o.rho_schedule);
  cfg.episode.n_way = o.n_way;
  cfg.episode.k_shot = o.k_shot;
  cfg.episode.m_query = o.m_query;
  cfg.episode.seed = o.seed;
  cfg.template_on = !o.no_template;
  cfg.label_template.text = o.template_text;
  cfg.label_template.position = parse_template_position(o.template_position);
  cfg.model.dim = o.dim;
  cfg.model.distance = parse_distance(o.distance);
  cfg.model.attention_mode = parse_attention_mode(o.attention_mode);
  cfg.model.contrastive.tau = o.tau;
  cfg.model.contrastive.form = parse_supcon_form(o.supcon_form);
  cfg.model.attention_on = !o.no_attention;
  cfg.model.contrastive_on = !o.no_contrastive;
  cfg.min_frequency = o.min_freq;
  cfg.vocab_scope = parse_vocab_scope(o.vocab_scope);
  cfg.max_sequence_length = o.max_seq_len;
  cfg.validate();
  return cfg;
}

std::vector<std::string> config_tokens(const json& config) {
  if (!config.is_object()) throw std::runtime_error("config: top level must be a JSON object");
  std::vector<std::string> tokens;
  for (const auto& [key, value] : config.items()) {
    if (key == "config") throw std::runtime_error("config: files cannot name another config");
    const std::string flag = "--" + key;
    if (value.is_boolean()) {
      if (value.get<bool>()) tokens.push_back(flag);
    } else if (value.is_string()) {
      tokens.push_back(flag);
      tokens.push_back(value.get<std::string>());
    } else if (value.is_number()) {
      tokens.push_back(flag);
      tokens.push_back(value.dump());
    } else {
      throw std::runtime_error("config: value of '" + key + "' must be a string, number or boolean");
    }
  }
  return tokens;
}

std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  std::string path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
    }
  }
  if (path.empty() || args.size() < 2) return args;
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  json config;
  try {
    config = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error("config " + path + ": " + e.what());
  }
  const auto tokens = config_tokens(config);
  args.insert(args.begin() + 2, tokens.begin(), tokens.end());
  return args;
}

namespace {

json typed(const std::string& s) {
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (s.empty()) return s;
  if (std::uint64_t u = 0; std::from_chars(first, last, u).ptr == last) return u;
  if (std::int64_t i = 0; std::from_chars(first, last, i).ptr == last) return i;
  if (double d = 0; std::from_chars(first, last, d).ptr == last) return d;
  return s;
}

}  // namespace

json resolved_options(const CLI::App& app) {
  json out = json::object();
  for (const CLI::Option* opt : app.get_options()) {
    if (opt->get_lnames().empty()) continue;
    const std::string name = opt->get_lnames().front();
    if (name == "help" || name == "config") continue;
    if (opt->get_expected_min() == 0) {
      out[name] = opt->count() > 0;
    } else if (opt->count() > 0) {
      out[name] = typed(opt->results().back());
    } else {
      out[name] = typed(opt->get_default_str());
    }
  }
  return out;
}

}  // namespace cli
