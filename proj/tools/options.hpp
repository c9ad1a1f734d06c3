#pragma once

#include "fewshot/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace cli {

// Flags shared by every command.
struct GlobalOptions {
  std::uint64_t seed = 0;
  std::string config;
  std::string data;
  std::string splits;
  std::string out_dir = "out";
  std::string embeddings;
  std::string template_text{fewshot::kDefaultTemplate};
  std::string template_position = "after";
  std::string distance = "euclidean";
  std::string attention_mode = "per-query";
  std::string supcon_form = "out";
  double tau = 5.0;
  std::string rho_schedule = "linear";
  int n_way = 5;
  int k_shot = 1;
  int m_query = 5;
  double lr = 1e-3;
  std::int64_t max_iters = 10000;
  std::int64_t eval_every = 100;
  int patience = 3;
  int episodes = 1000;
  int val_episodes = 0;  // 0: same as --episodes
  int dim = 64;
  std::size_t max_seq_len = fewshot::kDefaultMaxSequenceLength;
  int min_freq = 1;
  std::string vocab_scope = "all";
  bool no_attention = false;
  bool no_contrastive = false;
  bool no_template = false;
};

void add_global_options(CLI::App& app, GlobalOptions& o);

fewshot::TrainConfig to_train_config(const GlobalOptions& o);

// Finds --config in argv and splices the file's settings in as flag tokens
// right after the command name, so explicit flags (parsed later, last value
// wins) override the file.
std::vector<std::string> expand_config(int argc, char** argv);

// One "--key value" sequence per JSON member. Booleans become bare flags when
// true and vanish when false.
std::vector<std::string> config_tokens(const nlohmann::json& config);

// Every option of `app` with its effective value, keyed by flag name.
nlohmann::json resolved_options(const CLI::App& app);

}  // namespace cli
