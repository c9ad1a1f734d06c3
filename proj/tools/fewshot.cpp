// fewshot: train, evaluate and inspect label-template few-shot text classifiers.

#include "manifest.hpp"
#include "options.hpp"

#include "fewshot/ablation.hpp"
#include "fewshot/checkpoint.hpp"
#include "fewshot/format.hpp"
#include "fewshot/gradsuite.hpp"
#include "fewshot/synthetic.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace fewshot;
using nlohmann::json;

namespace {

struct EvalOptions {
  std::string checkpoint;
  std::string vocab;
  std::string split = "test";
};

struct GradcheckOptions {
  std::string inject_sign_flip;
  double eps = 1e-4;
  double tolerance = 1e-4;
};

struct AblateOptions {
  std::string shots = "1,5";
};

struct SynthOptions {
  SynthSpec spec;
  bool opaque_names = false;
  int train_classes = 8;
  int valid_classes = 2;
  std::string output;
  std::string splits_output;
};

struct DumpOptions {
  int count = 100;
  int classes = 0;
  std::string output;
};

struct Inputs {
  Dataset dataset;
  SplitAssignment splits;
  std::optional<FixedEmbeddingTable> fixed;
};

fs::path out_dir(const cli::GlobalOptions& g) {
  fs::path dir(g.out_dir);
  fs::create_directories(dir);
  return dir;
}

Inputs load_inputs(const cli::GlobalOptions& g, cli::Manifest& manifest) {
  if (g.data.empty()) throw std::runtime_error("--data is required");
  if (g.splits.empty()) throw std::runtime_error("--splits is required");
  Inputs in;
  in.dataset = load_dataset(g.data);
  manifest.set_dataset(g.data, in.dataset);
  in.splits = load_splits(g.splits, in.dataset);
  manifest.add_input("splits", g.splits);
  if (!g.embeddings.empty()) {
    in.fixed = load_fixed_embeddings(g.embeddings, in.dataset.instances.size());
    manifest.add_input("embeddings", g.embeddings);
  }
  if (!g.config.empty()) manifest.add_input("config", g.config);
  return in;
}

std::string csv_text(std::span<const HistoryRow> history) {
  std::ostringstream out;
  write_history_csv(out, history);
  return out.str();
}

// Checkpoint plus the featurizer it was trained with.
TrainedModel load_model(const cli::GlobalOptions& g, const EvalOptions& e, const CLI::App& cmd, TrainConfig cfg,
                        const Inputs& in, cli::Manifest& manifest) {
  const fs::path checkpoint = e.checkpoint.empty() ? fs::path(g.out_dir) / "model.fsck" : fs::path(e.checkpoint);
  ModelParams<float> params = load_checkpoint(checkpoint);
  manifest.add_input("checkpoint", checkpoint);

  Featurizer features;
  if (in.fixed) {
    features = Featurizer::fixed(*in.fixed);
  } else {
    const fs::path vocab_path = e.vocab.empty() ? checkpoint.parent_path() / "vocab.tsv" : fs::path(e.vocab);
    std::ifstream vin(vocab_path);
    if (!vin) throw std::runtime_error("cannot open vocabulary " + vocab_path.string());
    features = Featurizer::tokens(Vocabulary::load(vin), cfg.max_sequence_length);
    manifest.add_input("vocab", vocab_path);
  }
  const Eigen::Index dim = params.encoder.dim();
  if (cmd.count("--dim") > 0 && dim != cfg.model.dim) {
    throw std::runtime_error("checkpoint has d=" + std::to_string(dim) + " but --dim is " +
                             std::to_string(cfg.model.dim));
  }
  if (params.encoder.embedding.rows() != features.vocab_size()) {
    throw std::runtime_error("checkpoint embedding has " + std::to_string(params.encoder.embedding.rows()) +
                             " rows but the vocabulary has " + std::to_string(features.vocab_size()) + " tokens");
  }
  if (params.encoder.input_width() != features.input_width(dim)) {
    throw std::runtime_error("checkpoint input width " + std::to_string(params.encoder.input_width()) +
                             " does not match the featurizer (" + std::to_string(features.input_width(dim)) + ")");
  }
  cfg.model.dim = dim;
  manifest.doc()["vocab_size"] = features.vocab_size();
  return {std::move(params), std::move(features), cfg.model};
}

json metrics_json(const Metrics& m) {
  return {{"episodes", m.episodes},
          {"accuracy", m.accuracy},
          {"accuracy_std", m.accuracy_std},
          {"macro_f1", m.macro_f1},
          {"macro_f1_std", m.macro_f1_std}};
}

std::string fixed4(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(4) << v;
  return s.str();
}

// Left-aligned columns separated by two spaces.
void print_table(std::ostream& out, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& r : rows) {
    width.resize(std::max(width.size(), r.size()));
    for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
  }
  for (const auto& r : rows) {
    std::string line;
    for (std::size_t i = 0; i < r.size(); ++i) {
      line += r[i];
      if (i + 1 < r.size()) line += std::string(width[i] - r[i].size() + 2, ' ');
    }
    out << line << '\n';
  }
}

int cmd_train(const cli::GlobalOptions& g, const CLI::App& cmd) {
  const TrainConfig cfg = cli::to_train_config(g);
  const json resolved = cli::resolved_options(cmd);
  cli::Manifest manifest("train", resolved);
  const Inputs in = load_inputs(g, manifest);
  const EpisodeSampler sampler(in.dataset, in.splits);
  sampler.check_feasible(Split::Train, cfg.episode);
  sampler.check_feasible(Split::Valid, cfg.episode);
  const fs::path dir = out_dir(g);
  const Featurizer features = make_featurizer(cfg, in.dataset, in.splits, in.fixed);
  manifest.doc()["vocab_size"] = features.vocab_size();

  if (!features.fixed_mode()) {
    std::ostringstream vocab;
    features.vocabulary().save(vocab);
    cli::write_text_atomic(dir / "vocab.tsv", vocab.str());
    manifest.add_output(dir / "vocab.tsv");
  }
  cli::write_text_atomic(dir / "config.json", resolved.dump(2) + "\n");
  manifest.add_output(dir / "config.json");

  TrainHooks hooks;
  hooks.on_row = [](const HistoryRow& row) {
    if (!row.val_accuracy) return;
    std::cerr << "iter " << row.report.iteration << "  loss " << fixed4(row.report.loss) << "  rho "
              << fixed4(row.report.rho) << "  val_acc " << fixed4(*row.val_accuracy) << "  val_f1 "
              << fixed4(*row.val_f1) << '\n';
  };
  const TrainResult result = train(cfg, in.dataset, in.splits, features, hooks);

  save_checkpoint(dir / "model.fsck", result.best_params);
  manifest.add_output(dir / "model.fsck");
  cli::write_text_atomic(dir / "history.csv", csv_text(result.history));
  manifest.add_output(dir / "history.csv");

  manifest.result() = {{"iterations_run", result.iterations_run},
                       {"early_stopped", result.early_stopped},
                       {"best_iteration", result.best_iteration},
                       {"best_val_accuracy", result.best_val_accuracy}};
  manifest.write(dir / "train.manifest.json");

  std::cout << "iterations " << result.iterations_run << (result.early_stopped ? " (early stop)" : "")
            << ", best validation accuracy " << fixed4(result.best_val_accuracy) << " at iteration "
            << result.best_iteration << "\ncheckpoint " << (dir / "model.fsck").string() << '\n';
  return 0;
}

int cmd_eval(const cli::GlobalOptions& g, const EvalOptions& e, const CLI::App& cmd) {
  const TrainConfig cfg = cli::to_train_config(g);
  cli::Manifest manifest("eval", cli::resolved_options(cmd));
  const Inputs in = load_inputs(g, manifest);
  const TrainedModel model = load_model(g, e, cmd, cfg, in, manifest);
  const Split split = parse_split(e.split);
  const EpisodeSampler sampler(in.dataset, in.splits);
  EpisodeSpec spec = cfg.episode;
  spec.seed = cfg.seed;
  const Metrics m = evaluate(model, sampler, split, g.episodes, spec, cfg.active_template());

  const std::string name(to_string(split));
  print_table(std::cout, {{"split", "episodes", "n_way", "k_shot", "accuracy", "accuracy_std", "macro_f1", "macro_f1_std"},
                          {name, std::to_string(m.episodes), std::to_string(spec.n_way), std::to_string(spec.k_shot),
                           fixed4(m.accuracy), fixed4(m.accuracy_std), fixed4(m.macro_f1), fixed4(m.macro_f1_std)}});
  std::ostringstream csv;
  csv << "split,episodes,n_way,k_shot,accuracy,accuracy_std,macro_f1,macro_f1_std\n"
      << name << ',' << m.episodes << ',' << spec.n_way << ',' << spec.k_shot << ',' << format_number(m.accuracy)
      << ',' << format_number(m.accuracy_std) << ',' << format_number(m.macro_f1) << ','
      << format_number(m.macro_f1_std) << '\n';
  std::cout << '\n' << csv.str();

  const fs::path dir = out_dir(g);
  cli::write_text_atomic(dir / "eval.csv", csv.str());
  manifest.add_output(dir / "eval.csv");
  manifest.result() = metrics_json(m);
  manifest.write(dir / "eval.manifest.json");
  return 0;
}

int cmd_gradcheck(const cli::GlobalOptions& g, const GradcheckOptions& o) {
  GradientSuiteOptions opts;
  opts.seed = g.seed;
  opts.eps = o.eps;
  opts.tolerance = o.tolerance;
  opts.contrastive.tau = g.tau;
  opts.contrastive.form = parse_supcon_form(g.supcon_form);
  if (!o.inject_sign_flip.empty()) opts.tape.flip_adjoint = parse_primitive(o.inject_sign_flip);

  const auto start = std::chrono::steady_clock::now();
  const auto checks = run_gradient_suite(opts);
  const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;

  std::cout << "gradient check: N=" << opts.n_way << " K=" << opts.k_shot << " M=" << opts.m_query
            << " d=" << opts.dim << " eps=" << opts.eps << " tol=" << opts.tolerance << '\n';
  print_gradient_report(std::cout, checks);
  const bool ok = all_passed(checks);
  std::cout << checks.size() << " components, " << (ok ? "all passed" : "FAILED") << '\n';
  std::cerr << "elapsed " << std::fixed << std::setprecision(3) << elapsed.count() << " s\n";
  return ok ? 0 : 1;
}

std::vector<int> parse_shots(const std::string& s) {
  std::vector<int> shots;
  std::stringstream in(s);
  for (std::string item; std::getline(in, item, ',');) {
    int k = 0;
    const auto [end, ec] = std::from_chars(item.data(), item.data() + item.size(), k);
    if (ec != std::errc() || end != item.data() + item.size() || (k != 1 && k != 5)) {
      throw std::invalid_argument("--shots takes a comma list of 1 and/or 5, got '" + s + "'");
    }
    shots.push_back(k);
  }
  if (shots.empty()) throw std::invalid_argument("--shots is empty");
  return shots;
}

int cmd_ablate(const cli::GlobalOptions& g, const AblateOptions& o, const CLI::App& cmd) {
  const TrainConfig cfg = cli::to_train_config(g);
  cli::Manifest manifest("ablate", cli::resolved_options(cmd));
  const Inputs in = load_inputs(g, manifest);
  AblationOptions opts;
  opts.test_episodes = g.episodes;
  opts.shots = parse_shots(o.shots);
  const auto rows = run_ablation(cfg, in.dataset, in.splits, opts, in.fixed);

  std::vector<std::vector<std::string>> table{{"row", "at", "cl", "lt", "acc_1shot", "f1_1shot", "acc_5shot", "f1_5shot"}};
  json result = json::object();
  for (const auto& r : rows) {
    auto cell = [](const Metrics& m, double v) { return m.episodes > 0 ? fixed4(v) : std::string("-"); };
    table.push_back({std::string(r.toggle.id), r.toggle.attention ? "1" : "0", r.toggle.contrastive ? "1" : "0",
                     r.toggle.label_template ? "1" : "0", cell(r.one_shot, r.one_shot.accuracy),
                     cell(r.one_shot, r.one_shot.macro_f1), cell(r.five_shot, r.five_shot.accuracy),
                     cell(r.five_shot, r.five_shot.macro_f1)});
    json entry = json::object();
    if (r.one_shot.episodes > 0) entry["1shot"] = metrics_json(r.one_shot);
    if (r.five_shot.episodes > 0) entry["5shot"] = metrics_json(r.five_shot);
    result[std::string(r.toggle.id)] = entry;
  }
  print_table(std::cout, table);

  const fs::path dir = out_dir(g);
  std::ostringstream csv, diffs;
  write_ablation_csv(csv, rows);
  write_paired_differences_csv(diffs, rows);
  cli::write_text_atomic(dir / "ablation.csv", csv.str());
  cli::write_text_atomic(dir / "paired_differences.csv", diffs.str());
  manifest.add_output(dir / "ablation.csv");
  manifest.add_output(dir / "paired_differences.csv");
  manifest.result() = result;
  manifest.write(dir / "ablate.manifest.json");
  return 0;
}

int cmd_synth(const cli::GlobalOptions& g, SynthOptions o, const CLI::App& cmd) {
  o.spec.label_informative = !o.opaque_names;
  cli::Manifest manifest("synth", cli::resolved_options(cmd));
  const Dataset ds = generate_synthetic(o.spec, g.seed);
  const SplitAssignment splits = split_by_class_order(ds, o.train_classes, o.valid_classes);
  const fs::path dir = out_dir(g);
  const fs::path data = o.output.empty() ? dir / "synthetic.jsonl" : fs::path(o.output);
  const fs::path split_file = o.splits_output.empty() ? dir / "splits.json" : fs::path(o.splits_output);

  std::ostringstream text;
  write_jsonl(text, ds);
  cli::write_text_atomic(data, text.str());
  save_splits(split_file, splits);
  manifest.add_output(data);
  manifest.add_output(split_file);
  manifest.result() = {{"rows", ds.instances.size()},
                       {"classes", ds.class_names.size()},
                       {"data_git_sha1", cli::git_blob_sha1(text.str())}};
  manifest.write(dir / "synth.manifest.json");
  std::cout << "wrote " << ds.instances.size() << " rows (" << ds.class_names.size() << " classes) to "
            << data.string() << "\nsplits " << split_file.string() << '\n';
  return 0;
}

int cmd_dump(const cli::GlobalOptions& g, const EvalOptions& e, const DumpOptions& o, const CLI::App& cmd) {
  const TrainConfig cfg = cli::to_train_config(g);
  cli::Manifest manifest("dump-embeddings", cli::resolved_options(cmd));
  const Inputs in = load_inputs(g, manifest);
  const TrainedModel model = load_model(g, e, cmd, cfg, in, manifest);
  const auto rows = dump_embeddings(model, in.dataset, in.splits, parse_split(e.split), o.count, g.seed, o.classes);

  const fs::path dir = out_dir(g);
  const fs::path path = o.output.empty() ? dir / "embeddings.csv" : fs::path(o.output);
  std::ostringstream csv;
  write_embeddings_csv(csv, rows);
  cli::write_text_atomic(path, csv.str());
  manifest.add_output(path);
  manifest.result() = {{"rows", rows.size()}, {"dim", model.params.encoder.dim()}};
  manifest.write(dir / "dump-embeddings.manifest.json");
  std::cout << "wrote " << rows.size() << " embeddings to " << path.string() << '\n';
  return 0;
}

void add_model_inputs(CLI::App& cmd, EvalOptions& e) {
  cmd.add_option("--checkpoint", e.checkpoint, "Checkpoint to load (default: <out-dir>/model.fsck)");
  cmd.add_option("--vocab", e.vocab, "Vocabulary file (default: vocab.tsv next to the checkpoint)");
  cmd.add_option("--split", e.split, "Split to draw episodes or instances from")
      ->check(CLI::IsMember({"train", "valid", "test"}));
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args;
  try {
    args = cli::expand_config(argc, argv);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return 2;
  }

  CLI::App app{"Few-shot text classification with label templates, supervised contrastive learning and "
               "attention-weighted prototypes.",
               "fewshot"};
  app.require_subcommand(1);
  cli::GlobalOptions g;
  EvalOptions eval_opts;
  GradcheckOptions grad_opts;
  AblateOptions ablate_opts;
  SynthOptions synth_opts;
  DumpOptions dump_opts;

  auto* train_cmd = app.add_subcommand("train", "Train a model; writes model.fsck, history.csv and a manifest");
  auto* eval_cmd = app.add_subcommand("eval", "Average accuracy and macro-F1 of a checkpoint over test episodes");
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable component");
  auto* ablate_cmd = app.add_subcommand("ablate", "Train and test the six component combinations");
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic keyword dataset and a class split file");
  auto* dump_cmd = app.add_subcommand("dump-embeddings", "Write representations of sampled instances as CSV");
  for (auto* cmd : {train_cmd, eval_cmd, grad_cmd, ablate_cmd, synth_cmd, dump_cmd}) cli::add_global_options(*cmd, g);

  add_model_inputs(*eval_cmd, eval_opts);
  add_model_inputs(*dump_cmd, eval_opts);

  grad_cmd->add_option("--inject-sign-flip", grad_opts.inject_sign_flip,
                       "Test hook: negate the adjoint of this primitive (e.g. tanh)");
  grad_cmd->add_option("--eps", grad_opts.eps, "Central-difference step")->check(CLI::PositiveNumber);
  grad_cmd->add_option("--tolerance", grad_opts.tolerance, "Maximum relative error")->check(CLI::PositiveNumber);

  ablate_cmd->add_option("--shots", ablate_opts.shots, "Comma list of K values to run (1 and/or 5)");

  auto& s = synth_opts.spec;
  synth_cmd->add_option("--classes", s.classes, "Number of classes")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--instances", s.instances_per_class, "Instances per class")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--vocab-size", s.vocab_size, "Shared background tokens")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--keywords", s.keywords_per_class, "Keywords per class")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--injection", s.injection_rate, "Probability a position holds a class keyword")
      ->check(CLI::Range(0.0, 1.0));
  synth_cmd->add_option("--min-length", s.min_length, "Shortest text in tokens")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--max-length", s.max_length, "Longest text in tokens")->check(CLI::PositiveNumber);
  synth_cmd->add_flag("--opaque-names", synth_opts.opaque_names,
                      "Class names unrelated to the keywords [default: off]");
  synth_cmd->add_option("--train-classes", synth_opts.train_classes, "Classes in the train split (first in order)");
  synth_cmd->add_option("--valid-classes", synth_opts.valid_classes, "Classes in the valid split (next in order)");
  synth_cmd->add_option("--output", synth_opts.output, "Dataset path (default: <out-dir>/synthetic.jsonl)");
  synth_cmd->add_option("--splits-output", synth_opts.splits_output, "Split file path (default: <out-dir>/splits.json)");

  dump_cmd->add_option("--count", dump_opts.count, "Instances to embed")->check(CLI::PositiveNumber);
  dump_cmd->add_option("--classes", dump_opts.classes, "Restrict to this many random classes (0: all)")
      ->check(CLI::NonNegativeNumber);
  dump_cmd->add_option("--output", dump_opts.output, "CSV path (default: <out-dir>/embeddings.csv)");

  std::vector<char*> raw;
  for (auto& a : args) raw.push_back(a.data());
  try {
    app.parse(static_cast<int>(raw.size()), raw.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*train_cmd) return cmd_train(g, *train_cmd);
    if (*eval_cmd) return cmd_eval(g, eval_opts, *eval_cmd);
    if (*grad_cmd) return cmd_gradcheck(g, grad_opts);
    if (*ablate_cmd) return cmd_ablate(g, ablate_opts, *ablate_cmd);
    if (*synth_cmd) return cmd_synth(g, synth_opts, *synth_cmd);
    if (*dump_cmd) return cmd_dump(g, eval_opts, dump_opts, *dump_cmd);
  } catch (const SplitError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
