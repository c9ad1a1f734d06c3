#include <doctest.h>
#include <json.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

const fs::path& workdir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "fewshot_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

Run fewshot(const std::string& args) {
  const auto out = workdir() / "stdout.txt";
  const auto err = workdir() / "stderr.txt";
  const std::string cmd = "cd '" + workdir().string() + "' && '" FEWSHOT_CLI "' " + args + " > '" + out.string() +
                          "' 2> '" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::size_t lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

// 16 synthetic classes split 6/5/5 so every split supports 5-way episodes.
const std::string kData = "--data data/synthetic.jsonl --splits data/splits.json";
const std::string kSmall = " --dim 8 --max-iters 20 --eval-every 10 --episodes 5 ";

void ensure_data() {
  if (fs::exists(workdir() / "data" / "splits.json")) return;
  const auto r = fewshot("synth --out-dir data --classes 16 --train-classes 6 --valid-classes 5 --seed 4");
  REQUIRE(r.code == 0);
}

}  // namespace

TEST_CASE("help lists every global flag with its default for each command") {
  const char* flags[] = {"--seed",        "--config",       "--data",        "--splits",   "--out-dir",
                         "--embeddings",  "--template",     "--template-position", "--distance", "--attention-mode",
                         "--supcon-form", "--tau",          "--rho-schedule", "--n-way",    "--k-shot",
                         "--m-query",     "--lr",           "--max-iters",   "--eval-every", "--patience",
                         "--episodes",    "--dim",          "--no-attention", "--no-contrastive", "--no-template",
                         "--vocab-scope", "--max-seq-len"};
  for (const char* command : {"train", "eval", "gradcheck", "ablate", "synth", "dump-embeddings"}) {
    CAPTURE(command);
    const auto r = fewshot(std::string(command) + " --help");
    CHECK(r.code == 0);
    for (const char* flag : flags) {
      CAPTURE(flag);
      CHECK(r.out.find(std::string(flag) + " ") != std::string::npos);
    }
    CHECK(r.out.find("[10000]") != std::string::npos);
    CHECK(r.out.find("[1000]") != std::string::npos);
    CHECK(r.out.find("[256]") != std::string::npos);
    CHECK(r.out.find("--tau FLOAT:POSITIVE [5]") != std::string::npos);
    CHECK(r.out.find("--patience INT:POSITIVE [3]") != std::string::npos);
    CHECK(r.out.find("[Overall, the topic of the text is]") != std::string::npos);
  }
}

TEST_CASE("synth writes 720 lines for 12 classes, byte-identically per seed") {
  auto a = fewshot("synth --classes 12 --out-dir s1 --seed 9");
  REQUIRE(a.code == 0);
  auto b = fewshot("synth --classes 12 --out-dir s2 --seed 9");
  REQUIRE(b.code == 0);
  const auto text = slurp(workdir() / "s1" / "synthetic.jsonl");
  CHECK(lines(text) == 720);
  CHECK(text == slurp(workdir() / "s2" / "synthetic.jsonl"));
  const auto splits = nlohmann::json::parse(slurp(workdir() / "s1" / "splits.json"));
  CHECK(splits["train"].size() == 8);
  CHECK(splits["valid"].size() == 2);
  CHECK(splits["test"].size() == 2);
}

TEST_CASE("train emits checkpoint, history, vocabulary and manifest; runs are byte-deterministic") {
  ensure_data();
  const auto a = fewshot("train " + kData + kSmall + "--out-dir t1 --seed 5");
  REQUIRE(a.code == 0);
  const auto b = fewshot("train " + kData + kSmall + "--out-dir t2 --seed 5");
  REQUIRE(b.code == 0);
  for (const char* f : {"model.fsck", "history.csv", "vocab.tsv", "config.json", "train.manifest.json"}) {
    CAPTURE(f);
    CHECK(fs::exists(workdir() / "t1" / f));
  }
  CHECK(slurp(workdir() / "t1" / "history.csv") == slurp(workdir() / "t2" / "history.csv"));
  CHECK(slurp(workdir() / "t1" / "model.fsck") == slurp(workdir() / "t2" / "model.fsck"));
  CHECK(lines(slurp(workdir() / "t1" / "history.csv")) == 21);

  const auto m = nlohmann::json::parse(slurp(workdir() / "t1" / "train.manifest.json"));
  CHECK(m["command"] == "train");
  CHECK(m["config"]["n-way"] == 5);
  CHECK(m["config"]["k-shot"] == 1);
  CHECK(m["config"]["max-iters"] == 20);
  CHECK(m["config"]["patience"] == 3);
  CHECK(m["config"]["no-attention"] == false);
  CHECK(m["dataset"]["samples"] == 960);
  CHECK(m["dataset"]["classes"] == 16);
  CHECK(m["vocab_size"].get<int>() > 0);
  CHECK(m["inputs"]["data"]["git_sha1"].get<std::string>().size() == 40);
  CHECK(m["inputs"]["splits"]["git_sha1"].get<std::string>().size() == 40);
  CHECK(m.contains("started_at"));
  CHECK(m.contains("finished_at"));

  const auto c = fewshot("train " + kData + kSmall + "--out-dir t3 --seed 6");
  REQUIRE(c.code == 0);
  CHECK(slurp(workdir() / "t1" / "history.csv") != slurp(workdir() / "t3" / "history.csv"));
}

TEST_CASE("config file settings apply and explicit flags override them") {
  ensure_data();
  {
    std::ofstream cfg(workdir() / "cfg.json");
    cfg << R"({"data": "data/synthetic.jsonl", "splits": "data/splits.json", "dim": 8, "max-iters": 10,
               "eval-every": 5, "episodes": 4, "no-template": true, "out-dir": "c1"})";
  }
  auto r = fewshot("train --config cfg.json");
  REQUIRE(r.code == 0);
  CHECK(lines(slurp(workdir() / "c1" / "history.csv")) == 11);
  r = fewshot("train --config cfg.json --max-iters 15 --out-dir c2");
  REQUIRE(r.code == 0);
  CHECK(lines(slurp(workdir() / "c2" / "history.csv")) == 16);
  const auto resolved = nlohmann::json::parse(slurp(workdir() / "c2" / "config.json"));
  CHECK(resolved["max-iters"] == 15);
  CHECK(resolved["no-template"] == true);
  CHECK(resolved["dim"] == 8);

  // The resolved config reproduces the run.
  r = fewshot("train --config c2/config.json --out-dir c3");
  REQUIRE(r.code == 0);
  CHECK(slurp(workdir() / "c2" / "history.csv") == slurp(workdir() / "c3" / "history.csv"));

  std::ofstream(workdir() / "bad_key.json") << R"({"no-such-flag": 1})";
  CHECK(fewshot("train --config bad_key.json").code != 0);
  std::ofstream(workdir() / "bad_json.json") << "{";
  CHECK(fewshot("train --config bad_json.json").code != 0);
}

TEST_CASE("invalid split file exits 2 naming the class") {
  ensure_data();
  std::ofstream(workdir() / "bad_splits.json") << R"({"train": ["c00k00"], "valid": ["nonexistent"], "test": []})";
  const auto r = fewshot("train --data data/synthetic.jsonl --splits bad_splits.json --out-dir bad");
  CHECK(r.code == 2);
  CHECK(r.err.find("nonexistent") != std::string::npos);
  CHECK_FALSE(fs::exists(workdir() / "bad" / "model.fsck"));

  const auto missing = fewshot("train --data data/synthetic.jsonl --splits absent.json");
  CHECK(missing.code == 2);
  CHECK(fewshot("train --splits data/splits.json").code != 0);
  CHECK(fewshot("train --n-way 1").code == 2);
  CHECK(fewshot("train --distance manhattan").code == 2);
}

TEST_CASE("eval prints a table and CSV, honors --episodes, and repeats exactly") {
  ensure_data();
  REQUIRE(fewshot("train " + kData + kSmall + "--out-dir e1").code == 0);
  const auto a = fewshot("eval " + kData + " --out-dir e1 --episodes 10");
  REQUIRE(a.code == 0);
  const auto b = fewshot("eval " + kData + " --out-dir e1 --episodes 10");
  CHECK(a.out == b.out);
  CHECK(a.out.find("split  episodes") == 0);
  CHECK(a.out.find("\nsplit,episodes,n_way,k_shot,accuracy,accuracy_std,macro_f1,macro_f1_std\ntest,10,5,1,") !=
        std::string::npos);
  CHECK(slurp(workdir() / "e1" / "eval.csv").find("test,10,") != std::string::npos);

  CHECK(fewshot("eval " + kData + " --out-dir nowhere").code != 0);
  CHECK(fewshot("eval " + kData + " --out-dir e1 --dim 16").code != 0);
  std::ofstream(workdir() / "short_vocab.tsv") << "<pad>\t0\n<unk>\t1\n";
  CHECK(fewshot("eval " + kData + " --out-dir e1 --vocab short_vocab.tsv").code != 0);
}

TEST_CASE("gradcheck passes, lists components, and fails under an injected sign flip") {
  const auto ok = fewshot("gradcheck");
  CHECK(ok.code == 0);
  for (const char* component : {"encoder", "projection", "supcon.out", "supcon.in", "attention",
                                "classifier.euclidean", "combined.per-query", "combined.aggregated"}) {
    CAPTURE(component);
    CHECK(ok.out.find(std::string("\n") + component + " ") != std::string::npos);
  }
  CHECK(ok.out.find("FAIL") == std::string::npos);

  const auto flipped = fewshot("gradcheck --inject-sign-flip tanh");
  CHECK(flipped.code == 1);
  CHECK(flipped.out.find("FAIL") != std::string::npos);
  CHECK(fewshot("gradcheck --inject-sign-flip nonsense").code == 1);
}

TEST_CASE("ablate writes a six-row CSV") {
  ensure_data();
  const auto r = fewshot("ablate " + kData + " --dim 8 --max-iters 4 --eval-every 2 --episodes 3 --shots 1 --out-dir ab");
  REQUIRE(r.code == 0);
  const auto csv = slurp(workdir() / "ab" / "ablation.csv");
  CHECK(lines(csv) == 7);
  CHECK(csv.rfind("row,at,cl,lt,acc_1shot,f1_1shot,acc_5shot,f1_5shot\n", 0) == 0);
  CHECK(fs::exists(workdir() / "ab" / "paired_differences.csv"));
  CHECK(fewshot("ablate " + kData + " --shots 2").code != 0);
}

TEST_CASE("dump-embeddings --count 100 writes 100 rows") {
  ensure_data();
  REQUIRE(fewshot("train " + kData + kSmall + "--out-dir d1").code == 0);
  const auto r = fewshot("dump-embeddings " + kData + " --out-dir d1 --count 100");
  REQUIRE(r.code == 0);
  const auto csv = slurp(workdir() / "d1" / "embeddings.csv");
  CHECK(lines(csv) == 101);
  CHECK(csv.rfind("row_index,class_name,e0,", 0) == 0);
  CHECK(csv.find(",e7\n") != std::string::npos);
}
