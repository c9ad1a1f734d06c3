#include "fewshot/episode.hpp"
#include "fewshot/synthetic.hpp"

#include <doctest.h>

#include <set>
#include <sstream>

using namespace fewshot;

namespace {

Dataset toy(int classes, int per_class) {
  std::ostringstream out;
  for (int c = 0; c < classes; ++c) {
    for (int i = 0; i < per_class; ++i) out << R"({"text":"t)" << c << '_' << i << R"(","label":"c)" << c << "\"}\n";
  }
  std::istringstream in(out.str());
  return parse_dataset(in);
}

const LabelTemplate kTemplate;

}  // namespace

TEST_CASE("two-way one-shot episode over a minimal dataset uses every row") {
  const auto ds = toy(2, 2);
  const SplitAssignment splits{{"c0", "c1"}, {}, {}};
  std::mt19937_64 rng(1);
  const auto ep = sample_episode(ds, splits, Split::Train, {2, 1, 1, 0}, kTemplate, rng);
  CHECK(ep.support.size() == 2);
  CHECK(ep.query.size() == 2);
  std::set<std::size_t> rows;
  for (const auto& s : ep.support) rows.insert(s.row_index);
  for (const auto& q : ep.query) rows.insert(q.input.row_index);
  CHECK(rows.size() == 4);
  CHECK(episode_violations(ep, ds, splits, Split::Train, kTemplate).empty());
}

TEST_CASE("support is templated with its own class and queries are untouched") {
  const auto ds = toy(6, 10);
  const SplitAssignment splits{{"c0", "c1", "c2", "c3", "c4", "c5"}, {}, {}};
  std::mt19937_64 rng(5);
  const auto ep = sample_episode(ds, splits, Split::Train, {5, 2, 3, 0}, kTemplate, rng);
  for (const auto& s : ep.support) {
    CHECK(s.text == ds.instances[s.row_index].text + " Overall, the topic of the text is " + s.class_name);
    CHECK(s.class_name == ep.class_map[static_cast<std::size_t>(s.local_label)]);
  }
  for (const auto& q : ep.query) CHECK(q.input.text == ds.instances[q.input.row_index].text);
  CHECK(ep.query_labels().size() == 15);
  CHECK(ep.query_inputs().size() == 15);

  std::mt19937_64 rng2(5);
  const auto plain = sample_episode(ds, splits, Split::Train, {5, 2, 3, 0}, std::nullopt, rng2);
  for (const auto& s : plain.support) CHECK(s.text == ds.instances[s.row_index].text);
  CHECK(episode_violations(plain, ds, splits, Split::Train, std::nullopt).empty());
}

TEST_CASE("a class with exactly K+M instances is exhausted") {
  const auto ds = toy(5, 20);
  const SplitAssignment splits{{}, {}, {"c0", "c1", "c2", "c3", "c4"}};
  std::mt19937_64 rng(2);
  const auto ep = sample_episode(ds, splits, Split::Test, {5, 5, 15, 0}, kTemplate, rng);
  CHECK(ep.support.size() + ep.query.size() == 100);
  CHECK(episode_violations(ep, ds, splits, Split::Test, kTemplate).empty());
}

TEST_CASE("insufficient classes or instances state the deficit") {
  const auto ds = toy(4, 3);
  const SplitAssignment splits{{"c0", "c1"}, {"c2", "c3"}, {}};
  std::mt19937_64 rng(0);
  auto message = [&](Split split, EpisodeSpec spec) {
    try {
      sample_episode(ds, splits, split, spec, kTemplate, rng);
    } catch (const std::runtime_error& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message(Split::Valid, {5, 1, 1, 0}) == "valid split has 2 classes, episode needs 5 (short by 3)");
  CHECK(message(Split::Train, {2, 2, 2, 0}).find("has 3 instances, episode needs 4 (short by 1)") != std::string::npos);
  CHECK_THROWS_AS(sample_episode(ds, splits, Split::Train, {1, 1, 1, 0}, kTemplate, rng), std::invalid_argument);
  CHECK_THROWS_AS(sample_episode(ds, splits, Split::Train, {2, 0, 1, 0}, kTemplate, rng), std::invalid_argument);
  CHECK_THROWS_AS(sample_episode(ds, splits, Split::Train, {2, 1, 0, 0}, kTemplate, rng), std::invalid_argument);
}

TEST_CASE("feasibility check covers every class of the split up front") {
  std::ostringstream out;
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < (c == 2 ? 2 : 6); ++i) out << R"({"text":"x","label":"c)" << c << "\"}\n";
  }
  std::istringstream in(out.str());
  const auto ds = parse_dataset(in);
  const SplitAssignment splits{{"c0", "c1", "c2"}, {}, {}};
  const EpisodeSampler sampler(ds, splits);
  CHECK_NOTHROW(sampler.check_feasible(Split::Train, {2, 1, 1, 0}));
  CHECK_THROWS_WITH(sampler.check_feasible(Split::Train, {2, 1, 2, 0}),
                    "class 'c2' has 2 instances, episode needs 3 (short by 1)");
  CHECK_THROWS_WITH(sampler.check_feasible(Split::Valid, {2, 1, 1, 0}),
                    "valid split has 0 classes, episode needs 2 (short by 2)");
  CHECK_THROWS_AS(sampler.check_feasible(Split::Train, {1, 1, 1, 0}), std::invalid_argument);
}

TEST_CASE("sampling is reproducible per seed and varies across seeds") {
  const auto ds = generate_synthetic(SynthSpec{}, 3);
  const auto splits = split_by_class_order(ds, 6, 3);
  const EpisodeSampler sampler(ds, splits);
  auto rows = [&](std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const auto ep = sampler.sample(Split::Train, {}, kTemplate, rng);
    std::vector<std::size_t> r;
    for (const auto& s : ep.support) r.push_back(s.row_index);
    for (const auto& q : ep.query) r.push_back(q.input.row_index);
    return r;
  };
  CHECK(rows(17) == rows(17));
  int differing = 0;
  for (std::uint64_t s = 0; s < 20; ++s) differing += rows(s) != rows(s + 100);
  CHECK(differing == 20);
}

TEST_CASE("derive_seed separates streams and indices") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t stream : {1, 2, 3}) {
    for (std::uint64_t i = 0; i < 100; ++i) seen.insert(derive_seed(42, stream, i));
  }
  CHECK(seen.size() == 300);
  CHECK(derive_seed(42, 1, 7) == derive_seed(42, 1, 7));
  CHECK(derive_seed(42, 1, 7) != derive_seed(43, 1, 7));
}

TEST_CASE("violations are reported for corrupted episodes") {
  const auto ds = toy(4, 6);
  const SplitAssignment splits{{"c0", "c1", "c2"}, {"c3"}, {}};
  std::mt19937_64 rng(9);
  const auto good = sample_episode(ds, splits, Split::Train, {3, 2, 2, 0}, kTemplate, rng);
  REQUIRE(episode_violations(good, ds, splits, Split::Train, kTemplate).empty());

  auto has = [&](const Episode& ep, const std::string& what, Split split = Split::Train) {
    const auto v = episode_violations(ep, ds, splits, split, kTemplate);
    return std::find(v.begin(), v.end(), what) != v.end();
  };
  auto leak = good;
  leak.query[0].input.row_index = leak.support[0].row_index;
  leak.query[0].input.text = ds.instances[leak.support[0].row_index].text;
  CHECK(has(leak, "query row also in support"));

  auto untemplated = good;
  untemplated.support[1].text = ds.instances[untemplated.support[1].row_index].text;
  CHECK(has(untemplated, "support text missing its template"));

  auto templated_query = good;
  templated_query.query[0].input.text += " Overall, the topic of the text is c0";
  CHECK(has(templated_query, "query text modified"));
  CHECK(has(templated_query, "query text contains template"));

  auto unbalanced = good;
  unbalanced.query.pop_back();
  CHECK(has(unbalanced, "unbalanced query"));

  CHECK(has(good, "class 'c0' not in split", Split::Valid));
}
