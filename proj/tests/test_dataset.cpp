#include "fewshot/dataset.hpp"

#include <doctest.h>

#include <filesystem>
#include <functional>
#include <limits>
#include <fstream>
#include <sstream>

using namespace fewshot;

namespace {

Dataset parse(const std::string& text) {
  std::istringstream in(text);
  return parse_dataset(in);
}

const char* kFourClasses =
    "{\"text\":\"a b\",\"label\":\"x\"}\n"
    "{\"text\":\"c\",\"label\":\"y\"}\n"
    "{\"text\":\"d e f\",\"label\":\"x\"}\n"
    "{\"text\":\"g\",\"label\":\"z\"}\n"
    "{\"text\":\"h\",\"label\":\"w\"}\n";

SplitAssignment splits_from(const std::string& json, const Dataset& ds) {
  std::istringstream in(json);
  return parse_splits(in, ds);
}

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("dataset lines load in file order with first-appearance class ids") {
  const auto ds = parse("{\"text\":\"a\",\"label\":\"x\"}\n{\"text\":\"b\",\"label\":\"y\"}\n");
  REQUIRE(ds.instances.size() == 2);
  CHECK(ds.class_names == std::vector<std::string>{"x", "y"});
  CHECK(ds.instances[1].row_index == 1);
  CHECK(ds.instances[1].class_id == 1);

  const auto four = parse(kFourClasses);
  CHECK(four.stats.samples == 5);
  CHECK(four.stats.classes == 4);
  CHECK(four.stats.per_class == std::vector<std::size_t>{2, 1, 1, 1});
  CHECK(four.stats.mean_tokens == doctest::Approx(8.0 / 5.0));
  CHECK(four.class_id("z") == 2);
  CHECK(four.class_id("nope") == -1);
}

TEST_CASE("malformed lines report their line number") {
  CHECK(message_of([] { parse("{\"text\":\"a\",\"label\":\"x\"}\n{oops\n"); }).find("line 2") != std::string::npos);
  const auto missing = message_of([] { parse("{\"text\":\"a\"}\n"); });
  CHECK(missing.find("line 1") != std::string::npos);
  CHECK(missing.find("label") != std::string::npos);
  CHECK(message_of([] { parse("{\"text\":3,\"label\":\"x\"}\n"); }).find("text") != std::string::npos);
  CHECK(message_of([] { parse("{\"text\":\"a\",\"label\":\"x\"}\n\n"); }).find("line 2") != std::string::npos);
}

TEST_CASE("split files are validated against the dataset") {
  const auto ds = parse(kFourClasses);
  const auto ok = splits_from(R"({"train":["x","y"],"valid":["z"],"test":["w"]})", ds);
  CHECK(ok.classes(Split::Train) == std::vector<std::string>{"x", "y"});
  CHECK(ok.classes(Split::Test) == std::vector<std::string>{"w"});

  const auto twice = message_of([&] { splits_from(R"({"train":["x","y"],"valid":["x","z"],"test":["w"]})", ds); });
  CHECK(twice.find("'x'") != std::string::npos);
  const auto unknown = message_of([&] { splits_from(R"({"train":["x","y","q"],"valid":["z"],"test":["w"]})", ds); });
  CHECK(unknown.find("'q'") != std::string::npos);
  const auto unassigned = message_of([&] { splits_from(R"({"train":["x","y"],"valid":["z"],"test":[]})", ds); });
  CHECK(unassigned.find("'w'") != std::string::npos);
  CHECK_THROWS_AS(splits_from(R"({"train":["x"]})", ds), SplitError);
  CHECK_THROWS_AS(splits_from("not json", ds), SplitError);
}

TEST_CASE("split files round-trip through disk") {
  const auto ds = parse(kFourClasses);
  const auto path = std::filesystem::temp_directory_path() / "fewshot_test_splits.json";
  const SplitAssignment s{{"x", "y"}, {"z"}, {"w"}};
  save_splits(path, s);
  const auto loaded = load_splits(path, ds);
  CHECK(loaded.train == s.train);
  CHECK(loaded.valid == s.valid);
  CHECK(loaded.test == s.test);
  std::filesystem::remove(path);
}

TEST_CASE("split names parse") {
  CHECK(parse_split("valid") == Split::Valid);
  CHECK(to_string(Split::Test) == "test");
  CHECK_THROWS(parse_split("dev"));
}

namespace {

std::string fseb_bytes(std::uint32_t version, std::uint32_t count, std::uint32_t dim, const std::vector<float>& values,
                       const char* magic = "FSEB") {
  std::string s(magic, 4);
  auto put = [&](const void* p, std::size_t n) { s.append(static_cast<const char*>(p), n); };
  put(&version, 4);
  put(&count, 4);
  put(&dim, 4);
  put(values.data(), values.size() * sizeof(float));
  return s;
}

}  // namespace

TEST_CASE("fixed embeddings load from the FSEB layout") {
  std::vector<float> values(24);
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = static_cast<float>(i) * 0.5f - 3.0f;
  std::istringstream in(fseb_bytes(1, 3, 8, values));
  const auto table = read_fixed_embeddings(in, 3);
  CHECK(table.count() == 3);
  CHECK(table.dim() == 8);
  CHECK(table.vectors(1, 0) == values[8]);
  CHECK(table.vectors(2, 7) == values[23]);
}

TEST_CASE("fixed embeddings reject mismatched or corrupt files") {
  const std::vector<float> values(6, 1.0f);
  auto read = [](const std::string& bytes, std::size_t expected) {
    std::istringstream in(bytes);
    return read_fixed_embeddings(in, expected);
  };
  CHECK(message_of([&] { read(fseb_bytes(1, 2, 3, values), 3); }).find("count 2") != std::string::npos);
  CHECK(message_of([&] { read(fseb_bytes(2, 2, 3, values), 2); }).find("version") != std::string::npos);
  CHECK(message_of([&] { read(fseb_bytes(1, 2, 3, values, "FSEX"), 2); }).find("magic") != std::string::npos);
  CHECK(message_of([&] { read(fseb_bytes(1, 2, 3, {1.0f, 2.0f}), 2); }).find("truncated") != std::string::npos);
  CHECK(message_of([&] { read(fseb_bytes(1, 2, 3, values) + "x", 2); }).find("trailing") != std::string::npos);
  std::vector<float> nan = values;
  nan[4] = std::numeric_limits<float>::quiet_NaN();
  CHECK(message_of([&] { read(fseb_bytes(1, 2, 3, nan), 2); }).find("non-finite") != std::string::npos);
}

TEST_CASE("fixed embeddings round-trip bit-exactly") {
  FixedEmbeddingTable t;
  t.vectors = Tensor<float>::Random(5, 7);
  t.vectors(0, 0) = 1e-38f;
  const auto path = std::filesystem::temp_directory_path() / "fewshot_test_table.fseb";
  {
    std::ofstream out(path, std::ios::binary);
    write_fixed_embeddings(out, t);
  }
  CHECK(std::filesystem::file_size(path) == 16 + 5 * 7 * 4);
  const auto back = load_fixed_embeddings(path, 5);
  CHECK(back.vectors == t.vectors);
  std::filesystem::remove(path);
}
