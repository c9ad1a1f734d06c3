#include "fewshot/dataset.hpp"

#include "fewshot/binary_io.hpp"
#include "fewshot/text.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace fewshot {

using nlohmann::json;

int Dataset::class_id(const std::string& name) const {
  for (std::size_t i = 0; i < class_names.size(); ++i) {
    if (class_names[i] == name) return static_cast<int>(i);
  }
  return -1;
}

std::vector<std::string> Dataset::texts() const {
  std::vector<std::string> out;
  out.reserve(instances.size());
  for (const auto& inst : instances) out.push_back(inst.text);
  return out;
}

Dataset parse_dataset(std::istream& in) {
  Dataset ds;
  std::map<std::string, int> label_map;
  std::string line;
  std::size_t line_no = 0;
  double total_tokens = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) {
      throw std::runtime_error("dataset line " + std::to_string(line_no) + ": empty line");
    }
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw std::runtime_error("dataset line " + std::to_string(line_no) + ": malformed JSON (" + e.what() + ")");
    }
    for (const char* field : {"text", "label"}) {
      if (!obj.is_object() || !obj.contains(field) || !obj[field].is_string()) {
        throw std::runtime_error("dataset line " + std::to_string(line_no) + ": missing string field \"" + field + "\"");
      }
    }
    LabeledInstance inst;
    inst.text = obj["text"].get<std::string>();
    inst.class_name = obj["label"].get<std::string>();
    if (inst.class_name.empty()) throw std::runtime_error("dataset line " + std::to_string(line_no) + ": empty label");
    auto [it, inserted] = label_map.emplace(inst.class_name, static_cast<int>(ds.class_names.size()));
    if (inserted) {
      ds.class_names.push_back(inst.class_name);
      ds.stats.per_class.push_back(0);
    }
    inst.class_id = it->second;
    inst.row_index = ds.instances.size();
    ++ds.stats.per_class[static_cast<std::size_t>(inst.class_id)];
    total_tokens += static_cast<double>(tokenize(inst.text, std::string::npos).size());
    ds.instances.push_back(std::move(inst));
  }
  ds.stats.samples = ds.instances.size();
  ds.stats.classes = ds.class_names.size();
  ds.stats.mean_tokens = ds.instances.empty() ? 0.0 : total_tokens / static_cast<double>(ds.instances.size());
  return ds;
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset " + path.string());
  return parse_dataset(in);
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Valid: return "valid";
    case Split::Test: return "test";
  }
  return "?";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "valid") return Split::Valid;
  if (s == "test") return Split::Test;
  throw std::invalid_argument("split must be one of train/valid/test, got '" + std::string(s) + "'");
}

const std::vector<std::string>& SplitAssignment::classes(Split s) const {
  switch (s) {
    case Split::Train: return train;
    case Split::Valid: return valid;
    case Split::Test: return test;
  }
  return test;
}

void validate_splits(const SplitAssignment& splits, const Dataset& dataset) {
  std::map<std::string, std::string> seen;
  for (Split s : {Split::Train, Split::Valid, Split::Test}) {
    for (const auto& name : splits.classes(s)) {
      auto [it, inserted] = seen.emplace(name, std::string(to_string(s)));
      if (!inserted) {
        throw SplitError("split file: class '" + name + "' listed in both " + it->second + " and " +
                                 std::string(to_string(s)));
      }
      if (dataset.class_id(name) < 0) {
        throw SplitError("split file: class '" + name + "' does not occur in the dataset");
      }
    }
  }
  for (const auto& name : dataset.class_names) {
    if (!seen.contains(name)) throw SplitError("split file: dataset class '" + name + "' is not assigned");
  }
}

SplitAssignment parse_splits(std::istream& in, const Dataset& dataset) {
  json obj;
  try {
    obj = json::parse(in);
  } catch (const json::parse_error& e) {
    throw SplitError(std::string("split file: malformed JSON (") + e.what() + ")");
  }
  SplitAssignment splits;
  for (Split s : {Split::Train, Split::Valid, Split::Test}) {
    const std::string key(to_string(s));
    if (!obj.contains(key) || !obj[key].is_array()) throw SplitError("split file: missing array \"" + key + "\"");
    auto& target = s == Split::Train ? splits.train : s == Split::Valid ? splits.valid : splits.test;
    for (const auto& v : obj[key]) {
      if (!v.is_string()) throw SplitError("split file: \"" + key + "\" must contain class names");
      target.push_back(v.get<std::string>());
    }
  }
  validate_splits(splits, dataset);
  return splits;
}

SplitAssignment load_splits(const std::filesystem::path& path, const Dataset& dataset) {
  std::ifstream in(path);
  if (!in) throw SplitError("cannot open split file " + path.string());
  return parse_splits(in, dataset);
}

void save_splits(const std::filesystem::path& path, const SplitAssignment& splits) {
  json obj{{"train", splits.train}, {"valid", splits.valid}, {"test", splits.test}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << obj.dump(2) << '\n';
}

FixedEmbeddingTable read_fixed_embeddings(std::istream& in, std::size_t expected_count) {
  binio::expect_magic(in, "FSEB");
  const auto version = binio::read_u32(in, "version");
  if (version != 1) throw std::runtime_error("fixed embeddings: unsupported version " + std::to_string(version));
  const auto count = binio::read_u32(in, "count");
  const auto dim = binio::read_u32(in, "dim");
  if (count != expected_count) {
    throw std::runtime_error("fixed embeddings: count " + std::to_string(count) + " does not match dataset size " +
                             std::to_string(expected_count));
  }
  if (dim == 0) throw std::runtime_error("fixed embeddings: dim must be positive");
  FixedEmbeddingTable table;
  table.vectors.resize(count, dim);
  const auto bytes = static_cast<std::streamsize>(sizeof(float)) * count * dim;
  if (!in.read(reinterpret_cast<char*>(table.vectors.data()), bytes)) {
    throw std::runtime_error("fixed embeddings: truncated payload (expected " + std::to_string(count) + "x" +
                             std::to_string(dim) + " floats)");
  }
  if (in.peek() != std::char_traits<char>::eof()) throw std::runtime_error("fixed embeddings: trailing bytes");
  if (!table.vectors.allFinite()) throw std::runtime_error("fixed embeddings: non-finite values");
  return table;
}

FixedEmbeddingTable load_fixed_embeddings(const std::filesystem::path& path, std::size_t expected_count) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open fixed embeddings " + path.string());
  return read_fixed_embeddings(in, expected_count);
}

void write_fixed_embeddings(std::ostream& out, const FixedEmbeddingTable& table) {
  out.write("FSEB", 4);
  binio::write_u32(out, 1);
  binio::write_u32(out, static_cast<std::uint32_t>(table.count()));
  binio::write_u32(out, static_cast<std::uint32_t>(table.dim()));
  out.write(reinterpret_cast<const char*>(table.vectors.data()),
            static_cast<std::streamsize>(sizeof(float) * table.count() * table.dim()));
}

}  // namespace fewshot
