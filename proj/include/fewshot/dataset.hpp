#pragma once

#include "fewshot/tape.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace fewshot {

struct LabeledInstance {
  std::string text;
  std::string class_name;
  int class_id = 0;
  std::size_t row_index = 0;
};

struct DatasetStats {
  std::size_t samples = 0;
  std::size_t classes = 0;
  std::vector<std::size_t> per_class;  // indexed by class id
  double mean_tokens = 0;
};

struct Dataset {
  std::vector<LabeledInstance> instances;  // file order; row_index == position
  std::vector<std::string> class_names;    // class id -> name, by first appearance
  DatasetStats stats;

  int class_id(const std::string& name) const;  // -1 when absent
  std::vector<std::string> texts() const;
};

// JSON-lines with string fields "text" and "label".
Dataset load_dataset(const std::filesystem::path& path);
Dataset parse_dataset(std::istream& in);

enum class Split { Train, Valid, Test };
std::string_view to_string(Split s);
Split parse_split(std::string_view s);

// Invalid split file: overlap, unknown or unassigned class, bad structure.
class SplitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SplitAssignment {
  std::vector<std::string> train;
  std::vector<std::string> valid;
  std::vector<std::string> test;

  const std::vector<std::string>& classes(Split s) const;
};

// JSON object {"train":[...],"valid":[...],"test":[...]}; validated against the
// dataset: pairwise disjoint and covering every dataset class.
SplitAssignment load_splits(const std::filesystem::path& path, const Dataset& dataset);
SplitAssignment parse_splits(std::istream& in, const Dataset& dataset);
void validate_splits(const SplitAssignment& splits, const Dataset& dataset);
void save_splits(const std::filesystem::path& path, const SplitAssignment& splits);

// One precomputed vector per dataset row.
struct FixedEmbeddingTable {
  Tensor<float> vectors;  // count x dim, row_index order

  std::size_t count() const { return static_cast<std::size_t>(vectors.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(vectors.cols()); }
};

// "FSEB", then little-endian u32 version=1, count, dim, then count*dim f32.
FixedEmbeddingTable load_fixed_embeddings(const std::filesystem::path& path, std::size_t expected_count);
FixedEmbeddingTable read_fixed_embeddings(std::istream& in, std::size_t expected_count);
void write_fixed_embeddings(std::ostream& out, const FixedEmbeddingTable& table);

}  // namespace fewshot
