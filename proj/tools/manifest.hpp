#pragma once

#include "fewshot/dataset.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

namespace cli {

// SHA-1 of "blob <size>\0<content>", as git hashes file contents.
std::string git_blob_sha1(const std::string& content);
std::string git_blob_sha1_file(const std::filesystem::path& path);

// UTC, ISO 8601 with seconds.
std::string utc_now();

class Manifest {
 public:
  Manifest(std::string command, nlohmann::json resolved_config);

  void add_input(const std::string& role, const std::filesystem::path& path);
  void add_output(const std::filesystem::path& path);
  void set_dataset(const std::filesystem::path& path, const fewshot::Dataset& dataset);
  nlohmann::json& result() { return doc_["result"]; }
  nlohmann::json& doc() { return doc_; }

  // Stamps finished_at and writes pretty JSON via a temporary + rename.
  void write(const std::filesystem::path& path);

 private:
  nlohmann::json doc_;
};

// Writes `text` to `path` through a sibling temporary file and rename.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace cli
