#include "manifest.hpp"

#include <openssl/evp.h>

#include <array>
#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cli {

using nlohmann::json;

std::string git_blob_sha1(const std::string& content) {
  const std::string header = "blob " + std::to_string(content.size()) + '\0';
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr) throw std::runtime_error("sha1: cannot allocate digest context");
  const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                  EVP_DigestUpdate(ctx, content.data(), content.size()) == 1 &&
                  EVP_DigestFinal_ex(ctx, md.data(), &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw std::runtime_error("sha1: digest failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex += kHex[md[i] >> 4];
    hex += kHex[md[i] & 0xF];
  }
  return hex;
}

std::string git_blob_sha1_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return git_blob_sha1(buf.str());
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

Manifest::Manifest(std::string command, json resolved_config) {
  doc_["command"] = std::move(command);
  doc_["started_at"] = utc_now();
  doc_["config"] = std::move(resolved_config);
  doc_["inputs"] = json::object();
  doc_["outputs"] = json::array();
  doc_["result"] = json::object();
}

void Manifest::add_input(const std::string& role, const std::filesystem::path& path) {
  doc_["inputs"][role] = {{"path", path.string()}, {"git_sha1", git_blob_sha1_file(path)}};
}

void Manifest::add_output(const std::filesystem::path& path) { doc_["outputs"].push_back(path.filename().string()); }

void Manifest::set_dataset(const std::filesystem::path& path, const fewshot::Dataset& dataset) {
  add_input("data", path);
  json per_class = json::object();
  for (std::size_t c = 0; c < dataset.class_names.size(); ++c) {
    per_class[dataset.class_names[c]] = dataset.stats.per_class[c];
  }
  doc_["dataset"] = {{"samples", dataset.stats.samples},
                     {"classes", dataset.stats.classes},
                     {"per_class", per_class},
                     {"mean_tokens", dataset.stats.mean_tokens}};
}

void Manifest::write(const std::filesystem::path& path) {
  doc_["finished_at"] = utc_now();
  write_text_atomic(path, doc_.dump(2) + "\n");
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << text;
    if (!out) throw std::runtime_error("error writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace cli
