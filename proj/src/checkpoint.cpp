#include "fewshot/checkpoint.hpp"

#include "fewshot/binary_io.hpp"

#include <fstream>
#include <map>
#include <stdexcept>

namespace fewshot {

void write_checkpoint(std::ostream& out, const ModelParams<float>& params) {
  out.write("FSCK", 4);
  binio::write_u32(out, 1);
  binio::write_u32(out, static_cast<std::uint32_t>(params.encoder.dim()));
  binio::write_u32(out, static_cast<std::uint32_t>(params.encoder.embedding.rows()));
  const auto tensors = params.tensors();
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto name = kParameterNames[i];
    binio::write_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    binio::write_u32(out, static_cast<std::uint32_t>(tensors[i]->size()));
    for (Eigen::Index k = 0; k < tensors[i]->size(); ++k) binio::write_f32(out, (*tensors[i])(k));
  }
}

ModelParams<float> read_checkpoint(std::istream& in) {
  binio::expect_magic(in, "FSCK");
  const auto version = binio::read_u32(in, "version");
  if (version != 1) throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  const Eigen::Index d = binio::read_u32(in, "dim");
  const Eigen::Index vocab = binio::read_u32(in, "vocab size");
  if (d < 2) throw std::runtime_error("checkpoint: dim must be >= 2");

  std::map<std::string, std::vector<float>> blocks;
  while (in.peek() != std::char_traits<char>::eof()) {
    const auto len = binio::read_u32(in, "name length");
    if (len > 4096) throw std::runtime_error("checkpoint: implausible parameter name length");
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw std::runtime_error("checkpoint: truncated parameter name");
    const auto count = binio::read_u32(in, "element count");
    std::vector<float> values(count);
    if (count > 0 && !in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(4ULL * count))) {
      throw std::runtime_error("checkpoint: truncated block '" + name + "'");
    }
    if (!blocks.emplace(name, std::move(values)).second) throw std::runtime_error("checkpoint: duplicate block '" + name + "'");
  }

  ModelParams<float> p;
  auto tensors = p.tensors();
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const std::string name(kParameterNames[i]);
    auto it = blocks.find(name);
    if (it == blocks.end()) throw std::runtime_error("checkpoint: missing block '" + name + "'");
    const auto count = static_cast<Eigen::Index>(it->second.size());
    Eigen::Index rows = d, cols = 1;
    if (name == "encoder.embedding") {
      rows = vocab;
      cols = d;
    } else if (name == "encoder.hidden.weight") {
      if (count % d != 0 || count == 0) throw std::runtime_error("checkpoint: hidden weight size not a multiple of dim");
      cols = count / d;
    } else if (name == "encoder.output.weight" || name == "projection.weight") {
      cols = d;
    }
    if (rows * cols != count) {
      throw std::runtime_error("checkpoint: block '" + name + "' has " + std::to_string(count) + " values, expected " +
                               std::to_string(rows * cols));
    }
    *tensors[i] = Eigen::Map<const Tensor<float>>(it->second.data(), rows, cols);
    blocks.erase(it);
  }
  if (!blocks.empty()) throw std::runtime_error("checkpoint: unknown block '" + blocks.begin()->first + "'");
  return p;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams<float>& params) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint " + tmp.string());
    write_checkpoint(out, params);
    if (!out) throw std::runtime_error("error writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

ModelParams<float> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

}  // namespace fewshot
