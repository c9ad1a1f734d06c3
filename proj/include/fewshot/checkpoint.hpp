#pragma once

#include "fewshot/encoder.hpp"

#include <filesystem>
#include <iosfwd>

namespace fewshot {

// "FSCK", u32 version=1, u32 d, u32 vocab size, then one block per parameter:
// u32 name length, UTF-8 name, u32 element count, f32 values (row-major).
// All integers and floats little-endian.
void write_checkpoint(std::ostream& out, const ModelParams<float>& params);
ModelParams<float> read_checkpoint(std::istream& in);

// Writes to a sibling temporary and renames, so readers never see a partial file.
void save_checkpoint(const std::filesystem::path& path, const ModelParams<float>& params);
ModelParams<float> load_checkpoint(const std::filesystem::path& path);

}  // namespace fewshot
