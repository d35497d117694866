#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "snnhash/tensor.hpp"

namespace snnhash {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensors on disk are raw little-endian float32 runs inside a blob, each
// described by {"dtype": "float32", "shape": [...], "byte_offset": n}.
nlohmann::json tensor_header(const Tensor& t, std::uint64_t byte_offset);
void append_tensor(std::string& blob, const Tensor& t);
void append_floats(std::string& blob, std::span<const float> values);
Tensor read_tensor(const nlohmann::json& header, const std::string& blob);
std::vector<float> read_floats(const std::string& blob, std::uint64_t byte_offset, std::size_t count);

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

// Header list for `tensors` laid out back to back in one blob.
nlohmann::json pack_tensors(const NamedTensors& tensors, std::string& blob);
NamedTensors unpack_tensors(const nlohmann::json& index, const std::string& blob);

std::string read_file(const std::filesystem::path& path);
// Writes through a temporary sibling and renames, so readers never see a
// partial file.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace snnhash
