#include "snnhash/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace snnhash {

static_assert(sizeof(float) == 4);

void append_floats(std::string& blob, std::span<const float> values) {
  const std::size_t at = blob.size();
  blob.resize(at + values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint32_t u = std::bit_cast<std::uint32_t>(values[i]);
    unsigned char b[4] = {static_cast<unsigned char>(u), static_cast<unsigned char>(u >> 8),
                          static_cast<unsigned char>(u >> 16), static_cast<unsigned char>(u >> 24)};
    std::memcpy(blob.data() + at + i * 4, b, 4);
  }
}

std::vector<float> read_floats(const std::string& blob, std::uint64_t byte_offset, std::size_t count) {
  if (byte_offset + count * 4 > blob.size()) {
    throw FormatError("tensor blob truncated: need " + std::to_string(byte_offset + count * 4) +
                      " bytes, have " + std::to_string(blob.size()));
  }
  std::vector<float> out(count);
  const auto* p = reinterpret_cast<const unsigned char*>(blob.data() + byte_offset);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint32_t u = std::uint32_t(p[4 * i]) | std::uint32_t(p[4 * i + 1]) << 8 |
                            std::uint32_t(p[4 * i + 2]) << 16 | std::uint32_t(p[4 * i + 3]) << 24;
    out[i] = std::bit_cast<float>(u);
  }
  return out;
}

nlohmann::json tensor_header(const Tensor& t, std::uint64_t byte_offset) {
  return {{"dtype", "float32"}, {"shape", t.shape()}, {"byte_offset", byte_offset}};
}

void append_tensor(std::string& blob, const Tensor& t) { append_floats(blob, t.data()); }

Tensor read_tensor(const nlohmann::json& header, const std::string& blob) {
  if (header.value("dtype", std::string()) != "float32") {
    throw FormatError("tensor header: unsupported dtype in " + header.dump());
  }
  Shape shape = header.at("shape").get<Shape>();
  const auto offset = header.at("byte_offset").get<std::uint64_t>();
  return Tensor(shape, read_floats(blob, offset, static_cast<std::size_t>(numel(shape))));
}

nlohmann::json pack_tensors(const NamedTensors& tensors, std::string& blob) {
  nlohmann::json index = nlohmann::json::array();
  for (const auto& [name, t] : tensors) {
    auto h = tensor_header(t, blob.size());
    h["name"] = name;
    index.push_back(std::move(h));
    append_tensor(blob, t);
  }
  return index;
}

NamedTensors unpack_tensors(const nlohmann::json& index, const std::string& blob) {
  NamedTensors out;
  for (const auto& h : index) out.emplace_back(h.at("name").get<std::string>(), read_tensor(h, blob));
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw std::runtime_error("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

nlohmann::json read_json(const std::filesystem::path& path) {
  try {
    return nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  write_file_atomic(path, j.dump(2) + "\n");
}

}  // namespace snnhash
