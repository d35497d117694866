#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "snnhash/tensor.hpp"

namespace snnhash {

// One split of binary event frames, stored as bytes [n, T, H, W].
struct FrameSet {
  std::vector<std::uint8_t> frames;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

struct SyntheticDataset {
  std::string task;
  std::int64_t steps = 0, height = 0, width = 0;
  int classes = 0;
  std::vector<std::string> class_names;
  std::vector<std::pair<int, int>> similar_pairs;  // graded-relevance table
  std::uint64_t seed = 0;
  FrameSet train;  // also the retrieval database
  FrameSet query;

  std::size_t frame_bytes() const { return static_cast<std::size_t>(steps * height * width); }
  // items (by position in `ids`) as [T, B, H, W, 1] floats
  Tensor batch(const FrameSet& split, std::span<const std::size_t> ids) const;
  Tensor all(const FrameSet& split) const;
};

struct DataSpec {
  std::string task = "moving-bar";  // moving-bar | static-shapes
  std::int64_t n = 300;             // training items
  std::int64_t queries = 0;         // 0: n / 5, at least one per class
  std::uint64_t seed = 0;
  std::int64_t steps = 8, height = 32, width = 32;
  int classes = 0;       // 0: task default (moving-bar 3, static-shapes 4)
  int bar_width = 3;
  double noise = 0.01;   // background event probability per pixel
};

nlohmann::json data_spec_to_json(const DataSpec& s);
DataSpec data_spec_from_json(const nlohmann::json& j);

// moving-bar: left / right / (static). Every left sample is some right sample
// played backwards, so the two classes share the same frame sets.
// static-shapes: hbar / vbar / square / frame, one image repeated over T;
// square and frame are marked as a similar pair.
SyntheticDataset gen_data(const DataSpec& spec);

// index.json plus train.bin / query.bin
void save_dataset(const SyntheticDataset& d, const std::filesystem::path& dir);
SyntheticDataset load_dataset(const std::filesystem::path& dir);

}  // namespace snnhash
