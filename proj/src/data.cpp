#include "snnhash/data.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <stdexcept>

#include "snnhash/serialize.hpp"

namespace snnhash {

Tensor SyntheticDataset::batch(const FrameSet& split, std::span<const std::size_t> ids) const {
  const auto B = static_cast<std::int64_t>(ids.size());
  const std::size_t hw = static_cast<std::size_t>(height * width);
  std::vector<float> x(static_cast<std::size_t>(steps * B) * hw);
  for (std::size_t b = 0; b < ids.size(); ++b) {
    if (ids[b] >= split.size()) throw std::out_of_range("dataset: item " + std::to_string(ids[b]) + " out of range");
    const std::uint8_t* src = split.frames.data() + ids[b] * frame_bytes();
    for (std::int64_t t = 0; t < steps; ++t) {
      float* dst = x.data() + (static_cast<std::size_t>(t) * ids.size() + b) * hw;
      const std::uint8_t* f = src + static_cast<std::size_t>(t) * hw;
      for (std::size_t k = 0; k < hw; ++k) dst[k] = f[k] ? 1.0f : 0.0f;
    }
  }
  return Tensor({steps, B, height, width, 1}, std::move(x));
}

Tensor SyntheticDataset::all(const FrameSet& split) const {
  std::vector<std::size_t> ids(split.size());
  std::iota(ids.begin(), ids.end(), 0);
  return batch(split, ids);
}

nlohmann::json data_spec_to_json(const DataSpec& s) {
  return {{"task", s.task},         {"n", s.n},           {"queries", s.queries},
          {"seed", s.seed},         {"steps", s.steps},   {"height", s.height},
          {"width", s.width},       {"classes", s.classes}, {"bar_width", s.bar_width},
          {"noise", s.noise}};
}

DataSpec data_spec_from_json(const nlohmann::json& j) {
  DataSpec s;
  s.task = j.value("task", s.task);
  s.n = j.value("n", s.n);
  s.queries = j.value("queries", s.queries);
  s.seed = j.value("seed", s.seed);
  s.steps = j.value("steps", s.steps);
  s.height = j.value("height", s.height);
  s.width = j.value("width", s.width);
  s.classes = j.value("classes", s.classes);
  s.bar_width = j.value("bar_width", s.bar_width);
  s.noise = j.value("noise", s.noise);
  return s;
}

namespace {

using Frames = std::vector<std::uint8_t>;  // [T, H, W]

void add_noise(Frames& f, double p, std::mt19937_64& rng) {
  if (p <= 0) return;
  std::bernoulli_distribution coin(p);
  for (auto& v : f)
    if (coin(rng)) v = 1;
}

// vertical bar moving right by `speed` pixels per step (0 = static)
Frames bar_sequence(const DataSpec& s, int speed, std::mt19937_64& rng) {
  const auto T = s.steps, H = s.height, W = s.width;
  const std::int64_t travel = static_cast<std::int64_t>(speed) * (T - 1);
  std::uniform_int_distribution<std::int64_t> x0d(0, W - s.bar_width - travel);
  std::uniform_int_distribution<std::int64_t> y0d(0, H / 4);
  const std::int64_t x0 = x0d(rng), y0 = y0d(rng), y1 = H - y0d(rng);
  Frames f(static_cast<std::size_t>(T * H * W), 0);
  for (std::int64_t t = 0; t < T; ++t) {
    const std::int64_t x = x0 + speed * t;
    for (std::int64_t y = y0; y < y1; ++y)
      for (std::int64_t dx = 0; dx < s.bar_width; ++dx) f[static_cast<std::size_t>((t * H + y) * W + x + dx)] = 1;
  }
  add_noise(f, s.noise, rng);
  return f;
}

Frames reversed_in_time(const Frames& f, std::int64_t T) {
  const std::size_t per = f.size() / static_cast<std::size_t>(T);
  Frames r(f.size());
  for (std::int64_t t = 0; t < T; ++t)
    std::copy_n(f.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(T - 1 - t) * per), per,
                r.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(t) * per));
  return r;
}

Frames shape_sequence(const DataSpec& s, int cls, std::mt19937_64& rng) {
  const auto T = s.steps, H = s.height, W = s.width;
  const std::int64_t side = std::min(H, W) / 2;
  std::uniform_int_distribution<std::int64_t> sd(side - 4, side);
  const std::int64_t a = sd(rng);
  std::uniform_int_distribution<std::int64_t> xd(0, W - a), yd(0, H - a);
  const std::int64_t x0 = xd(rng), y0 = yd(rng);
  std::vector<std::uint8_t> img(static_cast<std::size_t>(H * W), 0);
  auto on = [&](std::int64_t y, std::int64_t x) { img[static_cast<std::size_t>(y * W + x)] = 1; };
  const std::int64_t thick = 3, mid = a / 2 - thick / 2;
  for (std::int64_t y = 0; y < a; ++y) {
    for (std::int64_t x = 0; x < a; ++x) {
      bool v = false;
      switch (cls) {
        case 0: v = y >= mid && y < mid + thick; break;  // horizontal bar
        case 1: v = x >= mid && x < mid + thick; break;  // vertical bar
        case 2: v = true; break;                           // filled square
        case 3: v = y < thick || y >= a - thick || x < thick || x >= a - thick; break;  // hollow square
        default: break;
      }
      if (v) on(y0 + y, x0 + x);
    }
  }
  // the same image at every step, each step with its own noise
  Frames f(static_cast<std::size_t>(T * H * W));
  for (std::int64_t t = 0; t < T; ++t) std::copy(img.begin(), img.end(), f.begin() + t * H * W);
  add_noise(f, s.noise, rng);
  return f;
}

FrameSet make_split(const DataSpec& s, int classes, std::int64_t count, std::mt19937_64& rng) {
  // round-robin labels keep classes balanced to within one
  std::vector<int> labels(static_cast<std::size_t>(count));
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % static_cast<std::size_t>(classes));
  std::vector<Frames> items(labels.size());
  std::uniform_int_distribution<int> speed(1, 3);
  if (s.task == "moving-bar") {
    // right samples come first in each (left, right) slot pair; the matching
    // left sample is the same recording reversed whenever both slots exist
    std::vector<std::size_t> lefts, rights;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == 0) lefts.push_back(i);
      if (labels[i] == 1) rights.push_back(i);
      if (labels[i] == 2) items[i] = bar_sequence(s, 0, rng);
    }
    for (std::size_t k = 0; k < std::max(lefts.size(), rights.size()); ++k) {
      auto f = bar_sequence(s, speed(rng), rng);
      if (k < lefts.size()) items[lefts[k]] = reversed_in_time(f, s.steps);
      if (k < rights.size()) items[rights[k]] = std::move(f);
    }
  } else {
    for (std::size_t i = 0; i < labels.size(); ++i) items[i] = shape_sequence(s, labels[i], rng);
  }
  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  FrameSet fs;
  for (auto i : order) {
    fs.labels.push_back(labels[i]);
    fs.frames.insert(fs.frames.end(), items[i].begin(), items[i].end());
  }
  return fs;
}

}  // namespace

SyntheticDataset gen_data(const DataSpec& s) {
  SyntheticDataset d;
  d.task = s.task;
  d.steps = s.steps;
  d.height = s.height;
  d.width = s.width;
  d.seed = s.seed;
  if (s.task == "moving-bar") {
    d.classes = s.classes == 0 ? 3 : s.classes;
    if (d.classes != 2 && d.classes != 3) throw std::invalid_argument("gen_data: moving-bar has 2 or 3 classes");
    d.class_names = {"left", "right", "static"};
    d.class_names.resize(static_cast<std::size_t>(d.classes));
    if (s.bar_width < 1 || s.bar_width + 3 * (s.steps - 1) > s.width) {
      throw std::invalid_argument("gen_data: bar of width " + std::to_string(s.bar_width) + " moving " +
                                  std::to_string(3 * (s.steps - 1)) + " px does not fit in width " +
                                  std::to_string(s.width));
    }
  } else if (s.task == "static-shapes") {
    d.classes = s.classes == 0 ? 4 : s.classes;
    if (d.classes != 4) throw std::invalid_argument("gen_data: static-shapes has 4 classes");
    d.class_names = {"hbar", "vbar", "square", "frame"};
    d.similar_pairs = {{2, 3}};
    if (std::min(s.height, s.width) < 16) throw std::invalid_argument("gen_data: static-shapes needs frames >= 16 px");
  } else {
    throw std::invalid_argument("gen_data: unknown task '" + s.task + "'");
  }
  if (s.steps < 2) throw std::invalid_argument("gen_data: need T >= 2");
  if (s.n < d.classes) throw std::invalid_argument("gen_data: n must be at least the number of classes");
  if (!(s.noise >= 0.0 && s.noise < 1.0)) throw std::invalid_argument("gen_data: noise must lie in [0, 1)");
  std::mt19937_64 rng(s.seed);
  const std::int64_t nq = s.queries > 0 ? s.queries : std::max<std::int64_t>(d.classes, s.n / 5);
  d.train = make_split(s, d.classes, s.n, rng);
  d.query = make_split(s, d.classes, nq, rng);
  return d;
}

void save_dataset(const SyntheticDataset& d, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& [a, b] : d.similar_pairs) pairs.push_back({a, b});
  nlohmann::json idx{{"task", d.task},
                     {"steps", d.steps},
                     {"height", d.height},
                     {"width", d.width},
                     {"classes", d.classes},
                     {"class_names", d.class_names},
                     {"similar_pairs", pairs},
                     {"seed", d.seed},
                     {"splits", nlohmann::json::object()}};
  for (const auto& [name, fs] : {std::pair<const char*, const FrameSet*>{"train", &d.train}, {"query", &d.query}}) {
    const std::string file = std::string(name) + ".bin";
    write_file_atomic(dir / file, std::string(fs->frames.begin(), fs->frames.end()));
    idx["splits"][name] = {{"count", fs->size()}, {"labels", fs->labels}, {"blob", file}};
  }
  write_json(dir / "index.json", idx);
}

SyntheticDataset load_dataset(const std::filesystem::path& dir) {
  const auto idx = read_json(dir / "index.json");
  SyntheticDataset d;
  try {
    d.task = idx.at("task").get<std::string>();
    d.steps = idx.at("steps").get<std::int64_t>();
    d.height = idx.at("height").get<std::int64_t>();
    d.width = idx.at("width").get<std::int64_t>();
    d.classes = idx.at("classes").get<int>();
    d.class_names = idx.at("class_names").get<std::vector<std::string>>();
    d.seed = idx.at("seed").get<std::uint64_t>();
    for (const auto& p : idx.at("similar_pairs")) d.similar_pairs.emplace_back(p.at(0).get<int>(), p.at(1).get<int>());
    for (auto [name, fs] : {std::pair<const char*, FrameSet*>{"train", &d.train}, {"query", &d.query}}) {
      const auto& s = idx.at("splits").at(name);
      fs->labels = s.at("labels").get<std::vector<int>>();
      const std::string blob = read_file(dir / s.at("blob").get<std::string>());
      if (blob.size() != fs->labels.size() * d.frame_bytes()) {
        throw FormatError("dataset: " + std::string(name) + " blob has " + std::to_string(blob.size()) +
                          " bytes, expected " + std::to_string(fs->labels.size() * d.frame_bytes()));
      }
      fs->frames.assign(blob.begin(), blob.end());
      for (int y : fs->labels)
        if (y < 0 || y >= d.classes) throw FormatError("dataset: label out of range");
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("dataset index: ") + e.what());
  }
  return d;
}

}  // namespace snnhash
