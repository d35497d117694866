#include "snnhash/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "snnhash/ops.hpp"
#include "snnhash/serialize.hpp"

namespace snnhash {

nlohmann::json run_config_to_json(const RunConfig& c) {
  const auto& t = c.train;
  return {{"seed", c.seed},
          {"model", config_to_json(c.model)},
          {"data", data_spec_to_json(c.data)},
          {"train",
           {{"epochs", t.epochs},
            {"batch", t.batch},
            {"lr", t.lr},
            {"min_lr", t.min_lr},
            {"weight_decay", t.weight_decay},
            {"alpha", t.alpha},
            {"beta", t.beta},
            {"tau", t.tau},
            {"schedule",
             {{"initial", t.schedule.initial}, {"length", t.schedule.length}, {"final_window", t.schedule.final_window}}},
            {"soft_loss", t.soft_loss},
            {"stop_at_accuracy", t.stop_at_accuracy}}}};
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  try {
    c.seed = j.value("seed", c.seed);
    if (j.contains("model")) c.model = config_from_json(j.at("model"));
    if (j.contains("data")) c.data = data_spec_from_json(j.at("data"));
    if (j.contains("train")) {
      const auto& t = j.at("train");
      auto& o = c.train;
      o.epochs = t.value("epochs", o.epochs);
      o.batch = t.value("batch", o.batch);
      o.lr = t.value("lr", o.lr);
      o.min_lr = t.value("min_lr", o.min_lr);
      o.weight_decay = t.value("weight_decay", o.weight_decay);
      o.alpha = t.value("alpha", o.alpha);
      o.beta = t.value("beta", o.beta);
      o.tau = t.value("tau", o.tau);
      if (t.contains("schedule")) {
        const auto& s = t.at("schedule");
        o.schedule.initial = s.value("initial", o.schedule.initial);
        o.schedule.length = s.value("length", o.schedule.length);
        o.schedule.final_window = s.value("final_window", o.schedule.final_window);
      }
      o.soft_loss = t.value("soft_loss", o.soft_loss);
      o.stop_at_accuracy = t.value("stop_at_accuracy", o.stop_at_accuracy);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
  const auto& t = c.train;
  if (t.epochs < 1 || t.batch < 2) throw ConfigError("run config: need epochs >= 1 and batch >= 2");
  if (!(t.alpha >= 0.0) || !(t.beta >= 0.0)) throw ConfigError("run config: alpha and beta must be >= 0");
  if (!(t.lr > 0.0)) throw ConfigError("run config: lr must be positive");
  return c;
}

void adapt_model_to_data(ModelConfig& m, const SyntheticDataset& d) {
  m.steps = d.steps;
  m.height = d.height;
  m.width = d.width;
  m.in_channels = 1;
  m.classes = d.classes;
}

nlohmann::json EpochLog::to_json() const {
  return {{"epoch", epoch},       {"loss", loss},       {"similarity", similarity}, {"classification", classification},
          {"accuracy", accuracy}, {"lambda", lambda},   {"lr", lr},                 {"use_soft", use_soft},
          {"finalized", finalized}, {"clamped", clamped}};
}

EpochLog EpochLog::from_json(const nlohmann::json& j) {
  EpochLog e;
  e.epoch = j.at("epoch").get<int>();
  e.loss = j.at("loss").get<double>();
  e.similarity = j.at("similarity").get<double>();
  e.classification = j.at("classification").get<double>();
  e.accuracy = j.at("accuracy").get<double>();
  e.lambda = j.at("lambda").get<double>();
  e.lr = j.at("lr").get<double>();
  e.use_soft = j.at("use_soft").get<bool>();
  e.finalized = j.at("finalized").get<bool>();
  e.clamped = j.at("clamped").get<std::int64_t>();
  return e;
}

namespace {

std::int64_t batches_per_epoch(const TrainConfig& t, std::size_t n) {
  return (static_cast<std::int64_t>(n) + t.batch - 1) / t.batch;
}

LrSchedule make_schedule(const TrainConfig& t, std::size_t n) {
  LrSchedule s;
  s.kind = LrSchedule::Kind::kCosine;
  s.base_lr = t.lr;
  s.min_lr = t.min_lr;
  s.total_steps = std::max<std::int64_t>(1, t.epochs * batches_per_epoch(t, n));
  return s;
}

std::mt19937_64 epoch_rng(std::uint64_t seed, int epoch) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), 0x5eedu};
  return std::mt19937_64(seq);
}

std::vector<int> argmax_rows(const Tensor& t) {
  const std::int64_t K = t.shape().back();
  const std::int64_t rows = t.size() / K;
  std::vector<int> out(static_cast<std::size_t>(rows));
  for (std::int64_t r = 0; r < rows; ++r) {
    auto row = t.data().subspan(static_cast<std::size_t>(r * K), static_cast<std::size_t>(K));
    out[static_cast<std::size_t>(r)] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

}  // namespace

TrainerState init_training(const RunConfig& config, const SyntheticDataset& data) {
  TrainerState s;
  s.config = config;
  if (config.model.steps != data.steps || config.model.height != data.height || config.model.width != data.width ||
      config.model.classes != data.classes || config.model.in_channels != 1) {
    throw ConfigError("training: model config (T=" + std::to_string(config.model.steps) + ", " +
                      std::to_string(config.model.height) + "x" + std::to_string(config.model.width) + ", " +
                      std::to_string(config.model.classes) + " classes) does not match the dataset (T=" +
                      std::to_string(data.steps) + ", " + std::to_string(data.height) + "x" +
                      std::to_string(data.width) + ", " + std::to_string(data.classes) + " classes)");
  }
  s.model = build_model(config.model, config.seed);
  s.optimizer = make_optimizer_state(s.model.parameters(), make_schedule(config.train, data.train.size()));
  s.accumulator = SoftSimilarityState::make(data.classes);
  return s;
}

EpochLog train_epoch(TrainerState& s, const SyntheticDataset& data) {
  const auto& tc = s.config.train;
  const int epoch = s.next_epoch;
  const auto decision = round_scheduler(epoch, tc.epochs, tc.schedule);
  const int C = data.classes;
  const bool soft_on = tc.soft_loss && decision.use_soft && !s.soft.empty();
  std::vector<double> S;
  if (soft_on) S = blend(hard_class_matrix(C), s.soft, decision.lambda);

  const std::size_t N = data.train.size();
  std::vector<std::size_t> order(N);
  std::iota(order.begin(), order.end(), 0);
  auto rng = epoch_rng(s.config.seed, epoch);
  std::shuffle(order.begin(), order.end(), rng);

  auto params = s.model.parameters();
  AdamWConfig adam;
  adam.weight_decay = tc.weight_decay;
  const auto ctx = make_context(s.model.config, true);

  EpochLog log;
  log.epoch = epoch;
  log.lambda = decision.lambda;
  log.use_soft = soft_on;
  log.lr = s.optimizer.schedule.at(s.optimizer.step);
  std::size_t correct = 0, batches = 0;
  std::size_t start = 0;
  while (start < N) {
    std::size_t end = std::min(N, start + static_cast<std::size_t>(tc.batch));
    // a trailing single item would break batch statistics; fold it into this batch
    if (N - end == 1) end = N;
    std::span<const std::size_t> ids(order.data() + start, end - start);
    std::vector<int> labels;
    for (auto i : ids) labels.push_back(data.train.labels[i]);
    auto x = data.batch(data.train, ids);

    auto out = forward(s.model, x, ctx);
    Tensor M = soft_on ? expand_to_batch(S, C, labels) : hard_similarity(labels);
    auto loss = total_loss(out.signed_codes, M, out.log_probs, labels, tc.alpha, tc.beta);
    const double value = loss.total.item();
    if (!std::isfinite(value)) {
      throw DomainError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batches));
    }
    zero_grads(params);
    backward(loss.total);
    optimizer_step(params, adam, s.optimizer);

    auto pred = argmax_rows(out.log_probs);
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == labels[i];
    if (tc.soft_loss) {
      accumulate_soft(s.accumulator, out.mean_potential.data(), static_cast<std::int64_t>(labels.size()),
                      out.mean_potential.shape().back(), labels, pred);
    }
    log.loss += value;
    log.similarity += loss.similarity;
    log.classification += loss.classification;
    log.clamped += loss.clamped;
    ++batches;
    start = end;
  }
  const double nb = static_cast<double>(batches);
  log.loss /= nb;
  log.similarity /= nb;
  log.classification /= nb;
  log.accuracy = static_cast<double>(correct) / static_cast<double>(N);
  if (tc.soft_loss && decision.finalize_now) {
    s.soft = finalize_soft(s.accumulator, tc.tau);
    s.accumulator.reset();
    log.finalized = true;
  }
  s.log.push_back(log);
  s.next_epoch = epoch + 1;
  return log;
}

void save_checkpoint(const TrainerState& s, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto& model = const_cast<Model&>(s.model);  // visiting is read-only here
  auto tensors = model.state();
  auto params = model.parameters();
  if (params.size() != s.optimizer.m.size()) throw FormatError("checkpoint: optimizer state does not match model");
  NamedTensors moments;
  for (std::size_t i = 0; i < params.size(); ++i) {
    moments.emplace_back("adam.m." + params[i].name, Tensor(params[i].value.shape(), s.optimizer.m[i]));
    moments.emplace_back("adam.v." + params[i].name, Tensor(params[i].value.shape(), s.optimizer.v[i]));
  }
  std::string blob;
  auto model_index = pack_tensors(tensors, blob);
  auto moment_index = pack_tensors(moments, blob);
  nlohmann::json log = nlohmann::json::array();
  for (const auto& e : s.log) log.push_back(e.to_json());
  nlohmann::json manifest{
      {"format", "snnhash-checkpoint"},
      {"version", 1},
      {"run_config", run_config_to_json(s.config)},
      {"seed", s.config.seed},
      {"parameter_count", model.parameter_count()},
      {"epochs_completed", s.next_epoch},
      {"tensors", model_index},
      {"optimizer", {{"step", s.optimizer.step}, {"schedule", schedule_to_json(s.optimizer.schedule)}, {"moments", moment_index}}},
      {"soft",
       {{"matrix", s.soft},
        {"sum", s.accumulator.sum},
        {"count", s.accumulator.count},
        {"zero_norm_pairs", s.accumulator.zero_norm_pairs}}},
      {"log", log},
      {"blob", "tensors.bin"}};
  // blob first: a manifest never points at a blob that is not there yet
  write_file_atomic(dir / "tensors.bin", blob);
  write_json(dir / "manifest.json", manifest);
}

TrainerState load_checkpoint(const std::filesystem::path& dir) {
  const auto manifest = read_json(dir / "manifest.json");
  if (manifest.value("format", std::string()) != "snnhash-checkpoint") {
    throw FormatError("checkpoint: " + (dir / "manifest.json").string() + " is not a checkpoint manifest");
  }
  const std::string blob = read_file(dir / manifest.value("blob", std::string("tensors.bin")));
  TrainerState s;
  try {
    s.config = run_config_from_json(manifest.at("run_config"));
    s.model = build_model(s.config.model, s.config.seed);
    s.model.load_state(unpack_tensors(manifest.at("tensors"), blob));
    auto params = s.model.parameters();
    const auto& opt = manifest.at("optimizer");
    s.optimizer = make_optimizer_state(params, schedule_from_json(opt.at("schedule")));
    s.optimizer.step = opt.at("step").get<std::int64_t>();
    auto moments = unpack_tensors(opt.at("moments"), blob);
    if (moments.size() != 2 * params.size()) throw FormatError("checkpoint: optimizer moment count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& m = moments[2 * i];
      const auto& v = moments[2 * i + 1];
      if (m.first != "adam.m." + params[i].name || v.first != "adam.v." + params[i].name ||
          m.second.shape() != params[i].value.shape() || v.second.shape() != params[i].value.shape()) {
        throw FormatError("checkpoint: optimizer moments for '" + params[i].name + "' are missing or misshapen");
      }
      s.optimizer.m[i].assign(m.second.data().begin(), m.second.data().end());
      s.optimizer.v[i].assign(v.second.data().begin(), v.second.data().end());
    }
    const auto& soft = manifest.at("soft");
    s.accumulator = SoftSimilarityState::make(s.config.model.classes);
    s.soft = soft.at("matrix").get<std::vector<double>>();
    s.accumulator.sum = soft.at("sum").get<std::vector<double>>();
    s.accumulator.count = soft.at("count").get<std::vector<std::int64_t>>();
    s.accumulator.zero_norm_pairs = soft.at("zero_norm_pairs").get<std::int64_t>();
    const auto cc = static_cast<std::size_t>(s.config.model.classes) * static_cast<std::size_t>(s.config.model.classes);
    if (s.accumulator.sum.size() != cc || s.accumulator.count.size() != cc || (!s.soft.empty() && s.soft.size() != cc)) {
      throw FormatError("checkpoint: soft similarity state has the wrong size");
    }
    s.next_epoch = manifest.at("epochs_completed").get<int>();
    for (const auto& e : manifest.at("log")) s.log.push_back(EpochLog::from_json(e));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  return s;
}

TrainResult run_training(TrainerState state, const SyntheticDataset& data, const std::filesystem::path& out,
                         const std::function<void(const EpochLog&)>& on_epoch, int until) {
  TrainResult r;
  const auto& tc = state.config.train;
  const int stop = until > 0 ? std::min(until, tc.epochs) : tc.epochs;
  while (state.next_epoch < stop) {
    EpochLog log;
    try {
      log = train_epoch(state, data);
    } catch (const DomainError& e) {
      r.aborted = true;
      r.reason = e.what();
      break;
    }
    if (!out.empty()) save_checkpoint(state, out);
    if (on_epoch) on_epoch(log);
    if (tc.stop_at_accuracy > 0.0 && log.accuracy >= tc.stop_at_accuracy) {
      r.stopped_early = true;
      break;
    }
  }
  r.state = std::move(state);
  return r;
}

CodeIndex encode(Model& model, const SyntheticDataset& data, const FrameSet& split, std::int64_t batch) {
  NoGradGuard ng;
  const auto ctx = make_context(model.config, false);
  std::vector<float> bits;
  for (std::size_t s = 0; s < split.size(); s += static_cast<std::size_t>(batch)) {
    std::vector<std::size_t> ids;
    for (std::size_t i = s; i < std::min(split.size(), s + static_cast<std::size_t>(batch)); ++i) ids.push_back(i);
    auto out = forward(model, data.batch(split, ids), ctx);
    bits.insert(bits.end(), out.code.data().begin(), out.code.data().end());
  }
  return CodeIndex::from_bits(bits, split.size(), static_cast<int>(model.config.hash_bits), split.labels);
}

double evaluate_accuracy(Model& model, const SyntheticDataset& data, const FrameSet& split, std::int64_t batch) {
  NoGradGuard ng;
  const auto ctx = make_context(model.config, false);
  std::size_t correct = 0;
  for (std::size_t s = 0; s < split.size(); s += static_cast<std::size_t>(batch)) {
    std::vector<std::size_t> ids;
    for (std::size_t i = s; i < std::min(split.size(), s + static_cast<std::size_t>(batch)); ++i) ids.push_back(i);
    auto out = forward(model, data.batch(split, ids), ctx);
    auto pred = argmax_rows(out.log_probs);
    for (std::size_t i = 0; i < ids.size(); ++i) correct += pred[i] == split.labels[ids[i]];
  }
  return split.size() ? static_cast<double>(correct) / static_cast<double>(split.size()) : 0.0;
}

}  // namespace snnhash
