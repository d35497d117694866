#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "snnhash/data.hpp"
#include "snnhash/hash_loss.hpp"
#include "snnhash/model.hpp"
#include "snnhash/optim.hpp"
#include "snnhash/retrieval.hpp"

namespace snnhash {

struct TrainConfig {
  int epochs = 40;
  std::int64_t batch = 16;
  double lr = 2e-3;
  double min_lr = 1e-4;
  double weight_decay = 0.01;
  double alpha = 0.2;
  double beta = 0.8;
  double tau = 0.3;
  RoundSchedule schedule;
  bool soft_loss = true;  // false: hard similarity targets throughout
  // > 0: stop after the first epoch whose training accuracy reaches this
  double stop_at_accuracy = 0.0;
};

struct RunConfig {
  ModelConfig model = ModelConfig::nano();
  TrainConfig train;
  DataSpec data;
  std::uint64_t seed = 0;  // model init and batch order
};

nlohmann::json run_config_to_json(const RunConfig& c);
RunConfig run_config_from_json(const nlohmann::json& j);

// Copies T, H, W, channels and class count from the dataset into the model config.
void adapt_model_to_data(ModelConfig& m, const SyntheticDataset& d);

struct EpochLog {
  int epoch = 0;
  double loss = 0, similarity = 0, classification = 0;  // batch means
  double accuracy = 0;                                   // on training batches, train mode
  double lambda = 1.0;
  double lr = 0;
  bool use_soft = false;
  bool finalized = false;
  std::int64_t clamped = 0;

  nlohmann::json to_json() const;
  static EpochLog from_json(const nlohmann::json& j);
};

struct TrainerState {
  RunConfig config;
  Model model;
  OptimizerState optimizer;
  SoftSimilarityState accumulator;
  std::vector<double> soft;  // finalized C x C matrix; empty before the first round ends
  int next_epoch = 0;
  std::vector<EpochLog> log;
};

TrainerState init_training(const RunConfig& config, const SyntheticDataset& data);

// One epoch; batch order depends only on (seed, epoch). Throws DomainError
// on a non-finite loss or gradient.
EpochLog train_epoch(TrainerState& state, const SyntheticDataset& data);

// manifest.json + tensors.bin inside `dir`
void save_checkpoint(const TrainerState& state, const std::filesystem::path& dir);
TrainerState load_checkpoint(const std::filesystem::path& dir);

struct TrainResult {
  TrainerState state;
  bool aborted = false;
  std::string reason;
  bool stopped_early = false;
};

// Runs the remaining epochs of `state`, writing a checkpoint after each
// completed epoch when `out` is non-empty. A failed epoch leaves the previous
// checkpoint in place. until > 0 pauses once that many epochs are done,
// leaving the budget (and so the schedules) untouched.
TrainResult run_training(TrainerState state, const SyntheticDataset& data, const std::filesystem::path& out,
                         const std::function<void(const EpochLog&)>& on_epoch = {}, int until = 0);

// Codes for every item of a split, inference mode.
CodeIndex encode(Model& model, const SyntheticDataset& data, const FrameSet& split, std::int64_t batch = 32);

// Inference-mode accuracy of the classifier on a split.
double evaluate_accuracy(Model& model, const SyntheticDataset& data, const FrameSet& split, std::int64_t batch = 32);

}  // namespace snnhash
