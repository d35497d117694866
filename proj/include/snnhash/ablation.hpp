#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "snnhash/train.hpp"

namespace snnhash {

enum class Variant { kBase, k2dSwm, kAllSsa, kHardLoss };

Variant parse_variant(const std::string& name);  // 2d-swm | all-ssa | hard-loss
std::string variant_name(Variant v);

// 2d-swm also makes every neuron stateless, so the variant is a per-frame map
// and cannot tell a sequence from its reversal.
RunConfig apply_variant(RunConfig config, Variant v);

struct RunSummary {
  std::string name;
  int epochs_run = 0;
  double final_train_accuracy = 0, best_train_accuracy = 0;
  double query_accuracy = 0;
  RetrievalReport retrieval;
  bool aborted = false;
  std::string reason;
  std::vector<EpochLog> log;

  nlohmann::json to_json() const;
};

// Train from scratch, then encode query against train (the database).
// `out` empty: no checkpoint.
RunSummary train_and_evaluate(const RunConfig& config, const SyntheticDataset& data, std::size_t topn,
                              const std::filesystem::path& out = {}, const std::string& name = "run");

std::string comparison_table(const std::vector<RunSummary>& runs);

}  // namespace snnhash
