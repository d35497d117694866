#include "snnhash/ablation.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>

namespace snnhash {

Variant parse_variant(const std::string& name) {
  if (name == "base") return Variant::kBase;
  if (name == "2d-swm") return Variant::k2dSwm;
  if (name == "all-ssa") return Variant::kAllSsa;
  if (name == "hard-loss") return Variant::kHardLoss;
  throw std::invalid_argument("unknown variant '" + name + "' (2d-swm, all-ssa, hard-loss)");
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kBase: return "base";
    case Variant::k2dSwm: return "2d-swm";
    case Variant::kAllSsa: return "all-ssa";
    case Variant::kHardLoss: return "hard-loss";
  }
  return "?";
}

RunConfig apply_variant(RunConfig c, Variant v) {
  switch (v) {
    case Variant::kBase: break;
    case Variant::k2dSwm:
      c.model.swm_dims = 2;
      c.model.stateless_neurons = true;
      break;
    case Variant::kAllSsa:
      for (auto& s : c.model.stages) s.block = BlockType::kSsa;
      break;
    case Variant::kHardLoss: c.train.soft_loss = false; break;
  }
  return c;
}

nlohmann::json RunSummary::to_json() const {
  nlohmann::json log_j = nlohmann::json::array();
  for (const auto& e : log) log_j.push_back(e.to_json());
  return {{"name", name},
          {"epochs_run", epochs_run},
          {"final_train_accuracy", final_train_accuracy},
          {"best_train_accuracy", best_train_accuracy},
          {"query_accuracy", query_accuracy},
          {"retrieval", retrieval.to_json()},
          {"aborted", aborted},
          {"reason", reason},
          {"log", log_j}};
}

RunSummary train_and_evaluate(const RunConfig& config, const SyntheticDataset& data, std::size_t topn,
                              const std::filesystem::path& out, const std::string& name) {
  RunSummary s;
  s.name = name;
  auto r = run_training(init_training(config, data), data, out);
  s.aborted = r.aborted;
  s.reason = r.reason;
  s.log = r.state.log;
  s.epochs_run = static_cast<int>(s.log.size());
  for (const auto& e : s.log) s.best_train_accuracy = std::max(s.best_train_accuracy, e.accuracy);
  if (!s.log.empty()) s.final_train_accuracy = s.log.back().accuracy;
  auto& m = r.state.model;
  s.query_accuracy = evaluate_accuracy(m, data, data.query);
  auto db = encode(m, data, data.train);
  auto q = encode(m, data, data.query);
  s.retrieval = evaluate_retrieval(q, db, std::min(topn, db.size()), RelevanceSpec{data.similar_pairs});
  return s;
}

std::string comparison_table(const std::vector<RunSummary>& runs) {
  std::string out = "run         epochs  train_acc  best_acc  query_acc   mAP@n   NDCG@n\n";
  char line[160];
  for (const auto& r : runs) {
    std::snprintf(line, sizeof line, "%-10s  %6d  %9.4f  %8.4f  %9.4f  %6.4f  %7.4f%s\n", r.name.c_str(), r.epochs_run,
                  r.final_train_accuracy, r.best_train_accuracy, r.query_accuracy, r.retrieval.map, r.retrieval.ndcg,
                  r.aborted ? "  (aborted)" : "");
    out += line;
  }
  return out;
}

}  // namespace snnhash
