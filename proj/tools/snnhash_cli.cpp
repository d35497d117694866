// snnhash: data generation, training, retrieval, energy and ablation runs.
// Exit codes: 0 ok, 1 usage, 2 runtime failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "snnhash/ablation.hpp"
#include "snnhash/energy.hpp"
#include "snnhash/serialize.hpp"
#include "snnhash/train.hpp"

using namespace snnhash;
namespace fs = std::filesystem;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

RunConfig read_run_config(const std::string& path) {
  if (path.empty()) return RunConfig{};
  return run_config_from_json(read_json(path));
}

// explicit dataset directory, or the config's data spec generated on the fly
SyntheticDataset obtain_data(const std::string& dir, const RunConfig& rc) {
  if (!dir.empty()) return load_dataset(dir);
  return gen_data(rc.data);
}

void write_text(const fs::path& p, const std::string& s) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  write_file_atomic(p, s);
}

struct Opts {
  std::string config, out, data, checkpoint, variant, task, split = "query";
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> n;
  std::optional<int> epochs, bits;
  int until = 0;
  std::size_t topn = 10;
  bool self = false, zero = false, resume = false;
};

int cmd_gen_data(const Opts& o) {
  DataSpec spec;
  if (!o.config.empty()) {
    auto j = read_json(o.config);
    spec = data_spec_from_json(j.contains("data") ? j.at("data") : j);
  }
  if (!o.task.empty()) spec.task = o.task;
  if (o.n) spec.n = *o.n;
  if (o.seed) spec.seed = *o.seed;
  auto d = gen_data(spec);
  save_dataset(d, o.out);
  std::printf("%s: %zu train, %zu query, %d classes, T=%lld %lldx%lld -> %s\n", d.task.c_str(), d.train.size(),
              d.query.size(), d.classes, static_cast<long long>(d.steps), static_cast<long long>(d.height),
              static_cast<long long>(d.width), o.out.c_str());
  return 0;
}

int cmd_train(const Opts& o) {
  TrainerState st;
  RunConfig rc = read_run_config(o.config);
  if (o.seed) rc.seed = *o.seed;
  if (o.epochs) rc.train.epochs = *o.epochs;
  auto data = obtain_data(o.data, rc);
  if (o.resume && fs::exists(fs::path(o.out) / "manifest.json")) {
    // the budget fixes the lr and round schedules, so it cannot change mid-run
    if (o.epochs) throw UsageError("--epochs cannot be combined with --resume");
    st = load_checkpoint(o.out);
    std::fprintf(stderr, "resuming at epoch %d\n", st.next_epoch);
  } else {
    adapt_model_to_data(rc.model, data);
    st = init_training(rc, data);
  }
  auto r = run_training(std::move(st), data, o.out, [](const EpochLog& e) {
    std::printf("epoch %3d  loss %.5f  sim %.5f  cls %.5f  acc %.4f  lambda %.3f%s%s\n", e.epoch, e.loss, e.similarity,
                e.classification, e.accuracy, e.lambda, e.use_soft ? "  soft" : "",
                e.finalized ? "  round-end" : "");
    std::fflush(stdout);
  }, o.until);
  const fs::path out(o.out);
  nlohmann::json log = nlohmann::json::array();
  for (const auto& e : r.state.log) log.push_back(e.to_json());
  write_json(out / "train_log.json", log);
  if (!r.state.soft.empty()) {
    write_json(out / "soft_matrix.json",
               soft_matrix_to_json(r.state.soft, r.state.config.model.classes, &r.state.accumulator));
  }
  if (r.aborted) {
    std::fprintf(stderr, "training aborted: %s (last good checkpoint kept)\n", r.reason.c_str());
    return 2;
  }
  return 0;
}

int cmd_retrieve(const Opts& o) {
  auto st = load_checkpoint(o.checkpoint);
  const auto L = st.config.model.hash_bits;
  if (o.bits && *o.bits != L) {
    throw std::runtime_error("checkpoint produces " + std::to_string(L) + "-bit codes, " + std::to_string(*o.bits) +
                             " requested");
  }
  auto data = obtain_data(o.data, st.config);
  auto q = encode(st.model, data, data.query);
  auto db = o.self ? q : encode(st.model, data, data.train);
  auto rep = evaluate_retrieval(q, db, o.topn, RelevanceSpec{data.similar_pairs});
  for (const auto& d : rep.diagnostics) std::fprintf(stderr, "%s\n", d.c_str());
  std::cout << rep.to_text();
  if (!o.out.empty()) {
    write_json(fs::path(o.out) / "retrieval.json", rep.to_json());
    write_text(fs::path(o.out) / "retrieval.txt", rep.to_text());
  }
  return 0;
}

int cmd_energy(const Opts& o) {
  auto st = load_checkpoint(o.checkpoint);
  auto data = obtain_data(o.data, st.config);
  if (o.split != "query" && o.split != "train") throw UsageError("--split must be query or train");
  auto x = data.all(o.split == "train" ? data.train : data.query);
  if (o.zero) x = Tensor::zeros(x.shape());
  auto rep = profile_model(st.model, x, 32);
  const std::string text = rep.to_json().dump(2) + "\n";
  std::cout << text;
  if (!o.out.empty()) write_text(fs::path(o.out) / "energy.json", text);
  return 0;
}

int cmd_ablate(const Opts& o) {
  RunConfig base = read_run_config(o.config);
  if (o.seed) base.seed = *o.seed;
  if (o.epochs) base.train.epochs = *o.epochs;
  auto data = obtain_data(o.data, base);
  adapt_model_to_data(base.model, data);
  const auto v = parse_variant(o.variant);
  const fs::path out(o.out);
  std::vector<RunSummary> runs;
  for (auto which : {Variant::kBase, v}) {
    auto rc = apply_variant(base, which);
    const auto name = variant_name(which);
    std::fprintf(stderr, "training %s\n", name.c_str());
    runs.push_back(train_and_evaluate(rc, data, o.topn, o.out.empty() ? fs::path() : out / name, name));
  }
  const auto table = comparison_table(runs);
  std::cout << table;
  if (!o.out.empty()) {
    write_text(out / "ablation.txt", table);
    write_json(out / "ablation.json", nlohmann::json{{"variant", o.variant},
                                                     {"topn", o.topn},
                                                     {"base", runs[0].to_json()},
                                                     {"variant_run", runs[1].to_json()}});
  }
  for (const auto& r : runs)
    if (r.aborted) return 2;
  return 0;
}

int cmd_export_soft(const Opts& o) {
  auto st = load_checkpoint(o.checkpoint);
  if (st.soft.empty()) throw std::runtime_error("checkpoint has no finalized soft similarity matrix yet");
  const auto text = soft_matrix_to_json(st.soft, st.config.model.classes, &st.accumulator).dump(2) + "\n";
  if (o.out.empty()) {
    std::cout << text;
  } else {
    write_text(o.out, text);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spiking hashing toolkit"};
  app.require_subcommand(1);
  Opts o;

  auto seed = [&](CLI::App* c) {
    c->add_option_function<std::uint64_t>("--seed", [&](const std::uint64_t& v) { o.seed = v; }, "seed override");
  };
  auto epochs = [&](CLI::App* c) {
    c->add_option_function<int>("--epochs", [&](const int& v) { o.epochs = v; }, "epoch budget override");
  };

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  gen->add_option("--config", o.config, "JSON data spec (or run config with a data section)")->check(CLI::ExistingFile);
  gen->add_option("--task", o.task, "moving-bar | static-shapes");
  gen->add_option_function<std::int64_t>("--n", [&](const std::int64_t& v) { o.n = v; }, "training items");
  seed(gen);
  gen->add_option("--out", o.out, "output directory")->required();

  auto* train = app.add_subcommand("train", "train a model, writing a checkpoint after every epoch");
  train->add_option("--config", o.config, "JSON run config")->check(CLI::ExistingFile);
  train->add_option("--data", o.data, "dataset directory (default: generate from the config)");
  seed(train);
  epochs(train);
  train->add_option("--until", o.until, "pause after this many epochs (resume later with --resume)")
      ->check(CLI::NonNegativeNumber);
  train->add_flag("--resume", o.resume, "continue from the checkpoint in --out");
  train->add_option("--out", o.out, "checkpoint directory")->required();

  auto* ret = app.add_subcommand("retrieve", "Hamming retrieval of the query split against the database");
  ret->add_option("--checkpoint", o.checkpoint)->required()->check(CLI::ExistingDirectory);
  ret->add_option("--data", o.data, "dataset directory (default: regenerate from the checkpoint config)");
  ret->add_option_function<int>("--bits", [&](const int& v) { o.bits = v; }, "expected code length");
  ret->add_option("--topn", o.topn, "ranking depth")->check(CLI::PositiveNumber);
  ret->add_flag("--self", o.self, "use the query split as the database");
  ret->add_option("--out", o.out, "report directory");

  auto* en = app.add_subcommand("energy", "energy estimate over a sample split");
  en->add_option("--checkpoint", o.checkpoint)->required()->check(CLI::ExistingDirectory);
  en->add_option("--data", o.data);
  en->add_option("--split", o.split, "query | train");
  en->add_flag("--zero", o.zero, "replace the samples with all-zero input");
  en->add_option("--out", o.out, "report directory");

  auto* ab = app.add_subcommand("ablate", "train base and variant under the same seed and budget");
  ab->add_option("--config", o.config, "JSON run config")->check(CLI::ExistingFile);
  ab->add_option("--data", o.data);
  ab->add_option("--variant", o.variant, "2d-swm | all-ssa | hard-loss")
      ->required()
      ->check(CLI::IsMember({"2d-swm", "all-ssa", "hard-loss"}));
  seed(ab);
  epochs(ab);
  ab->add_option("--topn", o.topn)->check(CLI::PositiveNumber);
  ab->add_option("--out", o.out, "output directory");

  auto* ex = app.add_subcommand("export-soft-matrix", "write the finalized soft similarity matrix as JSON");
  ex->add_option("--checkpoint", o.checkpoint)->required()->check(CLI::ExistingDirectory);
  ex->add_option("--out", o.out, "output file (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);  // help goes to stdout, errors to stderr
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*gen) return cmd_gen_data(o);
    if (*train) return cmd_train(o);
    if (*ret) return cmd_retrieve(o);
    if (*en) return cmd_energy(o);
    if (*ab) return cmd_ablate(o);
    if (*ex) return cmd_export_soft(o);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
