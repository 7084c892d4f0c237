// Command-line front end: run / sweep / compare experiments, attack a saved
// generator, render reports, and export the synthetic dataset.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "privtrans/checkpoint.h"
#include "privtrans/dataset_io.h"
#include "privtrans/errors.h"
#include "privtrans/experiment.h"
#include "privtrans/mia.h"
#include "privtrans/version.h"

namespace fs = std::filesystem;
using namespace privtrans;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kBadConfig = 2, kBadInput = 3, kSeedsFailed = 4 };

std::string Slurp(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw IngestionError("cannot read " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void PrintSummary(const ExperimentReport& r) {
  std::printf("%s (%s): %d seed(s), %d failed\n", r.config.name.c_str(),
              DefenseName(r.config.defense.kind), r.config.n_seeds, r.n_failed);
  for (const auto& [key, a] : r.aggregate) {
    std::printf("  %-10s %.6f +- %.6f (n=%d)\n", key.c_str(), a.mean, a.std, a.n);
  }
}

int RunCmd(const std::string& config, const std::string& out, bool verbose) {
  const ExperimentConfig cfg = LoadConfig(config);
  RunOptions opts;
  opts.out_dir = out;
  opts.verbose = verbose;
  const ExperimentReport r = RunExperiment(cfg, opts);
  PrintSummary(r);
  std::printf("report written to %s\n", (fs::path(out) / "report.json").c_str());
  return r.n_failed > 0 ? kSeedsFailed : kOk;
}

int SweepCmd(const std::string& config, const std::string& knob,
             const std::vector<std::string>& values, const std::string& out,
             bool verbose) {
  const ExperimentConfig cfg = LoadConfig(config);
  RunOptions opts;
  opts.out_dir = out;
  opts.verbose = verbose;
  const auto points = RunTradeoffSweep(cfg, knob, values, opts);
  std::fputs(TradeoffCsv(points).c_str(), stdout);
  for (const auto& p : points) {
    if (!p.ok) return kSeedsFailed;
  }
  return kOk;
}

int CompareCmd(const std::vector<std::string>& configs, const std::string& out,
               bool verbose) {
  std::vector<ExperimentConfig> cfgs;
  for (const auto& c : configs) cfgs.push_back(LoadConfig(c));
  RunOptions opts;
  opts.out_dir = out;
  opts.verbose = verbose;
  const Comparison c = CompareDefenses(cfgs, opts);
  std::printf("%-28s %-8s %-20s %-20s\n", "name", "defense", "auc", "nkid");
  for (const auto& row : c.rows) {
    std::printf("%-28s %-8s %.4f +- %.4f     %.3f +- %.3f\n", row.name.c_str(),
                row.defense.c_str(), row.auc.mean, row.auc.std, row.nkid.mean,
                row.nkid.std);
  }
  if (c.akd_minus_dmp_nkid) {
    std::printf("akd - dmp: nkid %+.3f, auc %+.4f\n", *c.akd_minus_dmp_nkid,
                *c.akd_minus_dmp_auc);
  }
  return kOk;
}

int AttackCmd(const std::string& checkpoint, const std::string& dataset,
              std::uint64_t seed, int draws, const std::string& out) {
  const GeneratorModel g = LoadGenerator(checkpoint);
  const DatasetSplits splits = LoadDataset(dataset);
  const GeneratorTranslator tr(g);
  const AttackEvalSet set = BuildAttackSet(splits, seed);
  const auto records = AttackScores(tr, set, seed, draws);
  const RocResult roc = AucRoc(records);
  nlohmann::ordered_json j = {{"checkpoint", checkpoint},
                              {"dataset", dataset},
                              {"seed", seed},
                              {"n_draws", draws},
                              {"n_members", set.members.size()},
                              {"n_nonmembers", set.nonmembers.size()},
                              {"auc", roc.auc}};
  nlohmann::ordered_json recs = nlohmann::ordered_json::array();
  for (const auto& r : records) {
    recs.push_back({{"id", r.sample_id}, {"score", r.score}, {"member", r.is_member}});
  }
  j["records"] = recs;
  if (!out.empty()) {
    std::ofstream f(out);
    f << j.dump(2) << "\n";
  }
  std::printf("attack auc %.6f over %zu members / %zu non-members\n", roc.auc,
              set.members.size(), set.nonmembers.size());
  return kOk;
}

int ReportCmd(const std::string& in, const std::string& format) {
  fs::path file = in;
  if (fs::is_directory(file)) file /= "report.json";
  const ExperimentReport r = ParseReport(Slurp(file));
  if (format == "csv") {
    std::fputs(ReportCsv(r).c_str(), stdout);
  } else {
    std::fputs(r.ToJson().c_str(), stdout);
  }
  return kOk;
}

int DatasetCmd(const std::string& config, const std::string& out) {
  ExperimentConfig cfg;
  if (!config.empty()) cfg = LoadConfig(config);
  if (cfg.dataset.source != "synthetic") {
    throw ConfigError("dataset export needs a synthetic dataset block");
  }
  const auto& d = cfg.dataset;
  const auto samples =
      GenerateSyntheticTask(d.seed, d.n_train + d.n_proxy + d.n_test, d.height, d.width);
  SaveDataset(MakeSplits(samples, d.n_train, d.n_proxy, d.n_test, d.split_seed), out);
  std::printf("wrote %d/%d/%d samples to %s\n", d.n_train, d.n_proxy, d.n_test,
              out.c_str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"privtrans: membership-inference defenses for image translation"};
  app.set_version_flag("--version", std::string(kVersionString));
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Progress on stderr");

  std::string config, out, knob, checkpoint, dataset, in, format = "json";
  std::vector<std::string> values, configs;
  std::uint64_t seed = 0;
  int draws = 1;

  auto* run = app.add_subcommand("run", "Run one experiment config over all seeds");
  run->add_option("--config", config, "Experiment JSON")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out, "Output directory")->required();

  auto* sweep = app.add_subcommand("sweep", "Tradeoff sweep over one knob");
  sweep->add_option("--config", config, "Base experiment JSON")->required()->check(CLI::ExistingFile);
  sweep->add_option("--knob", knob,
                    "gauss.sigma, dp_sgd.sigma, dp_sgd.clip_norm, distill.lambda or defense")
      ->required();
  sweep->add_option("--values", values, "Comma-separated knob values")
      ->required()
      ->delimiter(',');
  sweep->add_option("--out", out, "Output directory")->required();

  auto* compare = app.add_subcommand("compare", "Rank defenses sharing a dataset block");
  compare->add_option("--configs", configs, "Comma-separated experiment JSONs")
      ->required()
      ->delimiter(',')
      ->check(CLI::ExistingFile);
  compare->add_option("--out", out, "Output directory")->required();

  auto* attack = app.add_subcommand("attack", "Reconstruction-loss attack on a checkpoint");
  attack->add_option("--checkpoint", checkpoint, "Generator checkpoint directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  attack->add_option("--dataset", dataset, "Dataset directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  attack->add_option("--seed", seed, "Attack-set and noise seed");
  attack->add_option("--draws", draws, "Noise draws per sample")->check(CLI::PositiveNumber);
  attack->add_option("--out", out, "Write per-sample scores as JSON");

  auto* report = app.add_subcommand("report", "Print a stored report");
  report->add_option("--in", in, "Run directory or report.json")->required()->check(CLI::ExistingPath);
  report->add_option("--format", format, "json or csv")
      ->check(CLI::IsMember({"json", "csv"}));

  auto* data = app.add_subcommand("dataset", "Export the synthetic dataset as PNG folders");
  data->add_option("--config", config, "Experiment JSON (defaults if omitted)")
      ->check(CLI::ExistingFile);
  data->add_option("--out", out, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return RunCmd(config, out, verbose);
    if (*sweep) return SweepCmd(config, knob, values, out, verbose);
    if (*compare) return CompareCmd(configs, out, verbose);
    if (*attack) return AttackCmd(checkpoint, dataset, seed, draws, out);
    if (*report) return ReportCmd(in, format);
    if (*data) return DatasetCmd(config, out);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kBadConfig;
  } catch (const IngestionError& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return kBadInput;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kFailure;
  }
  return kFailure;
}
