#ifndef PRIVTRANS_EXPERIMENT_H_
#define PRIVTRANS_EXPERIMENT_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "privtrans/cgan.h"
#include "privtrans/dataset.h"
#include "privtrans/distill.h"
#include "privtrans/dpsgd.h"
#include "privtrans/nets.h"

namespace privtrans {

inline constexpr int kConfigSchemaVersion = 1;

struct DatasetConfig {
  // "synthetic" generates the task; "folder" loads a SaveDataset layout.
  std::string source = "synthetic";
  std::string path;
  std::uint64_t seed = 1;
  int height = 32;
  int width = 32;
  int n_train = 200;
  int n_proxy = 50;
  int n_test = 53;
  std::uint64_t split_seed = 3;

  friend bool operator==(const DatasetConfig&, const DatasetConfig&) = default;
};

enum class DefenseKind { kNone, kGauss, kDpSgd, kDmp, kAkd };

const char* DefenseName(DefenseKind kind);
// Throws ConfigError on names outside none/gauss/dp_sgd/dmp/akd.
DefenseKind ParseDefenseName(const std::string& name);

struct DefenseConfig {
  DefenseKind kind = DefenseKind::kNone;
  double gauss_sigma = 0.0;
  DpConfig dp;
  DistillConfig distill;
  // Defaults to the teacher's architecture.
  std::optional<GeneratorArch> student_arch;
};

struct MetricsConfig {
  std::uint64_t fx_seed = 1234;
  int feature_dim = 64;
  int n_bins = 20;
};

struct ExperimentConfig {
  int schema_version = kConfigSchemaVersion;
  std::string name = "experiment";
  DatasetConfig dataset;
  GeneratorArch arch;
  TrainConfig teacher;
  DefenseConfig defense;
  int n_seeds = 5;
  std::uint64_t base_seed = 0;
  MetricsConfig metrics;
  int attack_draws = 1;

  // Checks every block; throws ConfigError.
  void Validate() const;
};

// JSON text <-> config. Unknown keys and unknown defense names are
// rejected; a missing schema_version is an error.
ExperimentConfig ParseConfig(const std::string& json_text);
ExperimentConfig LoadConfig(const std::filesystem::path& file);
std::string ConfigToJson(const ExperimentConfig& cfg);

// Seed of run k: base_seed + k. Every stage derives its own stream from it.
std::uint64_t RunSeed(const ExperimentConfig& cfg, int k);

struct SeedRecord {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string failed_stage;
  std::string error;

  double auc = 0.0;
  double nkid = 0.0;
  double kid_raw = 0.0;
  double gap = 0.0;
  double overlap = 0.0;
  std::optional<double> proxy_auc;
  double train_l1 = 0.0;  // last-epoch mean l1 of the deployed model's trainer
  std::uint64_t ground_truth_reads = 0;  // during the defense stage
  std::uint64_t teacher_queries = 0;
  std::string teacher_fingerprint;
  std::string deployed_fingerprint;
  std::string histogram_file;
  std::vector<double> member_scores;
  std::vector<double> nonmember_scores;
};

struct Aggregate {
  double mean = 0.0;
  double std = 0.0;  // sample (n - 1) convention, 0 when n == 1
  int n = 0;
};

// Mean and sample std; n == 0 gives zeros.
Aggregate Summarize(const std::vector<double>& values);

struct ExperimentReport {
  ExperimentConfig config;
  std::vector<SeedRecord> seeds;
  std::map<std::string, Aggregate> aggregate;  // auc, nkid, kid_raw, gap, ...
  int n_failed = 0;
  std::vector<double> seconds_per_seed;  // wall clock, not part of the JSON

  // Byte-deterministic given the config.
  std::string ToJson() const;
  std::string TimingJson() const;
};

// Trained teachers keyed by everything that determines them, so several
// defenses on the same seeds train each teacher once.
class TeacherCache {
 public:
  const GeneratorModel* Find(const std::string& key) const;
  const GeneratorModel& Insert(const std::string& key, GeneratorModel g,
                               std::vector<EpochLog> log);
  const std::vector<EpochLog>* Log(const std::string& key) const;
  std::size_t size() const { return models_.size(); }

 private:
  std::map<std::string, std::pair<GeneratorModel, std::vector<EpochLog>>> models_;
};

struct RunOptions {
  // When set: report.json, timing.json, hist_<seed>.csv, teacher and
  // distillation epoch logs and ckpt/<seed>/{teacher,deployed}.
  std::optional<std::filesystem::path> out_dir;
  TeacherCache* cache = nullptr;
  bool keep_scores = true;
  bool verbose = false;
};

ExperimentReport RunExperiment(const ExperimentConfig& cfg,
                               const RunOptions& opts = {});

// Attack + metrics on an already deployed model, for one run seed.
SeedRecord EvaluateDeployed(const ExperimentConfig& cfg, std::uint64_t seed,
                            const Translator& deployed,
                            const DatasetSplits& splits,
                            bool audit_proxy);

struct TradeoffPoint {
  std::string knob;
  std::string value;
  Aggregate auc;
  Aggregate nkid;
  bool ok = false;
  std::string error;
};

// Knobs: "gauss.sigma", "dp_sgd.sigma", "dp_sgd.clip_norm",
// "distill.lambda" and "defense" (values are defense names). Each point is
// a full RunExperiment; a failing point is recorded and the sweep goes on.
// With out_dir set, writes tradeoff.csv there.
std::vector<TradeoffPoint> RunTradeoffSweep(const ExperimentConfig& base,
                                            const std::string& knob,
                                            const std::vector<std::string>& values,
                                            const RunOptions& opts = {});
ExperimentConfig ApplyKnob(const ExperimentConfig& base, const std::string& knob,
                           const std::string& value);
std::string TradeoffCsv(const std::vector<TradeoffPoint>& points);

struct ComparisonRow {
  std::string name;
  std::string defense;
  Aggregate auc;
  Aggregate nkid;
};

struct Comparison {
  std::vector<ComparisonRow> rows;  // sorted by (mean auc, mean nkid)
  // Present when both an AKD and a DMP config were compared.
  std::optional<double> akd_minus_dmp_nkid;
  std::optional<double> akd_minus_dmp_auc;

  std::string ToJson() const;
};

// Ranks already computed reports. Throws ConfigError unless every report
// shares the dataset block, n_seeds and base_seed, or when fewer than one
// report is given.
Comparison CompareReports(const std::vector<ExperimentReport>& reports);
Comparison CompareDefenses(const std::vector<ExperimentConfig>& configs,
                           const RunOptions& opts = {});

// Loads a report.json back (for the `report` command).
ExperimentReport ParseReport(const std::string& json_text);
// One CSV row per seed plus aggregate rows.
std::string ReportCsv(const ExperimentReport& report);

}  // namespace privtrans

#endif  // PRIVTRANS_EXPERIMENT_H_
