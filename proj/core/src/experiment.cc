#include "privtrans/experiment.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <json.hpp>

#include "privtrans/checkpoint.h"
#include "privtrans/dataset_io.h"
#include "privtrans/errors.h"
#include "privtrans/metrics.h"
#include "privtrans/mia.h"
#include "privtrans/proxy_audit.h"
#include "privtrans/version.h"

namespace privtrans {

namespace fs = std::filesystem;
using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr int kReportVersion = 1;

// Stream tags derived from the run seed.
constexpr std::uint64_t kTagDistill = 0xD157;
constexpr std::uint64_t kTagAttackSet = 0xA77A;
constexpr std::uint64_t kTagAttackNoise = 0x5C0E;
constexpr std::uint64_t kTagTestDraws = 0x7E57;
constexpr std::uint64_t kTagTrainDraws = 0x7A1D;
constexpr std::uint64_t kTagAudit = 0x9A0D;

std::uint64_t Derive(std::uint64_t seed, std::uint64_t tag) {
  return Mix64(seed ^ Mix64(tag));
}

void CheckKeys(const json& obj, const std::set<std::string>& allowed,
               const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.count(key)) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

template <typename T>
void Read(const json& obj, const char* key, T& out, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError("bad value for '" + std::string(key) + "' in " + where);
  }
}

ordered_json ArchJson(const GeneratorArch& a) {
  return {{"depth", a.depth},
          {"base_channels", a.base_channels},
          {"dropout", a.dropout},
          {"dropout_blocks", a.dropout_blocks}};
}

GeneratorArch ParseArch(const json& j, const std::string& where) {
  CheckKeys(j, {"depth", "base_channels", "dropout", "dropout_blocks"}, where);
  GeneratorArch a;
  Read(j, "depth", a.depth, where);
  Read(j, "base_channels", a.base_channels, where);
  Read(j, "dropout", a.dropout, where);
  Read(j, "dropout_blocks", a.dropout_blocks, where);
  return a;
}

const char* DpTargetName(DpTarget t) {
  switch (t) {
    case DpTarget::kGenerator: return "generator";
    case DpTarget::kDiscriminator: return "discriminator";
    case DpTarget::kBoth: return "both";
  }
  return "both";
}

DpTarget ParseDpTarget(const std::string& s) {
  if (s == "generator") return DpTarget::kGenerator;
  if (s == "discriminator") return DpTarget::kDiscriminator;
  if (s == "both") return DpTarget::kBoth;
  throw ConfigError("dp_sgd.applies_to must be generator, discriminator or both");
}

const char* TermName(StudentAdversarialTerm t) {
  return t == StudentAdversarialTerm::kLogD ? "log_d" : "non_saturating";
}

StudentAdversarialTerm ParseTerm(const std::string& s) {
  if (s == "non_saturating") return StudentAdversarialTerm::kNonSaturating;
  if (s == "log_d") return StudentAdversarialTerm::kLogD;
  throw ConfigError("distill.adversarial_term must be non_saturating or log_d");
}

// Teacher and student architectures take image geometry from the dataset.
GeneratorArch WithGeometry(GeneratorArch a, const DatasetConfig& d) {
  a.in_channels = 3;
  a.out_channels = 3;
  a.height = d.height;
  a.width = d.width;
  return a;
}

std::string TeacherKey(const ExperimentConfig& cfg, std::uint64_t seed) {
  ExperimentConfig k;
  k.dataset = cfg.dataset;
  k.arch = cfg.arch;
  k.teacher = cfg.teacher;
  json j = json::parse(ConfigToJson(k));
  return j.at("dataset").dump() + j.at("arch").dump() + j.at("teacher").dump() +
         "#" + std::to_string(seed);
}

DatasetSplits BuildSplits(const DatasetConfig& d) {
  if (d.source == "folder") {
    DatasetSplits s = LoadDataset(d.path);
    for (const auto* part : {&s.train, &s.proxy, &s.test}) {
      for (const auto& sample : *part) {
        if (sample.input().height() != d.height ||
            sample.input().width() != d.width || sample.input().channels() != 3) {
          throw IngestionError("sample " + sample.id() +
                               " does not match the configured 3x" +
                               std::to_string(d.height) + "x" +
                               std::to_string(d.width) + " geometry");
        }
      }
    }
    return s;
  }
  const auto samples = GenerateSyntheticTask(
      d.seed, d.n_train + d.n_proxy + d.n_test, d.height, d.width);
  return MakeSplits(samples, d.n_train, d.n_proxy, d.n_test, d.split_seed);
}

void WriteText(const fs::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary);
  out << text;
  if (!out) throw IngestionError("cannot write " + file.string());
}

std::string Num(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string TeacherLogCsv(const std::vector<EpochLog>& log) {
  std::string s = "epoch,d_loss,g_loss,train_l1\n";
  for (const auto& e : log) {
    s += std::to_string(e.epoch) + "," + Num(e.d_loss) + "," + Num(e.g_loss) +
         "," + Num(e.l1) + "\n";
  }
  return s;
}

std::string DistillLogCsv(const std::vector<DistillEpochLog>& log) {
  std::string s = "epoch,ds_loss,gs_loss,imitation_l1\n";
  for (const auto& e : log) {
    s += std::to_string(e.epoch) + "," + Num(e.ds_loss) + "," +
         Num(e.gs_loss) + "," + Num(e.imitation_l1) + "\n";
  }
  return s;
}

std::string HistogramCsv(const LossHistogram& h) {
  std::string s = "bin_left,bin_right,member_p,nonmember_p\n";
  for (std::size_t k = 0; k < h.member_p.size(); ++k) {
    s += Num(h.edges[k]) + "," + Num(h.edges[k + 1]) + "," +
         Num(h.member_p[k]) + "," + Num(h.nonmember_p[k]) + "\n";
  }
  return s;
}

std::vector<ImageTensor> Inputs(const std::vector<PairedSample>& s) {
  std::vector<ImageTensor> out;
  for (const auto& p : s) out.push_back(p.input());
  return out;
}

std::vector<ImageTensor> Targets(const std::vector<PairedSample>& s) {
  std::vector<ImageTensor> out;
  for (const auto& p : s) out.push_back(p.target());
  return out;
}

ordered_json AggregateJson(const Aggregate& a) {
  return {{"mean", a.mean}, {"std", a.std}, {"n", a.n}};
}

Aggregate ParseAggregate(const json& j) {
  return {j.at("mean").get<double>(), j.at("std").get<double>(),
          j.at("n").get<int>()};
}

void Aggregates(ExperimentReport& r) {
  std::map<std::string, std::vector<double>> v;
  r.n_failed = 0;
  for (const auto& s : r.seeds) {
    if (!s.ok) {
      ++r.n_failed;
      continue;
    }
    v["auc"].push_back(s.auc);
    v["nkid"].push_back(s.nkid);
    v["kid_raw"].push_back(s.kid_raw);
    v["gap"].push_back(s.gap);
    v["overlap"].push_back(s.overlap);
    v["train_l1"].push_back(s.train_l1);
    if (s.proxy_auc) v["proxy_auc"].push_back(*s.proxy_auc);
  }
  r.aggregate.clear();
  for (const char* key : {"auc", "nkid", "kid_raw", "gap", "overlap", "train_l1"}) {
    r.aggregate[key] = Summarize(v[key]);
  }
  if (!v["proxy_auc"].empty()) r.aggregate["proxy_auc"] = Summarize(v["proxy_auc"]);
}

}  // namespace

const char* DefenseName(DefenseKind kind) {
  switch (kind) {
    case DefenseKind::kNone: return "none";
    case DefenseKind::kGauss: return "gauss";
    case DefenseKind::kDpSgd: return "dp_sgd";
    case DefenseKind::kDmp: return "dmp";
    case DefenseKind::kAkd: return "akd";
  }
  return "none";
}

DefenseKind ParseDefenseName(const std::string& name) {
  for (DefenseKind k : {DefenseKind::kNone, DefenseKind::kGauss,
                        DefenseKind::kDpSgd, DefenseKind::kDmp,
                        DefenseKind::kAkd}) {
    if (name == DefenseName(k)) return k;
  }
  throw ConfigError("unknown defense '" + name +
                    "' (expected none, gauss, dp_sgd, dmp or akd)");
}

void ExperimentConfig::Validate() const {
  if (schema_version != kConfigSchemaVersion) {
    throw ConfigError("unsupported schema_version " +
                      std::to_string(schema_version));
  }
  if (n_seeds < 1) throw ConfigError("n_seeds must be >= 1");
  if (attack_draws < 1) throw ConfigError("attack.n_draws must be >= 1");
  if (dataset.source != "synthetic" && dataset.source != "folder") {
    throw ConfigError("dataset.source must be synthetic or folder");
  }
  if (dataset.source == "folder" && dataset.path.empty()) {
    throw ConfigError("dataset.path is required for folder datasets");
  }
  if (dataset.height < 8 || dataset.width < 8) {
    throw ConfigError("dataset images must be at least 8x8");
  }
  if (dataset.source == "synthetic" &&
      (dataset.n_train < 1 || dataset.n_test < 1 || dataset.n_proxy < 0)) {
    throw ConfigError("dataset split sizes must be positive");
  }
  WithGeometry(arch, dataset).Validate();
  DiscriminatorFor(WithGeometry(arch, dataset), teacher.disc_base_channels)
      .Validate();
  teacher.Validate();
  if (metrics.feature_dim < 1) throw ConfigError("metrics.feature_dim must be >= 1");
  if (metrics.n_bins < 2) throw ConfigError("metrics.n_bins must be >= 2");
  switch (defense.kind) {
    case DefenseKind::kGauss:
      if (!(defense.gauss_sigma >= 0.0)) {
        throw ConfigError("gauss sigma must be >= 0");
      }
      break;
    case DefenseKind::kDpSgd:
      defense.dp.Validate();
      break;
    case DefenseKind::kDmp:
    case DefenseKind::kAkd:
      defense.distill.Validate();
      if (defense.student_arch) {
        WithGeometry(*defense.student_arch, dataset).Validate();
      }
      break;
    case DefenseKind::kNone:
      break;
  }
}

ExperimentConfig ParseConfig(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  CheckKeys(j, {"schema_version", "name", "dataset", "arch", "teacher",
                "defense", "n_seeds", "base_seed", "metrics", "attack"},
            "config");
  if (!j.contains("schema_version")) throw ConfigError("schema_version is mandatory");
  ExperimentConfig cfg;
  Read(j, "schema_version", cfg.schema_version, "config");
  if (cfg.schema_version != kConfigSchemaVersion) {
    throw ConfigError("unsupported schema_version " +
                      std::to_string(cfg.schema_version));
  }
  Read(j, "name", cfg.name, "config");
  Read(j, "n_seeds", cfg.n_seeds, "config");
  Read(j, "base_seed", cfg.base_seed, "config");

  if (j.contains("dataset")) {
    const json& d = j["dataset"];
    CheckKeys(d, {"source", "path", "seed", "height", "width", "n_train",
                  "n_proxy", "n_test", "split_seed"},
              "dataset");
    Read(d, "source", cfg.dataset.source, "dataset");
    Read(d, "path", cfg.dataset.path, "dataset");
    Read(d, "seed", cfg.dataset.seed, "dataset");
    Read(d, "height", cfg.dataset.height, "dataset");
    Read(d, "width", cfg.dataset.width, "dataset");
    Read(d, "n_train", cfg.dataset.n_train, "dataset");
    Read(d, "n_proxy", cfg.dataset.n_proxy, "dataset");
    Read(d, "n_test", cfg.dataset.n_test, "dataset");
    Read(d, "split_seed", cfg.dataset.split_seed, "dataset");
  }
  if (j.contains("arch")) cfg.arch = ParseArch(j["arch"], "arch");
  if (j.contains("teacher")) {
    const json& t = j["teacher"];
    CheckKeys(t, {"epochs", "batch_size", "lr", "beta1", "beta2", "lambda_l1",
                  "disc_base_channels"},
              "teacher");
    Read(t, "epochs", cfg.teacher.epochs, "teacher");
    Read(t, "batch_size", cfg.teacher.batch_size, "teacher");
    Read(t, "lr", cfg.teacher.lr, "teacher");
    Read(t, "beta1", cfg.teacher.beta1, "teacher");
    Read(t, "beta2", cfg.teacher.beta2, "teacher");
    Read(t, "lambda_l1", cfg.teacher.lambda_l1, "teacher");
    Read(t, "disc_base_channels", cfg.teacher.disc_base_channels, "teacher");
  }
  if (j.contains("defense")) {
    const json& d = j["defense"];
    CheckKeys(d, {"name", "sigma", "dp_sgd", "distill"}, "defense");
    std::string name = "none";
    Read(d, "name", name, "defense");
    cfg.defense.kind = ParseDefenseName(name);
    const DefenseKind k = cfg.defense.kind;
    if (d.contains("sigma") && k != DefenseKind::kGauss) {
      throw ConfigError("defense.sigma only applies to gauss");
    }
    if (d.contains("dp_sgd") && k != DefenseKind::kDpSgd) {
      throw ConfigError("defense.dp_sgd only applies to dp_sgd");
    }
    if (d.contains("distill") && k != DefenseKind::kAkd && k != DefenseKind::kDmp) {
      throw ConfigError("defense.distill only applies to akd and dmp");
    }
    Read(d, "sigma", cfg.defense.gauss_sigma, "defense");
    if (d.contains("dp_sgd")) {
      const json& p = d["dp_sgd"];
      CheckKeys(p, {"clip_norm", "sigma", "applies_to"}, "defense.dp_sgd");
      Read(p, "clip_norm", cfg.defense.dp.clip_norm, "defense.dp_sgd");
      Read(p, "sigma", cfg.defense.dp.sigma, "defense.dp_sgd");
      std::string target = "both";
      Read(p, "applies_to", target, "defense.dp_sgd");
      cfg.defense.dp.applies_to = ParseDpTarget(target);
    }
    cfg.defense.distill.mode =
        k == DefenseKind::kDmp ? DistillMode::kDmp : DistillMode::kAkd;
    if (d.contains("distill")) {
      const json& p = d["distill"];
      CheckKeys(p, {"epochs", "batch_size", "lambda", "lr", "beta1", "beta2",
                    "disc_base_channels", "adversarial_term", "student_arch"},
                "defense.distill");
      DistillConfig& dc = cfg.defense.distill;
      Read(p, "epochs", dc.epochs, "defense.distill");
      Read(p, "batch_size", dc.batch_size, "defense.distill");
      Read(p, "lambda", dc.lambda, "defense.distill");
      Read(p, "lr", dc.lr, "defense.distill");
      Read(p, "beta1", dc.beta1, "defense.distill");
      Read(p, "beta2", dc.beta2, "defense.distill");
      Read(p, "disc_base_channels", dc.disc_base_channels, "defense.distill");
      std::string term = "non_saturating";
      Read(p, "adversarial_term", term, "defense.distill");
      dc.adversarial_term = ParseTerm(term);
      if (p.contains("student_arch")) {
        cfg.defense.student_arch =
            ParseArch(p["student_arch"], "defense.distill.student_arch");
      }
    }
  }
  if (j.contains("metrics")) {
    const json& m = j["metrics"];
    CheckKeys(m, {"fx_seed", "feature_dim", "n_bins"}, "metrics");
    Read(m, "fx_seed", cfg.metrics.fx_seed, "metrics");
    Read(m, "feature_dim", cfg.metrics.feature_dim, "metrics");
    Read(m, "n_bins", cfg.metrics.n_bins, "metrics");
  }
  if (j.contains("attack")) {
    CheckKeys(j["attack"], {"n_draws"}, "attack");
    Read(j["attack"], "n_draws", cfg.attack_draws, "attack");
  }
  cfg.Validate();
  return cfg;
}

ExperimentConfig LoadConfig(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot read config " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ParseConfig(ss.str());
}

std::string ConfigToJson(const ExperimentConfig& cfg) {
  const DatasetConfig& d = cfg.dataset;
  ordered_json dataset = {{"source", d.source}};
  if (d.source == "folder") dataset["path"] = d.path;
  dataset["seed"] = d.seed;
  dataset["height"] = d.height;
  dataset["width"] = d.width;
  dataset["n_train"] = d.n_train;
  dataset["n_proxy"] = d.n_proxy;
  dataset["n_test"] = d.n_test;
  dataset["split_seed"] = d.split_seed;

  const TrainConfig& t = cfg.teacher;
  const ordered_json teacher = {{"epochs", t.epochs},
                                {"batch_size", t.batch_size},
                                {"lr", t.lr},
                                {"beta1", t.beta1},
                                {"beta2", t.beta2},
                                {"lambda_l1", t.lambda_l1},
                                {"disc_base_channels", t.disc_base_channels}};

  ordered_json defense = {{"name", DefenseName(cfg.defense.kind)}};
  switch (cfg.defense.kind) {
    case DefenseKind::kGauss:
      defense["sigma"] = cfg.defense.gauss_sigma;
      break;
    case DefenseKind::kDpSgd:
      defense["dp_sgd"] = {{"clip_norm", cfg.defense.dp.clip_norm},
                           {"sigma", cfg.defense.dp.sigma},
                           {"applies_to", DpTargetName(cfg.defense.dp.applies_to)}};
      break;
    case DefenseKind::kAkd:
    case DefenseKind::kDmp: {
      const DistillConfig& dc = cfg.defense.distill;
      ordered_json p = {{"epochs", dc.epochs},
                        {"batch_size", dc.batch_size},
                        {"lambda", dc.lambda},
                        {"lr", dc.lr},
                        {"beta1", dc.beta1},
                        {"beta2", dc.beta2},
                        {"disc_base_channels", dc.disc_base_channels},
                        {"adversarial_term", TermName(dc.adversarial_term)}};
      if (cfg.defense.student_arch) {
        p["student_arch"] = ArchJson(*cfg.defense.student_arch);
      }
      defense["distill"] = p;
      break;
    }
    case DefenseKind::kNone:
      break;
  }
  const ordered_json j = {
      {"schema_version", cfg.schema_version},
      {"name", cfg.name},
      {"dataset", dataset},
      {"arch", ArchJson(cfg.arch)},
      {"teacher", teacher},
      {"defense", defense},
      {"n_seeds", cfg.n_seeds},
      {"base_seed", cfg.base_seed},
      {"metrics",
       {{"fx_seed", cfg.metrics.fx_seed},
        {"feature_dim", cfg.metrics.feature_dim},
        {"n_bins", cfg.metrics.n_bins}}},
      {"attack", {{"n_draws", cfg.attack_draws}}}};
  return j.dump(2);
}

std::uint64_t RunSeed(const ExperimentConfig& cfg, int k) {
  return cfg.base_seed + static_cast<std::uint64_t>(k);
}

Aggregate Summarize(const std::vector<double>& values) {
  Aggregate a;
  a.n = static_cast<int>(values.size());
  if (a.n == 0) return a;
  double sum = 0.0;
  for (double v : values) sum += v;
  a.mean = sum / a.n;
  if (a.n > 1) {
    double sq = 0.0;
    for (double v : values) sq += (v - a.mean) * (v - a.mean);
    a.std = std::sqrt(sq / (a.n - 1));
  }
  return a;
}

const GeneratorModel* TeacherCache::Find(const std::string& key) const {
  auto it = models_.find(key);
  return it == models_.end() ? nullptr : &it->second.first;
}

const GeneratorModel& TeacherCache::Insert(const std::string& key,
                                           GeneratorModel g,
                                           std::vector<EpochLog> log) {
  auto [it, _] = models_.insert_or_assign(
      key, std::make_pair(std::move(g), std::move(log)));
  return it->second.first;
}

const std::vector<EpochLog>* TeacherCache::Log(const std::string& key) const {
  auto it = models_.find(key);
  return it == models_.end() ? nullptr : &it->second.second;
}

SeedRecord EvaluateDeployed(const ExperimentConfig& cfg, std::uint64_t seed,
                            const Translator& deployed,
                            const DatasetSplits& splits, bool audit_proxy) {
  SeedRecord rec;
  rec.seed = seed;
  const AttackEvalSet set = BuildAttackSet(splits, Derive(seed, kTagAttackSet));
  const auto records = AttackScores(deployed, set, Derive(seed, kTagAttackNoise),
                                    cfg.attack_draws);
  rec.auc = AucRoc(records).auc;
  for (const auto& r : records) {
    (r.is_member ? rec.member_scores : rec.nonmember_scores).push_back(r.score);
  }
  rec.overlap = MakeLossHistogram(rec.member_scores, rec.nonmember_scores,
                                  cfg.metrics.n_bins)
                    .overlap;

  const FeatureExtractor fx(cfg.metrics.fx_seed, cfg.metrics.feature_dim);
  const auto test_refs = fx.Extract(Targets(splits.test));
  const auto black = fx.Extract(std::vector<ImageTensor>(
      splits.test.size(),
      ImageTensor::Filled(3, cfg.dataset.height, cfg.dataset.width, -1.0)));
  const double kid_max = Kid(test_refs, black).kid;
  if (!(kid_max > 0.0)) {
    throw NumericError("kid calibration", "black-image KID is not positive");
  }
  const auto test_out = fx.Extract(TranslateAll(
      deployed, Inputs(splits.test), Derive(seed, kTagTestDraws)));
  const NkidResult test_q = NkidFromFeatures(test_out, test_refs, kid_max);
  rec.nkid = test_q.nkid;
  rec.kid_raw = test_q.kid.kid_raw;
  const auto train_out = fx.Extract(TranslateAll(
      deployed, Inputs(set.members), Derive(seed, kTagTrainDraws)));
  const auto train_refs = fx.Extract(Targets(set.members));
  rec.gap = rec.nkid - NkidFromFeatures(train_out, train_refs, kid_max).nkid;

  if (audit_proxy) {
    if (auto audit = ProxyLeakageAuc(deployed, splits, Derive(seed, kTagAudit),
                                     cfg.attack_draws)) {
      rec.proxy_auc = audit->auc;
    }
  }
  rec.ok = true;
  return rec;
}

ExperimentReport RunExperiment(const ExperimentConfig& cfg,
                               const RunOptions& opts) {
  cfg.Validate();
  ExperimentReport report;
  report.config = cfg;
  const GeneratorArch arch = WithGeometry(cfg.arch, cfg.dataset);
  const GeneratorArch student_arch =
      cfg.defense.student_arch ? WithGeometry(*cfg.defense.student_arch, cfg.dataset)
                               : arch;
  if (opts.out_dir) fs::create_directories(*opts.out_dir);

  std::optional<DatasetSplits> splits;
  std::string data_error;
  try {
    splits = BuildSplits(cfg.dataset);
    splits->Validate();
  } catch (const std::exception& e) {
    data_error = e.what();
  }

  TeacherCache local_cache;
  TeacherCache& cache = opts.cache ? *opts.cache : local_cache;
  for (int k = 0; k < cfg.n_seeds; ++k) {
    const std::uint64_t seed = RunSeed(cfg, k);
    const auto t0 = std::chrono::steady_clock::now();
    SeedRecord rec;
    rec.seed = seed;
    std::string stage = "data";
    try {
      if (!splits) throw IngestionError(data_error);
      const fs::path ckpt = opts.out_dir ? *opts.out_dir / "ckpt" / std::to_string(seed)
                                         : fs::path();
      const std::string tag = std::to_string(seed);
      TrainConfig tcfg = cfg.teacher;
      tcfg.seed = seed;

      stage = "teacher";
      const GeneratorModel* teacher = nullptr;
      GeneratorModel dp_model;
      double train_l1 = 0.0;
      if (cfg.defense.kind == DefenseKind::kDpSgd) {
        TrainResult r = TrainDpsgd(*splits, arch, tcfg, cfg.defense.dp);
        train_l1 = r.log.back().l1;
        if (opts.out_dir) WriteText(*opts.out_dir / ("teacher_log_" + tag + ".csv"),
                                    TeacherLogCsv(r.log));
        dp_model = std::move(r.generator);
        teacher = &dp_model;
      } else {
        const std::string key = TeacherKey(cfg, seed);
        teacher = cache.Find(key);
        if (teacher == nullptr) {
          if (opts.verbose) std::fprintf(stderr, "[seed %s] training teacher\n", tag.c_str());
          TrainResult r = TrainRegular(*splits, arch, tcfg);
          teacher = &cache.Insert(key, std::move(r.generator), std::move(r.log));
        }
        train_l1 = cache.Log(key)->back().l1;
        if (opts.out_dir) WriteText(*opts.out_dir / ("teacher_log_" + tag + ".csv"),
                                    TeacherLogCsv(*cache.Log(key)));
      }
      rec.teacher_fingerprint = Fingerprint(teacher->params);
      if (opts.out_dir) SaveGenerator(*teacher, ckpt / "teacher");

      stage = "defense";
      const GeneratorTranslator teacher_tr(*teacher);
      std::optional<GeneratorModel> student;
      std::optional<GaussDefense> gauss;
      const Translator* deployed = &teacher_tr;
      const GeneratorModel* deployed_model = teacher;
      if (cfg.defense.kind == DefenseKind::kGauss) {
        gauss.emplace(teacher_tr, cfg.defense.gauss_sigma);
        deployed = &*gauss;
      } else if (cfg.defense.kind == DefenseKind::kAkd ||
                 cfg.defense.kind == DefenseKind::kDmp) {
        if (opts.verbose) std::fprintf(stderr, "[seed %s] distilling\n", tag.c_str());
        DistillConfig dcfg = cfg.defense.distill;
        dcfg.mode = cfg.defense.kind == DefenseKind::kAkd ? DistillMode::kAkd
                                                          : DistillMode::kDmp;
        dcfg.seed = Derive(seed, kTagDistill);
        const BlackBoxTeacher box(*teacher);
        const std::uint64_t reads_before = GroundTruthReads();
        DistillResult r = Distill(box, splits->proxy, student_arch, dcfg);
        rec.ground_truth_reads = GroundTruthReads() - reads_before;
        rec.teacher_queries = box.queries();
        train_l1 = r.log.back().imitation_l1;
        if (opts.out_dir) WriteText(*opts.out_dir / ("distill_log_" + tag + ".csv"),
                                    DistillLogCsv(r.log));
        student = std::move(r.student);
        deployed_model = &*student;
      }
      const GeneratorTranslator deployed_tr(*deployed_model);
      if (deployed_model != teacher) deployed = &deployed_tr;
      rec.deployed_fingerprint = Fingerprint(deployed_model->params);
      if (opts.out_dir && deployed_model != teacher) {
        SaveGenerator(*deployed_model, ckpt / "deployed");
      }

      stage = "evaluate";
      const bool distilled = student.has_value();
      SeedRecord eval = EvaluateDeployed(cfg, seed, *deployed, *splits, distilled);
      eval.train_l1 = train_l1;
      eval.ground_truth_reads = rec.ground_truth_reads;
      eval.teacher_queries = rec.teacher_queries;
      eval.teacher_fingerprint = rec.teacher_fingerprint;
      eval.deployed_fingerprint = rec.deployed_fingerprint;
      rec = std::move(eval);
      if (opts.out_dir) {
        rec.histogram_file = "hist_" + tag + ".csv";
        WriteText(*opts.out_dir / rec.histogram_file,
                  HistogramCsv(MakeLossHistogram(rec.member_scores,
                                                 rec.nonmember_scores,
                                                 cfg.metrics.n_bins)));
      }
      if (!opts.keep_scores) {
        rec.member_scores.clear();
        rec.nonmember_scores.clear();
      }
    } catch (const std::exception& e) {
      rec.ok = false;
      rec.failed_stage = stage;
      rec.error = e.what();
    }
    report.seeds.push_back(std::move(rec));
    report.seconds_per_seed.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    if (opts.verbose) {
      const SeedRecord& r = report.seeds.back();
      if (r.ok) {
        std::fprintf(stderr, "[seed %llu] auc %.4f nkid %.3f gap %.3f\n",
                     static_cast<unsigned long long>(seed), r.auc, r.nkid, r.gap);
      } else {
        std::fprintf(stderr, "[seed %llu] failed in %s: %s\n",
                     static_cast<unsigned long long>(seed), r.failed_stage.c_str(),
                     r.error.c_str());
      }
    }
  }
  Aggregates(report);
  if (opts.out_dir) {
    WriteText(*opts.out_dir / "report.json", report.ToJson());
    WriteText(*opts.out_dir / "timing.json", report.TimingJson());
  }
  return report;
}

std::string ExperimentReport::ToJson() const {
  ordered_json seeds_j = ordered_json::array();
  for (const auto& s : seeds) {
    ordered_json r = {{"seed", s.seed}, {"ok", s.ok}};
    if (!s.ok) {
      r["failed_stage"] = s.failed_stage;
      r["error"] = s.error;
      seeds_j.push_back(r);
      continue;
    }
    r["auc"] = s.auc;
    r["nkid"] = s.nkid;
    r["kid_raw"] = s.kid_raw;
    r["gap"] = s.gap;
    r["overlap"] = s.overlap;
    r["proxy_auc"] = s.proxy_auc ? ordered_json(*s.proxy_auc) : ordered_json(nullptr);
    r["train_l1"] = s.train_l1;
    r["ground_truth_reads"] = s.ground_truth_reads;
    r["teacher_queries"] = s.teacher_queries;
    r["teacher_fingerprint"] = s.teacher_fingerprint;
    r["deployed_fingerprint"] = s.deployed_fingerprint;
    r["histogram"] = s.histogram_file;
    r["member_scores"] = s.member_scores;
    r["nonmember_scores"] = s.nonmember_scores;
    seeds_j.push_back(r);
  }
  ordered_json agg = ordered_json::object();
  for (const auto& [k, a] : aggregate) agg[k] = AggregateJson(a);
  const ordered_json j = {
      {"report_version", kReportVersion},
      {"versions", {{"privtrans", kVersionString}}},
      {"config", ordered_json::parse(ConfigToJson(config))},
      {"seeds", seeds_j},
      {"aggregate", agg},
      {"n_failed", n_failed}};
  return j.dump(2) + "\n";
}

std::string ExperimentReport::TimingJson() const {
  ordered_json per_seed = ordered_json::array();
  double total = 0.0;
  for (std::size_t i = 0; i < seconds_per_seed.size(); ++i) {
    per_seed.push_back({{"seed", i < seeds.size() ? seeds[i].seed : 0},
                        {"seconds", seconds_per_seed[i]}});
    total += seconds_per_seed[i];
  }
  return ordered_json{{"per_seed", per_seed}, {"total_seconds", total}}.dump(2) + "\n";
}

ExperimentReport ParseReport(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw IngestionError(std::string("report is not valid JSON: ") + e.what());
  }
  try {
    if (j.at("report_version").get<int>() != kReportVersion) {
      throw IngestionError("unsupported report_version");
    }
    ExperimentReport r;
    r.config = ParseConfig(j.at("config").dump());
    for (const auto& s : j.at("seeds")) {
      SeedRecord rec;
      rec.seed = s.at("seed").get<std::uint64_t>();
      rec.ok = s.at("ok").get<bool>();
      if (!rec.ok) {
        rec.failed_stage = s.value("failed_stage", "");
        rec.error = s.value("error", "");
        r.seeds.push_back(std::move(rec));
        continue;
      }
      rec.auc = s.at("auc").get<double>();
      rec.nkid = s.at("nkid").get<double>();
      rec.kid_raw = s.at("kid_raw").get<double>();
      rec.gap = s.at("gap").get<double>();
      rec.overlap = s.at("overlap").get<double>();
      if (!s.at("proxy_auc").is_null()) rec.proxy_auc = s.at("proxy_auc").get<double>();
      rec.train_l1 = s.at("train_l1").get<double>();
      rec.ground_truth_reads = s.at("ground_truth_reads").get<std::uint64_t>();
      rec.teacher_queries = s.at("teacher_queries").get<std::uint64_t>();
      rec.teacher_fingerprint = s.at("teacher_fingerprint").get<std::string>();
      rec.deployed_fingerprint = s.at("deployed_fingerprint").get<std::string>();
      rec.histogram_file = s.at("histogram").get<std::string>();
      rec.member_scores = s.at("member_scores").get<std::vector<double>>();
      rec.nonmember_scores = s.at("nonmember_scores").get<std::vector<double>>();
      r.seeds.push_back(std::move(rec));
    }
    for (const auto& [k, a] : j.at("aggregate").items()) {
      r.aggregate[k] = ParseAggregate(a);
    }
    r.n_failed = j.at("n_failed").get<int>();
    return r;
  } catch (const json::exception& e) {
    throw IngestionError(std::string("malformed report: ") + e.what());
  }
}

std::string ReportCsv(const ExperimentReport& report) {
  std::string s = "row,seed,ok,auc,nkid,kid_raw,gap,overlap,proxy_auc,train_l1\n";
  auto opt = [](const std::optional<double>& v) { return v ? Num(*v) : std::string(); };
  for (const auto& r : report.seeds) {
    if (!r.ok) {
      s += "seed," + std::to_string(r.seed) + ",0,,,,,,,\n";
      continue;
    }
    s += "seed," + std::to_string(r.seed) + ",1," + Num(r.auc) + "," +
         Num(r.nkid) + "," + Num(r.kid_raw) + "," + Num(r.gap) + "," +
         Num(r.overlap) + "," + opt(r.proxy_auc) + "," + Num(r.train_l1) + "\n";
  }
  for (const char* stat : {"mean", "std"}) {
    s += std::string(stat) + ",,,";
    bool first = true;
    for (const char* key : {"auc", "nkid", "kid_raw", "gap", "overlap",
                            "proxy_auc", "train_l1"}) {
      if (!first) s += ",";
      first = false;
      auto it = report.aggregate.find(key);
      if (it != report.aggregate.end()) {
        s += Num(stat[0] == 'm' ? it->second.mean : it->second.std);
      }
    }
    s += "\n";
  }
  return s;
}

ExperimentConfig ApplyKnob(const ExperimentConfig& base, const std::string& knob,
                           const std::string& value) {
  ExperimentConfig cfg = base;
  auto number = [&] {
    try {
      std::size_t used = 0;
      const double v = std::stod(value, &used);
      if (used != value.size()) throw std::invalid_argument(value);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("knob " + knob + " needs a number, got '" + value + "'");
    }
  };
  if (knob == "gauss.sigma") {
    cfg.defense.kind = DefenseKind::kGauss;
    cfg.defense.gauss_sigma = number();
  } else if (knob == "dp_sgd.sigma") {
    cfg.defense.kind = DefenseKind::kDpSgd;
    cfg.defense.dp.sigma = number();
  } else if (knob == "dp_sgd.clip_norm") {
    cfg.defense.kind = DefenseKind::kDpSgd;
    cfg.defense.dp.clip_norm = number();
  } else if (knob == "distill.lambda") {
    if (cfg.defense.kind != DefenseKind::kAkd && cfg.defense.kind != DefenseKind::kDmp) {
      cfg.defense.kind = DefenseKind::kAkd;
    }
    cfg.defense.distill.lambda = number();
  } else if (knob == "defense") {
    cfg.defense.kind = ParseDefenseName(value);
  } else {
    throw ConfigError("unknown sweep knob '" + knob +
                      "' (expected gauss.sigma, dp_sgd.sigma, dp_sgd.clip_norm, "
                      "distill.lambda or defense)");
  }
  cfg.defense.distill.mode = cfg.defense.kind == DefenseKind::kDmp
                                 ? DistillMode::kDmp
                                 : DistillMode::kAkd;
  cfg.name = base.name + "[" + knob + "=" + value + "]";
  cfg.Validate();
  return cfg;
}

std::vector<TradeoffPoint> RunTradeoffSweep(const ExperimentConfig& base,
                                            const std::string& knob,
                                            const std::vector<std::string>& values,
                                            const RunOptions& opts) {
  std::vector<TradeoffPoint> points;
  TeacherCache local_cache;
  RunOptions point_opts = opts;
  point_opts.out_dir.reset();
  if (point_opts.cache == nullptr) point_opts.cache = &local_cache;
  for (const auto& v : values) {
    TradeoffPoint p;
    p.knob = knob;
    p.value = v;
    try {
      const ExperimentConfig cfg = ApplyKnob(base, knob, v);
      if (opts.out_dir) point_opts.out_dir = *opts.out_dir / (knob + "=" + v);
      const ExperimentReport r = RunExperiment(cfg, point_opts);
      if (r.aggregate.at("auc").n == 0) {
        throw TrainingError(-1, "every seed failed");
      }
      p.auc = r.aggregate.at("auc");
      p.nkid = r.aggregate.at("nkid");
      p.ok = true;
    } catch (const std::exception& e) {
      p.error = e.what();
    }
    points.push_back(std::move(p));
  }
  if (opts.out_dir) {
    fs::create_directories(*opts.out_dir);
    WriteText(*opts.out_dir / "tradeoff.csv", TradeoffCsv(points));
  }
  return points;
}

std::string TradeoffCsv(const std::vector<TradeoffPoint>& points) {
  std::string s = "knob,value,mean_auc,mean_nkid,std_auc,std_nkid,n,ok\n";
  for (const auto& p : points) {
    s += p.knob + "," + p.value + ",";
    if (p.ok) {
      s += Num(p.auc.mean) + "," + Num(p.nkid.mean) + "," + Num(p.auc.std) +
           "," + Num(p.nkid.std) + "," + std::to_string(p.auc.n) + ",1\n";
    } else {
      s += ",,,,0,0\n";
    }
  }
  return s;
}

Comparison CompareReports(const std::vector<ExperimentReport>& reports) {
  if (reports.empty()) throw ConfigError("nothing to compare");
  const ExperimentConfig& first = reports.front().config;
  Comparison c;
  for (const auto& r : reports) {
    if (!(r.config.dataset == first.dataset) || r.config.n_seeds != first.n_seeds ||
        r.config.base_seed != first.base_seed) {
      throw ConfigError("config '" + r.config.name +
                        "' does not share the dataset and seed blocks of '" +
                        first.name + "'");
    }
    ComparisonRow row{r.config.name, DefenseName(r.config.defense.kind),
                      r.aggregate.count("auc") ? r.aggregate.at("auc") : Aggregate{},
                      r.aggregate.count("nkid") ? r.aggregate.at("nkid") : Aggregate{}};
    c.rows.push_back(std::move(row));
  }
  std::stable_sort(c.rows.begin(), c.rows.end(),
                   [](const ComparisonRow& a, const ComparisonRow& b) {
                     if (a.auc.mean != b.auc.mean) return a.auc.mean < b.auc.mean;
                     return a.nkid.mean < b.nkid.mean;
                   });
  const ComparisonRow* akd = nullptr;
  const ComparisonRow* dmp = nullptr;
  for (const auto& row : c.rows) {
    if (row.defense == "akd" && !akd) akd = &row;
    if (row.defense == "dmp" && !dmp) dmp = &row;
  }
  if (akd && dmp) {
    c.akd_minus_dmp_nkid = akd->nkid.mean - dmp->nkid.mean;
    c.akd_minus_dmp_auc = akd->auc.mean - dmp->auc.mean;
  }
  return c;
}

Comparison CompareDefenses(const std::vector<ExperimentConfig>& configs,
                           const RunOptions& opts) {
  if (configs.empty()) throw ConfigError("nothing to compare");
  for (const auto& cfg : configs) {
    if (!(cfg.dataset == configs.front().dataset) ||
        cfg.n_seeds != configs.front().n_seeds ||
        cfg.base_seed != configs.front().base_seed) {
      throw ConfigError("config '" + cfg.name +
                        "' does not share the dataset and seed blocks of '" +
                        configs.front().name + "'");
    }
  }
  TeacherCache local_cache;
  RunOptions run_opts = opts;
  if (run_opts.cache == nullptr) run_opts.cache = &local_cache;
  std::vector<ExperimentReport> reports;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    if (opts.out_dir) {
      run_opts.out_dir = *opts.out_dir / (std::to_string(i) + "_" + configs[i].name);
    }
    reports.push_back(RunExperiment(configs[i], run_opts));
  }
  Comparison c = CompareReports(reports);
  if (opts.out_dir) {
    fs::create_directories(*opts.out_dir);
    WriteText(*opts.out_dir / "comparison.json", c.ToJson());
  }
  return c;
}

std::string Comparison::ToJson() const {
  ordered_json rows_j = ordered_json::array();
  for (const auto& r : rows) {
    rows_j.push_back({{"name", r.name},
                      {"defense", r.defense},
                      {"auc", AggregateJson(r.auc)},
                      {"nkid", AggregateJson(r.nkid)}});
  }
  ordered_json j = {{"rows", rows_j}};
  if (akd_minus_dmp_nkid) {
    j["akd_vs_dmp"] = {{"nkid_difference", *akd_minus_dmp_nkid},
                       {"auc_difference", *akd_minus_dmp_auc}};
  }
  return j.dump(2) + "\n";
}

}  // namespace privtrans
