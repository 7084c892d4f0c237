#include "privtrans/experiment.h"

#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "privtrans/errors.h"
#include "test_util.h"

namespace privtrans {
namespace {

using nlohmann::json;
using testing_util::TempDir;

json TinyJson(const std::string& defense = "none") {
  json j = {{"schema_version", 1},
            {"name", "tiny_" + defense},
            {"dataset",
             {{"source", "synthetic"}, {"seed", 2}, {"height", 8}, {"width", 8},
              {"n_train", 12}, {"n_proxy", 6}, {"n_test", 6}, {"split_seed", 1}}},
            {"arch", {{"depth", 2}, {"base_channels", 4}}},
            {"teacher", {{"epochs", 2}, {"disc_base_channels", 4}}},
            {"defense", {{"name", defense}}},
            {"n_seeds", 2},
            {"metrics", {{"feature_dim", 8}, {"n_bins", 5}}}};
  if (defense == "akd" || defense == "dmp") {
    j["defense"]["distill"] = {{"epochs", 2}, {"disc_base_channels", 4}};
  }
  if (defense == "gauss") j["defense"]["sigma"] = 0.1;
  if (defense == "dp_sgd") j["defense"]["dp_sgd"] = {{"sigma", 0.5}, {"clip_norm", 1.0}};
  return j;
}

std::string Slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TEST(ConfigTest, DefaultsMatchPreset) {
  const auto cfg = ParseConfig(R"({"schema_version": 1})");
  EXPECT_EQ(cfg.dataset.n_train, 200);
  EXPECT_EQ(cfg.dataset.n_proxy, 50);
  EXPECT_EQ(cfg.dataset.n_test, 53);
  EXPECT_EQ(cfg.dataset.height, 32);
  EXPECT_EQ(cfg.n_seeds, 5);
  EXPECT_EQ(cfg.teacher.epochs, 200);
  EXPECT_EQ(cfg.teacher.lambda_l1, 100.0);
  EXPECT_EQ(cfg.defense.kind, DefenseKind::kNone);
  EXPECT_EQ(cfg.defense.distill.epochs, 200);
}

TEST(ConfigTest, ParsesDefenseBlocks) {
  auto cfg = ParseConfig(TinyJson("dp_sgd").dump());
  EXPECT_EQ(cfg.defense.kind, DefenseKind::kDpSgd);
  EXPECT_EQ(cfg.defense.dp.sigma, 0.5);
  cfg = ParseConfig(TinyJson("akd").dump());
  EXPECT_EQ(cfg.defense.kind, DefenseKind::kAkd);
  EXPECT_EQ(cfg.defense.distill.epochs, 2);
  EXPECT_EQ(ParseConfig(TinyJson("gauss").dump()).defense.gauss_sigma, 0.1);
}

TEST(ConfigTest, Rejects) {
  EXPECT_THROW(ParseConfig("{"), ConfigError);
  EXPECT_THROW(ParseConfig("{}"), ConfigError);
  EXPECT_THROW(ParseConfig(R"({"schema_version": 2})"), ConfigError);
  EXPECT_THROW(ParseConfig(R"({"schema_version": 1, "bogus": 0})"), ConfigError);
  EXPECT_THROW(ParseConfig(R"({"schema_version": 1, "n_seeds": "five"})"), ConfigError);
  EXPECT_THROW(ParseConfig(R"({"schema_version": 1, "n_seeds": 0})"), ConfigError);
  EXPECT_THROW(ParseConfig(R"({"schema_version": 1, "defense": {"name": "magic"}})"),
               ConfigError);
  EXPECT_THROW(
      ParseConfig(R"({"schema_version": 1, "defense": {"name": "none", "sigma": 1}})"),
      ConfigError);
  auto j = TinyJson("akd");
  j["defense"]["distill"]["lambda"] = -1;
  EXPECT_THROW(ParseConfig(j.dump()), ConfigError);
  j = TinyJson();
  j["dataset"]["height"] = 12;  // not divisible by the net's strides
  EXPECT_THROW(ParseConfig(j.dump()), ConfigError);
}

TEST(ConfigTest, RoundTrip) {
  for (const char* d : {"none", "gauss", "dp_sgd", "akd", "dmp"}) {
    const auto cfg = ParseConfig(TinyJson(d).dump());
    const std::string text = ConfigToJson(cfg);
    EXPECT_EQ(ConfigToJson(ParseConfig(text)), text) << d;
  }
}

TEST(ConfigTest, RunSeedsAreConsecutive) {
  auto cfg = ParseConfig(TinyJson().dump());
  cfg.base_seed = 10;
  EXPECT_EQ(RunSeed(cfg, 0), 10u);
  EXPECT_EQ(RunSeed(cfg, 3), 13u);
}

TEST(SummarizeTest, SampleStd) {
  const auto a = Summarize({1.0, 2.0, 3.0});
  EXPECT_DOUBLE_EQ(a.mean, 2.0);
  EXPECT_DOUBLE_EQ(a.std, 1.0);
  EXPECT_EQ(a.n, 3);
  EXPECT_EQ(Summarize({4.0}).std, 0.0);
  EXPECT_EQ(Summarize({}).n, 0);
}

TEST(ApplyKnobTest, SetsFields) {
  const auto base = ParseConfig(TinyJson("gauss").dump());
  EXPECT_EQ(ApplyKnob(base, "gauss.sigma", "0.3").defense.gauss_sigma, 0.3);
  const auto dp = ApplyKnob(base, "dp_sgd.sigma", "2");
  EXPECT_EQ(dp.defense.kind, DefenseKind::kDpSgd);
  EXPECT_EQ(dp.defense.dp.sigma, 2.0);
  EXPECT_EQ(ApplyKnob(base, "defense", "akd").defense.kind, DefenseKind::kAkd);
  EXPECT_THROW(ApplyKnob(base, "nonsense", "1"), ConfigError);
  EXPECT_THROW(ApplyKnob(base, "gauss.sigma", "abc"), ConfigError);
}

class TinyRunTest : public ::testing::TestWithParam<const char*> {};

TEST_P(TinyRunTest, CompletesAndIsByteIdentical) {
  const auto cfg = ParseConfig(TinyJson(GetParam()).dump());
  TempDir a("run_a"), b("run_b");
  RunOptions oa, ob;
  oa.out_dir = a.path();
  ob.out_dir = b.path();
  const auto ra = RunExperiment(cfg, oa);
  const auto rb = RunExperiment(cfg, ob);
  EXPECT_EQ(ra.n_failed, 0);
  ASSERT_EQ(ra.seeds.size(), 2u);
  EXPECT_EQ(ra.ToJson(), rb.ToJson());
  EXPECT_EQ(Slurp(a.path() / "report.json"), Slurp(b.path() / "report.json"));
  EXPECT_TRUE(std::filesystem::exists(a.path() / "timing.json"));
  EXPECT_EQ(Slurp(a.path() / "report.json").find("seconds"), std::string::npos);
  for (const auto& s : ra.seeds) {
    EXPECT_TRUE(s.ok) << s.error;
    EXPECT_GE(s.auc, 0.0);
    EXPECT_LE(s.auc, 1.0);
    EXPECT_GE(s.nkid, 0.0);
    EXPECT_LE(s.nkid, 100.0);
    EXPECT_EQ(s.ground_truth_reads, 0u);
    const bool distilled = std::string(GetParam()) == "akd" || std::string(GetParam()) == "dmp";
    EXPECT_EQ(s.proxy_auc.has_value(), distilled);
    EXPECT_EQ(s.teacher_fingerprint == s.deployed_fingerprint,
              std::string(GetParam()) != "akd" && std::string(GetParam()) != "dmp");
  }
  EXPECT_EQ(ParseReport(ra.ToJson()).ToJson(), ra.ToJson());
  EXPECT_FALSE(ReportCsv(ra).empty());
}

INSTANTIATE_TEST_SUITE_P(Defenses, TinyRunTest,
                         ::testing::Values("none", "gauss", "dp_sgd", "akd", "dmp"));

TEST(RunTest, SeedsDiffer) {
  const auto r = RunExperiment(ParseConfig(TinyJson().dump()));
  EXPECT_NE(r.seeds[0].teacher_fingerprint, r.seeds[1].teacher_fingerprint);
}

TEST(RunTest, FailedSeedsAreRecordedAndExcluded) {
  auto j = TinyJson("akd");
  j["dataset"]["n_proxy"] = 0;
  const auto r = RunExperiment(ParseConfig(j.dump()));
  EXPECT_EQ(r.n_failed, 2);
  for (const auto& s : r.seeds) {
    EXPECT_FALSE(s.ok);
    EXPECT_EQ(s.failed_stage, "defense");
    EXPECT_FALSE(s.error.empty());
  }
  EXPECT_EQ(r.aggregate.count("auc") ? r.aggregate.at("auc").n : 0, 0);
}

TEST(RunTest, MissingFolderDatasetFailsAtDataStage) {
  auto j = TinyJson();
  j["dataset"] = {{"source", "folder"}, {"path", "/nonexistent/privtrans"},
                  {"height", 8}, {"width", 8}};
  const auto r = RunExperiment(ParseConfig(j.dump()));
  EXPECT_EQ(r.n_failed, 2);
  EXPECT_EQ(r.seeds[0].failed_stage, "data");
}

TEST(RunTest, TeacherCacheSharedAcrossDefenses) {
  TeacherCache cache;
  RunOptions o;
  o.cache = &cache;
  const auto none = RunExperiment(ParseConfig(TinyJson().dump()), o);
  EXPECT_EQ(cache.size(), 2u);
  const auto gauss = RunExperiment(ParseConfig(TinyJson("gauss").dump()), o);
  EXPECT_EQ(cache.size(), 2u);
  EXPECT_EQ(none.seeds[0].teacher_fingerprint, gauss.seeds[0].teacher_fingerprint);
}

TEST(SweepTest, OnePointPerValue) {
  auto j = TinyJson("gauss");
  j["n_seeds"] = 1;
  TempDir dir("sweep");
  RunOptions o;
  o.out_dir = dir.path();
  const auto pts = RunTradeoffSweep(ParseConfig(j.dump()), "gauss.sigma", {"0", "0.5"}, o);
  ASSERT_EQ(pts.size(), 2u);
  EXPECT_TRUE(pts[0].ok);
  EXPECT_EQ(pts[1].value, "0.5");
  EXPECT_EQ(pts[0].nkid.n, 1);
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "tradeoff.csv"));
  const std::string csv = TradeoffCsv(pts);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  EXPECT_TRUE(RunTradeoffSweep(ParseConfig(j.dump()), "gauss.sigma", {}, o).empty());
}

TEST(CompareTest, RanksAndDiffsAkdAgainstDmp) {
  auto make = [](const std::string& d, double auc, double nkid) {
    ExperimentReport r;
    r.config = ParseConfig(TinyJson(d).dump());
    r.aggregate["auc"] = {auc, 0.0, 2};
    r.aggregate["nkid"] = {nkid, 0.0, 2};
    return r;
  };
  const auto c = CompareReports({make("none", 0.9, 1.0), make("akd", 0.6, 2.0),
                                 make("dmp", 0.6, 3.0)});
  ASSERT_EQ(c.rows.size(), 3u);
  EXPECT_EQ(c.rows[0].defense, "akd");
  EXPECT_EQ(c.rows[1].defense, "dmp");
  EXPECT_EQ(c.rows[2].defense, "none");
  EXPECT_DOUBLE_EQ(*c.akd_minus_dmp_nkid, -1.0);
  EXPECT_DOUBLE_EQ(*c.akd_minus_dmp_auc, 0.0);
  const auto single = CompareReports({make("none", 0.9, 1.0)});
  EXPECT_EQ(single.rows.size(), 1u);
  EXPECT_FALSE(single.akd_minus_dmp_nkid.has_value());
  const auto twins = CompareReports({make("none", 0.9, 1.0), make("none", 0.9, 1.0)});
  EXPECT_EQ(twins.rows[0].auc.mean, twins.rows[1].auc.mean);
  EXPECT_EQ(twins.rows[0].nkid.mean, twins.rows[1].nkid.mean);
}

TEST(CompareTest, MismatchedDatasetsRejected) {
  auto a = ParseConfig(TinyJson().dump());
  auto b = ParseConfig(TinyJson("gauss").dump());
  b.dataset.seed = 99;
  EXPECT_THROW(CompareDefenses({a, b}), ConfigError);
}

}  // namespace
}  // namespace privtrans
