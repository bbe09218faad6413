#include <gtest/gtest.h>
#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>

#include "e2e.hpp"
#include "json.hpp"
#include "pixelarch/sha256.hpp"
#include "test_util.hpp"

namespace pa = pixelarch;
using pa::testing::fixture_path;
using pa::testing::read_file;
using pa::testing::TempDir;

namespace {

struct Run {
  int status = -1;
  std::string out;
  std::string err;
};

std::string quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return q + "'";
}

Run cli(const TempDir& dir, const std::vector<std::string>& args) {
  std::string cmd = quote(PIXELARCH_CLI_PATH);
  for (const auto& a : args) cmd += " " + quote(a);
  const auto out = dir.path() / "stdout";
  const auto err = dir.path() / "stderr";
  cmd += " >" + quote(out.string()) + " 2>" + quote(err.string()) + " </dev/null";
  const int raw = std::system(cmd.c_str());
  Run r;
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = read_file(out);
  r.err = read_file(err);
  return r;
}

std::vector<std::string> archive_flags(const pa::testing::E2eHarness& h, const std::filesystem::path& store) {
  return {"--config", fixture_path("e2e/pipeline.conf").string(), "--store", store.string(),
          "--cdx-url", h.config.endpoints.cdx_url, "--replay-template", h.config.endpoints.replay_template};
}

}  // namespace

TEST(Cli, RunAllReproducesOracleTable) {
  TempDir dir("pixelarch-cli");
  const auto store = dir.path() / "store";
  pa::testing::E2eHarness h(store);
  auto args = archive_flags(h, store);
  args.insert(args.begin(), "run-all");
  const auto r = cli(dir, args);
  ASSERT_EQ(r.status, 0) << r.err;
  const auto summaries = nlohmann::json::parse(r.out);
  ASSERT_EQ(summaries.size(), 7u);
  EXPECT_EQ(summaries[6]["stage"], "report");
  EXPECT_EQ(pa::testing::compare_adoption(store / "analysis" / "adoption.jsonl"), std::vector<std::string>{});
}

TEST(Cli, StagesOutOfOrderReportMissingPrerequisite) {
  TempDir dir("pixelarch-cli");
  const auto store = dir.path() / "store";
  pa::testing::E2eHarness h(store);
  auto args = archive_flags(h, store);
  args.insert(args.begin(), "parse-configs");
  const auto r = cli(dir, args);
  EXPECT_EQ(r.status, 1);
  const auto err = nlohmann::json::parse(r.err);
  EXPECT_EQ(err["code"], "MissingPrerequisite");
  EXPECT_EQ(err["stage"], "crawl_configs");
  EXPECT_TRUE(r.out.empty());
}

TEST(Cli, StageByStageMatchesRunAll) {
  TempDir dir("pixelarch-cli");
  const auto store = dir.path() / "store";
  pa::testing::E2eHarness h(store);
  for (const char* stage : {"crawl-sites", "extract-pixels", "crawl-configs", "parse-configs", "crack-keys",
                            "analyze", "report"}) {
    auto args = archive_flags(h, store);
    args.insert(args.begin(), stage);
    const auto r = cli(dir, args);
    ASSERT_EQ(r.status, 0) << stage << ": " << r.err;
    std::string name = stage;
    std::replace(name.begin(), name.end(), '-', '_');
    EXPECT_EQ(nlohmann::json::parse(r.out)["stage"], name);
  }
  EXPECT_EQ(pa::testing::compare_adoption(store / "analysis" / "adoption.jsonl"), std::vector<std::string>{});
}

TEST(Cli, UsageErrorsExitTwo) {
  TempDir dir("pixelarch-cli");
  auto r = cli(dir, {"crawl-sites", "--first-year", "not-a-year"});
  EXPECT_EQ(r.status, 2);
  EXPECT_EQ(nlohmann::json::parse(r.err)["code"], "Usage");
  r = cli(dir, {"no-such-command"});
  EXPECT_EQ(r.status, 2);
}

TEST(Cli, InvalidConfigIsReported) {
  TempDir dir("pixelarch-cli");
  const auto conf = dir.path() / "bad.conf";
  std::ofstream(conf) << "first_year = 2020\nmystery_key = 1\n";
  const auto r = cli(dir, {"crawl-sites", "--config", conf.string()});
  EXPECT_EQ(r.status, 1);
  EXPECT_EQ(nlohmann::json::parse(r.err)["code"], "InvalidArgument");
}

TEST(Cli, DumpConfigPrintsStructure) {
  TempDir dir("pixelarch-cli");
  const auto r = cli(dir, {"dump-config", fixture_path("listings/listing2_unwanted_data.js").string()});
  ASSERT_EQ(r.status, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["config"]["pixel_id"], "1234567891234567");
  EXPECT_EQ(j["config"]["unwanted_data"]["blacklisted"]["ViewContent"]["url"],
            (nlohmann::json{"lat", "lng"}));
  EXPECT_TRUE(j["features"]["UnwantedData.has_blacklisted"].get<bool>());
}

TEST(Cli, DumpConfigKeepsCallsForOtherPixelsApart) {
  TempDir dir("pixelarch-cli");
  const auto r = cli(dir, {"dump-config", fixture_path("listings/listing1_optin.js").string(), "--pixel-id",
                           "999999999999999"});
  ASSERT_EQ(r.status, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["config"]["pixel_id"], "999999999999999");
  EXPECT_TRUE(j["config"]["opt_ins"].empty());
  EXPECT_TRUE(j["foreign"]["1234567891234567"]["opt_ins"]["UnwantedData"].get<bool>());
}

TEST(Cli, DumpConfigWithoutStructuredCallsFails) {
  TempDir dir("pixelarch-cli");
  const auto script = dir.path() / "plain.js";
  std::ofstream(script) << "var a = 1;";
  const auto r = cli(dir, {"dump-config", script.string()});
  EXPECT_EQ(r.status, 1);
  EXPECT_EQ(nlohmann::json::parse(r.err)["code"], "NoRegisterPluginRegion");
}

TEST(Cli, SimulateFlagsCircumvention) {
  TempDir dir("pixelarch-cli");
  const auto cfg = dir.path() / "cfg.json";
  std::ofstream(cfg) << R"({"pixel_id": "1234567891234567", "opt_ins": {"ProtectedDataMode": true}})";
  const auto r = cli(dir, {"simulate", "--configuration", cfg.string(), "--context",
                           R"({"page_url": "https://clinic.example/a?b=c"})", "--interaction",
                           R"({"kind": "page_load"})"});
  ASSERT_EQ(r.status, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["payloads"][0]["dl"], "https://clinic.example");
  EXPECT_TRUE(j["circumvention"].empty());
}

TEST(Cli, CrackPrintsRowsAndSummary) {
  TempDir dir("pixelarch-cli");
  const auto words = dir.path() / "words.txt";
  std::ofstream(words) << "gender\nzip\n";
  const auto r = cli(dir, {"crack", "--wordlist", words.string(), "--digest", pa::sha256_hex("gender"), "--digest",
                           pa::sha256_hex("unlisted_key")});
  ASSERT_EQ(r.status, 0) << r.err;
  const auto summary = nlohmann::json::parse(r.err);
  EXPECT_EQ(summary["total"], 2);
  EXPECT_EQ(summary["cracked"], 1);
  EXPECT_NE(r.out.find("\"gender\""), std::string::npos);
}
