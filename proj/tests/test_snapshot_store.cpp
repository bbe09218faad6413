#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <thread>

#include "pixelarch/snapshot_store.hpp"
#include "generators.hpp"
#include "test_util.hpp"

using namespace pixelarch;
using pixelarch::testing::TempDir;

namespace {

SnapshotRecord rec(std::string url, std::string ts) {
  return {std::move(url), std::move(ts), 200, "DIGEST", "text/html"};
}

PixelId pid(const char* s) { return *PixelId::parse(s); }

std::size_t count_blob_files(const std::filesystem::path& root) {
  std::size_t n = 0;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root / "blobs"))
    if (e.is_regular_file()) ++n;
  return n;
}

}  // namespace

TEST(SnapshotStore, SameBytesStoredOnce) {
  TempDir dir;
  SnapshotStore store(dir.path());
  const auto r = rec("https://a.example/", "20190101000000");
  const auto h1 = store.put_blob(BlobKind::html_snapshot, r, "<html>x</html>");
  const auto h2 = store.put_blob(BlobKind::html_snapshot, r, "<html>x</html>");
  EXPECT_EQ(h1, h2);
  EXPECT_EQ(count_blob_files(dir.path()), 1u);
  EXPECT_EQ(store.blobs().size(), 1u);

  // Same content under another record: one blob, two index rows.
  store.put_blob(BlobKind::html_snapshot, rec("https://b.example/", "20190101000000"), "<html>x</html>");
  EXPECT_EQ(count_blob_files(dir.path()), 1u);
  EXPECT_EQ(store.blobs().size(), 2u);
}

TEST(SnapshotStore, DistinctBodiesDistinctHashes) {
  TempDir dir;
  SnapshotStore store(dir.path());
  const auto r = rec("https://a.example/", "20190101000000");
  EXPECT_NE(store.put_blob(BlobKind::html_snapshot, r, "a"), store.put_blob(BlobKind::html_snapshot, r, "b"));
}

TEST(SnapshotStore, HashIsDigestOfBody) {
  TempDir dir;
  SnapshotStore store(dir.path());
  const auto h = store.put_blob(BlobKind::config_script, rec("https://c.example/", "20200101000000"), "abc");
  EXPECT_EQ(h, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  for (const auto& b : store.blobs(std::nullopt, true)) EXPECT_EQ(sha256_hex(b.body), b.content_hash);
}

TEST(SnapshotStore, TenMegabyteRoundTrip) {
  TempDir dir;
  SnapshotStore store(dir.path());
  std::string body = "<html><body>";
  std::mt19937_64 rng(7);
  while (body.size() < 10u * 1024 * 1024) body.push_back(static_cast<char>(rng() & 0xff));
  body += "</body></html>";
  const auto h = store.put_blob(BlobKind::html_snapshot, rec("https://big.example/", "20210101000000"), body);
  EXPECT_EQ(store.get_blob(h), body);
}

TEST(SnapshotStore, EmptyBodyRejected) {
  TempDir dir;
  SnapshotStore store(dir.path());
  EXPECT_THROW(store.put_blob(BlobKind::html_snapshot, rec("https://a.example/", "20190101000000"), ""),
               InvalidArgument);
}

TEST(SnapshotStore, MissingAndCorruptBlobs) {
  TempDir dir;
  SnapshotStore store(dir.path());
  EXPECT_THROW(store.get_blob(std::string(64, 'a')), StorageIo);
  EXPECT_THROW(store.get_blob("nothex"), InvalidArgument);
  const auto h = store.put_blob(BlobKind::html_snapshot, rec("https://a.example/", "20190101000000"), "body");
  std::ofstream(dir.path() / "blobs" / h.substr(0, 2) / h, std::ios::trunc) << "tampered";
  EXPECT_THROW(store.get_blob(h), StorageIo);
}

TEST(SnapshotStore, UnwritableRootIsStorageIo) {
  TempDir dir;
  const auto file = dir.path() / "plainfile";
  std::ofstream(file) << "x";
  EXPECT_THROW(SnapshotStore(file / "sub"), StorageIo);
}

TEST(SnapshotStore, IndexRowsCarryIsoTimestamp) {
  TempDir dir;
  SnapshotStore store(dir.path());
  store.put_blob(BlobKind::html_snapshot, rec("https://a.example/", "20190704123456"), "x");
  const auto rows = store.read_index("records");
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0]["timestamp"], "20190704123456");
  EXPECT_EQ(rows[0]["timestamp_iso"], "2019-07-04T12:34:56Z");
  EXPECT_EQ(rows[0]["kind"], "html_snapshot");
}

TEST(SnapshotStore, ReopenSeesPriorRowsAndStaysIdempotent) {
  TempDir dir;
  const auto r = rec("https://a.example/", "20190101000000");
  { SnapshotStore(dir.path()).put_blob(BlobKind::html_snapshot, r, "x"); }
  SnapshotStore store(dir.path());
  store.put_blob(BlobKind::html_snapshot, r, "x");
  EXPECT_EQ(store.blobs().size(), 1u);
}

TEST(SnapshotStore, ReaderIgnoresPartialTrailingLine) {
  TempDir dir;
  SnapshotStore store(dir.path());
  store.append("observations", {{"a", 1}});
  std::ofstream(store.index_path("observations"), std::ios::app) << R"({"a": 2)";
  EXPECT_EQ(store.read_index("observations").size(), 1u);
}

TEST(SnapshotStore, ConcurrentAppendsAreWholeLines) {
  TempDir dir;
  SnapshotStore store(dir.path());
  std::vector<std::jthread> workers;
  for (int t = 0; t < 8; ++t)
    workers.emplace_back([&store, t] {
      for (int i = 0; i < 200; ++i) store.append("log", {{"t", t}, {"i", i}, {"pad", std::string(300, 'x')}});
    });
  workers.clear();
  const auto rows = store.read_index("log");
  EXPECT_EQ(rows.size(), 1600u);
}

TEST(SnapshotStore, StageMarkers) {
  TempDir dir;
  SnapshotStore store(dir.path());
  EXPECT_FALSE(store.stage_done("crawl_sites"));
  EXPECT_THROW(store.stage_summary("crawl_sites"), MissingPrerequisite);
  store.mark_stage_done("crawl_sites", {{"sites", 3}});
  EXPECT_TRUE(store.stage_done("crawl_sites"));
  EXPECT_EQ(store.stage_summary("crawl_sites")["sites"], 3);
  store.clear_stage("crawl_sites");
  EXPECT_FALSE(store.stage_done("crawl_sites"));
}

TEST(SnapshotStoreProperty, RoundTripArbitraryBytes) {
  TempDir dir;
  SnapshotStore store(dir.path());
  std::mt19937_64 rng(20240601);
  for (int i = 0; i < 300; ++i) {
    std::string body(1 + rng() % 4096, '\0');
    for (auto& c : body) c = static_cast<char>(rng() & 0xff);
    const auto h = store.put_blob(BlobKind::config_script, rec("https://p.example/", "20200101000000"), body);
    ASSERT_EQ(store.get_blob(h), body);
  }
}

// --- attribution ----------------------------------------------------------------------------

TEST(Attribution, ConfigCapturedInObservedYearIsAttached) {
  const auto A = pid("111111111111111");
  const auto res = attribute_configs({{"site.example", Cohort::health, 2019, {A}}},
                                     {{A, "20190315000000", "hashA"}});
  ASSERT_EQ(res.observations.size(), 1u);
  EXPECT_EQ(res.observations[0].config_refs, (std::set<ConfigRef>{{A, "hashA"}}));
  EXPECT_TRUE(res.unattributed.empty());
}

TEST(Attribution, ConfigNotAttachedToYearWithoutPixel) {
  const auto A = pid("111111111111111");
  const auto res = attribute_configs(
      {{"site.example", Cohort::health, 2019, {}}, {"site.example", Cohort::health, 2020, {A}}},
      {{A, "20191231235959", "hashA"}});
  ASSERT_EQ(res.observations.size(), 2u);
  EXPECT_TRUE(res.observations[0].config_refs.empty());  // 2019
  EXPECT_TRUE(res.observations[1].config_refs.empty());  // 2020: capture is from 2019
  ASSERT_EQ(res.unattributed.size(), 1u);
}

TEST(Attribution, EmptyConfigStreamLeavesObservationsUnchanged) {
  const auto A = pid("111111111111111");
  const std::vector<HtmlObservation> html = {{"a.example", Cohort::control, 2018, {A}},
                                             {"b.example", Cohort::health, 2022, {}}};
  const auto res = attribute_configs(html, {});
  ASSERT_EQ(res.observations.size(), 2u);
  for (const auto& o : res.observations) EXPECT_TRUE(o.config_refs.empty());
  EXPECT_EQ(res.observations[0].pixel_ids, std::set<PixelId>{A});
}

TEST(Attribution, SemiannualSnapshotsAreUnioned) {
  const auto A = pid("111111111111111");
  const auto B = pid("222222222222222");
  const auto res = attribute_configs(
      {{"s.example", Cohort::health, 2021, {A}}, {"s.example", Cohort::health, 2021, {B}}},
      {{B, "20210701000000", "hB"}});
  ASSERT_EQ(res.observations.size(), 1u);
  EXPECT_EQ(res.observations[0].pixel_ids, (std::set<PixelId>{A, B}));
  EXPECT_EQ(res.observations[0].config_refs, (std::set<ConfigRef>{{B, "hB"}}));
}

TEST(Attribution, SharedPixelAttachesToEverySiteThatEmbedsIt) {
  const auto A = pid("111111111111111");
  const auto res = attribute_configs(
      {{"a.example", Cohort::health, 2020, {A}}, {"b.example", Cohort::control, 2020, {A}}},
      {{A, "20200101000000", "h"}});
  for (const auto& o : res.observations) EXPECT_EQ(o.config_refs.size(), 1u);
}

TEST(AttributionProperty, SoundAndComplete) {
  pixelarch::testing::Gen g(99);
  std::vector<PixelId> pool;
  for (int i = 0; i < 12; ++i) pool.push_back(*PixelId::parse(g.digits(15)));
  for (int iter = 0; iter < 300; ++iter) {
    std::vector<HtmlObservation> html;
    for (int i = 0, n = g.uniform(0, 15); i < n; ++i) {
      HtmlObservation h{"s" + std::to_string(g.uniform(0, 5)) + ".example",
                        g.coin() ? Cohort::health : Cohort::control, g.uniform(2017, 2024), {}};
      for (int k = 0, m = g.uniform(0, 3); k < m; ++k) h.pixel_ids.insert(g.pick(pool));
      html.push_back(std::move(h));
    }
    std::vector<ConfigCapture> configs;
    for (int i = 0, n = g.uniform(0, 20); i < n; ++i)
      configs.push_back({g.pick(pool), std::to_string(g.uniform(2017, 2024)) + "0601000000",
                         "h" + std::to_string(g.uniform(0, 9))});
    const auto res = attribute_configs(html, configs);
    for (const auto& o : res.observations)
      for (const auto& [id, hash] : o.config_refs) ASSERT_TRUE(o.pixel_ids.contains(id));
    // Completeness: every capture lands somewhere exactly when some
    // same-year observation holds its Pixel ID.
    for (const auto& c : configs) {
      const int year = std::stoi(c.timestamp.substr(0, 4));
      bool expected = false;
      for (const auto& h : html) expected |= h.year == year && h.pixel_ids.contains(c.pixel_id);
      bool attached = false;
      for (const auto& o : res.observations)
        attached |= o.year == year && o.config_refs.contains({c.pixel_id, c.content_hash});
      const bool listed = std::find(res.unattributed.begin(), res.unattributed.end(), c) != res.unattributed.end();
      ASSERT_EQ(attached, expected);
      ASSERT_EQ(listed, !expected);
    }
  }
}

TEST(Attribution, JsonRoundTrip) {
  const HtmlObservation h{"a.example", Cohort::health, 2019, {pid("123456789012345")}};
  EXPECT_EQ(nlohmann::json(h).get<HtmlObservation>().pixel_ids, h.pixel_ids);
  const ConfigCapture c{pid("123456789012345"), "20190101000000", "abc"};
  EXPECT_EQ(nlohmann::json(c).get<ConfigCapture>(), c);
}

TEST(SnapshotStore, TornTailFromCrashedWriterIsCutBeforeAppending) {
  TempDir dir;
  {
    SnapshotStore store(dir.path());
    store.append("log", {{"i", 1}});
  }
  std::ofstream(dir.path() / "index" / "log.jsonl", std::ios::app) << R"({"i": 2, "trunc)";
  SnapshotStore store(dir.path());
  store.append("log", {{"i", 3}});
  const auto rows = store.read_index("log");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1]["i"], 3);
}
