#include <gtest/gtest.h>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <numbers>

#include "generators.hpp"
#include "pixelarch/cohort_stats.hpp"

namespace pa = pixelarch;

namespace {

double rel_err(double a, double b) {
  if (a == b) return 0;
  return std::fabs(a - b) / std::max(std::fabs(a), std::fabs(b));
}

pa::FeatureVector fv(std::initializer_list<std::pair<const char*, bool>> flags) {
  pa::FeatureVector out;
  for (auto [k, v] : flags) out[k] = v;
  return out;
}

const pa::CohortYearStat& find(const std::vector<pa::CohortYearStat>& rows, pa::Cohort c, int year,
                               const std::string& feature) {
  for (const auto& r : rows)
    if (r.cohort == c && r.year == year && r.feature == feature) return r;
  throw std::runtime_error("row not found");
}

}  // namespace

// Frozen from scipy.stats.t.ppf(0.975, df).
TEST(StudentT, QuantileMatchesFrozenReference) {
  const std::pair<double, double> cases[] = {
      {1, 12.706204736432095}, {2, 4.302652729696142},  {5, 2.570581835636314},
      {9, 2.2621571628540993}, {29, 2.045229642132703}, {99, 1.9842169515086827},
      {999, 1.9623414611334487}};
  for (auto [df, expected] : cases) {
    EXPECT_NEAR(pa::stats::student_t_quantile(0.975, df), expected, 1e-9) << df;
  }
}

TEST(StudentT, QuantileAgreesWithBoostAcrossDf) {
  for (int df = 1; df <= 3000; df += (df < 50 ? 1 : 37)) {
    for (double p : {0.6, 0.9, 0.975, 0.995, 0.9999}) {
      const double ref = boost::math::quantile(boost::math::students_t(df), p);
      EXPECT_NEAR(pa::stats::student_t_quantile(p, df), ref, 1e-6 * std::max(1.0, ref)) << df << " " << p;
    }
  }
  EXPECT_NEAR(pa::stats::student_t_quantile(0.025, 10), -pa::stats::student_t_quantile(0.975, 10), 1e-12);
  EXPECT_THROW(pa::stats::student_t_quantile(1.0, 3), pa::InvalidArgument);
}

TEST(MarginOfError, Examples) {
  EXPECT_EQ(pa::margin_of_error(0, 50), 0.0);
  EXPECT_EQ(pa::margin_of_error(50, 50), 0.0);
  // scipy: t.ppf(0.975, 99) * sqrt(0.25 * 0.75 / 100) * 100
  EXPECT_NEAR(*pa::margin_of_error(25, 100), 8.591911433131175, 1e-9);
  EXPECT_FALSE(pa::margin_of_error(1, 1));
  EXPECT_FALSE(pa::margin_of_error(0, 0));
}

TEST(MarginOfError, StrictlyDecreasesWithN) {
  // Fixed p = 0.3 via adopters = 3k, n = 10k.
  double last = std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k <= 200; ++k) {
    const double m = *pa::margin_of_error(3 * k, 10 * k);
    EXPECT_LT(m, last);
    last = m;
  }
}

TEST(TwoProportionZ, Examples) {
  auto same = pa::two_proportion_z(30, 100, 60, 200);
  EXPECT_DOUBLE_EQ(same.z, 0.0);
  EXPECT_DOUBLE_EQ(same.p_value, 1.0);
  // scipy: pooled z and 2 * norm.sf(|z|).
  auto t = pa::two_proportion_z(90, 100, 50, 100);
  EXPECT_LT(rel_err(t.z, 6.172133998483676), 1e-12);
  EXPECT_LT(rel_err(t.p_value, 6.737436018932776e-10), 1e-9);
  EXPECT_THROW(pa::two_proportion_z(10, 10, 5, 5), pa::DegenerateTest);
  EXPECT_THROW(pa::two_proportion_z(0, 10, 0, 5), pa::DegenerateTest);
  EXPECT_THROW(pa::two_proportion_z(0, 0, 0, 5), pa::InvalidArgument);
}

TEST(TwoProportionZ, Antisymmetric) {
  pa::testing::Gen g(8);
  for (int i = 0; i < 500; ++i) {
    const auto n1 = static_cast<std::size_t>(g.uniform(1, 300));
    const auto n2 = static_cast<std::size_t>(g.uniform(1, 300));
    const auto x1 = static_cast<std::size_t>(g.uniform(0, static_cast<int>(n1)));
    const auto x2 = static_cast<std::size_t>(g.uniform(0, static_cast<int>(n2)));
    if (x1 + x2 == 0 || x1 + x2 == n1 + n2) continue;
    auto a = pa::two_proportion_z(x1, n1, x2, n2);
    auto b = pa::two_proportion_z(x2, n2, x1, n1);
    EXPECT_DOUBLE_EQ(a.z, -b.z);
    EXPECT_DOUBLE_EQ(a.p_value, b.p_value);
  }
}

TEST(CohensH, Examples) {
  EXPECT_DOUBLE_EQ(pa::cohens_h(0.4, 0.4), 0.0);
  EXPECT_DOUBLE_EQ(pa::cohens_h(1.0, 0.0), std::numbers::pi);
  const double h = pa::cohens_h(0.984, 0.830);
  EXPECT_NEAR(h, 0.5963158298493512, 1e-12);  // closed form, python math
  EXPECT_GT(h, 0.1);  // same order as the published effect-size bands
  EXPECT_LT(h, 1.0);
  EXPECT_THROW(pa::cohens_h(1.1, 0.2), pa::InvalidArgument);
}

TEST(AdoptionStats, AtLeastOnePixelMergeAndDenominator) {
  std::vector<pa::SiteYearFeatures> obs = {
      // Two pixels on one site: only one has cookies; the site counts once.
      {"a.example", pa::Cohort::health, 2020, true,
       {fv({{"FirstPartyCookies", true}}), fv({{"FirstPartyCookies", false}})}},
      {"b.example", pa::Cohort::health, 2020, true, {fv({{"FirstPartyCookies", false}})}},
      // Pixel but no configuration: excluded from n, counted in n_with_pixel.
      {"c.example", pa::Cohort::health, 2020, true, {}},
      {"d.example", pa::Cohort::control, 2020, true, {fv({{"FirstPartyCookies", true}})}},
      {"e.example", pa::Cohort::control, 2020, true, {fv({{"FirstPartyCookies", true}})}},
  };
  auto rows = pa::adoption_stats(obs, {"FirstPartyCookies"});
  ASSERT_EQ(rows.size(), 2u);
  const auto& h = find(rows, pa::Cohort::health, 2020, "FirstPartyCookies");
  EXPECT_EQ(h.n, 2u);
  EXPECT_EQ(h.n_with_pixel, 3u);
  EXPECT_EQ(h.adopters, 1u);
  EXPECT_DOUBLE_EQ(h.p, 0.5);
  ASSERT_TRUE(h.margin);
  EXPECT_NEAR(*h.margin, 12.706204736432095 * 0.5 / std::sqrt(2.0) * 100, 1e-6);
  ASSERT_TRUE(h.cohens_h);
  EXPECT_NEAR(*h.cohens_h, pa::cohens_h(0.5, 1.0), 1e-15);
  const auto& c = find(rows, pa::Cohort::control, 2020, "FirstPartyCookies");
  EXPECT_DOUBLE_EQ(c.p, 1.0);
  EXPECT_EQ(*h.z, -*c.z);
}

TEST(AdoptionStats, DegenerateAndInsufficient) {
  std::vector<pa::SiteYearFeatures> obs = {
      {"a.example", pa::Cohort::health, 2019, true, {fv({{"UnwantedData", true}})}},
      {"b.example", pa::Cohort::control, 2019, true, {fv({{"UnwantedData", true}})}},
  };
  auto rows = pa::adoption_stats(obs, {"UnwantedData"});
  for (const auto& r : rows) {
    EXPECT_TRUE(r.insufficient_sample);
    EXPECT_FALSE(r.margin);
    EXPECT_TRUE(r.degenerate_test);
    EXPECT_FALSE(r.z);
  }
}

// Brute-force recount straight from the raw rows.
TEST(AdoptionStatsProperty, MatchesBruteForceRecount) {
  pa::testing::Gen g(31337);
  const std::vector<std::string> features = {"F1", "F2", "F3"};
  for (int corpus = 0; corpus < 100; ++corpus) {
    std::vector<pa::SiteYearFeatures> obs;
    for (int s = g.uniform(2, 25); s > 0; --s) {
      const std::string domain = "s" + std::to_string(s) + ".example";
      const auto cohort = g.coin() ? pa::Cohort::health : pa::Cohort::control;
      for (int year = 2017; year <= 2019; ++year) {
        if (g.coin(0.2)) continue;
        pa::SiteYearFeatures o{domain, cohort, year, true, {}};
        for (int k = g.uniform(0, 3); k > 0; --k) {
          pa::FeatureVector f;
          for (const auto& name : features) f[name] = g.coin(0.4);
          o.configs.push_back(f);
        }
        obs.push_back(o);
      }
    }
    const auto rows = pa::adoption_stats(obs, features);
    for (const auto& r : rows) {
      std::size_t n = 0, x = 0;
      for (const auto& o : obs) {
        if (o.cohort != r.cohort || o.year != r.year || o.configs.empty()) continue;
        ++n;
        bool any = false;
        for (const auto& c : o.configs) any = any || c.at(r.feature);
        x += any;
      }
      ASSERT_EQ(r.n, n);
      ASSERT_EQ(r.adopters, x);
      EXPECT_LE(r.adopters, r.n);
      EXPECT_GE(r.p, 0.0);
      EXPECT_LE(r.p, 1.0);
      if (n >= 2) {
        const double p = static_cast<double>(x) / n;
        const double ref = boost::math::quantile(boost::math::students_t(n - 1.0), 0.975) *
                           std::sqrt(p * (1 - p) / n) * 100;
        ASSERT_TRUE(r.margin);
        EXPECT_GE(*r.margin, 0.0);
        if (ref > 0) EXPECT_LT(rel_err(*r.margin, ref), 1e-9);
        else EXPECT_EQ(*r.margin, 0.0);
      }
    }
  }
}

TEST(StableCohort, Examples) {
  auto site = [](const std::string& d, std::initializer_list<int> years) {
    std::vector<pa::SiteYearFeatures> out;
    for (int y : years) out.push_back({d, pa::Cohort::health, y, true, {pa::FeatureVector{}}});
    return out;
  };
  std::vector<pa::SiteYearFeatures> obs;
  for (auto&& v : {site("short.example", {2018, 2019, 2020}), site("long.example", {2017, 2019, 2021, 2024})})
    obs.insert(obs.end(), v.begin(), v.end());
  obs.push_back({"pixel-only.example", pa::Cohort::health, 2020, true, {}});
  EXPECT_EQ(pa::stable_cohort(obs, 4).size(), 4u);
  EXPECT_EQ(pa::stable_cohort(obs, 4).front().domain, "long.example");
  EXPECT_EQ(pa::stable_cohort(obs, 1).size(), 7u);
  EXPECT_THROW(pa::stable_cohort(obs, 0), pa::InvalidArgument);
}

TEST(StableCohort, TenSitesByEnumeration) {
  // Site i has data in the first (i + 1) study years.
  std::vector<pa::SiteYearFeatures> obs;
  for (int i = 0; i < 10; ++i)
    for (int y = 0; y <= i && y < 8; ++y)
      obs.push_back({"site" + std::to_string(i), pa::Cohort::control, 2017 + y, true, {pa::FeatureVector{}}});
  std::set<std::string> kept;
  for (const auto& o : pa::stable_cohort(obs, 4)) kept.insert(o.domain);
  EXPECT_EQ(kept, (std::set<std::string>{"site3", "site4", "site5", "site6", "site7", "site8", "site9"}));
}

TEST(KeyOverlap, OneKeyEverywhere) {
  std::map<std::string, std::set<std::string>> m = {{"a", {"k"}}, {"b", {"k"}}, {"c", {"k"}}};
  auto c = pa::key_overlap_cdf(m);
  ASSERT_EQ(c.points.size(), 1u);
  EXPECT_DOUBLE_EQ(c.points[0].site_fraction, 1.0);
}

TEST(KeyOverlap, UniqueKeysAreLinear) {
  std::map<std::string, std::set<std::string>> m;
  for (int i = 0; i < 40; ++i) m["s" + std::to_string(i)] = {"k" + std::to_string(i)};
  auto c = pa::key_overlap_cdf(m);
  for (const auto& pt : c.points) EXPECT_DOUBLE_EQ(pt.site_fraction, pt.key_fraction);
}

TEST(KeyOverlap, ThirtySixKeysCoverHalf) {
  std::map<std::string, std::set<std::string>> m;
  int site = 0;
  auto add = [&](std::set<std::string> keys) { m["site" + std::to_string(site++)] = std::move(keys); };
  for (int k = 0; k < 28; ++k)
    for (int r = 0; r < 3; ++r) add({"common" + std::to_string(k)});
  for (int k = 28; k < 36; ++k)
    for (int r = 0; r < 2; ++r) add({"common" + std::to_string(k)});
  for (int u = 0; u < 100; ++u) add({"unique" + std::to_string(u)});
  auto c = pa::key_overlap_cdf(m);
  EXPECT_EQ(c.total_sites, 200u);
  EXPECT_EQ(c.keys_to_cover(0.5), 36u);
}

TEST(KeyOverlapProperty, MonotoneAndEndsAtAnyKeyFraction) {
  pa::testing::Gen g(5);
  for (int round = 0; round < 200; ++round) {
    std::map<std::string, std::set<std::string>> m;
    for (int s = g.uniform(1, 40); s > 0; --s) {
      auto& keys = m["s" + std::to_string(s)];
      for (int k = g.uniform(0, 4); k > 0; --k) keys.insert(g.word(1, 2, "abcdefgh"));
    }
    auto c = pa::key_overlap_cdf(m);
    double last = 0;
    for (const auto& pt : c.points) {
      EXPECT_GE(pt.site_fraction, last);
      last = pt.site_fraction;
    }
    std::size_t any = 0;
    for (const auto& [s, k] : m) any += !k.empty();
    EXPECT_DOUBLE_EQ(last, static_cast<double>(any) / m.size());
    // Ranking: frequency descending, ties lexicographic.
    std::map<std::string, int> freq;
    for (const auto& [s, ks] : m)
      for (const auto& k : ks) ++freq[k];
    for (std::size_t i = 1; i < c.ranked_keys.size(); ++i) {
      const auto& a = c.ranked_keys[i - 1];
      const auto& b = c.ranked_keys[i];
      EXPECT_TRUE(freq[a] > freq[b] || (freq[a] == freq[b] && a < b));
    }
  }
}

TEST(StatsOutput, CsvAndPlotData) {
  std::vector<pa::SiteYearFeatures> obs = {
      {"a.example", pa::Cohort::health, 2020, true, {fv({{"X", true}})}},
      {"b.example", pa::Cohort::health, 2020, true, {fv({{"X", false}})}},
  };
  const auto rows = pa::adoption_stats(obs, {"X"});
  const auto csv = pa::stats_csv(rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "cohort,year,feature,n,n_with_pixel,adopters,p,margin,z,p_value,cohens_h");
  EXPECT_NE(csv.find("health,2020,X,2,2,1,0.5,"), std::string::npos);
  const auto plot = pa::plot_data(rows);
  EXPECT_DOUBLE_EQ(plot["X"]["health"][0]["p"].get<double>(), 50.0);
  EXPECT_FALSE(plot["X"]["health"][0]["significant"].get<bool>());
}
