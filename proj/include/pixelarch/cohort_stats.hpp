#pragma once

// Longitudinal adoption statistics per (cohort, year, feature).
//
// Denominator: sites with at least one attributed configuration that year.
// A site adopts a feature in a year when any of its configurations that
// year has it (feature vectors are OR-merged per site-year).

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"

#include "pixelarch/config_parser.hpp"
#include "pixelarch/error.hpp"
#include "pixelarch/observation.hpp"

namespace pixelarch {

namespace stats {

// Regularized incomplete beta I_x(a, b), continued fraction (modified Lentz).
inline double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  // The continued fraction converges fast for x < (a+1)/(a+b+2).
  if (x > (a + 1.0) / (a + b + 2.0)) return 1.0 - incomplete_beta(b, a, 1.0 - x);
  constexpr double kTiny = 1e-300;
  constexpr double kEps = 1e-16;
  double c = 1.0;
  double d = 1.0 - (a + b) * x / (a + 1.0);
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double f = d;
  for (int m = 1; m <= 10000; ++m) {
    const double m2 = 2.0 * m;
    double num = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
    d = 1.0 + num * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + num / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    f *= d * c;
    num = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
    d = 1.0 + num * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + num / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    f *= delta;
    if (std::fabs(delta - 1.0) < kEps) break;
  }
  return std::exp(log_front) * f / a;
}

inline double student_t_cdf(double t, double df) {
  const double tail = 0.5 * incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
  return t >= 0 ? 1.0 - tail : tail;
}

// Inverse of student_t_cdf for p in (0, 1), by bracketed bisection to
// machine precision.
inline double student_t_quantile(double p, double df) {
  if (!(p > 0.0 && p < 1.0) || !(df > 0.0)) {
    throw InvalidArgument("student_t_quantile needs p in (0,1) and df > 0");
  }
  if (p == 0.5) return 0.0;
  if (p < 0.5) return -student_t_quantile(1.0 - p, df);
  double lo = 0.0;
  double hi = 1.0;
  while (student_t_cdf(hi, df) < p) {
    lo = hi;
    hi *= 2.0;
  }
  for (int i = 0; i < 200 && hi - lo > 1e-15 * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    (student_t_cdf(mid, df) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

inline double normal_sf(double z) { return 0.5 * std::erfc(z / std::numbers::sqrt2); }

}  // namespace stats

// ME = t_{0.975, n-1} * sqrt(p (1 - p) / n) * 100, in percentage points.
// Undefined for n < 2.
inline std::optional<double> margin_of_error(std::size_t adopters, std::size_t n) {
  if (n < 2) return std::nullopt;
  if (adopters > n) throw InvalidArgument("adopters exceed sample size");
  const double p = static_cast<double>(adopters) / static_cast<double>(n);
  const double t = stats::student_t_quantile(0.975, static_cast<double>(n - 1));
  return t * std::sqrt(p * (1.0 - p) / static_cast<double>(n)) * 100.0;
}

struct ZTest {
  double z = 0;
  double p_value = 1;
};

// Pooled two-proportion z-test, two-sided.
inline ZTest two_proportion_z(std::size_t x1, std::size_t n1, std::size_t x2, std::size_t n2) {
  if (n1 == 0 || n2 == 0) throw InvalidArgument("two_proportion_z needs n1, n2 >= 1");
  if (x1 > n1 || x2 > n2) throw InvalidArgument("adopters exceed sample size");
  const double p1 = static_cast<double>(x1) / static_cast<double>(n1);
  const double p2 = static_cast<double>(x2) / static_cast<double>(n2);
  const double pooled = static_cast<double>(x1 + x2) / static_cast<double>(n1 + n2);
  if (pooled <= 0.0 || pooled >= 1.0) {
    throw DegenerateTest("pooled proportion is " + std::to_string(pooled) + "; z is undefined");
  }
  const double se = std::sqrt(pooled * (1.0 - pooled) *
                              (1.0 / static_cast<double>(n1) + 1.0 / static_cast<double>(n2)));
  ZTest out;
  out.z = (p1 - p2) / se;
  out.p_value = std::min(1.0, 2.0 * stats::normal_sf(std::fabs(out.z)));
  return out;
}

// |2 asin(sqrt p1) - 2 asin(sqrt p2)|
inline double cohens_h(double p1, double p2) {
  if (!(p1 >= 0 && p1 <= 1 && p2 >= 0 && p2 <= 1)) throw InvalidArgument("cohens_h needs p in [0,1]");
  return std::fabs(2.0 * std::asin(std::sqrt(p1)) - 2.0 * std::asin(std::sqrt(p2)));
}

// --- adoption table -----------------------------------------------------------------

// Analysis input for one (site, year): the feature vectors of every
// configuration attributed to it.
struct SiteYearFeatures {
  std::string domain;
  Cohort cohort = Cohort::control;
  int year = 0;
  bool has_pixel = false;
  std::vector<FeatureVector> configs;
};

struct CohortYearStat {
  Cohort cohort = Cohort::control;
  int year = 0;
  std::string feature;
  std::size_t n = 0;             // sites with >= 1 configuration
  std::size_t n_with_pixel = 0;  // sites with >= 1 Pixel ID in HTML
  std::size_t adopters = 0;
  double p = 0;
  std::optional<double> margin;  // percentage points; empty when n < 2
  bool insufficient_sample = false;
  std::optional<double> z;        // this cohort vs the other, same year
  std::optional<double> p_value;
  std::optional<double> cohens_h;
  bool degenerate_test = false;

  bool operator==(const CohortYearStat&) const = default;
};

inline std::vector<CohortYearStat> adoption_stats(const std::vector<SiteYearFeatures>& observations,
                                                  std::vector<std::string> features = {}) {
  if (features.empty()) features = feature_names();
  struct Cell {
    std::size_t n = 0;
    std::size_t with_pixel = 0;
    std::map<std::string, std::size_t> adopters;
  };
  struct SiteYear {
    bool pixel = false;
    bool config = false;
    FeatureVector features;
  };
  // Rows for the same site-year are merged, so duplicates never double count.
  std::map<std::tuple<Cohort, int, std::string>, SiteYear> merged;
  for (const auto& o : observations) {
    auto& sy = merged[{o.cohort, o.year, o.domain}];
    sy.pixel = sy.pixel || o.has_pixel || !o.configs.empty();
    for (const auto& c : o.configs) {
      sy.config = true;
      merge_features(sy.features, c);
    }
  }
  std::map<std::pair<Cohort, int>, Cell> cells;
  for (const auto& [key, sy] : merged) {
    auto& cell = cells[{std::get<0>(key), std::get<1>(key)}];
    if (sy.pixel) ++cell.with_pixel;
    if (!sy.config) continue;
    ++cell.n;
    for (const auto& f : features) {
      auto it = sy.features.find(f);
      if (it != sy.features.end() && it->second) ++cell.adopters[f];
    }
  }

  std::vector<CohortYearStat> out;
  for (const auto& [key, cell] : cells) {
    for (const auto& f : features) {
      CohortYearStat s;
      s.cohort = key.first;
      s.year = key.second;
      s.feature = f;
      s.n = cell.n;
      s.n_with_pixel = cell.with_pixel;
      auto it = cell.adopters.find(f);
      s.adopters = it == cell.adopters.end() ? 0 : it->second;
      s.p = s.n ? static_cast<double>(s.adopters) / static_cast<double>(s.n) : 0.0;
      s.margin = margin_of_error(s.adopters, s.n);
      s.insufficient_sample = s.n < 2;
      const Cohort other = key.first == Cohort::health ? Cohort::control : Cohort::health;
      auto oc = cells.find({other, key.second});
      if (s.n > 0 && oc != cells.end() && oc->second.n > 0) {
        auto oa = oc->second.adopters.find(f);
        const std::size_t other_adopters = oa == oc->second.adopters.end() ? 0 : oa->second;
        const double other_p = static_cast<double>(other_adopters) / static_cast<double>(oc->second.n);
        s.cohens_h = cohens_h(s.p, other_p);
        try {
          const auto zt = two_proportion_z(s.adopters, s.n, other_adopters, oc->second.n);
          s.z = zt.z;
          s.p_value = zt.p_value;
        } catch (const DegenerateTest&) {
          s.degenerate_test = true;
        }
      }
      out.push_back(std::move(s));
    }
  }
  return out;
}

// Keeps every row of sites that have configuration data in at least
// `min_years` distinct years (counted per cohort).
inline std::vector<SiteYearFeatures> stable_cohort(const std::vector<SiteYearFeatures>& observations,
                                                   int min_years) {
  if (min_years < 1) throw InvalidArgument("min_years must be >= 1");
  std::map<std::pair<Cohort, std::string>, std::set<int>> years;
  for (const auto& o : observations)
    if (!o.configs.empty()) years[{o.cohort, o.domain}].insert(o.year);
  std::vector<SiteYearFeatures> out;
  for (const auto& o : observations) {
    auto it = years.find({o.cohort, o.domain});
    if (it != years.end() && static_cast<int>(it->second.size()) >= min_years) out.push_back(o);
  }
  return out;
}

// --- key overlap ---------------------------------------------------------------------

struct OverlapPoint {
  std::size_t k = 0;            // top-k keys considered
  double key_fraction = 0;      // k / distinct keys
  double site_fraction = 0;     // sites holding >= 1 of the top-k keys / all sites
};

struct KeyOverlapCurve {
  std::vector<std::string> ranked_keys;  // by site frequency desc, then lexicographic
  std::vector<OverlapPoint> points;      // points[i].k == i + 1
  std::size_t total_sites = 0;

  // Smallest k whose top-k keys reach `fraction` of all sites; empty when the
  // curve never gets there.
  std::optional<std::size_t> keys_to_cover(double fraction) const {
    for (const auto& pt : points)
      if (pt.site_fraction >= fraction) return pt.k;
    return std::nullopt;
  }
};

inline KeyOverlapCurve key_overlap_cdf(const std::map<std::string, std::set<std::string>>& per_site_keys) {
  KeyOverlapCurve curve;
  curve.total_sites = per_site_keys.size();
  std::map<std::string, std::vector<std::size_t>> sites_of;
  std::size_t idx = 0;
  for (const auto& [site, keys] : per_site_keys) {
    for (const auto& k : keys) sites_of[k].push_back(idx);
    ++idx;
  }
  for (const auto& kv : sites_of) curve.ranked_keys.push_back(kv.first);
  std::stable_sort(curve.ranked_keys.begin(), curve.ranked_keys.end(),
                   [&](const std::string& a, const std::string& b) {
                     return sites_of[a].size() > sites_of[b].size();
                   });
  std::vector<bool> covered(per_site_keys.size(), false);
  std::size_t n_covered = 0;
  const double total_keys = static_cast<double>(curve.ranked_keys.size());
  for (std::size_t i = 0; i < curve.ranked_keys.size(); ++i) {
    for (auto s : sites_of[curve.ranked_keys[i]]) {
      if (!covered[s]) {
        covered[s] = true;
        ++n_covered;
      }
    }
    curve.points.push_back({i + 1, static_cast<double>(i + 1) / total_keys,
                            static_cast<double>(n_covered) / static_cast<double>(curve.total_sites)});
  }
  return curve;
}

// --- output --------------------------------------------------------------------------

inline void to_json(nlohmann::json& j, const CohortYearStat& s) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); };
  j = nlohmann::json{{"cohort", to_string(s.cohort)},
                     {"year", s.year},
                     {"feature", s.feature},
                     {"n", s.n},
                     {"n_with_pixel", s.n_with_pixel},
                     {"adopters", s.adopters},
                     {"p", s.p},
                     {"margin", opt(s.margin)},
                     {"insufficient_sample", s.insufficient_sample},
                     {"z", opt(s.z)},
                     {"p_value", opt(s.p_value)},
                     {"cohens_h", opt(s.cohens_h)},
                     {"degenerate_test", s.degenerate_test}};
}

inline std::string stats_csv(const std::vector<CohortYearStat>& rows) {
  std::ostringstream out;
  out.precision(10);
  out << "cohort,year,feature,n,n_with_pixel,adopters,p,margin,z,p_value,cohens_h\n";
  auto opt = [&](const std::optional<double>& v) {
    if (v) out << *v;
  };
  for (const auto& r : rows) {
    out << to_string(r.cohort) << ',' << r.year << ',' << r.feature << ',' << r.n << ','
        << r.n_with_pixel << ',' << r.adopters << ',' << r.p << ',';
    opt(r.margin);
    out << ',';
    opt(r.z);
    out << ',';
    opt(r.p_value);
    out << ',';
    opt(r.cohens_h);
    out << '\n';
  }
  return out.str();
}

// Per-figure series: feature -> cohort -> [{year, p, margin, significant}].
inline nlohmann::json plot_data(const std::vector<CohortYearStat>& rows, double alpha = 0.05) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& r : rows) {
    nlohmann::json pt = {{"year", r.year}, {"p", r.p * 100.0}};
    pt["margin"] = r.margin ? nlohmann::json(*r.margin) : nlohmann::json();
    pt["significant"] = r.p_value.has_value() && *r.p_value < alpha;
    out[r.feature][to_string(r.cohort)].push_back(std::move(pt));
  }
  return out;
}

}  // namespace pixelarch
