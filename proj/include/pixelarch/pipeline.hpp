#pragma once

// Resumable measurement pipeline over a SnapshotStore.
//
// Stages run in a fixed order; each requires its predecessor's marker:
//   crawl_sites -> extract_pixels -> crawl_configs -> parse_configs
//               -> crack_keys -> analyze -> report
// Network stages append one index row per finished unit (site or Pixel ID)
// and skip units already present, so an interrupted run resumes where it
// stopped. Derived stages rewrite their indexes from scratch.

#include <algorithm>
#include <atomic>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "pixelarch/archive_client.hpp"
#include "pixelarch/cohort_stats.hpp"
#include "pixelarch/config_parser.hpp"
#include "pixelarch/error.hpp"
#include "pixelarch/key_cracker.hpp"
#include "pixelarch/observation.hpp"
#include "pixelarch/pixel_extractor.hpp"
#include "pixelarch/snapshot_store.hpp"

namespace pixelarch {

enum class Stage { crawl_sites, extract_pixels, crawl_configs, parse_configs, crack_keys, analyze, report };

inline constexpr Stage kAllStages[] = {Stage::crawl_sites,   Stage::extract_pixels, Stage::crawl_configs,
                                       Stage::parse_configs, Stage::crack_keys,     Stage::analyze,
                                       Stage::report};

inline const char* to_string(Stage s) {
  switch (s) {
    case Stage::crawl_sites: return "crawl_sites";
    case Stage::extract_pixels: return "extract_pixels";
    case Stage::crawl_configs: return "crawl_configs";
    case Stage::parse_configs: return "parse_configs";
    case Stage::crack_keys: return "crack_keys";
    case Stage::analyze: return "analyze";
    case Stage::report: return "report";
  }
  return "unknown";
}

// Accepts "crawl_sites" and "crawl-sites".
inline Stage parse_stage(std::string_view name) {
  std::string s(name);
  std::replace(s.begin(), s.end(), '-', '_');
  for (auto st : kAllStages)
    if (s == to_string(st)) return st;
  throw InvalidArgument("unknown stage '" + std::string(name) + "'");
}

inline std::optional<Stage> prerequisite(Stage s) {
  if (s == Stage::crawl_sites) return std::nullopt;
  return static_cast<Stage>(static_cast<int>(s) - 1);
}

// --- configuration ----------------------------------------------------------------------

struct PipelineConfig {
  std::map<Cohort, std::filesystem::path> site_lists;
  int first_year = 2017;
  int last_year = 2024;
  ArchiveEndpoints endpoints;
  FetchPolicy policy;
  std::filesystem::path store_root = "store";
  std::vector<std::filesystem::path> wordlists;
  unsigned jobs = 1;
  int stable_min_years = 4;
  std::uint64_t seed = 0;

  void validate() const {
    if (first_year > last_year) throw InvalidArgument("study range is empty");
    if (first_year < 1996) throw InvalidArgument("study range starts before the archive existed");
    if (jobs < 1) throw InvalidArgument("jobs must be >= 1");
    if (stable_min_years < 1) throw InvalidArgument("stable_min_years must be >= 1");
    policy.validate();
  }
};

namespace detail {

inline std::string trim_copy(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

inline std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = std::min(s.find(',', start), s.size());
    if (auto item = trim_copy(s.substr(start, comma - start)); !item.empty()) out.push_back(std::move(item));
    start = comma + 1;
  }
  return out;
}

}  // namespace detail

// Applies one configuration key. Relative paths resolve against `base`.
inline void apply_config_value(PipelineConfig& cfg, const std::string& key, const nlohmann::json& value,
                               const std::filesystem::path& base = {}) {
  auto str = [&] { return value.is_string() ? value.get<std::string>() : value.dump(); };
  auto path = [&] {
    std::filesystem::path p = str();
    return p.is_relative() && !base.empty() ? base / p : p;
  };
  auto integer = [&]() -> long long {
    if (value.is_number_integer()) return value.get<long long>();
    try {
      std::size_t used = 0;
      const auto s = str();
      const long long v = std::stoll(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw InvalidArgument("config key '" + key + "' expects an integer");
    }
  };
  auto ms = [&] { return std::chrono::milliseconds(integer()); };

  if (key == "health_sites") cfg.site_lists[Cohort::health] = path();
  else if (key == "control_sites") cfg.site_lists[Cohort::control] = path();
  else if (key == "first_year") cfg.first_year = static_cast<int>(integer());
  else if (key == "last_year") cfg.last_year = static_cast<int>(integer());
  else if (key == "cdx_url") cfg.endpoints.cdx_url = str();
  else if (key == "replay_template") cfg.endpoints.replay_template = str();
  else if (key == "store") cfg.store_root = path();
  else if (key == "jobs") cfg.jobs = static_cast<unsigned>(integer());
  else if (key == "stable_min_years") cfg.stable_min_years = static_cast<int>(integer());
  else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(integer());
  else if (key == "max_cdx_retries") cfg.policy.max_cdx_retries = static_cast<int>(integer());
  else if (key == "max_snapshot_retries") cfg.policy.max_snapshot_retries = static_cast<int>(integer());
  else if (key == "batch_limit") cfg.policy.batch_limit = static_cast<std::size_t>(integer());
  else if (key == "min_request_interval_ms") cfg.policy.min_request_interval = ms();
  else if (key == "backoff_base_ms") cfg.policy.backoff_base = ms();
  else if (key == "backoff_cap_ms") cfg.policy.backoff_cap = ms();
  else if (key == "request_timeout_ms") cfg.policy.request_timeout = ms();
  else if (key == "wordlists") {
    cfg.wordlists.clear();
    std::vector<std::string> items;
    if (value.is_array()) items = value.get<std::vector<std::string>>();
    else items = detail::split_list(str());
    for (const auto& item : items) {
      std::filesystem::path p = item;
      cfg.wordlists.push_back(p.is_relative() && !base.empty() ? base / p : p);
    }
  } else {
    throw InvalidArgument("unknown config key '" + key + "'");
  }
}

// Reads a JSON object or `key = value` lines ('#' starts a comment).
inline PipelineConfig load_pipeline_config(const std::filesystem::path& file, PipelineConfig cfg = {}) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw StorageIo("cannot read config " + file.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto base = file.parent_path();
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    const auto doc = nlohmann::json::parse(text, nullptr, false);
    if (doc.is_discarded()) throw InvalidArgument("config is not valid JSON: " + file.string());
    for (const auto& [k, v] : doc.items()) apply_config_value(cfg, k, v, base);
    return cfg;
  }
  std::istringstream lines(text);
  std::string line;
  int lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (detail::trim_copy(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw InvalidArgument(file.string() + ":" + std::to_string(lineno) + ": expected key = value");
    apply_config_value(cfg, detail::trim_copy(line.substr(0, eq)), detail::trim_copy(line.substr(eq + 1)), base);
  }
  return cfg;
}

// Lowercase host without scheme, "www.", port or path.
inline std::string normalize_domain(std::string_view raw) {
  std::string s = detail::trim_copy(raw);
  if (auto p = s.find("://"); p != std::string::npos) s.erase(0, p + 3);
  s.erase(std::min(s.find_first_of("/?#:"), s.size()));
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (s.starts_with("www.")) s.erase(0, 4);
  while (!s.empty() && s.back() == '.') s.pop_back();
  return s;
}

// One domain per line; blank lines and '#' comments skipped; duplicates dropped.
inline std::vector<std::string> load_site_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw StorageIo("cannot read site list " + path.string());
  std::set<std::string> seen;
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    auto d = normalize_domain(line);
    if (!d.empty() && seen.insert(d).second) out.push_back(std::move(d));
  }
  return out;
}

// Config-script URLs for `id`: the ID must end the path segment.
inline bool is_config_url_for(std::string_view url, const PixelId& id) {
  const std::string needle = "signals/config/" + id.str();
  for (auto pos = url.find(needle); pos != std::string_view::npos; pos = url.find(needle, pos + 1)) {
    const auto end = pos + needle.size();
    if (end == url.size() || url[end] == '?' || url[end] == '/' || url[end] == '#') return true;
  }
  return false;
}

// Runs fn(i) for i in [0, n) on up to `jobs` threads. The first exception
// is rethrown after all workers stop.
inline void parallel_for(std::size_t n, unsigned jobs, const std::function<void(std::size_t)>& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  {
    std::vector<std::jthread> workers;
    for (unsigned t = 0; t < std::min<std::size_t>(jobs, n); ++t) {
      workers.emplace_back([&] {
        for (std::size_t i; (i = next++) < n;) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(failure_mu);
            if (!failure) failure = std::current_exception();
            next = n;
          }
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
}

// --- pipeline -----------------------------------------------------------------------------

namespace indexes {
inline constexpr const char* kSiteSnapshots = "site_snapshots";
inline constexpr const char* kHtmlObservations = "html_observations";
inline constexpr const char* kConfigCaptures = "config_captures";
inline constexpr const char* kParseResults = "parse_results";
inline constexpr const char* kObservations = "observations";
inline constexpr const char* kUnattributed = "unattributed_configs";
inline constexpr const char* kCrackResults = "crack_results";
}  // namespace indexes

class Pipeline {
 public:
  explicit Pipeline(PipelineConfig cfg, std::shared_ptr<HttpTransport> transport = nullptr,
                    std::shared_ptr<Clock> clock = nullptr)
      : cfg_((cfg.validate(), std::move(cfg))),
        store_(cfg_.store_root),
        transport_(transport ? std::move(transport) : std::make_shared<HttplibTransport>()),
        clock_(clock ? std::move(clock) : std::make_shared<SteadyClock>()) {}

  const PipelineConfig& config() const { return cfg_; }
  SnapshotStore& store() { return store_; }

  nlohmann::json run_stage(Stage stage) {
    if (auto pre = prerequisite(stage); pre && !store_.stage_done(to_string(*pre)))
      throw MissingPrerequisite(to_string(*pre));
    nlohmann::json summary;
    switch (stage) {
      case Stage::crawl_sites: summary = crawl_sites(); break;
      case Stage::extract_pixels: summary = extract_pixels(); break;
      case Stage::crawl_configs: summary = crawl_configs(); break;
      case Stage::parse_configs: summary = parse_configs(); break;
      case Stage::crack_keys: summary = crack_keys(); break;
      case Stage::analyze: summary = analyze(); break;
      case Stage::report: summary = report(); break;
    }
    summary["stage"] = to_string(stage);
    store_.mark_stage_done(to_string(stage), summary);
    return summary;
  }

  nlohmann::json run_all() {
    nlohmann::json out = nlohmann::json::array();
    for (auto s : kAllStages) out.push_back(run_stage(s));
    return out;
  }

  std::filesystem::path analysis_dir() const { return cfg_.store_root / "analysis"; }

 private:
  ArchiveClient& client() {
    std::call_once(client_once_, [&] {
      client_ = std::make_unique<ArchiveClient>(cfg_.endpoints, cfg_.policy, transport_, clock_, cfg_.seed);
    });
    return *client_;
  }

  // Domain -> cohorts it is listed in. A domain listed under both cohorts
  // is kept in both and reported as an overlap.
  std::map<std::string, std::set<Cohort>> sites() const {
    if (cfg_.site_lists.empty()) throw InvalidArgument("no site lists configured");
    std::map<std::string, std::set<Cohort>> out;
    for (const auto& [cohort, path] : cfg_.site_lists)
      for (auto& d : load_site_list(path)) out[d].insert(cohort);
    return out;
  }

  // Per study year, up to two 200-status captures from that calendar year.
  std::vector<std::pair<int, SnapshotRecord>> pick_captures(const std::vector<SnapshotRecord>& records) const {
    std::map<int, std::vector<SnapshotRecord>> by_year;
    for (const auto& r : records) {
      auto t = parse_archive_timestamp(r.timestamp);
      if (!t || r.status_code != 200) continue;
      if (t->year < cfg_.first_year || t->year > cfg_.last_year) continue;
      by_year[t->year].push_back(r);
    }
    std::vector<std::pair<int, SnapshotRecord>> out;
    for (const auto& [year, recs] : by_year)
      for (auto& r : select_semiannual(recs, year)) out.emplace_back(year, std::move(r));
    return out;
  }

  // Fetches and stores each capture; returns one status row per capture.
  nlohmann::json fetch_all(BlobKind kind, const std::vector<std::pair<int, SnapshotRecord>>& picks,
                           std::size_t& fetched) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& [year, rec] : picks) {
      nlohmann::json row = record_to_json(rec);
      row["year"] = year;
      try {
        const auto snap = client().fetch_snapshot(rec);
        row["content_hash"] = store_.put_blob(kind, rec, snap.body);
        row["status"] = "ok";
        ++fetched;
      } catch (const ArchiveErrorPage& e) {
        row["status"] = "error_page";
        row["error"] = e.what();
      } catch (const SnapshotFetchFailed& e) {
        row["status"] = "fetch_failed";
        row["error"] = e.what();
      } catch (const InvalidArgument& e) {
        row["status"] = "fetch_failed";
        row["error"] = e.what();
      }
      rows.push_back(std::move(row));
    }
    return rows;
  }

  static std::set<std::string> done_keys(const std::vector<nlohmann::json>& rows, const char* field) {
    std::set<std::string> out;
    for (const auto& r : rows) out.insert(r.at(field).get<std::string>());
    return out;
  }

  nlohmann::json crawl_sites() {
    const auto all = sites();
    const auto done = done_keys(store_.read_index(indexes::kSiteSnapshots), "domain");
    std::vector<std::pair<std::string, std::set<Cohort>>> todo;
    std::size_t overlaps = 0;
    for (const auto& [d, cohorts] : all) {
      if (cohorts.size() > 1) ++overlaps;
      if (!done.contains(d)) todo.emplace_back(d, cohorts);
    }
    std::atomic<std::size_t> fetched{0}, failed{0}, cdx_failures{0};
    parallel_for(todo.size(), cfg_.jobs, [&](std::size_t i) {
      const auto& [domain, cohorts] = todo[i];
      nlohmann::json row = {{"domain", domain}};
      row["cohorts"] = nlohmann::json::array();
      for (auto c : cohorts) row["cohorts"].push_back(to_string(c));
      row["snapshots"] = nlohmann::json::array();
      try {
        const auto cdx = client().query_cdx(domain, cfg_.first_year);
        std::size_t n = 0;
        row["snapshots"] = fetch_all(BlobKind::html_snapshot, pick_captures(cdx.records), n);
        fetched += n;
        row["status"] = "ok";
        row["cdx_bad_rows"] = cdx.bad_rows;
      } catch (const ArchiveUnavailable& e) {
        row["status"] = "cdx_unavailable";
        row["error"] = e.what();
        ++cdx_failures;
      } catch (const MalformedCdxResponse& e) {
        row["status"] = "cdx_malformed";
        row["error"] = e.what();
        ++cdx_failures;
      }
      for (const auto& s : row["snapshots"])
        if (s["status"] != "ok") ++failed;
      store_.append(indexes::kSiteSnapshots, row);
    });
    return {{"sites_total", all.size()},
            {"sites_attempted", todo.size()},
            {"sites_skipped", all.size() - todo.size()},
            {"overlapping_sites", overlaps},
            {"snapshots_fetched", fetched.load()},
            {"snapshot_failures", failed.load()},
            {"cdx_failures", cdx_failures.load()}};
  }

  nlohmann::json extract_pixels() {
    std::map<std::tuple<Cohort, std::string, int>, HtmlObservation> obs;
    std::set<PixelId> distinct;
    for (const auto& row : store_.read_index(indexes::kSiteSnapshots)) {
      const auto domain = row.at("domain").get<std::string>();
      for (const auto& snap : row.at("snapshots")) {
        if (snap.at("status") != "ok") continue;
        const int year = snap.at("year").get<int>();
        // IDs that occur only inside HTML/JS comments are not active on the page.
        const auto ids = extract_pixel_ids(store_.get_blob(snap.at("content_hash").get<std::string>()))
                             .ids_outside_comments();
        for (const auto& c : row.at("cohorts")) {
          const Cohort cohort = parse_cohort(c.get<std::string>());
          auto& o = obs[{cohort, domain, year}];
          o.domain = domain;
          o.cohort = cohort;
          o.year = year;
          o.pixel_ids.insert(ids.begin(), ids.end());
        }
        distinct.insert(ids.begin(), ids.end());
      }
    }
    std::vector<nlohmann::json> rows;
    std::size_t with_pixel = 0;
    for (const auto& [key, o] : obs) {
      rows.push_back(o);
      if (!o.pixel_ids.empty()) ++with_pixel;
    }
    store_.reset_index(indexes::kHtmlObservations);
    store_.append_all(indexes::kHtmlObservations, rows);
    return {{"site_years", rows.size()},
            {"site_years_with_pixel", with_pixel},
            {"pixels_found", distinct.size()}};
  }

  nlohmann::json crawl_configs() {
    std::set<PixelId> ids;
    for (const auto& row : store_.read_index(indexes::kHtmlObservations))
      for (const auto& id : row.get<HtmlObservation>().pixel_ids) ids.insert(id);
    const auto done = done_keys(store_.read_index(indexes::kConfigCaptures), "pixel_id");
    std::vector<PixelId> todo;
    for (const auto& id : ids)
      if (!done.contains(id.str())) todo.push_back(id);
    std::atomic<std::size_t> fetched{0}, failed{0};
    parallel_for(todo.size(), cfg_.jobs, [&](std::size_t i) {
      const auto& id = todo[i];
      nlohmann::json row = {{"pixel_id", id.str()}, {"captures", nlohmann::json::array()}};
      try {
        auto cdx = client().query_cdx("connect.facebook.net/signals/config/" + id.str(), cfg_.first_year, true);
        std::erase_if(cdx.records, [&](const SnapshotRecord& r) { return !is_config_url_for(r.original_url, id); });
        std::size_t n = 0;
        row["captures"] = fetch_all(BlobKind::config_script, pick_captures(cdx.records), n);
        fetched += n;
        row["status"] = "ok";
      } catch (const ArchiveUnavailable& e) {
        row["status"] = "cdx_unavailable";
        row["error"] = e.what();
      } catch (const MalformedCdxResponse& e) {
        row["status"] = "cdx_malformed";
        row["error"] = e.what();
      }
      for (const auto& c : row["captures"])
        if (c["status"] != "ok") ++failed;
      store_.append(indexes::kConfigCaptures, row);
    });
    return {{"pixels_total", ids.size()},
            {"pixels_attempted", todo.size()},
            {"configs_fetched", fetched.load()},
            {"config_failures", failed.load()}};
  }

  nlohmann::json parse_configs() {
    std::vector<nlohmann::json> results;
    std::vector<ConfigCapture> parsed;
    std::map<std::string, nlohmann::json> cache;  // (pixel, hash) -> parse row body
    std::size_t ok = 0, failed = 0;
    for (const auto& row : store_.read_index(indexes::kConfigCaptures)) {
      const auto id = *PixelId::parse(row.at("pixel_id").get<std::string>());
      for (const auto& cap : row.at("captures")) {
        if (cap.at("status") != "ok") continue;
        const auto hash = cap.at("content_hash").get<std::string>();
        nlohmann::json r = {{"pixel_id", id.str()},
                            {"timestamp", cap.at("timestamp")},
                            {"timestamp_iso", cap.value("timestamp_iso", "")},
                            {"content_hash", hash}};
        auto& body = cache[id.str() + ":" + hash];
        if (body.is_null()) {
          try {
            const auto pc = parse_config_script(store_.get_blob(hash), id);
            body = {{"status", "ok"},
                    {"config", pc.config},
                    {"features", config_feature_vector(pc.config)},
                    {"diagnostics", pc.diagnostics}};
          } catch (const NoRegisterPluginRegion& e) {
            body = {{"status", "no_register_plugin"}, {"error", e.what()}};
          }
        }
        r.update(body);
        if (body["status"] == "ok") {
          ++ok;
          parsed.push_back({id, cap.at("timestamp").get<std::string>(), hash});
        } else {
          ++failed;
        }
        results.push_back(std::move(r));
      }
    }
    store_.reset_index(indexes::kParseResults);
    store_.append_all(indexes::kParseResults, results);

    std::vector<HtmlObservation> html;
    for (const auto& row : store_.read_index(indexes::kHtmlObservations)) html.push_back(row.get<HtmlObservation>());
    const auto attribution = attribute_configs(html, parsed);
    std::vector<nlohmann::json> obs_rows(attribution.observations.begin(), attribution.observations.end());
    std::vector<nlohmann::json> unattributed(attribution.unattributed.begin(), attribution.unattributed.end());
    store_.reset_index(indexes::kObservations);
    store_.append_all(indexes::kObservations, obs_rows);
    store_.reset_index(indexes::kUnattributed);
    store_.append_all(indexes::kUnattributed, unattributed);
    std::size_t attributed = 0;
    for (const auto& o : attribution.observations) attributed += o.config_refs.size();
    return {{"configs_parsed", ok},
            {"configs_unparseable", failed},
            {"config_refs_attributed", attributed},
            {"configs_unattributed", unattributed.size()}};
  }

  // Parsed configurations keyed by content hash.
  std::map<std::string, PixelConfiguration> parsed_configs() const {
    std::map<std::string, PixelConfiguration> out;
    for (const auto& r : store_.read_index(indexes::kParseResults))
      if (r.at("status") == "ok") out.emplace(r.at("content_hash").get<std::string>(), r.at("config").get<PixelConfiguration>());
    return out;
  }

  nlohmann::json crack_keys() {
    std::set<std::string> digests, observed;
    for (const auto& [hash, cfg] : parsed_configs()) {
      for (const auto& [event, rules] : cfg.unwanted_data.sensitive) {
        digests.insert(rules.cd.begin(), rules.cd.end());
        digests.insert(rules.url.begin(), rules.url.end());
      }
      for (const auto& [event, rules] : cfg.unwanted_data.blacklisted) {
        observed.insert(rules.cd.begin(), rules.cd.end());
        observed.insert(rules.url.begin(), rules.url.end());
      }
    }
    store_.reset_index(indexes::kCrackResults);
    nlohmann::json summary = {{"digests", digests.size()}, {"observed_blacklisted_keys", observed.size()}};
    if (digests.empty()) {
      summary["digests_cracked"] = 0;
      summary["reversal_rate"] = nullptr;
      return summary;
    }
    const auto dict = build_dictionary(cfg_.wordlists, observed);
    const auto rep = crack(digests, dict, cfg_.jobs);
    std::vector<nlohmann::json> rows(rep.results.begin(), rep.results.end());
    store_.append_all(indexes::kCrackResults, rows);
    summary["digests_cracked"] = rep.cracked;
    summary["reversal_rate"] = rep.reversal_rate();
    return summary;
  }

  static void write_file(const std::filesystem::path& p, const std::string& content) {
    std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << content;
    if (!out) throw StorageIo("cannot write " + p.string());
  }

  nlohmann::json analyze() {
    const auto configs = parsed_configs();
    std::map<std::string, std::string> cracked;
    for (const auto& r : store_.read_index(indexes::kCrackResults))
      if (!r["plaintext"].is_null()) cracked[r["digest"]] = r["plaintext"];

    std::vector<SiteYearFeatures> rows;
    // (cohort:domain) -> keys across all study years
    std::map<std::string, std::set<std::string>> blacklisted_keys, sensitive_keys;
    for (const auto& j : store_.read_index(indexes::kObservations)) {
      const auto o = j.get<SiteYearObservation>();
      if (o.year < cfg_.first_year || o.year > cfg_.last_year) continue;
      SiteYearFeatures f{o.domain, o.cohort, o.year, !o.pixel_ids.empty(), {}};
      const std::string site = std::string(to_string(o.cohort)) + ":" + o.domain;
      for (const auto& [id, hash] : o.config_refs) {
        auto it = configs.find(hash);
        if (it == configs.end()) continue;
        f.configs.push_back(config_feature_vector(it->second));
        for (const auto& [event, r] : it->second.unwanted_data.blacklisted) {
          blacklisted_keys[site].insert(r.cd.begin(), r.cd.end());
          blacklisted_keys[site].insert(r.url.begin(), r.url.end());
        }
        for (const auto& [event, r] : it->second.unwanted_data.sensitive)
          for (const auto* keys : {&r.cd, &r.url})
            for (const auto& d : *keys) sensitive_keys[site].insert(cracked.contains(d) ? cracked[d] : d);
      }
      if (f.has_pixel || !f.configs.empty()) {
        blacklisted_keys.try_emplace(site);
        sensitive_keys.try_emplace(site);
      }
      rows.push_back(std::move(f));
    }

    const auto stats = adoption_stats(rows);
    const auto stable = adoption_stats(stable_cohort(rows, cfg_.stable_min_years));
    // Key overlap is over sites with at least one configuration.
    std::set<std::string> config_sites;
    for (const auto& r : rows)
      if (!r.configs.empty()) config_sites.insert(std::string(to_string(r.cohort)) + ":" + r.domain);
    std::erase_if(blacklisted_keys, [&](const auto& kv) { return !config_sites.contains(kv.first); });
    std::erase_if(sensitive_keys, [&](const auto& kv) { return !config_sites.contains(kv.first); });
    auto overlap_json = [](const KeyOverlapCurve& c) {
      nlohmann::json pts = nlohmann::json::array();
      for (const auto& p : c.points) pts.push_back({{"k", p.k}, {"key_fraction", p.key_fraction}, {"site_fraction", p.site_fraction}});
      const auto median = c.keys_to_cover(0.5);
      return nlohmann::json{{"total_sites", c.total_sites},
                            {"ranked_keys", c.ranked_keys},
                            {"keys_to_cover_half", median ? nlohmann::json(*median) : nlohmann::json()},
                            {"points", pts}};
    };
    const nlohmann::json overlap = {{"blacklisted", overlap_json(key_overlap_cdf(blacklisted_keys))},
                                    {"sensitive", overlap_json(key_overlap_cdf(sensitive_keys))}};

    const auto dir = analysis_dir();
    write_file(dir / "adoption.csv", stats_csv(stats));
    write_file(dir / "adoption_stable.csv", stats_csv(stable));
    std::string jsonl;
    for (const auto& s : stats) jsonl += nlohmann::json(s).dump() + "\n";
    write_file(dir / "adoption.jsonl", jsonl);
    write_file(dir / "plot_data.json", plot_data(stats).dump(2) + "\n");
    write_file(dir / "key_overlap.json", overlap.dump(2) + "\n");
    return {{"site_years", rows.size()},
            {"stat_rows", stats.size()},
            {"stable_stat_rows", stable.size()},
            {"sites_with_config", config_sites.size()}};
  }

  nlohmann::json report() {
    const auto dir = analysis_dir();
    for (const char* f : {"adoption.jsonl", "key_overlap.json"})
      if (!std::filesystem::exists(dir / f)) throw MissingPrerequisite("analyze");
    std::vector<nlohmann::json> stats;
    {
      std::ifstream in(dir / "adoption.jsonl");
      for (std::string line; std::getline(in, line);)
        if (!line.empty()) stats.push_back(nlohmann::json::parse(line));
    }
    std::ifstream ov(dir / "key_overlap.json");
    const auto overlap = nlohmann::json::parse(ov);

    nlohmann::json rep = {{"study_years", {cfg_.first_year, cfg_.last_year}}};
    nlohmann::json stages = nlohmann::json::object();
    for (auto s : {Stage::crawl_sites, Stage::extract_pixels, Stage::crawl_configs, Stage::parse_configs,
                   Stage::crack_keys}) {
      auto sum = store_.stage_summary(to_string(s));
      sum.erase("stage");
      stages[to_string(s)] = sum;
    }
    rep["stages"] = stages;
    rep["key_overlap"] = {{"blacklisted_keys_to_cover_half", overlap["blacklisted"]["keys_to_cover_half"]},
                          {"sensitive_keys_to_cover_half", overlap["sensitive"]["keys_to_cover_half"]}};

    std::ostringstream md;
    md.precision(4);
    md << "# Pixel configuration adoption, " << cfg_.first_year << "-" << cfg_.last_year << "\n\n";
    md << "Denominator n: sites with at least one attributed configuration that year.\n"
       << "Margin: 95% t-based half-width in percentage points. z, h: against the other cohort.\n\n";
    std::string current;
    for (const auto& s : stats) {
      if (s["feature"] != current) {
        current = s["feature"];
        md << "\n## " << current << "\n\n| cohort | year | n | adopters | p (%) | margin | z | p-value | h |\n"
           << "|---|---|---|---|---|---|---|---|---|\n";
      }
      auto num = [&](const nlohmann::json& v, double scale = 1.0) {
        if (v.is_null()) return std::string("-");
        std::ostringstream o;
        o.precision(4);
        o << v.get<double>() * scale;
        return o.str();
      };
      md << "| " << s["cohort"].get<std::string>() << " | " << s["year"] << " | " << s["n"] << " | "
         << s["adopters"] << " | " << num(s["p"], 100.0) << " | " << num(s["margin"]) << " | " << num(s["z"])
         << " | " << num(s["p_value"]) << " | " << num(s["cohens_h"]) << " |\n";
    }
    write_file(dir / "report.json", rep.dump(2) + "\n");
    write_file(dir / "report.md", md.str());
    return {{"report", (dir / "report.md").string()}, {"stat_rows", stats.size()}};
  }

  PipelineConfig cfg_;
  SnapshotStore store_;
  std::shared_ptr<HttpTransport> transport_;
  std::shared_ptr<Clock> clock_;
  std::once_flag client_once_;
  std::unique_ptr<ArchiveClient> client_;
};

}  // namespace pixelarch
