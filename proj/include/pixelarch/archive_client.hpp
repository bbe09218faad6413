#pragma once

// Web-archive access: CDX index queries and snapshot replay fetches.
//
// Transport and clock are injected so tests run against a local server with
// simulated time. Retries: network errors, 429 and 5xx are transient; any
// other non-2xx status is permanent. Requests to one host start at least
// FetchPolicy::min_request_interval apart.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "httplib.h"
#include "json.hpp"
#include "pixelarch/error.hpp"
#include "pixelarch/js_scan.hpp"
#include "pixelarch/timestamp.hpp"
#include "pixelarch/url.hpp"

namespace pixelarch {

inline constexpr std::string_view kDefaultCdxEndpoint = "https://web.archive.org/cdx/search/cdx";
inline constexpr std::string_view kDefaultReplayTemplate = "https://web.archive.org/web/{timestamp}/{url}";

// Earliest capture the archive can hold.
inline constexpr std::int64_t kArchiveEpochSeconds = days_from_civil(1996, 1, 1) * 86400;

struct SnapshotRecord {
  std::string original_url;
  std::string timestamp;  // 14 digits, UTC
  int status_code = 0;    // 0 when the index has no status ("-")
  std::string digest;
  std::string mime;

  bool operator==(const SnapshotRecord&) const = default;

  CivilTime time() const { return *parse_archive_timestamp(timestamp); }

  std::string archive_url(std::string_view replay_template = kDefaultReplayTemplate) const {
    std::string out(replay_template);
    auto replace = [&](std::string_view key, const std::string& value) {
      for (auto pos = out.find(key); pos != std::string::npos; pos = out.find(key, pos + value.size()))
        out.replace(pos, key.size(), value);
    };
    replace("{timestamp}", timestamp);
    replace("{url}", original_url);
    return out;
  }
};

struct FetchPolicy {
  int max_cdx_retries = 5;
  int max_snapshot_retries = 10;
  std::size_t batch_limit = 100000;
  std::chrono::milliseconds min_request_interval{1000};
  std::chrono::milliseconds backoff_base{1000};
  std::chrono::milliseconds backoff_cap{60000};
  std::chrono::milliseconds request_timeout{60000};

  void validate() const {
    if (max_cdx_retries < 1 || max_snapshot_retries < 1 || batch_limit < 1)
      throw InvalidArgument("fetch policy counts must be >= 1");
    if (min_request_interval.count() < 0 || backoff_base.count() < 0 || backoff_cap.count() < 0)
      throw InvalidArgument("fetch policy durations must be >= 0");
  }
};

struct ArchiveEndpoints {
  std::string cdx_url{kDefaultCdxEndpoint};
  std::string replay_template{kDefaultReplayTemplate};
};

// --- transport -------------------------------------------------------------------

struct HttpResult {
  int status = 0;  // 0: no HTTP response (connection error, timeout)
  std::string body;
  std::string final_url;
  std::string error;
};

class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpResult get(const std::string& url, std::chrono::milliseconds timeout) = 0;
};

class HttplibTransport final : public HttpTransport {
 public:
  HttpResult get(const std::string& url, std::chrono::milliseconds timeout) override {
    HttpResult out;
    auto parts = parse_url(url);
    if (!parts) {
      out.error = "unparseable URL " + url;
      return out;
    }
    httplib::Client client(parts->origin());
    client.set_follow_location(true);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    std::string target = parts->path.empty() ? "/" : parts->path;
    if (parts->query) target += "?" + *parts->query;
    auto res = client.Get(target);
    if (!res) {
      out.error = httplib::to_string(res.error());
      return out;
    }
    out.status = res->status;
    out.body = std::move(res->body);
    out.final_url = res->location.empty() ? url : res->location;
    return out;
  }
};

// --- time --------------------------------------------------------------------------

class Clock {
 public:
  using time_point = std::chrono::steady_clock::time_point;
  virtual ~Clock() = default;
  virtual time_point now() = 0;
  virtual void sleep_until(time_point t) = 0;
};

class SteadyClock final : public Clock {
 public:
  time_point now() override { return std::chrono::steady_clock::now(); }
  void sleep_until(time_point t) override { std::this_thread::sleep_until(t); }
};

// Serializes request starts per host: each grant is at least `interval`
// after the previous grant for the same host. Hosts do not block each other.
class HostRateLimiter {
 public:
  HostRateLimiter(std::shared_ptr<Clock> clock, std::chrono::milliseconds interval)
      : clock_(std::move(clock)), interval_(interval) {}

  // Blocks until the host may be contacted; returns the granted start time.
  Clock::time_point acquire(const std::string& host) {
    std::shared_ptr<HostState> state;
    {
      std::lock_guard lock(mu_);
      auto& slot = hosts_[host];
      if (!slot) slot = std::make_shared<HostState>();
      state = slot;
    }
    std::lock_guard host_lock(state->mu);
    auto now = clock_->now();
    if (state->last && now < *state->last + interval_) {
      clock_->sleep_until(*state->last + interval_);
      now = clock_->now();
    }
    state->last = now;
    return now;
  }

 private:
  struct HostState {
    std::mutex mu;
    std::optional<Clock::time_point> last;
  };
  std::shared_ptr<Clock> clock_;
  std::chrono::milliseconds interval_;
  std::mutex mu_;
  std::map<std::string, std::shared_ptr<HostState>> hosts_;
};

// --- helpers ----------------------------------------------------------------------

inline bool is_transient_status(int status) { return status == 0 || status == 429 || status >= 500; }

namespace detail {

inline std::string lower_ascii(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline std::string element_text(const std::string& lower_body, std::string_view tag) {
  const auto open = lower_body.find("<" + std::string(tag));
  if (open == std::string::npos) return {};
  const auto start = lower_body.find('>', open);
  const auto end = lower_body.find("</" + std::string(tag), start);
  if (start == std::string::npos || end == std::string::npos) return {};
  return lower_body.substr(start + 1, end - start - 1);
}

inline std::string visible_text(std::string_view html) {
  std::string out;
  bool in_tag = false;
  for (char c : html) {
    if (c == '<') in_tag = true;
    else if (c == '>') in_tag = false;
    else if (!in_tag && !std::isspace(static_cast<unsigned char>(c))) out.push_back(c);
  }
  return out;
}

}  // namespace detail

// Recognizes replay responses that carry no archived page: origin error pages
// captured in place of the site ("Access Denied", "504 Gateway Timeout"),
// the archive's own not-archived notice, and a toolbar wrapper with an empty
// content frame.
inline std::optional<std::string> archive_error_reason(std::string_view body) {
  const std::string lower = detail::lower_ascii(body);
  const std::string title = detail::element_text(lower, "title");
  const std::string h1 = detail::element_text(lower, "h1");
  for (const char* marker : {"access denied", "504 gateway timeout", "504 gateway time-out"}) {
    if (title.find(marker) != std::string::npos || h1.find(marker) != std::string::npos)
      return std::string("status page: ") + marker;
  }
  for (const char* marker : {"wayback machine has not archived that url", "this url has been excluded from the wayback machine"}) {
    if (lower.find(marker) != std::string::npos) return std::string("archive notice: ") + marker;
  }
  constexpr std::string_view kEnd = "<!-- end wayback toolbar insert -->";
  if (const auto end = lower.find(kEnd); end != std::string::npos) {
    std::string rest = lower.substr(end + kEnd.size());
    // Archive footer comments and closing tags are not page content.
    if (const auto footer = rest.find("<!--"); footer != std::string::npos) {
      const auto after = rest.find("-->", footer);
      if (after != std::string::npos && rest.find("file archived on", footer) < after) rest.erase(footer);
    }
    if (detail::visible_text(rest).empty()) return std::string("toolbar wrapper without content");
  }
  return std::nullopt;
}

inline bool is_archive_error_page(std::string_view body) { return archive_error_reason(body).has_value(); }

// Up to two captures per year: the ones closest to Jan 1 and Jul 1, each
// only within max_distance of its anchor. Ties go to the earlier capture.
inline std::vector<SnapshotRecord> select_semiannual(const std::vector<SnapshotRecord>& records, int year,
                                                     std::chrono::seconds max_distance = std::chrono::hours(24 * 183)) {
  std::vector<SnapshotRecord> out;
  std::optional<std::size_t> prev;
  for (unsigned month : {1u, 7u}) {
    const std::int64_t anchor = to_epoch_seconds(CivilTime{year, month, 1, 0, 0, 0});
    std::optional<std::size_t> best;
    std::int64_t best_dist = 0;
    for (std::size_t i = 0; i < records.size(); ++i) {
      auto t = parse_archive_timestamp(records[i].timestamp);
      if (!t) continue;
      const std::int64_t dist = std::llabs(to_epoch_seconds(*t) - anchor);
      if (dist > max_distance.count()) continue;
      if (!best || dist < best_dist) {
        best = i;
        best_dist = dist;
      }
    }
    if (best && best != prev) out.push_back(records[*best]);
    if (best) prev = best;
  }
  return out;
}

// --- client -------------------------------------------------------------------------

struct CdxResult {
  std::vector<SnapshotRecord> records;  // deduplicated, timestamp ascending
  std::size_t bad_rows = 0;
  std::size_t pages = 0;
};

struct FetchedSnapshot {
  std::string body;
  std::string final_url;
  int attempts = 0;
};

class ArchiveClient {
 public:
  ArchiveClient(ArchiveEndpoints endpoints, FetchPolicy policy,
                std::shared_ptr<HttpTransport> transport = std::make_shared<HttplibTransport>(),
                std::shared_ptr<Clock> clock = std::make_shared<SteadyClock>(), std::uint64_t seed = 0)
      : endpoints_(std::move(endpoints)),
        policy_((policy.validate(), policy)),
        transport_(std::move(transport)),
        clock_(std::move(clock)),
        limiter_(clock_, policy_.min_request_interval),
        rng_(seed ? seed : std::random_device{}()) {}

  const FetchPolicy& policy() const { return policy_; }
  const ArchiveEndpoints& endpoints() const { return endpoints_; }

  // All index records for `target` captured from `from_year` on. With
  // `prefix`, every URL starting with target matches.
  CdxResult query_cdx(const std::string& target, int from_year, bool prefix = false) {
    if (target.empty()) throw InvalidArgument("empty CDX target");
    if (from_year > current_year()) throw InvalidArgument("from_year is in the future");
    CdxResult result;
    std::set<std::pair<std::string, std::string>> seen;
    std::size_t good_rows = 0;
    std::optional<std::string> resume;
    do {
      std::string url = endpoints_.cdx_url + "?url=" + percent_encode(target) +
                        "&output=json&showResumeKey=true&limit=" + std::to_string(policy_.batch_limit) +
                        "&from=" + std::to_string(from_year);
      if (prefix) url += "&matchType=prefix";
      if (resume) url += "&resumeKey=" + percent_encode(*resume);
      const HttpResult res = get_with_retry(url, policy_.max_cdx_retries, /*cdx=*/true).first;
      ++result.pages;
      resume.reset();
      parse_cdx_page(res.body, result, seen, good_rows, resume);
    } while (resume);
    if (result.bad_rows > 0 && good_rows == 0) {
      throw MalformedCdxResponse("no parseable CDX rows for " + target, result.bad_rows);
    }
    std::sort(result.records.begin(), result.records.end(), [](const auto& a, const auto& b) {
      return std::tie(a.timestamp, a.original_url) < std::tie(b.timestamp, b.original_url);
    });
    return result;
  }

  FetchedSnapshot fetch_snapshot(const SnapshotRecord& record) {
    if (!parse_archive_timestamp(record.timestamp) || record.original_url.empty())
      throw InvalidArgument("record has no derivable archive URL");
    auto [res, attempts] = get_with_retry(record.archive_url(endpoints_.replay_template),
                                          policy_.max_snapshot_retries, /*cdx=*/false);
    if (auto reason = archive_error_reason(res.body)) {
      throw ArchiveErrorPage(record.archive_url(endpoints_.replay_template) + ": " + *reason);
    }
    return {std::move(res.body), std::move(res.final_url), attempts};
  }

 private:
  static std::optional<SnapshotRecord> parse_row(const nlohmann::json& row, const std::map<std::string, std::size_t>& col) {
    auto field = [&](const char* name) -> std::optional<std::string> {
      auto it = col.find(name);
      if (it == col.end() || it->second >= row.size() || !row[it->second].is_string()) return std::nullopt;
      return row[it->second].get<std::string>();
    };
    SnapshotRecord r;
    auto ts = field("timestamp");
    auto original = field("original");
    if (!ts || !original || ts->size() != 14 || original->empty()) return std::nullopt;
    auto t = parse_archive_timestamp(*ts);
    if (!t) return std::nullopt;
    const auto secs = to_epoch_seconds(*t);
    if (secs < kArchiveEpochSeconds || secs > now_epoch_seconds() + 86400) return std::nullopt;
    r.timestamp = *ts;
    r.original_url = *original;
    const auto status = field("statuscode").value_or("-");
    if (status != "-") {
      if (status.size() != 3 || !std::all_of(status.begin(), status.end(), ::isdigit)) return std::nullopt;
      r.status_code = std::stoi(status);
    }
    r.digest = field("digest").value_or("");
    r.mime = field("mimetype").value_or("");
    return r;
  }

  static void parse_cdx_page(const std::string& body, CdxResult& result,
                             std::set<std::pair<std::string, std::string>>& seen, std::size_t& good_rows,
                             std::optional<std::string>& resume) {
    if (js::trim(body).empty()) return;
    const auto doc = nlohmann::json::parse(body, nullptr, false);
    if (doc.is_discarded() || !doc.is_array()) {
      throw MalformedCdxResponse("CDX response is not a JSON array", 1);
    }
    if (doc.empty()) return;
    if (!doc[0].is_array()) throw MalformedCdxResponse("CDX response has no header row", 1);
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < doc[0].size(); ++i)
      if (doc[0][i].is_string()) col[doc[0][i].get<std::string>()] = i;
    // A resume key follows an empty separator row at the end of the page.
    std::size_t end = doc.size();
    if (end >= 3 && doc[end - 2].is_array() && doc[end - 2].empty() && doc[end - 1].is_array() &&
        doc[end - 1].size() == 1 && doc[end - 1][0].is_string()) {
      resume = doc[end - 1][0].get<std::string>();
      end -= 2;
    }
    for (std::size_t i = 1; i < end; ++i) {
      auto rec = doc[i].is_array() ? parse_row(doc[i], col) : std::nullopt;
      if (!rec) {
        ++result.bad_rows;
        continue;
      }
      ++good_rows;
      if (seen.emplace(rec->timestamp, rec->original_url).second) result.records.push_back(std::move(*rec));
    }
  }

  std::chrono::milliseconds backoff(int attempt) {
    const double base = static_cast<double>(policy_.backoff_base.count()) * std::pow(2.0, attempt - 1);
    const double capped = std::min(base, static_cast<double>(policy_.backoff_cap.count()));
    std::lock_guard lock(rng_mu_);
    const double jitter = std::uniform_real_distribution<double>(0.5, 1.0)(rng_);
    return std::chrono::milliseconds(static_cast<std::int64_t>(capped * jitter));
  }

  std::pair<HttpResult, int> get_with_retry(const std::string& url, int max_attempts, bool cdx) {
    const auto host = parse_url(url).value_or(UrlParts{}).authority;
    HttpResult last;
    for (int attempt = 1; attempt <= max_attempts; ++attempt) {
      limiter_.acquire(host);
      last = transport_->get(url, policy_.request_timeout);
      if (last.status >= 200 && last.status < 300) return {std::move(last), attempt};
      const bool transient = is_transient_status(last.status);
      if (!transient || attempt == max_attempts) {
        const std::string why = last.status ? "HTTP " + std::to_string(last.status) : last.error;
        const std::string msg = url + ": " + why + " after " + std::to_string(attempt) + " attempt(s)";
        if (cdx) throw ArchiveUnavailable(msg, attempt);
        throw SnapshotFetchFailed(msg, attempt, last.status);
      }
      clock_->sleep_until(clock_->now() + backoff(attempt));
    }
    throw std::logic_error("unreachable");
  }

  ArchiveEndpoints endpoints_;
  FetchPolicy policy_;
  std::shared_ptr<HttpTransport> transport_;
  std::shared_ptr<Clock> clock_;
  HostRateLimiter limiter_;
  std::mutex rng_mu_;
  std::mt19937_64 rng_;
};

}  // namespace pixelarch
