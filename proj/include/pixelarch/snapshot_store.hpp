#pragma once

// Append-only, content-addressed measurement store.
//
// Layout under the root directory:
//   blobs/<first two hex>/<sha256>   raw bodies, one file per distinct content
//   index/<name>.jsonl               one JSON object per line, append-only
//   stages/<stage>.done              completion markers for resumable runs
//
// Appends to one index file are serialized; a reader sees a prefix of the
// appended lines (a trailing partial line is ignored).

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "pixelarch/archive_client.hpp"
#include "pixelarch/error.hpp"
#include "pixelarch/observation.hpp"
#include "pixelarch/sha256.hpp"
#include "pixelarch/timestamp.hpp"

namespace pixelarch {

enum class BlobKind { html_snapshot, config_script };

inline const char* to_string(BlobKind k) {
  return k == BlobKind::html_snapshot ? "html_snapshot" : "config_script";
}

inline BlobKind parse_blob_kind(std::string_view s) {
  if (s == "html_snapshot") return BlobKind::html_snapshot;
  if (s == "config_script") return BlobKind::config_script;
  throw InvalidArgument("unknown blob kind '" + std::string(s) + "'");
}

struct StoredBlob {
  std::string content_hash;
  BlobKind kind = BlobKind::html_snapshot;
  SnapshotRecord source_record;
  std::string body;
};

inline nlohmann::json record_to_json(const SnapshotRecord& r) {
  nlohmann::json j = {{"original_url", r.original_url}, {"timestamp", r.timestamp},
                      {"status_code", r.status_code},   {"digest", r.digest},
                      {"mime", r.mime}};
  if (auto t = parse_archive_timestamp(r.timestamp)) j["timestamp_iso"] = format_iso8601(*t);
  return j;
}

inline SnapshotRecord record_from_json(const nlohmann::json& j) {
  SnapshotRecord r;
  r.original_url = j.at("original_url").get<std::string>();
  r.timestamp = j.at("timestamp").get<std::string>();
  r.status_code = j.value("status_code", 0);
  r.digest = j.value("digest", std::string());
  r.mime = j.value("mime", std::string());
  return r;
}

class SnapshotStore {
 public:
  explicit SnapshotStore(std::filesystem::path root) : root_(std::move(root)) {
    std::error_code ec;
    for (const char* sub : {"blobs", "index", "stages"}) {
      std::filesystem::create_directories(root_ / sub, ec);
      if (ec) throw StorageIo("cannot create " + (root_ / sub).string() + ": " + ec.message());
    }
  }

  const std::filesystem::path& root() const { return root_; }

  // Stores `body` once per content hash and appends an index row for
  // (record, kind) unless that exact row exists. Returns the content hash.
  std::string put_blob(BlobKind kind, const SnapshotRecord& record, std::string_view body) {
    if (body.empty()) throw InvalidArgument("refusing to store an empty body");
    const std::string hash = sha256_hex(body);
    const auto path = blob_path(hash);
    {
      std::lock_guard lock(blob_mu_);
      if (!std::filesystem::exists(path)) write_atomically(path, body);
    }
    nlohmann::json row = record_to_json(record);
    row["kind"] = to_string(kind);
    row["content_hash"] = hash;
    const std::string key = row.dump();
    {
      std::lock_guard lock(blob_mu_);
      if (!records_loaded_) {
        for (const auto& r : read_index("records")) record_keys_.insert(r.dump());
        records_loaded_ = true;
      }
      if (!record_keys_.insert(key).second) return hash;
    }
    append("records", row);
    return hash;
  }

  bool has_blob(std::string_view hash) const {
    return is_sha256_hex(hash) && std::filesystem::exists(blob_path(hash));
  }

  std::string get_blob(std::string_view hash) const {
    if (!is_sha256_hex(hash)) throw InvalidArgument("not a content hash: '" + std::string(hash) + "'");
    std::ifstream in(blob_path(hash), std::ios::binary);
    if (!in) throw StorageIo("blob " + std::string(hash) + " not found");
    std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (sha256_hex(body) != hash) throw StorageIo("blob " + std::string(hash) + " is corrupt");
    return body;
  }

  // Every (record, kind) -> blob mapping in insertion order.
  std::vector<StoredBlob> blobs(std::optional<BlobKind> kind = std::nullopt, bool with_body = false) const {
    std::vector<StoredBlob> out;
    for (const auto& row : read_index("records")) {
      StoredBlob b;
      b.kind = parse_blob_kind(row.at("kind").get<std::string>());
      if (kind && b.kind != *kind) continue;
      b.content_hash = row.at("content_hash").get<std::string>();
      b.source_record = record_from_json(row);
      if (with_body) b.body = get_blob(b.content_hash);
      out.push_back(std::move(b));
    }
    return out;
  }

  void append(const std::string& index, const nlohmann::json& row) { append_all(index, {row}); }

  void append_all(const std::string& index, const std::vector<nlohmann::json>& rows) {
    auto& mu = index_mutex(index);
    std::lock_guard lock(mu);
    drop_torn_tail(index);
    std::ofstream out(index_path(index), std::ios::binary | std::ios::app);
    for (const auto& r : rows) out << r.dump() << '\n';
    out.flush();
    if (!out) throw StorageIo("cannot append to index " + index);
  }

  std::vector<nlohmann::json> read_index(const std::string& index) const {
    std::vector<nlohmann::json> out;
    std::ifstream in(index_path(index), std::ios::binary);
    if (!in) return out;
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::size_t pos = 0;
    while (pos < content.size()) {
      const auto nl = content.find('\n', pos);
      if (nl == std::string::npos) break;  // partial line still being written
      const auto line = std::string_view(content).substr(pos, nl - pos);
      pos = nl + 1;
      if (line.empty()) continue;
      auto j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded()) throw StorageIo("corrupt line in index " + index);
      out.push_back(std::move(j));
    }
    return out;
  }

  // Replaces an index wholesale (used when a stage is re-run from scratch).
  void reset_index(const std::string& index) {
    auto& mu = index_mutex(index);
    std::lock_guard lock(mu);
    {
      std::lock_guard names(map_mu_);
      checked_tails_.insert(index);
    }
    std::error_code ec;
    std::filesystem::remove(index_path(index), ec);
  }

  void mark_stage_done(const std::string& stage, const nlohmann::json& summary = nlohmann::json::object()) {
    write_atomically(root_ / "stages" / (stage + ".done"), summary.dump(2) + "\n");
  }
  bool stage_done(const std::string& stage) const {
    return std::filesystem::exists(root_ / "stages" / (stage + ".done"));
  }
  void clear_stage(const std::string& stage) {
    std::error_code ec;
    std::filesystem::remove(root_ / "stages" / (stage + ".done"), ec);
  }
  nlohmann::json stage_summary(const std::string& stage) const {
    std::ifstream in(root_ / "stages" / (stage + ".done"));
    if (!in) throw MissingPrerequisite(stage);
    return nlohmann::json::parse(in, nullptr, false);
  }

  std::filesystem::path index_path(const std::string& index) const {
    return root_ / "index" / (index + ".jsonl");
  }

 private:
  std::filesystem::path blob_path(std::string_view hash) const {
    return root_ / "blobs" / std::string(hash.substr(0, 2)) / std::string(hash);
  }

  static void write_atomically(const std::filesystem::path& path, std::string_view data) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    thread_local std::mt19937_64 rng{std::random_device{}()};
    auto tmp = path;
    tmp += ".tmp" + std::to_string(rng());
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      out.write(data.data(), static_cast<std::streamsize>(data.size()));
      out.flush();
      if (!out) throw StorageIo("cannot write " + tmp.string());
    }
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw StorageIo("cannot move " + tmp.string() + " into place: " + ec.message());
  }

  // A line without its newline can only be left by a writer that died
  // mid-append; it is cut before this process appends to the index.
  void drop_torn_tail(const std::string& index) {
    {
      std::lock_guard lock(map_mu_);
      if (!checked_tails_.insert(index).second) return;
    }
    const auto path = index_path(index);
    std::error_code ec;
    const auto size = std::filesystem::file_size(path, ec);
    if (ec || size == 0) return;
    std::ifstream in(path, std::ios::binary);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (content.back() == '\n') return;
    const auto keep = content.rfind('\n');
    std::filesystem::resize_file(path, keep == std::string::npos ? 0 : keep + 1, ec);
    if (ec) throw StorageIo("cannot repair index " + index + ": " + ec.message());
  }

  std::mutex& index_mutex(const std::string& index) {
    std::lock_guard lock(map_mu_);
    auto& p = index_mu_[index];
    if (!p) p = std::make_unique<std::mutex>();
    return *p;
  }

  std::filesystem::path root_;
  std::mutex blob_mu_;
  bool records_loaded_ = false;
  std::set<std::string> record_keys_;
  std::mutex map_mu_;
  std::map<std::string, std::unique_ptr<std::mutex>> index_mu_;
  std::set<std::string> checked_tails_;  // guarded by map_mu_
};

// --- attribution ------------------------------------------------------------------------

// Pixel IDs found in one site's archived HTML for one year.
struct HtmlObservation {
  std::string domain;
  Cohort cohort = Cohort::control;
  int year = 0;
  std::set<PixelId> pixel_ids;
};

// One archived capture of a configuration script.
struct ConfigCapture {
  PixelId pixel_id;
  std::string timestamp;  // 14-digit archive timestamp
  std::string content_hash;

  bool operator==(const ConfigCapture&) const = default;
  auto operator<=>(const ConfigCapture&) const = default;
};

struct AttributionResult {
  std::vector<SiteYearObservation> observations;  // sorted by (cohort, domain, year)
  std::vector<ConfigCapture> unattributed;
};

// A capture of Pixel P's configuration in calendar year Y is attached to
// site S for year Y iff S's year-Y HTML contained P. Observations of one
// site-year are unioned first.
inline AttributionResult attribute_configs(const std::vector<HtmlObservation>& html,
                                           const std::vector<ConfigCapture>& configs) {
  std::map<std::tuple<Cohort, std::string, int>, SiteYearObservation> merged;
  for (const auto& h : html) {
    auto& o = merged[{h.cohort, h.domain, h.year}];
    o.domain = h.domain;
    o.cohort = h.cohort;
    o.year = h.year;
    o.pixel_ids.insert(h.pixel_ids.begin(), h.pixel_ids.end());
  }
  // (year, pixel) -> observations containing it
  std::map<std::pair<int, PixelId>, std::vector<SiteYearObservation*>> by_pixel;
  for (auto& [key, o] : merged)
    for (const auto& id : o.pixel_ids) by_pixel[{o.year, id}].push_back(&o);

  AttributionResult result;
  for (const auto& c : configs) {
    const auto t = parse_archive_timestamp(c.timestamp);
    auto it = t ? by_pixel.find({t->year, c.pixel_id}) : by_pixel.end();
    if (it == by_pixel.end()) {
      result.unattributed.push_back(c);
      continue;
    }
    for (auto* o : it->second) o->config_refs.emplace(c.pixel_id, c.content_hash);
  }
  std::sort(result.unattributed.begin(), result.unattributed.end());
  result.unattributed.erase(std::unique(result.unattributed.begin(), result.unattributed.end()),
                            result.unattributed.end());
  for (auto& [key, o] : merged) result.observations.push_back(std::move(o));
  return result;
}

inline void to_json(nlohmann::json& j, const HtmlObservation& h) {
  j = {{"domain", h.domain}, {"cohort", to_string(h.cohort)}, {"year", h.year}};
  j["pixel_ids"] = nlohmann::json::array();
  for (const auto& id : h.pixel_ids) j["pixel_ids"].push_back(id.str());
}

inline void from_json(const nlohmann::json& j, HtmlObservation& h) {
  h.domain = j.at("domain").get<std::string>();
  h.cohort = parse_cohort(j.at("cohort").get<std::string>());
  h.year = j.at("year").get<int>();
  h.pixel_ids.clear();
  for (const auto& s : j.at("pixel_ids")) {
    auto id = PixelId::parse(s.get<std::string>());
    if (!id) throw InvalidArgument("invalid pixel id " + s.dump());
    h.pixel_ids.insert(*id);
  }
}

inline void to_json(nlohmann::json& j, const ConfigCapture& c) {
  j = {{"pixel_id", c.pixel_id.str()}, {"timestamp", c.timestamp}, {"content_hash", c.content_hash}};
}

inline void from_json(const nlohmann::json& j, ConfigCapture& c) {
  auto id = PixelId::parse(j.at("pixel_id").get<std::string>());
  if (!id) throw InvalidArgument("invalid pixel id in " + j.dump());
  c.pixel_id = *id;
  c.timestamp = j.at("timestamp").get<std::string>();
  c.content_hash = j.at("content_hash").get<std::string>();
}

}  // namespace pixelarch
