#pragma once

// Local stand-in for the web archive, served over HTTP on 127.0.0.1.
//
// Serves the two endpoints the client uses:
//   GET /cdx/search/cdx?url=..&output=json&limit=..&from=..[&matchType=prefix][&resumeKey=..]
//   GET /web/<timestamp>[modifier]/<original url>
// URLs are matched after dropping the scheme and a leading "www.",
// lowercasing the host and adding an empty path, as the real index does. Scripted faults make a path answer with a sequence of
// statuses before serving normally.
//
// Manifest format (JSON):
//   {"captures": [{"url": "...", "timestamp": "YYYYMMDDhhmmss",
//                  "status": 200, "mime": "text/html",
//                  "body": "..." | "body_file": "relative/path"}],
//    "faults": {"<path + query>": [503, 503]}}

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "json.hpp"
#include "pixelarch/archive_client.hpp"
#include "pixelarch/error.hpp"
#include "pixelarch/sha256.hpp"

namespace pixelarch {

struct MockCapture {
  std::string url;
  std::string timestamp;
  int status = 200;
  std::string mime = "text/html";
  std::string body;
};

struct MockRequest {
  std::string path;  // path plus query
  int status = 0;
};

inline std::string canonical_archive_url(std::string_view url) {
  if (auto p = url.find("://"); p != std::string_view::npos) url.remove_prefix(p + 3);
  if (url.starts_with("www.")) url.remove_prefix(4);
  std::string out(url);
  const auto host_end = std::min(out.find_first_of("/?#"), out.size());
  for (std::size_t i = 0; i < host_end; ++i)
    out[i] = static_cast<char>(std::tolower(static_cast<unsigned char>(out[i])));
  if (host_end == out.size() || out[host_end] != '/') out.insert(host_end, "/");
  return out;
}

class MockArchive {
 public:
  MockArchive() = default;
  explicit MockArchive(std::vector<MockCapture> captures) {
    for (auto& c : captures) add(std::move(c));
  }
  ~MockArchive() { stop(); }
  MockArchive(const MockArchive&) = delete;
  MockArchive& operator=(const MockArchive&) = delete;

  static std::unique_ptr<MockArchive> from_manifest(const std::filesystem::path& manifest) {
    std::ifstream in(manifest, std::ios::binary);
    if (!in) throw StorageIo("cannot read manifest " + manifest.string());
    const auto doc = nlohmann::json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw InvalidArgument("manifest is not valid JSON: " + manifest.string());
    auto mock = std::make_unique<MockArchive>();
    const auto captures = doc.value("captures", nlohmann::json::array());
    for (const auto& c : captures) {
      MockCapture cap;
      cap.url = c.at("url").get<std::string>();
      cap.timestamp = c.at("timestamp").get<std::string>();
      cap.status = c.value("status", 200);
      cap.mime = c.value("mime", std::string("text/html"));
      if (c.contains("body_file")) {
        const auto path = manifest.parent_path() / c["body_file"].get<std::string>();
        std::ifstream body(path, std::ios::binary);
        if (!body) throw StorageIo("cannot read capture body " + path.string());
        cap.body.assign(std::istreambuf_iterator<char>(body), {});
      } else {
        cap.body = c.value("body", std::string());
      }
      mock->add(std::move(cap));
    }
    const auto faults = doc.value("faults", nlohmann::json::object());
    for (const auto& [path, statuses] : faults.items())
      mock->script_faults(path, statuses.get<std::vector<int>>());
    return mock;
  }

  void add(MockCapture c) {
    std::lock_guard lock(mu_);
    captures_.push_back(std::move(c));
    sorted_ = false;
  }

  // The next requests for `path` (path plus query, exactly as sent) get
  // these statuses, in order.
  void script_faults(const std::string& path, std::vector<int> statuses) {
    std::lock_guard lock(mu_);
    auto& q = faults_[path];
    q.insert(q.end(), statuses.begin(), statuses.end());
  }

  // Binds to an ephemeral port on 127.0.0.1 (or `port` if non-zero) and
  // serves on a background thread.
  int start(int port = 0) {
    server_.Get("/cdx/search/cdx", [this](const httplib::Request& req, httplib::Response& res) {
      if (fault(req, res)) return;
      serve_cdx(req, res);
      log(req, res.status);
    });
    server_.Get(R"(/web/(\d{1,14})([a-z_]*)/(.*))", [this](const httplib::Request& req, httplib::Response& res) {
      if (fault(req, res)) return;
      serve_replay(req, res);
      log(req, res.status);
    });
    port_ = port ? (server_.bind_to_port("127.0.0.1", port) ? port : -1)
                 : server_.bind_to_any_port("127.0.0.1");
    if (port_ <= 0) throw StorageIo("mock archive could not bind a port");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port_;
  }

  // Serves on the calling thread until stop() is called elsewhere.
  void run_blocking(int port) {
    start(port);
    if (thread_.joinable()) thread_.join();
  }

  void stop() {
    if (server_.is_running()) server_.stop();
    if (thread_.joinable() && thread_.get_id() != std::this_thread::get_id()) thread_.join();
  }

  // After start(): blocks until the server stops.
  void wait() {
    if (thread_.joinable()) thread_.join();
  }

  int port() const { return port_; }
  std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_); }

  ArchiveEndpoints endpoints() const {
    return {base_url() + "/cdx/search/cdx", base_url() + "/web/{timestamp}/{url}"};
  }

  std::vector<MockRequest> requests() const {
    std::lock_guard lock(mu_);
    return log_;
  }

  std::size_t capture_count() const {
    std::lock_guard lock(mu_);
    return captures_.size();
  }

 private:
  bool fault(const httplib::Request& req, httplib::Response& res) {
    std::lock_guard lock(mu_);
    for (const auto& key : {req.target, req.path}) {
      auto it = faults_.find(key);
      if (it == faults_.end() || it->second.empty()) continue;
      res.status = it->second.front();
      it->second.erase(it->second.begin());
      res.set_content("scripted fault", "text/plain");
      log_.push_back({req.target, res.status});
      return true;
    }
    return false;
  }

  void log(const httplib::Request& req, int status) {
    std::lock_guard lock(mu_);
    log_.push_back({req.target, status});
  }

  void ensure_sorted() {
    if (sorted_) return;
    std::stable_sort(captures_.begin(), captures_.end(), [](const MockCapture& a, const MockCapture& b) {
      return std::pair(canonical_archive_url(a.url), a.timestamp) <
             std::pair(canonical_archive_url(b.url), b.timestamp);
    });
    sorted_ = true;
  }

  void serve_cdx(const httplib::Request& req, httplib::Response& res) {
    const std::string target = canonical_archive_url(req.get_param_value("url"));
    const bool prefix = req.get_param_value("matchType") == "prefix";
    const std::string from = req.get_param_value("from");
    std::size_t limit = 0;
    std::size_t offset = 0;
    try {
      if (req.has_param("limit")) limit = std::stoul(req.get_param_value("limit"));
      if (req.has_param("resumeKey")) offset = std::stoul(req.get_param_value("resumeKey"));
    } catch (const std::exception&) {
      res.status = 400;
      return;
    }
    std::lock_guard lock(mu_);
    ensure_sorted();
    std::vector<const MockCapture*> hits;
    for (const auto& c : captures_) {
      const auto canon = canonical_archive_url(c.url);
      if (prefix ? !canon.starts_with(target) : canon != target) continue;
      if (!from.empty() && c.timestamp.substr(0, from.size()) < from) continue;
      hits.push_back(&c);
    }
    std::ostringstream out;
    out << R"([["urlkey","timestamp","original","mimetype","statuscode","digest","length"])";
    const std::size_t end = limit ? std::min(hits.size(), offset + limit) : hits.size();
    for (std::size_t i = offset; i < end; ++i) {
      const auto* c = hits[i];
      nlohmann::json row = {canonical_archive_url(c->url), c->timestamp, c->url, c->mime,
                            std::to_string(c->status), sha256_hex(c->body).substr(0, 32),
                            std::to_string(c->body.size())};
      out << ",\n" << row.dump();
    }
    if (end < hits.size() && req.get_param_value("showResumeKey") == "true") {
      out << ",\n[],\n[\"" << end << "\"]";
    }
    out << "]\n";
    res.status = 200;
    res.set_content(out.str(), "application/json");
  }

  void serve_replay(const httplib::Request& req, httplib::Response& res) {
    const std::string ts = req.matches[1];
    std::string url = req.matches[3];
    // The query string of the archived URL arrives as request params.
    if (const auto q = req.target.find('?'); q != std::string::npos) url += req.target.substr(q);
    const auto canon = canonical_archive_url(url);
    std::lock_guard lock(mu_);
    for (const auto& c : captures_) {
      if (c.timestamp == ts && canonical_archive_url(c.url) == canon) {
        res.status = c.status;
        res.set_content(c.body, c.mime);
        return;
      }
    }
    res.status = 404;
    res.set_content("not archived", "text/plain");
  }

  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  mutable std::mutex mu_;
  std::vector<MockCapture> captures_;
  bool sorted_ = false;
  std::map<std::string, std::vector<int>> faults_;
  std::vector<MockRequest> log_;
};

}  // namespace pixelarch
