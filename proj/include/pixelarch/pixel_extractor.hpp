#pragma once

// Static detection of Meta Pixel installs in archived landing-page HTML.
// Matching is scanner based: archived markup is often malformed, and the
// base code follows a fixed template.

#include <algorithm>
#include <cctype>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pixelarch/js_scan.hpp"
#include "pixelarch/pixel_id.hpp"

namespace pixelarch {

enum class EvidenceKind {
  fbq_init,        // fbq('init', '<id>')
  tracking_image,  // facebook.com/tr?id=<id>
  config_script,   // connect.facebook.net/signals/config/<id>
};

inline const char* to_string(EvidenceKind k) {
  switch (k) {
    case EvidenceKind::fbq_init: return "fbq_init";
    case EvidenceKind::tracking_image: return "tracking_image";
    case EvidenceKind::config_script: return "config_script";
  }
  return "unknown";
}

struct PixelEvidence {
  PixelId id;
  EvidenceKind kind;
  std::size_t offset = 0;  // into ExtractionResult::text
  std::size_t length = 0;
  bool in_comment = false;

  bool operator==(const PixelEvidence&) const = default;
};

struct ExtractionResult {
  std::set<PixelId> ids;
  std::vector<PixelEvidence> evidence;
  // The scanned text (input with archive rewrites removed); evidence
  // offsets index into it.
  std::string text;

  std::set<PixelId> ids_outside_comments() const {
    std::set<PixelId> out;
    for (const auto& e : evidence)
      if (!e.in_comment) out.insert(e.id);
    return out;
  }
};

namespace detail {

inline bool ieq_at(std::string_view text, std::size_t pos, std::string_view needle) {
  if (pos + needle.size() > text.size()) return false;
  for (std::size_t i = 0; i < needle.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(text[pos + i])) != needle[i]) return false;
  }
  return true;
}

inline std::size_t ifind(std::string_view text, std::string_view needle, std::size_t from) {
  if (needle.empty() || text.size() < needle.size()) return std::string_view::npos;
  for (std::size_t i = from; i + needle.size() <= text.size(); ++i) {
    if (ieq_at(text, i, needle)) return i;
  }
  return std::string_view::npos;
}

inline std::size_t digit_run(std::string_view text, std::size_t pos) {
  std::size_t n = 0;
  while (pos + n < text.size() && text[pos + n] >= '0' && text[pos + n] <= '9') ++n;
  return n;
}

// Length of an archive replay prefix ("/web/<ts><modifier>/") starting at
// `pos`, which must index the "/web/" slash.
inline std::size_t replay_path_length(std::string_view text, std::size_t pos) {
  if (text.substr(pos, 5) != "/web/") return 0;
  std::size_t p = pos + 5;
  const std::size_t digits = digit_run(text, p);
  if (digits == 0 || digits > 14) return 0;
  p += digits;
  while (p < text.size() && (std::islower(static_cast<unsigned char>(text[p])) || text[p] == '_'))
    ++p;
  if (p >= text.size() || text[p] != '/') return 0;
  return p + 1 - pos;
}

}  // namespace detail

// Removes archive replay prefixes so the original URLs are visible, e.g.
//   https://web.archive.org/web/20200101000000js_/https://connect.facebook.net/x
//   -> https://connect.facebook.net/x
// Host-relative rewrites ("/web/2020im_/https://...") are removed as well.
inline std::string strip_archive_rewrites(std::string_view html) {
  std::string out;
  out.reserve(html.size());
  std::size_t copied = 0;
  std::size_t pos = 0;
  constexpr std::string_view kHost = "web.archive.org";
  while ((pos = html.find("/web/", pos)) != std::string_view::npos) {
    const std::size_t len = detail::replay_path_length(html, pos);
    if (len == 0) {
      ++pos;
      continue;
    }
    std::size_t start = pos;
    if (pos >= kHost.size() && detail::ieq_at(html, pos - kHost.size(), kHost)) {
      start = pos - kHost.size();
      if (start >= 2 && html.substr(start - 2, 2) == "//") {
        start -= 2;
        for (std::string_view scheme : {"https:", "http:"}) {
          if (start >= scheme.size() && detail::ieq_at(html, start - scheme.size(), scheme)) {
            start -= scheme.size();
            break;
          }
        }
      }
    } else {
      // Host-relative form: only strip when an absolute URL follows.
      const auto rest = html.substr(pos + len);
      if (!(detail::ieq_at(rest, 0, "http:") || detail::ieq_at(rest, 0, "https:") ||
            rest.substr(0, 2) == "//")) {
        pos += len;
        continue;
      }
    }
    out.append(html.substr(copied, start - copied));
    copied = pos + len;
    pos = copied;
  }
  out.append(html.substr(copied));
  return out;
}

namespace detail {

using Range = std::pair<std::size_t, std::size_t>;

// Byte ranges covered by HTML comments and by JS comments inside <script>
// elements, sorted by start.
inline std::vector<Range> comment_ranges(std::string_view html) {
  std::vector<Range> ranges;
  std::size_t pos = 0;
  while (pos < html.size()) {
    const auto script = ifind(html, "<script", pos);
    const auto comment = html.find("<!--", pos);
    if (comment != std::string_view::npos && (script == std::string_view::npos || comment < script)) {
      const auto end = html.find("-->", comment + 4);
      const std::size_t stop = end == std::string_view::npos ? html.size() : end + 3;
      ranges.emplace_back(comment, stop);
      pos = stop;
      continue;
    }
    if (script == std::string_view::npos) break;
    const auto open_end = html.find('>', script);
    if (open_end == std::string_view::npos) break;
    auto close = ifind(html, "</script", open_end + 1);
    if (close == std::string_view::npos) close = html.size();
    const auto body = html.substr(open_end + 1, close - open_end - 1);
    const std::size_t base = open_end + 1;
    std::size_t i = 0;
    char prev = '\0';
    while (i < body.size()) {
      const char c = body[i];
      if (c == '"' || c == '\'' || c == '`') {
        i = js::skip_string(body, i);
        prev = c;
        continue;
      }
      if (c == '/') {
        if (auto end = js::skip_comment(body, i)) {
          ranges.emplace_back(base + i, base + *end);
          i = *end;
          continue;
        }
        if (js::slash_starts_regex(prev)) {
          i = js::skip_regex(body, i);
          prev = '/';
          continue;
        }
      }
      // Legacy "<!--" inside scripts comments out the rest of the line.
      if (c == '<' && body.substr(i, 4) == "<!--") {
        auto nl = body.find('\n', i);
        if (nl == std::string_view::npos) nl = body.size();
        ranges.emplace_back(base + i, base + nl);
        i = nl;
        continue;
      }
      if (!js::is_space(c)) prev = c;
      ++i;
    }
    pos = close;
  }
  std::sort(ranges.begin(), ranges.end());
  return ranges;
}

inline bool inside(const std::vector<Range>& ranges, std::size_t offset) {
  auto it = std::upper_bound(ranges.begin(), ranges.end(), Range{offset, SIZE_MAX});
  if (it == ranges.begin()) return false;
  --it;
  return offset >= it->first && offset < it->second;
}

inline bool is_quote_at(std::string_view text, std::size_t& pos) {
  if (pos < text.size() && text[pos] == '\\') ++pos;
  if (pos < text.size() && (text[pos] == '\'' || text[pos] == '"' || text[pos] == '`')) {
    ++pos;
    return true;
  }
  for (std::string_view ent : {"&quot;", "&#39;", "&#x27;", "&apos;"}) {
    if (text.substr(pos, ent.size()) == ent) {
      pos += ent.size();
      return true;
    }
  }
  return false;
}

inline void skip_blank(std::string_view text, std::size_t& pos) {
  while (pos < text.size() && js::is_space(text[pos])) ++pos;
}

// fbq('init', '<id>' ...) with any quote style and spacing; the id may
// also be a bare number.
inline void scan_fbq_init(std::string_view text, std::vector<PixelEvidence>& out) {
  std::size_t pos = 0;
  while ((pos = text.find("fbq", pos)) != std::string_view::npos) {
    const std::size_t start = pos;
    pos += 3;
    if (start > 0 && js::is_ident_char(text[start - 1])) continue;
    std::size_t p = pos;
    skip_blank(text, p);
    if (p >= text.size() || text[p] != '(') continue;
    ++p;
    skip_blank(text, p);
    if (!is_quote_at(text, p)) continue;
    if (text.substr(p, 4) != "init") continue;
    p += 4;
    if (!is_quote_at(text, p)) continue;
    skip_blank(text, p);
    if (p >= text.size() || text[p] != ',') continue;
    ++p;
    skip_blank(text, p);
    std::size_t q = p;
    const bool quoted = is_quote_at(text, q);
    const std::size_t n = digit_run(text, q);
    auto id = PixelId::parse(text.substr(q, n));
    if (!id) continue;
    std::size_t end = q + n;
    if (quoted && !is_quote_at(text, end)) continue;
    out.push_back({*id, EvidenceKind::fbq_init, start, q + n - start, false});
  }
}

// facebook.com/tr?...id=<id>... inside a URL (img src, noscript, JS string).
inline void scan_tracking_image(std::string_view text, std::vector<PixelEvidence>& out) {
  std::size_t pos = 0;
  constexpr std::string_view kAnchor = "facebook.com/tr";
  while ((pos = ifind(text, kAnchor, pos)) != std::string_view::npos) {
    const std::size_t start = pos;
    std::size_t p = pos + kAnchor.size();
    pos = p;
    if (p < text.size() && text[p] == '/') ++p;
    if (p >= text.size() || text[p] != '?') continue;
    // The URL runs until a delimiter that cannot appear unescaped in it.
    std::size_t url_end = p;
    while (url_end < text.size() && !js::is_space(text[url_end]) && text[url_end] != '"' &&
           text[url_end] != '\'' && text[url_end] != '<' && text[url_end] != '>' &&
           text[url_end] != ')' && text[url_end] != '\\')
      ++url_end;
    std::size_t i = p;
    while (i < url_end) {
      const bool boundary = text[i] == '?' || text[i] == '&' || text[i] == ';';
      ++i;
      if (!boundary || text.substr(i, 3) != "id=") continue;
      const std::size_t n = digit_run(text, i + 3);
      if (auto id = PixelId::parse(text.substr(i + 3, n))) {
        out.push_back({*id, EvidenceKind::tracking_image, start, i + 3 + n - start, false});
        break;
      }
    }
  }
}

inline void scan_config_script(std::string_view text, std::vector<PixelEvidence>& out) {
  std::size_t pos = 0;
  constexpr std::string_view kAnchor = "connect.facebook.net/signals/config/";
  while ((pos = ifind(text, kAnchor, pos)) != std::string_view::npos) {
    const std::size_t start = pos;
    pos += kAnchor.size();
    const std::size_t n = digit_run(text, pos);
    if (auto id = PixelId::parse(text.substr(pos, n))) {
      out.push_back({*id, EvidenceKind::config_script, start, pos + n - start, false});
    }
  }
}

}  // namespace detail

inline ExtractionResult extract_pixel_ids(std::string_view html) {
  ExtractionResult result;
  result.text = strip_archive_rewrites(html);
  const std::string_view text = result.text;
  detail::scan_fbq_init(text, result.evidence);
  detail::scan_tracking_image(text, result.evidence);
  detail::scan_config_script(text, result.evidence);
  const auto comments = detail::comment_ranges(text);
  for (auto& e : result.evidence) {
    e.in_comment = detail::inside(comments, e.offset);
    result.ids.insert(e.id);
  }
  std::sort(result.evidence.begin(), result.evidence.end(),
            [](const PixelEvidence& a, const PixelEvidence& b) { return a.offset < b.offset; });
  return result;
}

}  // namespace pixelarch
