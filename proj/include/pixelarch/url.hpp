#pragma once

#include <cctype>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pixelarch {

// Minimal split of an absolute URL. Components keep their raw (still
// percent-encoded) text so a URL can be rebuilt byte-for-byte.
struct UrlParts {
  std::string scheme;     // "https"
  std::string authority;  // "host:port" without userinfo
  std::string host;
  std::string path;       // "" or "/a/b"
  std::optional<std::string> query;     // text after '?', without '?'
  std::optional<std::string> fragment;  // text after '#', without '#'

  std::string origin() const { return scheme + "://" + authority; }

  std::string to_string() const {
    std::string s = origin() + path;
    if (query) s += "?" + *query;
    if (fragment) s += "#" + *fragment;
    return s;
  }
};

inline std::optional<UrlParts> parse_url(std::string_view url) {
  const auto colon = url.find("://");
  if (colon == std::string_view::npos || colon == 0) return std::nullopt;
  for (char c : url.substr(0, colon)) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '+' && c != '-' && c != '.')
      return std::nullopt;
  }
  UrlParts p;
  p.scheme = std::string(url.substr(0, colon));
  for (auto& c : p.scheme) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  std::string_view rest = url.substr(colon + 3);
  const auto auth_end = rest.find_first_of("/?#");
  std::string_view authority = rest.substr(0, auth_end);
  if (const auto at = authority.rfind('@'); at != std::string_view::npos)
    authority = authority.substr(at + 1);
  if (authority.empty()) return std::nullopt;
  p.authority = std::string(authority);
  std::string_view host = authority;
  if (!host.empty() && host.front() == '[') {
    host = host.substr(0, host.find(']') + 1);
  } else if (const auto pc = host.rfind(':'); pc != std::string_view::npos) {
    host = host.substr(0, pc);
  }
  p.host = std::string(host);
  for (auto& c : p.host) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (auth_end == std::string_view::npos) return p;
  rest = rest.substr(auth_end);
  const auto hash = rest.find('#');
  if (hash != std::string_view::npos) {
    p.fragment = std::string(rest.substr(hash + 1));
    rest = rest.substr(0, hash);
  }
  const auto q = rest.find('?');
  if (q != std::string_view::npos) {
    p.query = std::string(rest.substr(q + 1));
    rest = rest.substr(0, q);
  }
  p.path = std::string(rest);
  return p;
}

inline std::string percent_decode(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  auto hexval = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '%' && i + 2 < s.size()) {
      const int hi = hexval(s[i + 1]);
      const int lo = hexval(s[i + 2]);
      if (hi >= 0 && lo >= 0) {
        out.push_back(static_cast<char>(hi * 16 + lo));
        i += 2;
        continue;
      }
    }
    out.push_back(s[i] == '+' ? ' ' : s[i]);
  }
  return out;
}

inline std::string percent_encode(std::string_view s) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : s) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(kHex[c >> 4]);
      out.push_back(kHex[c & 0xf]);
    }
  }
  return out;
}

// One `name[=value]` segment of a query string, raw text preserved.
struct QueryParam {
  std::string raw_name;
  std::optional<std::string> raw_value;
};

inline std::vector<QueryParam> split_query(std::string_view query) {
  std::vector<QueryParam> out;
  std::size_t pos = 0;
  while (pos <= query.size()) {
    auto amp = query.find('&', pos);
    if (amp == std::string_view::npos) amp = query.size();
    std::string_view seg = query.substr(pos, amp - pos);
    if (!seg.empty()) {
      QueryParam qp;
      if (const auto eq = seg.find('='); eq != std::string_view::npos) {
        qp.raw_name = std::string(seg.substr(0, eq));
        qp.raw_value = std::string(seg.substr(eq + 1));
      } else {
        qp.raw_name = std::string(seg);
      }
      out.push_back(std::move(qp));
    }
    pos = amp + 1;
  }
  return out;
}

inline std::string join_query(const std::vector<QueryParam>& params) {
  std::string out;
  for (const auto& p : params) {
    if (!out.empty()) out.push_back('&');
    out += p.raw_name;
    if (p.raw_value) out += "=" + *p.raw_value;
  }
  return out;
}

}  // namespace pixelarch
