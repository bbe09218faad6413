#pragma once

// Dictionary attack on SHA-256-hashed UnwantedData keys.
//
// Candidates come from operator wordlists, from plaintext keys observed in
// blacklisted rules, and from naming variants of both. Each candidate is
// hashed once into a digest index; lookups are then O(1).

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "pixelarch/error.hpp"
#include "pixelarch/sha256.hpp"

namespace pixelarch {

enum class CrackSource { wordlist, observed_blacklisted, variant };

inline const char* to_string(CrackSource s) {
  switch (s) {
    case CrackSource::wordlist: return "wordlist";
    case CrackSource::observed_blacklisted: return "observed_blacklisted";
    case CrackSource::variant: return "variant";
  }
  return "unknown";
}

struct Candidate {
  std::string plaintext;
  CrackSource source = CrackSource::wordlist;
  std::string variant_of;  // base entry for variants, empty otherwise
};

struct CrackResult {
  std::string digest;
  std::optional<std::string> plaintext;
  std::optional<CrackSource> source;
  std::optional<std::string> variant_of;

  bool operator==(const CrackResult&) const = default;
};

struct CrackReport {
  std::vector<CrackResult> results;  // sorted by digest
  std::size_t cracked = 0;

  std::size_t total() const { return results.size(); }
  double reversal_rate() const {
    return results.empty() ? 0.0 : static_cast<double>(cracked) / static_cast<double>(results.size());
  }
};

namespace detail {

// Splits an identifier into lowercase words at '_', '-', '.', spaces and
// camelCase boundaries ("userID_code" -> user, id, code).
inline std::vector<std::string> identifier_words(std::string_view key) {
  std::vector<std::string> words;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) words.push_back(std::move(cur));
    cur.clear();
  };
  for (std::size_t i = 0; i < key.size(); ++i) {
    const auto c = static_cast<unsigned char>(key[i]);
    if (c == '_' || c == '-' || c == '.' || c == ' ') {
      flush();
      continue;
    }
    if (std::isupper(c) && !cur.empty()) {
      const auto prev = static_cast<unsigned char>(key[i - 1]);
      const bool next_lower =
          i + 1 < key.size() && std::islower(static_cast<unsigned char>(key[i + 1]));
      if (std::islower(prev) || std::isdigit(prev) || (std::isupper(prev) && next_lower)) flush();
    }
    cur.push_back(static_cast<char>(std::tolower(c)));
  }
  flush();
  return words;
}

inline std::string capitalized(std::string w) {
  if (!w.empty()) w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
  return w;
}

inline std::string join_words(const std::vector<std::string>& words, std::string_view sep,
                              bool camel, bool pascal = false) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i > 0) out += sep;
    out += (camel && (i > 0 || pascal)) ? capitalized(words[i]) : words[i];
  }
  return out;
}

inline constexpr std::string_view kAffixWords[] = {"txt", "str", "input", "field"};
inline constexpr std::string_view kSuffixWords[] = {"id", "txt", "str", "input", "field"};

}  // namespace detail

// Naming variants of one key, excluding the key itself. Deterministic order.
inline std::vector<std::string> key_variants(std::string_view key) {
  std::vector<std::string> out;
  std::set<std::string> seen{std::string(key)};
  auto add = [&](std::string s) {
    if (!s.empty() && seen.insert(s).second) out.push_back(std::move(s));
  };
  auto lower = std::string(key);
  for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  add(lower);

  auto forms = [&](const std::vector<std::string>& w) {
    add(detail::join_words(w, "", false));
    add(detail::join_words(w, "_", false));
    add(detail::join_words(w, "-", false));
    add(detail::join_words(w, "", true));
    add(detail::join_words(w, "", true, true));
  };
  const auto words = detail::identifier_words(key);
  if (words.empty()) return out;
  forms(words);

  // Common UI-framework prefixes and suffixes, added and stripped.
  for (auto affix : detail::kAffixWords) {
    std::vector<std::string> w{std::string(affix)};
    w.insert(w.end(), words.begin(), words.end());
    add(detail::join_words(w, "_", false));
    add(detail::join_words(w, "", true));
  }
  for (auto affix : detail::kSuffixWords) {
    std::vector<std::string> w = words;
    w.emplace_back(affix);
    add(detail::join_words(w, "_", false));
    add(detail::join_words(w, "", true));
  }
  if (words.size() > 1) {
    for (auto affix : detail::kAffixWords) {
      if (words.front() == affix) forms({words.begin() + 1, words.end()});
    }
    for (auto affix : detail::kSuffixWords) {
      if (words.back() == affix) forms({words.begin(), words.end() - 1});
    }
  }
  return out;
}

class Dictionary {
 public:
  // First insertion of a plaintext wins, so callers add sources in priority
  // order (wordlist, observed, variants).
  void add(std::string plaintext, CrackSource source, std::string variant_of = {}) {
    if (plaintext.empty()) return;
    auto d = sha256(plaintext);
    index_.try_emplace(d, Candidate{std::move(plaintext), source, std::move(variant_of)});
  }

  const Candidate* lookup(const Digest& d) const {
    auto it = index_.find(d);
    return it == index_.end() ? nullptr : &it->second;
  }

  bool contains_plaintext(std::string_view s) const { return lookup(sha256(s)) != nullptr; }
  std::size_t size() const { return index_.size(); }
  bool empty() const { return index_.empty(); }

 private:
  std::unordered_map<Digest, Candidate, DigestHash> index_;
};

// One candidate per line; blank lines and trailing CR are skipped.
inline std::vector<std::string> load_wordlist(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StorageIo("cannot read wordlist " + path.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(std::move(line));
  }
  return out;
}

inline Dictionary build_dictionary(const std::vector<std::string>& words,
                                   const std::set<std::string>& observed_keys,
                                   bool with_variants = true) {
  Dictionary dict;
  for (const auto& w : words) dict.add(w, CrackSource::wordlist);
  for (const auto& k : observed_keys) dict.add(k, CrackSource::observed_blacklisted);
  if (with_variants) {
    for (const auto& w : words)
      for (auto& v : key_variants(w)) dict.add(std::move(v), CrackSource::variant, w);
    for (const auto& k : observed_keys)
      for (auto& v : key_variants(k)) dict.add(std::move(v), CrackSource::variant, k);
  }
  if (dict.empty()) throw EmptyDictionary();
  return dict;
}

inline Dictionary build_dictionary(const std::vector<std::filesystem::path>& wordlists,
                                   const std::set<std::string>& observed_keys,
                                   bool with_variants = true) {
  std::vector<std::string> words;
  for (const auto& p : wordlists) {
    auto w = load_wordlist(p);
    words.insert(words.end(), std::make_move_iterator(w.begin()), std::make_move_iterator(w.end()));
  }
  return build_dictionary(words, observed_keys, with_variants);
}

inline CrackReport crack(const std::set<std::string>& digests, const Dictionary& dict,
                         unsigned jobs = 1) {
  std::vector<std::string> todo(digests.begin(), digests.end());
  for (const auto& d : todo) {
    if (!is_sha256_hex(d)) throw InvalidArgument("not a SHA-256 hex digest: '" + d + "'");
  }
  CrackReport report;
  report.results.resize(todo.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      auto& r = report.results[i];
      r.digest = todo[i];
      if (const Candidate* c = dict.lookup(*digest_from_hex(todo[i]))) {
        r.plaintext = c->plaintext;
        r.source = c->source;
        if (!c->variant_of.empty()) r.variant_of = c->variant_of;
      }
    }
  };
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(todo.size() / 256 + 1)));
  if (jobs == 1) {
    work(0, todo.size());
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (todo.size() + jobs - 1) / jobs;
    for (std::size_t b = 0; b < todo.size(); b += chunk)
      pool.emplace_back(work, b, std::min(todo.size(), b + chunk));
  }
  report.cracked = static_cast<std::size_t>(std::count_if(
      report.results.begin(), report.results.end(), [](const auto& r) { return r.plaintext.has_value(); }));
  return report;
}

inline void to_json(nlohmann::json& j, const CrackResult& r) {
  j = nlohmann::json{{"digest", r.digest}};
  j["plaintext"] = r.plaintext ? nlohmann::json(*r.plaintext) : nlohmann::json();
  j["source"] = r.source ? nlohmann::json(to_string(*r.source)) : nlohmann::json();
  if (r.variant_of) j["variant_of"] = *r.variant_of;
}

inline void from_json(const nlohmann::json& j, CrackResult& r) {
  r.digest = j.at("digest").get<std::string>();
  r.plaintext.reset();
  r.source.reset();
  r.variant_of.reset();
  if (j.contains("plaintext") && !j["plaintext"].is_null()) r.plaintext = j["plaintext"].get<std::string>();
  if (j.contains("source") && !j["source"].is_null()) {
    const auto s = j["source"].get<std::string>();
    if (s == "wordlist") r.source = CrackSource::wordlist;
    else if (s == "observed_blacklisted") r.source = CrackSource::observed_blacklisted;
    else if (s == "variant") r.source = CrackSource::variant;
    else throw InvalidArgument("unknown crack source '" + s + "'");
  }
  if (j.contains("variant_of")) r.variant_of = j["variant_of"].get<std::string>();
}

}  // namespace pixelarch
