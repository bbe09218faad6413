#pragma once

// Executable model of what a Pixel sends for a given configuration.
//
// simulate() turns (configuration, page context, interaction) into the event
// payloads the Pixel would emit. Each configuration switch has a fixed
// footprint on those payloads:
//
//   AutomaticSetup          Microdata event on page load (one per metadata blob)
//   AutomaticSetup |
//   InferredEvents          SubscribedButtonClick on button clicks
//   estRules                derived events (with rule_id) for matching button text
//   FirstPartyCookies       fbp on every event, fbc when the visit carries fbclid
//   AutomaticMatching       udff[<key>] hashes on form submission, limited to
//                           selectedMatchKeys
//   UnwantedData            per-event url params -> "_removed_", cd keys dropped
//   ProtectedDataMode       cd emptied, dl/rl cut to scheme://host (applied last)

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "pixelarch/config_parser.hpp"
#include "pixelarch/error.hpp"
#include "pixelarch/sha256.hpp"
#include "pixelarch/url.hpp"

namespace pixelarch {

inline constexpr std::string_view kRemovedValue = "_removed_";

struct Button {
  std::string text;
  // Match-key codes of the inputs in the form this button submits.
  std::vector<std::string> form_fields;
};

struct PageContext {
  std::string page_url;
  std::string referrer_url;
  std::optional<std::string> fbclid;
  std::vector<Json> microdata_blobs;
  std::vector<Button> buttons;
  // Raw user input keyed by match-key code.
  std::map<std::string, std::string> form_values;
  std::int64_t visit_time_ms = 1700000000000;
};

struct EventPayload {
  std::string event_name;
  std::string dl;
  std::string rl;
  std::map<std::string, std::string> cd;
  std::map<std::string, std::string> ud;
  std::map<std::string, std::string> udff;
  std::optional<std::string> fbp;
  std::optional<std::string> fbc;
  std::optional<std::string> rule_id;

  bool operator==(const EventPayload&) const = default;
};

struct Interaction {
  enum class Kind { page_load, button_click, form_submit, track };
  Kind kind = Kind::page_load;
  std::size_t index = 0;
  // For Kind::track: an explicit fbq('track', name, custom_data) call.
  std::string event_name;
  std::map<std::string, std::string> custom_data;

  static Interaction page_load() { return {}; }
  static Interaction button_click(std::size_t i) { return {Kind::button_click, i, {}, {}}; }
  static Interaction form_submit(std::size_t i) { return {Kind::form_submit, i, {}, {}}; }
  static Interaction track(std::string name, std::map<std::string, std::string> cd = {}) {
    return {Kind::track, 0, std::move(name), std::move(cd)};
  }
};

struct SimulationOptions {
  // Query-parameter names compare case-sensitively unless cleared.
  bool case_sensitive_params = true;
};

// Normalizes a form value the way the Pixel does before hashing, then
// returns its SHA-256 hex digest.
inline std::string hash_match_value(std::string_view key_code, std::string_view raw) {
  if (!is_match_key_code(key_code)) {
    throw InvalidArgument("unknown match key code '" + std::string(key_code) + "'");
  }
  std::string_view trimmed = js::trim(raw);
  std::string norm;
  norm.reserve(trimmed.size());
  for (char c : trimmed) {
    const auto u = static_cast<unsigned char>(c);
    if (key_code == "ph") {
      if (std::isdigit(u)) norm.push_back(c);
    } else if (key_code == "ct" || key_code == "st") {
      if (std::isalnum(u)) norm.push_back(static_cast<char>(std::tolower(u)));
    } else {
      norm.push_back(static_cast<char>(std::tolower(u)));
    }
  }
  return sha256_hex(norm);
}

namespace detail {

inline std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

class KeyMatcher {
 public:
  KeyMatcher(const std::set<std::string>* plain, const std::set<std::string>* hashed,
             bool case_sensitive)
      : plain_(plain), hashed_(hashed), case_sensitive_(case_sensitive) {}

  bool matches(std::string_view name) const {
    if (plain_) {
      if (plain_->contains(std::string(name))) return true;
      if (!case_sensitive_) {
        const auto ln = lower(name);
        for (const auto& k : *plain_)
          if (lower(k) == ln) return true;
      }
    }
    if (hashed_) {
      if (hashed_->contains(sha256_hex(name))) return true;
      if (!case_sensitive_ && hashed_->contains(sha256_hex(lower(name)))) return true;
    }
    return false;
  }

  bool empty() const {
    return (!plain_ || plain_->empty()) && (!hashed_ || hashed_->empty());
  }

 private:
  const std::set<std::string>* plain_;
  const std::set<std::string>* hashed_;
  bool case_sensitive_;
};

inline std::string sanitize_url(const std::string& url, const KeyMatcher& m) {
  if (m.empty()) return url;
  auto parts = parse_url(url);
  if (!parts || !parts->query) return url;
  auto params = split_query(*parts->query);
  bool changed = false;
  for (auto& p : params) {
    if (m.matches(percent_decode(p.raw_name))) {
      if (p.raw_value != kRemovedValue) changed = true;
      p.raw_value = std::string(kRemovedValue);
    }
  }
  if (!changed) return url;
  parts->query = join_query(params);
  return parts->to_string();
}

inline std::string truncate_to_origin(const std::string& url) {
  if (url.empty()) return url;
  auto parts = parse_url(url);
  return parts ? parts->origin() : std::string();
}

inline std::string flatten_value(const Json& v) {
  return v.is_string() ? v.get<std::string>() : v.dump();
}

}  // namespace detail

// Applies a configuration's UnwantedData rules to one payload. A no-op
// unless UnwantedData is opted in.
inline void apply_unwanted_data(const PixelConfiguration& cfg, EventPayload& p,
                                const SimulationOptions& opts = {}) {
  if (!cfg.opted_in(optin::kUnwantedData)) return;
  const auto& ud = cfg.unwanted_data;
  const auto bl = ud.blacklisted.find(p.event_name);
  const auto se = ud.sensitive.find(p.event_name);
  const EventKeyRules* plain = bl == ud.blacklisted.end() ? nullptr : &bl->second;
  const EventKeyRules* hashed = se == ud.sensitive.end() ? nullptr : &se->second;
  if (!plain && !hashed) return;
  const detail::KeyMatcher url_rules(plain ? &plain->url : nullptr, hashed ? &hashed->url : nullptr,
                                     opts.case_sensitive_params);
  const detail::KeyMatcher cd_rules(plain ? &plain->cd : nullptr, hashed ? &hashed->cd : nullptr,
                                    opts.case_sensitive_params);
  p.dl = detail::sanitize_url(p.dl, url_rules);
  p.rl = detail::sanitize_url(p.rl, url_rules);
  std::erase_if(p.cd, [&](const auto& kv) { return cd_rules.matches(kv.first); });
}

// Core Setup restriction: no custom data, URLs cut to scheme://host.
inline void apply_protected_data_mode(EventPayload& p) {
  p.cd.clear();
  p.dl = detail::truncate_to_origin(p.dl);
  p.rl = detail::truncate_to_origin(p.rl);
}

inline std::string synthetic_fbp(const PageContext& ctx) {
  const auto origin = parse_url(ctx.page_url);
  const std::string digest = sha256_hex(origin ? origin->host : ctx.page_url);
  // Ten decimal digits derived from the host digest, stable per site.
  const std::uint64_t v = std::stoull(digest.substr(0, 15), nullptr, 16);
  return "fb.1." + std::to_string(ctx.visit_time_ms) + "." + std::to_string(v % 10000000000ULL);
}

inline std::vector<EventPayload> simulate(const PixelConfiguration& cfg, const PageContext& ctx,
                                          const Interaction& interaction,
                                          const SimulationOptions& opts = {}) {
  const auto page = parse_url(ctx.page_url);
  if (!page || page->host.empty()) {
    throw InvalidArgument("page_url must be absolute with scheme and host: " + ctx.page_url);
  }
  auto base = [&](std::string name) {
    EventPayload p;
    p.event_name = std::move(name);
    p.dl = ctx.page_url;
    p.rl = ctx.referrer_url;
    return p;
  };

  const bool setup = cfg.opted_in(optin::kAutomaticSetup);
  const bool inferred = cfg.opted_in(optin::kInferredEvents);
  std::vector<EventPayload> out;

  auto click_events = [&](std::size_t index) {
    if (index >= ctx.buttons.size()) {
      throw InvalidInteraction("button index " + std::to_string(index) + " out of range (" +
                               std::to_string(ctx.buttons.size()) + " buttons)");
    }
    const auto& button = ctx.buttons[index];
    if (setup || inferred) {
      auto p = base("SubscribedButtonClick");
      p.cd["buttonText"] = button.text;
      out.push_back(std::move(p));
    }
    for (const auto& rule : cfg.est_rules) {
      if (std::find(rule.trigger_values.begin(), rule.trigger_values.end(), button.text) ==
          rule.trigger_values.end())
        continue;
      auto p = base(rule.derived_event_name);
      p.rule_id = rule.rule_id;
      out.push_back(std::move(p));
    }
  };

  switch (interaction.kind) {
    case Interaction::Kind::page_load:
      out.push_back(base("PageView"));
      if (setup) {
        for (const auto& blob : ctx.microdata_blobs) {
          auto p = base("Microdata");
          if (blob.is_object()) {
            for (const auto& [k, v] : blob.items()) p.cd[k] = detail::flatten_value(v);
          } else {
            p.cd["data"] = detail::flatten_value(blob);
          }
          out.push_back(std::move(p));
        }
      }
      break;
    case Interaction::Kind::button_click:
      click_events(interaction.index);
      break;
    case Interaction::Kind::form_submit: {
      click_events(interaction.index);
      if (cfg.opted_in(optin::kAutomaticMatching)) {
        const auto& fields = ctx.buttons[interaction.index].form_fields;
        std::map<std::string, std::string> udff;
        for (const auto& key : cfg.selected_match_keys) {
          if (std::find(fields.begin(), fields.end(), key) == fields.end()) continue;
          auto v = ctx.form_values.find(key);
          if (v == ctx.form_values.end() || !is_match_key_code(key)) continue;
          udff[key] = hash_match_value(key, v->second);
        }
        for (auto& p : out) p.udff = udff;
      }
      break;
    }
    case Interaction::Kind::track: {
      auto p = base(interaction.event_name);
      p.cd = interaction.custom_data;
      out.push_back(std::move(p));
      break;
    }
  }

  const bool cookies = cfg.opted_in(optin::kFirstPartyCookies);
  const bool protected_mode = cfg.opted_in(optin::kProtectedDataMode);
  for (auto& p : out) {
    if (cookies) {
      p.fbp = synthetic_fbp(ctx);
      if (ctx.fbclid) p.fbc = "fb.1." + std::to_string(ctx.visit_time_ms) + "." + *ctx.fbclid;
    }
    apply_unwanted_data(cfg, p, opts);
    if (protected_mode) apply_protected_data_mode(p);
  }
  return out;
}

// --- differential comparison ---------------------------------------------------

struct ParamChange {
  enum class Kind { added, removed, changed };
  std::string event_name;
  std::size_t occurrence = 0;  // n-th event with this name in its list
  std::string param;
  Kind kind = Kind::changed;
  std::optional<std::string> before;
  std::optional<std::string> after;

  bool operator==(const ParamChange&) const = default;
};

struct EventRef {
  std::string event_name;
  std::size_t occurrence = 0;
  bool operator==(const EventRef&) const = default;
  auto operator<=>(const EventRef&) const = default;
};

struct BehaviorDelta {
  std::vector<EventRef> only_before;
  std::vector<EventRef> only_after;
  std::vector<ParamChange> changes;

  bool empty() const { return only_before.empty() && only_after.empty() && changes.empty(); }
};

// Flattens a payload into parameter-name -> value, using the wire names
// (dl, rl, cd[k], ud[k], udff[k], fbp, fbc, rule_id).
inline std::map<std::string, std::string> payload_params(const EventPayload& p) {
  std::map<std::string, std::string> out;
  out["dl"] = p.dl;
  out["rl"] = p.rl;
  for (const auto& [k, v] : p.cd) out["cd[" + k + "]"] = v;
  for (const auto& [k, v] : p.ud) out["ud[" + k + "]"] = v;
  for (const auto& [k, v] : p.udff) out["udff[" + k + "]"] = v;
  if (p.fbp) out["fbp"] = *p.fbp;
  if (p.fbc) out["fbc"] = *p.fbc;
  if (p.rule_id) out["rule_id"] = *p.rule_id;
  return out;
}

inline BehaviorDelta diff_payloads(const std::vector<EventPayload>& before,
                                   const std::vector<EventPayload>& after) {
  auto index = [](const std::vector<EventPayload>& v) {
    std::map<EventRef, const EventPayload*> m;
    std::map<std::string, std::size_t> seen;
    for (const auto& p : v) m[{p.event_name, seen[p.event_name]++}] = &p;
    return m;
  };
  const auto a = index(before);
  const auto b = index(after);
  BehaviorDelta delta;
  for (const auto& [ref, p] : a) {
    auto it = b.find(ref);
    if (it == b.end()) {
      delta.only_before.push_back(ref);
      continue;
    }
    const auto pa = payload_params(*p);
    const auto pb = payload_params(*it->second);
    std::set<std::string> keys;
    for (const auto& kv : pa) keys.insert(kv.first);
    for (const auto& kv : pb) keys.insert(kv.first);
    for (const auto& key : keys) {
      auto x = pa.find(key);
      auto y = pb.find(key);
      ParamChange c{ref.event_name, ref.occurrence, key, ParamChange::Kind::changed, {}, {}};
      if (x != pa.end()) c.before = x->second;
      if (y != pb.end()) c.after = y->second;
      if (x == pa.end()) c.kind = ParamChange::Kind::added;
      else if (y == pb.end()) c.kind = ParamChange::Kind::removed;
      else if (x->second == y->second) continue;
      delta.changes.push_back(std::move(c));
    }
  }
  for (const auto& [ref, p] : b) {
    if (!a.contains(ref)) delta.only_after.push_back(ref);
  }
  return delta;
}

// --- Core Setup circumvention ----------------------------------------------------

struct CircumventionFinding {
  std::size_t payload_index = 0;
  std::string event_name;
  std::string param;  // e.g. "ud[dl]"
  std::string value;
};

inline bool looks_like_sha256(std::string_view v) {
  if (v.size() != 64) return false;
  return std::all_of(v.begin(), v.end(),
                     [](char c) { return std::isxdigit(static_cast<unsigned char>(c)) != 0; });
}

// Flags payloads that ship a hashed page/referrer URL in ud[] while Core
// Setup is supposed to limit URLs to the domain.
inline std::vector<CircumventionFinding> find_core_setup_circumvention(
    bool protected_data_mode, const std::vector<EventPayload>& payloads) {
  std::vector<CircumventionFinding> out;
  if (!protected_data_mode) return out;
  for (std::size_t i = 0; i < payloads.size(); ++i) {
    for (const char* key : {"dl", "rl"}) {
      auto it = payloads[i].ud.find(key);
      if (it != payloads[i].ud.end() && looks_like_sha256(it->second)) {
        out.push_back({i, payloads[i].event_name, "ud[" + std::string(key) + "]", it->second});
      }
    }
  }
  return out;
}

// --- configuration patches -------------------------------------------------------

// Removes one switch from a configuration, leaving everything else intact.
// Accepted names: an opt-in name, "estRules", or "selectedMatchKeys:<code>".
inline PixelConfiguration patch_out(const PixelConfiguration& cfg, std::string_view feature) {
  PixelConfiguration out = cfg;
  constexpr std::string_view kKeyPrefix = "selectedMatchKeys:";
  if (feature == "estRules") {
    out.est_rules.clear();
  } else if (feature.starts_with(kKeyPrefix)) {
    const auto code = feature.substr(kKeyPrefix.size());
    std::erase(out.selected_match_keys, std::string(code));
  } else if (feature == optin::kAutomaticSetup || feature == optin::kInferredEvents ||
             feature == optin::kFirstPartyCookies || feature == optin::kAutomaticMatching ||
             feature == optin::kUnwantedData || feature == optin::kProtectedDataMode) {
    out.opt_ins[std::string(feature)] = false;
    out.unresolved_opt_ins.erase(std::string(feature));
  } else {
    throw InvalidArgument("unknown feature to patch out: '" + std::string(feature) + "'");
  }
  return out;
}

// --- JSON I/O -------------------------------------------------------------------

inline void to_json(Json& j, const EventPayload& p) {
  j = Json{{"event_name", p.event_name}, {"dl", p.dl}, {"rl", p.rl},
           {"cd", p.cd},                 {"ud", p.ud}, {"udff", p.udff}};
  if (p.fbp) j["fbp"] = *p.fbp;
  if (p.fbc) j["fbc"] = *p.fbc;
  if (p.rule_id) j["rule_id"] = *p.rule_id;
}

inline void from_json(const Json& j, EventPayload& p) {
  p.event_name = j.at("event_name").get<std::string>();
  p.dl = j.value("dl", std::string());
  p.rl = j.value("rl", std::string());
  p.cd = j.value("cd", std::map<std::string, std::string>{});
  p.ud = j.value("ud", std::map<std::string, std::string>{});
  p.udff = j.value("udff", std::map<std::string, std::string>{});
  if (j.contains("fbp")) p.fbp = j.at("fbp").get<std::string>();
  if (j.contains("fbc")) p.fbc = j.at("fbc").get<std::string>();
  if (j.contains("rule_id")) p.rule_id = j.at("rule_id").get<std::string>();
}

inline void from_json(const Json& j, Button& b) {
  b.text = j.at("text").get<std::string>();
  b.form_fields = j.value("form_fields", std::vector<std::string>{});
}

inline void to_json(Json& j, const Button& b) {
  j = Json{{"text", b.text}, {"form_fields", b.form_fields}};
}

inline void from_json(const Json& j, PageContext& c) {
  c.page_url = j.at("page_url").get<std::string>();
  c.referrer_url = j.value("referrer_url", std::string());
  if (j.contains("fbclid") && !j.at("fbclid").is_null()) c.fbclid = j.at("fbclid").get<std::string>();
  c.microdata_blobs = j.value("microdata_blobs", std::vector<Json>{});
  c.buttons = j.value("buttons", std::vector<Button>{});
  c.form_values = j.value("form_values", std::map<std::string, std::string>{});
  c.visit_time_ms = j.value("visit_time_ms", c.visit_time_ms);
}

inline void from_json(const Json& j, Interaction& i) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "page_load") i = Interaction::page_load();
  else if (kind == "button_click") i = Interaction::button_click(j.at("index").get<std::size_t>());
  else if (kind == "form_submit") i = Interaction::form_submit(j.at("index").get<std::size_t>());
  else if (kind == "track")
    i = Interaction::track(j.at("event_name").get<std::string>(),
                           j.value("custom_data", std::map<std::string, std::string>{}));
  else throw InvalidArgument("unknown interaction kind '" + kind + "'");
}

inline void to_json(Json& j, const BehaviorDelta& d) {
  static constexpr const char* kKinds[] = {"added", "removed", "changed"};
  auto refs = [](const std::vector<EventRef>& v) {
    Json a = Json::array();
    for (const auto& r : v) a.push_back({{"event_name", r.event_name}, {"occurrence", r.occurrence}});
    return a;
  };
  j = Json{{"only_before", refs(d.only_before)}, {"only_after", refs(d.only_after)},
           {"changes", Json::array()}};
  for (const auto& c : d.changes) {
    Json cj = {{"event_name", c.event_name}, {"occurrence", c.occurrence}, {"param", c.param},
               {"kind", kKinds[static_cast<int>(c.kind)]}};
    cj["before"] = c.before ? Json(*c.before) : Json();
    cj["after"] = c.after ? Json(*c.after) : Json();
    j["changes"].push_back(std::move(cj));
  }
}

}  // namespace pixelarch
