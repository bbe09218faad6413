#pragma once

// Parser for the structured tail of a Meta Pixel configuration script (the
// body of its fbq.registerPlugin(...) call). The minified prefix is skipped
// lexically; only three call shapes carry configuration:
//
//   instance.optIn(<pixelId>, <name>, <bool>)
//   config.set(<pixelId>, <name>, <json>)
//   fbq.set(<name>, <pixelId>, <json>)

#include <algorithm>
#include <array>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "pixelarch/error.hpp"
#include "pixelarch/js_scan.hpp"
#include "pixelarch/pixel_id.hpp"
#include "pixelarch/sha256.hpp"

namespace pixelarch {

using Json = nlohmann::json;

inline constexpr std::array<std::string_view, 11> kMatchKeyCodes = {
    "em", "ph", "fn", "ln", "ge", "db", "ct", "st", "zp", "country", "external_id"};

inline bool is_match_key_code(std::string_view code) {
  return std::find(kMatchKeyCodes.begin(), kMatchKeyCodes.end(), code) != kMatchKeyCodes.end();
}

namespace optin {
inline constexpr std::string_view kAutomaticSetup = "AutomaticSetup";
inline constexpr std::string_view kInferredEvents = "InferredEvents";
inline constexpr std::string_view kFirstPartyCookies = "FirstPartyCookies";
inline constexpr std::string_view kAutomaticMatching = "AutomaticMatching";
inline constexpr std::string_view kUnwantedData = "UnwantedData";
inline constexpr std::string_view kProtectedDataMode = "ProtectedDataMode";
}  // namespace optin

struct Diagnostic {
  enum class Level { info, warning, error };
  Level level = Level::warning;
  std::string code;
  std::string message;
  std::size_t offset = 0;

  bool operator==(const Diagnostic&) const = default;
};

// Per-event parameter-name rules for one section (cd or url).
struct EventKeyRules {
  std::set<std::string> cd;
  std::set<std::string> url;

  bool empty() const { return cd.empty() && url.empty(); }
  bool operator==(const EventKeyRules&) const = default;
};

struct UnwantedDataRules {
  // Plaintext parameter names, keyed by event name.
  std::map<std::string, EventKeyRules> blacklisted;
  // Lowercase 64-hex SHA-256 digests of parameter names, keyed by event.
  std::map<std::string, EventKeyRules> sensitive;
  // Sensitive entries that are not full digests (e.g. truncated in a
  // published excerpt). Never used for matching.
  std::map<std::string, EventKeyRules> malformed_sensitive;

  bool has_blacklisted() const {
    return std::any_of(blacklisted.begin(), blacklisted.end(),
                       [](const auto& kv) { return !kv.second.empty(); });
  }
  bool has_sensitive() const {
    return std::any_of(sensitive.begin(), sensitive.end(),
                       [](const auto& kv) { return !kv.second.empty(); });
  }
  bool empty() const {
    return !has_blacklisted() && !has_sensitive() && malformed_sensitive.empty();
  }
  bool operator==(const UnwantedDataRules&) const = default;
};

// A point-and-click event definition from the Event Setup Tool.
struct EstRule {
  Json condition;
  // Exact-match string values found inside the condition tree.
  std::vector<std::string> trigger_values;
  std::string derived_event_name;
  std::string rule_id;
  // Condition operators other than exact equality; such leaves never match.
  std::vector<std::string> unsupported_operators;

  bool operator==(const EstRule&) const = default;
};

struct PixelConfiguration {
  PixelId pixel_id;
  std::map<std::string, bool> opt_ins;
  // optIn calls whose flag was an expression rather than a literal.
  std::map<std::string, std::string> unresolved_opt_ins;
  std::vector<std::string> selected_match_keys;
  UnwantedDataRules unwanted_data;
  std::vector<EstRule> est_rules;
  std::map<std::string, Json> aux_sets;

  bool opted_in(std::string_view name) const {
    auto it = opt_ins.find(std::string(name));
    return it != opt_ins.end() && it->second;
  }

  bool operator==(const PixelConfiguration&) const = default;
};

struct ParsedConfig {
  PixelConfiguration config;
  std::vector<Diagnostic> diagnostics;
  // Calls naming a pixel other than the expected one, parsed per pixel.
  std::map<std::string, PixelConfiguration> foreign;
  std::size_t structured_calls = 0;

  bool has_diagnostic(std::string_view code) const {
    return std::any_of(diagnostics.begin(), diagnostics.end(),
                       [&](const Diagnostic& d) { return d.code == code; });
  }
};

namespace detail {

enum class CallKind { opt_in, config_set, fbq_set };

struct StructuredCall {
  CallKind kind;
  std::size_t offset;
  std::vector<std::string_view> args;
};

inline bool match_word(std::string_view text, std::size_t& pos, std::string_view word) {
  if (text.substr(pos, word.size()) != word) return false;
  pos += word.size();
  return true;
}

inline void skip_ws(std::string_view text, std::size_t& pos) {
  while (pos < text.size() && js::is_space(text[pos])) ++pos;
}

// Matches `<receiver> . <method> (` at `pos`; on success returns the index
// of '('.
inline std::optional<std::size_t> match_call_head(std::string_view text, std::size_t pos,
                                                  std::string_view receiver,
                                                  std::string_view method) {
  if (pos > 0 && (js::is_ident_char(text[pos - 1]) || text[pos - 1] == '.')) return std::nullopt;
  std::size_t p = pos;
  if (!match_word(text, p, receiver)) return std::nullopt;
  skip_ws(text, p);
  if (p >= text.size() || text[p] != '.') return std::nullopt;
  ++p;
  skip_ws(text, p);
  if (!match_word(text, p, method)) return std::nullopt;
  if (p < text.size() && js::is_ident_char(text[p])) return std::nullopt;
  skip_ws(text, p);
  if (p >= text.size() || text[p] != '(') return std::nullopt;
  return p;
}

inline std::vector<StructuredCall> find_structured_calls(std::string_view text) {
  std::vector<StructuredCall> calls;
  std::size_t resume = 0;
  js::for_each_code_position(text, [&](std::size_t pos) {
    if (pos < resume) return;
    const char c = text[pos];
    if (c != 'i' && c != 'c' && c != 'f') return;
    struct Head {
      std::string_view receiver, method;
      CallKind kind;
    };
    static constexpr Head kHeads[] = {{"instance", "optIn", CallKind::opt_in},
                                      {"config", "set", CallKind::config_set},
                                      {"fbq", "set", CallKind::fbq_set}};
    for (const auto& h : kHeads) {
      if (auto open = match_call_head(text, pos, h.receiver, h.method)) {
        if (auto args = js::extract_arguments(text, *open); args && args->args.size() >= 3) {
          calls.push_back({h.kind, pos, args->args});
          resume = args->end;
        }
        return;
      }
    }
  });
  return calls;
}

inline std::optional<std::string> decode_scalar(std::string_view arg) {
  if (arg.empty()) return std::nullopt;
  if (arg.front() == '"' || arg.front() == '\'' || arg.front() == '`') {
    return js::decode_string_literal(arg);
  }
  if (std::all_of(arg.begin(), arg.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    return std::string(arg);
  }
  return std::nullopt;
}

inline std::optional<bool> decode_bool(std::string_view arg) {
  if (arg == "true" || arg == "!0") return true;
  if (arg == "false" || arg == "!1") return false;
  return std::nullopt;
}

inline std::optional<Json> decode_json(std::string_view arg) {
  auto strict = js::relaxed_json_to_strict(arg);
  if (!strict) return std::nullopt;
  Json j = Json::parse(*strict, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) return std::nullopt;
  return j;
}

inline std::optional<std::string> json_to_decimal_id(const Json& j) {
  if (j.is_string()) {
    const auto& s = j.get_ref<const std::string&>();
    if (!s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; }))
      return s;
    return std::nullopt;
  }
  if (j.is_number_unsigned()) return std::to_string(j.get<std::uint64_t>());
  if (j.is_number_integer() && j.get<std::int64_t>() >= 0) return std::to_string(j.get<std::int64_t>());
  return std::nullopt;
}

class ConfigBuilder {
 public:
  explicit ConfigBuilder(std::vector<Diagnostic>& diags) : diags_(diags) {}

  void diag(Diagnostic::Level level, std::string code, std::string message, std::size_t offset) {
    diags_.push_back({level, std::move(code), std::move(message), offset});
  }

  void apply_opt_in(PixelConfiguration& cfg, const std::string& name, std::string_view flag,
                    std::size_t offset) {
    if (auto b = decode_bool(flag)) {
      cfg.opt_ins[name] = *b;
      cfg.unresolved_opt_ins.erase(name);
    } else {
      cfg.unresolved_opt_ins[name] = std::string(flag);
      diag(Diagnostic::Level::warning, "optin_flag_not_literal",
           "optIn(" + name + ") flag is not a literal boolean: " + std::string(flag), offset);
    }
  }

  void apply_set(PixelConfiguration& cfg, const std::string& name, std::string_view payload,
                 std::size_t offset) {
    auto json = decode_json(payload);
    if (!json) {
      cfg.aux_sets[name] = std::string(payload);
      diag(Diagnostic::Level::warning, "unparseable_payload",
           "payload of '" + name + "' is not decodable as JSON; kept raw", offset);
      return;
    }
    if (name == "unwantedData") {
      if (json->is_object()) return apply_unwanted_data(cfg, *json, offset);
    } else if (name == "automaticMatching") {
      if (json->is_object()) return apply_automatic_matching(cfg, *json, offset);
    } else if (name == "estRules") {
      if (json->is_array()) return apply_est_rules(cfg, *json, offset);
    } else {
      cfg.aux_sets[name] = std::move(*json);
      return;
    }
    diag(Diagnostic::Level::warning, "unexpected_payload_shape",
         "payload of '" + name + "' has an unexpected JSON type; kept in aux_sets", offset);
    cfg.aux_sets[name] = std::move(*json);
  }

 private:
  void apply_unwanted_data(PixelConfiguration& cfg, const Json& j, std::size_t offset) {
    auto read_section = [&](const char* group, bool hashed) {
      auto git = j.find(group);
      if (git == j.end()) return;
      if (!git->is_object()) {
        diag(Diagnostic::Level::warning, "unexpected_payload_shape",
             std::string(group) + " is not an object", offset);
        return;
      }
      for (const auto& [event, sections] : git->items()) {
        if (!sections.is_object()) continue;
        for (const auto& [section, keys] : sections.items()) {
          if (section != "cd" && section != "url") {
            diag(Diagnostic::Level::info, "unknown_rule_section",
                 std::string(group) + "." + event + "." + section + " ignored", offset);
            continue;
          }
          if (!keys.is_array()) continue;
          for (const auto& k : keys) {
            if (!k.is_string()) continue;
            const auto& key = k.get_ref<const std::string&>();
            auto pick = [&](std::map<std::string, EventKeyRules>& m) -> std::set<std::string>& {
              return section == "cd" ? m[event].cd : m[event].url;
            };
            if (!hashed) {
              pick(cfg.unwanted_data.blacklisted).insert(key);
            } else if (is_sha256_hex(key)) {
              pick(cfg.unwanted_data.sensitive).insert(key);
            } else {
              pick(cfg.unwanted_data.malformed_sensitive).insert(key);
              diag(Diagnostic::Level::warning, "malformed_sensitive_digest",
                   "sensitive key '" + key + "' for " + event + "." + section +
                       " is not a 64-hex digest",
                   offset);
            }
          }
        }
      }
    };
    read_section("blacklisted_keys", false);
    read_section("sensitive_keys", true);
  }

  void apply_automatic_matching(PixelConfiguration& cfg, const Json& j, std::size_t offset) {
    auto it = j.find("selectedMatchKeys");
    if (it == j.end() || !it->is_array()) {
      cfg.aux_sets["automaticMatching"] = j;
      return;
    }
    Json unknown = Json::array();
    for (const auto& k : *it) {
      if (k.is_string() && is_match_key_code(k.get_ref<const std::string&>())) {
        const auto& code = k.get_ref<const std::string&>();
        if (std::find(cfg.selected_match_keys.begin(), cfg.selected_match_keys.end(), code) ==
            cfg.selected_match_keys.end())
          cfg.selected_match_keys.push_back(code);
      } else {
        unknown.push_back(k);
      }
    }
    if (!unknown.empty()) {
      auto& slot = cfg.aux_sets["automaticMatching.unknownKeys"];
      if (!slot.is_array()) slot = Json::array();
      for (auto& u : unknown) slot.push_back(u);
      diag(Diagnostic::Level::warning, "unknown_match_key",
           "selectedMatchKeys contains codes outside the known vocabulary: " + unknown.dump(),
           offset);
    }
  }

  static void collect_triggers(const Json& node, EstRule& rule) {
    if (node.is_array()) {
      for (const auto& child : node) collect_triggers(child, rule);
      return;
    }
    if (!node.is_object()) return;
    bool event_leaf = false;
    if (auto k = node.find("key"); k != node.end() && k->is_string()) {
      const auto& key = k->get_ref<const std::string&>();
      event_leaf = key == "event" || key == "eventName";
    }
    for (const auto& [key, value] : node.items()) {
      if (key != "value") {
        collect_triggers(value, rule);
        continue;
      }
      if (event_leaf) continue;
      if (value.is_string()) {
        rule.trigger_values.push_back(value.get<std::string>());
      } else if (value.is_object()) {
        const std::string op = value.value("type", std::string("exact"));
        const Json* term = nullptr;
        if (auto t = value.find("term"); t != value.end()) term = &*t;
        else if (auto v = value.find("value"); v != value.end()) term = &*v;
        if ((op == "exact" || op == "eq" || op == "equals") && term && term->is_string()) {
          rule.trigger_values.push_back(term->get<std::string>());
        } else {
          rule.unsupported_operators.push_back(op);
        }
      }
    }
  }

  void apply_est_rules(PixelConfiguration& cfg, const Json& rules, std::size_t offset) {
    for (const auto& r : rules) {
      EstRule rule;
      std::optional<std::string> id;
      if (r.is_object()) {
        rule.condition = r.value("condition", Json());
        if (rule.condition.is_string()) {
          auto inner = decode_json(rule.condition.get<std::string>());
          if (inner) rule.condition = std::move(*inner);
        }
        if (auto n = r.find("derived_event_name"); n != r.end() && n->is_string())
          rule.derived_event_name = n->get<std::string>();
        if (auto i = r.find("rule_id"); i != r.end()) id = json_to_decimal_id(*i);
      }
      if (!r.is_object() || rule.derived_event_name.empty() || !id) {
        diag(Diagnostic::Level::warning, "invalid_est_rule",
             "estRules entry lacks derived_event_name or a decimal rule_id: " + r.dump(), offset);
        auto& slot = cfg.aux_sets["estRules.invalid"];
        if (!slot.is_array()) slot = Json::array();
        slot.push_back(r);
        continue;
      }
      rule.rule_id = *id;
      collect_triggers(rule.condition, rule);
      if (!rule.unsupported_operators.empty()) {
        diag(Diagnostic::Level::info, "unsupported_condition_operator",
             "rule " + rule.rule_id + " uses non-exact operators; those leaves never match",
             offset);
      }
      cfg.est_rules.push_back(std::move(rule));
    }
  }

  std::vector<Diagnostic>& diags_;
};

}  // namespace detail

// Parses a configuration script. Throws NoRegisterPluginRegion when the
// script contains none of the three structured call shapes.
inline ParsedConfig parse_config_script(std::string_view script,
                                        const std::optional<PixelId>& expected_pixel_id = {}) {
  ParsedConfig out;
  detail::ConfigBuilder builder(out.diagnostics);
  const auto calls = detail::find_structured_calls(script);

  std::optional<std::string> primary;
  if (expected_pixel_id) primary = expected_pixel_id->str();

  for (const auto& call : calls) {
    std::optional<std::string> pixel, name;
    if (call.kind == detail::CallKind::fbq_set) {
      name = detail::decode_scalar(call.args[0]);
      pixel = detail::decode_scalar(call.args[1]);
    } else {
      pixel = detail::decode_scalar(call.args[0]);
      name = detail::decode_scalar(call.args[1]);
    }
    if (!pixel || !name || !PixelId::valid(*pixel)) {
      builder.diag(Diagnostic::Level::info, "unrecognized_call",
                   "structured call with non-literal pixel id or name skipped", call.offset);
      continue;
    }
    ++out.structured_calls;
    if (!primary) primary = *pixel;

    PixelConfiguration* target = &out.config;
    if (*pixel != *primary) {
      builder.diag(Diagnostic::Level::warning, "foreign_pixel_id",
                   "call for pixel " + *pixel + " in script for " + *primary, call.offset);
      target = &out.foreign[*pixel];
      target->pixel_id = *PixelId::parse(*pixel);
    }
    if (call.kind == detail::CallKind::opt_in) {
      builder.apply_opt_in(*target, *name, call.args[2], call.offset);
    } else {
      builder.apply_set(*target, *name, call.args[2], call.offset);
    }
  }

  if (out.structured_calls == 0) {
    throw NoRegisterPluginRegion("no optIn/config.set/fbq.set calls found");
  }
  out.config.pixel_id = *PixelId::parse(*primary);

  if (!out.config.selected_match_keys.empty() &&
      !out.config.opt_ins.contains(std::string(optin::kAutomaticMatching))) {
    builder.diag(Diagnostic::Level::warning, "match_keys_without_optin",
                 "selectedMatchKeys present but AutomaticMatching was never opted in", 0);
  }
  return out;
}

// Renders a configuration as a canonical registerPlugin tail. Parsing the
// result yields an equal PixelConfiguration.
inline std::string render_config_script(const PixelConfiguration& cfg) {
  const std::string id = js::json_quote(cfg.pixel_id.str());
  std::string s = "fbq.registerPlugin(\"config:" + cfg.pixel_id.str() +
                  "\", {__fbEventsPlugin: 1, plugin: function(fbq, instance, config) {\n";
  for (const auto& [name, on] : cfg.opt_ins) {
    s += "instance.optIn(" + id + ", " + js::json_quote(name) + ", " + (on ? "true" : "false") +
         ", true);\n";
  }
  for (const auto& [name, expr] : cfg.unresolved_opt_ins) {
    s += "instance.optIn(" + id + ", " + js::json_quote(name) + ", " + expr + ", true);\n";
  }
  Json keys = Json::array();
  for (const auto& k : cfg.selected_match_keys) keys.push_back(k);
  if (auto it = cfg.aux_sets.find("automaticMatching.unknownKeys");
      it != cfg.aux_sets.end() && it->second.is_array()) {
    for (const auto& k : it->second) keys.push_back(k);
  }
  if (!keys.empty()) {
    s += "config.set(" + id + ", \"automaticMatching\", " +
         Json{{"selectedMatchKeys", keys}}.dump() + ");\n";
  }
  const auto& ud = cfg.unwanted_data;
  if (!ud.empty()) {
    auto group = [](const std::map<std::string, EventKeyRules>& a,
                    const std::map<std::string, EventKeyRules>* b) {
      Json g = Json::object();
      auto add = [&](const std::map<std::string, EventKeyRules>& m) {
        for (const auto& [event, rules] : m) {
          for (const auto& k : rules.cd) g[event]["cd"].push_back(k);
          for (const auto& k : rules.url) g[event]["url"].push_back(k);
        }
      };
      add(a);
      if (b) add(*b);
      return g;
    };
    Json payload = {{"blacklisted_keys", group(ud.blacklisted, nullptr)},
                    {"sensitive_keys", group(ud.sensitive, &ud.malformed_sensitive)}};
    s += "config.set(" + id + ", \"unwantedData\", " + payload.dump() + ");\n";
  }
  Json rules = Json::array();
  for (const auto& r : cfg.est_rules) {
    rules.push_back({{"condition", r.condition},
                     {"derived_event_name", r.derived_event_name},
                     {"rule_id", r.rule_id}});
  }
  if (auto it = cfg.aux_sets.find("estRules.invalid");
      it != cfg.aux_sets.end() && it->second.is_array()) {
    for (const auto& r : it->second) rules.push_back(r);
  }
  if (!rules.empty()) s += "fbq.set(\"estRules\", " + id + ", " + rules.dump() + ");\n";
  for (const auto& [name, value] : cfg.aux_sets) {
    if (name == "automaticMatching.unknownKeys" || name == "estRules.invalid") continue;
    // Raw (undecodable) payloads were captured as strings; emit them back
    // verbatim only when they still fail to decode, otherwise as JSON.
    std::string payload = value.dump();
    if (value.is_string() && !detail::decode_json(value.get<std::string>())) {
      payload = value.get<std::string>();
    }
    s += "config.set(" + id + ", " + js::json_quote(name) + ", " + payload + ");\n";
  }
  s += "instance.configLoaded(" + id + ");\n}});\n";
  return s;
}

// Feature names produced by config_feature_vector.
namespace feature {
inline constexpr std::string_view kAutomaticEvents = "AutomaticEvents";
inline constexpr std::string_view kAutomaticSetup = "AutomaticSetup";
inline constexpr std::string_view kInferredEvents = "InferredEvents";
inline constexpr std::string_view kMicrodataCapable = "MicrodataCapable";
inline constexpr std::string_view kSubscribedButtonClickCapable = "SubscribedButtonClickCapable";
inline constexpr std::string_view kEventSetupTool = "EventSetupTool";
inline constexpr std::string_view kFirstPartyCookies = "FirstPartyCookies";
inline constexpr std::string_view kAutomaticMatching = "AutomaticMatching";
inline constexpr std::string_view kFbpAsExternalId = "FbpAsExternalId";
inline constexpr std::string_view kUnwantedData = "UnwantedData";
inline constexpr std::string_view kHasBlacklisted = "UnwantedData.has_blacklisted";
inline constexpr std::string_view kHasSensitive = "UnwantedData.has_sensitive";
inline constexpr std::string_view kCoreSetup = "CoreSetup";

inline std::string match_key(std::string_view code) { return "AAM." + std::string(code); }
}  // namespace feature

using FeatureVector = std::map<std::string, bool>;

inline std::vector<std::string> feature_names() {
  std::vector<std::string> names = {
      std::string(feature::kAutomaticEvents),  std::string(feature::kAutomaticSetup),
      std::string(feature::kInferredEvents),   std::string(feature::kMicrodataCapable),
      std::string(feature::kSubscribedButtonClickCapable),
      std::string(feature::kEventSetupTool),   std::string(feature::kFirstPartyCookies),
      std::string(feature::kAutomaticMatching), std::string(feature::kFbpAsExternalId),
      std::string(feature::kUnwantedData),     std::string(feature::kHasBlacklisted),
      std::string(feature::kHasSensitive),     std::string(feature::kCoreSetup)};
  for (auto code : kMatchKeyCodes) names.push_back(feature::match_key(code));
  std::sort(names.begin(), names.end());
  return names;
}

// Projects a configuration onto the tracking-feature taxonomy. Every name
// from feature_names() is present in the result.
inline FeatureVector config_feature_vector(const PixelConfiguration& cfg) {
  FeatureVector fv;
  for (const auto& n : feature_names()) fv[n] = false;
  const bool setup = cfg.opted_in(optin::kAutomaticSetup);
  const bool inferred = cfg.opted_in(optin::kInferredEvents);
  fv[std::string(feature::kAutomaticSetup)] = setup;
  fv[std::string(feature::kInferredEvents)] = inferred;
  fv[std::string(feature::kAutomaticEvents)] = setup || inferred;
  fv[std::string(feature::kMicrodataCapable)] = setup;
  fv[std::string(feature::kSubscribedButtonClickCapable)] = setup || inferred;
  fv[std::string(feature::kEventSetupTool)] = !cfg.est_rules.empty();
  const bool cookies = cfg.opted_in(optin::kFirstPartyCookies);
  fv[std::string(feature::kFirstPartyCookies)] = cookies;
  const bool aam = cfg.opted_in(optin::kAutomaticMatching);
  fv[std::string(feature::kAutomaticMatching)] = aam;
  bool external_id = false;
  for (const auto& k : cfg.selected_match_keys) {
    if (aam) fv[feature::match_key(k)] = true;
    if (k == "external_id") external_id = aam;
  }
  fv[std::string(feature::kFbpAsExternalId)] = cookies && !external_id;
  fv[std::string(feature::kUnwantedData)] = cfg.opted_in(optin::kUnwantedData);
  fv[std::string(feature::kHasBlacklisted)] = cfg.unwanted_data.has_blacklisted();
  fv[std::string(feature::kHasSensitive)] = cfg.unwanted_data.has_sensitive();
  fv[std::string(feature::kCoreSetup)] = cfg.opted_in(optin::kProtectedDataMode);
  return fv;
}

// OR-merge: a feature is active if any merged vector has it.
inline void merge_features(FeatureVector& into, const FeatureVector& from) {
  for (const auto& [k, v] : from) into[k] = into[k] || v;
}

// --- JSON serialization -----------------------------------------------------

inline void to_json(Json& j, const EventKeyRules& r) {
  j = Json{{"cd", r.cd}, {"url", r.url}};
}
inline void from_json(const Json& j, EventKeyRules& r) {
  r.cd = j.value("cd", std::set<std::string>{});
  r.url = j.value("url", std::set<std::string>{});
}

inline void to_json(Json& j, const UnwantedDataRules& r) {
  j = Json{{"blacklisted", r.blacklisted}, {"sensitive", r.sensitive}};
  if (!r.malformed_sensitive.empty()) j["malformed_sensitive"] = r.malformed_sensitive;
}
inline void from_json(const Json& j, UnwantedDataRules& r) {
  r.blacklisted = j.value("blacklisted", std::map<std::string, EventKeyRules>{});
  r.sensitive = j.value("sensitive", std::map<std::string, EventKeyRules>{});
  r.malformed_sensitive = j.value("malformed_sensitive", std::map<std::string, EventKeyRules>{});
}

inline void to_json(Json& j, const EstRule& r) {
  j = Json{{"condition", r.condition},
           {"trigger_values", r.trigger_values},
           {"derived_event_name", r.derived_event_name},
           {"rule_id", r.rule_id}};
  if (!r.unsupported_operators.empty()) j["unsupported_operators"] = r.unsupported_operators;
}
inline void from_json(const Json& j, EstRule& r) {
  r.condition = j.value("condition", Json());
  r.trigger_values = j.value("trigger_values", std::vector<std::string>{});
  r.derived_event_name = j.at("derived_event_name").get<std::string>();
  r.rule_id = j.at("rule_id").get<std::string>();
  r.unsupported_operators = j.value("unsupported_operators", std::vector<std::string>{});
}

inline void to_json(Json& j, const PixelConfiguration& c) {
  j = Json{{"pixel_id", c.pixel_id.str()},
           {"opt_ins", c.opt_ins},
           {"selected_match_keys", c.selected_match_keys},
           {"unwanted_data", c.unwanted_data},
           {"est_rules", c.est_rules},
           {"aux_sets", c.aux_sets}};
  if (!c.unresolved_opt_ins.empty()) j["unresolved_opt_ins"] = c.unresolved_opt_ins;
}
inline void from_json(const Json& j, PixelConfiguration& c) {
  auto id = PixelId::parse(j.at("pixel_id").get<std::string>());
  if (!id) throw InvalidArgument("invalid pixel_id in configuration JSON");
  c.pixel_id = *id;
  c.opt_ins = j.value("opt_ins", std::map<std::string, bool>{});
  c.unresolved_opt_ins = j.value("unresolved_opt_ins", std::map<std::string, std::string>{});
  c.selected_match_keys = j.value("selected_match_keys", std::vector<std::string>{});
  c.unwanted_data = j.value("unwanted_data", UnwantedDataRules{});
  c.est_rules = j.value("est_rules", std::vector<EstRule>{});
  c.aux_sets = j.value("aux_sets", std::map<std::string, Json>{});
}

inline void to_json(Json& j, const Diagnostic& d) {
  static constexpr const char* kLevels[] = {"info", "warning", "error"};
  j = Json{{"level", kLevels[static_cast<int>(d.level)]},
           {"code", d.code},
           {"message", d.message},
           {"offset", d.offset}};
}

}  // namespace pixelarch
