#pragma once

#include <set>
#include <string>
#include <string_view>
#include <utility>

#include "json.hpp"

#include "pixelarch/error.hpp"
#include "pixelarch/pixel_id.hpp"

namespace pixelarch {

enum class Cohort { control, health };

inline const char* to_string(Cohort c) { return c == Cohort::health ? "health" : "control"; }

inline Cohort parse_cohort(std::string_view s) {
  if (s == "health") return Cohort::health;
  if (s == "control") return Cohort::control;
  throw InvalidArgument("unknown cohort '" + std::string(s) + "'");
}

// (Pixel ID, content hash of the configuration script)
using ConfigRef = std::pair<PixelId, std::string>;

// Per (site, year): Pixel IDs seen in archived HTML and the configuration
// captures attributed to the site for that year. Every config_refs Pixel ID
// is also in pixel_ids.
struct SiteYearObservation {
  std::string domain;
  Cohort cohort = Cohort::control;
  int year = 0;
  std::set<PixelId> pixel_ids;
  std::set<ConfigRef> config_refs;

  bool operator==(const SiteYearObservation&) const = default;
};

inline void to_json(nlohmann::json& j, const SiteYearObservation& o) {
  j = nlohmann::json{{"domain", o.domain}, {"cohort", to_string(o.cohort)}, {"year", o.year}};
  j["pixel_ids"] = nlohmann::json::array();
  for (const auto& id : o.pixel_ids) j["pixel_ids"].push_back(id.str());
  j["config_refs"] = nlohmann::json::array();
  for (const auto& [id, hash] : o.config_refs)
    j["config_refs"].push_back({{"pixel_id", id.str()}, {"content_hash", hash}});
}

inline void from_json(const nlohmann::json& j, SiteYearObservation& o) {
  o.domain = j.at("domain").get<std::string>();
  o.cohort = parse_cohort(j.at("cohort").get<std::string>());
  o.year = j.at("year").get<int>();
  o.pixel_ids.clear();
  o.config_refs.clear();
  for (const auto& s : j.at("pixel_ids")) {
    auto id = PixelId::parse(s.get<std::string>());
    if (!id) throw InvalidArgument("invalid pixel id " + s.dump());
    o.pixel_ids.insert(*id);
  }
  for (const auto& r : j.at("config_refs")) {
    auto id = PixelId::parse(r.at("pixel_id").get<std::string>());
    if (!id) throw InvalidArgument("invalid pixel id " + r.dump());
    o.config_refs.emplace(*id, r.at("content_hash").get<std::string>());
  }
}

}  // namespace pixelarch
