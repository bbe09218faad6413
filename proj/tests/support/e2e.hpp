#pragma once

// Hermetic end-to-end harness: serves tests/fixtures/e2e/manifest.json from
// an in-process mock archive and compares pipeline output with the frozen
// oracle table (expected_adoption.csv).

#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "pixelarch/mock_archive.hpp"
#include "pixelarch/pipeline.hpp"
#include "test_util.hpp"

namespace pixelarch::testing {

struct E2eHarness {
  std::unique_ptr<MockArchive> mock;
  PipelineConfig config;

  explicit E2eHarness(const std::filesystem::path& store_root) {
    mock = MockArchive::from_manifest(fixture_path("e2e/manifest.json"));
    mock->start();
    config = load_pipeline_config(fixture_path("e2e/pipeline.conf"));
    config.endpoints = mock->endpoints();
    config.store_root = store_root;
  }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  for (std::string cell; std::getline(ss, cell, ',');) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

// Rows keyed by "cohort,year,feature".
inline std::map<std::string, std::vector<std::string>> load_expected_adoption() {
  std::map<std::string, std::vector<std::string>> out;
  std::istringstream in(read_fixture("e2e/expected_adoption.csv"));
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    out[cells[0] + "," + cells[1] + "," + cells[2]] = std::move(cells);
  }
  return out;
}

// Differences between the pipeline's adoption.jsonl and the oracle table.
// Counts must match exactly; real-valued columns to `rel_tol`.
inline std::vector<std::string> compare_adoption(const std::filesystem::path& jsonl, double rel_tol = 1e-9) {
  std::vector<std::string> diffs;
  auto expected = load_expected_adoption();
  std::ifstream in(jsonl);
  if (!in) return {"cannot read " + jsonl.string()};
  std::size_t matched = 0;
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    const std::string key = j["cohort"].get<std::string>() + "," + std::to_string(j["year"].get<int>()) + "," +
                            j["feature"].get<std::string>();
    auto it = expected.find(key);
    if (it == expected.end()) continue;  // features outside the oracle's set
    ++matched;
    const auto& e = it->second;
    for (auto [col, name] : {std::pair{3, "n"}, {4, "n_with_pixel"}, {5, "adopters"}}) {
      if (std::to_string(j[name].get<std::size_t>()) != e[col])
        diffs.push_back(key + " " + name + ": got " + j[name].dump() + ", want " + e[col]);
    }
    for (auto [col, name] : {std::pair{6, "p"}, {7, "margin"}, {8, "z"}, {9, "p_value"}, {10, "cohens_h"}}) {
      const auto& got = j[name];
      const std::string& want = e[col];
      if (want.empty() || got.is_null()) {
        if (want.empty() != got.is_null())
          diffs.push_back(key + " " + name + ": got " + got.dump() + ", want '" + want + "'");
        continue;
      }
      const double g = got.get<double>(), w = std::stod(want);
      if (std::abs(g - w) > rel_tol * std::abs(w) + 1e-15)
        diffs.push_back(key + " " + name + ": got " + got.dump() + ", want " + want);
    }
    expected.erase(it);
  }
  for (const auto& [key, row] : expected) diffs.push_back(key + ": missing from pipeline output");
  if (matched == 0) diffs.push_back("no comparable rows");
  return diffs;
}

}  // namespace pixelarch::testing
