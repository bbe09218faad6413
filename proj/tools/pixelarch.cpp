// pixelarch: command-line front end for the measurement pipeline and the
// standalone analysis tools.
//
// Exit codes: 0 success, 1 toolchain error (JSON {code, message} on stderr),
// 2 usage error.

#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "pixelarch/behavior_model.hpp"
#include "pixelarch/config_parser.hpp"
#include "pixelarch/key_cracker.hpp"
#include "pixelarch/mock_archive.hpp"
#include "pixelarch/pipeline.hpp"
#include "pixelarch/pixel_extractor.hpp"

using namespace pixelarch;
using nlohmann::json;

namespace {

std::string read_all(const std::string& path) {
  if (path == "-") return {std::istreambuf_iterator<char>(std::cin), {}};
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StorageIo("cannot read " + path);
  return {std::istreambuf_iterator<char>(in), {}};
}

json read_json(const std::string& path) {
  auto doc = json::parse(read_all(path), nullptr, false);
  if (doc.is_discarded()) throw InvalidArgument(path + " is not valid JSON");
  return doc;
}

// A JSON argument given inline (starts with '{') or as a file path.
json json_arg(const std::string& arg) {
  if (!arg.empty() && arg.front() == '{') {
    auto doc = json::parse(arg, nullptr, false);
    if (doc.is_discarded()) throw InvalidArgument("inline JSON is not valid");
    return doc;
  }
  return read_json(arg);
}

// A configuration from a script (parsed) or a JSON dump of one.
PixelConfiguration load_configuration(const std::string& path) {
  const std::string text = read_all(path);
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    auto doc = json::parse(text, nullptr, false);
    if (!doc.is_discarded()) return doc.contains("config") ? doc["config"].get<PixelConfiguration>()
                                                           : doc.get<PixelConfiguration>();
  }
  return parse_config_script(text).config;
}

void print_error(const std::string& code, const std::string& message, json extra = json::object()) {
  extra["code"] = code;
  extra["message"] = message;
  std::cerr << extra.dump() << std::endl;
}

struct PipelineFlags {
  std::string config_file;
  std::string store, health_sites, control_sites, cdx_url, replay_template;
  std::vector<std::string> wordlists;
  std::optional<int> first_year, last_year, min_interval_ms;
  std::optional<unsigned> jobs;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_file, "Pipeline config (JSON or key = value lines)");
    cmd->add_option("--store", store, "Storage root directory");
    cmd->add_option("--health-sites", health_sites, "Health cohort site list");
    cmd->add_option("--control-sites", control_sites, "Control cohort site list");
    cmd->add_option("--first-year", first_year, "First study year");
    cmd->add_option("--last-year", last_year, "Last study year");
    cmd->add_option("--cdx-url", cdx_url, "CDX endpoint")->envname("PIXELARCH_CDX_URL");
    cmd->add_option("--replay-template", replay_template, "Replay URL template with {timestamp} and {url}")
        ->envname("PIXELARCH_REPLAY_TEMPLATE");
    cmd->add_option("--wordlist", wordlists, "Wordlist for crack_keys (repeatable)");
    cmd->add_option("--min-interval-ms", min_interval_ms, "Minimum spacing of requests to one host");
    cmd->add_option("-j,--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
  }

  PipelineConfig build() const {
    PipelineConfig cfg;
    if (!config_file.empty()) cfg = load_pipeline_config(config_file);
    if (!store.empty()) cfg.store_root = store;
    if (!health_sites.empty()) cfg.site_lists[Cohort::health] = health_sites;
    if (!control_sites.empty()) cfg.site_lists[Cohort::control] = control_sites;
    if (first_year) cfg.first_year = *first_year;
    if (last_year) cfg.last_year = *last_year;
    if (!cdx_url.empty()) cfg.endpoints.cdx_url = cdx_url;
    if (!replay_template.empty()) cfg.endpoints.replay_template = replay_template;
    if (!wordlists.empty()) cfg.wordlists.assign(wordlists.begin(), wordlists.end());
    if (min_interval_ms) cfg.policy.min_request_interval = std::chrono::milliseconds(*min_interval_ms);
    if (jobs) cfg.jobs = *jobs;
    return cfg;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Historical Meta Pixel configuration measurement toolkit"};
  app.require_subcommand(1);

  PipelineFlags flags;
  std::vector<std::pair<CLI::App*, std::optional<Stage>>> stage_cmds;
  for (auto st : kAllStages) {
    std::string name = to_string(st);
    std::replace(name.begin(), name.end(), '_', '-');
    auto* cmd = app.add_subcommand(name, "Run the " + std::string(to_string(st)) + " stage");
    flags.attach(cmd);
    stage_cmds.emplace_back(cmd, st);
  }
  auto* run_all = app.add_subcommand("run-all", "Run every stage in order");
  flags.attach(run_all);
  stage_cmds.emplace_back(run_all, std::nullopt);

  std::string script_path, pixel_id;
  auto* dump = app.add_subcommand("dump-config", "Parse a configuration script and print it as JSON");
  dump->add_option("script", script_path, "Script file ('-' for stdin)")->required();
  dump->add_option("--pixel-id", pixel_id, "Expected Pixel ID");

  std::string html_path;
  auto* extract = app.add_subcommand("extract", "List Pixel IDs in an HTML document");
  extract->add_option("html", html_path, "HTML file ('-' for stdin)")->required();

  std::string cfg_path, after_path, context_arg, interaction_arg, patch_feature;
  bool case_insensitive = false;
  auto* sim = app.add_subcommand("simulate", "Simulate the requests a configuration produces");
  sim->add_option("--configuration", cfg_path, "Configuration script or JSON dump")->required();
  sim->add_option("--context", context_arg, "Page context JSON (file or inline)")->required();
  sim->add_option("--interaction", interaction_arg, "Interaction JSON (file or inline)")->required();
  sim->add_flag("--case-insensitive", case_insensitive, "Match parameter names case-insensitively");

  auto* diff = app.add_subcommand("diff", "Compare payloads of two configurations on one interaction");
  diff->add_option("--configuration", cfg_path, "Baseline configuration")->required();
  auto* after_opt = diff->add_option("--after", after_path, "Second configuration");
  diff->add_option("--patch-out", patch_feature, "Feature removed from the baseline instead of --after")
      ->excludes(after_opt);
  diff->add_option("--context", context_arg, "Page context JSON (file or inline)")->required();
  diff->add_option("--interaction", interaction_arg, "Interaction JSON (file or inline)")->required();

  std::vector<std::string> digests, crack_wordlists, observed;
  std::string digests_file;
  bool no_variants = false;
  unsigned crack_jobs = 1;
  auto* crk = app.add_subcommand("crack", "Reverse SHA-256 key digests with wordlists");
  crk->add_option("--digest", digests, "Digest to crack (repeatable)");
  crk->add_option("--digests-file", digests_file, "File with one digest per line");
  crk->add_option("--wordlist", crack_wordlists, "Wordlist (repeatable)");
  crk->add_option("--observed", observed, "Observed plaintext key (repeatable)");
  crk->add_flag("--no-variants", no_variants, "Disable naming-convention variants");
  crk->add_option("-j,--jobs", crack_jobs, "Worker threads")->check(CLI::PositiveNumber);

  std::string manifest;
  int port = 0;
  auto* mock = app.add_subcommand("mock-archive", "Serve a manifest as a local web archive");
  mock->add_option("--manifest", manifest, "Manifest JSON")->required();
  mock->add_option("--port", port, "Port (0 picks a free one)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("Usage", e.what());
    return 2;
  }

  try {
    for (auto& [cmd, stage] : stage_cmds) {
      if (!cmd->parsed()) continue;
      Pipeline pipeline(flags.build());
      const json out = stage ? pipeline.run_stage(*stage) : pipeline.run_all();
      std::cout << out.dump(2) << std::endl;
      return 0;
    }
    if (dump->parsed()) {
      std::optional<PixelId> expected;
      if (!pixel_id.empty()) {
        expected = PixelId::parse(pixel_id);
        if (!expected) throw InvalidArgument("invalid Pixel ID '" + pixel_id + "'");
      }
      const auto pc = parse_config_script(read_all(script_path), expected);
      json out = {{"config", pc.config},
                  {"features", config_feature_vector(pc.config)},
                  {"diagnostics", pc.diagnostics},
                  {"structured_calls", pc.structured_calls}};
      if (!pc.foreign.empty()) out["foreign"] = pc.foreign;
      std::cout << out.dump(2) << std::endl;
    } else if (extract->parsed()) {
      const auto res = extract_pixel_ids(read_all(html_path));
      json out = {{"pixel_ids", json::array()}, {"evidence", json::array()}};
      for (const auto& id : res.ids) out["pixel_ids"].push_back(id.str());
      for (const auto& e : res.evidence)
        out["evidence"].push_back({{"pixel_id", e.id.str()}, {"kind", to_string(e.kind)},
                                   {"offset", e.offset}, {"in_comment", e.in_comment}});
      std::cout << out.dump(2) << std::endl;
    } else if (sim->parsed()) {
      const auto cfg = load_configuration(cfg_path);
      const auto payloads = simulate(cfg, json_arg(context_arg).get<PageContext>(),
                                     json_arg(interaction_arg).get<Interaction>(),
                                     SimulationOptions{!case_insensitive});
      json out = {{"payloads", payloads}, {"circumvention", json::array()}};
      for (const auto& f : find_core_setup_circumvention(cfg.opted_in(optin::kProtectedDataMode), payloads))
        out["circumvention"].push_back({{"payload_index", f.payload_index}, {"event_name", f.event_name},
                                        {"param", f.param}, {"value", f.value}});
      std::cout << out.dump(2) << std::endl;
    } else if (diff->parsed()) {
      const auto before = load_configuration(cfg_path);
      PixelConfiguration after;
      if (!patch_feature.empty()) after = patch_out(before, patch_feature);
      else if (!after_path.empty()) after = load_configuration(after_path);
      else throw InvalidArgument("diff needs --after or --patch-out");
      const auto ctx = json_arg(context_arg).get<PageContext>();
      const auto inter = json_arg(interaction_arg).get<Interaction>();
      std::cout << json(diff_payloads(simulate(before, ctx, inter), simulate(after, ctx, inter))).dump(2)
                << std::endl;
    } else if (crk->parsed()) {
      std::set<std::string> todo(digests.begin(), digests.end());
      if (!digests_file.empty()) {
        std::istringstream lines(read_all(digests_file));
        for (std::string line; std::getline(lines, line);)
          if (auto d = detail::trim_copy(line); !d.empty()) todo.insert(d);
      }
      std::vector<std::filesystem::path> paths(crack_wordlists.begin(), crack_wordlists.end());
      const auto dict = build_dictionary(paths, std::set<std::string>(observed.begin(), observed.end()), !no_variants);
      const auto rep = crack(todo, dict, crack_jobs);
      for (const auto& r : rep.results) std::cout << json(r).dump() << '\n';
      std::cerr << json{{"total", rep.total()}, {"cracked", rep.cracked}, {"reversal_rate", rep.reversal_rate()}}.dump()
                << std::endl;
    } else if (mock->parsed()) {
      auto server = MockArchive::from_manifest(manifest);
      const int bound = server->start(port);
      std::cout << json{{"base_url", server->base_url()},
                        {"cdx_url", server->endpoints().cdx_url},
                        {"replay_template", server->endpoints().replay_template},
                        {"port", bound},
                        {"captures", server->capture_count()}}.dump()
                << std::endl;
      server->wait();  // until the process is terminated
    }
  } catch (const MissingPrerequisite& e) {
    print_error(e.code(), e.what(), {{"stage", e.stage()}});
    return 1;
  } catch (const Error& e) {
    print_error(e.code(), e.what());
    return 1;
  } catch (const nlohmann::json::exception& e) {
    print_error("InvalidArgument", e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error("Internal", e.what());
    return 1;
  }
  return 0;
}
