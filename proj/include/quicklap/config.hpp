#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "quicklap/experiment.hpp"

namespace quicklap {

/// Invalid run configuration; what() lists every problem found, one per line.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A validated run: the sweep grid, the per-episode template and the resolved document.
struct RunConfig {
    Grid grid;
    EpisodeConfig base;
    int workers = 1;
    nlohmann::json resolved;  // defaults merged with file and overrides
};

/// The full default configuration document. Every accepted key appears here.
nlohmann::json default_config();

/// Applies one "dotted.path=value" override. The value is read as JSON when it parses,
/// otherwise as a string. Throws ConfigError for unknown paths or malformed overrides.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Splits the QUICKLAP_SET value ("a.b=1;c.d=x") into assignments.
std::vector<std::string> env_overrides(const char* value);

/// Merges `doc` over the defaults (unknown keys rejected), applies overrides in order and
/// validates. Relative scene-file paths resolve against `base_dir`. A run manifest is
/// accepted in place of a configuration.
RunConfig resolve_config(const nlohmann::json& doc, const std::vector<std::string>& overrides,
                         const std::filesystem::path& base_dir = {});

/// Reads a JSON config (or manifest) file, then applies QUICKLAP_SET and `overrides`.
RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides);

/// Runs the sweep described by `cfg`, exports results into `out_dir` together with
/// manifest.json (the resolved configuration plus cache location, loadable as a config
/// for replay). Language exchanges are recorded to backend.cache_path, defaulting to
/// `out_dir`/cache.jsonl, except when replaying. Progress lines go to `log` if given.
SweepResult execute_run(const RunConfig& cfg, const std::filesystem::path& out_dir, std::ostream* log = nullptr);

}  // namespace quicklap
