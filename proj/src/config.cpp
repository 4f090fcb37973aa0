#include "quicklap/config.hpp"

#include <cstdlib>
#include <fstream>
#include <memory>
#include <ostream>
#include <set>
#include <sstream>

namespace quicklap {

namespace {

using nlohmann::json;

constexpr const char* kManifestFormat = "quicklap-manifest";

std::string join_path(const std::string& prefix, const std::string& key) {
    return prefix.empty() ? key : prefix + "." + key;
}

void merge_into(json& target, const json& source, const std::string& prefix, std::vector<std::string>& errors) {
    for (const auto& [key, value] : source.items()) {
        const std::string path = join_path(prefix, key);
        if (!target.contains(key)) {
            errors.push_back(path + ": unknown key");
            continue;
        }
        json& slot = target[key];
        if (slot.is_object()) {
            if (!value.is_object()) {
                errors.push_back(path + ": expected a table of settings");
                continue;
            }
            merge_into(slot, value, path, errors);
        } else {
            slot = value;
        }
    }
}

std::string type_label(const json& j) {
    if (j.is_number()) return "number";
    if (j.is_boolean()) return "boolean";
    if (j.is_string()) return "string";
    if (j.is_array()) return "list";
    return "table";
}

template <class T>
T read(const json& doc, const std::string& path, std::vector<std::string>& errors, T fallback = {}) {
    const json* node = &doc;
    std::stringstream ss(path);
    std::string part;
    while (std::getline(ss, part, '.')) node = &node->at(part);
    try {
        return node->get<T>();
    } catch (const json::exception&) {
        errors.push_back(path + ": unexpected " + type_label(*node));
        return fallback;
    }
}

std::string absolute_from(const std::string& path, const std::filesystem::path& base_dir) {
    std::filesystem::path p(path);
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    return std::filesystem::absolute(p).lexically_normal().string();
}

World resolve_scenario(json& spec, const std::filesystem::path& base_dir) {
    const std::string name = spec.get<std::string>();
    if (scenario_from_name(name)) return build_scenario(name);
    const std::string path = absolute_from(name, base_dir);
    if (!std::filesystem::exists(path)) {
        throw std::invalid_argument("'" + name + "' is neither a built-in scenario nor a scene file");
    }
    spec = path;
    return load_world(path);
}

Hyperparameters read_hyperparameters(const json& doc, std::vector<std::string>& errors) {
    Hyperparameters hp;
    hp.alpha = read<double>(doc, "hyperparameters.Base learning rate", errors, hp.alpha);
    hp.k = read<double>(doc, "hyperparameters.Language confidence scale", errors, hp.k);
    hp.eps = read<double>(doc, "hyperparameters.Numerical stability", errors, hp.eps);
    hp.eps_prior = read<double>(doc, "hyperparameters.Prior stability", errors, hp.eps_prior);
    hp.eps_var = read<double>(doc, "hyperparameters.Variance stability", errors, hp.eps_var);
    hp.cap_factor = read<double>(doc, "hyperparameters.Capping factor", errors, hp.cap_factor);
    hp.beta_power = read<double>(doc, "hyperparameters.Beta power", errors, hp.beta_power);
    hp.lambda_effort = read<double>(doc, "hyperparameters.Effort coefficient", errors, hp.lambda_effort);
    return hp;
}

}  // namespace

json default_config() {
    const Hyperparameters hp;
    const BackendConfig bc;
    const PlannerConfig pc;
    json windows = json::array();
    for (const auto& [a, b] : default_windows()) windows.push_back({a, b});
    return {
        {"scenarios", {"C"}},
        {"algorithms", {"phri", "masked", "quicklap"}},
        {"utterances", default_utterances()},
        {"horizons", {pc.horizon}},
        {"seeds", {0}},
        {"workers", 1},
        {"episode", {{"length", 220}, {"windows", windows}, {"initial_weight", 0.05}}},
        {"planner",
         {{"population", pc.population},
          {"elites", pc.elites},
          {"iterations", pc.iterations},
          {"refine_passes", pc.refine_passes},
          {"dt", pc.dt}}},
        {"backend",
         {{"kind", std::string(backend_kind_name(bc.kind))},
          {"model_name", bc.model_name},
          {"temperature_att", bc.temperature_att},
          {"temperature_pref", bc.temperature_pref},
          {"base_url", bc.base_url},
          {"timeout", bc.timeout},
          {"max_retries", bc.max_retries},
          {"cache_path", bc.cache_path},
          {"rules_path", bc.rules_path},
          {"oracle_gate_threshold", bc.oracle_gate_threshold},
          {"oracle_confidence", bc.oracle_confidence}}},
        {"hyperparameters",
         {{"Base learning rate", hp.alpha},
          {"Language confidence scale", hp.k},
          {"Numerical stability", hp.eps},
          {"Prior stability", hp.eps_prior},
          {"Variance stability", hp.eps_var},
          {"Capping factor", hp.cap_factor},
          {"Beta power", hp.beta_power},
          {"Effort coefficient", hp.lambda_effort}}},
    };
}

void apply_override(json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError("override '" + assignment + "' is not of the form key=value");
    }
    const std::string path = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json* node = &doc;
    std::stringstream ss(path);
    std::string part;
    while (std::getline(ss, part, '.')) {
        if (!node->is_object() || !node->contains(part)) {
            throw ConfigError("override '" + path + "': unknown key");
        }
        node = &(*node)[part];
    }
    if (node->is_object()) throw ConfigError("override '" + path + "' names a table, not a setting");
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    *node = std::move(value);
}

std::vector<std::string> env_overrides(const char* value) {
    std::vector<std::string> out;
    if (value == nullptr) return out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ';')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

RunConfig resolve_config(const json& input, const std::vector<std::string>& overrides,
                         const std::filesystem::path& base_dir) {
    const json* doc_in = &input;
    if (input.is_object() && input.value("format", "") == kManifestFormat) {
        if (!input.contains("config")) throw ConfigError("manifest lacks its 'config' table");
        doc_in = &input.at("config");
    }
    if (!doc_in->is_object()) throw ConfigError("configuration must be a JSON object");

    std::vector<std::string> errors;
    json doc = default_config();
    merge_into(doc, *doc_in, "", errors);
    for (const std::string& o : overrides) {
        try {
            apply_override(doc, o);
        } catch (const ConfigError& e) {
            errors.push_back(e.what());
        }
    }
    if (!errors.empty()) {
        std::string report;
        for (const auto& e : errors) report += e + "\n";
        throw ConfigError(report);
    }

    RunConfig rc;
    rc.resolved = doc;
    EpisodeConfig& base = rc.base;

    auto check = [&](auto&& fn) {
        try {
            fn();
        } catch (const std::exception& e) {
            errors.push_back(e.what());
        }
    };

    // Scene files are stored with absolute paths so a manifest loads from anywhere.
    if (read<std::vector<std::string>>(doc, "scenarios", errors).size() == doc["scenarios"].size()) {
        for (json& s : rc.resolved["scenarios"]) {
            check([&] { rc.grid.scenarios.push_back(resolve_scenario(s, base_dir)); });
        }
    }
    std::set<std::string> ids;
    for (const World& w : rc.grid.scenarios) {
        if (!ids.insert(w.id).second) errors.push_back("scenarios: duplicate scenario id '" + w.id + "'");
    }
    for (const auto& a : read<std::vector<std::string>>(doc, "algorithms", errors)) {
        check([&] { rc.grid.algorithms.push_back(algorithm_from_name(a)); });
    }
    rc.grid.utterances = read<std::vector<std::string>>(doc, "utterances", errors);
    rc.grid.horizons = read<std::vector<int>>(doc, "horizons", errors);
    rc.grid.seeds = read<std::vector<std::uint64_t>>(doc, "seeds", errors);
    rc.workers = read<int>(doc, "workers", errors, 1);

    for (const char* list : {"scenarios", "algorithms", "utterances", "horizons", "seeds"}) {
        if (doc[list].is_array() && doc[list].empty()) errors.push_back(std::string(list) + ": must not be empty");
    }
    if (rc.workers < 1) errors.push_back("workers: must be >= 1");

    base.episode_length = read<int>(doc, "episode.length", errors, 220);
    base.windows.clear();
    for (const auto& w : read<std::vector<std::vector<int>>>(doc, "episode.windows", errors)) {
        if (w.size() != 2) {
            errors.push_back("episode.windows: each window is [start, end]");
        } else {
            base.windows.emplace_back(w[0], w[1]);
        }
    }
    base.initial_weight = read<double>(doc, "episode.initial_weight", errors, 0.05);

    base.planner.population = read<int>(doc, "planner.population", errors, 64);
    base.planner.elites = read<int>(doc, "planner.elites", errors, 8);
    base.planner.iterations = read<int>(doc, "planner.iterations", errors, 10);
    base.planner.refine_passes = read<int>(doc, "planner.refine_passes", errors, 2);
    base.planner.dt = read<double>(doc, "planner.dt", errors, kDefaultDt);

    BackendConfig& bc = base.backend;
    check([&] { bc.kind = backend_kind_from_name(read<std::string>(doc, "backend.kind", errors, "mock")); });
    bc.model_name = read<std::string>(doc, "backend.model_name", errors);
    bc.temperature_att = read<double>(doc, "backend.temperature_att", errors);
    bc.temperature_pref = read<double>(doc, "backend.temperature_pref", errors);
    bc.base_url = read<std::string>(doc, "backend.base_url", errors);
    bc.timeout = read<double>(doc, "backend.timeout", errors, 30.0);
    bc.max_retries = read<int>(doc, "backend.max_retries", errors);
    bc.cache_path = read<std::string>(doc, "backend.cache_path", errors);
    bc.rules_path = read<std::string>(doc, "backend.rules_path", errors);
    bc.oracle_gate_threshold = read<double>(doc, "backend.oracle_gate_threshold", errors);
    bc.oracle_confidence = read<double>(doc, "backend.oracle_confidence", errors);
    if (!bc.rules_path.empty()) {
        bc.rules_path = absolute_from(bc.rules_path, base_dir);
        rc.resolved["backend"]["rules_path"] = bc.rules_path;
    }
    if (!bc.cache_path.empty()) {
        bc.cache_path = absolute_from(bc.cache_path, base_dir);
        rc.resolved["backend"]["cache_path"] = bc.cache_path;
    }
    if (bc.max_retries < 0) errors.push_back("backend.max_retries: must be >= 0");
    if (!(bc.timeout > 0.0)) errors.push_back("backend.timeout: must be positive");
    if (bc.temperature_att < 0.0 || bc.temperature_pref < 0.0) errors.push_back("backend temperatures must be >= 0");
    if (bc.kind == BackendKind::replay && bc.cache_path.empty()) {
        errors.push_back("backend.cache_path: required for the replay backend");
    }

    base.hp = read_hyperparameters(doc, errors);

    if (errors.empty()) {
        for (const World& w : rc.grid.scenarios) {
            for (int h : rc.grid.horizons) {
                EpisodeConfig probe = base;
                probe.world = w;
                probe.planner.horizon = h;
                probe.utterance = rc.grid.utterances.front();
                check([&] { validate(probe); });
            }
        }
    }
    if (!errors.empty()) {
        std::set<std::string> seen;
        std::string report;
        for (const auto& e : errors) {
            if (seen.insert(e).second) report += e + "\n";
        }
        throw ConfigError(report);
    }
    return rc;
}

RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config file '" + path.string() + "' is not valid JSON: " + e.what());
    }
    std::vector<std::string> all = env_overrides(std::getenv("QUICKLAP_SET"));
    all.insert(all.end(), overrides.begin(), overrides.end());
    return resolve_config(doc, all, path.parent_path());
}

SweepResult execute_run(const RunConfig& cfg, const std::filesystem::path& out_dir, std::ostream* log) {
    std::filesystem::create_directories(out_dir);
    EpisodeConfig base = cfg.base;
    json resolved = cfg.resolved;

    std::unique_ptr<ResponseCache> cache;
    if (base.backend.kind != BackendKind::replay) {
        if (base.backend.cache_path.empty()) base.backend.cache_path = (out_dir / "cache.jsonl").string();
        base.backend.cache_path = std::filesystem::absolute(base.backend.cache_path).string();
        cache = std::make_unique<ResponseCache>(base.backend.cache_path);
        resolved["backend"]["cache_path"] = base.backend.cache_path;
    }

    if (log) {
        *log << "running " << cfg.grid.size() << " episode(s) with " << cfg.workers << " worker(s), backend "
             << backend_kind_name(base.backend.kind) << "\n";
    }
    SweepResult result = run_sweep(cfg.grid, base, cfg.workers, cache.get());
    export_results(result, out_dir);

    std::size_t failures = 0;
    json failed = json::array();
    for (const EpisodeResult& e : result.episodes) {
        if (e.ok()) continue;
        ++failures;
        failed.push_back({{"scenario", e.scenario},
                          {"algorithm", std::string(algorithm_name(e.algorithm))},
                          {"utterance", e.utterance},
                          {"horizon", e.horizon},
                          {"seed", e.seed},
                          {"error", *e.error}});
        if (log) {
            *log << "episode failed (" << e.scenario << ", " << algorithm_name(e.algorithm) << ", \"" << e.utterance
                 << "\"): " << *e.error << "\n";
        }
    }
    const json manifest = {{"format", kManifestFormat},
                           {"version", 1},
                           {"config", resolved},
                           {"episodes", result.episodes.size()},
                           {"failures", failed}};
    std::ofstream out(out_dir / "manifest.json", std::ios::trunc);
    out << manifest.dump(2) << '\n';
    if (!out) throw std::runtime_error("cannot write manifest in '" + out_dir.string() + "'");
    if (log) *log << "wrote results to " << out_dir.string() << " (" << failures << " failed episode(s))\n";
    return result;
}

}  // namespace quicklap
