#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "quicklap/experiment.hpp"

namespace quicklap {

namespace {

std::string fixed(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.8f", v == 0.0 ? 0.0 : v);
    return buf;
}

std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
    out.flush();
    if (!out) throw std::runtime_error("error while writing '" + path.string() + "'");
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
        if (c == '"') q += '"';
        q += c;
    }
    return q + '"';
}

nlohmann::json episode_json(const EpisodeResult& e) {
    nlohmann::json signals = nlohmann::json::array();
    for (const LanguageSignal& s : e.language_signals) {
        signals.push_back({{"gate", s.gate}, {"mu", s.mu}, {"confidence", s.confidence}});
    }
    nlohmann::json j = {
        {"scenario", e.scenario},
        {"algorithm", std::string(algorithm_name(e.algorithm))},
        {"utterance", e.utterance},
        {"horizon", e.horizon},
        {"seed", e.seed},
        {"initial_theta", e.initial_theta},
        {"initial_nmse", e.initial_nmse},
        {"theta_trace", e.theta_trace},
        {"nmse_trace", e.nmse_trace},
        {"feature_deltas", e.feature_deltas},
        {"language_signals", signals},
        {"final_nmse", e.final_nmse},
    };
    j["error"] = e.error ? nlohmann::json(*e.error) : nlohmann::json(nullptr);
    return j;
}

}  // namespace

void export_results(const SweepResult& result, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);

    const auto summary_path = dir / "summary.csv";
    auto summary = open_output(summary_path);
    summary << "scenario,algorithm,mean_nmse,sem,n\n";
    for (const SummaryRow& r : result.summary) {
        summary << csv_field(r.scenario) << ',' << algorithm_name(r.algorithm) << ',' << fixed(r.mean_nmse)
                << ',' << fixed(r.sem) << ',' << r.n << '\n';
    }
    finish(summary, summary_path);

    const auto conv_path = dir / "convergence.csv";
    auto conv = open_output(conv_path);
    conv << "intervention_index,algorithm,mean_nmse,sem\n";
    for (const ConvergencePoint& p : result.convergence) {
        conv << p.intervention_index << ',' << algorithm_name(p.algorithm) << ',' << fixed(p.mean_nmse) << ','
             << fixed(p.sem) << '\n';
    }
    finish(conv, conv_path);

    const auto episodes_path = dir / "episodes.jsonl";
    auto episodes = open_output(episodes_path);
    for (const EpisodeResult& e : result.episodes) {
        episodes << episode_json(e).dump() << '\n';
    }
    finish(episodes, episodes_path);
}

}  // namespace quicklap
