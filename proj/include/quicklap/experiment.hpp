#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "quicklap/fusion.hpp"
#include "quicklap/language.hpp"
#include "quicklap/planner.hpp"
#include "quicklap/world.hpp"

namespace quicklap {

enum class Algorithm { phri, masked, quicklap, language_only };

std::string_view algorithm_name(Algorithm a);
/// Throws std::invalid_argument for unknown names.
Algorithm algorithm_from_name(std::string_view name);
/// Whether the algorithm consults the language backend.
bool uses_language(Algorithm a);

/// Half-open timestep range [start, end).
using Window = std::pair<int, int>;

std::vector<Window> default_windows();

/// The six evaluation utterances, from most ambiguous to most specific.
std::vector<std::string> default_utterances();

struct EpisodeConfig {
    World world;
    Algorithm algorithm = Algorithm::quicklap;
    std::string utterance;
    BackendConfig backend;
    PlannerConfig planner;
    int episode_length = 220;
    std::vector<Window> windows = default_windows();
    std::uint64_t seed = 0;
    Hyperparameters hp;
    /// Initial estimate; empty means every weight starts at initial_weight.
    std::vector<double> initial_theta;
    double initial_weight = 0.05;
};

/// Throws std::invalid_argument on overlapping, unordered or out-of-range windows and
/// other unusable settings.
void validate(const EpisodeConfig& cfg);

struct EpisodeResult {
    std::string scenario;
    Algorithm algorithm = Algorithm::quicklap;
    std::string utterance;
    int horizon = 0;
    std::uint64_t seed = 0;

    std::vector<double> initial_theta;
    double initial_nmse = 0.0;
    std::vector<std::vector<double>> theta_trace;    // estimate after each update
    std::vector<double> nmse_trace;                  // NMSE after each update
    std::vector<std::vector<double>> feature_deltas; // dphi of each intervention
    std::vector<LanguageSignal> language_signals;    // empty for phri
    double final_nmse = 0.0;
    std::vector<State> states;                       // executed path, episode_length + 1 states
    std::optional<std::string> error;                // set when the episode aborted

    bool ok() const { return !error.has_value(); }
};

/// (1/d) * || theta_hat/|theta_hat| - theta_star/|theta_star| ||^2.
/// Throws std::invalid_argument on zero vectors or length mismatch.
double nmse(std::span<const double> theta_hat, std::span<const double> theta_star);

/// Deterministic per-step planner seed.
std::uint64_t step_seed(std::uint64_t episode_seed, int step);

/// Runs one episode. When `backend` is null a backend is built from cfg.backend.
/// Language responses are appended to `cache` when given. Backend failures do not throw:
/// the result carries the partial trace and `error`.
EpisodeResult run_episode(const EpisodeConfig& cfg, LanguageBackend* backend = nullptr,
                          ResponseCache* cache = nullptr);

struct Grid {
    std::vector<World> scenarios;
    std::vector<Algorithm> algorithms;
    std::vector<std::string> utterances;
    std::vector<int> horizons;
    std::vector<std::uint64_t> seeds;

    std::size_t size() const {
        return scenarios.size() * algorithms.size() * utterances.size() * horizons.size() * seeds.size();
    }
};

struct SummaryRow {
    std::string scenario;
    Algorithm algorithm = Algorithm::quicklap;
    double mean_nmse = 0.0;
    double sem = 0.0;
    std::size_t n = 0;
    std::size_t failures = 0;
};

struct ConvergencePoint {
    std::size_t intervention_index = 0;  // 0 is the initial estimate
    Algorithm algorithm = Algorithm::quicklap;
    double mean_nmse = 0.0;
    double sem = 0.0;
};

struct SweepResult {
    std::vector<EpisodeResult> episodes;  // grid order: scenario, algorithm, utterance, horizon, seed
    std::vector<SummaryRow> summary;      // scenario-major, algorithms in grid order
    std::vector<ConvergencePoint> convergence;
};

/// Mean and standard error (sample standard deviation / sqrt(n); 0 when n < 2).
std::pair<double, double> mean_sem(std::span<const double> values);

std::vector<SummaryRow> summarize(const std::vector<EpisodeResult>& episodes, const Grid& grid);
/// Per algorithm and intervention index: mean across scenarios of the per-scenario mean
/// NMSE, with the standard error taken across scenarios.
std::vector<ConvergencePoint> convergence(const std::vector<EpisodeResult>& episodes, const Grid& grid);

/// Runs every grid cell with `base` as template (world, algorithm, utterance, horizon and
/// seed are filled in per cell) on up to `workers` threads. The result does not depend on
/// the worker count.
SweepResult run_sweep(const Grid& grid, const EpisodeConfig& base, int workers = 1,
                      ResponseCache* cache = nullptr);

/// Writes summary.csv, convergence.csv and episodes.jsonl into `dir` (created if needed).
void export_results(const SweepResult& result, const std::filesystem::path& dir);

}  // namespace quicklap
