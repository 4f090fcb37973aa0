#include "quicklap/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "quicklap/backends.hpp"

namespace quicklap {

std::string_view algorithm_name(Algorithm a) {
    switch (a) {
        case Algorithm::phri: return "phri";
        case Algorithm::masked: return "masked";
        case Algorithm::quicklap: return "quicklap";
        case Algorithm::language_only: return "language_only";
    }
    return "";
}

Algorithm algorithm_from_name(std::string_view name) {
    for (Algorithm a : {Algorithm::phri, Algorithm::masked, Algorithm::quicklap, Algorithm::language_only}) {
        if (algorithm_name(a) == name) return a;
    }
    throw std::invalid_argument("unknown algorithm '" + std::string(name) +
                                "' (expected phri, masked, quicklap or language_only)");
}

bool uses_language(Algorithm a) { return a != Algorithm::phri; }

std::vector<Window> default_windows() { return {{45, 55}, {85, 95}, {130, 140}, {170, 180}}; }

std::vector<std::string> default_utterances() {
    return {"Be careful.",
            "Watch out for that thing.",
            "Stay away from that thing.",
            "Avoid the obstacle.",
            "Stay away from construction zones.",
            "Steer clear of the cone."};
}

void validate(const EpisodeConfig& cfg) {
    validate_world(cfg.world);
    validate(cfg.planner);
    validate(cfg.hp);
    if (cfg.episode_length < 1) throw std::invalid_argument("episode length must be >= 1");
    int prev_end = 0;
    for (const auto& [start, end] : cfg.windows) {
        if (start < prev_end || end <= start || end > cfg.episode_length) {
            throw std::invalid_argument("intervention windows must be ordered, non-overlapping, non-empty "
                                        "and inside the episode");
        }
        prev_end = end;
    }
    if (uses_language(cfg.algorithm) && cfg.utterance.empty()) {
        throw std::invalid_argument("algorithm '" + std::string(algorithm_name(cfg.algorithm)) +
                                    "' needs an utterance");
    }
    if (!cfg.initial_theta.empty() && cfg.initial_theta.size() != cfg.world.dim()) {
        throw std::invalid_argument("initial_theta length does not match the scenario's features");
    }
}

double nmse(std::span<const double> theta_hat, std::span<const double> theta_star) {
    if (theta_hat.size() != theta_star.size() || theta_hat.empty()) {
        throw std::invalid_argument("nmse: vectors must be non-empty and of equal length");
    }
    const double a = std::sqrt(std::inner_product(theta_hat.begin(), theta_hat.end(), theta_hat.begin(), 0.0));
    const double b = std::sqrt(std::inner_product(theta_star.begin(), theta_star.end(), theta_star.begin(), 0.0));
    if (a == 0.0 || b == 0.0) throw std::invalid_argument("nmse: zero weight vector cannot be normalized");
    double total = 0.0;
    for (std::size_t i = 0; i < theta_hat.size(); ++i) {
        const double diff = theta_hat[i] / a - theta_star[i] / b;
        total += diff * diff;
    }
    return total / static_cast<double>(theta_hat.size());
}

std::uint64_t step_seed(std::uint64_t episode_seed, int step) {
    // splitmix64 finalizer over the pair
    std::uint64_t z = episode_seed * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(step) + 1;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

EpisodeResult run_episode(const EpisodeConfig& cfg, LanguageBackend* backend, ResponseCache* cache) {
    validate(cfg);
    const World& w = cfg.world;

    EpisodeResult result;
    result.scenario = w.id;
    result.algorithm = cfg.algorithm;
    result.utterance = cfg.utterance;
    result.horizon = cfg.planner.horizon;
    result.seed = cfg.seed;

    std::unique_ptr<LanguageBackend> owned;
    if (uses_language(cfg.algorithm) && backend == nullptr) {
        owned = make_backend(cfg.backend, cfg.hp.cap_factor, w.theta_star);
        backend = owned.get();
    }

    PreferenceEstimate est{cfg.initial_theta.empty() ? std::vector<double>(w.dim(), cfg.initial_weight)
                                                     : cfg.initial_theta,
                           0};
    result.initial_theta = est.theta;
    result.initial_nmse = nmse(est.theta, w.theta_star);
    result.final_nmse = result.initial_nmse;

    auto window_at = [&](int t) -> const Window* {
        for (const Window& win : cfg.windows) {
            if (t >= win.first && t < win.second) return &win;
        }
        return nullptr;
    };

    State s = w.start;
    result.states.reserve(static_cast<std::size_t>(cfg.episode_length) + 1);
    result.states.push_back(s);
    for (int t = 0; t < cfg.episode_length; ++t) {
        PlannerConfig pc = cfg.planner;
        pc.seed = step_seed(cfg.seed, t);
        const double time = t * pc.dt;
        const Window* win = window_at(t);
        Trajectory executed;
        if (win != nullptr) {
            const Trajectory xi_h = simulate_human_correction(w, w.theta_star, s, pc, time);
            if (t == win->first) {
                const Trajectory xi_r = plan(w, est.theta, s, pc, time);
                const std::vector<double> dphi = feature_delta(trajectory_features(w, xi_h, time, pc.dt),
                                                               trajectory_features(w, xi_r, time, pc.dt));
                result.feature_deltas.push_back(dphi);
                if (cfg.algorithm == Algorithm::phri) {
                    est = update_phri(est, dphi, cfg.hp);
                } else {
                    LanguageSignal sig;
                    try {
                        const LanguageContext ctx = make_context(w, cfg.utterance, dphi, est.theta);
                        sig = interpret(*backend, ctx, cfg.backend, cache);
                    } catch (const std::exception& e) {
                        result.error = std::string("intervention ") + std::to_string(result.feature_deltas.size()) +
                                       " at step " + std::to_string(t) + ": " + e.what();
                        return result;
                    }
                    switch (cfg.algorithm) {
                        case Algorithm::masked: est = update_masked(est, dphi, sig.gate, cfg.hp); break;
                        case Algorithm::quicklap: est = update_quicklap(est, dphi, sig, cfg.hp); break;
                        case Algorithm::language_only: est = update_language_only(est, dphi, sig, cfg.hp); break;
                        case Algorithm::phri: break;
                    }
                    result.language_signals.push_back(std::move(sig));
                }
                result.theta_trace.push_back(est.theta);
                try {
                    result.nmse_trace.push_back(nmse(est.theta, w.theta_star));
                } catch (const std::invalid_argument& e) {
                    result.error = std::string("estimate collapsed: ") + e.what();
                    return result;
                }
                result.final_nmse = result.nmse_trace.back();
            }
            executed = xi_h;
        } else {
            executed = plan(w, est.theta, s, pc, time);
        }
        s = step(s, executed.controls.front(), pc.dt, w.limits);
        result.states.push_back(s);
    }
    return result;
}

std::pair<double, double> mean_sem(std::span<const double> values) {
    if (values.empty()) return {0.0, 0.0};
    const double n = static_cast<double>(values.size());
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    if (values.size() < 2) return {mean, 0.0};
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return {mean, std::sqrt(ss / (n - 1.0)) / std::sqrt(n)};
}

std::vector<SummaryRow> summarize(const std::vector<EpisodeResult>& episodes, const Grid& grid) {
    std::vector<SummaryRow> rows;
    for (const World& w : grid.scenarios) {
        for (Algorithm a : grid.algorithms) {
            SummaryRow row{w.id, a, 0.0, 0.0, 0, 0};
            std::vector<double> finals;
            for (const EpisodeResult& e : episodes) {
                if (e.scenario != w.id || e.algorithm != a) continue;
                if (e.ok()) {
                    finals.push_back(e.final_nmse);
                } else {
                    ++row.failures;
                }
            }
            std::tie(row.mean_nmse, row.sem) = mean_sem(finals);
            row.n = finals.size();
            rows.push_back(row);
        }
    }
    return rows;
}

std::vector<ConvergencePoint> convergence(const std::vector<EpisodeResult>& episodes, const Grid& grid) {
    std::vector<ConvergencePoint> points;
    for (Algorithm a : grid.algorithms) {
        // intervention index -> per-scenario means
        std::map<std::size_t, std::vector<double>> by_index;
        for (const World& w : grid.scenarios) {
            std::map<std::size_t, std::vector<double>> values;
            for (const EpisodeResult& e : episodes) {
                if (e.scenario != w.id || e.algorithm != a || !e.ok()) continue;
                values[0].push_back(e.initial_nmse);
                for (std::size_t i = 0; i < e.nmse_trace.size(); ++i) values[i + 1].push_back(e.nmse_trace[i]);
            }
            for (const auto& [index, v] : values) by_index[index].push_back(mean_sem(v).first);
        }
        for (const auto& [index, per_scenario] : by_index) {
            const auto [m, se] = mean_sem(per_scenario);
            points.push_back({index, a, m, se});
        }
    }
    return points;
}

SweepResult run_sweep(const Grid& grid, const EpisodeConfig& base, int workers, ResponseCache* cache) {
    if (grid.size() == 0) throw std::invalid_argument("run_sweep: the grid is empty");

    std::vector<EpisodeConfig> configs;
    configs.reserve(grid.size());
    for (const World& w : grid.scenarios) {
        for (Algorithm a : grid.algorithms) {
            for (const std::string& u : grid.utterances) {
                for (int h : grid.horizons) {
                    for (std::uint64_t seed : grid.seeds) {
                        EpisodeConfig cfg = base;
                        cfg.world = w;
                        cfg.algorithm = a;
                        cfg.utterance = u;
                        cfg.planner.horizon = h;
                        cfg.seed = seed;
                        validate(cfg);
                        configs.push_back(std::move(cfg));
                    }
                }
            }
        }
    }

    // Oracle backends depend on the scenario and are built per episode.
    std::unique_ptr<LanguageBackend> shared;
    const bool any_language = std::any_of(grid.algorithms.begin(), grid.algorithms.end(), uses_language);
    if (any_language && base.backend.kind != BackendKind::oracle) {
        shared = make_backend(base.backend, base.hp.cap_factor);
    }
    if (base.backend.kind == BackendKind::replay) cache = nullptr;

    SweepResult out;
    out.episodes.resize(configs.size());
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < configs.size(); i = next++) {
            try {
                out.episodes[i] = run_episode(configs[i], shared.get(), cache);
            } catch (const std::exception& e) {
                EpisodeResult failed;
                failed.scenario = configs[i].world.id;
                failed.algorithm = configs[i].algorithm;
                failed.utterance = configs[i].utterance;
                failed.horizon = configs[i].planner.horizon;
                failed.seed = configs[i].seed;
                failed.error = e.what();
                out.episodes[i] = std::move(failed);
            }
        }
    };
    const int n_threads = std::clamp(workers, 1, static_cast<int>(configs.size()));
    if (n_threads == 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        for (int i = 0; i < n_threads; ++i) pool.emplace_back(work);
    }

    out.summary = summarize(out.episodes, grid);
    out.convergence = convergence(out.episodes, grid);
    return out;
}

}  // namespace quicklap
