#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "quicklap/backends.hpp"
#include "quicklap/experiment.hpp"

using namespace quicklap;
namespace fs = std::filesystem;

namespace {

EpisodeConfig quick_config(ScenarioId id, Algorithm a) {
    EpisodeConfig cfg;
    cfg.world = build_scenario(id);
    cfg.algorithm = a;
    cfg.utterance = "Steer clear of the cone.";
    cfg.episode_length = 40;
    cfg.windows = {{5, 8}, {20, 23}};
    cfg.planner.population = 16;
    cfg.planner.elites = 4;
    cfg.planner.iterations = 3;
    cfg.planner.refine_passes = 1;
    cfg.seed = 3;
    return cfg;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

EpisodeResult fake(const std::string& scenario, Algorithm a, double initial, std::vector<double> trace,
                   bool ok = true) {
    EpisodeResult e;
    e.scenario = scenario;
    e.algorithm = a;
    e.initial_nmse = initial;
    e.nmse_trace = trace;
    e.final_nmse = trace.empty() ? initial : trace.back();
    if (!ok) e.error = "boom";
    return e;
}

}  // namespace

TEST_CASE("nmse worked examples") {
    using V = std::vector<double>;
    CHECK(nmse(V{1, 0}, V{1, 0}) == 0.0);
    CHECK(nmse(V{3, 0}, V{1, 0}) == 0.0);
    CHECK(nmse(V{1, 0}, V{0, 1}) == doctest::Approx(1.0));
    CHECK(nmse(V{-1, 0}, V{1, 0}) == doctest::Approx(2.0));
    // (1/3) * |(1,1,1)/sqrt3 - (1,0,0)|^2 = (1/3) * (2 - 2/sqrt3)
    CHECK(nmse(V{1, 1, 1}, V{1, 0, 0}) == doctest::Approx((2.0 - 2.0 / std::sqrt(3.0)) / 3.0));
    CHECK_THROWS_AS(nmse(V{0, 0}, V{1, 0}), std::invalid_argument);
    CHECK_THROWS_AS(nmse(V{1}, V{1, 0}), std::invalid_argument);
}

TEST_CASE("mean and standard error") {
    using V = std::vector<double>;
    auto [m, se] = mean_sem(V{1, 2, 3});
    CHECK(m == doctest::Approx(2.0));
    CHECK(se == doctest::Approx(1.0 / std::sqrt(3.0)));
    std::tie(m, se) = mean_sem(V{4});
    CHECK(m == 4.0);
    CHECK(se == 0.0);
}

TEST_CASE("names and windows") {
    CHECK(algorithm_from_name("masked") == Algorithm::masked);
    CHECK(algorithm_name(Algorithm::language_only) == "language_only");
    CHECK_THROWS_AS(algorithm_from_name("QuickLAP!"), std::invalid_argument);
    CHECK_FALSE(uses_language(Algorithm::phri));
    CHECK(uses_language(Algorithm::masked));
    CHECK(default_utterances().size() == 6);
    CHECK(default_windows().size() == 4);

    EpisodeConfig cfg = quick_config(ScenarioId::C, Algorithm::phri);
    CHECK_NOTHROW(validate(cfg));
    cfg.windows = {{5, 10}, {9, 12}};
    CHECK_THROWS_AS(validate(cfg), std::invalid_argument);
    cfg.windows = {{20, 23}, {5, 8}};
    CHECK_THROWS_AS(validate(cfg), std::invalid_argument);
    cfg.windows = {{5, 5}};
    CHECK_THROWS_AS(validate(cfg), std::invalid_argument);
    cfg.windows = {{35, 41}};
    CHECK_THROWS_AS(validate(cfg), std::invalid_argument);
    cfg = quick_config(ScenarioId::C, Algorithm::quicklap);
    cfg.utterance = "";
    CHECK_THROWS_AS(validate(cfg), std::invalid_argument);
    cfg = quick_config(ScenarioId::C, Algorithm::phri);
    cfg.initial_theta = {1, 2};
    CHECK_THROWS_AS(validate(cfg), std::invalid_argument);
}

TEST_CASE("step seeds differ and are reproducible") {
    CHECK(step_seed(1, 5) == step_seed(1, 5));
    CHECK(step_seed(1, 5) != step_seed(1, 6));
    CHECK(step_seed(1, 5) != step_seed(2, 5));
}

TEST_CASE("episodes are deterministic and well formed") {
    const EpisodeConfig cfg = quick_config(ScenarioId::CP, Algorithm::quicklap);
    const EpisodeResult a = run_episode(cfg);
    const EpisodeResult b = run_episode(cfg);
    REQUIRE(a.ok());
    CHECK(a.states == b.states);
    CHECK(a.theta_trace == b.theta_trace);
    CHECK(a.states.size() == 41);
    CHECK(a.theta_trace.size() == 2);
    CHECK(a.nmse_trace.size() == 2);
    CHECK(a.feature_deltas.size() == 2);
    CHECK(a.language_signals.size() == 2);
    CHECK(a.final_nmse == a.nmse_trace.back());
    CHECK(a.initial_theta == std::vector<double>(5, cfg.initial_weight));
    CHECK(a.initial_nmse == doctest::Approx(nmse(a.initial_theta, cfg.world.theta_star)));
    for (std::size_t i = 0; i < a.theta_trace.size(); ++i) {
        CHECK(a.nmse_trace[i] == doctest::Approx(nmse(a.theta_trace[i], cfg.world.theta_star)));
    }
    for (const State& s : a.states) CHECK(std::isfinite(s.x));
}

TEST_CASE("pHRI steps by the feature difference") {
    EpisodeConfig cfg = quick_config(ScenarioId::C, Algorithm::phri);
    cfg.initial_theta = cfg.world.theta_star;
    const EpisodeResult r = run_episode(cfg);
    REQUIRE(r.ok());
    CHECK(r.initial_nmse == doctest::Approx(0.0));
    CHECK(r.language_signals.empty());
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(r.theta_trace[0][i] == doctest::Approx(cfg.world.theta_star[i] + r.feature_deltas[0][i]));
    }
}

TEST_CASE("a perfectly informed interpreter improves the estimate") {
    for (ScenarioId id : {ScenarioId::C, ScenarioId::CP}) {
        EpisodeConfig cfg = quick_config(id, Algorithm::quicklap);
        cfg.backend.kind = BackendKind::oracle;
        cfg.initial_weight = 0.05;
        const EpisodeResult r = run_episode(cfg);
        REQUIRE(r.ok());
        // Every feature the oracle points at moves toward its true weight.
        std::vector<double> before = r.initial_theta;
        for (std::size_t k = 0; k < r.theta_trace.size(); ++k) {
            const LanguageSignal& sig = r.language_signals[k];
            for (std::size_t i = 0; i < before.size(); ++i) {
                if (sig.gate[i] == 0.0 || r.feature_deltas[k][i] == 0.0) continue;
                CHECK(std::abs(r.theta_trace[k][i] - cfg.world.theta_star[i]) <
                      std::abs(before[i] - cfg.world.theta_star[i]));
            }
            before = r.theta_trace[k];
        }
    }
}

TEST_CASE("backend failures are recorded, not thrown") {
    const fs::path cache = fs::temp_directory_path() / "quicklap_empty_cache.jsonl";
    std::ofstream(cache).close();
    EpisodeConfig cfg = quick_config(ScenarioId::C, Algorithm::quicklap);
    cfg.backend.kind = BackendKind::replay;
    cfg.backend.cache_path = cache.string();
    const EpisodeResult r = run_episode(cfg);
    CHECK_FALSE(r.ok());
    CHECK(r.theta_trace.empty());

    cfg.algorithm = Algorithm::phri;
    CHECK(run_episode(cfg).ok());
}

TEST_CASE("summaries exclude failed episodes") {
    Grid grid;
    grid.scenarios = {build_scenario(ScenarioId::C), build_scenario(ScenarioId::CP)};
    grid.algorithms = {Algorithm::phri, Algorithm::quicklap};
    const std::vector<EpisodeResult> eps{
        fake("C", Algorithm::phri, 0.5, {0.4, 0.2}),
        fake("C", Algorithm::phri, 0.5, {0.4, 0.4}),
        fake("C", Algorithm::phri, 0.5, {9.0}, false),
        fake("C", Algorithm::quicklap, 0.5, {0.1, 0.1}),
        fake("CP", Algorithm::phri, 0.3, {0.3, 0.1}),
        fake("CP", Algorithm::quicklap, 0.3, {0.2, 0.0}),
    };
    const auto rows = summarize(eps, grid);
    REQUIRE(rows.size() == 4);
    CHECK(rows[0].scenario == "C");
    CHECK(rows[0].algorithm == Algorithm::phri);
    CHECK(rows[0].mean_nmse == doctest::Approx(0.3));
    CHECK(rows[0].sem == doctest::Approx(0.1));
    CHECK(rows[0].n == 2);
    CHECK(rows[0].failures == 1);
    CHECK(rows[1].sem == 0.0);
    CHECK(rows[3].mean_nmse == 0.0);

    const auto conv = convergence(eps, grid);
    REQUIRE(conv.size() == 6);
    CHECK(conv[0].intervention_index == 0);
    CHECK(conv[0].mean_nmse == doctest::Approx(0.4));  // mean of scenario means 0.5 and 0.3
    CHECK(conv[0].sem == doctest::Approx(0.1));
    CHECK(conv[2].mean_nmse == doctest::Approx((0.3 + 0.1) / 2));
    CHECK(conv[3].algorithm == Algorithm::quicklap);
}

TEST_CASE("sweeps do not depend on the worker count and export deterministically") {
    Grid grid;
    grid.scenarios = {build_scenario(ScenarioId::C), build_scenario(ScenarioId::CP)};
    grid.algorithms = {Algorithm::phri, Algorithm::quicklap};
    grid.utterances = {"Be careful.", "Avoid the cone."};
    grid.horizons = {4};
    grid.seeds = {0};
    EpisodeConfig base = quick_config(ScenarioId::C, Algorithm::phri);
    base.episode_length = 25;
    base.windows = {{3, 6}, {12, 14}};

    const SweepResult one = run_sweep(grid, base, 1);
    const SweepResult three = run_sweep(grid, base, 3);
    REQUIRE(one.episodes.size() == grid.size());
    for (std::size_t i = 0; i < one.episodes.size(); ++i) {
        CHECK(one.episodes[i].scenario == three.episodes[i].scenario);
        CHECK(one.episodes[i].utterance == three.episodes[i].utterance);
        CHECK(one.episodes[i].theta_trace == three.episodes[i].theta_trace);
        CHECK(one.episodes[i].horizon == 4);
    }
    CHECK(one.episodes[0].scenario == "C");
    CHECK(one.episodes[0].algorithm == Algorithm::phri);
    CHECK(one.episodes[1].utterance == "Avoid the cone.");
    CHECK(one.summary.size() == 4);

    const fs::path d1 = fs::temp_directory_path() / "quicklap_export_1";
    const fs::path d2 = fs::temp_directory_path() / "quicklap_export_2";
    fs::remove_all(d1);
    fs::remove_all(d2);
    export_results(one, d1);
    export_results(three, d2);
    for (const char* f : {"summary.csv", "convergence.csv", "episodes.jsonl"}) {
        CHECK(slurp(d1 / f) == slurp(d2 / f));
    }
    const std::string summary = slurp(d1 / "summary.csv");
    CHECK(summary.rfind("scenario,algorithm,mean_nmse,sem,n\n", 0) == 0);
    CHECK(std::count(summary.begin(), summary.end(), '\n') == 5);
    CHECK(slurp(d1 / "convergence.csv").rfind("intervention_index,algorithm,mean_nmse,sem\n", 0) == 0);

    const fs::path empty = fs::temp_directory_path() / "quicklap_export_empty";
    fs::remove_all(empty);
    export_results(SweepResult{}, empty);
    CHECK(slurp(empty / "summary.csv") == "scenario,algorithm,mean_nmse,sem,n\n");
    CHECK(slurp(empty / "episodes.jsonl").empty());
}
