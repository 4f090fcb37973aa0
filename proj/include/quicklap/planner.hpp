#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "quicklap/dynamics.hpp"
#include "quicklap/world.hpp"

namespace quicklap {

struct PlannerConfig {
    int horizon = 5;
    int population = 64;
    int elites = 8;
    int iterations = 10;
    std::uint64_t seed = 0;
    double dt = kDefaultDt;
    /// Passes of the coordinate-wise refinement after the sampling stage.
    int refine_passes = 2;
};

/// Throws std::invalid_argument if the configuration is unusable.
void validate(const PlannerConfig& cfg);

/// Diagnostics of a single `plan` call.
struct PlanStats {
    /// Best objective after each CEM iteration (non-decreasing).
    std::vector<double> best_per_iteration;
    double zero_control_objective = 0.0;
    double final_objective = 0.0;
};

/// theta^T Phi(rollout(s0, controls)).
double plan_objective(const World& w, std::span<const double> theta, const State& s0,
                      std::span<const Control> controls, const PlannerConfig& cfg,
                      double t0 = 0.0);

/// Seeded cross-entropy search over horizon-length control sequences, followed by a
/// coordinate-wise line search. The zero-control sequence is always a candidate, so the
/// returned objective is never below the zero-control rollout's. `t0` is the episode time
/// of `s0` (positions moving cars).
Trajectory plan(const World& w, std::span<const double> theta, const State& s0,
                const PlannerConfig& cfg, double t0 = 0.0, PlanStats* stats = nullptr);

/// The simulated human's intended trajectory: `plan` under the ground-truth weights.
Trajectory simulate_human_correction(const World& w, std::span<const double> theta_star,
                                     const State& s0, const PlannerConfig& cfg, double t0 = 0.0);

/// Adds decay^i * u_h to control i and re-integrates from the same initial state.
/// Throws std::invalid_argument unless 0 < decay < 1.
Trajectory deform(const Trajectory& xi_r, const Control& u_h, double decay, double dt = kDefaultDt,
                  const VehicleLimits& limits = {});

}  // namespace quicklap
