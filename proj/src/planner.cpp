#include "quicklap/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

namespace quicklap {

namespace {

// Flat control vector layout: [steer_0, accel_0, steer_1, accel_1, ...].
using Sequence = std::vector<double>;

std::vector<Control> to_controls(const Sequence& seq) {
    std::vector<Control> out(seq.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = Control{seq[2 * i], seq[2 * i + 1]};
    }
    return out;
}

double bound_of(const VehicleLimits& limits, std::size_t coord) {
    return coord % 2 == 0 ? limits.steer_max : limits.accel_max;
}

class Objective {
public:
    Objective(const World& w, std::span<const double> theta, const State& s0,
              const PlannerConfig& cfg, double t0)
        : world_(w), theta_(theta), s0_(s0), cfg_(cfg), t0_(t0) {}

    // Features depend on states x^0..x^{T-1}, so the last control never matters.
    double operator()(const Sequence& seq) const {
        State s = s0_;
        double total = 0.0;
        const std::size_t steps = seq.size() / 2;
        for (std::size_t i = 0; i < steps; ++i) {
            const Control u{seq[2 * i], seq[2 * i + 1]};
            const FeatureVector phi =
                feature_vector(world_, s, u, t0_ + static_cast<double>(i) * cfg_.dt);
            for (std::size_t k = 0; k < phi.size(); ++k) {
                total += theta_[k] * phi[k];
            }
            if (i + 1 < steps) {
                s = step(s, u, cfg_.dt, world_.limits);
            }
        }
        return total;
    }

private:
    const World& world_;
    std::span<const double> theta_;
    State s0_;
    const PlannerConfig& cfg_;
    double t0_;
};

struct Candidate {
    Sequence seq;
    double value = -std::numeric_limits<double>::infinity();
};

}  // namespace

void validate(const PlannerConfig& cfg) {
    if (cfg.horizon < 1) throw std::invalid_argument("planner: horizon must be >= 1");
    if (cfg.population < 1) throw std::invalid_argument("planner: population must be >= 1");
    if (cfg.elites < 1 || cfg.elites > cfg.population) {
        throw std::invalid_argument("planner: elites must be in [1, population]");
    }
    if (cfg.iterations < 1) throw std::invalid_argument("planner: iterations must be >= 1");
    if (!(cfg.dt > 0.0)) throw std::invalid_argument("planner: dt must be positive");
    if (cfg.refine_passes < 0) throw std::invalid_argument("planner: refine_passes must be >= 0");
}

double plan_objective(const World& w, std::span<const double> theta, const State& s0,
                      std::span<const Control> controls, const PlannerConfig& cfg, double t0) {
    const Trajectory t = rollout(s0, controls, cfg.dt, w.limits);
    const TrajectoryFeatures phi = trajectory_features(w, t, t0, cfg.dt);
    return std::inner_product(phi.begin(), phi.end(), theta.begin(), 0.0);
}

Trajectory plan(const World& w, std::span<const double> theta, const State& s0,
                const PlannerConfig& cfg, double t0, PlanStats* stats) {
    validate(cfg);
    if (theta.size() != w.dim()) {
        throw std::invalid_argument("plan: theta dimension does not match the world");
    }
    const std::size_t dims = 2 * static_cast<std::size_t>(cfg.horizon);
    const Objective objective(w, theta, s0, cfg, t0);
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    Sequence mean(dims, 0.0);
    Sequence stddev(dims);
    for (std::size_t c = 0; c < dims; ++c) {
        stddev[c] = 0.5 * bound_of(w.limits, c);
    }

    Candidate best{Sequence(dims, 0.0), 0.0};
    best.value = objective(best.seq);
    if (stats) {
        stats->zero_control_objective = best.value;
        stats->best_per_iteration.clear();
    }

    std::vector<Candidate> population(static_cast<std::size_t>(cfg.population));
    std::vector<std::size_t> order(population.size());
    for (int iter = 0; iter < cfg.iterations; ++iter) {
        for (std::size_t p = 0; p < population.size(); ++p) {
            Sequence& seq = population[p].seq;
            seq.resize(dims);
            if (p == 0) {
                // Elitism: the incumbent (zero controls on the first iteration) is re-entered.
                seq = best.seq;
            } else {
                for (std::size_t c = 0; c < dims; ++c) {
                    const double b = bound_of(w.limits, c);
                    seq[c] = std::clamp(mean[c] + stddev[c] * normal(rng), -b, b);
                }
            }
            population[p].value = objective(seq);
        }
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return population[a].value > population[b].value;
        });
        if (population[order[0]].value > best.value) {
            best = population[order[0]];
        }
        if (stats) {
            stats->best_per_iteration.push_back(best.value);
        }

        const auto n_elite = static_cast<std::size_t>(cfg.elites);
        for (std::size_t c = 0; c < dims; ++c) {
            double m = 0.0;
            for (std::size_t e = 0; e < n_elite; ++e) {
                m += population[order[e]].seq[c];
            }
            m /= static_cast<double>(n_elite);
            double var = 0.0;
            for (std::size_t e = 0; e < n_elite; ++e) {
                const double d = population[order[e]].seq[c] - m;
                var += d * d;
            }
            var /= static_cast<double>(n_elite);
            mean[c] = m;
            stddev[c] = std::max(std::sqrt(var), 1e-3 * bound_of(w.limits, c));
        }
    }

    // Coordinate refinement: probe +-delta per coordinate, keep improvements, shrink delta.
    for (int pass = 0; pass < cfg.refine_passes; ++pass) {
        const double scale = 0.1 / static_cast<double>(1 << pass);
        for (std::size_t c = 0; c < dims; ++c) {
            const double b = bound_of(w.limits, c);
            const double delta = scale * b;
            for (double dir : {1.0, -1.0}) {
                Candidate trial = best;
                trial.seq[c] = std::clamp(best.seq[c] + dir * delta, -b, b);
                trial.value = objective(trial.seq);
                if (trial.value > best.value) {
                    best = std::move(trial);
                    // Keep walking while it pays off.
                    for (int walk = 0; walk < 8; ++walk) {
                        Candidate next = best;
                        next.seq[c] = std::clamp(best.seq[c] + dir * delta, -b, b);
                        next.value = objective(next.seq);
                        if (!(next.value > best.value)) break;
                        best = std::move(next);
                    }
                    break;
                }
            }
        }
    }

    // The terminal control only moves x^T, which carries no feature weight.
    best.seq[dims - 2] = 0.0;
    best.seq[dims - 1] = 0.0;
    if (stats) {
        stats->final_objective = best.value;
    }
    return rollout(s0, to_controls(best.seq), cfg.dt, w.limits);
}

Trajectory simulate_human_correction(const World& w, std::span<const double> theta_star,
                                     const State& s0, const PlannerConfig& cfg, double t0) {
    return plan(w, theta_star, s0, cfg, t0);
}

Trajectory deform(const Trajectory& xi_r, const Control& u_h, double decay, double dt,
                  const VehicleLimits& limits) {
    if (!(decay > 0.0 && decay < 1.0)) {
        throw std::invalid_argument("deform: decay must lie in (0, 1)");
    }
    std::vector<Control> controls = xi_r.controls;
    double scale = 1.0;
    for (Control& u : controls) {
        u.steer += scale * u_h.steer;
        u.accel += scale * u_h.accel;
        scale *= decay;
    }
    return rollout(xi_r.initial(), controls, dt, limits);
}

}  // namespace quicklap
