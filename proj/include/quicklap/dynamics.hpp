#pragma once

#include <span>
#include <vector>

namespace quicklap {

/// Planar vehicle state. `x` runs along the road, `y` across it.
struct State {
    double x = 0.0;
    double y = 0.0;
    double heading = 0.0;  // radians, wrapped to (-pi, pi]
    double speed = 0.0;    // m/s, never negative

    bool operator==(const State&) const = default;
};

/// Steering rate command and longitudinal acceleration.
struct Control {
    double steer = 0.0;
    double accel = 0.0;

    bool operator==(const Control&) const = default;
};

/// Actuator and integration limits for the kinematic bicycle model.
struct VehicleLimits {
    double steer_max = 2.0;
    double accel_max = 4.0;
    double speed_max = 2.0;  // 2 * v_target for the default v_target of 1 m/s
    double friction = 0.0;
};

/// States x^0..x^T and controls u^0..u^{T-1}; states.size() == controls.size() + 1.
struct Trajectory {
    std::vector<State> states;
    std::vector<Control> controls;

    std::size_t horizon() const { return controls.size(); }
    const State& initial() const { return states.front(); }
    const State& final() const { return states.back(); }

    bool operator==(const Trajectory&) const = default;
};

inline constexpr double kDefaultDt = 1.0 / 30.0;

double wrap_angle(double angle);

Control clamp_control(const Control& u, const VehicleLimits& limits = {});

/// One forward-Euler step of
///   x' = v cos(h), y' = v sin(h), h' = v * steer, v' = accel - friction * v.
/// Controls are clamped to the limits before integration; the resulting speed
/// is clamped to [0, speed_max].
State step(const State& s, const Control& u, double dt, const VehicleLimits& limits = {});

/// Integrates `controls` from `s0`. Throws std::invalid_argument on an empty sequence.
Trajectory rollout(const State& s0, std::span<const Control> controls, double dt,
                   const VehicleLimits& limits = {});

/// True when every consecutive state pair matches `step` to within `tol`.
bool is_consistent(const Trajectory& t, double dt, const VehicleLimits& limits = {},
                   double tol = 1e-12);

}  // namespace quicklap
