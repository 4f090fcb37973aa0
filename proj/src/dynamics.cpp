#include "quicklap/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace quicklap {

double wrap_angle(double angle) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    double wrapped = std::fmod(angle + std::numbers::pi, two_pi);
    if (wrapped < 0.0) {
        wrapped += two_pi;
    }
    wrapped -= std::numbers::pi;
    // fmod maps +pi onto -pi; the canonical interval is half-open at -pi.
    return wrapped == -std::numbers::pi ? std::numbers::pi : wrapped;
}

Control clamp_control(const Control& u, const VehicleLimits& limits) {
    return {std::clamp(u.steer, -limits.steer_max, limits.steer_max),
            std::clamp(u.accel, -limits.accel_max, limits.accel_max)};
}

State step(const State& s, const Control& u, double dt, const VehicleLimits& limits) {
    const Control c = clamp_control(u, limits);
    State next;
    next.x = s.x + s.speed * std::cos(s.heading) * dt;
    next.y = s.y + s.speed * std::sin(s.heading) * dt;
    next.heading = wrap_angle(s.heading + s.speed * c.steer * dt);
    next.speed = std::clamp(s.speed + (c.accel - limits.friction * s.speed) * dt, 0.0,
                            limits.speed_max);
    return next;
}

Trajectory rollout(const State& s0, std::span<const Control> controls, double dt,
                   const VehicleLimits& limits) {
    if (controls.empty()) {
        throw std::invalid_argument("rollout: control sequence is empty");
    }
    Trajectory t;
    t.states.reserve(controls.size() + 1);
    t.controls.reserve(controls.size());
    t.states.push_back(s0);
    for (const Control& u : controls) {
        t.controls.push_back(clamp_control(u, limits));
        t.states.push_back(step(t.states.back(), u, dt, limits));
    }
    return t;
}

bool is_consistent(const Trajectory& t, double dt, const VehicleLimits& limits, double tol) {
    if (t.states.size() != t.controls.size() + 1) {
        return false;
    }
    for (std::size_t i = 0; i < t.controls.size(); ++i) {
        const State expected = step(t.states[i], t.controls[i], dt, limits);
        const State& got = t.states[i + 1];
        if (std::abs(expected.x - got.x) > tol || std::abs(expected.y - got.y) > tol ||
            std::abs(wrap_angle(expected.heading - got.heading)) > tol ||
            std::abs(expected.speed - got.speed) > tol) {
            return false;
        }
    }
    return true;
}

}  // namespace quicklap
