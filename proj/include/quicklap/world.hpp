#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "quicklap/dynamics.hpp"

namespace quicklap {

/// Reward features in canonical column order (speed, lane, off-road, cone, car, puddle).
enum class Feature { speed_desirability, lane_alignment, off_road, cone_distance, car_distance, puddle_distance };

inline constexpr std::array<Feature, 6> kAllFeatures = {
    Feature::speed_desirability, Feature::lane_alignment, Feature::off_road,
    Feature::cone_distance,      Feature::car_distance,   Feature::puddle_distance};

std::string_view feature_name(Feature f);
/// Short human-readable description used in language-model prompts.
std::string_view feature_description(Feature f);
std::optional<Feature> feature_from_name(std::string_view name);
bool is_obstacle_feature(Feature f);

struct Point {
    double x = 0.0;
    double y = 0.0;
};

/// Another vehicle. With nonzero speed it holds its lane and moves along +x.
struct Car {
    Point position;
    double speed = 0.0;

    Point at(double time) const { return {position.x + speed * time, position.y}; }
};

enum class ScenarioId { C, CP, CPC3, CPC4 };

std::string_view scenario_name(ScenarioId id);
/// Accepts "C", "CP", "CPC3", "CPC-3", "CPC4", "CPC-4" (case-insensitive).
std::optional<ScenarioId> scenario_from_name(std::string_view name);

struct World {
    std::string id;
    std::string description;

    int lanes = 2;
    double lane_width = 0.17;

    std::optional<Point> cone;
    std::optional<Point> puddle;
    std::vector<Car> cars;

    double v_target = 1.0;
    double r_safe = 1.5 * 0.17;
    double gamma = 2.0;

    std::vector<Feature> active_features;
    std::vector<double> theta_star;  // aligned with active_features

    State start;
    VehicleLimits limits;

    std::size_t dim() const { return active_features.size(); }
    double road_min() const { return 0.0; }
    double road_max() const { return lanes * lane_width; }
    double lane_center(int lane) const { return (lane + 0.5) * lane_width; }
    /// Index of `f` in active_features, if active.
    std::optional<std::size_t> index_of(Feature f) const;
};

/// Per-step feature values, one per active feature.
using FeatureVector = std::vector<double>;
/// Feature sums over a trajectory, one per active feature.
using TrajectoryFeatures = std::vector<double>;

World build_scenario(ScenarioId id);
/// Throws std::invalid_argument for an unknown scenario name.
World build_scenario(std::string_view name);

/// Loads a world from a JSON scene file (see README for the schema).
World load_world(const std::filesystem::path& path);
World parse_world(std::string_view json_text);
/// Throws std::invalid_argument if the world violates its structural invariants.
void validate_world(const World& w);

double sigmoid(double z);

/// Evaluates every active feature at state `s`. `time` positions moving cars.
FeatureVector feature_vector(const World& w, const State& s, const Control& u, double time = 0.0);

/// Sums feature_vector over the T (state, control) pairs of `t`, the terminal state excluded.
TrajectoryFeatures trajectory_features(const World& w, const Trajectory& t, double t0 = 0.0,
                                       double dt = kDefaultDt);

/// Element-wise phi_h - phi_r. Throws std::invalid_argument on length mismatch.
std::vector<double> feature_delta(std::span<const double> phi_h, std::span<const double> phi_r);

}  // namespace quicklap
