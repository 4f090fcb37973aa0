#include "quicklap/world.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace quicklap {

namespace {

using nlohmann::json;

std::string to_upper(std::string_view s) {
    std::string out(s);
    for (char& c : out) {
        c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    }
    return out;
}

// 1 - clamp((r_safe - d) / r_safe, 0, 1) * sigmoid(-gamma * |dx|), where d is the
// lateral clearance and dx the longitudinal offset to the obstacle.
double obstacle_value(const World& w, const State& s, const Point& p) {
    const double lateral = std::abs(s.y - p.y);
    const double proximity = std::clamp((w.r_safe - lateral) / w.r_safe, 0.0, 1.0);
    return 1.0 - proximity * sigmoid(-w.gamma * std::abs(s.x - p.x));
}

double lane_value(const World& w, const State& s) {
    int lane = static_cast<int>(std::floor(s.y / w.lane_width));
    lane = std::clamp(lane, 0, w.lanes - 1);
    const double d = (s.y - w.lane_center(lane)) / w.lane_width;
    return 1.0 - d * d;
}

double off_road_value(const World& w, const State& s) {
    double overshoot = 0.0;
    if (s.y < w.road_min()) {
        overshoot = w.road_min() - s.y;
    } else if (s.y > w.road_max()) {
        overshoot = s.y - w.road_max();
    }
    const double d = overshoot / w.lane_width;
    return 1.0 - d * d;
}

double speed_value(const World& w, const State& s) {
    const double d = (s.speed - w.v_target) / w.v_target;
    return 1.0 - d * d;
}

World base_world(std::string id, int lanes, int ego_lane) {
    World w;
    w.id = std::move(id);
    w.lanes = lanes;
    w.lane_width = 0.17;
    w.r_safe = 1.5 * w.lane_width;
    w.gamma = 2.0;
    w.v_target = 1.0;
    w.limits.speed_max = 2.0 * w.v_target;
    w.start = State{0.0, w.lane_center(ego_lane), 0.0, w.v_target};
    return w;
}

void set_weights(World& w, std::initializer_list<std::pair<Feature, double>> weights) {
    w.active_features.clear();
    w.theta_star.clear();
    // Keep canonical column order regardless of the listing order.
    for (Feature f : kAllFeatures) {
        for (const auto& [g, value] : weights) {
            if (f == g) {
                w.active_features.push_back(f);
                w.theta_star.push_back(value);
            }
        }
    }
}

Point read_point(const json& j, const char* what) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
        throw std::invalid_argument(std::string("world: '") + what + "' must be [x, y]");
    }
    return {j[0].get<double>(), j[1].get<double>()};
}

void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const char* where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::none_of(allowed.begin(), allowed.end(),
                         [&](const char* k) { return it.key() == k; })) {
            throw std::invalid_argument(std::string(where) + ": unknown key '" + it.key() + "'");
        }
    }
}

}  // namespace

std::string_view feature_name(Feature f) {
    switch (f) {
        case Feature::speed_desirability: return "speed_desirability";
        case Feature::lane_alignment: return "lane_alignment";
        case Feature::off_road: return "off_road";
        case Feature::cone_distance: return "cone_distance";
        case Feature::car_distance: return "car_distance";
        case Feature::puddle_distance: return "puddle_distance";
    }
    return "unknown";
}

std::string_view feature_description(Feature f) {
    switch (f) {
        case Feature::speed_desirability: return "How close the car's speed is to the desired speed limit";
        case Feature::lane_alignment: return "How well the car stays centered in its lane";
        case Feature::off_road: return "Penalty for driving off the road";
        case Feature::cone_distance: return "Safe distance from traffic cones";
        case Feature::car_distance: return "Safe distance from other vehicles";
        case Feature::puddle_distance: return "Safe distance from puddles";
    }
    return "";
}

std::optional<Feature> feature_from_name(std::string_view name) {
    for (Feature f : kAllFeatures) {
        if (feature_name(f) == name) {
            return f;
        }
    }
    return std::nullopt;
}

bool is_obstacle_feature(Feature f) {
    return f == Feature::cone_distance || f == Feature::car_distance || f == Feature::puddle_distance;
}

std::string_view scenario_name(ScenarioId id) {
    switch (id) {
        case ScenarioId::C: return "C";
        case ScenarioId::CP: return "CP";
        case ScenarioId::CPC3: return "CPC3";
        case ScenarioId::CPC4: return "CPC4";
    }
    return "";
}

std::optional<ScenarioId> scenario_from_name(std::string_view name) {
    const std::string n = to_upper(name);
    if (n == "C") return ScenarioId::C;
    if (n == "CP") return ScenarioId::CP;
    if (n == "CPC3" || n == "CPC-3") return ScenarioId::CPC3;
    if (n == "CPC4" || n == "CPC-4") return ScenarioId::CPC4;
    return std::nullopt;
}

std::optional<std::size_t> World::index_of(Feature f) const {
    const auto it = std::find(active_features.begin(), active_features.end(), f);
    if (it == active_features.end()) {
        return std::nullopt;
    }
    return static_cast<std::size_t>(it - active_features.begin());
}

World build_scenario(ScenarioId id) {
    using F = Feature;
    switch (id) {
        case ScenarioId::C: {
            World w = base_world("C", 2, 0);
            w.description =
                "A two-lane road with a single traffic cone in the robot car's lane ahead.";
            w.cone = Point{1.8, w.lane_center(0)};
            set_weights(w, {{F::speed_desirability, 5.0}, {F::lane_alignment, 2.5},
                            {F::off_road, 20.0}, {F::cone_distance, 40.0}});
            return w;
        }
        case ScenarioId::CP: {
            World w = base_world("CP", 2, 0);
            w.description =
                "A two-lane road with a traffic cone in the robot car's lane and a puddle in the "
                "adjacent lane next to the cone.";
            w.cone = Point{1.8, w.lane_center(0)};
            w.puddle = Point{1.8, w.lane_center(1)};
            set_weights(w, {{F::speed_desirability, 5.0}, {F::lane_alignment, 1.5},
                            {F::off_road, 10.0}, {F::cone_distance, 20.0},
                            {F::puddle_distance, 1.0}});
            return w;
        }
        case ScenarioId::CPC3: {
            World w = base_world("CPC3", 3, 1);
            w.description =
                "A three-lane road with a traffic cone in the robot car's (middle) lane, a puddle "
                "in the right lane and another car in the left lane, all side by side.";
            w.cone = Point{2.0, w.lane_center(1)};
            w.puddle = Point{2.0, w.lane_center(0)};
            w.cars = {Car{{2.0, w.lane_center(2)}, 0.0}};
            set_weights(w, {{F::speed_desirability, 5.0}, {F::lane_alignment, 2.5},
                            {F::off_road, 20.0}, {F::cone_distance, 40.0},
                            {F::car_distance, 50.0}, {F::puddle_distance, 3.0}});
            return w;
        }
        case ScenarioId::CPC4: {
            World w = base_world("CPC4", 4, 1);
            w.description =
                "A four-lane road with a traffic cone in the robot car's lane, a puddle in the "
                "lane to its right, a parked car to its left and traffic in the far left lane.";
            w.cone = Point{2.0, w.lane_center(1)};
            w.puddle = Point{2.0, w.lane_center(0)};
            w.cars = {Car{{2.0, w.lane_center(2)}, 0.0}, Car{{1.2, w.lane_center(3)}, 0.0},
                      Car{{3.2, w.lane_center(3)}, 0.3}};
            set_weights(w, {{F::speed_desirability, 5.0}, {F::lane_alignment, 2.5},
                            {F::off_road, 20.0}, {F::cone_distance, 40.0},
                            {F::car_distance, 50.0}, {F::puddle_distance, 3.0}});
            return w;
        }
    }
    throw std::invalid_argument("build_scenario: unknown scenario id");
}

World build_scenario(std::string_view name) {
    const auto id = scenario_from_name(name);
    if (!id) {
        throw std::invalid_argument("unknown scenario '" + std::string(name) + "'");
    }
    return build_scenario(*id);
}

void validate_world(const World& w) {
    if (w.lanes < 1 || !(w.lane_width > 0.0)) {
        throw std::invalid_argument("world: need at least one lane of positive width");
    }
    if (!(w.v_target > 0.0) || !(w.r_safe > 0.0) || !(w.gamma > 0.0)) {
        throw std::invalid_argument("world: v_target, r_safe and gamma must be positive");
    }
    if (w.active_features.empty() || w.active_features.size() != w.theta_star.size()) {
        throw std::invalid_argument("world: theta_star must give one weight per active feature");
    }
    for (std::size_t i = 1; i < w.active_features.size(); ++i) {
        if (static_cast<int>(w.active_features[i]) <= static_cast<int>(w.active_features[i - 1])) {
            throw std::invalid_argument("world: active features must be unique and in canonical order");
        }
    }
    auto in_road = [&](const Point& p) { return p.y >= w.road_min() && p.y <= w.road_max(); };
    if (w.cone && !in_road(*w.cone)) throw std::invalid_argument("world: cone outside road bounds");
    if (w.puddle && !in_road(*w.puddle)) throw std::invalid_argument("world: puddle outside road bounds");
    for (const Car& c : w.cars) {
        if (!in_road(c.position)) throw std::invalid_argument("world: car outside road bounds");
    }
    auto requires_object = [&](Feature f, bool present, const char* what) {
        if (w.index_of(f).has_value() != present) {
            throw std::invalid_argument(std::string("world: feature ") + std::string(feature_name(f)) +
                                        " must be active exactly when a " + what + " is present");
        }
    };
    requires_object(Feature::cone_distance, w.cone.has_value(), "cone");
    requires_object(Feature::puddle_distance, w.puddle.has_value(), "puddle");
    requires_object(Feature::car_distance, !w.cars.empty(), "car");
}

World parse_world(std::string_view json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("world: malformed JSON: ") + e.what());
    }
    if (!j.is_object()) {
        throw std::invalid_argument("world: top level must be an object");
    }
    reject_unknown(j, {"id", "description", "lanes", "lane_width", "v_target", "r_safe", "gamma",
                       "cone", "puddle", "cars", "theta_star", "start", "ego_lane"},
                   "world");

    const int lanes = j.value("lanes", 2);
    const int ego_lane = j.value("ego_lane", 0);
    World w = base_world(j.value("id", std::string("custom")), lanes, 0);
    w.description = j.value("description", std::string());
    w.lane_width = j.value("lane_width", w.lane_width);
    w.r_safe = j.value("r_safe", 1.5 * w.lane_width);
    w.gamma = j.value("gamma", w.gamma);
    w.v_target = j.value("v_target", w.v_target);
    w.limits.speed_max = 2.0 * w.v_target;
    w.start = State{0.0, w.lane_center(ego_lane), 0.0, w.v_target};

    if (j.contains("cone") && !j["cone"].is_null()) w.cone = read_point(j["cone"], "cone");
    if (j.contains("puddle") && !j["puddle"].is_null()) w.puddle = read_point(j["puddle"], "puddle");
    if (j.contains("cars")) {
        for (const json& c : j["cars"]) {
            reject_unknown(c, {"x", "y", "speed"}, "world.cars[]");
            w.cars.push_back(Car{{c.at("x").get<double>(), c.at("y").get<double>()},
                                 c.value("speed", 0.0)});
        }
    }
    if (j.contains("start")) {
        const json& s = j["start"];
        reject_unknown(s, {"x", "y", "heading", "speed"}, "world.start");
        w.start = State{s.value("x", w.start.x), s.value("y", w.start.y),
                        wrap_angle(s.value("heading", 0.0)), s.value("speed", w.start.speed)};
    }
    if (!j.contains("theta_star") || !j["theta_star"].is_object()) {
        throw std::invalid_argument("world: 'theta_star' object is required");
    }
    const json& ts = j["theta_star"];
    for (auto it = ts.begin(); it != ts.end(); ++it) {
        if (!feature_from_name(it.key())) {
            throw std::invalid_argument("world: unknown feature '" + it.key() + "' in theta_star");
        }
    }
    for (Feature f : kAllFeatures) {
        const auto key = std::string(feature_name(f));
        if (ts.contains(key)) {
            w.active_features.push_back(f);
            w.theta_star.push_back(ts[key].get<double>());
        }
    }
    validate_world(w);
    return w;
}

World load_world(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::invalid_argument("cannot open world file '" + path.string() + "'");
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_world(buf.str());
}

double sigmoid(double z) {
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

FeatureVector feature_vector(const World& w, const State& s, const Control& /*u*/, double time) {
    FeatureVector phi;
    phi.reserve(w.active_features.size());
    for (Feature f : w.active_features) {
        switch (f) {
            case Feature::speed_desirability: phi.push_back(speed_value(w, s)); break;
            case Feature::lane_alignment: phi.push_back(lane_value(w, s)); break;
            case Feature::off_road: phi.push_back(off_road_value(w, s)); break;
            case Feature::cone_distance:
                phi.push_back(w.cone ? obstacle_value(w, s, *w.cone) : 1.0);
                break;
            case Feature::puddle_distance:
                phi.push_back(w.puddle ? obstacle_value(w, s, *w.puddle) : 1.0);
                break;
            case Feature::car_distance: {
                double v = 1.0;
                for (const Car& c : w.cars) {
                    v = std::min(v, obstacle_value(w, s, c.at(time)));
                }
                phi.push_back(v);
                break;
            }
        }
    }
    return phi;
}

TrajectoryFeatures trajectory_features(const World& w, const Trajectory& t, double t0, double dt) {
    TrajectoryFeatures total(w.dim(), 0.0);
    for (std::size_t i = 0; i < t.controls.size(); ++i) {
        const FeatureVector phi =
            feature_vector(w, t.states[i], t.controls[i], t0 + static_cast<double>(i) * dt);
        for (std::size_t k = 0; k < total.size(); ++k) {
            total[k] += phi[k];
        }
    }
    return total;
}

std::vector<double> feature_delta(std::span<const double> phi_h, std::span<const double> phi_r) {
    if (phi_h.size() != phi_r.size()) {
        throw std::invalid_argument("feature_delta: length mismatch");
    }
    std::vector<double> out(phi_h.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = phi_h[i] - phi_r[i];
    }
    return out;
}

}  // namespace quicklap
