#include "quicklap/backends.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

namespace quicklap {

namespace {

using nlohmann::json;

std::vector<std::string> words_of(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c) || ch == '\'') {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

bool word_matches(const std::string& word, const std::string& key) {
    if (word == key) return true;
    if (word.size() == key.size() + 1 && word.starts_with(key) && word.back() == 's') return true;
    return word.size() == key.size() + 2 && word.starts_with(key) && word.ends_with("es");
}

bool contains_keyword(const std::vector<std::string>& words, const std::string& keyword) {
    const std::vector<std::string> parts = words_of(keyword);
    if (parts.empty() || parts.size() > words.size()) return false;
    for (std::size_t i = 0; i + parts.size() <= words.size(); ++i) {
        bool all = true;
        for (std::size_t j = 0; j < parts.size() && all; ++j) {
            all = word_matches(words[i + j], parts[j]);
        }
        if (all) return true;
    }
    return false;
}

std::string dump_vectors(const char* k1, const std::vector<double>& v1, const char* k2 = nullptr,
                         const std::vector<double>* v2 = nullptr) {
    json j;
    j[k1] = v1;
    if (k2) j[k2] = *v2;
    return j.dump();
}

double clamp_mu(double v) { return std::clamp(v, -kMaxAbsMu, kMaxAbsMu); }

// A value as the prompts print it (3 decimals). The simulated models read these, not the
// exact context, so identical prompts always get identical answers and replays are exact.
double shown(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return std::strtod(buf, nullptr);
}

}  // namespace

std::vector<MockRule> default_mock_rules() {
    return {
        {{"cone", "construction"}, RuleTarget::feature, "cone_distance", 0.9},
        {{"car", "vehicle"}, RuleTarget::feature, "car_distance", 0.9},
        {{"puddle"}, RuleTarget::feature, "puddle_distance", 0.9},
        {{"lane"}, RuleTarget::feature, "lane_alignment", 0.9},
        {{"slow", "speed"}, RuleTarget::feature, "speed_desirability", 0.9},
        {{"obstacle", "thing"}, RuleTarget::largest_obstacle, "", 0.4},
        {{"careful", "watch out"}, RuleTarget::all_obstacles, "", 0.4},
    };
}

std::vector<MockRule> parse_mock_rules(std::string_view json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("mock rules: invalid JSON: ") + e.what());
    }
    if (!j.is_object() || j.size() != 1 || !j.contains("rules") || !j["rules"].is_array()) {
        throw std::invalid_argument("mock rules: expected an object with a single 'rules' list");
    }
    std::vector<MockRule> rules;
    for (const json& r : j["rules"]) {
        if (!r.is_object()) throw std::invalid_argument("mock rules: each rule must be an object");
        for (const auto& [key, _] : r.items()) {
            if (key != "keywords" && key != "target" && key != "confidence") {
                throw std::invalid_argument("mock rules: unknown key '" + key + "'");
            }
        }
        MockRule rule;
        try {
            rule.keywords = r.at("keywords").get<std::vector<std::string>>();
            const auto target = r.at("target").get<std::string>();
            rule.confidence = r.value("confidence", 0.9);
            if (target == "largest_obstacle") {
                rule.target = RuleTarget::largest_obstacle;
            } else if (target == "all_obstacles") {
                rule.target = RuleTarget::all_obstacles;
            } else if (feature_from_name(target)) {
                rule.feature = target;
            } else {
                throw std::invalid_argument("mock rules: unknown target '" + target + "'");
            }
        } catch (const json::exception& e) {
            throw std::invalid_argument(std::string("mock rules: ") + e.what());
        }
        if (rule.keywords.empty()) throw std::invalid_argument("mock rules: empty keyword list");
        if (!(rule.confidence >= 0.0 && rule.confidence <= 1.0)) {
            throw std::invalid_argument("mock rules: confidence outside [0, 1]");
        }
        rules.push_back(std::move(rule));
    }
    return rules;
}

std::vector<MockRule> load_mock_rules(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open mock rule file '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_mock_rules(ss.str());
}

MockBackend::MockBackend(std::vector<MockRule> rules, double cap_factor)
    : rules_(std::move(rules)), cap_factor_(cap_factor) {}

std::pair<std::vector<double>, std::vector<double>> MockBackend::evaluate(const LanguageContext& ctx) const {
    const std::size_t d = ctx.feature_names.size();
    std::vector<double> gate(d, 0.0);
    std::vector<double> conf(d, 0.0);
    const std::vector<std::string> words = words_of(ctx.utterance);
    auto select = [&](std::size_t i, double c) {
        gate[i] = 1.0;
        conf[i] = std::max(conf[i], c);
    };
    for (const MockRule& rule : rules_) {
        const bool hit = std::any_of(rule.keywords.begin(), rule.keywords.end(),
                                     [&](const std::string& k) { return contains_keyword(words, k); });
        if (!hit) continue;
        std::optional<std::size_t> best;
        for (std::size_t i = 0; i < d; ++i) {
            const auto f = feature_from_name(ctx.feature_names[i]);
            switch (rule.target) {
                case RuleTarget::feature:
                    if (ctx.feature_names[i] == rule.feature) select(i, rule.confidence);
                    break;
                case RuleTarget::all_obstacles:
                    if (f && is_obstacle_feature(*f)) select(i, rule.confidence);
                    break;
                case RuleTarget::largest_obstacle:
                    if (f && is_obstacle_feature(*f) &&
                        (!best || std::abs(shown(ctx.dphi[i])) > std::abs(shown(ctx.dphi[*best])))) {
                        best = i;
                    }
                    break;
            }
        }
        if (best) select(*best, rule.confidence);
    }
    return {gate, conf};
}

std::string MockBackend::respond(const LanguageRequest& request) {
    const LanguageContext& ctx = request.ctx;
    auto [gate, conf] = evaluate(ctx);
    if (request.stage == Stage::attention) {
        return dump_vectors("gate", gate);
    }
    std::vector<double> mu(gate.size(), 0.0);
    for (std::size_t i = 0; i < gate.size(); ++i) {
        if (i < request.gate.size() && request.gate[i] > 0.0) {
            const double change = shown(ctx.dphi[i]);
            mu[i] = change == 0.0 ? 0.0 : std::copysign(std::min(cap_factor_ * std::abs(change), kMaxAbsMu), change);
        } else {
            conf[i] = 0.0;
        }
    }
    return dump_vectors("mu", mu, "confidence", &conf);
}

OracleBackend::OracleBackend(std::vector<double> theta_star, double gate_threshold, double confidence)
    : theta_star_(std::move(theta_star)), gate_threshold_(gate_threshold), confidence_(confidence) {
    if (theta_star_.empty()) throw std::invalid_argument("oracle backend: ground-truth weights required");
    if (!(confidence_ >= 0.0 && confidence_ <= 1.0)) {
        throw std::invalid_argument("oracle backend: confidence outside [0, 1]");
    }
}

std::string OracleBackend::respond(const LanguageRequest& request) {
    std::vector<double> theta = request.ctx.theta_t;
    for (double& t : theta) t = shown(t);
    if (theta.size() != theta_star_.size()) {
        throw BackendError("oracle backend: context dimension does not match the ground truth");
    }
    const std::size_t d = theta.size();
    double largest = 0.0;
    for (std::size_t i = 0; i < d; ++i) largest = std::max(largest, std::abs(theta_star_[i] - theta[i]));
    std::vector<double> gate(d, 0.0);
    std::vector<double> mu(d, 0.0);
    std::vector<double> conf(d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        const double err = theta_star_[i] - theta[i];
        if (largest > 0.0 && std::abs(err) >= gate_threshold_ * largest) {
            gate[i] = 1.0;
            mu[i] = clamp_mu(err);
            conf[i] = confidence_;
        }
    }
    if (request.stage == Stage::attention) return dump_vectors("gate", gate);
    return dump_vectors("mu", mu, "confidence", &conf);
}

RemoteBackend::RemoteBackend(const BackendConfig& cfg) : model_(cfg.model_name), timeout_(cfg.timeout) {
    const std::string& url = cfg.base_url;
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw std::invalid_argument("remote backend: base_url needs a scheme: '" + url + "'");
    }
    const auto path_start = url.find('/', scheme_end + 3);
    scheme_host_ = url.substr(0, path_start);
    path_prefix_ = path_start == std::string::npos ? "" : url.substr(path_start);
    while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
    if (const char* key = std::getenv("QUICKLAP_API_KEY")) api_key_ = key;
    if (!(timeout_ > 0.0)) throw std::invalid_argument("remote backend: timeout must be positive");
}

std::string RemoteBackend::respond(const LanguageRequest& request) {
    const json body = {
        {"model", model_},
        {"temperature", request.temperature},
        {"response_format", {{"type", "json_object"}}},
        {"messages",
         json::array({{{"role", "system"}, {"content", request.prompt.system}},
                      {{"role", "user"}, {"content", request.prompt.user}}})},
    };
    httplib::Client client(scheme_host_);
    const auto secs = static_cast<time_t>(timeout_);
    const auto usecs = static_cast<time_t>((timeout_ - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
    auto res = client.Post(path_prefix_ + "/chat/completions", headers, body.dump(), "application/json");
    if (!res) {
        throw TransportError("request to " + scheme_host_ + " failed: " + httplib::to_string(res.error()));
    }
    if (res->status != 200) {
        throw TransportError("request to " + scheme_host_ + " returned HTTP " + std::to_string(res->status));
    }
    try {
        const json reply = json::parse(res->body);
        return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
        throw ParseError(ParseError::Kind::malformed, std::string("unexpected completion envelope: ") + e.what());
    }
}

ReplayBackend::ReplayBackend(const std::filesystem::path& cache_path) {
    for (CacheRecord& r : ResponseCache::load(cache_path)) {
        responses_[r.prompt_sha256] = std::move(r.response_text);
    }
}

std::string ReplayBackend::respond(const LanguageRequest& request) {
    const std::string key = prompt_sha256(request.prompt);
    const auto it = responses_.find(key);
    if (it == responses_.end()) {
        throw BackendError("replay cache has no response for prompt " + key);
    }
    return it->second;
}

std::unique_ptr<LanguageBackend> make_backend(const BackendConfig& cfg, double cap_factor,
                                              const std::vector<double>& theta_star) {
    switch (cfg.kind) {
        case BackendKind::mock:
            return std::make_unique<MockBackend>(
                cfg.rules_path.empty() ? default_mock_rules() : load_mock_rules(cfg.rules_path), cap_factor);
        case BackendKind::oracle:
            return std::make_unique<OracleBackend>(theta_star, cfg.oracle_gate_threshold, cfg.oracle_confidence);
        case BackendKind::remote:
            return std::make_unique<RemoteBackend>(cfg);
        case BackendKind::replay:
            if (cfg.cache_path.empty()) throw std::invalid_argument("replay backend needs backend.cache_path");
            return std::make_unique<ReplayBackend>(cfg.cache_path);
    }
    throw std::invalid_argument("unknown backend kind");
}

}  // namespace quicklap
