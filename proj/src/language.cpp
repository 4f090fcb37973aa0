#include "quicklap/language.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <sstream>

#include <openssl/evp.h>

#include <json.hpp>

namespace quicklap {

namespace {

using nlohmann::json;

constexpr std::string_view kAttentionSystem =
    "You are an expert in autonomous vehicle control analyzing driver interventions. In this task, "
    "a human driver has intervened to correct the behavior of a robot car and has provided an "
    "explanation of the intervention. Your task is to determine which features are relevant to a "
    "given intervention explanation, given the change in feature values of the human trajectory "
    "compared to the robot trajectory. Positive values mean that the human increased the feature "
    "value.\n"
    "\n"
    "Note that a feature may be irrelevant even if it has a large change in value. Only output "
    "features that are relevant to the intervention explanation.\n"
    "\n"
    "Output STRICT JSON with the single key 'gate': a list of attention gates scores (one per "
    "feature, 0.0 or 1.0). NO other keys.";

constexpr std::string_view kPreferenceSystem =
    "You are an expert in autonomous vehicle control analyzing driver interventions. In this task, "
    "a human driver has intervened to correct the behavior of a robot car and has provided an "
    "explanation of the intervention. Your reward function is the sum of the features. You want to "
    "maximize the reward function.\n"
    "\n"
    "Feature values are between 0 and 1. Look at the feature descriptions to understand the scale "
    "of the features. Your task is to determine for EACH feature how much in magnitude should the "
    "weight of the feature be changed to support the intervention and human preference (mu between "
    "0 and 6), and how confident you are in your decision (confidence between 0 and 1, be "
    "conservative), given the change in feature values of the human trajectory compared to the "
    "robot trajectory. Positive values mean that the human increased the feature value.\n"
    "\n"
    "FOR EVERY FEATURE, return ONLY the values in this exact format.\n"
    "\n"
    "OUTPUT (strict JSON, single line):\n"
    "{\n"
    "    'mu': [u1, u2, ... , uN],\n"
    "    'confidence': [c1, c2, ... , cN]\n"
    "}";

std::string format_fixed(const char* fmt, double value) {
    if (value == 0.0) {
        value = 0.0;  // drop the sign of negative zero
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, fmt, value);
    return buf;
}

std::string_view direction_word(double change) {
    if (change > 0.0) return "increased";
    if (change < 0.0) return "decreased";
    return "did not change";
}

void check_context(const LanguageContext& ctx) {
    if (ctx.utterance.empty()) {
        throw std::invalid_argument("language context: utterance is required");
    }
    const std::size_t d = ctx.feature_names.size();
    if (d == 0 || ctx.feature_descriptions.size() != d || ctx.dphi.size() != d ||
        ctx.theta_t.size() != d) {
        throw std::invalid_argument("language context: vectors must have one entry per feature");
    }
}

std::string feature_change_lines(const LanguageContext& ctx) {
    std::string out;
    for (std::size_t i = 0; i < ctx.feature_names.size(); ++i) {
        out += "- " + ctx.feature_names[i] + " (" + ctx.feature_descriptions[i] +
               "): feature change after intervention: " + format_fixed("%+.3f", ctx.dphi[i]) +
               ", the human " + std::string(direction_word(ctx.dphi[i])) + " this feature\n";
    }
    return out;
}

json parse_object(std::string_view raw) {
    json j;
    try {
        j = json::parse(raw);
    } catch (const json::parse_error& e) {
        throw ParseError(ParseError::Kind::malformed, std::string("response is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) {
        throw ParseError(ParseError::Kind::malformed, "response is not a JSON object");
    }
    return j;
}

void require_keys(const json& j, std::initializer_list<const char*> keys) {
    if (j.size() != keys.size()) {
        throw ParseError(ParseError::Kind::wrong_keys, "response has unexpected keys: " + j.dump());
    }
    for (const char* k : keys) {
        if (!j.contains(k)) {
            throw ParseError(ParseError::Kind::wrong_keys, std::string("response lacks key '") + k + "'");
        }
    }
}

std::vector<double> read_numbers(const json& j, const char* key, std::size_t d) {
    const json& arr = j.at(key);
    if (!arr.is_array()) {
        throw ParseError(ParseError::Kind::wrong_type, std::string("'") + key + "' is not a list");
    }
    if (arr.size() != d) {
        throw ParseError(ParseError::Kind::wrong_length,
                         std::string("'") + key + "' has " + std::to_string(arr.size()) +
                             " entries, expected " + std::to_string(d));
    }
    std::vector<double> out;
    out.reserve(d);
    for (const json& v : arr) {
        if (!v.is_number()) {
            throw ParseError(ParseError::Kind::wrong_type, std::string("'") + key + "' holds a non-number");
        }
        const double x = v.get<double>();
        if (!std::isfinite(x)) {
            throw ParseError(ParseError::Kind::out_of_range, std::string("'") + key + "' holds a non-finite value");
        }
        out.push_back(x);
    }
    return out;
}

void require_range(const std::vector<double>& values, double lo, double hi, const char* key) {
    for (double v : values) {
        if (v < lo || v > hi) {
            throw ParseError(ParseError::Kind::out_of_range,
                             std::string("'") + key + "' value " + std::to_string(v) + " outside [" +
                                 std::to_string(lo) + ", " + std::to_string(hi) + "]");
        }
    }
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

template <class Parse>
auto call_with_retries(LanguageBackend& backend, const LanguageRequest& request,
                       const BackendConfig& cfg, ResponseCache* cache, Parse parse) {
    const int attempts = 1 + std::max(0, cfg.max_retries);
    std::string last_error;
    for (int attempt = 0; attempt < attempts; ++attempt) {
        std::string raw;
        try {
            raw = backend.respond(request);
        } catch (const TransportError& e) {
            last_error = e.what();
            continue;
        }
        if (cache) {
            cache->append(CacheRecord{prompt_sha256(request.prompt), backend.model_label(),
                                      request.temperature, raw, utc_timestamp()});
        }
        try {
            return parse(raw);
        } catch (const ParseError& e) {
            last_error = e.what();
        }
    }
    const char* stage = request.stage == Stage::attention ? "attention" : "preference";
    throw BackendError(std::string(stage) + " model failed after " + std::to_string(attempts) +
                       " attempt(s): " + last_error);
}

}  // namespace

LanguageContext make_context(const World& w, std::string utterance, std::vector<double> dphi,
                             std::vector<double> theta_t) {
    LanguageContext ctx;
    ctx.utterance = std::move(utterance);
    ctx.dphi = std::move(dphi);
    ctx.theta_t = std::move(theta_t);
    ctx.environment_description = w.description;
    for (Feature f : w.active_features) {
        ctx.feature_names.emplace_back(feature_name(f));
        ctx.feature_descriptions.emplace_back(feature_description(f));
    }
    return ctx;
}

std::string_view backend_kind_name(BackendKind kind) {
    switch (kind) {
        case BackendKind::remote: return "remote";
        case BackendKind::mock: return "mock";
        case BackendKind::replay: return "replay";
        case BackendKind::oracle: return "oracle";
    }
    return "";
}

BackendKind backend_kind_from_name(std::string_view name) {
    for (BackendKind k : {BackendKind::remote, BackendKind::mock, BackendKind::replay, BackendKind::oracle}) {
        if (backend_kind_name(k) == name) {
            return k;
        }
    }
    throw std::invalid_argument("unknown backend kind '" + std::string(name) +
                                "' (expected remote, mock, replay or oracle)");
}

std::string_view attention_system_message() { return kAttentionSystem; }
std::string_view preference_system_message() { return kPreferenceSystem; }

PromptPair build_att_prompt(const LanguageContext& ctx) {
    check_context(ctx);
    std::string user = "Human Driver Intervention Explanation:\n" + ctx.utterance +
                       "\n\nCurrent Feature Values:\n" + feature_change_lines(ctx) +
                       "\nFor absolutely EVERY feature above, determine:\n"
                       "1. How relevant is this feature to the intervention? (gate score 0.0 or 1.0)";
    return {std::string(kAttentionSystem), std::move(user)};
}

PromptPair build_pref_prompt(const LanguageContext& ctx, std::span<const double> gate) {
    check_context(ctx);
    if (gate.size() != ctx.feature_names.size()) {
        throw std::invalid_argument("build_pref_prompt: gate length does not match the feature count");
    }
    std::string user = "Human Driver Intervention Explanation:\n" + ctx.utterance +
                       "\n\nCurrent Feature Values:\n" + feature_change_lines(ctx) +
                       "\nCurrent Reward Weights after a Physical Intervention Update:\n";
    for (std::size_t i = 0; i < ctx.feature_names.size(); ++i) {
        user += "- " + ctx.feature_names[i] + ": " + format_fixed("%.3f", ctx.theta_t[i]) + "\n";
    }
    user += "\nRelevant Features (attention gate):\n";
    for (std::size_t i = 0; i < ctx.feature_names.size(); ++i) {
        user += "- " + ctx.feature_names[i] + ": " + format_fixed("%.1f", gate[i]) + "\n";
    }
    user +=
        "\nNow, for absolutely EVERY feature (considering the explanation, feature changes, and "
        "current weights):\n"
        "1. What absolute change with direction (this will be your 'mu') would support this "
        "intervention? Consider the scale of the features, and the current weights.\n"
        "2. How confident are you in your decision? (confidence score 0.0-1.0)";
    return {std::string(kPreferenceSystem), std::move(user)};
}

std::vector<double> parse_att_response(std::string_view raw, std::size_t d) {
    const json j = parse_object(raw);
    require_keys(j, {"gate"});
    std::vector<double> gate = read_numbers(j, "gate", d);
    require_range(gate, 0.0, 1.0, "gate");
    return gate;
}

PreferenceResponse parse_pref_response(std::string_view raw, std::size_t d) {
    const json j = parse_object(raw);
    require_keys(j, {"mu", "confidence"});
    PreferenceResponse out{read_numbers(j, "mu", d), read_numbers(j, "confidence", d)};
    require_range(out.mu, -kMaxAbsMu, kMaxAbsMu, "mu");
    require_range(out.confidence, 0.0, 1.0, "confidence");
    return out;
}

std::string prompt_sha256(const PromptPair& prompt) {
    std::string payload = prompt.system;
    payload.push_back('\0');
    payload += prompt.user;
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(payload.data(), payload.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("sha256 digest failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

ResponseCache::ResponseCache(std::filesystem::path path) : path_(std::move(path)) {
    if (path_.has_parent_path()) {
        std::filesystem::create_directories(path_.parent_path());
    }
}

void ResponseCache::append(const CacheRecord& record) {
    const json line = {{"prompt_sha256", record.prompt_sha256},
                       {"model", record.model},
                       {"temperature", record.temperature},
                       {"response_text", record.response_text},
                       {"timestamp", record.timestamp}};
    std::lock_guard lock(mutex_);
    std::ofstream out(path_, std::ios::app);
    if (!out) {
        throw BackendError("cannot append to cache file '" + path_.string() + "'");
    }
    out << line.dump() << '\n';
}

std::vector<CacheRecord> ResponseCache::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw BackendError("cannot open cache file '" + path.string() + "'");
    }
    std::vector<CacheRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const json j = json::parse(line);
            records.push_back(CacheRecord{j.at("prompt_sha256").get<std::string>(),
                                          j.at("model").get<std::string>(),
                                          j.at("temperature").get<double>(),
                                          j.at("response_text").get<std::string>(),
                                          j.value("timestamp", std::string())});
        } catch (const json::exception& e) {
            throw BackendError("corrupt cache record at " + path.string() + ":" +
                               std::to_string(line_no) + ": " + e.what());
        }
    }
    return records;
}

LanguageSignal interpret(LanguageBackend& backend, const LanguageContext& ctx,
                         const BackendConfig& cfg, ResponseCache* cache) {
    const std::size_t d = ctx.feature_names.size();
    const PromptPair att = build_att_prompt(ctx);
    const LanguageRequest att_request{Stage::attention, att, cfg.temperature_att, ctx, {}};
    std::vector<double> gate = call_with_retries(
        backend, att_request, cfg, cache, [d](const std::string& raw) { return parse_att_response(raw, d); });

    const PromptPair pref = build_pref_prompt(ctx, gate);
    const LanguageRequest pref_request{Stage::preference, pref, cfg.temperature_pref, ctx, gate};
    PreferenceResponse p = call_with_retries(
        backend, pref_request, cfg, cache, [d](const std::string& raw) { return parse_pref_response(raw, d); });

    LanguageSignal sig{std::move(gate), std::move(p.mu), std::move(p.confidence)};
    validate(sig, d);
    return sig;
}

}  // namespace quicklap
