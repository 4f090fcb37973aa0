#pragma once

#include <filesystem>
#include <fstream>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "quicklap/fusion.hpp"
#include "quicklap/world.hpp"

namespace quicklap {

/// Everything the language models see about one intervention.
struct LanguageContext {
    std::string utterance;
    std::vector<double> dphi;
    std::vector<double> theta_t;
    std::string environment_description;
    std::vector<std::string> feature_names;
    std::vector<std::string> feature_descriptions;
};

LanguageContext make_context(const World& w, std::string utterance, std::vector<double> dphi,
                             std::vector<double> theta_t);

struct PromptPair {
    std::string system;
    std::string user;
};

enum class Stage { attention, preference };

enum class BackendKind { remote, mock, replay, oracle };

std::string_view backend_kind_name(BackendKind kind);
/// Throws std::invalid_argument for unknown names.
BackendKind backend_kind_from_name(std::string_view name);

struct BackendConfig {
    BackendKind kind = BackendKind::mock;
    std::string model_name = "gpt-4o";
    double temperature_att = 0.1;
    double temperature_pref = 0.3;
    std::string base_url = "https://api.openai.com/v1";
    double timeout = 30.0;  // seconds per request
    int max_retries = 3;
    std::string cache_path;   // empty: no recording
    std::string rules_path;   // mock rule table; empty: built-in table
    double oracle_gate_threshold = 0.1;
    double oracle_confidence = 0.95;
};

/// Malformed or out-of-contract model output.
class ParseError : public std::runtime_error {
public:
    enum class Kind { malformed, wrong_keys, wrong_type, wrong_length, out_of_range };
    ParseError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

/// Network or HTTP-level failure; retryable.
class TransportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-recoverable backend failure (retries exhausted, replay miss, bad setup).
class BackendError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// System message of the attention model, verbatim.
std::string_view attention_system_message();
/// System message of the preference model, verbatim.
std::string_view preference_system_message();

/// Throws std::invalid_argument for an empty utterance or inconsistent vector lengths.
PromptPair build_att_prompt(const LanguageContext& ctx);
PromptPair build_pref_prompt(const LanguageContext& ctx, std::span<const double> gate);

/// Strict JSON with exactly the key "gate": d numbers in [0, 1].
std::vector<double> parse_att_response(std::string_view raw, std::size_t d);

struct PreferenceResponse {
    std::vector<double> mu;
    std::vector<double> confidence;
};
/// Strict JSON with exactly the keys "mu" (|mu| <= 6) and "confidence" (in [0, 1]).
PreferenceResponse parse_pref_response(std::string_view raw, std::size_t d);

inline constexpr double kMaxAbsMu = 6.0;

/// Lower-case hex SHA-256 of the prompt (system, NUL, user).
std::string prompt_sha256(const PromptPair& prompt);

struct CacheRecord {
    std::string prompt_sha256;
    std::string model;
    double temperature = 0.0;
    std::string response_text;
    std::string timestamp;
};

/// Append-only JSON-lines log of model exchanges, safe to share between threads.
class ResponseCache {
public:
    explicit ResponseCache(std::filesystem::path path);

    void append(const CacheRecord& record);
    const std::filesystem::path& path() const { return path_; }

    /// Reads every record of a cache file. Throws BackendError on unreadable or corrupt files.
    static std::vector<CacheRecord> load(const std::filesystem::path& path);

private:
    std::filesystem::path path_;
    std::mutex mutex_;
};

struct LanguageRequest {
    Stage stage;
    const PromptPair& prompt;
    double temperature;
    const LanguageContext& ctx;
    std::span<const double> gate;  // set for the preference stage
};

/// One language model endpoint. Implementations must be callable concurrently.
class LanguageBackend {
public:
    virtual ~LanguageBackend() = default;
    /// Returns the raw response text. Throws TransportError for retryable failures.
    virtual std::string respond(const LanguageRequest& request) = 0;
    /// Model label written to cache records.
    virtual std::string model_label() const = 0;
};

/// Attention stage then preference stage, each validated and retried on transport or
/// parse failure with the identical prompt; every response is appended to `cache`.
/// Throws BackendError when retries are exhausted.
LanguageSignal interpret(LanguageBackend& backend, const LanguageContext& ctx,
                         const BackendConfig& cfg, ResponseCache* cache = nullptr);

}  // namespace quicklap
