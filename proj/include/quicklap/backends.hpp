#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "quicklap/language.hpp"
#include "quicklap/world.hpp"

namespace quicklap {

/// Where a mock rule points its gate.
enum class RuleTarget { feature, largest_obstacle, all_obstacles };

/// A keyword rule of the mock backend. Keywords are matched as whole words (a trailing
/// "s" or "es" is tolerated); multi-word keywords match consecutive words.
struct MockRule {
    std::vector<std::string> keywords;
    RuleTarget target = RuleTarget::feature;
    std::string feature;  // set when target == feature
    double confidence = 0.9;
};

/// The built-in rule table.
std::vector<MockRule> default_mock_rules();
/// Reads a rule table: {"rules": [{"keywords": [...], "target": "<feature name>" |
/// "largest_obstacle" | "all_obstacles", "confidence": c}, ...]}.
std::vector<MockRule> load_mock_rules(const std::filesystem::path& path);
std::vector<MockRule> parse_mock_rules(std::string_view json_text);

/// Deterministic keyword interpreter. Gated features get mu = sign(dphi) * min(cap * |dphi|, 6)
/// and the highest confidence among the rules that selected them; other features get 0.
/// Feature changes are read at the precision the prompt prints them.
class MockBackend : public LanguageBackend {
public:
    explicit MockBackend(std::vector<MockRule> rules = default_mock_rules(), double cap_factor = 5.0);

    std::string respond(const LanguageRequest& request) override;
    std::string model_label() const override { return "mock"; }

    /// Gate and per-feature confidence the rule table assigns to this context.
    std::pair<std::vector<double>, std::vector<double>> evaluate(const LanguageContext& ctx) const;

private:
    std::vector<MockRule> rules_;
    double cap_factor_;
};

/// A perfectly informed interpreter: gates features whose weight error is at least
/// `gate_threshold` times the largest error and reports mu = theta* - theta_t (clamped to
/// +-6) with a fixed confidence. theta_t is read at the precision the prompt prints it.
class OracleBackend : public LanguageBackend {
public:
    OracleBackend(std::vector<double> theta_star, double gate_threshold = 0.1, double confidence = 0.95);

    std::string respond(const LanguageRequest& request) override;
    std::string model_label() const override { return "oracle"; }

private:
    std::vector<double> theta_star_;
    double gate_threshold_;
    double confidence_;
};

/// OpenAI-compatible chat completions endpoint. The bearer token is read from
/// QUICKLAP_API_KEY at construction.
class RemoteBackend : public LanguageBackend {
public:
    explicit RemoteBackend(const BackendConfig& cfg);

    std::string respond(const LanguageRequest& request) override;
    std::string model_label() const override { return model_; }

private:
    std::string scheme_host_;
    std::string path_prefix_;
    std::string model_;
    std::string api_key_;
    double timeout_;
};

/// Answers from a recorded cache file, keyed by prompt hash; the last record of a hash wins.
/// A miss is a BackendError, never a network call.
class ReplayBackend : public LanguageBackend {
public:
    explicit ReplayBackend(const std::filesystem::path& cache_path);

    std::string respond(const LanguageRequest& request) override;
    std::string model_label() const override { return "replay"; }
    std::size_t size() const { return responses_.size(); }

private:
    std::unordered_map<std::string, std::string> responses_;
};

/// Builds the backend named by cfg.kind. The oracle backend needs the scenario's
/// ground-truth weights in `theta_star`.
std::unique_ptr<LanguageBackend> make_backend(const BackendConfig& cfg, double cap_factor = 5.0,
                                              const std::vector<double>& theta_star = {});

}  // namespace quicklap
