#include "quicklap/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace quicklap {

namespace {

void require_same_size(std::size_t expected, std::size_t got, const char* what) {
    if (expected != got) {
        throw std::invalid_argument(std::string(what) + ": dimension mismatch (expected " +
                                    std::to_string(expected) + ", got " + std::to_string(got) + ")");
    }
}

bool in_unit_interval(double v) { return v >= 0.0 && v <= 1.0; }

}  // namespace

void validate(const Hyperparameters& hp) {
    const double values[] = {hp.alpha, hp.k, hp.eps, hp.eps_prior, hp.eps_var,
                             hp.cap_factor, hp.lambda_effort, hp.beta_power};
    for (double v : values) {
        if (!(v > 0.0) || !std::isfinite(v)) {
            throw std::invalid_argument("hyperparameters must be finite and strictly positive");
        }
    }
}

void validate(const LanguageSignal& sig, std::size_t d) {
    require_same_size(d, sig.gate.size(), "language signal gate");
    require_same_size(d, sig.mu.size(), "language signal mu");
    require_same_size(d, sig.confidence.size(), "language signal confidence");
    for (std::size_t i = 0; i < d; ++i) {
        if (!in_unit_interval(sig.gate[i])) {
            throw std::invalid_argument("language signal: gate outside [0, 1]");
        }
        if (!in_unit_interval(sig.confidence[i])) {
            throw std::invalid_argument("language signal: confidence outside [0, 1]");
        }
        if (!std::isfinite(sig.mu[i])) {
            throw std::invalid_argument("language signal: mu is not finite");
        }
    }
}

double prior_precision(double r, const Hyperparameters& hp) {
    return 1.0 / (hp.alpha * (r + hp.eps_prior));
}

double language_variance(double m, const Hyperparameters& hp) {
    const double ratio = hp.k * (1.0 - m) / (hp.eps_var + m);
    return ratio * ratio;
}

double gain(double lambda_prior, double sigma_sq, const Hyperparameters& hp) {
    return 1.0 / std::max(lambda_prior * sigma_sq + 1.0, hp.eps);
}

TradeoffWeights tradeoff_weights(double lambda_prior, double sigma_sq, const Hyperparameters& hp) {
    const double kappa = gain(lambda_prior, sigma_sq, hp);
    return {kappa * sigma_sq, kappa};
}

std::vector<double> cap_mu(std::span<const double> mu, std::span<const double> dphi,
                           const Hyperparameters& hp) {
    require_same_size(mu.size(), dphi.size(), "cap_mu");
    std::vector<double> out(mu.size());
    for (std::size_t i = 0; i < mu.size(); ++i) {
        const double limit = hp.cap_factor * std::abs(dphi[i]);
        out[i] = std::copysign(std::min(std::abs(mu[i]), limit), mu[i]);
    }
    return out;
}

PreferenceEstimate update_quicklap(const PreferenceEstimate& est, std::span<const double> dphi,
                                   const LanguageSignal& sig, const Hyperparameters& hp) {
    const std::size_t d = est.theta.size();
    require_same_size(d, dphi.size(), "update_quicklap");
    validate(sig, d);
    const std::vector<double> mu = cap_mu(sig.mu, dphi, hp);
    PreferenceEstimate next{est.theta, est.step_index + 1};
    for (std::size_t i = 0; i < d; ++i) {
        const double lambda = prior_precision(sig.gate[i], hp);
        const double sigma_sq = language_variance(sig.confidence[i], hp);
        next.theta[i] += gain(lambda, sigma_sq, hp) * (sigma_sq * dphi[i] + mu[i]);
    }
    return next;
}

PreferenceEstimate update_phri(const PreferenceEstimate& est, std::span<const double> dphi,
                               const Hyperparameters& hp) {
    require_same_size(est.theta.size(), dphi.size(), "update_phri");
    PreferenceEstimate next{est.theta, est.step_index + 1};
    for (std::size_t i = 0; i < dphi.size(); ++i) {
        next.theta[i] += hp.alpha * dphi[i];
    }
    return next;
}

PreferenceEstimate update_masked(const PreferenceEstimate& est, std::span<const double> dphi,
                                 std::span<const double> gate, const Hyperparameters& hp) {
    const std::size_t d = est.theta.size();
    require_same_size(d, dphi.size(), "update_masked");
    require_same_size(d, gate.size(), "update_masked gate");
    PreferenceEstimate next{est.theta, est.step_index + 1};
    for (std::size_t i = 0; i < d; ++i) {
        if (!in_unit_interval(gate[i])) {
            throw std::invalid_argument("update_masked: gate outside [0, 1]");
        }
        next.theta[i] += dphi[i] / prior_precision(gate[i], hp);
    }
    return next;
}

PreferenceEstimate update_language_only(const PreferenceEstimate& est, std::span<const double> dphi,
                                        const LanguageSignal& sig, const Hyperparameters& hp) {
    const std::size_t d = est.theta.size();
    require_same_size(d, dphi.size(), "update_language_only");
    validate(sig, d);
    const std::vector<double> mu = cap_mu(sig.mu, dphi, hp);
    PreferenceEstimate next{est.theta, est.step_index + 1};
    for (std::size_t i = 0; i < d; ++i) {
        const double lambda = prior_precision(sig.gate[i], hp);
        const double sigma_sq = language_variance(sig.confidence[i], hp);
        next.theta[i] += gain(lambda, sigma_sq, hp) * mu[i];
    }
    return next;
}

double log_posterior(std::span<const double> theta, std::span<const double> theta_t,
                     std::span<const double> dphi, std::span<const double> gate,
                     std::span<const double> mu, std::span<const double> m,
                     const Hyperparameters& hp) {
    const std::size_t d = theta.size();
    require_same_size(d, theta_t.size(), "log_posterior theta_t");
    require_same_size(d, dphi.size(), "log_posterior dphi");
    require_same_size(d, gate.size(), "log_posterior gate");
    require_same_size(d, mu.size(), "log_posterior mu");
    require_same_size(d, m.size(), "log_posterior m");
    double total = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        const double shift = theta[i] - theta_t[i];
        total += theta[i] * dphi[i];
        total -= 0.5 * prior_precision(gate[i], hp) * shift * shift;
        const double sigma_sq = language_variance(m[i], hp);
        const double residual = mu[i] - shift;
        if (sigma_sq == 0.0) {
            if (residual != 0.0) {
                return -std::numeric_limits<double>::infinity();
            }
        } else {
            total -= 0.5 * residual * residual / sigma_sq;
        }
    }
    return total;
}

}  // namespace quicklap
