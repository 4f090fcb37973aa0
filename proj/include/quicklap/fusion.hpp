#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace quicklap {

/// Reward-update hyperparameters. Defaults reproduce the published configuration.
struct Hyperparameters {
    double alpha = 1.0;          ///< base prior variance scale ("Base learning rate")
    double k = 1.2;              ///< language confidence scale
    double eps = 1e-4;           ///< floor on the gain denominator
    double eps_prior = 1e-6;     ///< keeps the prior precision finite at zero attention
    double eps_var = 1e-3;       ///< keeps the language variance finite at zero confidence
    double cap_factor = 5.0;     ///< |mu_i| <= cap_factor * |dPhi_i|
    double lambda_effort = 1.0;  ///< effort coefficient of the physical likelihood; constant in theta
    double beta_power = 2.0;     ///< carried for configuration fidelity, not used by any update
};

/// Throws std::invalid_argument unless every hyperparameter is strictly positive.
void validate(const Hyperparameters& hp);

struct PreferenceEstimate {
    std::vector<double> theta;
    std::size_t step_index = 0;
};

/// Output of the two language-model stages: attention gate r, shift mu, confidence m.
struct LanguageSignal {
    std::vector<double> gate;
    std::vector<double> mu;
    std::vector<double> confidence;
};

/// Throws std::invalid_argument if lengths differ from `d`, gate or confidence leave
/// [0, 1], or mu is not finite.
void validate(const LanguageSignal& sig, std::size_t d);

/// Lambda_prior = 1 / (alpha * (r + eps_prior)).
double prior_precision(double r, const Hyperparameters& hp);

/// sigma_L^2(m) = k^2 (1 - m)^2 / (eps_var + m)^2; zero at m = 1.
double language_variance(double m, const Hyperparameters& hp);

/// kappa = 1 / (Lambda * sigma^2 + 1), denominator floored at hp.eps.
double gain(double lambda_prior, double sigma_sq, const Hyperparameters& hp = {});

/// Weights on the physical and language terms of the update for one feature.
struct TradeoffWeights {
    double physical = 0.0;  ///< sigma^2 / (Lambda sigma^2 + 1)
    double language = 0.0;  ///< 1 / (Lambda sigma^2 + 1)
};
TradeoffWeights tradeoff_weights(double lambda_prior, double sigma_sq, const Hyperparameters& hp = {});

/// sign(mu_i) * min(|mu_i|, cap_factor * |dphi_i|).
std::vector<double> cap_mu(std::span<const double> mu, std::span<const double> dphi,
                           const Hyperparameters& hp);

/// Closed-form MAP update fusing the physical correction and the language signal:
///   theta_i' = theta_i + (sigma_i^2 dphi_i + mu_i^capped) / (Lambda_i sigma_i^2 + 1).
PreferenceEstimate update_quicklap(const PreferenceEstimate& est, std::span<const double> dphi,
                                   const LanguageSignal& sig, const Hyperparameters& hp);

/// Physical-only update with an isotropic prior: theta' = theta + alpha * dphi.
PreferenceEstimate update_phri(const PreferenceEstimate& est, std::span<const double> dphi,
                               const Hyperparameters& hp);

/// Attention-gated physical update: theta_i' = theta_i + alpha (r_i + eps_prior) dphi_i.
PreferenceEstimate update_masked(const PreferenceEstimate& est, std::span<const double> dphi,
                                 std::span<const double> gate, const Hyperparameters& hp);

/// The fused update with the physical term removed: theta_i' = theta_i + kappa_i mu_i^capped.
PreferenceEstimate update_language_only(const PreferenceEstimate& est, std::span<const double> dphi,
                                        const LanguageSignal& sig, const Hyperparameters& hp);

/// Log-posterior (up to theta-independent constants) whose maximiser is update_quicklap:
///   theta^T dphi - 1/2 sum Lambda_i (theta_i - theta_t_i)^2
///                - 1/2 sum (mu_i - (theta_i - theta_t_i))^2 / sigma_i^2.
/// `mu` is used as given (pass cap_mu output to match the update). Where sigma_i^2 == 0
/// the language term is a hard constraint theta_i == theta_t_i + mu_i: satisfied
/// contributes 0, violated yields -infinity.
double log_posterior(std::span<const double> theta, std::span<const double> theta_t,
                     std::span<const double> dphi, std::span<const double> gate,
                     std::span<const double> mu, std::span<const double> m,
                     const Hyperparameters& hp);

}  // namespace quicklap
