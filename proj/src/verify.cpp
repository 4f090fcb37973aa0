#include "quicklap/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <random>

#include "quicklap/experiment.hpp"

namespace quicklap {

namespace {

struct Tuple {
    std::vector<double> theta;
    std::vector<double> dphi;
    LanguageSignal sig;
};

class Checker {
public:
    Checker(VerifyReport& report, std::ostream* log) : report_(report), log_(log) {}

    void expect(bool ok, const std::string& what) {
        ++report_.checks;
        if (!ok) {
            report_.failures.push_back(what);
            if (log_) *log_ << "FAIL " << what << "\n";
        }
    }

private:
    VerifyReport& report_;
    std::ostream* log_;
};

std::string fmt(const char* format, double a, double b = 0.0) {
    char buf[160];
    std::snprintf(buf, sizeof buf, format, a, b);
    return buf;
}

Tuple random_tuple(std::mt19937_64& rng, double m_max = 0.99) {
    std::uniform_int_distribution<int> dim(1, 6);
    std::uniform_real_distribution<double> theta(-5.0, 5.0), dphi(-2.0, 2.0), mu(-6.0, 6.0), m(0.0, m_max),
        unit(0.0, 1.0);
    std::uniform_int_distribution<int> gate_kind(0, 2);
    const auto d = static_cast<std::size_t>(dim(rng));
    Tuple t;
    for (std::size_t i = 0; i < d; ++i) {
        t.theta.push_back(theta(rng));
        t.dphi.push_back(dphi(rng));
        const int g = gate_kind(rng);
        t.sig.gate.push_back(g == 0 ? 0.0 : g == 1 ? 1.0 : unit(rng));
        t.sig.mu.push_back(mu(rng));
        t.sig.confidence.push_back(m(rng));
    }
    return t;
}

double inf_norm(const std::vector<double>& v) {
    double n = 0.0;
    for (double x : v) n = std::max(n, std::abs(x));
    return n;
}

std::vector<double> fd_gradient(const Tuple& t, const std::vector<double>& mu_cap, std::vector<double> at,
                                const Hyperparameters& hp) {
    const double h = 1e-5;
    std::vector<double> grad(at.size());
    for (std::size_t i = 0; i < at.size(); ++i) {
        const double x = at[i];
        at[i] = x + h;
        const double up = log_posterior(at, t.theta, t.dphi, t.sig.gate, mu_cap, t.sig.confidence, hp);
        at[i] = x - h;
        const double down = log_posterior(at, t.theta, t.dphi, t.sig.gate, mu_cap, t.sig.confidence, hp);
        at[i] = x;
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

void check_optimality(Checker& c, std::mt19937_64& rng, const FusedUpdate& update, std::size_t samples) {
    const Hyperparameters hp;
    for (std::size_t n = 0; n < samples; ++n) {
        const Tuple t = random_tuple(rng);
        const std::vector<double> mu_cap = cap_mu(t.sig.mu, t.dphi, hp);
        const std::vector<double> next = update({t.theta, 0}, t.dphi, t.sig, hp).theta;
        const double scale = 1.0 + inf_norm(fd_gradient(t, mu_cap, t.theta, hp));
        const double g = inf_norm(fd_gradient(t, mu_cap, next, hp));
        c.expect(g <= 1e-6 * scale, fmt("optimality: gradient norm %.3e exceeds %.3e", g, 1e-6 * scale));

        const double best = log_posterior(next, t.theta, t.dphi, t.sig.gate, mu_cap, t.sig.confidence, hp);
        const double tol = 1e-12 * (1.0 + std::abs(best));
        bool improved = false;
        std::vector<double> probe = next;
        for (std::size_t i = 0; i < probe.size() && !improved; ++i) {
            for (int k = -50; k <= 50 && !improved; ++k) {
                if (k == 0) continue;
                probe[i] = next[i] + 1e-4 * k;
                const double v = log_posterior(probe, t.theta, t.dphi, t.sig.gate, mu_cap, t.sig.confidence, hp);
                improved = v > best + tol;
            }
            probe[i] = next[i];
        }
        c.expect(!improved, "optimality: grid search found a better point");
    }
}

void check_limits(Checker& c, std::mt19937_64& rng, const FusedUpdate& update) {
    const Hyperparameters hp;
    for (int n = 0; n < 200; ++n) {
        Tuple t = random_tuple(rng);
        const std::size_t d = t.theta.size();
        const std::vector<double> mu_cap = cap_mu(t.sig.mu, t.dphi, hp);

        LanguageSignal trusted{std::vector<double>(d, 1.0), t.sig.mu, std::vector<double>(d, 1.0)};
        const auto exact = update({t.theta, 0}, t.dphi, trusted, hp).theta;
        for (std::size_t i = 0; i < d; ++i) {
            c.expect(exact[i] == t.theta[i] + mu_cap[i], "limit m=1, r=1: update is not theta + capped mu");
        }

        LanguageSignal silent{std::vector<double>(d, 1.0), t.sig.mu, std::vector<double>(d, 0.0)};
        const auto physical = update({t.theta, 0}, t.dphi, silent, hp).theta;
        for (std::size_t i = 0; i < d; ++i) {
            const double err = std::abs(physical[i] - (t.theta[i] + hp.alpha * t.dphi[i]));
            c.expect(err <= 1e-3 * std::abs(t.dphi[i]), fmt("limit m=0, r=1: deviation %.3e from the physical update", err));
        }

        // With r=0 the bound holds for a non-confident signal; confident language still moves theta.
        LanguageSignal ignored{std::vector<double>(d, 0.0), t.sig.mu, std::vector<double>(d, 0.0)};
        const auto frozen = update({t.theta, 0}, t.dphi, ignored, hp).theta;
        for (std::size_t i = 0; i < d; ++i) {
            const double bound = hp.alpha * hp.eps_prior * (std::abs(t.dphi[i]) + hp.cap_factor * std::abs(t.dphi[i]));
            const double moved = std::abs(frozen[i] - t.theta[i]);
            c.expect(moved <= bound * (1.0 + 1e-9) + 1e-15, fmt("limit r=0: moved %.3e beyond %.3e", moved, bound));
        }

        const auto phri = update_phri({t.theta, 0}, t.dphi, hp).theta;
        const auto masked = update_masked({t.theta, 0}, t.dphi, std::vector<double>(d, 1.0), hp).theta;
        for (std::size_t i = 0; i < d; ++i) {
            c.expect(std::abs(physical[i] - phri[i]) <= 1e-3 * std::abs(t.dphi[i]),
                     "reduction: fused update with r=1, m=0 departs from the physical-only update");
            const double step_m = masked[i] - t.theta[i];
            const double step_p = phri[i] - t.theta[i];
            c.expect(std::abs(step_m - step_p) <= hp.eps_prior * std::abs(step_p) * (1.0 + 1e-9) + 1e-15,
                     "reduction: all-ones masked update departs from the physical-only update");
        }
    }
}

void check_tradeoff(Checker& c) {
    Hyperparameters hp;
    hp.k = 1.0;
    double prev_phys = std::numeric_limits<double>::infinity();
    double prev_lang = -std::numeric_limits<double>::infinity();
    for (int i = 0; i <= 100; ++i) {
        const double m = i / 100.0;
        const TradeoffWeights w = tradeoff_weights(1.0, language_variance(m, hp), hp);
        c.expect(w.physical <= prev_phys, fmt("trade-off: physical weight increases at m=%.2f", m));
        c.expect(w.language >= prev_lang, fmt("trade-off: language weight decreases at m=%.2f", m));
        c.expect(w.language > 0.0 && w.language <= 1.0, fmt("trade-off: language weight %.3e outside (0, 1]", w.language));
        prev_phys = w.physical;
        prev_lang = w.language;
        if (i == 100) c.expect(w.language == 1.0, "trade-off: language weight at m=1 is not 1");
    }
}

void check_nmse(Checker& c, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> val(-5.0, 5.0), scale(0.01, 100.0);
    std::uniform_int_distribution<int> dim(1, 6);
    c.expect(nmse(std::vector<double>{1.0, 0.0}, std::vector<double>{0.0, 1.0}) == 1.0, "nmse: orthogonal pair is not 1");
    for (int n = 0; n < 200; ++n) {
        const auto d = static_cast<std::size_t>(dim(rng));
        std::vector<double> a(d), b(d);
        for (auto& x : a) x = val(rng);
        for (auto& x : b) x = val(rng);
        const double base = nmse(a, b);
        c.expect(base >= 0.0 && base <= 4.0 / static_cast<double>(d) + 1e-12, "nmse: value outside [0, 4/d]");
        c.expect(nmse(a, a) <= 1e-15, "nmse: identical vectors give a nonzero error");
        std::vector<double> scaled = a;
        const double s = scale(rng);
        for (auto& x : scaled) x *= s;
        c.expect(std::abs(nmse(scaled, b) - base) <= 1e-12, "nmse: not invariant to positive rescaling");
    }
    bool threw = false;
    try {
        nmse(std::vector<double>{0.0, 0.0}, std::vector<double>{1.0, 0.0});
    } catch (const std::invalid_argument&) {
        threw = true;
    }
    c.expect(threw, "nmse: zero vector accepted");
}

}  // namespace

VerifyReport run_verification(std::uint64_t seed, const FusedUpdate& update, std::ostream* log, std::size_t samples) {
    VerifyReport report;
    report.seed = seed;
    Checker c(report, log);
    std::mt19937_64 rng(seed);
    check_optimality(c, rng, update, samples);
    check_limits(c, rng, update);
    check_tradeoff(c);
    check_nmse(c, rng);
    return report;
}

}  // namespace quicklap
