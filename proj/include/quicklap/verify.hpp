#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "quicklap/fusion.hpp"

namespace quicklap {

/// Signature of the fused update under test.
using FusedUpdate = std::function<PreferenceEstimate(const PreferenceEstimate&, std::span<const double>,
                                                     const LanguageSignal&, const Hyperparameters&)>;

struct VerifyReport {
    std::uint64_t seed = 0;
    std::size_t checks = 0;
    std::vector<std::string> failures;

    bool passed() const { return failures.empty(); }
};

/// Randomized checks of the fused update against the log-posterior it maximises, its
/// limit behaviour, the physical-only reductions, the trade-off curve and the NMSE
/// properties. `update` defaults to update_quicklap; pass another function to check it
/// instead. Each failed check is also written to `log` if given.
VerifyReport run_verification(std::uint64_t seed, const FusedUpdate& update = update_quicklap,
                              std::ostream* log = nullptr, std::size_t samples = 1000);

}  // namespace quicklap
