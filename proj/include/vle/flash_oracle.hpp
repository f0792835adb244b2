/**
 * @file flash_oracle.hpp
 * @brief Flash-backed observable evaluator for building surrogates of a binary
 *        mixture at fixed temperature.
 */
#pragma once

#include "vle/flash.hpp"
#include "vle/observables.hpp"
#include "vle/surrogate.hpp"
#include "vle/tie_line.hpp"

#include <optional>

namespace vle {

/// Computes the twelve observables of a binary at (p, z1).
/// Two-phase feeds are flashed directly. A single-phase feed is continued
/// along the tie line of the same pressure: z1 is moved just inside the
/// two-phase segment [x1, y1] and the node is flagged as extrapolated. No
/// two-phase state at that pressure is an oracle failure.
class FlashObservableOracle {
public:
    FlashObservableOracle(Components cs, double t, double k12 = 0.0, double eps = 1e-10)
        : cs_(std::move(cs)), t_(t), kij_(2), eps_(eps)
    {
        if (cs_.size() != 2)
            throw InputError("observable oracle needs a binary mixture");
        if (k12 != 0.0)
            kij_.set(0, 1, k12);
    }

    explicit FlashObservableOracle(const SurrogateDomain& d, double eps = 1e-10)
        : FlashObservableOracle(d.components, d.t, d.k12, eps)
    {}

    FlashInput input(double p, double z1) const
    {
        return FlashInput(cs_, {z1, 1.0 - z1}, t_, p, kij_);
    }

    /// Converged two-phase flash at (p, z1), or nullopt.
    std::optional<FlashResult> two_phase_flash(double p, double z1, std::span<const double> k0 = {}) const
    {
        return binary_two_phase_flash(cs_, kij_, t_, p, z1, eps_, k0);
    }

    std::optional<FlashResult> tie_line(double p) const { return find_tie_line(cs_, kij_, t_, p, eps_); }

    OracleSample operator()(double p, double z1) const
    {
        OracleSample out;
        try {
            std::optional<FlashResult> r = two_phase_flash(p, z1);
            double feed = z1;
            if (!r) {
                const auto tl = tie_line(p);
                if (!tl) {
                    out.ok = false;
                    return out;
                }
                const double lo = std::min(tl->x[0], tl->y[0]);
                const double hi = std::max(tl->x[0], tl->y[0]);
                // Just inside the segment so values stay continuous across the
                // phase boundary, with room for the finite-difference feeds.
                const double pad = std::max(1e-5, 1e-5 * (hi - lo));
                feed = std::clamp(z1, lo + pad, hi - pad);
                r = two_phase_flash(p, feed, tl->k);
                if (!r) {
                    out.ok = false;
                    return out;
                }
                out.extrapolated = true;
            }
            const auto o = derived_observables(*r, input(p, feed));
            const auto v = o.values();
            out.values.assign(v.begin(), v.end());
        } catch (const Error&) {
            out.ok = false;
        }
        return out;
    }

private:
    Components cs_;
    double t_;
    BinaryInteraction kij_;
    double eps_;
};

} // namespace vle
