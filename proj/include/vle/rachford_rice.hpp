/**
 * @file rachford_rice.hpp
 * @brief Vapor fraction from K-values and feed, and the resulting phase
 *        compositions.
 */
#pragma once

#include "vle/error.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

namespace vle {

enum class PhaseState { two_phase, all_liquid, all_vapor };

inline const char* to_string(PhaseState s)
{
    switch (s) {
    case PhaseState::two_phase: return "two_phase";
    case PhaseState::all_liquid: return "all_liquid";
    case PhaseState::all_vapor: return "all_vapor";
    }
    return "?";
}

struct VaporFraction {
    double beta = 0.0;
    PhaseState state = PhaseState::all_liquid;
    int iterations = 0;
};

namespace detail {

inline void check_k_values(std::span<const double> k, std::span<const double> z)
{
    if (k.size() != z.size() || k.empty())
        throw InputError("K-values and feed must have the same non-zero length");
    for (double v : k)
        if (!(v > 0.0) || !std::isfinite(v))
            throw InputError("K-values must be positive and finite");
}

} // namespace detail

/// sum_i (K_i - 1) z_i / (1 + beta (K_i - 1))
inline double rr_residual(std::span<const double> k, std::span<const double> z, double beta)
{
    detail::check_k_values(k, z);
    double r = 0.0;
    for (std::size_t i = 0; i < k.size(); ++i) {
        const double d = 1.0 + beta * (k[i] - 1.0);
        if (d == 0.0 && z[i] != 0.0 && k[i] != 1.0)
            throw DomainError("Rachford-Rice pole hit");
        if (k[i] != 1.0 && z[i] != 0.0)
            r += (k[i] - 1.0) * z[i] / d;
    }
    return r;
}

/// Solves for beta in [0, 1]. Feeds outside the two-phase window
/// (sum z K <= 1 or sum z / K <= 1) are reported as single phase.
inline VaporFraction solve_beta(std::span<const double> k, std::span<const double> z,
                                double tol = 1e-12, int max_iter = 200)
{
    detail::check_k_values(k, z);
    if (std::all_of(k.begin(), k.end(), [](double v) { return v == 1.0; }))
        throw InputError("degenerate feed: all K-values equal one");

    double szk = 0.0;
    double szk_inv = 0.0;
    double k_min = k[0];
    double k_max = k[0];
    for (std::size_t i = 0; i < k.size(); ++i) {
        szk += z[i] * k[i];
        szk_inv += z[i] / k[i];
        if (z[i] > 0.0) {
            k_min = std::min(k_min, k[i]);
            k_max = std::max(k_max, k[i]);
        }
    }
    if (szk <= 1.0)
        return {0.0, PhaseState::all_liquid, 0};
    if (szk_inv <= 1.0)
        return {1.0, PhaseState::all_vapor, 0};

    // Poles at 1/(1 - K_max) < 0 and 1/(1 - K_min) > 1 bound the root.
    double lo = std::max(0.0, k_max > 1.0 ? 1.0 / (1.0 - k_max) : 0.0);
    double hi = std::min(1.0, k_min < 1.0 ? 1.0 / (1.0 - k_min) : 1.0);

    auto eval = [&](double beta, double& deriv) {
        double r = 0.0;
        deriv = 0.0;
        for (std::size_t i = 0; i < k.size(); ++i) {
            const double km1 = k[i] - 1.0;
            const double d = 1.0 + beta * km1;
            r += km1 * z[i] / d;
            deriv -= km1 * km1 * z[i] / (d * d);
        }
        return r;
    };

    double beta = 0.5 * (lo + hi);
    int it = 0;
    for (; it < max_iter; ++it) {
        double deriv = 0.0;
        const double r = eval(beta, deriv);
        if (std::abs(r) < tol)
            break;
        // residual decreases in beta
        if (r > 0.0)
            lo = beta;
        else
            hi = beta;
        double next = beta - r / deriv;
        if (!(next > lo && next < hi) || !std::isfinite(next))
            next = 0.5 * (lo + hi);
        if (next == beta)
            break;
        beta = next;
    }
    beta = std::clamp(beta, 0.0, 1.0);
    return {beta, PhaseState::two_phase, it + 1};
}

struct PhaseCompositions {
    std::vector<double> x;
    std::vector<double> y;
};

/// x_i = z_i / (1 + beta (K_i - 1)), y_i = K_i x_i. For a single-phase state the
/// absent phase gets the normalized incipient composition.
inline PhaseCompositions phase_compositions(std::span<const double> k, std::span<const double> z,
                                            const VaporFraction& vf)
{
    detail::check_k_values(k, z);
    const std::size_t n = k.size();
    PhaseCompositions out{std::vector<double>(n), std::vector<double>(n)};
    switch (vf.state) {
    case PhaseState::two_phase:
        for (std::size_t i = 0; i < n; ++i) {
            out.x[i] = z[i] / (1.0 + vf.beta * (k[i] - 1.0));
            out.y[i] = k[i] * out.x[i];
        }
        break;
    case PhaseState::all_liquid: {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            out.x[i] = z[i];
            out.y[i] = k[i] * z[i];
            s += out.y[i];
        }
        for (auto& v : out.y)
            v /= s;
        break;
    }
    case PhaseState::all_vapor: {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            out.y[i] = z[i];
            out.x[i] = z[i] / k[i];
            s += out.x[i];
        }
        for (auto& v : out.x)
            v /= s;
        break;
    }
    }
    return out;
}

} // namespace vle
