/**
 * @file tie_line.hpp
 * @brief Locating the two-phase tie line of a binary at fixed (T, p).
 */
#pragma once

#include "vle/flash.hpp"

#include <optional>

namespace vle {

/// Feed z1 whose Wilson K-values give an even split, or nullopt when Wilson
/// predicts no split for any feed.
inline std::optional<double> wilson_midpoint(const Components& cs, double t, double p)
{
    const auto k = wilson_k_values(cs, t, p);
    if (k.size() != 2 || (k[0] - 1.0) * (k[1] - 1.0) >= 0.0)
        return std::nullopt;
    const double x1 = (1.0 - k[1]) / (k[0] - k[1]);
    const double y1 = k[0] * x1;
    const double mid = 0.5 * (x1 + y1);
    if (!(mid > 0.0 && mid < 1.0))
        return std::nullopt;
    return mid;
}

/// Converged two-phase SSM flash of a binary at (t, p, z1), or nullopt.
inline std::optional<FlashResult> binary_two_phase_flash(const Components& cs, const BinaryInteraction& kij, double t,
                                                         double p, double z1, double eps,
                                                         std::span<const double> k0 = {})
{
    if (!(z1 > 0.0 && z1 < 1.0))
        return std::nullopt;
    auto r = ssm_flash(FlashInput(cs, {z1, 1.0 - z1}, t, p, kij), eps, 5000, k0);
    if (r.converged && r.two_phase())
        return r;
    return std::nullopt;
}

/// Any two-phase flash of a binary at (t, p). The phase compositions of a
/// binary do not depend on the feed inside the two-phase region, so the first
/// feed that splits fixes the tie line. Feeds tried: the Wilson midpoint,
/// 0.5, then a 0.05 and a 0.01 sweep.
inline std::optional<FlashResult> find_tie_line(const Components& cs, const BinaryInteraction& kij, double t, double p,
                                                double eps = 1e-10)
{
    if (cs.size() != 2)
        throw InputError("tie-line search needs a binary mixture");
    std::vector<double> feeds;
    if (const auto mid = wilson_midpoint(cs, t, p))
        feeds.push_back(*mid);
    feeds.push_back(0.5);
    for (int i = 1; i < 20; ++i)
        feeds.push_back(0.05 * i);
    for (int i = 1; i < 100; ++i)
        feeds.push_back(0.01 * i);
    for (double z1 : feeds)
        if (auto r = binary_two_phase_flash(cs, kij, t, p, z1, eps))
            return r;
    return std::nullopt;
}

} // namespace vle
