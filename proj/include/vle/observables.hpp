/**
 * @file observables.hpp
 * @brief The fourteen derived quantities of a binary flash:
 *        phase compositions, molar and mass densities, saturation, partial
 *        molar volumes, two-phase compressibility and phase-presence flags.
 */
#pragma once

#include "vle/flash.hpp"

#include <array>
#include <string_view>

namespace vle {

inline constexpr std::size_t observable_count = 12;

/// Labels of the continuous observables, in storage order. W is the liquid
/// (oil) phase, N the gas phase.
inline constexpr std::array<std::string_view, observable_count> observable_names{
    "xW1", "xW2", "xN1", "xN2", "xiW", "xiN", "densiW", "densiN", "sW", "v1", "v2", "Cf"};

struct Observables {
    double xW1 = 0.0;    ///< liquid mole fraction of component 1
    double xW2 = 0.0;
    double xN1 = 0.0;    ///< gas mole fraction of component 1
    double xN2 = 0.0;
    double xiW = 0.0;    ///< liquid molar density, mol/m^3
    double xiN = 0.0;    ///< gas molar density, mol/m^3
    double densiW = 0.0; ///< liquid mass density, kg/m^3
    double densiN = 0.0; ///< gas mass density, kg/m^3
    double sW = 0.0;     ///< volumetric liquid saturation
    double v1 = 0.0;     ///< partial molar volume of component 1, m^3/mol
    double v2 = 0.0;
    double Cf = 0.0;     ///< two-phase isothermal compressibility, 1/Pa
    bool liquid = false;
    bool gas = false;

    std::array<double, observable_count> values() const
    {
        return {xW1, xW2, xN1, xN2, xiW, xiN, densiW, densiN, sW, v1, v2, Cf};
    }
};

namespace detail {

/// Flash of a perturbed state started from known K-values, converged tightly.
inline FlashResult reflash(const FlashInput& in, std::span<const double> k_seed)
{
    auto r = newton_flash(in, k_seed, 1e-12, 50);
    if (r.converged)
        return r;
    r = ssm_flash(in, 1e-11, 5000, k_seed);
    if (!r.converged)
        throw NumericalError("perturbed flash for finite differences did not converge: " + r.message);
    return r;
}

/// Molar volume of the split (m^3 per mol of feed).
inline double split_volume(const FlashResult& r, double t, double p)
{
    const double rt_p = gas_constant * t / p;
    return (1.0 - r.beta.beta) * r.z_liq * rt_p + r.beta.beta * r.z_vap * rt_p;
}

/// Compressibility factor of a homogeneous phase: the lowest-Gibbs physical root.
inline double single_phase_z(const PengRobinson& eos, std::span<const double> comp, double p)
{
    const auto terms = eos.terms(comp, p);
    const auto roots = solve_cubic(terms.cap_a, terms.cap_b);
    const auto cands = candidate_roots(roots);
    double best = cands.front();
    if (cands.size() > 1 && phase_gibbs(comp, cands.back(), terms, p) < phase_gibbs(comp, best, terms, p))
        best = cands.back();
    return best;
}

/// Total volume of `moles` at (t, p). Two-phase states are re-flashed from
/// `k_seed`; single-phase states stay homogeneous.
inline double total_volume(const FlashInput& base, std::span<const double> moles, double p,
                           std::span<const double> k_seed, bool two_phase)
{
    double total = 0.0;
    for (double v : moles)
        total += v;
    FlashInput in = base;
    in.p = p;
    for (std::size_t i = 0; i < moles.size(); ++i)
        in.z[i] = moles[i] / total;
    if (!two_phase) {
        const PengRobinson eos(in.components, in.kij, in.t);
        return total * single_phase_z(eos, eos_composition(in.z), p) * gas_constant * in.t / p;
    }
    const auto r = reflash(in, k_seed);
    return total * split_volume(r, in.t, p);
}

} // namespace detail

/// Observables of a converged binary flash. Partial molar volumes and the
/// compressibility use central differences of the total volume, each perturbed
/// two-phase state being re-flashed. For a single-phase result the absent
/// phase is described by its incipient composition.
inline Observables derived_observables(const FlashResult& r, const FlashInput& in)
{
    if (!r.converged)
        throw InputError("observables need a converged flash result");
    if (in.components.size() != 2)
        throw InputError("observables are defined for binary mixtures");

    Observables o;
    o.xW1 = r.x[0];
    o.xW2 = r.x[1];
    o.xN1 = r.y[0];
    o.xN2 = r.y[1];

    const bool split = r.two_phase();
    const double rt = gas_constant * in.t;
    o.xiW = in.p / (r.z_liq * rt);
    o.xiN = in.p / (r.z_vap * rt);
    const double mw_liq = r.x[0] * molar_mass(in.components[0]) + r.x[1] * molar_mass(in.components[1]);
    const double mw_vap = r.y[0] * molar_mass(in.components[0]) + r.y[1] * molar_mass(in.components[1]);
    o.densiW = o.xiW * mw_liq;
    o.densiN = o.xiN * mw_vap;

    const double v_liq = (1.0 - r.beta.beta) / o.xiW;
    const double v_vap = r.beta.beta / o.xiN;
    o.sW = v_liq / (v_liq + v_vap);

    // One mole of feed.
    const std::vector<double> n0(in.z.begin(), in.z.end());
    std::array<double, 2> partial{};
    for (std::size_t i = 0; i < 2; ++i) {
        const double h = 1e-6;
        auto plus = n0;
        auto minus = n0;
        plus[i] += h;
        minus[i] -= h;
        if (minus[i] < 0.0)
            minus[i] = 0.0;
        const double span = plus[i] - minus[i];
        partial[i] = (detail::total_volume(in, plus, in.p, r.k, split) - detail::total_volume(in, minus, in.p, r.k, split)) / span;
    }
    o.v1 = partial[0];
    o.v2 = partial[1];

    const double dp = 1e-6 * in.p;
    const double v0 = detail::split_volume(r, in.t, in.p);
    const double vp = detail::total_volume(in, n0, in.p + dp, r.k, split);
    const double vm = detail::total_volume(in, n0, in.p - dp, r.k, split);
    o.Cf = -(vp - vm) / (2.0 * dp) / v0;

    o.liquid = r.state() != PhaseState::all_vapor;
    o.gas = r.state() != PhaseState::all_liquid;
    return o;
}

} // namespace vle
