/**
 * @file flash.hpp
 * @brief Isothermal-isobaric two-phase flash: successive substitution and
 *        Newton's method on (ln K, beta).
 */
#pragma once

#include "vle/component.hpp"
#include "vle/eos.hpp"
#include "vle/error.hpp"
#include "vle/rachford_rice.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace vle {

struct FlashInput {
    Components components;
    std::vector<double> z;
    double t = 0.0; ///< K
    double p = 0.0; ///< Pa
    BinaryInteraction kij{2};

    FlashInput() = default;
    FlashInput(Components cs, std::vector<double> feed, double temperature, double pressure)
        : components(std::move(cs)), z(std::move(feed)), t(temperature), p(pressure),
          kij(components.size())
    {}
    FlashInput(Components cs, std::vector<double> feed, double temperature, double pressure,
               BinaryInteraction k)
        : components(std::move(cs)), z(std::move(feed)), t(temperature), p(pressure), kij(std::move(k))
    {}

    void validate() const
    {
        if (components.size() < 2)
            throw InputError("flash needs at least two components");
        if (kij.size() != components.size())
            throw InputError("binary interaction matrix size does not match component count");
        if (!(t > 0.0) || !std::isfinite(t))
            throw InputError("temperature must be positive");
        if (!(p > 0.0) || !std::isfinite(p))
            throw InputError("pressure must be positive");
        detail::check_composition(z, components.size());
    }
};

enum class FlashMethod { ssm, newton };

inline const char* to_string(FlashMethod m) { return m == FlashMethod::ssm ? "ssm" : "newton"; }

struct FlashResult {
    std::vector<double> k;
    VaporFraction beta;
    std::vector<double> x;
    std::vector<double> y;
    double z_liq = 0.0;
    double z_vap = 0.0;
    int iterations = 0;
    bool converged = false;
    FlashMethod method = FlashMethod::ssm;
    /// Largest |f_i^V / f_i^L - 1| at the stored state.
    double residual = std::numeric_limits<double>::infinity();
    /// Diagnostic for non-converged or failed runs; empty otherwise.
    std::string message;

    PhaseState state() const { return beta.state; }
    bool two_phase() const { return beta.state == PhaseState::two_phase; }
};

/// Wilson correlation for the initial K-value.
inline double wilson_k(const Component& c, double t, double p)
{
    if (!(t > 0.0) || !(p > 0.0))
        throw DomainError("temperature and pressure must be positive");
    return c.pc() / p * std::exp(5.37 * (1.0 + c.omega()) * (1.0 - c.tc() / t));
}

inline std::vector<double> wilson_k_values(const Components& cs, double t, double p)
{
    std::vector<double> k;
    k.reserve(cs.size());
    for (const auto& c : cs)
        k.push_back(wilson_k(c, t, p));
    return k;
}

/// Raised when no compressibility root can be paired; carries the inputs.
class RootFailure : public NumericalError {
public:
    RootFailure(const std::string& what, std::vector<double> x, std::vector<double> y, double p)
        : NumericalError(what), liquid(std::move(x)), vapor(std::move(y)), pressure(p)
    {}
    std::vector<double> liquid;
    std::vector<double> vapor;
    double pressure;
};

/// What the root pairing needs besides the roots themselves.
struct PairingContext {
    std::span<const double> x;
    std::span<const double> y;
    const EosTerms& liquid;
    const EosTerms& vapor;
    double p;
    double beta;
};

struct RootPair {
    double z_liq;
    double z_vap;
};

namespace detail {

/// Smallest and largest physical roots; the middle root of three is unstable.
inline std::vector<double> candidate_roots(const CubicRoots& r)
{
    if (r.physical.empty())
        return {};
    if (r.physical.size() == 1)
        return {r.physical.front()};
    return {r.physical.front(), r.physical.back()};
}

} // namespace detail

/// Chooses (Z^L, Z^V) minimizing the total Gibbs energy of the split.
/// Ties (e.g. a phase with zero amount) fall back to the unweighted sum of
/// phase Gibbs energies, then to the smaller liquid root.
inline RootPair pair_roots(const CubicRoots& liq_roots, const CubicRoots& vap_roots, const PairingContext& ctx)
{
    const auto zl = detail::candidate_roots(liq_roots);
    const auto zv = detail::candidate_roots(vap_roots);
    if (zl.empty() || zv.empty())
        throw RootFailure("no physical compressibility root to pair",
                          {ctx.x.begin(), ctx.x.end()}, {ctx.y.begin(), ctx.y.end()}, ctx.p);
    if (zl.size() == 1 && zv.size() == 1)
        return {zl[0], zv[0]};

    const double w_liq = 1.0 - ctx.beta;
    const double w_vap = ctx.beta;
    std::vector<double> gl;
    std::vector<double> gv;
    for (double z : zl)
        gl.push_back(phase_gibbs(ctx.x, z, ctx.liquid, ctx.p));
    for (double z : zv)
        gv.push_back(phase_gibbs(ctx.y, z, ctx.vapor, ctx.p));

    RootPair best{zl[0], zv[0]};
    double best_g = std::numeric_limits<double>::infinity();
    double best_sum = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < zl.size(); ++i)
        for (std::size_t j = 0; j < zv.size(); ++j) {
            const double g = w_liq * gl[i] + w_vap * gv[j];
            const double sum = gl[i] + gv[j];
            const double tie = 1e-14 * std::max(1.0, std::abs(g));
            const bool better = g < best_g - tie ||
                                (std::abs(g - best_g) <= tie && sum < best_sum - 1e-14 * std::max(1.0, std::abs(sum)));
            if (better) {
                best = {zl[i], zv[j]};
                best_g = g;
                best_sum = sum;
            }
        }
    return best;
}

/// Both phases of a split evaluated with the equation of state.
struct PhaseEvaluation {
    EosTerms liquid;
    EosTerms vapor;
    RootPair roots;
    std::vector<double> ln_phi_liq;
    std::vector<double> ln_phi_vap;
};

inline PhaseEvaluation evaluate_phases(const PengRobinson& eos, std::span<const double> x,
                                       std::span<const double> y, double p, double beta)
{
    PhaseEvaluation ev{eos.terms(x, p), eos.terms(y, p), {}, {}, {}};
    const auto rl = solve_cubic(ev.liquid.cap_a, ev.liquid.cap_b);
    const auto rv = solve_cubic(ev.vapor.cap_a, ev.vapor.cap_b);
    ev.roots = pair_roots(rl, rv, {x, y, ev.liquid, ev.vapor, p, beta});
    ev.ln_phi_liq = ln_fugacity_coeffs(x, ev.roots.z_liq, ev.liquid);
    ev.ln_phi_vap = ln_fugacity_coeffs(y, ev.roots.z_vap, ev.vapor);
    return ev;
}

namespace detail {

/// Copy scaled to unit sum; Newton iterates are not normalized until convergence.
inline std::vector<double> normalized(std::span<const double> v)
{
    double s = 0.0;
    for (double e : v)
        s += e;
    std::vector<double> out(v.begin(), v.end());
    for (auto& e : out)
        e /= s;
    return out;
}

inline std::vector<double> eos_composition(std::span<const double> v)
{
    double s = 0.0;
    for (double e : v)
        s += e;
    if (std::abs(s - 1.0) <= 1e-13)
        return {v.begin(), v.end()};
    return normalized(v);
}

/// max_i |f_i^V / f_i^L - 1| with f = frac * phi * p (p cancels).
inline double fugacity_mismatch(std::span<const double> x, std::span<const double> y, const PhaseEvaluation& ev)
{
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] == 0.0 && y[i] == 0.0)
            continue;
        const double ratio = std::exp(std::log(y[i]) + ev.ln_phi_vap[i] - std::log(x[i]) - ev.ln_phi_liq[i]);
        worst = std::max(worst, std::abs(ratio - 1.0));
    }
    return worst;
}

} // namespace detail

/// Re-derives roots and fugacities from the stored compositions and returns
/// max_i |f_i^V / f_i^L - 1|.
inline double equilibrium_error(const FlashInput& in, const FlashResult& r)
{
    const PengRobinson eos(in.components, in.kij, in.t);
    const auto x = detail::eos_composition(r.x);
    const auto y = detail::eos_composition(r.y);
    const auto ev = evaluate_phases(eos, x, y, in.p, r.beta.beta);
    return detail::fugacity_mismatch(x, y, ev);
}

/// Successive substitution: K <- K f^L / f^V until max |f^V/f^L - 1| < eps.
/// `k0` replaces the Wilson estimate when non-empty. Iterates whose K-values put
/// the feed outside the two-phase window keep updating with the clamped split;
/// they end as a single-phase result once K stops changing.
inline FlashResult ssm_flash(const FlashInput& in, double eps = 1e-6, int max_iter = 1000,
                             std::span<const double> k0 = {})
{
    in.validate();
    if (!(eps > 0.0))
        throw ConfigError("SSM tolerance must be positive");
    if (max_iter < 1)
        throw ConfigError("SSM needs at least one iteration");
    const std::size_t n = in.components.size();
    const PengRobinson eos(in.components, in.kij, in.t);

    FlashResult res;
    res.method = FlashMethod::ssm;
    if (!k0.empty()) {
        if (k0.size() != n)
            throw InputError("initial K-values have wrong length");
        res.k.assign(k0.begin(), k0.end());
    } else {
        res.k = wilson_k_values(in.components, in.t, in.p);
    }

    try {
        for (int it = 1; it <= max_iter; ++it) {
            res.iterations = it;
            res.beta = solve_beta(res.k, in.z);
            auto pc = phase_compositions(res.k, in.z, res.beta);
            res.x = std::move(pc.x);
            res.y = std::move(pc.y);
            const auto ev = evaluate_phases(eos, detail::eos_composition(res.x),
                                            detail::eos_composition(res.y), in.p, res.beta.beta);
            res.z_liq = ev.roots.z_liq;
            res.z_vap = ev.roots.z_vap;
            res.residual = detail::fugacity_mismatch(res.x, res.y, ev);

            if (res.two_phase() && res.residual < eps) {
                res.converged = true;
                return res;
            }

            // K f^L / f^V reduces to phi^L / phi^V when y = K x; the clamped
            // single-phase split has a normalized y, so use the ratio directly.
            double change = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double ln_k = ev.ln_phi_liq[i] - ev.ln_phi_vap[i];
                change = std::max(change, std::abs(ln_k - std::log(res.k[i])));
                res.k[i] = std::exp(ln_k);
            }
            if (!res.two_phase() && change < eps) {
                res.converged = true;
                return res;
            }
            bool trivial = true;
            for (double kv : res.k)
                trivial = trivial && std::abs(std::log(kv)) < 1e-6;
            if (trivial) {
                // A single-phase feed whose trial phase merges with it is stable;
                // a two-phase iterate collapsing there is a failure.
                if (!res.two_phase())
                    res.converged = true;
                else
                    res.message = "iteration collapsed to the trivial solution K = 1";
                return res;
            }
        }
        res.message = "SSM did not converge within " + std::to_string(max_iter) + " iterations";
    } catch (const NumericalError& e) {
        res.message = e.what();
        res.converged = false;
    } catch (const DomainError& e) {
        res.message = e.what();
        res.converged = false;
    }
    return res;
}

namespace detail {

/// Newton residual F(ln K, beta) and the split it implies.
struct NewtonState {
    std::vector<double> f;
    std::vector<double> x;
    std::vector<double> y;
    bool valid = false;
};

inline NewtonState newton_residual(const PengRobinson& eos, const FlashInput& in, std::span<const double> u)
{
    const std::size_t n = in.z.size();
    const double beta = u[n];
    NewtonState s;
    s.x.resize(n);
    s.y.resize(n);
    s.f.resize(n + 1);
    for (std::size_t i = 0; i < n; ++i) {
        const double k = std::exp(u[i]);
        const double d = 1.0 + beta * (k - 1.0);
        if (!(d > 0.0) || !std::isfinite(k))
            return s;
        s.x[i] = in.z[i] / d;
        s.y[i] = k * s.x[i];
    }
    try {
        const auto xn = normalized(s.x);
        const auto yn = normalized(s.y);
        const auto ev = evaluate_phases(eos, xn, yn, in.p, std::clamp(beta, 0.0, 1.0));
        double sx = 0.0;
        double sy = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            s.f[i] = u[i] - ev.ln_phi_liq[i] + ev.ln_phi_vap[i];
            sx += s.x[i];
            sy += s.y[i];
        }
        s.f[n] = sy - sx;
    } catch (const Error&) {
        return s;
    }
    s.valid = std::all_of(s.f.begin(), s.f.end(), [](double v) { return std::isfinite(v); });
    return s;
}

inline double inf_norm(std::span<const double> v)
{
    double m = 0.0;
    for (double e : v)
        m = std::max(m, std::abs(e));
    return m;
}

/// Fills the stored split of `res` from its K-values.
inline void finalize_split(const PengRobinson& eos, const FlashInput& in, FlashResult& res)
{
    res.beta = solve_beta(res.k, in.z);
    auto pc = phase_compositions(res.k, in.z, res.beta);
    res.x = std::move(pc.x);
    res.y = std::move(pc.y);
    const auto ev = evaluate_phases(eos, eos_composition(res.x), eos_composition(res.y), in.p, res.beta.beta);
    res.z_liq = ev.roots.z_liq;
    res.z_vap = ev.roots.z_vap;
    res.residual = fugacity_mismatch(res.x, res.y, ev);
}

} // namespace detail

/// Newton's method on u = (ln K_1..ln K_M, beta) with residuals
/// F_i = ln K_i - ln phi_i^L + ln phi_i^V and F_{M+1} = sum y - sum x.
/// The Jacobian is a forward difference with relative step 1e-7.
inline FlashResult newton_flash(const FlashInput& in, std::span<const double> k0, double eps = 1e-6,
                                int max_iter = 50)
{
    in.validate();
    const std::size_t n = in.components.size();
    if (k0.size() != n)
        throw InputError("initial K-values have wrong length");
    if (!(eps > 0.0))
        throw ConfigError("Newton tolerance must be positive");
    if (max_iter < 1)
        throw ConfigError("Newton needs at least one iteration");
    const PengRobinson eos(in.components, in.kij, in.t);

    FlashResult res;
    res.method = FlashMethod::newton;
    res.k.assign(k0.begin(), k0.end());

    std::vector<double> u(n + 1);
    auto load_state = [&](std::span<const double> k) {
        const auto vf = solve_beta(k, in.z);
        for (std::size_t i = 0; i < n; ++i)
            u[i] = std::log(k[i]);
        u[n] = vf.beta;
    };

    try {
        load_state(res.k);
        int fallbacks = 0;
        auto state = detail::newton_residual(eos, in, u);
        for (int it = 1; it <= max_iter; ++it) {
            res.iterations = it;
            if (!state.valid) {
                res.message = "Newton residual could not be evaluated";
                break;
            }
            if (detail::inf_norm(state.f) < eps) {
                for (std::size_t i = 0; i < n; ++i)
                    res.k[i] = std::exp(u[i]);
                detail::finalize_split(eos, in, res);
                res.converged = true;
                res.message.clear();
                return res;
            }

            Eigen::MatrixXd jac(n + 1, n + 1);
            Eigen::VectorXd f = Eigen::Map<const Eigen::VectorXd>(state.f.data(), static_cast<Eigen::Index>(n + 1));
            bool jac_ok = true;
            for (std::size_t j = 0; j <= n && jac_ok; ++j) {
                auto up = u;
                const double h = 1e-7 * std::max(1.0, std::abs(u[j]));
                up[j] += h;
                const auto sp = detail::newton_residual(eos, in, up);
                if (!sp.valid) {
                    jac_ok = false;
                    break;
                }
                for (std::size_t i = 0; i <= n; ++i)
                    jac(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (sp.f[i] - state.f[i]) / h;
            }

            Eigen::VectorXd step;
            if (jac_ok) {
                Eigen::FullPivLU<Eigen::MatrixXd> lu(jac);
                lu.setThreshold(1e-13);
                if (lu.isInvertible()) {
                    step = lu.solve(-f);
                    jac_ok = step.allFinite();
                } else {
                    jac_ok = false;
                }
            }

            if (!jac_ok) {
                // Singular or unusable Jacobian: one substitution step, then retry.
                if (++fallbacks > 3) {
                    res.message = "singular Jacobian after 3 substitution fallbacks";
                    break;
                }
                std::vector<double> k(n);
                const auto xn = detail::normalized(state.x);
                const auto yn = detail::normalized(state.y);
                const auto ev = evaluate_phases(eos, xn, yn, in.p, std::clamp(u[n], 0.0, 1.0));
                for (std::size_t i = 0; i < n; ++i)
                    k[i] = std::exp(ev.ln_phi_liq[i] - ev.ln_phi_vap[i]);
                load_state(k);
                state = detail::newton_residual(eos, in, u);
                continue;
            }

            // Halve the step until the iterate stays inside the pole-free region.
            double lambda = 1.0;
            detail::NewtonState next;
            std::vector<double> un(n + 1);
            for (int h = 0; h < 30; ++h) {
                for (std::size_t i = 0; i <= n; ++i)
                    un[i] = u[i] + lambda * step(static_cast<Eigen::Index>(i));
                next = detail::newton_residual(eos, in, un);
                if (next.valid)
                    break;
                lambda *= 0.5;
            }
            u = un;
            state = std::move(next);
        }
        if (res.message.empty())
            res.message = "Newton did not converge within " + std::to_string(max_iter) + " iterations";
        for (std::size_t i = 0; i < n; ++i)
            res.k[i] = std::exp(u[i]);
        detail::finalize_split(eos, in, res);
    } catch (const Error& e) {
        res.message = e.what();
    }
    res.converged = false;
    return res;
}

/// Newton seeded from a loose SSM pass, as used by the command-line tool.
inline FlashResult seeded_newton_flash(const FlashInput& in, double eps = 1e-6, double seed_eps = 1e-2,
                                       int max_iter = 50)
{
    const auto seed = ssm_flash(in, seed_eps, 1000);
    if (!seed.two_phase()) {
        auto r = seed;
        r.method = FlashMethod::newton;
        return r;
    }
    auto r = newton_flash(in, seed.k, eps, max_iter);
    r.iterations += seed.iterations;
    return r;
}

} // namespace vle
