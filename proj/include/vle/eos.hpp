/**
 * @file eos.hpp
 * @brief Peng-Robinson equation of state: pure-component parameters, van der
 *        Waals one-fluid mixing, cubic roots and fugacity coefficients.
 *
 * All quantities are SI (K, Pa, m^3, mol).
 */
#pragma once

#include "vle/component.hpp"
#include "vle/constants.hpp"
#include "vle/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

namespace vle {

inline double attraction_at_tc(const Component& c)
{
    return 0.45724 * gas_constant * gas_constant * c.tc() * c.tc() / c.pc();
}

inline double covolume(const Component& c)
{
    return 0.07780 * gas_constant * c.tc() / c.pc();
}

/// The two published m(omega) polynomials overlap on 0.1 < omega < 0.5; the
/// cubic form is used above 0.49, as in the 1978 revision of the model.
inline double m_factor(double omega)
{
    if (!(omega >= -1.0 && omega <= 2.0))
        throw DomainError("acentric factor outside [-1, 2]");
    if (omega <= 0.49)
        return 0.37464 + omega * (1.54226 - 0.26992 * omega);
    return 0.3796 + omega * (1.485 + omega * (-0.1644 + 0.01667 * omega));
}

/// a(T) = a(Tc) (1 + m (1 - sqrt(T/Tc)))^2
inline double alpha_attraction(const Component& c, double t)
{
    if (!(t > 0.0))
        throw DomainError("temperature must be positive");
    const double s = 1.0 + m_factor(c.omega()) * (1.0 - std::sqrt(t / c.tc()));
    return attraction_at_tc(c) * s * s;
}

/// Mixture parameters of one phase at (T, p).
struct EosTerms {
    std::size_t n = 0;
    double a_mix = 0.0;
    double b_mix = 0.0;
    double cap_a = 0.0;
    double cap_b = 0.0;
    std::vector<double> a_ij; // n x n, row-major
    std::vector<double> b_i;

    double aij(std::size_t i, std::size_t j) const { return a_ij[i * n + j]; }
};

namespace detail {

inline void check_composition(std::span<const double> comp, std::size_t n)
{
    if (comp.size() != n)
        throw InputError("composition has wrong number of components");
    double sum = 0.0;
    for (double v : comp) {
        if (!(v >= 0.0) || !std::isfinite(v))
            throw InputError("composition entries must be finite and non-negative");
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-12)
        throw InputError("composition does not sum to one");
}

} // namespace detail

/// Pure-component parameters of a mixture cached at one temperature.
class PengRobinson {
public:
    PengRobinson(const Components& cs, const BinaryInteraction& kij, double t)
        : n_(cs.size()), t_(t), a_ij_(n_ * n_), b_i_(n_)
    {
        if (n_ == 0)
            throw InputError("no components");
        if (kij.size() != n_)
            throw InputError("binary interaction matrix size does not match component count");
        if (!(t > 0.0))
            throw DomainError("temperature must be positive");
        std::vector<double> a(n_);
        for (std::size_t i = 0; i < n_; ++i) {
            a[i] = alpha_attraction(cs[i], t);
            b_i_[i] = covolume(cs[i]);
        }
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t j = 0; j <= i; ++j) {
                const double v = (1.0 - kij(i, j)) * std::sqrt(a[i] * a[j]);
                a_ij_[i * n_ + j] = v;
                a_ij_[j * n_ + i] = v;
            }
    }

    std::size_t size() const { return n_; }
    double temperature() const { return t_; }

    EosTerms terms(std::span<const double> comp, double p) const
    {
        detail::check_composition(comp, n_);
        if (!(p > 0.0))
            throw DomainError("pressure must be positive");
        EosTerms out;
        out.n = n_;
        out.a_ij = a_ij_;
        out.b_i = b_i_;
        for (std::size_t i = 0; i < n_; ++i) {
            out.b_mix += comp[i] * b_i_[i];
            for (std::size_t j = 0; j < n_; ++j)
                out.a_mix += comp[i] * comp[j] * a_ij_[i * n_ + j];
        }
        const double rt = gas_constant * t_;
        out.cap_a = out.a_mix * p / (rt * rt);
        out.cap_b = out.b_mix * p / rt;
        return out;
    }

private:
    std::size_t n_;
    double t_;
    std::vector<double> a_ij_;
    std::vector<double> b_i_;
};

inline EosTerms mixture_terms(std::span<const double> comp, const Components& cs,
                              const BinaryInteraction& kij, double t, double p)
{
    return PengRobinson(cs, kij, t).terms(comp, p);
}

/// Real roots of Z^3 - (1-B) Z^2 + (A - 2B - 3B^2) Z - (AB - B^2 - B^3).
/// `roots` keeps multiplicity and is ascending; `physical` holds the distinct
/// roots with Z > B.
struct CubicRoots {
    std::vector<double> roots;
    std::vector<double> physical;
};

inline double cubic_residual(double cap_a, double cap_b, double z)
{
    const double c2 = -(1.0 - cap_b);
    const double c1 = cap_a - 2.0 * cap_b - 3.0 * cap_b * cap_b;
    const double c0 = -(cap_a * cap_b - cap_b * cap_b - cap_b * cap_b * cap_b);
    return ((z + c2) * z + c1) * z + c0;
}

inline CubicRoots solve_cubic(double cap_a, double cap_b)
{
    if (!(cap_b >= 0.0) || !std::isfinite(cap_a) || !std::isfinite(cap_b))
        throw DomainError("cubic coefficients out of domain");

    const double c2 = -(1.0 - cap_b);
    const double c1 = cap_a - 2.0 * cap_b - 3.0 * cap_b * cap_b;
    const double c0 = -(cap_a * cap_b - cap_b * cap_b - cap_b * cap_b * cap_b);

    // Depressed cubic t^3 + p t + q with Z = t - c2/3.
    const double shift = -c2 / 3.0;
    const double p = c1 - c2 * c2 / 3.0;
    const double q = 2.0 * c2 * c2 * c2 / 27.0 - c2 * c1 / 3.0 + c0;
    const double disc = 4.0 * p * p * p + 27.0 * q * q;
    const double scale = 4.0 * std::abs(p * p * p) + 27.0 * q * q;

    CubicRoots out;
    if (disc > 1e-12 * scale) {
        const double s = std::sqrt(q * q / 4.0 + p * p * p / 27.0);
        out.roots.push_back(std::cbrt(-q / 2.0 + s) + std::cbrt(-q / 2.0 - s) + shift);
    } else if (p == 0.0) {
        out.roots.assign(3, shift);
    } else {
        const double r = 2.0 * std::sqrt(-p / 3.0);
        const double arg = std::clamp(3.0 * q / (p * r), -1.0, 1.0);
        const double phi = std::acos(arg) / 3.0;
        for (int k = 0; k < 3; ++k)
            out.roots.push_back(r * std::cos(phi - 2.0 * std::numbers::pi * k / 3.0) + shift);
    }

    for (double& z : out.roots) {
        const double f = ((z + c2) * z + c1) * z + c0;
        const double df = (3.0 * z + 2.0 * c2) * z + c1;
        if (std::abs(df) > 1e-12) {
            const double zn = z - f / df;
            if (std::abs(((zn + c2) * zn + c1) * zn + c0) < std::abs(f))
                z = zn;
        }
    }
    std::sort(out.roots.begin(), out.roots.end());

    for (double z : out.roots) {
        if (!(z > cap_b))
            continue;
        if (!out.physical.empty() && std::abs(z - out.physical.back()) <= 1e-7 * std::max(1.0, std::abs(z)))
            continue;
        out.physical.push_back(z);
    }
    if (out.physical.empty())
        throw NumericalError("cubic has no physical root (Z > B)");
    return out;
}

namespace detail {
inline constexpr double sqrt2 = std::numbers::sqrt2;
}

/// ln phi_i of every component in a phase with compressibility factor z.
inline std::vector<double> ln_fugacity_coeffs(std::span<const double> comp, double z, const EosTerms& terms)
{
    const std::size_t n = terms.n;
    if (comp.size() != n)
        throw InputError("composition has wrong number of components");
    const double a = terms.cap_a;
    const double b = terms.cap_b;
    if (!(z > b) || !(z + (1.0 - detail::sqrt2) * b > 0.0))
        throw DomainError("compressibility factor does not exceed B");

    std::vector<double> out(n);
    if (b == 0.0) {
        // B -> 0 limit of the log term: (A / 2 sqrt2 B) ln(...) -> A / z.
        for (std::size_t i = 0; i < n; ++i) {
            double sum_xa = 0.0;
            for (std::size_t j = 0; j < n; ++j)
                sum_xa += comp[j] * terms.aij(i, j);
            const double bi_b = terms.b_i[i] / terms.b_mix;
            const double attr = terms.a_mix > 0.0 ? a / z * (2.0 * sum_xa / terms.a_mix - bi_b) : 0.0;
            out[i] = bi_b * (z - 1.0) - std::log(z) - attr;
        }
        return out;
    }
    const double log_ratio = std::log((z + (1.0 + detail::sqrt2) * b) / (z + (1.0 - detail::sqrt2) * b));
    const double pre = a / (2.0 * detail::sqrt2 * b);
    const double ln_zb = std::log(z - b);
    for (std::size_t i = 0; i < n; ++i) {
        double sum_xa = 0.0;
        for (std::size_t j = 0; j < n; ++j)
            sum_xa += comp[j] * terms.aij(i, j);
        const double bi_b = terms.b_i[i] / terms.b_mix;
        out[i] = bi_b * (z - 1.0) - ln_zb - pre * (2.0 * sum_xa / terms.a_mix - bi_b) * log_ratio;
        if (!std::isfinite(out[i]))
            throw DomainError("fugacity coefficient is not finite");
    }
    return out;
}

/// Molar Gibbs energy of a phase over RT, up to a composition-independent
/// constant: sum_i x_i (ln phi_i + ln(x_i p)).
inline double phase_gibbs(std::span<const double> comp, double z, const EosTerms& terms, double p)
{
    const auto lnphi = ln_fugacity_coeffs(comp, z, terms);
    double g = 0.0;
    for (std::size_t i = 0; i < comp.size(); ++i)
        if (comp[i] > 0.0)
            g += comp[i] * (lnphi[i] + std::log(comp[i] * p));
    return g;
}

} // namespace vle
