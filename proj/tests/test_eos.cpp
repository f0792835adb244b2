#include "vle/eos.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace vle;

namespace {

// Reference numbers below come from tests/oracle/pr_oracle.py.

Components c1_c3()
{
    const auto db = ComponentDatabase::builtin();
    return {db.get("C1"), db.get("C3")};
}

} // namespace

TEST(MFactor, LowOmegaPolynomial)
{
    EXPECT_NEAR(m_factor(0.1454), 0.5931781820927999, 1e-15);
    EXPECT_DOUBLE_EQ(m_factor(0.0), 0.37464);
}

TEST(MFactor, HighOmegaPolynomial)
{
    EXPECT_NEAR(m_factor(1.0), 0.3796 + 1.485 - 0.1644 + 0.01667, 1e-14);
    EXPECT_NEAR(m_factor(0.6), 1.21501672, 1e-12);
}

TEST(MFactor, RejectsAbsurdOmega)
{
    EXPECT_THROW(m_factor(5.0), DomainError);
    EXPECT_THROW(m_factor(std::nan("")), DomainError);
}

TEST(PureParameters, MatchReference)
{
    const auto cs = c1_c3();
    EXPECT_NEAR(alpha_attraction(cs[0], 226.0), 0.2325197273732958, 1e-12);
    EXPECT_NEAR(covolume(cs[0]), 2.680271859440962e-05, 1e-18);
    EXPECT_NEAR(alpha_attraction(cs[1], 226.0), 1.29869339990979, 1e-11);
    EXPECT_NEAR(covolume(cs[1]), 5.633790576622985e-05, 1e-18);
}

TEST(PureParameters, AlphaIsOneAtCriticalTemperature)
{
    const auto cs = c1_c3();
    EXPECT_NEAR(alpha_attraction(cs[1], cs[1].tc()), attraction_at_tc(cs[1]), 1e-14);
}

TEST(Mixture, DimensionlessParameters)
{
    const auto cs = c1_c3();
    const std::vector<double> x{0.4, 0.6};
    const auto t = mixture_terms(x, cs, BinaryInteraction(2), 226.0, 30e5);
    EXPECT_NEAR(t.cap_a, 0.6529518035647935, 1e-13);
    EXPECT_NEAR(t.cap_b, 0.07108388492476092, 1e-15);
}

TEST(Mixture, BinaryInteractionLowersCrossTerm)
{
    const auto cs = c1_c3();
    BinaryInteraction k(2);
    k.set(0, 1, 0.1);
    const PengRobinson plain(cs, BinaryInteraction(2), 226.0);
    const PengRobinson with_k(cs, k, 226.0);
    const std::vector<double> x{0.5, 0.5};
    const auto a0 = plain.terms(x, 1e6);
    const auto a1 = with_k.terms(x, 1e6);
    EXPECT_NEAR(a1.aij(0, 1), 0.9 * a0.aij(0, 1), 1e-14);
    EXPECT_DOUBLE_EQ(a1.aij(0, 0), a0.aij(0, 0));
}

TEST(Mixture, RejectsBadComposition)
{
    const PengRobinson eos(c1_c3(), BinaryInteraction(2), 226.0);
    EXPECT_THROW(eos.terms(std::vector<double>{0.5, 0.6}, 1e6), InputError);
    EXPECT_THROW(eos.terms(std::vector<double>{1.0}, 1e6), InputError);
    EXPECT_THROW(eos.terms(std::vector<double>{0.5, 0.5}, -1.0), DomainError);
}

TEST(Cubic, SingleRootCase)
{
    const auto r = solve_cubic(0.6529518035647935, 0.07108388492476092);
    ASSERT_EQ(r.physical.size(), 1u);
    EXPECT_NEAR(r.physical[0], 0.09920340658774487, 1e-12);
}

TEST(Cubic, ThreeRootCase)
{
    const double a = 0.1651250947727134;
    const double b = 0.020327677814413563;
    const auto r = solve_cubic(a, b);
    ASSERT_EQ(r.physical.size(), 3u);
    EXPECT_NEAR(r.physical[0], 0.031408183507212147, 1e-12);
    EXPECT_NEAR(r.physical[1], 0.11170362458233295, 1e-12);
    EXPECT_NEAR(r.physical[2], 0.8365605140960409, 1e-12);
}

TEST(Cubic, RandomResidualsBelowTolerance)
{
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> ua(1e-4, 2.0);
    std::uniform_real_distribution<double> ub(1e-5, 0.3);
    for (int i = 0; i < 5000; ++i) {
        const double a = ua(rng);
        const double b = ub(rng);
        CubicRoots r;
        try {
            r = solve_cubic(a, b);
        } catch (const NumericalError&) {
            continue;
        }
        for (double z : r.physical) {
            EXPECT_GT(z, b);
            EXPECT_LT(std::abs(cubic_residual(a, b, z)), 1e-10) << a << ' ' << b << ' ' << z;
        }
    }
}

TEST(Cubic, RejectsNegativeCovolume)
{
    EXPECT_THROW(solve_cubic(0.5, -0.1), DomainError);
}

TEST(Fugacity, MatchesReference)
{
    const auto cs = c1_c3();
    const std::vector<double> x{0.4, 0.6};
    const auto t = mixture_terms(x, cs, BinaryInteraction(2), 226.0, 30e5);
    const auto lnphi = ln_fugacity_coeffs(x, 0.09920340658774487, t);
    EXPECT_NEAR(lnphi[0], 0.8347674923036892, 1e-9);
    EXPECT_NEAR(lnphi[1], -3.447375880821129, 1e-9);
}

TEST(Fugacity, IdealGasLimit)
{
    const auto cs = c1_c3();
    const std::vector<double> x{0.3, 0.7};
    const auto t = mixture_terms(x, cs, BinaryInteraction(2), 400.0, 1.0);
    const auto r = solve_cubic(t.cap_a, t.cap_b);
    for (double v : ln_fugacity_coeffs(x, r.physical.back(), t))
        EXPECT_NEAR(v, 0.0, 1e-5);
}

TEST(Fugacity, RootBelowCovolumeIsDomainError)
{
    const auto cs = c1_c3();
    const std::vector<double> x{0.4, 0.6};
    const auto t = mixture_terms(x, cs, BinaryInteraction(2), 226.0, 30e5);
    EXPECT_THROW(ln_fugacity_coeffs(x, 0.5 * t.cap_b, t), DomainError);
}
