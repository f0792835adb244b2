#include "vle/rachford_rice.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace vle;

TEST(RachfordRice, SymmetricCase)
{
    const std::vector<double> k{2.0, 0.5};
    const std::vector<double> z{0.5, 0.5};
    const auto r = solve_beta(k, z);
    EXPECT_EQ(r.state, PhaseState::two_phase);
    EXPECT_NEAR(r.beta, 0.5, 1e-12);
}

TEST(RachfordRice, BisectionReference)
{
    // 200-step bisection in tests/oracle/pr_oracle.py; 13/90 in closed form.
    const std::vector<double> k{3.0, 0.1};
    const std::vector<double> z{0.4, 0.6};
    EXPECT_NEAR(solve_beta(k, z).beta, 0.14444444444444443, 1e-12);
    EXPECT_NEAR(solve_beta(k, z).beta, 13.0 / 90.0, 1e-12);
}

TEST(RachfordRice, SinglePhaseWindows)
{
    const std::vector<double> z{0.5, 0.5};
    const auto liq = solve_beta(std::vector<double>{1.2, 0.3}, z);
    EXPECT_EQ(liq.state, PhaseState::all_liquid);
    EXPECT_EQ(liq.beta, 0.0);
    const auto vap = solve_beta(std::vector<double>{5.0, 1.1}, z);
    EXPECT_EQ(vap.state, PhaseState::all_vapor);
    EXPECT_EQ(vap.beta, 1.0);
}

TEST(RachfordRice, RejectsBadInput)
{
    const std::vector<double> z{0.5, 0.5};
    EXPECT_THROW(solve_beta(std::vector<double>{1.0, 1.0}, z), InputError);
    EXPECT_THROW(solve_beta(std::vector<double>{-1.0, 2.0}, z), InputError);
    EXPECT_THROW(solve_beta(std::vector<double>{2.0}, z), InputError);
}

TEST(RachfordRice, RandomMulticomponentRoots)
{
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> lk(-3.0, 3.0);
    std::uniform_real_distribution<double> u(0.01, 1.0);
    int two_phase = 0;
    for (int c = 0; c < 2000; ++c) {
        const std::size_t n = 2 + c % 5;
        std::vector<double> k(n), z(n);
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            k[i] = std::exp(lk(rng));
            z[i] = u(rng);
            s += z[i];
        }
        for (auto& v : z)
            v /= s;
        const auto r = solve_beta(k, z);
        if (r.state != PhaseState::two_phase)
            continue;
        ++two_phase;
        EXPECT_GE(r.beta, 0.0);
        EXPECT_LE(r.beta, 1.0);
        EXPECT_LT(std::abs(rr_residual(k, z, r.beta)), 1e-10);
        const auto pc = phase_compositions(k, z, r);
        double sx = 0.0, sy = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            sx += pc.x[i];
            sy += pc.y[i];
            EXPECT_NEAR(z[i], r.beta * pc.y[i] + (1.0 - r.beta) * pc.x[i], 1e-12);
        }
        EXPECT_NEAR(sx, 1.0, 1e-9);
        EXPECT_NEAR(sy, 1.0, 1e-9);
    }
    EXPECT_GT(two_phase, 200);
}

TEST(RachfordRice, IncipientPhaseIsNormalized)
{
    const std::vector<double> k{1.2, 0.3};
    const std::vector<double> z{0.5, 0.5};
    const auto r = solve_beta(k, z);
    const auto pc = phase_compositions(k, z, r);
    EXPECT_DOUBLE_EQ(pc.x[0], 0.5);
    EXPECT_NEAR(pc.y[0] + pc.y[1], 1.0, 1e-15);
    EXPECT_NEAR(pc.y[0] / pc.y[1], 1.2 / 0.3, 1e-12);
}
