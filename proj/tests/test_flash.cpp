#include "vle/flash.hpp"
#include "vle/observables.hpp"
#include "vle/tie_line.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace vle;

namespace {

Components pair(const char* a, const char* b)
{
    const auto db = ComponentDatabase::builtin();
    return {db.get(a), db.get(b)};
}

double material_balance_error(const FlashInput& in, const FlashResult& r)
{
    double e = 0.0;
    for (std::size_t i = 0; i < in.z.size(); ++i)
        e = std::max(e, std::abs(in.z[i] - (r.beta.beta * r.y[i] + (1.0 - r.beta.beta) * r.x[i])));
    return e;
}

} // namespace

// Converged splits from tests/oracle/pr_oracle.py (SSM to 1e-14).
TEST(SsmFlash, MethanePropaneReference)
{
    const FlashInput in(pair("C1", "C3"), {0.6, 0.4}, 226.0, 30e5);
    const auto r = ssm_flash(in, 1e-12);
    ASSERT_TRUE(r.converged);
    ASSERT_TRUE(r.two_phase());
    EXPECT_NEAR(r.beta.beta, 0.4179259948661974, 1e-9);
    EXPECT_NEAR(r.x[0], 0.34390329463855, 1e-9);
    EXPECT_NEAR(r.y[0], 0.9566833286812795, 1e-9);
    EXPECT_NEAR(r.z_liq, 0.10044985857465075, 1e-9);
    EXPECT_NEAR(r.z_vap, 0.8120236141283299, 1e-9);
}

TEST(SsmFlash, MethaneHeptaneReference)
{
    const FlashInput in(pair("C1", "C7"), {0.5, 0.5}, 350.0, 50e5);
    const auto r = ssm_flash(in, 1e-12);
    ASSERT_TRUE(r.converged);
    EXPECT_NEAR(r.beta.beta, 0.4049697937569662, 1e-9);
    EXPECT_NEAR(r.x[0], 0.1755762613692142, 1e-9);
    EXPECT_NEAR(r.y[0], 0.976682278736726, 1e-9);
}

TEST(SsmFlash, ConvergedStateIsVerified)
{
    const FlashInput in(pair("C1", "C3"), {0.6, 0.4}, 226.0, 30e5);
    const auto r = ssm_flash(in, 1e-6);
    ASSERT_TRUE(r.converged);
    EXPECT_LE(equilibrium_error(in, r), 1e-6);
    EXPECT_LT(material_balance_error(in, r), 1e-12);
}

TEST(SsmFlash, LooseToleranceAtWilsonFixedPoint)
{
    const FlashInput in(pair("C1", "C3"), {0.6, 0.4}, 226.0, 30e5);
    const auto r = ssm_flash(in, 1e-1);
    EXPECT_TRUE(r.converged);
    EXPECT_LE(r.iterations, 2);
}

TEST(SsmFlash, IterationCapGivesUnconvergedResult)
{
    const FlashInput in(pair("C1", "C3"), {0.6, 0.4}, 226.0, 30e5);
    const auto r = ssm_flash(in, 1e-12, 2);
    EXPECT_FALSE(r.converged);
    EXPECT_EQ(r.iterations, 2);
    EXPECT_FALSE(r.message.empty());
}

TEST(SsmFlash, SinglePhaseFeeds)
{
    const auto cs = pair("C1", "C3");
    const auto vap = ssm_flash(FlashInput(cs, {0.01, 0.99}, 400.0, 1e5));
    EXPECT_TRUE(vap.converged);
    EXPECT_EQ(vap.state(), PhaseState::all_vapor);
    const auto liq = ssm_flash(FlashInput(cs, {0.05, 0.95}, 226.0, 50e5));
    EXPECT_EQ(liq.state(), PhaseState::all_liquid);
}

TEST(SsmFlash, RejectsBadInput)
{
    const auto cs = pair("C1", "C3");
    EXPECT_THROW(ssm_flash(FlashInput(cs, {0.6, 0.5}, 226.0, 30e5)), InputError);
    EXPECT_THROW(ssm_flash(FlashInput(cs, {0.6, 0.4}, -1.0, 30e5)), InputError);
    EXPECT_THROW(ssm_flash(FlashInput(cs, {0.6, 0.4}, 226.0, 30e5), 0.0), ConfigError);
}

TEST(NewtonFlash, AgreesWithTightSsm)
{
    const FlashInput in(pair("C1", "C3"), {0.6, 0.4}, 226.0, 30e5);
    const auto ref = ssm_flash(in, 1e-12);
    const auto r = seeded_newton_flash(in, 1e-10);
    ASSERT_TRUE(r.converged);
    EXPECT_EQ(r.method, FlashMethod::newton);
    for (std::size_t i = 0; i < 2; ++i)
        EXPECT_NEAR(r.k[i], ref.k[i], 1e-7 * ref.k[i]);
}

TEST(NewtonFlash, TernaryMaterialBalance)
{
    const auto db = ComponentDatabase::builtin();
    const FlashInput in({db.get("C1"), db.get("C3"), db.get("C7")}, {0.5, 0.3, 0.2}, 300.0, 40e5);
    const auto r = seeded_newton_flash(in, 1e-9);
    ASSERT_TRUE(r.converged);
    ASSERT_TRUE(r.two_phase());
    EXPECT_LT(material_balance_error(in, r), 1e-12);
    EXPECT_LE(equilibrium_error(in, r), 1e-8);
}

TEST(TieLine, MatchesFeedIndependentSplit)
{
    const auto cs = pair("C1", "C3");
    const auto tl = find_tie_line(cs, BinaryInteraction(2), 226.0, 30e5);
    ASSERT_TRUE(tl);
    EXPECT_NEAR(tl->x[0], 0.34390329463855, 1e-8);
    EXPECT_NEAR(tl->y[0], 0.9566833286812795, 1e-8);
}

TEST(TieLine, AbsentAboveCricondenbar)
{
    EXPECT_FALSE(find_tie_line(pair("C1", "C3"), BinaryInteraction(2), 226.0, 120e5));
}

TEST(Observables, ConsistentWithSplit)
{
    const FlashInput in(pair("C1", "C3"), {0.6, 0.4}, 226.0, 30e5);
    const auto r = ssm_flash(in, 1e-10);
    const auto o = derived_observables(r, in);
    EXPECT_NEAR(o.xW1 + o.xW2, 1.0, 1e-12);
    EXPECT_NEAR(o.xN1 + o.xN2, 1.0, 1e-12);
    EXPECT_NEAR(o.xiW, in.p / (gas_constant * in.t * r.z_liq), 1e-6 * o.xiW);
    EXPECT_NEAR(o.xiN, in.p / (gas_constant * in.t * r.z_vap), 1e-6 * o.xiN);
    EXPECT_GT(o.densiW, o.densiN);
    EXPECT_GT(o.sW, 0.0);
    EXPECT_LT(o.sW, 1.0);
    EXPECT_GT(o.Cf, 0.0);
}

TEST(FlashProperty, MaterialBalanceOnRandomCases)
{
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> ut(200.0, 340.0), up(5e5, 80e5), uz(0.05, 0.95);
    const auto cs = pair("C1", "C3");
    int converged = 0;
    for (int i = 0; i < 300; ++i) {
        const double z1 = uz(rng);
        const FlashInput in(cs, {z1, 1.0 - z1}, ut(rng), up(rng));
        const auto r = ssm_flash(in);
        if (!r.converged)
            continue;
        ++converged;
        EXPECT_LT(material_balance_error(in, r), 1e-12);
    }
    EXPECT_GT(converged, 250);
}
