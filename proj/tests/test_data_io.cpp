#include "vle/data.hpp"
#include "vle/experiment.hpp"
#include "vle/table.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace vle;

namespace {

const char* header = "tc1_K,pc1_bar,omega1,tc2_K,pc2_bar,omega2,T_K,p_bar,x1,y1\n";

Dataset small_synthetic()
{
    const auto db = ComponentDatabase::builtin();
    SyntheticSpec spec;
    spec.pairs.push_back({db.get("C1"), db.get("C3"), 0.0});
    spec.t_grid = linspace(200.0, 300.0, 5);
    for (double p : linspace(5.0, 60.0, 8))
        spec.p_grid.push_back(bar_to_pa(p));
    return generate_synthetic(spec).dataset;
}

std::string error_of(const std::string& text)
{
    std::istringstream in(text);
    try {
        load_csv(in);
    } catch (const InputError& e) {
        return e.what();
    }
    return "";
}

} // namespace

TEST(DatasetCsv, RoundTripIsExact)
{
    const auto ds = small_synthetic();
    std::stringstream buf;
    save_csv(ds, buf);
    const auto back = load_csv(buf);
    ASSERT_EQ(back.size(), ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        EXPECT_EQ(back.records[i].features(), ds.records[i].features());
        EXPECT_EQ(back.records[i].x1, ds.records[i].x1);
        EXPECT_EQ(back.records[i].y1, ds.records[i].y1);
    }
}

TEST(DatasetCsv, SkipsCommentsAndBlankLines)
{
    std::istringstream in(std::string("# produced by a sweep\n") + header +
                          "190.6,46,0.0115,369.8,42.46,0.1454,226,30,0.34,0.95\n\n# trailing note\n");
    const auto ds = load_csv(in);
    ASSERT_EQ(ds.size(), 1u);
    EXPECT_DOUBLE_EQ(ds.records[0].p, 30.0);
}

TEST(DatasetCsv, ErrorsNameTheRow)
{
    EXPECT_NE(error_of(std::string(header) + "1,2,3\n").find("row 2"), std::string::npos);
    EXPECT_NE(error_of(std::string(header) + "190.6,46,0.0115,369.8,42.46,0.1454,226,30,abc,0.95\n").find("x1"),
              std::string::npos);
    EXPECT_NE(error_of(std::string(header) + "190.6,46,0.0115,369.8,42.46,0.1454,226,30,1.5,0.95\n").find("x1"),
              std::string::npos);
    EXPECT_NE(error_of("tc1_K,pc1_bar\n").find("missing column"), std::string::npos);
    EXPECT_FALSE(error_of(header).empty());
    EXPECT_FALSE(error_of("").empty());
}

TEST(DatasetCsv, MissingFileIsIoError)
{
    EXPECT_THROW(load_csv_file("/nonexistent/data.csv"), IoError);
}

TEST(Synthetic, RecordsAreTwoPhaseTieLines)
{
    const auto ds = small_synthetic();
    ASSERT_FALSE(ds.empty());
    EXPECT_EQ(ds.provenance, Provenance::synthetic_ssm);
    for (const auto& r : ds.records) {
        EXPECT_LT(r.x1, r.y1);
        EXPECT_NO_THROW(r.validate());
    }
}

TEST(Synthetic, NoTwoPhasePointsIsAnError)
{
    const auto db = ComponentDatabase::builtin();
    SyntheticSpec spec;
    spec.pairs.push_back({db.get("C1"), db.get("C3"), 0.0});
    spec.t_grid = {500.0};
    spec.p_grid = {bar_to_pa(10.0)};
    EXPECT_THROW(generate_synthetic(spec), NumericalError);
}

TEST(Splitting, PartitionsAndIsSeeded)
{
    const auto ds = small_synthetic();
    const auto a = split(ds, 0.2, 5);
    const auto b = split(ds, 0.2, 5);
    EXPECT_EQ(a.train.size() + a.validation.size(), ds.size());
    EXPECT_EQ(a.validation.size(), static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(ds.size()))));
    EXPECT_EQ(a.validation.records.front().x1, b.validation.records.front().x1);
    EXPECT_THROW(split(ds, 0.6, 1), ConfigError);
    EXPECT_EQ(subsample(ds, 0.5, 3).size(), static_cast<std::size_t>(std::llround(0.5 * static_cast<double>(ds.size()))));
    EXPECT_THROW(subsample(ds, 0.0, 3), ConfigError);
}

TEST(Noise, ZeroIsIdentityAndTargetsStayInRange)
{
    const auto ds = small_synthetic();
    EXPECT_EQ(add_noise(ds, 0.0, 1).records.front().x1, ds.records.front().x1);
    const auto noisy = add_noise(ds, 0.5, 1);
    for (const auto& r : noisy.records) {
        EXPECT_GE(r.x1, 0.0);
        EXPECT_LE(r.y1, 1.0);
    }
    EXPECT_THROW(add_noise(ds, -0.1, 1), ConfigError);
}

TEST(Components, CsvOverridesAndAdds)
{
    auto db = ComponentDatabase::builtin();
    std::istringstream in("name,tc_K,pc_bar,omega\nC3,370.0,42.5,0.15\nCO2,304.1,73.8,0.225\n");
    db.load_csv(in);
    EXPECT_DOUBLE_EQ(db.get("c3").tc(), 370.0);
    EXPECT_TRUE(db.get("C3").molar_mass_opt().has_value());
    EXPECT_DOUBLE_EQ(db.get("CO2").pc(), 73.8e5);
    EXPECT_FALSE(db.get("CO2").molar_mass_opt().has_value());
    EXPECT_DOUBLE_EQ(db.get("propane").tc(), 370.0);
}

TEST(Components, RejectsMalformedCsv)
{
    auto db = ComponentDatabase::builtin();
    std::istringstream bad_header("name,tc\nX,1\n");
    EXPECT_THROW(db.load_csv(bad_header), InputError);
    std::istringstream bad_value("name,tc_K,pc_bar,omega\nX,abc,1,0.1\n");
    EXPECT_THROW(db.load_csv(bad_value), InputError);
    EXPECT_THROW(db.get("unobtainium"), InputError);
}

TEST(Table, KeepsCommentsAndEmptyCells)
{
    std::istringstream in("# vle sweep seed=1\np_bar,ssm_x1,failures\n6,0.06,\n13.1,,ssm(not_converged)\n");
    const auto t = load_table(in);
    ASSERT_EQ(t.comments.size(), 1u);
    EXPECT_EQ(t.comments[0], "vle sweep seed=1");
    ASSERT_EQ(t.rows.size(), 2u);
    const auto x = t.numbers("ssm_x1");
    EXPECT_DOUBLE_EQ(*x[0], 0.06);
    EXPECT_FALSE(x[1]);
    EXPECT_EQ(t.rows[1][t.index("failures")], "ssm(not_converged)");
    EXPECT_THROW(t.index("nope"), InputError);
}

TEST(Table, FieldCountMismatch)
{
    std::istringstream in("a,b\n1,2,3\n");
    EXPECT_THROW(load_table(in), InputError);
}

TEST(Table, ExperimentCsvRoundTrip)
{
    ExperimentCell c;
    c.factor = Factor::width;
    c.level = "100";
    c.mre = 0.0125;
    c.status = "partial: diverged, twice";
    std::stringstream buf;
    write_experiment_csv({c}, buf);
    const auto t = load_table(buf);
    ASSERT_EQ(t.rows.size(), 1u);
    EXPECT_EQ(t.rows[0][t.index("factor")], "width");
    EXPECT_DOUBLE_EQ(*t.numbers("mre")[0], 0.0125);
    EXPECT_EQ(t.rows[0][t.index("status")], "partial: diverged; twice");
}
