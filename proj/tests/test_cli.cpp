#include "vle/table.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

struct CliRun {
    int code = -1;
    std::string out;
};

class Cli : public ::testing::Test {
protected:
    static void SetUpTestSuite()
    {
        dir_ = fs::temp_directory_path() / ("vle_cli_test_" + std::to_string(::getpid()));
        fs::create_directories(dir_);
    }
    static void TearDownTestSuite() { fs::remove_all(dir_); }

    static std::string path(const std::string& name) { return (dir_ / name).string(); }

    static CliRun run(const std::string& args)
    {
        const auto out = path("stdout.txt");
        const std::string cmd = std::string(VLE_CLI_PATH) + " " + args + " > " + out + " 2> " + path("stderr.txt");
        const int status = std::system(cmd.c_str());
        CliRun r;
        r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        std::ifstream in(out);
        std::stringstream ss;
        ss << in.rdbuf();
        r.out = ss.str();
        return r;
    }

    static fs::path dir_;
};

fs::path Cli::dir_;

vle::Table table_of(const std::string& text)
{
    std::istringstream in(text);
    return vle::load_table(in);
}

} // namespace

TEST_F(Cli, FlashPrintsVerifiedSplit)
{
    const auto r = run("flash --components C1,C3 --t 226 --p 30bar --z 0.6,0.4");
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("two_phase"), std::string::npos);
    EXPECT_NE(r.out.find("(verified)"), std::string::npos);
}

TEST_F(Cli, FlashUnitsAgree)
{
    const auto a = run("flash --p 30bar --z 0.6,0.4 --json");
    const auto b = run("flash --p 3MPa --z 0.6,0.4 --json");
    ASSERT_EQ(a.code, 0);
    ASSERT_EQ(b.code, 0);
    const auto ja = nlohmann::json::parse(a.out);
    const auto jb = nlohmann::json::parse(b.out);
    EXPECT_EQ(ja["result"]["x"], jb["result"]["x"]);
}

TEST_F(Cli, FlashAllVapourIsSuccessWithNote)
{
    const auto r = run("flash --t 400 --p 1bar --z 0.01,0.99");
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("all_vapor"), std::string::npos);
    EXPECT_NE(r.out.find("single phase"), std::string::npos);
}

TEST_F(Cli, FlashNonConvergenceExitsThreeWithDiagnostics)
{
    const auto r = run("flash --p 30bar --z 0.6,0.4 --max-iter 2 --eps 1e-12");
    EXPECT_EQ(r.code, 3);
    const auto j = nlohmann::json::parse(r.out);
    EXPECT_EQ(j["error"], "not converged");
    EXPECT_EQ(j["result"]["iterations"], 2);
}

TEST_F(Cli, UsageErrorsExitTwo)
{
    EXPECT_EQ(run("flash --p 30bar --components C1,XX").code, 2);
    EXPECT_EQ(run("flash --p 30furlongs").code, 2);
    EXPECT_EQ(run("flash --z 0.5,0.5").code, 2);
    EXPECT_EQ(run("").code, 2);
    EXPECT_EQ(run("bench --queries 0").code, 2);
    EXPECT_EQ(run("bench --methods ssm,deep_learning").code, 2);
    EXPECT_EQ(run("experiment --factor colour --steps 1").code, 2);
}

TEST_F(Cli, MissingFilesExitFour)
{
    EXPECT_EQ(run("surrogate eval --surrogate " + path("none.bin") + " --p 30bar").code, 4);
    EXPECT_EQ(run("predict --model " + path("none.bin") + " --data " + path("none.csv")).code, 4);
    EXPECT_EQ(run("--config " + path("none.json") + " components").code, 4);
}

TEST_F(Cli, SweepRowsAndMonotoneLiquid)
{
    const auto r = run("sweep --p-range 6:77:11bar --methods ssm");
    ASSERT_EQ(r.code, 0);
    const auto t = table_of(r.out);
    ASSERT_EQ(t.rows.size(), 11u);
    EXPECT_FALSE(t.comments.empty());
    const auto x = t.numbers("ssm_x1");
    for (std::size_t i = 1; i < x.size(); ++i) {
        ASSERT_TRUE(x[i] && x[i - 1]);
        EXPECT_GT(*x[i], *x[i - 1]);
    }
}

TEST_F(Cli, SweepEdgeRanges)
{
    const auto one = run("sweep --p-range 30:30:1bar --methods ssm");
    ASSERT_EQ(one.code, 0);
    EXPECT_EQ(table_of(one.out).rows.size(), 1u);
    EXPECT_EQ(run("sweep --p-range 6:77:0bar").code, 2);
    const auto high = run("sweep --p-range 100:110:2bar --methods ssm");
    ASSERT_EQ(high.code, 0);
    const auto t = table_of(high.out);
    EXPECT_FALSE(t.numbers("ssm_x1")[0]);
    EXPECT_EQ(t.rows[0][t.index("failures")], "no_two_phase");
}

TEST_F(Cli, SweepReferenceOverlay)
{
    std::ofstream(path("ref.csv")) << "tc1_K,pc1_bar,omega1,tc2_K,pc2_bar,omega2,T_K,p_bar,x1,y1\n"
                                   << "190.6,46,0.0115,369.8,42.46,0.1454,226,30,0.345,0.955\n";
    const auto r = run("sweep --p-range 20:40:3bar --methods ssm --reference " + path("ref.csv"));
    ASSERT_EQ(r.code, 0);
    const auto ref = table_of(r.out).numbers("ref_x1");
    ASSERT_EQ(ref.size(), 3u);
    EXPECT_FALSE(ref[0]);
    ASSERT_TRUE(ref[1]);
    EXPECT_DOUBLE_EQ(*ref[1], 0.345);
}

TEST_F(Cli, SurrogateBuildManifestAndEval)
{
    const auto s = path("s.bin");
    const auto r = run("surrogate build --quiet --refine-tol 1e-2 --out " + s);
    ASSERT_EQ(r.code, 0);
    std::ifstream mf(s + ".json");
    const auto m = nlohmann::json::parse(mf);
    EXPECT_TRUE(m["oracle_calls_below_full_grid"].get<bool>());
    EXPECT_LT(m["stats"]["oracle_calls"].get<double>(), m["stats"]["full_grid_points_at_max_level"].get<double>());
    EXPECT_EQ(run("surrogate eval --surrogate " + s + " --p 30bar --z 0.6").code, 0);
    EXPECT_NE(run("surrogate eval --surrogate " + s + " --p 90bar --z 0.6").code, 0);
}

TEST_F(Cli, GenerateIsDeterministic)
{
    const std::string args = "generate --t-range 200:300:4 --p-range 5:60:5bar --noise 0.01 --seed 9";
    const auto a = run(args);
    const auto b = run(args);
    ASSERT_EQ(a.code, 0);
    EXPECT_EQ(a.out, b.out);
    EXPECT_NE(a.out.find("seed=9"), std::string::npos);
    EXPECT_NE(a.out, run("generate --t-range 200:300:4 --p-range 5:60:5bar --noise 0.01 --seed 10").out);
}

TEST_F(Cli, TrainPredictRoundTrip)
{
    ASSERT_EQ(run("generate --t-range 200:300:6 --p-range 5:60:10bar --out " + path("d.csv")).code, 0);
    const auto m = path("m.vlm");
    ASSERT_EQ(run("train --data " + path("d.csv") + " --layers 1 --width 8 --steps 300 --batch-size 16 --out " + m)
                  .code,
              0);
    EXPECT_TRUE(fs::exists(m + ".json"));
    const auto r = run("predict --model " + m + " --data " + path("d.csv"));
    ASSERT_EQ(r.code, 0);
    const auto t = table_of(r.out);
    EXPECT_FALSE(t.rows.empty());
    EXPECT_NE(t.comments.at(0).find("mre_vs_input"), std::string::npos);
}

TEST_F(Cli, ConfigFileMirrorsFlags)
{
    std::ofstream(path("cfg.json")) << R"({"sweep": {"p-range": "6:77:4bar", "methods": "ssm"}})";
    const auto r = run("--config " + path("cfg.json") + " sweep");
    ASSERT_EQ(r.code, 0);
    EXPECT_EQ(table_of(r.out).rows.size(), 4u);
}

TEST_F(Cli, BenchAutoBuildReportsFourMethods)
{
    const auto j = path("bench.json");
    const auto r = run("bench --queries 50 --repeats 1 --auto-build --max-points 3000 --out-json " + j);
    ASSERT_EQ(r.code, 0);
    std::ifstream in(j);
    const auto rep = nlohmann::json::parse(in);
    ASSERT_EQ(rep["methods"].size(), 4u);
    EXPECT_NE(r.out.find("seed=2024"), std::string::npos);
}
