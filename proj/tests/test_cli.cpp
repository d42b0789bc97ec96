#include "passfpca/io.hpp"
#include "passfpca/passfpca.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

using namespace passfpca;
using io::json;
namespace fs = std::filesystem;

namespace {

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() / (std::string("passfpca_cli_") + info->name());
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    /// Runs the CLI inside the test directory; returns the exit status.
    int run(const std::string& args) {
        const std::string cmd = "cd '" + dir_.string() + "' && '" PASSFPCA_CLI "' " + args + " > stdout.txt 2> stderr.txt";
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }

    std::string read(const std::string& name) const {
        std::ifstream in(dir_ / name, std::ios::binary);
        std::ostringstream s;
        s << in.rdbuf();
        return s.str();
    }

    void write(const std::string& name, const std::string& text) const {
        std::ofstream out(dir_ / name, std::ios::binary);
        out << text;
    }

    json read_json(const std::string& name) const { return json::parse(read(name)); }

    FunctionalSample read_curves(const std::string& name) const { return io::read_curves_csv(dir_ / name); }

    fs::path dir_;
};

}  // namespace

// ---------------------------------------------------------------------------
// simulate

TEST_F(Cli, SimulateIsDeterministic) {
    ASSERT_EQ(run("simulate --law gaussian --n 200 --seed 7 -o a.csv --truth ta.csv"), 0);
    ASSERT_EQ(run("simulate --law gaussian --n 200 --seed 7 -o b.csv --truth tb.csv"), 0);
    EXPECT_EQ(read("a.csv"), read("b.csv"));
    EXPECT_EQ(read("ta.csv"), read("tb.csv"));
    EXPECT_FALSE(read("a.csv").empty());
    ASSERT_EQ(run("simulate --law gaussian --n 200 --seed 8 -o c.csv --truth tc.csv"), 0);
    EXPECT_NE(read("a.csv"), read("c.csv"));
}

TEST_F(Cli, SimulateMasksOutliers) {
    ASSERT_EQ(run("simulate --law frechet --outliers ol1 --n 100 --seed 3 -o x.csv --truth t.csv"), 0);
    std::istringstream in(read("t.csv"));
    std::string line;
    int masked = 0, curves = 0;
    while (std::getline(in, line)) {
        if (line.rfind("outlier_mask,", 0) != 0) continue;
        ++curves;
        masked += line.back() == '1';
    }
    EXPECT_EQ(curves, 100);
    EXPECT_EQ(masked, 5);
}

TEST_F(Cli, SimulateNoiseLevel) {
    ASSERT_EQ(run("simulate --seed 4 -o clean.csv --truth t0.csv"), 0);
    ASSERT_EQ(run("simulate --seed 4 --noise-sd 2 -o noisy.csv --truth t1.csv"), 0);
    const Matrix e = read_curves("noisy.csv").values() - read_curves("clean.csv").values();
    const double sd = std::sqrt((e.array() - e.mean()).square().mean());
    EXPECT_NEAR(sd, 2.0, 0.05 * 2.0);
}

TEST_F(Cli, SimulateRejectsBadValues) {
    EXPECT_EQ(run("simulate --law cauchy"), 2);
    EXPECT_EQ(run("simulate --outliers ol3"), 2);
    EXPECT_EQ(run("simulate --n 0"), 2);
    EXPECT_EQ(run("simulate --noise-sd -1"), 2);
    EXPECT_EQ(run("simulate --bogus"), 2);
    EXPECT_EQ(run(""), 2);
    EXPECT_EQ(run("--help"), 0);
}

// ---------------------------------------------------------------------------
// fit and ratio

TEST_F(Cli, SimulateThenFit) {
    ASSERT_EQ(run("simulate --law lognormal --outliers ol2 --seed 5 -o s.csv --truth t.csv"), 0);
    ASSERT_EQ(run("fit s.csv --method pass --q 4 --eigenfunctions ef.csv --result r.json"), 0);
    const json r = read_json("r.json");
    EXPECT_EQ(r["method"], "pass/raw/mc");
    EXPECT_EQ(r["n_curves"], 200);
    EXPECT_EQ(r["n_points"], 101);
    EXPECT_EQ(r["q"], 4);
    ASSERT_EQ(r["eigenvalues"].size(), 4u);
    double total = 0.0;
    for (const auto& v : r["eigenvalues"]) total += v.get<double>();
    EXPECT_LE(total, 1.0 + 1e-12);
    EXPECT_EQ(r["ratios"]["ratios"][0], 1.0);
    EXPECT_TRUE(r["ratios"]["converged"].get<bool>());
    EXPECT_NEAR(r["pve_first"].get<double>(), 2.0 / 3.75, 0.1);
    EXPECT_EQ(r["diagnostics"]["pairs"], 19900);
    EXPECT_EQ(r["diagnostics"]["convergence_condition"]["margin"].size(), 3u);

    std::istringstream in(read("ef.csv"));
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "t,phi_1,phi_2,phi_3,phi_4");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    EXPECT_EQ(rows, 101);
}

TEST_F(Cli, FitMethodsAndSmoothing) {
    ASSERT_EQ(run("simulate --seed 6 --n 60 --n-points 41 --noise-sd 0.5 -o s.csv --truth t.csv"), 0);
    ASSERT_EQ(run("fit s.csv --method cov --smoothing smooth_cf --result a.json --eigenfunctions a.csv"), 0);
    EXPECT_EQ(read_json("a.json")["method"], "cov/smooth_cf/classical");
    EXPECT_EQ(read_json("a.json")["smoothing"]["penalty"], "gcv");
    ASSERT_EQ(run("fit s.csv --method mspc --smoothing pre_smooth --penalty 3 --result b.json --eigenfunctions b.csv"), 0);
    EXPECT_TRUE(read_json("b.json")["ratios"].is_null());
    EXPECT_EQ(read_json("b.json")["smoothing"]["penalty"], 3.0);
    ASSERT_EQ(run("fit s.csv --ratio elliptical --result c.json --eigenfunctions c.csv"), 0);
    EXPECT_EQ(read_json("c.json")["ratios"]["method"], "elliptical");
    EXPECT_EQ(run("fit s.csv --method mspc --smoothing smooth_cf"), 2);
    EXPECT_EQ(run("fit s.csv --method cov --ratio mc"), 2);
}

TEST_F(Cli, TwoCurveFitIsRankOne) {
    write("two.csv", "curve_id,0.2,0.4,0.6,0.8,1\n1,0,1,2,1,0\n2,1,1,0,-1,3\n");
    ASSERT_EQ(run("fit two.csv --method pass --trim 0 --result r.json --eigenfunctions e.csv"), 0);
    const json r = read_json("r.json");
    EXPECT_EQ(r["q_requested"], 4);
    EXPECT_EQ(r["q"], 1);
    ASSERT_EQ(r["eigenvalues"].size(), 1u);
    EXPECT_NEAR(r["eigenvalues"][0].get<double>(), 1.0, 1e-12);
}

TEST_F(Cli, RatioCommand) {
    ASSERT_EQ(run("simulate --law chisquare --seed 9 --n 100 -o s.csv --truth t.csv"), 0);
    ASSERT_EQ(run("ratio s.csv --solver both --result r.json"), 0);
    const json r = read_json("r.json");
    EXPECT_EQ(r["q"], 4);
    EXPECT_EQ(r["mc"]["ratios"][0], 1.0);
    EXPECT_EQ(r["elliptical"]["ratios"][0], 1.0);
    EXPECT_TRUE(r["mc"].contains("convergence_condition"));
    ASSERT_EQ(run("ratio s.csv --solver elliptical"), 0);
    const json out = json::parse(read("stdout.txt"));
    EXPECT_FALSE(out.contains("mc"));
    EXPECT_EQ(out["elliptical"]["ratios"], r["elliptical"]["ratios"]);
}

// ---------------------------------------------------------------------------
// Exit codes

TEST_F(Cli, IoErrorExitCode) {
    EXPECT_EQ(run("fit does_not_exist.csv"), 3);
    EXPECT_NE(read("stderr.txt").find("does_not_exist.csv"), std::string::npos);
    EXPECT_EQ(run("bench missing.json"), 3);
    ASSERT_EQ(run("simulate --n 5 -o s.csv --truth t.csv"), 0);
    EXPECT_EQ(run("fit s.csv --result /nonexistent/dir/r.json"), 3);
}

TEST_F(Cli, ParseErrorExitCodeReportsLine) {
    write("bad.csv", "curve_id,0.5,1\n1,2,3\n2,x,4\n");
    EXPECT_EQ(run("fit bad.csv"), 4);
    EXPECT_NE(read("stderr.txt").find("line 3"), std::string::npos) << read("stderr.txt");
    write("bad.json", "{\"methods\": [");
    EXPECT_EQ(run("bench bad.json"), 4);
}

TEST_F(Cli, EstimationErrorExitCode) {
    write("same.csv", "curve_id,0.25,0.5,0.75,1\n1,2,3,1,0\n2,2,3,1,0\n3,2,3,1,0\n");
    EXPECT_EQ(run("fit same.csv"), 5);
    write("two.csv", "curve_id,0.25,0.5,0.75,1\n1,2,3,1,0\n2,1,3,0,0\n");
    EXPECT_EQ(run("fit two.csv"), 5);
    EXPECT_NE(read("stderr.txt").find("trimming"), std::string::npos);
    write("one.csv", "curve_id,0.5,1\n1,2,3\n");
    EXPECT_EQ(run("fit one.csv"), 5);
    ASSERT_EQ(run("simulate --n 50 -o s.csv --truth t.csv"), 0);
    EXPECT_EQ(run("fit s.csv --max-iter 1 --result r.json"), 5);
    EXPECT_FALSE(read_json("r.json")["ratios"]["converged"].get<bool>());
}

// ---------------------------------------------------------------------------
// bench

TEST_F(Cli, BenchUsageErrors) {
    write("empty.json", R"({"methods": []})");
    EXPECT_EQ(run("bench empty.json"), 2);
    write("unknown.json", R"({"methods": ["pass"], "sim": {}})");
    EXPECT_EQ(run("bench unknown.json"), 2);
    EXPECT_NE(read("stderr.txt").find("sim"), std::string::npos);
}

TEST_F(Cli, BenchStrictMode) {
    write("c.json", R"({"replications": 2, "simulation": {"n": 30, "n_points": 21},
                        "methods": ["pass", "cov"], "settings": {"max_iter": 1}})");
    EXPECT_EQ(run("bench c.json --results r.csv --summary s.json"), 0);
    EXPECT_NE(read("stderr.txt").find("warning"), std::string::npos);
    EXPECT_EQ(read_json("s.json")["rows_flagged"], 1);
    EXPECT_EQ(run("bench c.json --strict --results r2.csv --summary s2.json"), 6);
    EXPECT_EQ(read("r.csv"), read("r2.csv"));
}

TEST_F(Cli, BenchOverridesAndThreadIndependence) {
    write("c.json", R"({"replications": 50, "seed": 3, "simulation": {"n": 40, "n_points": 31},
                        "scenarios": {"score_laws": ["gaussian", "frechet"], "outlier_schemes": ["ol1"]},
                        "methods": ["pass", "mspc"], "output": {"results_csv": "cfg.csv", "summary_json": "cfg.json"}})");
    ASSERT_EQ(run("bench c.json --replications 4 --threads 1"), 0);
    ASSERT_EQ(run("bench c.json --replications 4 --threads 3 --results t3.csv --summary t3.json"), 0);
    EXPECT_EQ(read("cfg.csv"), read("t3.csv"));
    EXPECT_EQ(read_json("cfg.json")["replications"], 4);
    ASSERT_EQ(run("bench c.json --replications 4 --seed 4 --results s4.csv --summary s4.json"), 0);
    EXPECT_NE(read("cfg.csv"), read("s4.csv"));
}

TEST_F(Cli, BundledTable1Smoke) {
    ASSERT_EQ(run("bench '" PASSFPCA_CONFIG_DIR "/table1-smoke.json' --threads 0 --results r.csv --summary s.json"), 0)
        << read("stderr.txt");
    const json s = read_json("s.json");
    bool found = false;
    for (const auto& row : s["rows"]) {
        if (row["score_law"] == "gaussian" && row["outlier_scheme"] == "none" && row["method"] == "pass/raw/mc") {
            found = true;
            const double mse = row["mse"].get<double>();
            EXPECT_GE(mse, 1.0e-2);
            EXPECT_LE(mse, 2.2e-2);
        }
    }
    EXPECT_TRUE(found);
}
