#include <gtest/gtest.h>

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "logkg/cli.hpp"
#include "logkg/expression.hpp"
#include "logkg/plan.hpp"
#include "logkg/reference_cache.hpp"
#include "logkg/runner.hpp"

using namespace logkg;
namespace fs = std::filesystem;

namespace {

// Fresh scratch directory per test, removed afterwards.
class Scratch : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() /
               ("logkg-test-" + std::string(info->test_suite_name()) + "-" + info->name() + "-" +
                std::to_string(::getpid()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    fs::path path(const std::string& name) const { return dir_ / name; }

    void write(const fs::path& p, const std::string& text) const {
        std::ofstream(p) << text;
    }

    static std::string slurp(const fs::path& p) {
        std::ifstream in(p);
        std::ostringstream s;
        s << in.rdbuf();
        return s.str();
    }

    RunOptions options(unsigned threads = 1) const { return {threads, dir_ / "cache"}; }

    fs::path dir_;
};

ExperimentPlan parse(const std::string& text) {
    std::istringstream in(text);
    return parse_plan(in, "test.plan");
}

std::vector<std::string> plan_errors(const std::string& text) {
    try {
        parse(text);
    } catch (const PlanError& e) {
        return e.errors();
    }
    return {};
}

bool mentions(const std::vector<std::string>& errs, const std::string& needle) {
    for (const auto& e : errs) {
        if (e.find(needle) != std::string::npos) return true;
    }
    return false;
}

ExperimentPlan small_temporal() {
    return parse(R"(
[experiment]
kind = temporal-sweep
problem = example2-cos-sin
T = 0.5
[grid]
N = 32
tau = 0.05 0.025 0.0125
epsilon = 0.1 0.05
[reference]
policy = fine
)");
}

int run_cli(std::vector<std::string> args, std::string* out_text = nullptr, std::string* err_text = nullptr) {
    args.insert(args.begin(), "logkg");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out;
    std::ostringstream err;
    const int code = cli(static_cast<int>(argv.size()), argv.data(), out, err);
    if (out_text) *out_text = out.str();
    if (err_text) *err_text = err.str();
    return code;
}

}  // namespace

TEST(Plan, MinimalDefaults) {
    const auto p = parse("[experiment]\nkind = single-solve\n[grid]\nN = 64\ntau = 0.01\n");
    EXPECT_EQ(p.kind, ExperimentKind::single_solve);
    EXPECT_EQ(p.scheme, Scheme::cnfd);
    EXPECT_EQ(p.problem.kind, ProblemKind::example1_gausson);
    EXPECT_EQ(p.a, -16.0);
    EXPECT_EQ(p.b, 16.0);
    EXPECT_EQ(p.T, 1.0);
    EXPECT_EQ(p.epsilons, std::vector<double>{0.05});
    EXPECT_FALSE(p.rates);
    EXPECT_EQ(p.reference.policy, ReferencePolicy::automatic);
    EXPECT_EQ(p.newton_tol, 1e-12);

    const auto q = parse("[experiment]\nkind = temporal-sweep\nproblem = example2\n[grid]\nN = 64\ntau = 0.1 0.05\n");
    EXPECT_TRUE(q.rates);
    EXPECT_EQ(q.a, -1.0);
    EXPECT_EQ(q.b, 1.0);
}

TEST(Plan, NonHalvingStepsNamed) {
    const auto errs = plan_errors("[experiment]\nkind = temporal-sweep\n[grid]\nN = 64\ntau = 0.1 0.04\n");
    ASSERT_EQ(errs.size(), 1u);
    EXPECT_NE(errs[0].find("grid.tau"), std::string::npos);
    EXPECT_NE(errs[0].find("halve"), std::string::npos);
    // without rates the same list is fine
    EXPECT_NO_THROW(parse("[experiment]\nkind = temporal-sweep\nrates = false\n[grid]\nN = 64\ntau = 0.1 0.04\n"));
}

TEST(Plan, AllErrorsCollected) {
    const auto errs = plan_errors(
        "[experiment]\nkind = single-solve\nT = -1\n[grid]\nN = 2\ntau = 0.01\nepsilon = 0\n[solver]\nnewton_tol = 1\n");
    EXPECT_GE(errs.size(), 4u);
    EXPECT_TRUE(mentions(errs, "experiment.T"));
    EXPECT_TRUE(mentions(errs, "grid.N"));
    EXPECT_TRUE(mentions(errs, "grid.epsilon"));
    EXPECT_TRUE(mentions(errs, "solver.newton_tol"));
}

TEST(Plan, SyntaxErrorsCarryLineNumbers) {
    const auto errs = plan_errors("[experiment]\nkind = single-solve\n\n[grid]\nwidth = 3\nN = 8\nN = 9\ntau = 0.1\n[bogus]\n");
    EXPECT_TRUE(mentions(errs, "test.plan:5: unknown key grid.width"));
    EXPECT_TRUE(mentions(errs, "test.plan:7: duplicate key grid.N"));
    EXPECT_TRUE(mentions(errs, "test.plan:9: unknown section [bogus]"));
    EXPECT_TRUE(mentions(plan_errors("N = 3\n"), "test.plan:1: key 'N' outside of a section"));
    EXPECT_TRUE(mentions(plan_errors("[grid]\nN 3\n"), "test.plan:2: expected 'key = value'"));
}

TEST(Plan, GeometricListsAndMeshWidths) {
    const auto p = parse(
        "[experiment]\nkind = spatial-sweep\nproblem = example2\n[grid]\nh = 0.25 0.125 0.0625\ntau = geom(0.01, 1, 1)\n"
        "[reference]\nh = 0.015625\n");
    EXPECT_EQ(p.cells, (std::vector<std::size_t>{8, 16, 32}));
    EXPECT_EQ(p.taus, std::vector<double>{0.01});
    EXPECT_EQ(p.reference.cells, 128u);
    EXPECT_EQ(geometric(0.1, 0.5, 3), (std::vector<double>{0.1, 0.05, 0.025}));
    EXPECT_TRUE(mentions(plan_errors("[grid]\nN = 8\ntau = geom(0.1, 0.5)\n"), "grid.tau"));
    EXPECT_TRUE(mentions(plan_errors("[experiment]\nproblem = example2\n[grid]\nh = 0.3\ntau = 0.1\n"), "grid.h"));
}

TEST(Plan, CustomProblemChecked) {
    EXPECT_TRUE(mentions(plan_errors("[experiment]\nproblem = custom\n[grid]\nN = 8\ntau = 0.1\n"), "problem"));
    EXPECT_TRUE(mentions(
        plan_errors("[experiment]\nproblem = custom\n[problem]\nphi = sin(\ngamma = 0\n[grid]\nN = 8\ntau = 0.1\n"),
        "problem: expression"));
    EXPECT_TRUE(mentions(plan_errors("[experiment]\nproblem = example2\n[grid]\nN = 8\ntau = 0.1\n[reference]\npolicy = exact\n"),
                         "reference.policy"));
}

TEST(Plan, ShippedTableOnePlanMatchesBuiltIn) {
    const auto shipped = plan_from_config(std::string(LOGKG_SOURCE_DIR) + "/plans/table1.plan");
    const auto built_in = reproduction_plans("table1", false).at(0);
    EXPECT_EQ(shipped, built_in);
    EXPECT_THROW(plan_from_config("/nonexistent/none.plan"), IoError);
}

TEST(Plan, ReproductionTargetsValidate) {
    for (const char* t : {"table1", "table2", "table3", "fig1", "fig-energy", "stability"}) {
        for (bool full : {false, true}) {
            const auto plans = reproduction_plans(t, full);
            EXPECT_FALSE(plans.empty()) << t;
            for (const auto& p : plans) EXPECT_NO_THROW(validate(p)) << t << " " << p.name;
        }
    }
    EXPECT_THROW(reproduction_plans("table9", false), std::invalid_argument);
}

TEST(Expression, Evaluates) {
    EXPECT_DOUBLE_EQ(Expression("1 + 2*3")(0.0), 7.0);
    EXPECT_DOUBLE_EQ(Expression("-2^2")(0.0), -4.0);
    EXPECT_DOUBLE_EQ(Expression("2^3^2")(0.0), 512.0);
    EXPECT_NEAR(Expression("cos(pi*x) + 0.5*exp(-x^2)")(0.5), 0.5 * std::exp(-0.25), 1e-15);
    EXPECT_NEAR(Expression("sqrt(abs(x)) / e")(-4.0), 2.0 / std::numbers::e, 1e-15);
    EXPECT_DOUBLE_EQ(Expression("1e-3 * x")(2.0), 2e-3);
    EXPECT_THROW(Expression("sin(x"), std::invalid_argument);
    EXPECT_THROW(Expression("foo(x)"), std::invalid_argument);
    EXPECT_THROW(Expression("x y"), std::invalid_argument);
    EXPECT_THROW(Expression(""), std::invalid_argument);
}

TEST_F(Scratch, SamplesFileRead) {
    const Grid1D g(0.0, 1.0, 4);
    write(path("s.txt"), "# phi gamma\n1 0\n2 0.5\n3 1 # trailing\n4 1.5\n");
    const auto init = make_initial_data({ProblemKind::custom, "", "", path("s.txt").string()}, g);
    EXPECT_EQ(init.phi[2], 3.0);
    EXPECT_EQ(init.gamma[3], 1.5);
    EXPECT_EQ(init.phi[4], 1.0);
    write(path("bad.txt"), "1 0\n2\n");
    EXPECT_THROW(make_initial_data({ProblemKind::custom, "", "", path("bad.txt").string()}, g), IoError);
    write(path("short.txt"), "1 0\n2 0\n");
    EXPECT_THROW(make_initial_data({ProblemKind::custom, "", "", path("short.txt").string()}, g), IoError);
    EXPECT_THROW(make_initial_data({ProblemKind::custom, "", "", path("missing.txt").string()}, g), IoError);
}

TEST_F(Scratch, EmptyResultWritesHeaderOnly) {
    SweepResult r{ExperimentPlan{}, {}};
    emit_csv(r, path("empty.csv"));
    EXPECT_EQ(slurp(path("empty.csv")), std::string(csv_header) + "\n");
}

TEST_F(Scratch, CsvRowRoundTrip) {
    SweepRow row;
    row.scheme = Scheme::siefd;
    row.problem = "example2-cos-sin";
    row.epsilon = 0.1;
    row.lambda = 1.0;
    row.cells = 64;
    row.h = 1.0 / 32.0;
    row.tau = 0.01;
    row.T = 1.0;
    row.error = ErrorReport{1.0 / 3.0, 0.5, 0.75, Truth::reference_rlogkge};
    row.rate_l2 = 2.0;
    row.energy_drift = 1e-15;
    row.newton_avg_iters = 2.5;
    emit_csv(SweepResult{ExperimentPlan{}, {row}}, path("one.csv"));
    std::istringstream in(slurp(path("one.csv")));
    std::string header, line;
    std::getline(in, header);
    std::getline(in, line);
    EXPECT_EQ(header, csv_header);
    std::vector<std::string> cols;
    std::stringstream ls(line);
    for (std::string c; std::getline(ls, c, ',');) cols.push_back(c);
    if (!line.empty() && line.back() == ',') cols.emplace_back();
    ASSERT_EQ(cols.size(), 16u);
    EXPECT_EQ(cols[0], "siefd");
    EXPECT_EQ(cols[1], "example2-cos-sin");
    EXPECT_EQ(std::stod(cols[2]), 0.1);
    EXPECT_EQ(std::stod(cols[4]), 1.0 / 32.0);
    EXPECT_EQ(std::stod(cols[7]), 1.0 / 3.0);
    EXPECT_EQ(std::stod(cols[10]), 2.0);
    EXPECT_TRUE(cols[11].empty());
    EXPECT_EQ(std::stod(cols[13]), 1e-15);
    EXPECT_EQ(cols[15], "ok");
}

TEST_F(Scratch, ZeroSolveStaysZero) {
    auto plan = parse(
        "[experiment]\nkind = single-solve\nproblem = custom\ndomain = 0 1\nT = 0.1\n[problem]\nphi = 0\ngamma = 0\n"
        "[grid]\nN = 16\ntau = 0.01\n");
    const auto r = run(plan, options());
    ASSERT_EQ(r.rows.size(), 1u);
    EXPECT_EQ(r.rows[0].status, RowStatus::ok);
    ASSERT_TRUE(r.rows[0].energy_drift);
    EXPECT_EQ(*r.rows[0].energy_drift, 0.0);
    EXPECT_FALSE(r.rows[0].error.has_value());
}

TEST_F(Scratch, SweepRowsSortedWithRates) {
    const auto r = run(small_temporal(), options(2));
    ASSERT_EQ(r.rows.size(), 6u);
    for (std::size_t i = 0; i + 1 < r.rows.size(); ++i) {
        const auto& x = r.rows[i];
        const auto& y = r.rows[i + 1];
        EXPECT_TRUE(std::tie(x.epsilon, x.h, x.tau) <= std::tie(y.epsilon, y.h, y.tau));
    }
    for (const auto& row : r.rows) {
        ASSERT_TRUE(row.error.has_value());
        EXPECT_EQ(row.error->against, Truth::reference_rlogkge);
        // the coarsest tau per epsilon carries no rate
        EXPECT_EQ(row.rate_l2.has_value(), row.tau < 0.05);
        if (row.rate_l2) EXPECT_NEAR(*row.rate_l2, 2.0, 0.3);
    }
}

TEST_F(Scratch, NonConvergenceRecordedInRow) {
    auto plan = small_temporal();
    plan.newton_tol = 1e-300;
    plan.newton_max_iter = 2;
    plan.fallback = Fallback::fail;
    plan.reference.policy = ReferencePolicy::none;
    const auto r = run(plan, options());
    ASSERT_EQ(r.rows.size(), 6u);
    for (const auto& row : r.rows) {
        EXPECT_EQ(row.status, RowStatus::nonconvergence);
        EXPECT_FALSE(row.message.empty());
    }
    emit_csv(r, path("nc.csv"));
    EXPECT_NE(slurp(path("nc.csv")).find(",nonconvergence"), std::string::npos);
}

TEST_F(Scratch, CacheRecomputesAfterDeletion) {
    const auto plan = small_temporal();
    const auto first = run(plan, options());
    ASSERT_FALSE(fs::is_empty(dir_ / "cache"));
    const auto cached = run(plan, options());
    fs::remove_all(dir_ / "cache");
    const auto fresh = run(plan, options());
    for (std::size_t i = 0; i < first.rows.size(); ++i) {
        EXPECT_EQ(first.rows[i].error->l2, cached.rows[i].error->l2);
        EXPECT_EQ(first.rows[i].error->l2, fresh.rows[i].error->l2);
    }
}

TEST_F(Scratch, CacheStoreLoadAndCorruption) {
    const ReferenceCache cache(dir_ / "cache");
    const Grid1D g(-1.0, 1.0, 8);
    ReferenceKey key{Scheme::cnfd, "example2-cos-sin", 0.1, 1.0, -1.0, 1.0, 8, 0.01, 1.0, 1e-12};
    EXPECT_FALSE(cache.load(key).has_value());
    const WaveState w{GridFunction::sample(g, [](double x) { return x / 3.0; }),
                      GridFunction::sample(g, [](double x) { return std::sin(x); }), 100, 1.0};
    cache.store(key, w);
    const auto back = cache.load(key);
    ASSERT_TRUE(back.has_value());
    EXPECT_EQ(back->prev, w.prev);
    EXPECT_EQ(back->curr, w.curr);

    ReferenceKey other = key;
    other.tau = 0.005;
    EXPECT_NE(other.digest(), key.digest());
    EXPECT_FALSE(cache.load(other).has_value());

    write(cache.entry_path(key), "logkg-reference 1\nkey " + key.canonical() + "\ncells 8\nprev 1 2 3\n");
    EXPECT_THROW(cache.load(key), CacheError);
    write(cache.entry_path(key), "logkg-reference 7\n");
    EXPECT_THROW(cache.load(key), CacheError);
    write(cache.entry_path(key), "logkg-reference 1\nkey scheme=siefd\ncells 8\n");
    EXPECT_THROW(cache.load(key), CacheError);
}

TEST_F(Scratch, CorruptCacheAbortsRun) {
    const auto plan = small_temporal();
    run(plan, options());
    for (const auto& e : fs::directory_iterator(dir_ / "cache")) {
        if (e.path().extension() == ".txt") write(e.path(), "garbage\n");
    }
    EXPECT_THROW(run(plan, options()), CacheError);
}

TEST_F(Scratch, ConcurrentCacheComputesOnce) {
    const ReferenceCache cache(dir_ / "cache");
    const Grid1D g(-1.0, 1.0, 8);
    const ReferenceKey key{Scheme::cnfd, "p", 0.1, 1.0, -1.0, 1.0, 8, 0.01, 1.0, 1e-12};
    std::atomic<int> computed{0};
    std::vector<std::thread> pool;
    std::vector<double> seen(8, -1.0);
    for (int i = 0; i < 8; ++i) {
        pool.emplace_back([&, i] {
            const auto w = cache.get_or_compute(key, [&] {
                ++computed;
                std::this_thread::sleep_for(std::chrono::milliseconds(50));
                return WaveState{GridFunction::constant(g, 1.5), GridFunction::constant(g, 2.5), 100, 1.0};
            });
            seen[i] = w.curr[3];
        });
    }
    for (auto& t : pool) t.join();
    EXPECT_EQ(computed.load(), 1);
    for (double v : seen) EXPECT_EQ(v, 2.5);
}

TEST_F(Scratch, CliExitCodes) {
    std::string out;
    EXPECT_EQ(run_cli({"--help"}, &out), exit_ok);
    EXPECT_NE(out.find("reproduce"), std::string::npos);
    EXPECT_EQ(run_cli({"solve", "--help"}, &out), exit_ok);
    EXPECT_NE(out.find("1024"), std::string::npos);
    EXPECT_EQ(run_cli({}), exit_usage);
    EXPECT_EQ(run_cli({"solve", "--bogus"}), exit_usage);
    EXPECT_EQ(run_cli({"solve", "--epsilon", "0", "--N", "16", "--T", "0.02"}), exit_usage);
    EXPECT_EQ(run_cli({"solve", "--scheme", "rk4"}), exit_usage);
    EXPECT_EQ(run_cli({"sweep", "--plan", path("missing.plan").string()}), exit_io);
    EXPECT_EQ(run_cli({"solve", "--problem", "example2", "--N", "16", "--tau", "0.01", "--T", "0.02", "--newton-tol",
                       "1e-300", "--cache-dir", (dir_ / "cache").string()}),
              exit_solver);
    // missing parent directories are created, but not below a regular file
    write(path("blocker"), "x");
    EXPECT_EQ(run_cli({"solve", "--problem", "example2", "--N", "16", "--tau", "0.01", "--T", "0.02", "--out",
                       (path("blocker") / "x.csv").string()}),
              exit_io);
    EXPECT_EQ(run_cli({"solve", "--problem", "example2", "--N", "16", "--tau", "0.01", "--T", "0.02", "--out",
                       (dir_ / "new" / "x.csv").string()}),
              exit_ok);
    EXPECT_EQ(run_cli({"solve", "--problem", "example2", "--N", "16", "--tau", "0.01", "--T", "0.02", "--out",
                       path("ok.csv").string()},
                      &out),
              exit_ok);
    EXPECT_TRUE(fs::exists(path("ok.csv")));
}

TEST_F(Scratch, CliStabilityCheckPrintsBound) {
    std::string out;
    EXPECT_EQ(run_cli({"stability-check", "--scheme", "siefd", "--N", "320", "--epsilon", "0.1", "--u-max", "1"}, &out),
              exit_ok);
    EXPECT_NE(out.find("tau bound: 0.1007081"), std::string::npos) << out;
    EXPECT_EQ(run_cli({"stability-check", "--scheme", "cnfd"}, &out), exit_ok);
    EXPECT_NE(out.find("unconditional"), std::string::npos);
}

TEST_F(Scratch, CliGapBound) {
    std::string out;
    EXPECT_EQ(run_cli({"gap-bound", "--epsilon", "0.01", "--N", "512"}, &out), exit_ok);
    EXPECT_NE(out.find("within bound: yes"), std::string::npos) << out;
}

TEST_F(Scratch, CliSweepAndBinaryAgree) {
    write(path("t.plan"),
          "[experiment]\nkind = energy-drift\nproblem = example2\nT = 0.1\n[grid]\nN = 32\ntau = 0.01\n"
          "[output]\ncsv = " + path("t.csv").string() + "\nsnapshots = 0 0.1\n");
    std::string out;
    ASSERT_EQ(run_cli({"sweep", "--plan", path("t.plan").string()}, &out), exit_ok) << out;
    const auto in_process = slurp(path("t.csv"));
    EXPECT_TRUE(fs::exists(path("t_energy.csv")));
    EXPECT_TRUE(fs::exists(path("t_snapshots.csv")));
    const std::string cmd = std::string(LOGKG_CLI_PATH) + " sweep --plan " + path("t.plan").string() + " --out " +
                            path("u.csv").string() + " > /dev/null";
    ASSERT_EQ(std::system(cmd.c_str()), 0);
    // the status and timing-free columns match byte for byte
    EXPECT_EQ(slurp(path("u.csv")), in_process);
    const std::string missing = std::string(LOGKG_CLI_PATH) + " sweep --plan /nonexistent.plan 2> /dev/null";
    EXPECT_EQ(WEXITSTATUS(std::system(missing.c_str())), exit_io);
}

TEST_F(Scratch, HarnessPropertyDeterministicCsv) {
    const auto plan = small_temporal();
    emit_csv(run(plan, options(1)), path("a.csv"));
    emit_csv(run(plan, options(1)), path("b.csv"));
    EXPECT_EQ(slurp(path("a.csv")), slurp(path("b.csv")));
}

TEST_F(Scratch, HarnessPropertyParallelEqualsSerial) {
    const auto plan = small_temporal();
    emit_csv(run(plan, options(1)), path("serial.csv"));
    fs::remove_all(dir_ / "cache");
    emit_csv(run(plan, options(4)), path("parallel.csv"));
    EXPECT_EQ(slurp(path("serial.csv")), slurp(path("parallel.csv")));
}
