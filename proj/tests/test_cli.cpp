#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>
#include <unistd.h>

#include <gtest/gtest.h>

namespace fs = std::filesystem;

namespace {

struct Outcome {
    int rc = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

class Cli : public ::testing::Test {
protected:
    fs::path dir;

    void SetUp() override {
        const auto *info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir = fs::temp_directory_path() / ("sdtwin_cli_" + std::string(info->name()) + "_" + std::to_string(::getpid()));
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    void TearDown() override { fs::remove_all(dir); }

    Outcome run(const std::string &args) const {
        const fs::path err = dir / "stderr.txt";
        const std::string cmd = "cd '" + dir.string() + "' && '" SDTWIN_CLI "' " + args + " 2>'" + err.string() + "'";
        Outcome r;
        FILE *p = ::popen(cmd.c_str(), "r");
        std::array<char, 4096> buf{};
        std::size_t n = 0;
        while ((n = std::fread(buf.data(), 1, buf.size(), p)) > 0)
            r.out.append(buf.data(), n);
        const int status = ::pclose(p);
        r.rc = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        r.err = slurp(err);
        return r;
    }

    fs::path write(const std::string &name, const std::string &text) const {
        std::ofstream(dir / name, std::ios::binary) << text;
        return dir / name;
    }
};

std::size_t count_lines(const std::string &text, const std::string &prefix = "") {
    std::istringstream in(text);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line))
        n += line.rfind(prefix, 0) == 0;
    return n;
}

const std::string small = " --overrides smc.n_particles=100 smc.n_steps=10 em.max_iters=2 prediction.step=5";

} // namespace

TEST_F(Cli, HelpMatchesGolden) {
    const auto r = run("--help");
    EXPECT_EQ(r.rc, 0);
    EXPECT_EQ(r.out, slurp(fs::path(SDTWIN_TEST_DATA) / "golden" / "help.txt"));
}

TEST_F(Cli, UsageErrorsExitTwo) {
    EXPECT_EQ(run("").rc, 2);
    const auto missing = run("simulate -c absent.toml");
    EXPECT_EQ(missing.rc, 2);
    EXPECT_NE(missing.err.find("absent.toml"), std::string::npos);
    const auto bad = run("simulate --overrides sensing.tau=-3");
    EXPECT_EQ(bad.rc, 2);
    EXPECT_NE(bad.err.find("sensing.tau"), std::string::npos);
    EXPECT_EQ(run("simulate --overrides nope.key=1").rc, 2);
    EXPECT_EQ(run("predict").rc, 2);
    EXPECT_EQ(run("predict -m absent.json").rc, 2);
    EXPECT_EQ(run("experiment --suite other --dry-run").rc, 2);
    EXPECT_FALSE(fs::exists(dir / "out"));
}

TEST_F(Cli, SimulateIsReproducible) {
    const auto a = run("simulate --seed 7 -o a");
    const auto b = run("simulate --seed 7 -o b");
    ASSERT_EQ(a.rc, 0) << a.err;
    ASSERT_EQ(b.rc, 0) << b.err;
    EXPECT_EQ(a.out, (fs::path("a") / "observations.csv").string() + "\n");
    const std::string text = slurp(dir / "a" / "observations.csv");
    EXPECT_EQ(text, slurp(dir / "b" / "observations.csv"));
    EXPECT_EQ(count_lines(text), 37u);
    EXPECT_EQ(count_lines(text, "# config_sha256="), 1u);
    EXPECT_NE(text, slurp(dir / (run("simulate --seed 8 -o c"), "c") / "observations.csv"));
}

TEST_F(Cli, ConfigFileAndOutputRoot) {
    write("s.toml", "[scenario]\ncase = \"mass\"\n[sensing]\nn_obs = 12\n");
    const auto r = run("process -c s.toml");
    ASSERT_EQ(r.rc, 0) << r.err;
    EXPECT_EQ(r.out, "out/process/processed.csv\n");
    const std::string text = slurp(dir / "out" / "process" / "processed.csv");
    EXPECT_EQ(count_lines(text), 14u);
    EXPECT_NE(text.find("t_s,delta_k_hat,delta_m_hat,rejected"), std::string::npos);
    write("bad.toml", "[sensing]\ntau = \"long\"\n");
    const auto bad = run("simulate -c bad.toml");
    EXPECT_EQ(bad.rc, 2);
    EXPECT_NE(bad.err.find("sensing.tau"), std::string::npos);
}

TEST_F(Cli, CorruptObservationsNameTheLine) {
    write("obs.csv", "t_s,omega_ds,lambda_re,sigma0\n0,6.28,,0.005\n10,six,,0.005\n");
    const auto r = run("process --overrides scenario.observations=obs.csv");
    EXPECT_EQ(r.rc, 1);
    EXPECT_NE(r.err.find("obs.csv:3"), std::string::npos) << r.err;
    EXPECT_FALSE(fs::exists(dir / "out" / "process"));
    EXPECT_FALSE(fs::exists(dir / "out" / "process.partial"));
}

namespace {

// Data rows of the predictions table: {rows, rows with ground truth}.
std::pair<std::size_t, std::size_t> prediction_rows(const std::string &csv) {
    std::istringstream in(csv);
    std::string line;
    std::size_t rows = 0, truth = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#' || line.rfind("t_star,", 0) == 0)
            continue;
        ++rows;
        truth += line.back() != ',';
    }
    return {rows, truth};
}

} // namespace

TEST_F(Cli, TrainPredictVerify) {
    const auto t = run("train -o model" + small + " em.max_iters=1");
    ASSERT_EQ(t.rc, 0) << t.err;
    EXPECT_EQ(t.out, "model/twin.json\n");
    EXPECT_EQ(count_lines(slurp(dir / "model" / "em_trace_delta_k_me-gp.csv")), 3u);
    EXPECT_EQ(run("verify model").rc, 0);

    const auto p = run("predict -m model/twin.json -o pred");
    ASSERT_EQ(p.rc, 0) << p.err;
    const auto [rows, truth] = prediction_rows(slurp(dir / "pred" / "predictions.csv"));
    EXPECT_EQ(rows, 2u * 201u);
    EXPECT_EQ(truth, rows);
    const auto ok = run("verify pred");
    EXPECT_EQ(ok.rc, 0);
    EXPECT_EQ(ok.out.rfind("OK pred config ", 0), 0u);
    EXPECT_EQ(run("predict -m model/twin.json -o p2 --overrides em.epsilon=1").rc, 2);

    std::ofstream(dir / "pred" / "predictions.csv", std::ios::app) << "1,me-gp,delta_k,0,0,0,0,0,0\n";
    const auto bad = run("verify pred");
    EXPECT_EQ(bad.rc, 1);
    EXPECT_NE(bad.err.find("MISMATCH"), std::string::npos);
    EXPECT_NE(bad.err.find("predictions.csv"), std::string::npos);
}

TEST_F(Cli, LoadedObservationsHaveNoGroundTruth) {
    ASSERT_EQ(run("simulate -o sim").rc, 0);
    const auto r = run("experiment -o exp" + small + " scenario.observations=sim/observations.csv");
    ASSERT_EQ(r.rc, 0) << r.err;
    const auto [rows, truth] = prediction_rows(slurp(dir / "exp" / "predictions.csv"));
    EXPECT_EQ(rows, 2u * 201u);
    EXPECT_EQ(truth, 0u);
}

TEST_F(Cli, DryRunWritesNothing) {
    const auto r = run("experiment --suite paper-matrix --dry-run");
    EXPECT_EQ(r.rc, 0);
    EXPECT_EQ(count_lines(r.out), 14u);
    EXPECT_NE(r.out.find("stiffness_tau150_n35_sigma0.005 -> out/paper-matrix/stiffness_tau150_n35_sigma0.005"),
              std::string::npos);
    EXPECT_EQ(run("experiment --dry-run").rc, 0);
    EXPECT_FALSE(fs::exists(dir / "out"));
}

TEST_F(Cli, ExperimentIsByteIdenticalAcrossRuns) {
    ASSERT_EQ(run("experiment -o r1" + small + " run.threads=1").rc, 0);
    ASSERT_EQ(run("experiment -o r2" + small + " run.threads=2").rc, 0);
    std::size_t files = 0;
    for (const auto &e : fs::directory_iterator(dir / "r1")) {
        ++files;
        EXPECT_EQ(slurp(e.path()), slurp(dir / "r2" / e.path().filename())) << e.path().filename();
    }
    EXPECT_GE(files, 10u);
}
