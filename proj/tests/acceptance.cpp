// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <unistd.h>

#include <sdtwin/twin.hpp>

#include "golden_values.hpp"

using namespace sdtwin;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

int failures = 0;

void report(int id, const std::string &name, bool pass, const std::string &detail) {
    failures += pass ? 0 : 1;
    std::cout << (pass ? "PASS" : "FAIL") << " " << id << " " << name << ": " << detail << std::endl;
}

// Every EM fit made by the scenario criteria, checked against the EM contract at the end.
struct FitRecord {
    std::string label;
    EmTrace trace;
    double epsilon;
};
std::vector<FitRecord> fits;

TwinState train_recorded(const ScenarioConfig &c, const std::string &label) {
    TwinState t = train_twin(c, scenario_observations(c));
    for (const auto &q : t.quantities) {
        fits.push_back({label + "/" + std::string(to_string(q.quantity)) + "/me-gp", q.me_trace, c.em.epsilon});
        fits.push_back({label + "/" + std::string(to_string(q.quantity)) + "/gp", q.baseline_trace, c.em.epsilon});
    }
    return t;
}

std::string label_of(const ScenarioConfig &c) {
    return std::string(to_string(c.degradation_case)) + "_tau" + num(c.tau) + "_n" + std::to_string(c.n_obs) +
           "_sigma" + num(c.sigma0) + "_seed" + std::to_string(c.seed);
}

void criterion_inversion() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(20240611);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        const double zeta0 = 0.2 - 0.19 * u(rng);
        const double dm = -0.5 + 3.5 * u(rng);
        const double dk = 0.5 - 1.4 * u(rng);
        const auto m = normalized_nominal(zeta0);
        try {
            const auto s = invert_stiffness(observe_frequency(m, 0.0, dk, 0.0, 1), m);
            const auto ms = invert_mass(observe_frequency(m, dm, 0.0, 0.0, 1), m);
            const auto j = invert_mass_stiffness(observe_frequency(m, dm, dk, 0.0, 1, true), m);
            worst = std::max({worst, std::abs(*s.delta_k - dk), std::abs(*ms.delta_m - dm), std::abs(*j.delta_k - dk),
                              std::abs(*j.delta_m - dm)});
        } catch (const Error &) {
            worst = INFINITY;
        }
    }
    const double secs = seconds_since(t0);
    report(1, "inversion round trip", worst <= 1e-8 && secs < 1.0,
           "max abs error " + num(worst) + " over 100 draws x 3 cases, " + num(secs) + " s");
}

void criterion_degradation() {
    double worst = 0.0;
    for (const auto &[t, v] : golden::stiffness_grid)
        worst = std::max(worst, std::abs(stiffness_delta(t) - v));
    for (const auto &[t, v] : golden::mass_grid)
        worst = std::max(worst, std::abs(mass_delta(t) - v));
    report(2, "degradation oracles", worst <= 1e-12, "max abs deviation " + num(worst) + " at 2 x 20 grid points");
}

// Prior N(0, 1), one observation y = 2 with noise sd 0.5: posterior N(1.6, 0.2).
struct ConjugateTarget {
    std::size_t dimension() const { return 1; }
    double log_prior(std::span<const double> x) const { return -0.5 * x[0] * x[0]; }
    double log_likelihood(std::span<const double> x) const {
        const double r = (2.0 - x[0]) / 0.5;
        return -0.5 * r * r;
    }
    void sample_prior(Rng &rng, std::span<double> out) const { out[0] = std::normal_distribution<double>()(rng); }
};

void criterion_smc() {
    const auto t0 = Clock::now();
    int good = 0;
    double worst_mean = 0.0, worst_var = 0.0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        SmcConfig c;
        c.n_particles = 1000;
        c.n_steps = 50;
        c.seed = seed;
        const auto e = run_smc(ConjugateTarget{}, c).ensemble;
        double m = 0.0, v = 0.0;
        for (std::size_t i = 0; i < e.size(); ++i)
            m += e.weights[i] * e.particle(i)[0];
        for (std::size_t i = 0; i < e.size(); ++i)
            v += e.weights[i] * (e.particle(i)[0] - m) * (e.particle(i)[0] - m);
        const double em = std::abs(m - 1.6) / 1.6, ev = std::abs(v - 0.2) / 0.2;
        worst_mean = std::max(worst_mean, em);
        worst_var = std::max(worst_var, ev);
        good += (em <= 0.05 && ev <= 0.05) ? 1 : 0;
    }
    const double secs = seconds_since(t0);
    report(3, "SMC conjugate posterior", good >= 19 && secs < 10.0,
           std::to_string(good) + "/20 seeds within 5% (worst mean error " + num(100 * worst_mean) +
               "%, worst variance error " + num(100 * worst_var) + "%), " + num(secs) + " s");
}

void criterion_invariants() {
    std::mt19937_64 rng(77);
    std::normal_distribution<double> n01;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int bad = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t m = 1 + trial % 6;
        GatingParams g;
        MixingCoefficients pi;
        double total = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            g.center.push_back(2.0 * n01(rng));
            g.log_precision.push_back(3.0 * n01(rng));
            pi.pi.push_back(u(rng) + 1e-3);
            total += pi.pi.back();
        }
        for (auto &p : pi.pi)
            p /= total;
        const auto z = gate_weights(5.0 * n01(rng), g, pi);
        double sum = 0.0;
        for (double v : z) {
            bad += v < 0.0 ? 1 : 0;
            sum += v;
        }
        bad += std::abs(sum - 1.0) <= 1e-12 ? 0 : 1;

        const std::size_t n = 1 + static_cast<std::size_t>(u(rng) * 2000);
        const double flat = ess(std::vector<double>(n, 1.0 / static_cast<double>(n)));
        bad += std::abs(flat / static_cast<double>(n) - 1.0) <= 1e-12 ? 0 : 1;
        std::vector<double> degenerate(n, 0.0);
        degenerate[static_cast<std::size_t>(u(rng) * static_cast<double>(n))] = 1.0;
        bad += ess(degenerate) == 1.0 ? 0 : 1;
    }
    report(4, "simplex and ESS invariants", bad == 0,
           std::to_string(bad) + " violations in 1000 trials (ESS of uniform weights to 1e-12 relative)");
}

void criterion_clean_stiffness() {
    const auto t0 = Clock::now();
    ScenarioConfig c;
    c.tau = 1000.0;
    c.n_obs = 200;
    c.sigma0 = 0.0;
    c.em.experts = 4;
    const TwinState t = train_recorded(c, label_of(c));
    const Forecast f = predict_future(t, c.grid.points());
    const auto &me = f.get(Quantity::DeltaK, Method::MeGp);
    const auto &gp = f.get(Quantity::DeltaK, Method::Baseline);
    double worst_ratio = 0.0;
    for (std::size_t i = 0; i < me.points.size(); ++i) {
        const double gap = std::abs(me.points[i].mean - gp.points[i].mean);
        const double bound = 2.0 * std::max(me.points[i].sd(), gp.points[i].sd());
        worst_ratio = std::max(worst_ratio, gap / bound);
    }
    const auto &q = t.quantity(Quantity::DeltaK);
    auto training_rmse = [&](const MoEGPModel &m) {
        double se = 0.0;
        for (const auto &o : t.observations) {
            const double e = posterior_predictive(o.t_s, m).mean - stiffness_delta(o.t_s, c.stiffness);
            se += e * e;
        }
        return std::sqrt(se / static_cast<double>(t.observations.size()));
    };
    const double r_me = training_rmse(q.me_gp), r_gp = training_rmse(q.baseline);
    report(5, "clean stiffness agreement", worst_ratio <= 1.0 && r_me <= 0.02 && r_gp <= 0.02,
           "max |mean gap| / 2 max sd = " + num(worst_ratio) + ", training RMSE me-gp " + num(r_me) + " gp " +
               num(r_gp) + ", " + num(seconds_since(t0)) + " s");
}

void criterion_extrapolation() {
    const auto t0 = Clock::now();
    int good = 0;
    std::string detail;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        ScenarioConfig c;
        c.tau = 150.0;
        c.n_obs = 35;
        c.sigma0 = 0.005;
        c.em.experts = 4;
        c.seed = seed;
        const Forecast f = predict_future(train_recorded(c, label_of(c)), c.grid.points());
        const double me = interval_rmse(f.get(Quantity::DeltaK, Method::MeGp), c, 150.0, 600.0);
        const double gp = interval_rmse(f.get(Quantity::DeltaK, Method::Baseline), c, 150.0, 600.0);
        good += (me <= 0.05 && me < gp) ? 1 : 0;
        detail += " seed" + std::to_string(seed) + "=" + num(me) + "/" + num(gp);
    }
    report(6, "stiffness extrapolation to 600", good >= 4,
           std::to_string(good) + "/5 seeds pass; RMSE me-gp/gp on (150,600]:" + detail + ", " +
               num(seconds_since(t0)) + " s");
}

void criterion_coverage() {
    const auto t0 = Clock::now();
    bool all = true;
    std::string detail;
    for (auto [which, n] : {std::pair{DegradationCase::Stiffness, std::size_t{50}}, {DegradationCase::Mass, std::size_t{175}}}) {
        int good = 0;
        detail += std::string(detail.empty() ? "" : "; ") + std::string(to_string(which)) + ":";
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            ScenarioConfig c;
            c.degradation_case = which;
            c.tau = 550.0;
            c.n_obs = n;
            c.sigma0 = 0.005;
            c.seed = seed;
            const Quantity q = which == DegradationCase::Stiffness ? Quantity::DeltaK : Quantity::DeltaM;
            const Forecast f = predict_future(train_recorded(c, label_of(c)), c.grid.points());
            const double cov = band_coverage(f.get(q, Method::MeGp), c);
            good += cov >= 0.9 ? 1 : 0;
            detail += " " + num(cov);
        }
        detail += " (" + std::to_string(good) + "/5)";
        all = all && good >= 4;
    }
    report(7, "95% band coverage over [0,1000]", all, "me-gp coverage per seed, " + detail + ", " +
                                                          num(seconds_since(t0)) + " s");
}

void criterion_data_volume() {
    const auto t0 = Clock::now();
    std::vector<double> medians;
    std::string detail;
    for (std::size_t n : {75, 120, 150}) {
        std::vector<double> rmse;
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            ScenarioConfig c;
            c.degradation_case = DegradationCase::Joint;
            c.tau = 150.0;
            c.n_obs = n;
            c.sigma0 = 0.025;
            c.seed = seed;
            const Forecast f = predict_future(train_recorded(c, label_of(c)), c.grid.points());
            rmse.push_back(interval_rmse(f.get(Quantity::DeltaK, Method::MeGp), c, c.tau, c.grid.end));
        }
        std::sort(rmse.begin(), rmse.end());
        medians.push_back(rmse[2]);
        detail += " n=" + std::to_string(n) + ":" + num(rmse[2]);
    }
    const bool pass = medians[1] <= medians[0] && medians[2] <= medians[1];
    report(8, "joint data-volume trend", pass,
           "median me-gp delta_k RMSE on (150,1000]" + detail + ", " + num(seconds_since(t0)) + " s");
}

std::string slurp(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void criterion_determinism() {
    const auto t0 = Clock::now();
    const fs::path root = fs::temp_directory_path() / ("sdtwin_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(root);
    ScenarioConfig c;
    c.degradation_case = DegradationCase::Joint;
    c.n_obs = 75;
    c.sigma0 = 0.025;
    run_pipeline(c, root / "serial_a");
    run_pipeline(c, root / "serial_b");
    ScenarioConfig threaded = c;
    threaded.threads = 4;
    run_pipeline(threaded, root / "threaded");
    // Two pipelines at once in separate threads.
    std::thread other([&] { run_pipeline(c, root / "concurrent_a"); });
    run_pipeline(threaded, root / "concurrent_b");
    other.join();

    std::size_t files = 0, differing = 0;
    for (const auto &e : fs::directory_iterator(root / "serial_a")) {
        ++files;
        const std::string ref = slurp(e.path());
        for (const char *d : {"serial_b", "threaded", "concurrent_a", "concurrent_b"}) {
            const fs::path p = root / d / e.path().filename();
            differing += (!fs::exists(p) || slurp(p) != ref) ? 1 : 0;
        }
    }
    for (const char *d : {"serial_b", "threaded", "concurrent_a", "concurrent_b"})
        differing += static_cast<std::size_t>(
            std::abs(static_cast<long>(std::distance(fs::directory_iterator(root / d), fs::directory_iterator{})) -
                     static_cast<long>(files)));
    const bool verified = verify_artifacts(root / "serial_a").ok();
    fs::remove_all(root);
    report(9, "determinism", files > 0 && differing == 0 && verified,
           std::to_string(files) + " artifacts compared across 5 runs (serial, 4 threads, concurrent), " +
               std::to_string(differing) + " differ, " + num(seconds_since(t0)) + " s");
}

void criterion_em_contract() {
    std::size_t iterations = 0, converged = 0, violations = 0;
    double worst_drop = 0.0;
    std::string first_bad;
    for (const auto &f : fits) {
        for (const auto &it : f.trace.iterations) {
            ++iterations;
            const double drop = it.functional_prev - it.expected_log_posterior;
            worst_drop = std::max(worst_drop, drop);
            if (drop > 1e-10) {
                ++violations;
                if (first_bad.empty())
                    first_bad = f.label + " iter " + std::to_string(it.iter);
            }
        }
        if (f.trace.converged) {
            ++converged;
            if (f.trace.iterations.empty() || !(f.trace.iterations.back().em_error <= f.epsilon)) {
                ++violations;
                if (first_bad.empty())
                    first_bad = f.label + " final step";
            }
        }
    }
    report(10, "EM contract", !fits.empty() && violations == 0,
           std::to_string(fits.size()) + " fits, " + std::to_string(iterations) + " M-steps, " +
               std::to_string(converged) + " converged, largest functional drop " + num(worst_drop) + ", " +
               std::to_string(violations) + " violations" + (first_bad.empty() ? "" : " (first: " + first_bad + ")"));
}

void guarded(int id, const std::string &name, const std::function<void()> &fn) {
    try {
        fn();
    } catch (const std::exception &e) {
        report(id, name, false, std::string("threw ") + e.what());
    }
}

} // namespace

int main() {
    guarded(1, "inversion round trip", criterion_inversion);
    guarded(2, "degradation oracles", criterion_degradation);
    guarded(3, "SMC conjugate posterior", criterion_smc);
    guarded(4, "simplex and ESS invariants", criterion_invariants);
    guarded(5, "clean stiffness agreement", criterion_clean_stiffness);
    guarded(6, "stiffness extrapolation to 600", criterion_extrapolation);
    guarded(7, "95% band coverage over [0,1000]", criterion_coverage);
    guarded(8, "joint data-volume trend", criterion_data_volume);
    guarded(9, "determinism", criterion_determinism);
    guarded(10, "EM contract", criterion_em_contract);
    std::cout << (failures == 0 ? "all criteria pass" : std::to_string(failures) + " criteria fail") << std::endl;
    return failures == 0 ? 0 : 1;
}
