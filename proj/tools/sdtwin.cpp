// sdtwin command-line front end.
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <sdtwin/twin.hpp>

namespace fs = std::filesystem;
using namespace sdtwin;

namespace {

/// Raised for anything the user must fix in the invocation or config.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Common {
    std::string config;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::string out;
    int verbose = 0;
};

void add_common(CLI::App *cmd, Common &c, bool with_config = true) {
    if (with_config) {
        cmd->add_option("-c,--config", c.config, "scenario TOML file (defaults apply when omitted)");
        cmd->add_option("--overrides", c.overrides, "dotted key=value overrides, applied after the file")->expected(1, -1);
        cmd->add_option("--seed", c.seed, "shorthand for scenario.seed");
    }
    cmd->add_option("-o,--out", c.out, "output directory");
    cmd->add_flag("-v,--verbose", c.verbose, "print progress details");
}

ScenarioConfig load(const Common &c) {
    try {
        ScenarioConfig cfg = c.config.empty() ? ScenarioConfig{} : load_config(c.config);
        for (const auto &o : c.overrides)
            apply_override(cfg, o);
        if (c.seed)
            cfg.seed = *c.seed;
        cfg.validate();
        if (!cfg.observations.empty() && !fs::exists(cfg.observations))
            throw UsageError("observation file '" + cfg.observations + "' does not exist");
        return cfg;
    } catch (const Error &e) {
        throw UsageError(e.what());
    }
}

fs::path output_dir(const Common &c, const ScenarioConfig &cfg, const std::string &leaf) {
    if (!c.out.empty())
        return c.out;
    if (!cfg.output_dir.empty())
        return cfg.output_dir;
    const char *root = std::getenv("SDTWIN_OUTPUT_ROOT");
    return fs::path(root && *root ? root : "out") / leaf;
}

void report_fit(const TwinState &t) {
    for (const auto &q : t.quantities)
        for (Method m : {Method::MeGp, Method::Baseline}) {
            const auto &tr = q.trace(m);
            std::cerr << to_string(q.quantity) << " " << to_string(m) << ": " << tr.iterations.size()
                      << " EM iteration(s), " << (tr.converged ? "converged" : "not converged") << ", pi =";
            for (double p : q.model(m).mixing.pi)
                std::cerr << " " << fmt_num(p);
            std::cerr << "\n";
        }
}

int cmd_simulate(const Common &c) {
    const ScenarioConfig cfg = load(c);
    const auto obs = scenario_observations(cfg);
    const fs::path dir = output_dir(c, cfg, "simulate");
    commit_artifacts(dir, cfg, observation_artifacts(cfg, obs));
    std::cout << (dir / "observations.csv").string() << "\n";
    return 0;
}

int cmd_process(const Common &c) {
    const ScenarioConfig cfg = load(c);
    const auto obs = scenario_observations(cfg);
    ArtifactSet files = observation_artifacts(cfg, obs);
    for (auto &f : processed_artifacts(cfg, obs))
        files.push_back(std::move(f));
    const fs::path dir = output_dir(c, cfg, "process");
    commit_artifacts(dir, cfg, files);
    std::cout << (dir / "processed.csv").string() << "\n";
    return 0;
}

int cmd_train(const Common &c) {
    const ScenarioConfig cfg = load(c);
    const TwinState twin = train_twin(cfg, scenario_observations(cfg));
    if (c.verbose)
        report_fit(twin);
    const fs::path dir = output_dir(c, cfg, "train");
    commit_artifacts(dir, cfg, training_artifacts(twin));
    std::cout << (dir / "twin.json").string() << "\n";
    return 0;
}

int cmd_predict(const Common &c, const std::string &model_path) {
    if (model_path.empty() || !fs::exists(model_path))
        throw UsageError("model file '" + model_path + "' does not exist");
    TwinState twin = load_twin(model_path);
    try {
        for (const auto &o : c.overrides) {
            const std::string key = o.substr(0, o.find('='));
            if (key.rfind("prediction.", 0) != 0 && key.rfind("response.", 0) != 0 && key.rfind("run.", 0) != 0)
                throw UsageError("predict accepts only prediction.*, response.* and run.* overrides, not '" + key + "'");
            apply_override(twin.config, o);
        }
        twin.config.validate();
    } catch (const Error &e) {
        throw UsageError(e.what());
    }
    twin.config_sha256 = config_digest(twin.config);
    const Forecast f = predict_future(twin, twin.config.grid.points());
    const fs::path dir = output_dir(c, twin.config, "predict");
    commit_artifacts(dir, twin.config, forecast_artifacts(twin, f));
    if (c.verbose && twin.config.simulated())
        std::cerr << summary_header() << summary_rows("predict", twin.config, f);
    std::cout << (dir / "predictions.csv").string() << "\n";
    return 0;
}

int run_suite(const Common &c, const ScenarioConfig &base, const std::string &suite, bool dry_run, std::size_t jobs) {
    if (suite != "paper-matrix")
        throw UsageError("unknown suite '" + suite + "' (available: paper-matrix)");
    const auto cells = paper_matrix(base);
    const fs::path root = output_dir(c, base, suite);
    if (dry_run) {
        for (const auto &cell : cells)
            std::cout << cell.name << " -> " << (root / cell.name).string() << " (config " << config_digest(cell.config)
                      << ")\n";
        return 0;
    }
    std::vector<std::string> summaries(cells.size());
    std::vector<std::string> failures(cells.size());
    std::mutex log;
    parallel_for(cells.size(), jobs, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            try {
                const auto r = run_pipeline(cells[i].config, root / cells[i].name);
                summaries[i] = summary_rows(cells[i].name, cells[i].config, r.forecast);
                if (c.verbose) {
                    std::lock_guard lock(log);
                    std::cerr << "done " << cells[i].name << "\n";
                }
            } catch (const std::exception &e) {
                failures[i] = e.what();
                std::lock_guard lock(log);
                std::cerr << "FAILED " << cells[i].name << ": " << e.what() << "\n";
            }
        }
    });
    std::string summary = summary_header();
    json manifest = json::array();
    for (std::size_t i = 0; i < cells.size(); ++i) {
        summary += summaries[i];
        if (!failures[i].empty())
            manifest.push_back({{"cell", cells[i].name}, {"error", failures[i]}});
    }
    fs::create_directories(root);
    write_text_file(root / "summary.csv", summary);
    const fs::path failure_file = root / "failures.json";
    if (manifest.empty()) {
        fs::remove(failure_file);
        std::cout << (root / "summary.csv").string() << "\n";
        return 0;
    }
    write_text_file(failure_file, manifest.dump(1) + "\n");
    std::cerr << manifest.size() << " of " << cells.size() << " cell(s) failed; see " << failure_file.string() << "\n";
    return 1;
}

int cmd_experiment(const Common &c, const std::string &suite, bool dry_run, std::size_t jobs) {
    const ScenarioConfig cfg = load(c);
    if (!suite.empty())
        return run_suite(c, cfg, suite, dry_run, jobs);
    const fs::path dir = output_dir(c, cfg, "experiment");
    if (dry_run) {
        std::cout << "scenario -> " << dir.string() << " (config " << config_digest(cfg) << ")\n";
        return 0;
    }
    const auto r = run_pipeline(cfg, dir);
    if (c.verbose) {
        report_fit(r.state);
        if (cfg.simulated())
            std::cerr << summary_header() << summary_rows("scenario", cfg, r.forecast);
    }
    std::cout << dir.string() << "\n";
    return 0;
}

int cmd_verify(const std::string &dir) {
    if (!fs::is_directory(dir))
        throw UsageError("'" + dir + "' is not a directory");
    const VerifyReport rep = verify_artifacts(dir);
    for (const auto &p : rep.problems)
        std::cerr << "MISMATCH " << p << "\n";
    if (!rep.ok())
        return 1;
    std::cout << "OK " << dir << " config " << rep.config_sha256 << "\n";
    return 0;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Multi-timescale digital twin for single-degree-of-freedom structures."};
    app.name("sdtwin");
    app.footer("Configuration keys (TOML tables in --config, or --overrides key=value):\n" + describe_schema() +
               "\nEnvironment: SDTWIN_OUTPUT_ROOT sets the default output root (./out otherwise).\n"
               "Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.");
    app.require_subcommand(1);

    Common common;
    std::string model_path, suite, verify_dir;
    bool dry_run = false;
    std::size_t jobs = 1;

    auto *simulate = app.add_subcommand("simulate", "generate a noisy observation record");
    add_common(simulate, common);
    auto *process = app.add_subcommand("process", "invert observations to parameter deltas");
    add_common(process, common);
    auto *train = app.add_subcommand("train", "fit mixture and baseline models, write the twin state");
    add_common(train, common);
    auto *predict = app.add_subcommand("predict", "forecast deltas, frequencies and responses from a twin state");
    add_common(predict, common);
    predict->add_option("-m,--model", model_path, "twin.json written by train or experiment")->required();
    auto *experiment = app.add_subcommand("experiment", "run the full pipeline for a scenario or a suite");
    add_common(experiment, common);
    experiment->add_option("--suite", suite, "named suite (paper-matrix)");
    experiment->add_flag("--dry-run", dry_run, "list planned cells without computing or writing");
    experiment->add_option("-j,--jobs", jobs, "suite cells run concurrently (0 = all cores)");
    auto *verify = app.add_subcommand("verify", "check digests of an artifact directory");
    verify->add_option("dir", verify_dir, "artifact directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*simulate) return cmd_simulate(common);
        if (*process) return cmd_process(common);
        if (*train) return cmd_train(common);
        if (*predict) return cmd_predict(common, model_path);
        if (*experiment) return cmd_experiment(common, suite, dry_run, jobs);
        if (*verify) return cmd_verify(verify_dir);
    } catch (const UsageError &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const Error &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
