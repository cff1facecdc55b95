// Digital-twin orchestration: sensing -> inversion -> mixture fit ->
// parameter and response forecasts -> update, plus the single-GP baseline
// and the on-disk artifact bundle.
#pragma once

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "config.hpp"
#include "degradation.hpp"
#include "digest.hpp"
#include "em.hpp"
#include "error.hpp"
#include "execution.hpp"
#include "inversion.hpp"
#include "io.hpp"
#include "moe_gp.hpp"
#include "sdof.hpp"

namespace sdtwin {

enum class Quantity { DeltaK, DeltaM };

constexpr std::string_view to_string(Quantity q) noexcept { return q == Quantity::DeltaK ? "delta_k" : "delta_m"; }

inline Quantity parse_quantity(std::string_view s) {
    if (s == "delta_k") return Quantity::DeltaK;
    if (s == "delta_m") return Quantity::DeltaM;
    throw Error(Errc::ParseError, "unknown quantity '" + std::string(s) + "'");
}

/// Mixture of experts, or the single-GP baseline.
enum class Method { MeGp, Baseline };

constexpr std::string_view to_string(Method m) noexcept { return m == Method::MeGp ? "me-gp" : "gp"; }

inline std::vector<Quantity> tracked_quantities(DegradationCase c) {
    switch (c) {
    case DegradationCase::Stiffness: return {Quantity::DeltaK};
    case DegradationCase::Mass: return {Quantity::DeltaM};
    case DegradationCase::Joint: return {Quantity::DeltaK, Quantity::DeltaM};
    }
    return {};
}

/// Ground truth for simulated scenarios; empty when data were loaded.
inline std::optional<double> ground_truth(const ScenarioConfig &config, Quantity q, double t_s) {
    if (!config.simulated())
        return std::nullopt;
    const TrueDeltas d = true_deltas(config.sensing(), t_s);
    return q == Quantity::DeltaK ? d.dk : d.dm;
}

inline std::vector<Sample> training_samples(const ProcessedDataset &processed, Quantity q) {
    std::vector<Sample> s;
    for (const auto &e : processed.estimates) {
        const auto &v = q == Quantity::DeltaK ? e.delta_k : e.delta_m;
        if (v)
            s.push_back({e.t_s, *v});
    }
    return s;
}

/// Single GP expert trained through the same EM/SMC machinery with pi = [1].
inline FitResult fit_baseline_gp(std::span<const Sample> data, EmConfig config) {
    config.experts = 1;
    config.pi_init.clear();
    return fit(data, config);
}

inline std::uint64_t fit_seed(std::uint64_t seed, Quantity q, Method m) {
    return stream_key(seed, {0x7F, static_cast<std::uint64_t>(q), static_cast<std::uint64_t>(m)});
}

struct QuantityModel {
    Quantity quantity = Quantity::DeltaK;
    std::vector<Sample> training;
    MoEGPModel me_gp;
    MoEGPModel baseline;
    EmTrace me_trace;       ///< not persisted
    EmTrace baseline_trace; ///< not persisted
    std::vector<SmcStepRecord> me_smc;
    std::vector<SmcStepRecord> baseline_smc;

    const MoEGPModel &model(Method m) const { return m == Method::MeGp ? me_gp : baseline; }
    const EmTrace &trace(Method m) const { return m == Method::MeGp ? me_trace : baseline_trace; }
    const std::vector<SmcStepRecord> &smc_trace(Method m) const { return m == Method::MeGp ? me_smc : baseline_smc; }
};

struct TwinState {
    static constexpr std::string_view schema = "sdtwin.twin/1";
    ScenarioConfig config;
    std::string config_sha256;
    std::vector<FrequencyObservation> observations;
    std::vector<std::string> training_digests; ///< one per training batch, oldest first
    double last_update_time = 0.0;
    std::vector<QuantityModel> quantities;

    const QuantityModel &quantity(Quantity q) const {
        for (const auto &m : quantities)
            if (m.quantity == q)
                return m;
        throw Error(Errc::ConfigInvalid, "twin does not track " + std::string(to_string(q)));
    }
};

inline std::string training_digest(std::span<const FrequencyObservation> obs) {
    return sha256_hex(observations_csv(obs));
}

/// Inverts the observations and fits both methods for every tracked quantity.
inline TwinState train_twin(const ScenarioConfig &config, std::vector<FrequencyObservation> observations) {
    config.validate();
    if (observations.empty())
        throw Error(Errc::InsufficientData, "no observations");
    TwinState state;
    state.config = config;
    state.config_sha256 = config_digest(config);
    const ProcessedDataset processed =
        process_dataset(observations, config.nominal(), config.degradation_case);
    for (Quantity q : tracked_quantities(config.degradation_case)) {
        QuantityModel qm;
        qm.quantity = q;
        qm.training = training_samples(processed, q);
        for (Method m : {Method::MeGp, Method::Baseline}) {
            EmConfig ec = config.em;
            ec.smc.seed = fit_seed(config.seed, q, m);
            ec.smc.threads = config.threads;
            FitResult r = m == Method::MeGp ? fit(qm.training, ec) : fit_baseline_gp(qm.training, ec);
            r.model.provenance = state.config_sha256;
            if (m == Method::MeGp) {
                qm.me_gp = std::move(r.model);
                qm.me_trace = std::move(r.trace);
                qm.me_smc = std::move(r.smc_trace);
            } else {
                qm.baseline = std::move(r.model);
                qm.baseline_trace = std::move(r.trace);
                qm.baseline_smc = std::move(r.smc_trace);
            }
        }
        state.quantities.push_back(std::move(qm));
    }
    state.last_update_time = -std::numeric_limits<double>::infinity();
    for (const auto &o : observations)
        state.last_update_time = std::max(state.last_update_time, o.t_s);
    state.training_digests = {training_digest(observations)};
    state.observations = std::move(observations);
    return state;
}

/// Simulated or loaded observations for a scenario.
inline std::vector<FrequencyObservation> scenario_observations(const ScenarioConfig &config) {
    config.validate();
    if (config.simulated())
        return generate_dataset(config.sensing());
    return read_observations_csv(config.observations);
}

/// Refits on the concatenated record. New readings must be strictly later
/// than everything already seen and strictly increasing.
inline TwinState update(const TwinState &twin, std::span<const FrequencyObservation> new_observations) {
    if (new_observations.empty())
        return twin;
    double last = twin.last_update_time;
    for (const auto &o : new_observations) {
        if (!(o.t_s > last))
            throw Error(Errc::NonMonotoneTimestamps,
                        "t_s=" + fmt_num(o.t_s) + " is not after " + fmt_num(last));
        last = o.t_s;
    }
    std::vector<FrequencyObservation> all = twin.observations;
    all.insert(all.end(), new_observations.begin(), new_observations.end());
    TwinState next = train_twin(twin.config, std::move(all));
    next.training_digests = twin.training_digests;
    next.training_digests.push_back(training_digest(new_observations));
    return next;
}

struct QuantityForecast {
    Quantity quantity = Quantity::DeltaK;
    Method method = Method::MeGp;
    std::vector<PredictiveDistribution> points;
};

/// Which predictive summary of the deltas is pushed through the physics.
enum class Bound { Mean, Low, Median, High };

constexpr std::string_view to_string(Bound b) noexcept {
    switch (b) {
    case Bound::Mean: return "mean";
    case Bound::Low: return "q025";
    case Bound::Median: return "q500";
    case Bound::High: return "q975";
    }
    return "?";
}

inline constexpr Bound all_bounds[] = {Bound::Mean, Bound::Low, Bound::Median, Bound::High};

inline double summary_value(const PredictiveDistribution &p, Bound b) {
    switch (b) {
    case Bound::Mean: return p.mean;
    case Bound::Low: return p.quantile(0.025);
    case Bound::Median: return p.quantile(0.5);
    case Bound::High: return p.quantile(0.975);
    }
    return p.mean;
}

struct ModalForecast {
    double t_star = 0.0;
    Bound bound = Bound::Mean;
    double dm = 0.0;
    double dk = 0.0;
    std::optional<ModalState> modal;
    std::string flag; ///< empty, "unphysical" or "overdamped"
};

struct ResponseForecast {
    double t_star = 0.0;
    Bound bound = Bound::Mean;
    double dm = 0.0;
    double dk = 0.0;
    std::optional<PredictedResponse> response;
    std::string flag;
};

struct Forecast {
    std::vector<double> grid;
    std::vector<QuantityForecast> quantities;
    std::vector<ModalForecast> modal;
    std::vector<ResponseForecast> responses;

    const QuantityForecast &get(Quantity q, Method m) const {
        for (const auto &f : quantities)
            if (f.quantity == q && f.method == m)
                return f;
        throw Error(Errc::ConfigInvalid, "no forecast for " + std::string(to_string(q)));
    }
};

/// Modal quantities for given deltas; states outside the physical manifold
/// are flagged instead of thrown.
inline ModalForecast modal_at(const NominalModel &nominal, double t_star, Bound bound, double dm, double dk) {
    ModalForecast f{t_star, bound, dm, dk, std::nullopt, {}};
    try {
        f.modal = modal_state(nominal, dm, dk);
    } catch (const Error &e) {
        if (e.code() == Errc::Overdamped)
            f.flag = "overdamped";
        else if (e.code() == Errc::DegenerateMass || e.code() == Errc::DegenerateStiffness)
            f.flag = "unphysical";
        else
            throw;
    }
    return f;
}

inline ResponseForecast response_at(const NominalModel &nominal, double t_star, Bound bound, double dm, double dk,
                                    const ResponseSettings &settings) {
    const ModalForecast m = modal_at(nominal, t_star, bound, dm, dk);
    ResponseForecast r{t_star, bound, dm, dk, std::nullopt, m.flag};
    if (!m.modal)
        return r;
    std::vector<double> grid(settings.points);
    const double span = settings.duration * nominal.period0;
    for (std::size_t i = 0; i < grid.size(); ++i)
        grid[i] = span * static_cast<double>(i) / static_cast<double>(grid.size() - 1);
    r.response = free_response(nominal, dm, dk, settings.u_init, settings.v_init, grid);
    return r;
}

inline std::vector<PredictiveDistribution> predict_grid(const MoEGPModel &model, std::span<const double> grid,
                                                        std::size_t threads) {
    std::vector<PredictiveDistribution> out(grid.size());
    parallel_for(grid.size(), threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i)
            out[i] = posterior_predictive(grid[i], model);
    });
    return out;
}

/// Delta forecasts for both methods over the grid, modal quantities for
/// every grid point and bound, and free responses at the configured
/// service times. The physics uses the mixture model's predictions.
inline Forecast predict_future(const TwinState &twin, std::span<const double> grid) {
    const auto &cfg = twin.config;
    const NominalModel nominal = cfg.nominal();
    Forecast f;
    f.grid.assign(grid.begin(), grid.end());
    for (const auto &qm : twin.quantities)
        for (Method m : {Method::MeGp, Method::Baseline})
            f.quantities.push_back({qm.quantity, m, predict_grid(qm.model(m), grid, cfg.threads)});

    auto deltas = [&](const std::map<Quantity, const PredictiveDistribution *> &at, Bound b) {
        double dm = 0.0, dk = 0.0;
        for (const auto &[q, p] : at)
            (q == Quantity::DeltaK ? dk : dm) = summary_value(*p, b);
        return std::pair{dm, dk};
    };
    for (std::size_t i = 0; i < grid.size(); ++i) {
        std::map<Quantity, const PredictiveDistribution *> at;
        for (const auto &qm : twin.quantities)
            at[qm.quantity] = &f.get(qm.quantity, Method::MeGp).points[i];
        for (Bound b : all_bounds) {
            const auto [dm, dk] = deltas(at, b);
            f.modal.push_back(modal_at(nominal, grid[i], b, dm, dk));
        }
    }
    const auto &times = cfg.response.service_times;
    std::map<Quantity, std::vector<PredictiveDistribution>> at_times;
    for (const auto &qm : twin.quantities)
        at_times[qm.quantity] = predict_grid(qm.me_gp, times, cfg.threads);
    for (std::size_t i = 0; i < times.size(); ++i) {
        std::map<Quantity, const PredictiveDistribution *> at;
        for (const auto &[q, v] : at_times)
            at[q] = &v[i];
        for (Bound b : all_bounds) {
            const auto [dm, dk] = deltas(at, b);
            f.responses.push_back(response_at(nominal, times[i], b, dm, dk, cfg.response));
        }
    }
    return f;
}

/// RMSE of the predictive mean against ground truth over lo < t <= hi.
inline double interval_rmse(const QuantityForecast &f, const ScenarioConfig &config, double lo, double hi) {
    double se = 0.0;
    std::size_t n = 0;
    for (const auto &p : f.points) {
        if (!(p.t_star > lo && p.t_star <= hi))
            continue;
        const auto truth = ground_truth(config, f.quantity, p.t_star);
        if (!truth)
            return std::numeric_limits<double>::quiet_NaN();
        se += (p.mean - *truth) * (p.mean - *truth);
        ++n;
    }
    return n ? std::sqrt(se / static_cast<double>(n)) : std::numeric_limits<double>::quiet_NaN();
}

/// Fraction of grid points whose ground truth lies in the 95% band.
inline double band_coverage(const QuantityForecast &f, const ScenarioConfig &config) {
    std::size_t in = 0;
    for (const auto &p : f.points) {
        const auto truth = ground_truth(config, f.quantity, p.t_star);
        if (!truth)
            return std::numeric_limits<double>::quiet_NaN();
        in += (*truth >= p.quantile(0.025) && *truth <= p.quantile(0.975)) ? 1 : 0;
    }
    return f.points.empty() ? std::numeric_limits<double>::quiet_NaN()
                            : static_cast<double>(in) / static_cast<double>(f.points.size());
}

struct ErrorSummary {
    Quantity quantity = Quantity::DeltaK;
    Method method = Method::MeGp;
    double rmse_window = 0.0;        ///< [start, tau]
    double rmse_extrapolation = 0.0; ///< (tau, end]
    double coverage = 0.0;
};

inline std::vector<ErrorSummary> summarize_errors(const Forecast &f, const ScenarioConfig &config) {
    std::vector<ErrorSummary> out;
    const double inf = std::numeric_limits<double>::infinity();
    for (const auto &q : f.quantities)
        out.push_back({q.quantity, q.method, interval_rmse(q, config, -inf, config.tau),
                       interval_rmse(q, config, config.tau, inf), band_coverage(q, config)});
    return out;
}

// ---- artifacts ----

inline json twin_to_json(const TwinState &t) {
    json obs = json::array();
    for (const auto &o : t.observations)
        obs.push_back({{"t_s", o.t_s},
                       {"omega_ds", o.omega_ds},
                       {"lambda_re", o.lambda_re ? json(*o.lambda_re) : json(nullptr)},
                       {"sigma0", o.sigma0}});
    json quantities = json::array();
    for (const auto &q : t.quantities) {
        std::vector<double> ts, ys;
        for (const auto &s : q.training) {
            ts.push_back(s.t_s);
            ys.push_back(s.y);
        }
        quantities.push_back({{"quantity", std::string(to_string(q.quantity))},
                              {"training", {{"t_s", ts}, {"y", ys}}},
                              {"me_gp", model_to_json(q.me_gp)},
                              {"baseline", model_to_json(q.baseline)}});
    }
    return json{{"schema", std::string(TwinState::schema)},
                {"config_sha256", t.config_sha256},
                {"config", canonical_config(t.config)},
                {"observations", std::move(obs)},
                {"training_digests", t.training_digests},
                {"last_update_time", t.last_update_time},
                {"quantities", std::move(quantities)}};
}

inline TwinState twin_from_json(const json &j) {
    try {
        if (j.at("schema").get<std::string>() != TwinState::schema)
            throw Error(Errc::ParseError, "unsupported twin schema '" + j.at("schema").get<std::string>() + "'");
        TwinState t;
        t.config = parse_config(j.at("config").get<std::string>(), "twin config");
        t.config_sha256 = j.at("config_sha256").get<std::string>();
        if (config_digest(t.config) != t.config_sha256)
            throw Error(Errc::ProvenanceMismatch, "embedded configuration does not match its digest");
        for (const auto &o : j.at("observations")) {
            FrequencyObservation f;
            f.t_s = o.at("t_s").get<double>();
            f.omega_ds = o.at("omega_ds").get<double>();
            if (!o.at("lambda_re").is_null())
                f.lambda_re = o.at("lambda_re").get<double>();
            f.sigma0 = o.at("sigma0").get<double>();
            t.observations.push_back(f);
        }
        t.training_digests = j.at("training_digests").get<std::vector<std::string>>();
        t.last_update_time = j.at("last_update_time").get<double>();
        for (const auto &q : j.at("quantities")) {
            QuantityModel qm;
            qm.quantity = parse_quantity(q.at("quantity").get<std::string>());
            const auto ts = q.at("training").at("t_s").get<std::vector<double>>();
            const auto ys = q.at("training").at("y").get<std::vector<double>>();
            if (ts.size() != ys.size())
                throw Error(Errc::ParseError, "training arrays differ in length");
            for (std::size_t i = 0; i < ts.size(); ++i)
                qm.training.push_back({ts[i], ys[i]});
            qm.me_gp = model_from_json(q.at("me_gp"));
            qm.baseline = model_from_json(q.at("baseline"));
            t.quantities.push_back(std::move(qm));
        }
        return t;
    } catch (const json::exception &ex) {
        throw Error(Errc::ParseError, std::string("twin JSON: ") + ex.what());
    }
}

inline TwinState load_twin(const std::string &path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception &ex) {
        throw Error(Errc::ParseError, path + ": " + ex.what());
    }
    return twin_from_json(j);
}

inline std::string predictions_csv(const Forecast &f, const ScenarioConfig &config, const std::string &digest) {
    std::string out = digest_line(digest) + "t_star,method,quantity,mean,variance,q025,q500,q975,ground_truth\n";
    for (const auto &q : f.quantities)
        for (const auto &p : q.points)
            out += fmt_num(p.t_star) + "," + std::string(to_string(q.method)) + "," +
                   std::string(to_string(q.quantity)) + "," + fmt_num(p.mean) + "," + fmt_num(p.variance) + "," +
                   fmt_num(p.quantile(0.025)) + "," + fmt_num(p.quantile(0.5)) + "," + fmt_num(p.quantile(0.975)) +
                   "," + fmt_opt(ground_truth(config, q.quantity, p.t_star)) + "\n";
    return out;
}

inline std::string frequencies_csv(const Forecast &f, const std::string &digest) {
    std::string out = digest_line(digest) + "t_star,bound,delta_m,delta_k,omega_s,zeta_s,omega_ds,flag\n";
    for (const auto &m : f.modal) {
        out += fmt_num(m.t_star) + "," + std::string(to_string(m.bound)) + "," + fmt_num(m.dm) + "," + fmt_num(m.dk);
        if (m.modal)
            out += "," + fmt_num(m.modal->omega) + "," + fmt_num(m.modal->zeta) + "," + fmt_num(m.modal->omega_d) + ",\n";
        else
            out += ",,,," + m.flag + "\n";
    }
    return out;
}

inline std::string response_csv(const Forecast &f, const std::string &digest) {
    std::string out = digest_line(digest) + "t_star,bound,t,displacement,velocity,flag\n";
    for (const auto &r : f.responses) {
        const std::string head = fmt_num(r.t_star) + "," + std::string(to_string(r.bound)) + ",";
        if (!r.response) {
            out += head + ",,," + r.flag + "\n";
            continue;
        }
        for (std::size_t i = 0; i < r.response->time.size(); ++i)
            out += head + fmt_num(r.response->time[i]) + "," + fmt_num(r.response->displacement[i]) + "," +
                   fmt_num(r.response->velocity[i]) + ",\n";
    }
    return out;
}

using ArtifactSet = std::vector<std::pair<std::string, std::string>>; ///< (file name, contents)

inline ArtifactSet observation_artifacts(const ScenarioConfig &config, std::span<const FrequencyObservation> obs) {
    return {{"observations.csv", observations_csv(obs, config_digest(config))}};
}

inline ArtifactSet processed_artifacts(const ScenarioConfig &config, std::span<const FrequencyObservation> obs) {
    const auto processed = process_dataset(obs, config.nominal(), config.degradation_case);
    return {{"processed.csv", processed_csv(obs, processed, config_digest(config))}};
}

/// Observations, processed deltas, traces and the twin state.
inline ArtifactSet training_artifacts(const TwinState &t) {
    const std::string &d = t.config_sha256;
    ArtifactSet a = observation_artifacts(t.config, t.observations);
    for (auto &p : processed_artifacts(t.config, t.observations))
        a.push_back(std::move(p));
    for (const auto &q : t.quantities)
        for (Method m : {Method::MeGp, Method::Baseline}) {
            const std::string tag = std::string(to_string(q.quantity)) + "_" + std::string(to_string(m));
            a.emplace_back("em_trace_" + tag + ".csv", em_trace_csv(q.trace(m), q.model(m).experts, d));
            a.emplace_back("smc_trace_" + tag + ".csv", smc_trace_csv(q.smc_trace(m), d));
        }
    json j = twin_to_json(t);
    a.emplace_back("twin.json", j.dump(1) + "\n");
    return a;
}

inline ArtifactSet forecast_artifacts(const TwinState &t, const Forecast &f) {
    return {{"predictions.csv", predictions_csv(f, t.config, t.config_sha256)},
            {"frequencies.csv", frequencies_csv(f, t.config_sha256)},
            {"response.csv", response_csv(f, t.config_sha256)}};
}

/// Output directory from the config, else $SDTWIN_OUTPUT_ROOT, else ./out.
inline std::filesystem::path resolve_output_dir(const ScenarioConfig &config) {
    if (!config.output_dir.empty())
        return config.output_dir;
    if (const char *root = std::getenv("SDTWIN_OUTPUT_ROOT"); root && *root)
        return root;
    return "out";
}

/// Writes the set plus config.toml and manifest.json into a sibling staging
/// directory, then swaps it into place. Nothing is left behind on failure.
inline void commit_artifacts(const std::filesystem::path &dir, const ScenarioConfig &config, const ArtifactSet &files) {
    namespace fs = std::filesystem;
    const std::string digest = config_digest(config);
    const fs::path target = fs::absolute(dir).lexically_normal();
    const fs::path staging = target.parent_path() / (target.filename().string() + ".partial");
    try {
        fs::remove_all(staging);
        fs::create_directories(staging);
        json manifest{{"schema", "sdtwin.manifest/1"}, {"config_sha256", digest}, {"files", json::object()}};
        auto put = [&](const std::string &name, const std::string &text) {
            write_text_file(staging / name, text);
            manifest["files"][name] = sha256_hex(text);
        };
        put("config.toml", digest_line(digest) + canonical_config(config));
        for (const auto &[name, text] : files)
            put(name, text);
        write_text_file(staging / "manifest.json", manifest.dump(1) + "\n");
        fs::remove_all(target);
        fs::rename(staging, target);
    } catch (const fs::filesystem_error &e) {
        std::error_code ec;
        fs::remove_all(staging, ec);
        throw Error(Errc::IoError, e.what());
    } catch (...) {
        std::error_code ec;
        fs::remove_all(staging, ec);
        throw;
    }
}

struct PipelineResult {
    TwinState state;
    Forecast forecast;
    std::filesystem::path directory;
};

/// Generates or loads data, inverts, fits both methods, forecasts and
/// writes the complete artifact bundle.
inline PipelineResult run_pipeline(const ScenarioConfig &config, std::optional<std::filesystem::path> dir = {}) {
    config.validate();
    PipelineResult r;
    r.state = train_twin(config, scenario_observations(config));
    r.forecast = predict_future(r.state, config.grid.points());
    r.directory = dir ? *dir : resolve_output_dir(config);
    ArtifactSet files = training_artifacts(r.state);
    for (auto &p : forecast_artifacts(r.state, r.forecast))
        files.push_back(std::move(p));
    commit_artifacts(r.directory, config, files);
    return r;
}

struct VerifyReport {
    std::string config_sha256;
    std::vector<std::string> problems;
    bool ok() const { return problems.empty(); }
};

/// Recomputes the configuration digest and every file digest in a bundle
/// and checks the digests embedded in each artifact.
inline VerifyReport verify_artifacts(const std::filesystem::path &dir) {
    namespace fs = std::filesystem;
    VerifyReport rep;
    json manifest;
    try {
        manifest = json::parse(read_file((dir / "manifest.json").string()));
        rep.config_sha256 = manifest.at("config_sha256").get<std::string>();
    } catch (const std::exception &e) {
        rep.problems.push_back(std::string("manifest.json: ") + e.what());
        return rep;
    }
    try {
        const std::string text = read_file((dir / "config.toml").string());
        const std::string actual = config_digest(parse_config(text, "config.toml"));
        if (actual != rep.config_sha256)
            rep.problems.push_back("config.toml: digest " + actual + " differs from manifest");
        if (embedded_csv_digest(text) != rep.config_sha256)
            rep.problems.push_back("config.toml: embedded digest differs from manifest");
    } catch (const std::exception &e) {
        rep.problems.push_back(std::string("config.toml: ") + e.what());
    }
    const auto &files = manifest.value("files", json::object());
    for (const auto &[name, expected] : files.items()) {
        const fs::path path = dir / name;
        std::string text;
        try {
            text = read_file(path.string());
        } catch (const Error &) {
            rep.problems.push_back(name + ": missing");
            continue;
        }
        if (sha256_hex(text) != expected.get<std::string>())
            rep.problems.push_back(name + ": content digest mismatch");
        if (path.extension() == ".csv" && embedded_csv_digest(text) != rep.config_sha256)
            rep.problems.push_back(name + ": embedded config digest mismatch");
        if (path.extension() == ".json") {
            try {
                if (json::parse(text).at("config_sha256").get<std::string>() != rep.config_sha256)
                    rep.problems.push_back(name + ": embedded config digest mismatch");
            } catch (const std::exception &e) {
                rep.problems.push_back(name + ": " + e.what());
            }
        }
    }
    for (const auto &entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name != "manifest.json" && !files.contains(name))
            rep.problems.push_back(name + ": not listed in manifest");
    }
    return rep;
}

// ---- experiment suites ----

struct SuiteCell {
    std::string name;
    ScenarioConfig config;
};

/// The published experiment grid: stiffness x tau {150, 250, 550} x sigma0
/// {0.005, 0.015}; mass x tau {150, 550} x sigma0 {0.005, 0.015}; joint at
/// sigma0 0.025 with tau 150 (n 75, 120, 150) and tau 350 (n 75).
inline std::vector<SuiteCell> paper_matrix(const ScenarioConfig &base) {
    std::vector<SuiteCell> cells;
    auto add = [&](DegradationCase c, double tau, std::size_t n, double sigma0) {
        ScenarioConfig cfg = base;
        cfg.degradation_case = c;
        cfg.tau = tau;
        cfg.n_obs = n;
        cfg.sigma0 = sigma0;
        cfg.observations.clear();
        cells.push_back({std::string(to_string(c)) + "_tau" + fmt_num(tau) + "_n" + std::to_string(n) + "_sigma" +
                             fmt_num(sigma0),
                         cfg});
    };
    for (double tau : {150.0, 250.0, 550.0})
        for (double s : {0.005, 0.015})
            add(DegradationCase::Stiffness, tau, tau == 150.0 ? 35 : 50, s);
    for (double tau : {150.0, 550.0})
        for (double s : {0.005, 0.015})
            add(DegradationCase::Mass, tau, tau == 150.0 ? 75 : 175, s);
    for (std::size_t n : {75, 120, 150})
        add(DegradationCase::Joint, 150.0, n, 0.025);
    add(DegradationCase::Joint, 350.0, 75, 0.025);
    return cells;
}

inline std::string summary_header() {
    return "cell,case,tau,n_obs,sigma0,quantity,method,rmse_window,rmse_extrapolation,coverage95\n";
}

inline std::string summary_rows(const std::string &cell, const ScenarioConfig &config, const Forecast &f) {
    std::string out;
    for (const auto &e : summarize_errors(f, config))
        out += cell + "," + std::string(to_string(config.degradation_case)) + "," + fmt_num(config.tau) + "," +
               std::to_string(config.n_obs) + "," + fmt_num(config.sigma0) + "," + std::string(to_string(e.quantity)) +
               "," + std::string(to_string(e.method)) + "," + fmt_num(e.rmse_window) + "," +
               fmt_num(e.rmse_extrapolation) + "," + fmt_num(e.coverage) + "\n";
    return out;
}

} // namespace sdtwin
