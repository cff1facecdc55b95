// CSV tables and JSON model files. Every artifact carries the digest of the
// configuration that produced it: CSVs in a leading comment line, JSON in a
// "config_sha256" field.
#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "degradation.hpp"
#include "digest.hpp"
#include "em.hpp"
#include "error.hpp"
#include "inversion.hpp"
#include "moe_gp.hpp"
#include "smc.hpp"

namespace sdtwin {

using json = nlohmann::json;

inline constexpr std::string_view digest_prefix = "# config_sha256=";

/// Shortest text that parses back to the same double. Negative zero prints as 0.
inline std::string fmt_num(double v) {
    if (v == 0.0)
        v = 0.0;
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, p};
}

inline std::string fmt_opt(const std::optional<double> &v) { return v ? fmt_num(*v) : std::string(); }

inline std::string digest_line(const std::string &digest) {
    return digest.empty() ? std::string() : std::string(digest_prefix) + digest + "\n";
}

/// Digest embedded in the first line of a CSV, or empty.
inline std::string embedded_csv_digest(std::string_view text) {
    if (text.substr(0, digest_prefix.size()) != digest_prefix)
        return {};
    const auto end = text.find('\n');
    return std::string(text.substr(digest_prefix.size(), end - digest_prefix.size()));
}

inline void write_text_file(const std::filesystem::path &path, std::string_view text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error(Errc::IoError, "cannot write " + path.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out)
        throw Error(Errc::IoError, "write failed for " + path.string());
}

inline std::string observations_csv(std::span<const FrequencyObservation> obs, const std::string &digest = {}) {
    std::string out = digest_line(digest) + "t_s,omega_ds,lambda_re,sigma0\n";
    for (const auto &o : obs)
        out += fmt_num(o.t_s) + "," + fmt_num(o.omega_ds) + "," + fmt_opt(o.lambda_re) + "," + fmt_num(o.sigma0) + "\n";
    return out;
}

namespace detail {

inline std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        fields.emplace_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos)
            break;
        start = comma + 1;
    }
    return fields;
}

inline double parse_field(const std::string &text, const std::string &where, const char *column) {
    double v = 0.0;
    auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (text.empty() || ec != std::errc() || p != text.data() + text.size())
        throw Error(Errc::ParseError, where + ": column " + column + ": '" + text + "' is not a number");
    return v;
}

} // namespace detail

/// Parses an observation table. Blank lines and '#' comments are skipped;
/// errors name the 1-based line number.
inline std::vector<FrequencyObservation> parse_observations_csv(std::string_view text,
                                                                const std::string &source = "<string>") {
    std::vector<FrequencyObservation> obs;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty() || line.front() == '#')
            continue;
        const std::string where = source + ":" + std::to_string(lineno);
        if (!header) {
            if (line != "t_s,omega_ds,lambda_re,sigma0")
                throw Error(Errc::ParseError, where + ": expected header t_s,omega_ds,lambda_re,sigma0");
            header = true;
            continue;
        }
        const auto f = detail::split_csv_line(line);
        if (f.size() != 4)
            throw Error(Errc::ParseError, where + ": expected 4 fields, found " + std::to_string(f.size()));
        FrequencyObservation o;
        o.t_s = detail::parse_field(f[0], where, "t_s");
        o.omega_ds = detail::parse_field(f[1], where, "omega_ds");
        if (!f[2].empty())
            o.lambda_re = detail::parse_field(f[2], where, "lambda_re");
        o.sigma0 = detail::parse_field(f[3], where, "sigma0");
        obs.push_back(o);
    }
    if (!header)
        throw Error(Errc::ParseError, source + ": missing header");
    return obs;
}

inline std::vector<FrequencyObservation> read_observations_csv(const std::string &path) {
    return parse_observations_csv(read_file(path), path);
}

/// One row per input observation; rejected rows carry the reason code.
inline std::string processed_csv(std::span<const FrequencyObservation> obs, const ProcessedDataset &processed,
                                 const std::string &digest = {}) {
    std::string out = digest_line(digest) + "t_s,delta_k_hat,delta_m_hat,rejected\n";
    std::size_t next_est = 0;
    std::size_t next_rej = 0;
    for (std::size_t i = 0; i < obs.size(); ++i) {
        if (next_rej < processed.rejected.size() && processed.rejected[next_rej].index == i) {
            out += fmt_num(obs[i].t_s) + ",,," + std::string(to_string(processed.rejected[next_rej].reason)) + "\n";
            ++next_rej;
            continue;
        }
        const auto &e = processed.estimates.at(next_est++);
        out += fmt_num(e.t_s) + "," + fmt_opt(e.delta_k) + "," + fmt_opt(e.delta_m) + ",\n";
    }
    return out;
}

inline std::string em_trace_csv(const EmTrace &trace, std::size_t experts, const std::string &digest = {}) {
    std::string out = digest_line(digest) + "iter,em_error,expected_log_posterior";
    for (std::size_t m = 1; m <= experts; ++m)
        out += ",pi_" + std::to_string(m);
    out += "\n";
    for (const auto &it : trace.iterations) {
        out += std::to_string(it.iter) + "," + fmt_num(it.em_error) + "," + fmt_num(it.expected_log_posterior);
        for (double p : it.pi)
            out += "," + fmt_num(p);
        out += "\n";
    }
    return out;
}

inline std::string smc_trace_csv(std::span<const SmcStepRecord> trace, const std::string &digest = {}) {
    std::string out = digest_line(digest) + "step,gamma,ess,resampled,acceptance_rate\n";
    for (const auto &s : trace)
        out += std::to_string(s.step) + "," + fmt_num(s.gamma) + "," + fmt_num(s.ess) + "," +
               (s.resampled ? "1" : "0") + "," + fmt_num(s.acceptance_rate) + "\n";
    return out;
}

inline constexpr std::string_view model_schema = "sdtwin.model/1";

inline json model_to_json(const MoEGPModel &m) {
    const auto &e = m.ensemble;
    json particles = json::array();
    for (std::size_t i = 0; i < e.size(); ++i) {
        const auto p = e.particle(i);
        particles.push_back(std::vector<double>(p.begin(), p.end()));
    }
    return json{{"schema", std::string(model_schema)},
                {"experts", m.experts},
                {"mixing", m.mixing.pi},
                {"standardizer", {{"mean", m.standardizer.mean}, {"scale", m.standardizer.scale}}},
                {"dimension", e.dim},
                {"gamma", e.gamma},
                {"step_index", e.step_index},
                {"rng_state_digest", e.rng_state_digest},
                {"weights", e.weights},
                {"particles", std::move(particles)},
                {"provenance", m.provenance}};
}

inline MoEGPModel model_from_json(const json &j) {
    try {
        if (j.at("schema").get<std::string>() != model_schema)
            throw Error(Errc::ParseError, "unsupported model schema '" + j.at("schema").get<std::string>() + "'");
        MoEGPModel m;
        m.experts = j.at("experts").get<std::size_t>();
        m.mixing.pi = j.at("mixing").get<std::vector<double>>();
        m.mixing.validate();
        m.standardizer.mean = j.at("standardizer").at("mean").get<double>();
        m.standardizer.scale = j.at("standardizer").at("scale").get<double>();
        auto &e = m.ensemble;
        e.dim = j.at("dimension").get<std::size_t>();
        e.gamma = j.at("gamma").get<double>();
        e.step_index = j.at("step_index").get<std::size_t>();
        e.rng_state_digest = j.at("rng_state_digest").get<std::uint64_t>();
        e.weights = j.at("weights").get<std::vector<double>>();
        for (const auto &p : j.at("particles")) {
            const auto row = p.get<std::vector<double>>();
            if (row.size() != e.dim)
                throw Error(Errc::ParseError, "particle length differs from dimension");
            e.values.insert(e.values.end(), row.begin(), row.end());
        }
        if (e.values.size() != e.dim * e.weights.size())
            throw Error(Errc::ParseError, "particle count differs from weight count");
        if (e.dim != HyperparameterLayout{m.experts}.size() || m.mixing.pi.size() != m.experts)
            throw Error(Errc::ParseError, "model dimensions inconsistent with expert count");
        e.log_unnorm_weights.resize(e.weights.size());
        for (std::size_t i = 0; i < e.weights.size(); ++i)
            e.log_unnorm_weights[i] = std::log(e.weights[i]);
        m.provenance = j.at("provenance").get<std::string>();
        return m;
    } catch (const json::exception &ex) {
        throw Error(Errc::ParseError, std::string("model JSON: ") + ex.what());
    }
}

} // namespace sdtwin
