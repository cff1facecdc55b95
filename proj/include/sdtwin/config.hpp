// Scenario configuration: schema, TOML loading, dotted overrides and the
// canonical text form that provenance digests are computed from.
#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>
#include <vector>

#include <toml.hpp>

#include "degradation.hpp"
#include "digest.hpp"
#include "em.hpp"
#include "error.hpp"
#include "sdof.hpp"

namespace sdtwin {

/// Service-time grid for prediction tables, endpoints included.
struct PredictionGrid {
    double start = 0.0;
    double end = 1000.0;
    double step = 5.0;

    void validate() const {
        if (!(step > 0.0) || !(end >= start) || !std::isfinite(start) || !std::isfinite(end))
            throw Error(Errc::ConfigInvalid, "prediction grid requires step > 0 and end >= start");
    }
    std::vector<double> points() const {
        validate();
        const auto n = static_cast<std::size_t>(std::floor((end - start) / step + 1e-9)) + 1;
        std::vector<double> g(n);
        for (std::size_t i = 0; i < n; ++i)
            g[i] = start + static_cast<double>(i) * step;
        return g;
    }
};

/// Free-vibration response settings. Duration is in nominal periods.
struct ResponseSettings {
    double u_init = 1.0;
    double v_init = 0.0;
    double duration = 10.0;
    std::size_t points = 201;
    std::vector<double> service_times{0.0, 150.0, 300.0, 600.0, 1000.0};
};

struct ScenarioConfig {
    DegradationCase degradation_case = DegradationCase::Stiffness;
    std::uint64_t seed = 1;
    std::string observations; ///< CSV path; empty means simulate
    double m0 = 1.0;
    double k0 = 4.0 * std::numbers::pi * std::numbers::pi;
    double zeta0 = 0.05;
    StiffnessDegradationParams stiffness;
    MassDegradationParams mass;
    double tau = 150.0;
    std::size_t n_obs = 35;
    double sigma0 = 0.005;
    EmConfig em;
    PredictionGrid grid;
    ResponseSettings response;
    std::size_t threads = 1;
    std::string output_dir;

    bool simulated() const { return observations.empty(); }

    NominalModel nominal() const {
        if (!(m0 > 0.0) || !(k0 > 0.0))
            throw Error(Errc::NonPositiveParameter, "nominal m0 and k0 must be > 0");
        if (!(zeta0 >= 0.0))
            throw Error(Errc::NonPositiveParameter, "nominal zeta0 must be >= 0");
        return nominal_from_physical(m0, 2.0 * zeta0 * std::sqrt(k0 * m0), k0);
    }

    SensingConfig sensing() const {
        SensingConfig s;
        s.degradation_case = degradation_case;
        s.nominal = nominal();
        s.stiffness = stiffness;
        s.mass = mass;
        s.tau = tau;
        s.n_obs = n_obs;
        s.sigma0 = sigma0;
        s.seed = seed;
        return s;
    }

    void validate() const {
        if (n_obs < 2)
            throw Error(Errc::InsufficientData, "sensing.n_obs must be >= 2");
        if (!(tau > 0.0))
            throw Error(Errc::ConfigInvalid, "sensing.tau must be > 0");
        if (!(sigma0 >= 0.0))
            throw Error(Errc::ConfigInvalid, "sensing.sigma0 must be >= 0");
        (void)nominal();
        mass.validate();
        em.validate();
        grid.validate();
        if (response.points < 2 || !(response.duration > 0.0))
            throw Error(Errc::ConfigInvalid, "response needs >= 2 points and duration > 0");
    }
};

enum class ValueType { Int, Float, Bool, String, FloatList };

constexpr std::string_view to_string(ValueType t) noexcept {
    switch (t) {
    case ValueType::Int: return "int";
    case ValueType::Float: return "float";
    case ValueType::Bool: return "bool";
    case ValueType::String: return "string";
    case ValueType::FloatList: return "float list";
    }
    return "?";
}

using ConfigValue = std::variant<std::int64_t, double, bool, std::string, std::vector<double>>;

/// One schema row. Keys flagged non-semantic (thread count, output path)
/// do not enter the canonical form or the digest.
struct ConfigKey {
    std::string key;
    ValueType type;
    std::string units;
    std::string description;
    bool semantic = true;
    std::function<ConfigValue(const ScenarioConfig &)> get;
    std::function<void(ScenarioConfig &, const ConfigValue &)> set;
};

namespace detail {

inline std::string format_double(double v) {
    if (std::isnan(v))
        return "nan";
    if (std::isinf(v))
        return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    std::string s(buf, p);
    if (s.find_first_of(".e") == std::string::npos)
        s += ".0";
    return s;
}

inline std::string quote(const std::string &s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\')
            out += '\\';
        out += c;
    }
    return out + '"';
}

inline std::string format_value(const ConfigValue &v) {
    return std::visit(
        [](const auto &x) -> std::string {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, std::int64_t>)
                return std::to_string(x);
            else if constexpr (std::is_same_v<T, double>)
                return format_double(x);
            else if constexpr (std::is_same_v<T, bool>)
                return x ? "true" : "false";
            else if constexpr (std::is_same_v<T, std::string>)
                return quote(x);
            else {
                std::string s = "[";
                for (std::size_t i = 0; i < x.size(); ++i)
                    s += (i ? ", " : "") + format_double(x[i]);
                return s + "]";
            }
        },
        v);
}

inline std::uint64_t as_count(const ConfigValue &v, const std::string &key) {
    const auto i = std::get<std::int64_t>(v);
    if (i < 0)
        throw Error(Errc::ConfigInvalid, key + " must be >= 0");
    return static_cast<std::uint64_t>(i);
}

template <class Ref>
ConfigKey bind(std::string key, std::string units, std::string description, Ref ref, bool semantic = true) {
    using T = std::remove_reference_t<decltype(ref(std::declval<ScenarioConfig &>()))>;
    ConfigKey k{std::move(key), ValueType::Float, std::move(units), std::move(description), semantic, {}, {}};
    k.get = [ref](const ScenarioConfig &c) -> ConfigValue {
        const auto &x = ref(const_cast<ScenarioConfig &>(c));
        if constexpr (std::is_same_v<T, double> || std::is_same_v<T, bool> || std::is_same_v<T, std::string> ||
                      std::is_same_v<T, std::vector<double>>)
            return x;
        else
            return static_cast<std::int64_t>(x);
    };
    const std::string name = k.key;
    k.set = [ref, name](ScenarioConfig &c, const ConfigValue &v) {
        if constexpr (std::is_same_v<T, double>)
            ref(c) = std::get<double>(v);
        else if constexpr (std::is_same_v<T, bool>)
            ref(c) = std::get<bool>(v);
        else if constexpr (std::is_same_v<T, std::string>)
            ref(c) = std::get<std::string>(v);
        else if constexpr (std::is_same_v<T, std::vector<double>>)
            ref(c) = std::get<std::vector<double>>(v);
        else
            ref(c) = static_cast<T>(as_count(v, name));
    };
    if constexpr (std::is_same_v<T, double>)
        k.type = ValueType::Float;
    else if constexpr (std::is_same_v<T, bool>)
        k.type = ValueType::Bool;
    else if constexpr (std::is_same_v<T, std::string>)
        k.type = ValueType::String;
    else if constexpr (std::is_same_v<T, std::vector<double>>)
        k.type = ValueType::FloatList;
    else
        k.type = ValueType::Int;
    return k;
}

/// Mass steps are exposed as three parallel lists.
inline ConfigKey mass_steps_key(std::string key, std::string units, std::string description,
                                double MassStep::*field) {
    ConfigKey k{std::move(key), ValueType::FloatList, std::move(units), std::move(description), true, {}, {}};
    k.get = [field](const ScenarioConfig &c) -> ConfigValue {
        std::vector<double> v;
        for (const auto &s : c.mass.steps)
            v.push_back(s.*field);
        return v;
    };
    k.set = [field](ScenarioConfig &c, const ConfigValue &v) {
        const auto &list = std::get<std::vector<double>>(v);
        c.mass.steps.resize(list.size());
        for (std::size_t i = 0; i < list.size(); ++i)
            c.mass.steps[i].*field = list[i];
    };
    return k;
}

} // namespace detail

/// Every configurable key, in canonical order.
inline const std::vector<ConfigKey> &config_schema() {
    using detail::bind;
    static const std::vector<ConfigKey> schema = [] {
        std::vector<ConfigKey> s;
        ConfigKey kase{"scenario.case", ValueType::String, "-", "degradation case: stiffness | mass | joint", true,
                       {}, {}};
        kase.get = [](const ScenarioConfig &c) -> ConfigValue { return std::string(to_string(c.degradation_case)); };
        kase.set = [](ScenarioConfig &c, const ConfigValue &v) { c.degradation_case = parse_case(std::get<std::string>(v)); };
        s.push_back(kase);
        s.push_back(bind("scenario.seed", "-", "master random seed", [](ScenarioConfig &c) -> auto & { return c.seed; }));
        s.push_back(bind("scenario.observations", "path", "observation CSV to load; empty simulates from the ground truth",
                         [](ScenarioConfig &c) -> auto & { return c.observations; }));
        s.push_back(bind("nominal.m0", "mass", "nominal mass", [](ScenarioConfig &c) -> auto & { return c.m0; }));
        s.push_back(bind("nominal.k0", "force/length", "nominal stiffness", [](ScenarioConfig &c) -> auto & { return c.k0; }));
        s.push_back(bind("nominal.zeta0", "-", "nominal damping ratio (sets c0)", [](ScenarioConfig &c) -> auto & { return c.zeta0; }));
        s.push_back(bind("stiffness.slow_rate", "1/time", "slow process decay rate",
                         [](ScenarioConfig &c) -> auto & { return c.stiffness.slow_rate; }));
        s.push_back(bind("stiffness.slow_amplitude", "-", "slow process modulation amplitude",
                         [](ScenarioConfig &c) -> auto & { return c.stiffness.slow_amplitude; }));
        s.push_back(bind("stiffness.slow_frequency", "rad/time", "slow process modulation frequency",
                         [](ScenarioConfig &c) -> auto & { return c.stiffness.slow_frequency; }));
        s.push_back(bind("stiffness.fast_rate", "1/time", "fast process decay rate",
                         [](ScenarioConfig &c) -> auto & { return c.stiffness.fast_rate; }));
        s.push_back(bind("stiffness.fast_amplitude", "-", "fast process modulation amplitude",
                         [](ScenarioConfig &c) -> auto & { return c.stiffness.fast_amplitude; }));
        s.push_back(bind("stiffness.fast_frequency", "rad/time", "fast process modulation frequency",
                         [](ScenarioConfig &c) -> auto & { return c.stiffness.fast_frequency; }));
        s.push_back(bind("mass.sawtooth_frequency", "rad/time", "fast sawtooth frequency",
                         [](ScenarioConfig &c) -> auto & { return c.mass.sawtooth_frequency; }));
        s.push_back(bind("mass.sawtooth_amplitude", "-", "fast sawtooth amplitude",
                         [](ScenarioConfig &c) -> auto & { return c.mass.sawtooth_amplitude; }));
        s.push_back(detail::mass_steps_key("mass.step_starts", "time", "slow step interval starts (inclusive)", &MassStep::start));
        s.push_back(detail::mass_steps_key("mass.step_ends", "time", "slow step interval ends (exclusive)", &MassStep::end));
        s.push_back(detail::mass_steps_key("mass.step_levels", "-", "slow step levels", &MassStep::level));
        s.push_back(bind("sensing.tau", "time", "observation window end", [](ScenarioConfig &c) -> auto & { return c.tau; }));
        s.push_back(bind("sensing.n_obs", "count", "equally spaced observations over [0, tau]",
                         [](ScenarioConfig &c) -> auto & { return c.n_obs; }));
        s.push_back(bind("sensing.sigma0", "-", "relative frequency noise level", [](ScenarioConfig &c) -> auto & { return c.sigma0; }));
        s.push_back(bind("model.experts", "count", "experts M in the mixture", [](ScenarioConfig &c) -> auto & { return c.em.experts; }));
        s.push_back(bind("smc.n_particles", "count", "particles N_s", [](ScenarioConfig &c) -> auto & { return c.em.smc.n_particles; }));
        s.push_back(bind("smc.n_steps", "count", "annealing steps n", [](ScenarioConfig &c) -> auto & { return c.em.smc.n_steps; }));
        s.push_back(bind("smc.ess_threshold", "-", "resample when ESS < ess_threshold * N_s",
                         [](ScenarioConfig &c) -> auto & { return c.em.smc.ess_threshold_fraction; }));
        s.push_back(bind("smc.proposal_scale", "-", "random-walk scale (variance scale^2/d times particle variance)",
                         [](ScenarioConfig &c) -> auto & { return c.em.smc.proposal_scale; }));
        s.push_back(bind("smc.variance_floor", "-", "minimum per-coordinate proposal variance",
                         [](ScenarioConfig &c) -> auto & { return c.em.smc.proposal_variance_floor; }));
        s.push_back(bind("smc.moves_per_step", "count", "MH moves per particle per step",
                         [](ScenarioConfig &c) -> auto & { return c.em.smc.moves_per_step; }));
        s.push_back(bind("smc.schedule_exponent", "-", "gamma_t = (t/n)^exponent",
                         [](ScenarioConfig &c) -> auto & { return c.em.smc.schedule_exponent; }));
        s.push_back(bind("smc.schedule", "-", "explicit gamma_0..gamma_n; empty uses the exponent rule",
                         [](ScenarioConfig &c) -> auto & { return c.em.smc.anneal_schedule; }));
        s.push_back(bind("em.epsilon", "-", "stop when ||pi - pi_prev||_2 <= epsilon", [](ScenarioConfig &c) -> auto & { return c.em.epsilon; }));
        s.push_back(bind("em.max_iters", "count", "EM iteration cap", [](ScenarioConfig &c) -> auto & { return c.em.max_iters; }));
        s.push_back(bind("em.pi_init", "-", "initial mixing coefficients; empty is uniform",
                         [](ScenarioConfig &c) -> auto & { return c.em.pi_init; }));
        s.push_back(bind("em.mstep_max_iters", "count", "M-step optimizer iteration cap",
                         [](ScenarioConfig &c) -> auto & { return c.em.m_step.max_iterations; }));
        s.push_back(bind("em.mstep_tolerance", "-", "M-step gradient-norm tolerance",
                         [](ScenarioConfig &c) -> auto & { return c.em.m_step.gradient_tolerance; }));
        s.push_back(bind("prediction.start", "time", "first prediction time", [](ScenarioConfig &c) -> auto & { return c.grid.start; }));
        s.push_back(bind("prediction.end", "time", "last prediction time", [](ScenarioConfig &c) -> auto & { return c.grid.end; }));
        s.push_back(bind("prediction.step", "time", "prediction grid spacing", [](ScenarioConfig &c) -> auto & { return c.grid.step; }));
        s.push_back(bind("response.u_init", "length", "initial displacement", [](ScenarioConfig &c) -> auto & { return c.response.u_init; }));
        s.push_back(bind("response.v_init", "length/time", "initial velocity", [](ScenarioConfig &c) -> auto & { return c.response.v_init; }));
        s.push_back(bind("response.duration", "periods", "response window in nominal periods",
                         [](ScenarioConfig &c) -> auto & { return c.response.duration; }));
        s.push_back(bind("response.points", "count", "samples per response curve", [](ScenarioConfig &c) -> auto & { return c.response.points; }));
        s.push_back(bind("response.service_times", "time", "service times at which responses are emitted",
                         [](ScenarioConfig &c) -> auto & { return c.response.service_times; }));
        s.push_back(bind("run.threads", "count", "worker threads (0 = all cores)", [](ScenarioConfig &c) -> auto & { return c.threads; }, false));
        s.push_back(bind("run.output_dir", "path", "artifact directory; empty uses $SDTWIN_OUTPUT_ROOT or ./out",
                         [](ScenarioConfig &c) -> auto & { return c.output_dir; }, false));
        return s;
    }();
    return schema;
}

inline const ConfigKey &find_key(std::string_view key) {
    for (const auto &k : config_schema())
        if (k.key == key)
            return k;
    throw Error(Errc::ConfigInvalid, "unknown config key '" + std::string(key) + "'");
}

/// Coerces a loosely typed value to the schema type of `key`.
inline ConfigValue coerce(const ConfigKey &key, const ConfigValue &v) {
    auto bad = [&] {
        return Error(Errc::ConfigInvalid, key.key + ": expected " + std::string(to_string(key.type)));
    };
    switch (key.type) {
    case ValueType::Int:
        if (auto p = std::get_if<std::int64_t>(&v))
            return *p;
        throw bad();
    case ValueType::Float:
        if (auto p = std::get_if<double>(&v))
            return *p;
        if (auto p = std::get_if<std::int64_t>(&v))
            return static_cast<double>(*p);
        throw bad();
    case ValueType::Bool:
        if (std::holds_alternative<bool>(v))
            return v;
        throw bad();
    case ValueType::String:
        if (std::holds_alternative<std::string>(v))
            return v;
        throw bad();
    case ValueType::FloatList:
        if (std::holds_alternative<std::vector<double>>(v))
            return v;
        throw bad();
    }
    throw bad();
}

inline void set_value(ScenarioConfig &c, std::string_view key, const ConfigValue &v) {
    const auto &k = find_key(key);
    k.set(c, coerce(k, v));
}

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

inline double parse_double(std::string_view text, const std::string &key) {
    const std::string t = trim(text);
    double d = 0.0;
    auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), d);
    if (ec != std::errc() || p != t.data() + t.size() || t.empty())
        throw Error(Errc::ConfigInvalid, key + ": '" + t + "' is not a number");
    return d;
}

} // namespace detail

/// Parses "key=value" with the value interpreted through the key's type.
/// Lists are comma separated, optionally bracketed.
inline void apply_override(ScenarioConfig &c, std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos)
        throw Error(Errc::ConfigInvalid, "override '" + std::string(assignment) + "' is not key=value");
    const std::string key = detail::trim(assignment.substr(0, eq));
    std::string text = detail::trim(assignment.substr(eq + 1));
    const auto &k = find_key(key);
    ConfigValue v;
    switch (k.type) {
    case ValueType::Int: {
        std::int64_t i = 0;
        auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), i);
        if (ec != std::errc() || p != text.data() + text.size() || text.empty())
            throw Error(Errc::ConfigInvalid, key + ": '" + text + "' is not an integer");
        v = i;
        break;
    }
    case ValueType::Float: v = detail::parse_double(text, key); break;
    case ValueType::Bool:
        if (text == "true") v = true;
        else if (text == "false") v = false;
        else throw Error(Errc::ConfigInvalid, key + ": '" + text + "' is not true/false");
        break;
    case ValueType::String:
        if (text.size() >= 2 && text.front() == '"' && text.back() == '"')
            text = text.substr(1, text.size() - 2);
        v = text;
        break;
    case ValueType::FloatList: {
        if (!text.empty() && text.front() == '[') {
            if (text.back() != ']')
                throw Error(Errc::ConfigInvalid, key + ": unterminated list");
            text = text.substr(1, text.size() - 2);
        }
        std::vector<double> list;
        std::stringstream ss(text);
        std::string item;
        while (std::getline(ss, item, ','))
            if (!detail::trim(item).empty())
                list.push_back(detail::parse_double(item, key));
        v = list;
        break;
    }
    }
    k.set(c, v);
}

namespace detail {

inline void flatten_toml(const toml::table &table, const std::string &prefix, ScenarioConfig &c) {
    for (const auto &[name, node] : table) {
        const std::string key = prefix.empty() ? std::string(name.str()) : prefix + "." + std::string(name.str());
        if (const auto *sub = node.as_table()) {
            flatten_toml(*sub, key, c);
            continue;
        }
        ConfigValue v;
        if (const auto *i = node.as_integer())
            v = i->get();
        else if (const auto *f = node.as_floating_point())
            v = f->get();
        else if (const auto *b = node.as_boolean())
            v = b->get();
        else if (const auto *s = node.as_string())
            v = s->get();
        else if (const auto *a = node.as_array()) {
            std::vector<double> list;
            for (const auto &e : *a) {
                if (const auto *ei = e.as_integer())
                    list.push_back(static_cast<double>(ei->get()));
                else if (const auto *ef = e.as_floating_point())
                    list.push_back(ef->get());
                else
                    throw Error(Errc::ConfigInvalid, key + ": list entries must be numbers");
            }
            v = list;
        } else
            throw Error(Errc::ConfigInvalid, key + ": unsupported value type");
        set_value(c, key, v);
    }
}

} // namespace detail

inline ScenarioConfig parse_config(std::string_view text, const std::string &source = "<string>") {
    ScenarioConfig c;
    try {
        const toml::table table = toml::parse(text, source);
        detail::flatten_toml(table, "", c);
    } catch (const toml::parse_error &e) {
        std::ostringstream msg;
        msg << source << ":" << e.source().begin.line << ":" << e.source().begin.column << ": " << e.description();
        throw Error(Errc::ConfigInvalid, msg.str());
    } catch (const Error &e) {
        throw Error(e.code(), source + ": " + e.what());
    }
    return c;
}

inline ScenarioConfig load_config(const std::string &path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const Error &) {
        throw Error(Errc::ConfigInvalid, "cannot read config file '" + path + "'");
    }
    return parse_config(text, path);
}

/// TOML text of every semantic key, in schema order, grouped by table.
/// Parsing this text reproduces the configuration exactly.
inline std::string canonical_config(const ScenarioConfig &c) {
    std::string out;
    std::string table;
    for (const auto &k : config_schema()) {
        if (!k.semantic)
            continue;
        const auto dot = k.key.find('.');
        const std::string t = k.key.substr(0, dot);
        if (t != table) {
            out += (out.empty() ? "[" : "\n[") + t + "]\n";
            table = t;
        }
        out += k.key.substr(dot + 1) + " = " + detail::format_value(k.get(c)) + "\n";
    }
    return out;
}

inline std::string config_digest(const ScenarioConfig &c) { return sha256_hex(canonical_config(c)); }

/// Schema listing for help text: key, type, default, units, description.
inline std::string describe_schema() {
    const ScenarioConfig defaults;
    std::ostringstream os;
    for (const auto &k : config_schema())
        os << "  " << k.key << " (" << to_string(k.type) << ", default " << detail::format_value(k.get(defaults))
           << ", units " << k.units << ")\n      " << k.description << "\n";
    return os.str();
}

} // namespace sdtwin
