// Ground-truth multi-timescale degradation and simulated frequency sensing.
#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"
#include "execution.hpp"
#include "sdof.hpp"

namespace sdtwin {

/// Which parameters evolve in a scenario.
enum class DegradationCase { Stiffness, Mass, Joint };

constexpr std::string_view to_string(DegradationCase c) noexcept {
    switch (c) {
    case DegradationCase::Stiffness: return "stiffness";
    case DegradationCase::Mass: return "mass";
    case DegradationCase::Joint: return "joint";
    }
    return "?";
}

inline DegradationCase parse_case(std::string_view name) {
    if (name == "stiffness") return DegradationCase::Stiffness;
    if (name == "mass") return DegradationCase::Mass;
    if (name == "joint") return DegradationCase::Joint;
    throw Error(Errc::ConfigInvalid, "unknown case '" + std::string(name) + "' (stiffness|mass|joint)");
}

/// Two superposed exponentially decaying, cosine-modulated processes.
/// Rates and frequencies are per unit service time.
struct StiffnessDegradationParams {
    double slow_rate = 0.4e-3;
    double slow_amplitude = 0.005;
    double slow_frequency = 7e-2;
    double fast_rate = 0.8e-3;
    double fast_amplitude = 0.01;
    double fast_frequency = 2e-1;
};

struct MassStep {
    double start = 0.0; ///< inclusive
    double end = 0.0;   ///< exclusive
    double level = 0.0;
};

/// Sawtooth fast term plus piecewise-constant slow term.
struct MassDegradationParams {
    double sawtooth_frequency = 0.15;
    double sawtooth_amplitude = 0.25;
    std::vector<MassStep> steps{{200.0, 400.0, 1.0}, {400.0, 600.0, 2.0}, {600.0, 800.0, 3.0}};

    void validate() const {
        if (!(sawtooth_frequency > 0.0) || !(sawtooth_amplitude >= 0.0))
            throw Error(Errc::ConfigInvalid, "mass sawtooth requires frequency > 0 and amplitude >= 0");
        for (std::size_t i = 0; i < steps.size(); ++i) {
            if (!(steps[i].end > steps[i].start))
                throw Error(Errc::ConfigInvalid, "mass step intervals must have end > start");
            if (i > 0 && steps[i].start < steps[i - 1].end)
                throw Error(Errc::ConfigInvalid, "mass step intervals must be ordered and non-overlapping");
        }
    }
};

/// Period-2pi sawtooth rising linearly from -1 (at multiples of 2pi) towards 1.
inline double sawtooth(double x) {
    const double y = x / (2.0 * std::numbers::pi);
    return 2.0 * (y - std::floor(y)) - 1.0;
}

inline double stiffness_delta(double t_s, const StiffnessDegradationParams &p = {}) {
    const double slow = 0.5 * std::exp(-p.slow_rate * t_s) *
                        (1.0 + p.slow_amplitude * std::cos(p.slow_frequency * t_s)) /
                        (1.0 + p.slow_amplitude);
    const double fast = 0.5 * std::exp(-p.fast_rate * t_s) *
                        (1.0 + p.fast_amplitude * std::cos(p.fast_frequency * t_s)) /
                        (1.0 + p.fast_amplitude);
    return slow + fast - 1.0;
}

inline double mass_delta_slow(double t_s, const MassDegradationParams &p = {}) {
    for (const auto &step : p.steps)
        if (t_s >= step.start && t_s < step.end)
            return step.level;
    return 0.0;
}

inline double mass_delta(double t_s, const MassDegradationParams &p = {}) {
    const double beta = p.sawtooth_frequency;
    return mass_delta_slow(t_s, p) +
           p.sawtooth_amplitude * sawtooth(beta * (t_s - std::numbers::pi / beta));
}

/// One (possibly noisy) sensor reading of the damped natural frequency.
struct FrequencyObservation {
    double t_s = 0.0;
    double omega_ds = 0.0;
    std::optional<double> lambda_re; ///< joint case only
    double sigma0 = 0.0;
};

/// Multiplicative white Gaussian noise on the damped frequency (and on the
/// eigenvalue real part when requested). Draw order from the seeded stream:
/// g, g', then one retry for g if the noisy frequency is non-positive.
inline FrequencyObservation observe_frequency(const NominalModel &model, double dm, double dk,
                                              double sigma0, std::uint64_t rng_seed,
                                              bool with_real_part = false, double t_s = 0.0) {
    const ModalState s = modal_state(model, dm, dk);
    Rng rng(rng_seed);
    std::normal_distribution<double> normal;
    const double g = normal(rng);
    const double g_re = normal(rng);

    FrequencyObservation obs;
    obs.t_s = t_s;
    obs.sigma0 = sigma0;
    obs.omega_ds = s.omega_d * (1.0 + sigma0 * g);
    if (!(obs.omega_ds > 0.0)) {
        obs.omega_ds = s.omega_d * (1.0 + sigma0 * normal(rng));
        if (!(obs.omega_ds > 0.0))
            throw Error(Errc::NegativeFrequency,
                        "noisy damped frequency non-positive after resampling at t_s=" + std::to_string(t_s));
    }
    if (with_real_part)
        obs.lambda_re = s.lambda_re * (1.0 + sigma0 * g_re);
    return obs;
}

/// Everything needed to synthesize a sensor record.
struct SensingConfig {
    DegradationCase degradation_case = DegradationCase::Stiffness;
    NominalModel nominal = normalized_nominal();
    StiffnessDegradationParams stiffness;
    MassDegradationParams mass;
    double tau = 150.0;
    std::size_t n_obs = 35;
    double sigma0 = 0.005;
    std::uint64_t seed = 1;
};

/// Ground-truth (dm, dk) for a case at service time t_s.
struct TrueDeltas {
    double dm = 0.0;
    double dk = 0.0;
};

inline TrueDeltas true_deltas(const SensingConfig &config, double t_s) {
    TrueDeltas d;
    if (config.degradation_case != DegradationCase::Mass)
        d.dk = stiffness_delta(t_s, config.stiffness);
    if (config.degradation_case != DegradationCase::Stiffness)
        d.dm = mass_delta(t_s, config.mass);
    return d;
}

/// n_obs equally spaced observations over [0, tau], endpoints included.
/// Observation i draws from the stream keyed by (seed, i).
inline std::vector<FrequencyObservation> generate_dataset(const SensingConfig &config) {
    if (config.n_obs < 2)
        throw Error(Errc::InsufficientData, "n_obs must be >= 2");
    if (!(config.tau > 0.0))
        throw Error(Errc::ConfigInvalid, "tau must be > 0");
    config.mass.validate();
    std::vector<FrequencyObservation> out;
    out.reserve(config.n_obs);
    const bool joint = config.degradation_case == DegradationCase::Joint;
    for (std::size_t i = 0; i < config.n_obs; ++i) {
        const double t = config.tau * static_cast<double>(i) / static_cast<double>(config.n_obs - 1);
        const TrueDeltas d = true_deltas(config, t);
        out.push_back(observe_frequency(config.nominal, d.dm, d.dk, config.sigma0,
                                        stream_key(config.seed, {i}), joint, t));
    }
    return out;
}

} // namespace sdtwin
