// Mixture of Gaussian-process experts with Gaussian gating over time.
//
// All functions here work in standardized time; MoEGPModel carries the
// standardizer and posterior_predictive() applies it to raw service times.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "error.hpp"
#include "execution.hpp"
#include "gp_expert.hpp"
#include "smc.hpp"

namespace sdtwin {

/// One training pair; `t` is standardized time.
struct TrainingPoint {
    double t = 0.0;
    double y = 0.0;
};

struct GatingParams {
    std::vector<double> center;        ///< mu_j, standardized time
    std::vector<double> log_precision; ///< log lambda_j
};

struct MixingCoefficients {
    std::vector<double> pi;

    static MixingCoefficients uniform(std::size_t m) {
        return {std::vector<double>(m, 1.0 / static_cast<double>(m))};
    }

    void validate() const {
        double sum = 0.0;
        for (double p : pi) {
            if (!(p >= 0.0))
                throw Error(Errc::NotASimplex, "mixing coefficient negative or NaN");
            sum += p;
        }
        if (pi.empty() || std::abs(sum - 1.0) > 1e-12)
            throw Error(Errc::NotASimplex, "mixing coefficients sum to " + std::to_string(sum));
    }
};

/// Flat unconstrained hyperparameter layout. Expert m occupies the block
/// [m * 8, m * 8 + 8) holding
///   gate center, gate log-precision, h0, h1, h2, log length, log sigma_f, log sigma_n.
struct HyperparameterLayout {
    static constexpr std::size_t gate_size = 2;
    static constexpr std::size_t block = gate_size + GPExpertParams::size;

    std::size_t experts = 1;

    std::size_t size() const { return experts * block; }
    static std::size_t center(std::size_t m) { return m * block; }
    static std::size_t log_precision(std::size_t m) { return m * block + 1; }
    static std::size_t expert(std::size_t m) { return m * block + gate_size; }
};

struct UnpackedHyperparameters {
    GatingParams gating;
    std::vector<GPExpertParams> experts;
};

inline std::vector<double> pack(const GatingParams &gating, std::span<const GPExpertParams> experts) {
    const HyperparameterLayout layout{experts.size()};
    std::vector<double> theta(layout.size());
    for (std::size_t m = 0; m < experts.size(); ++m) {
        theta[layout.center(m)] = gating.center[m];
        theta[layout.log_precision(m)] = gating.log_precision[m];
        experts[m].write_to(std::span<double>(theta).subspan(layout.expert(m), GPExpertParams::size));
    }
    return theta;
}

inline UnpackedHyperparameters unpack(std::span<const double> theta, std::size_t experts) {
    const HyperparameterLayout layout{experts};
    if (theta.size() != layout.size())
        throw Error(Errc::ConfigInvalid, "hyperparameter vector has length " + std::to_string(theta.size()) +
                                             ", expected " + std::to_string(layout.size()));
    UnpackedHyperparameters u;
    for (std::size_t m = 0; m < experts; ++m) {
        u.gating.center.push_back(theta[layout.center(m)]);
        u.gating.log_precision.push_back(theta[layout.log_precision(m)]);
        u.experts.push_back(GPExpertParams::from_span(theta.subspan(layout.expert(m), GPExpertParams::size)));
    }
    return u;
}

/// log N(t | mu, 1/lambda) with lambda = exp(log_precision).
inline double gate_log_kernel(double t, double center, double log_precision) {
    const double d = t - center;
    return 0.5 * log_precision - 0.5 * std::log(2.0 * std::numbers::pi) - 0.5 * std::exp(log_precision) * d * d;
}

inline double log_sum_exp(std::span<const double> v) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double x : v)
        mx = std::max(mx, x);
    if (!std::isfinite(mx))
        return mx;
    double s = 0.0;
    for (double x : v)
        s += std::exp(x - mx);
    return mx + std::log(s);
}

/// Gate responsibilities z_i(t) evaluated with log-space normalization.
inline std::vector<double> gate_weights(double t, const GatingParams &gating, const MixingCoefficients &mixing) {
    const std::size_t m = mixing.pi.size();
    std::vector<double> logs(m);
    for (std::size_t i = 0; i < m; ++i)
        logs[i] = std::log(mixing.pi[i]) + gate_log_kernel(t, gating.center[i], gating.log_precision[i]);
    const double norm = log_sum_exp(logs);
    if (!std::isfinite(norm))
        throw Error(Errc::DegenerateGate, "all gate terms vanish at t=" + std::to_string(t));
    for (auto &v : logs)
        v = std::exp(v - norm);
    return logs;
}

namespace detail {

/// Per-expert constants hoisted out of the data loop.
struct ExpertTerms {
    double log_pi, center, precision, gate_const;
    double h0, h1, h2, inv_var, density_const;
};

inline std::vector<ExpertTerms> expert_terms(std::span<const double> theta, std::span<const double> pi) {
    const std::size_t m = pi.size();
    const HyperparameterLayout layout{m};
    std::vector<ExpertTerms> terms(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double lp = theta[layout.log_precision(i)];
        const auto e = GPExpertParams::from_span(theta.subspan(layout.expert(i), GPExpertParams::size));
        const double var = e.pointwise_variance();
        terms[i] = {std::log(pi[i]),
                    theta[layout.center(i)],
                    std::exp(lp),
                    0.5 * lp - 0.5 * std::log(2.0 * std::numbers::pi),
                    e.h[0],
                    e.h[1],
                    e.h[2],
                    1.0 / var,
                    -0.5 * std::log(2.0 * std::numbers::pi * var)};
    }
    return terms;
}

} // namespace detail

/// Sum over points of log sum_i z_i(t_s) N(y_s | h_i . phi(t_s), sigma_f,i^2 + sigma_n,i^2).
inline double mixture_log_likelihood(std::span<const TrainingPoint> data, std::span<const double> theta,
                                     const MixingCoefficients &mixing) {
    const std::size_t m = mixing.pi.size();
    if (theta.size() != HyperparameterLayout{m}.size())
        throw Error(Errc::ConfigInvalid, "hyperparameter length does not match expert count");
    const auto terms = detail::expert_terms(theta, mixing.pi);
    constexpr double neg_inf = -std::numeric_limits<double>::infinity();
    double total = 0.0;
    for (std::size_t s = 0; s < data.size(); ++s) {
        const double t = data[s].t;
        const double y = data[s].y;
        // Two running log-sum-exps: joint (gate * expert) and gate normalizer.
        double joint_max = neg_inf, gate_max = neg_inf;
        double joint_sum = 0.0, gate_sum = 0.0;
        for (const auto &e : terms) {
            if (e.log_pi == neg_inf)
                continue;
            const double dt = t - e.center;
            const double lg = e.log_pi + e.gate_const - 0.5 * e.precision * dt * dt;
            const double r = y - (e.h0 + t * (e.h1 + t * e.h2));
            const double lj = lg + e.density_const - 0.5 * r * r * e.inv_var;
            if (lg > gate_max) {
                gate_sum = gate_sum * std::exp(gate_max - lg) + 1.0;
                gate_max = lg;
            } else {
                gate_sum += std::exp(lg - gate_max);
            }
            if (lj > joint_max) {
                joint_sum = joint_sum * std::exp(joint_max - lj) + 1.0;
                joint_max = lj;
            } else {
                joint_sum += std::exp(lj - joint_max);
            }
        }
        const double term = (joint_max + std::log(joint_sum)) - (gate_max + std::log(gate_sum));
        if (std::isnan(term) || term == std::numeric_limits<double>::infinity())
            throw Error(Errc::NonFiniteLikelihood, "data index " + std::to_string(s));
        total += term;
    }
    return total;
}

/// Standard-normal log density on the unconstrained vector.
inline double log_prior_density(std::span<const double> theta) {
    double ss = 0.0;
    for (double v : theta)
        ss += v * v;
    return -0.5 * ss - 0.5 * static_cast<double>(theta.size()) * std::log(2.0 * std::numbers::pi);
}

inline double log_posterior_density(std::span<const double> theta, const MixingCoefficients &mixing,
                                    std::span<const TrainingPoint> data, double anneal_gamma) {
    if (!(anneal_gamma >= 0.0 && anneal_gamma <= 1.0))
        throw Error(Errc::ConfigInvalid, "annealing exponent outside [0, 1]");
    const double prior = log_prior_density(theta);
    if (anneal_gamma == 0.0)
        return prior;
    return prior + anneal_gamma * mixture_log_likelihood(data, theta, mixing);
}

/// Annealable posterior over hyperparameters for fixed mixing coefficients.
class MixturePosterior {
  public:
    MixturePosterior(std::span<const TrainingPoint> data, MixingCoefficients mixing)
        : data_(data), mixing_(std::move(mixing)), layout_{mixing_.pi.size()} {}

    std::size_t dimension() const { return layout_.size(); }
    double log_prior(std::span<const double> theta) const { return log_prior_density(theta); }
    double log_likelihood(std::span<const double> theta) const {
        return mixture_log_likelihood(data_, theta, mixing_);
    }
    void sample_prior(Rng &rng, std::span<double> out) const {
        std::normal_distribution<double> normal;
        for (auto &v : out)
            v = normal(rng);
    }

  private:
    std::span<const TrainingPoint> data_;
    MixingCoefficients mixing_;
    HyperparameterLayout layout_;
};

/// Trained mixture: point-estimated mixing coefficients plus a weighted
/// posterior ensemble over the flat hyperparameter vector.
struct MoEGPModel {
    std::size_t experts = 1;
    MixingCoefficients mixing = MixingCoefficients::uniform(1);
    ParticleEnsemble ensemble;
    TimeStandardizer standardizer;
    std::string provenance;
};

struct MixtureComponent {
    double weight = 0.0;
    double mean = 0.0;
    double variance = 0.0;
};

struct PredictiveDistribution {
    double t_star = 0.0;
    double mean = 0.0;
    double variance = 0.0;
    std::vector<std::pair<double, double>> quantiles; ///< (probability, value), ascending
    std::vector<MixtureComponent> components;         ///< filled on request

    double quantile(double p) const {
        for (const auto &[prob, value] : quantiles)
            if (prob == p)
                return value;
        throw Error(Errc::ConfigInvalid, "quantile " + std::to_string(p) + " was not requested");
    }
    double sd() const { return std::sqrt(variance); }
};

/// Value x with mixture CDF(x) = p, by bisection to `tol` in x.
inline double mixture_quantile(std::span<const MixtureComponent> comps, double p, double tol = 1e-8) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto &c : comps) {
        const double s = std::sqrt(c.variance);
        lo = std::min(lo, c.mean - 40.0 * s);
        hi = std::max(hi, c.mean + 40.0 * s);
    }
    auto cdf = [&](double x) {
        double acc = 0.0;
        for (const auto &c : comps)
            acc += c.weight * 0.5 * std::erfc(-(x - c.mean) / std::sqrt(2.0 * c.variance));
        return acc;
    };
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi)
            break;
        (cdf(mid) < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

/// Moments and quantiles of a Gaussian mixture. Exact-duplicate components
/// (common after resampling) are merged first.
inline PredictiveDistribution summarize_mixture(double t_star, std::vector<MixtureComponent> comps,
                                                std::span<const double> probabilities, bool keep_components) {
    std::sort(comps.begin(), comps.end(), [](const auto &a, const auto &b) {
        return a.mean != b.mean ? a.mean < b.mean : a.variance < b.variance;
    });
    std::vector<MixtureComponent> merged;
    double total = 0.0;
    for (const auto &c : comps) {
        if (!(c.weight > 0.0))
            continue;
        total += c.weight;
        if (!merged.empty() && merged.back().mean == c.mean && merged.back().variance == c.variance)
            merged.back().weight += c.weight;
        else
            merged.push_back(c);
    }
    if (merged.empty())
        throw Error(Errc::EmptyEnsemble, "predictive mixture has no weight");
    PredictiveDistribution out;
    out.t_star = t_star;
    double m1 = 0.0;
    for (auto &c : merged) {
        c.weight /= total;
        m1 += c.weight * c.mean;
    }
    double var = 0.0;
    for (const auto &c : merged)
        var += c.weight * (c.variance + (c.mean - m1) * (c.mean - m1));
    out.mean = m1;
    out.variance = var;
    std::vector<double> probs(probabilities.begin(), probabilities.end());
    std::sort(probs.begin(), probs.end());
    double previous = -std::numeric_limits<double>::infinity();
    for (double p : probs) {
        const double q = std::max(previous, mixture_quantile(merged, p));
        out.quantiles.emplace_back(p, q);
        previous = q;
    }
    if (keep_components)
        out.components = std::move(merged);
    return out;
}

inline constexpr double default_probabilities[] = {0.025, 0.5, 0.975};

/// Particle-averaged predictive mixture at raw service time t_star with
/// component weights W_i * z_m(t*; theta_i, pi).
inline PredictiveDistribution posterior_predictive(double t_star, const MoEGPModel &model,
                                                   std::span<const double> probabilities = default_probabilities,
                                                   bool keep_components = false) {
    const auto &e = model.ensemble;
    if (e.size() == 0)
        throw Error(Errc::EmptyEnsemble, "model has no posterior particles");
    const double t = model.standardizer(t_star);
    std::vector<MixtureComponent> comps;
    comps.reserve(e.size() * model.experts);
    for (std::size_t i = 0; i < e.size(); ++i) {
        if (!(e.weights[i] > 0.0))
            continue;
        const auto u = unpack(e.particle(i), model.experts);
        const auto z = gate_weights(t, u.gating, model.mixing);
        for (std::size_t m = 0; m < model.experts; ++m) {
            const auto pred = expert_predict(t, u.experts[m]);
            comps.push_back({e.weights[i] * z[m], pred.mean, pred.variance});
        }
    }
    return summarize_mixture(t_star, std::move(comps), probabilities, keep_components);
}

} // namespace sdtwin
