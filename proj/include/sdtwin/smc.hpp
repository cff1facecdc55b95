// Annealed sequential Monte Carlo sampler
//
// Particles start as prior draws with unit weights and are carried through
// the tempered targets p_t(x) ~ prior(x) * likelihood(x)^gamma_t with a
// random-walk Metropolis-Hastings move, incremental importance reweighting
// and systematic resampling whenever the effective sample size drops below
// c * N.
//
// Reproducibility: every particle draws from its own stream keyed by
// (seed, step, particle index), so the result does not depend on how many
// threads execute the moves.
#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "execution.hpp"

namespace sdtwin {

/// A family of densities prior * likelihood^gamma over R^d.
template <typename T>
concept AnnealableTarget = requires(const T &target, std::span<const double> x, Rng &rng,
                                    std::span<double> out) {
    { target.dimension() } -> std::convertible_to<std::size_t>;
    { target.log_prior(x) } -> std::convertible_to<double>;
    { target.log_likelihood(x) } -> std::convertible_to<double>;
    target.sample_prior(rng, out);
};

struct SmcConfig {
    std::size_t n_particles = 1000;
    std::size_t n_steps = 50;
    double ess_threshold_fraction = 0.85;
    /// Random-walk scale s; per-coordinate proposal variance is
    /// (s^2 / d) * weighted particle variance.
    double proposal_scale = 2.38;
    double proposal_variance_floor = 1e-6;
    std::size_t moves_per_step = 1;
    /// Explicit gamma_0..gamma_n; when empty, gamma_t = (t / n)^schedule_exponent.
    std::vector<double> anneal_schedule;
    double schedule_exponent = 1.0;
    std::uint64_t seed = 1;
    std::size_t threads = 1; ///< 0 = hardware concurrency

    std::vector<double> schedule() const {
        if (!anneal_schedule.empty())
            return anneal_schedule;
        std::vector<double> g(n_steps + 1);
        for (std::size_t t = 0; t <= n_steps; ++t)
            g[t] = std::pow(static_cast<double>(t) / static_cast<double>(n_steps), schedule_exponent);
        g.back() = 1.0;
        return g;
    }

    void validate() const {
        if (n_particles < 2)
            throw Error(Errc::ConfigInvalid, "smc: n_particles must be >= 2");
        if (!(ess_threshold_fraction > 0.0 && ess_threshold_fraction < 1.0))
            throw Error(Errc::ConfigInvalid, "smc: ess threshold fraction must lie in (0, 1)");
        if (!(proposal_scale >= 0.0) || !(proposal_variance_floor >= 0.0))
            throw Error(Errc::ConfigInvalid, "smc: proposal scale and floor must be >= 0");
        if (anneal_schedule.empty()) {
            if (n_steps < 1)
                throw Error(Errc::ConfigInvalid, "smc: n_steps must be >= 1");
            if (!(schedule_exponent > 0.0))
                throw Error(Errc::ConfigInvalid, "smc: schedule exponent must be > 0");
            return;
        }
        const auto &g = anneal_schedule;
        if (g.size() < 2 || g.front() != 0.0 || g.back() != 1.0)
            throw Error(Errc::ConfigInvalid, "smc: schedule must start at 0 and end at 1");
        for (std::size_t t = 1; t < g.size(); ++t)
            if (!(g[t] > g[t - 1]))
                throw Error(Errc::ConfigInvalid, "smc: schedule must be strictly increasing");
    }
};

/// Weighted particles, stored row-major (one particle per row).
struct ParticleEnsemble {
    std::size_t dim = 0;
    std::vector<double> values;
    std::vector<double> log_unnorm_weights;
    std::vector<double> weights; ///< normalized
    double gamma = 0.0;
    std::size_t step_index = 0;
    std::uint64_t rng_state_digest = 0;

    std::size_t size() const { return weights.size(); }
    std::span<const double> particle(std::size_t i) const { return {values.data() + i * dim, dim}; }
    std::span<double> particle(std::size_t i) { return {values.data() + i * dim, dim}; }
};

/// Inverse participation ratio (sum W_i^2)^-1 of a normalized weight vector.
inline double ess(std::span<const double> norm_weights) {
    double sum = 0.0;
    double sq = 0.0;
    for (double w : norm_weights) {
        if (!(w >= 0.0))
            throw Error(Errc::NotASimplex, "negative or NaN weight");
        sum += w;
        sq += w * w;
    }
    if (norm_weights.empty() || std::abs(sum - 1.0) > 1e-9)
        throw Error(Errc::NotASimplex, "weights sum to " + std::to_string(sum));
    return 1.0 / sq;
}

/// Normalizes log-weights into `out` and returns log of the normalizer
/// (or -inf when every weight is zero).
inline double normalize_log_weights(std::span<const double> log_w, std::span<double> out) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : log_w)
        mx = std::max(mx, v);
    if (!std::isfinite(mx))
        return mx;
    double sum = 0.0;
    for (std::size_t i = 0; i < log_w.size(); ++i) {
        out[i] = std::exp(log_w[i] - mx);
        sum += out[i];
    }
    for (auto &w : out)
        w /= sum;
    return mx + std::log(sum);
}

/// Offspring indices of systematic resampling with a single uniform u in [0, 1).
inline std::vector<std::size_t> systematic_indices(std::span<const double> weights, double u) {
    const std::size_t n = weights.size();
    std::vector<std::size_t> idx(n);
    double cumulative = weights.empty() ? 0.0 : weights[0];
    std::size_t j = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double position = (u + static_cast<double>(i)) / static_cast<double>(n);
        while (position >= cumulative && j + 1 < n)
            cumulative += weights[++j];
        idx[i] = j;
    }
    return idx;
}

/// Systematic resampling; weights reset to uniform.
inline ParticleEnsemble resample(const ParticleEnsemble &ensemble, Rng &rng) {
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    const auto idx = systematic_indices(ensemble.weights, uniform(rng));
    ParticleEnsemble out = ensemble;
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const auto src = ensemble.particle(idx[i]);
        std::copy(src.begin(), src.end(), out.particle(i).begin());
    }
    std::fill(out.log_unnorm_weights.begin(), out.log_unnorm_weights.end(), 0.0);
    std::fill(out.weights.begin(), out.weights.end(), 1.0 / static_cast<double>(idx.size()));
    return out;
}

struct MoveOutcome {
    bool accepted = false;
    double log_target = 0.0;
};

/// One random-walk Metropolis-Hastings step with diagonal Gaussian proposal
/// N(x, diag(proposal_sd^2)); accepts when u < min(1, p(x') / p(x)).
/// `scratch` must have the particle's dimension.
template <typename LogTarget>
MoveOutcome mh_move(std::span<double> particle, double current_log_target, LogTarget &&log_target,
                    std::span<const double> proposal_sd, Rng &rng, std::span<double> scratch) {
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    std::normal_distribution<double> normal;
    const double u = uniform(rng);
    for (std::size_t j = 0; j < particle.size(); ++j)
        scratch[j] = particle[j] + proposal_sd[j] * normal(rng);
    const double proposed = log_target(std::span<const double>(scratch.data(), scratch.size()));
    if (std::isnan(proposed))
        throw Error(Errc::TargetNonFinite, "log target is NaN at proposed point");
    if (u < std::exp(std::min(0.0, proposed - current_log_target))) {
        std::copy(scratch.begin(), scratch.end(), particle.begin());
        return {true, proposed};
    }
    return {false, current_log_target};
}

/// Convenience form returning the moved particle.
template <typename LogTarget>
std::vector<double> mh_move(std::span<const double> particle, LogTarget &&log_target,
                            std::span<const double> proposal_sd, Rng &rng) {
    std::vector<double> x(particle.begin(), particle.end());
    std::vector<double> scratch(x.size());
    const double current = log_target(std::span<const double>(x));
    mh_move(std::span<double>(x), current, log_target, proposal_sd, rng, std::span<double>(scratch));
    return x;
}

struct SmcStepRecord {
    std::size_t step = 0;
    double gamma = 0.0;
    double ess = 0.0;
    bool resampled = false;
    double acceptance_rate = 0.0;
};

struct SmcResult {
    ParticleEnsemble ensemble;
    std::vector<SmcStepRecord> trace;
};

/// Per-coordinate proposal standard deviations from the weighted particle spread.
inline std::vector<double> proposal_scales(const ParticleEnsemble &e, double scale, double floor_var) {
    std::vector<double> mean(e.dim, 0.0), var(e.dim, 0.0);
    for (std::size_t i = 0; i < e.size(); ++i) {
        const auto p = e.particle(i);
        for (std::size_t j = 0; j < e.dim; ++j)
            mean[j] += e.weights[i] * p[j];
    }
    for (std::size_t i = 0; i < e.size(); ++i) {
        const auto p = e.particle(i);
        for (std::size_t j = 0; j < e.dim; ++j)
            var[j] += e.weights[i] * (p[j] - mean[j]) * (p[j] - mean[j]);
    }
    const double factor = scale * scale / static_cast<double>(std::max<std::size_t>(1, e.dim));
    std::vector<double> sd(e.dim);
    for (std::size_t j = 0; j < e.dim; ++j)
        sd[j] = std::sqrt(std::max(floor_var, factor * var[j]));
    return sd;
}

template <AnnealableTarget Target>
SmcResult run_smc(const Target &target, const SmcConfig &config) {
    config.validate();
    const auto gamma = config.schedule();
    const std::size_t n = config.n_particles;
    const std::size_t d = target.dimension();

    ParticleEnsemble e;
    e.dim = d;
    e.values.assign(n * d, 0.0);
    e.log_unnorm_weights.assign(n, 0.0);
    e.weights.assign(n, 1.0 / static_cast<double>(n));

    std::vector<double> log_prior(n), log_lik(n);
    auto check = [](double v, std::size_t step, std::size_t i, const char *what) {
        if (std::isnan(v) || v == std::numeric_limits<double>::infinity())
            throw Error(Errc::TargetNonFinite, std::string(what) + " non-finite at step " +
                                                   std::to_string(step) + ", particle " + std::to_string(i));
    };

    parallel_for(n, config.threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            Rng rng = make_stream(config.seed, {0, 0, i});
            target.sample_prior(rng, e.particle(i));
            log_prior[i] = target.log_prior(e.particle(i));
            check(log_prior[i], 0, i, "log prior");
            log_lik[i] = target.log_likelihood(e.particle(i));
            check(log_lik[i], 0, i, "log likelihood");
        }
    });

    SmcResult result;
    result.trace.push_back({0, gamma[0], static_cast<double>(n), false, 0.0});
    std::vector<std::size_t> accepted(n);

    for (std::size_t t = 1; t < gamma.size(); ++t) {
        const double g = gamma[t];
        const auto sd = proposal_scales(e, config.proposal_scale, config.proposal_variance_floor);
        const std::vector<double> log_lik_prev = log_lik;

        parallel_for(n, config.threads, [&](std::size_t begin, std::size_t end) {
            std::vector<double> scratch(d);
            for (std::size_t i = begin; i < end; ++i) {
                Rng rng = make_stream(config.seed, {t, 0, i});
                accepted[i] = 0;
                double lp = log_prior[i], ll = log_lik[i];
                double proposal_lp = 0.0, proposal_ll = 0.0;
                auto tempered = [&](std::span<const double> x) {
                    proposal_lp = target.log_prior(x);
                    proposal_ll = std::isfinite(proposal_lp) ? target.log_likelihood(x)
                                                             : -std::numeric_limits<double>::infinity();
                    if (std::isnan(proposal_ll))
                        throw Error(Errc::TargetNonFinite, "log likelihood NaN at step " + std::to_string(t) +
                                                               ", particle " + std::to_string(i));
                    return proposal_lp + g * proposal_ll;
                };
                for (std::size_t k = 0; k < config.moves_per_step; ++k) {
                    const auto out = mh_move(e.particle(i), lp + g * ll, tempered, sd, rng,
                                             std::span<double>(scratch));
                    if (out.accepted) {
                        lp = proposal_lp;
                        ll = proposal_ll;
                        ++accepted[i];
                    }
                }
                log_prior[i] = lp;
                log_lik[i] = ll;
            }
        });

        for (std::size_t i = 0; i < n; ++i) {
            // Incremental weight p_t / p_{t-1} at the pre-move position.
            const double inc = (g - gamma[t - 1]) * log_lik_prev[i];
            e.log_unnorm_weights[i] += inc;
        }
        if (!std::isfinite(normalize_log_weights(e.log_unnorm_weights, e.weights)))
            throw Error(Errc::TargetNonFinite, "all importance weights vanished at step " + std::to_string(t));

        SmcStepRecord rec;
        rec.step = t;
        rec.gamma = g;
        rec.ess = ess(e.weights);
        const auto total_accepted = std::accumulate(accepted.begin(), accepted.end(), std::size_t{0});
        rec.acceptance_rate = static_cast<double>(total_accepted) /
                              static_cast<double>(n * std::max<std::size_t>(1, config.moves_per_step));
        if (rec.ess < config.ess_threshold_fraction * static_cast<double>(n)) {
            Rng rng = make_stream(config.seed, {t, 1});
            std::uniform_real_distribution<double> uniform(0.0, 1.0);
            const auto idx = systematic_indices(e.weights, uniform(rng));
            std::vector<double> values(n * d), lp(n), ll(n);
            for (std::size_t i = 0; i < n; ++i) {
                const auto src = e.particle(idx[i]);
                std::copy(src.begin(), src.end(), values.begin() + static_cast<std::ptrdiff_t>(i * d));
                lp[i] = log_prior[idx[i]];
                ll[i] = log_lik[idx[i]];
            }
            e.values = std::move(values);
            log_prior = std::move(lp);
            log_lik = std::move(ll);
            std::fill(e.log_unnorm_weights.begin(), e.log_unnorm_weights.end(), 0.0);
            std::fill(e.weights.begin(), e.weights.end(), 1.0 / static_cast<double>(n));
            rec.resampled = true;
        }
        result.trace.push_back(rec);
    }
    e.gamma = gamma.back();
    e.step_index = gamma.size() - 1;
    e.rng_state_digest = stream_key(config.seed, {e.step_index, n, d});
    result.ensemble = std::move(e);
    return result;
}

} // namespace sdtwin
