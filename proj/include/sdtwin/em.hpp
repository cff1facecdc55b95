// Expectation-maximization over mixing coefficients.
//
// E-step: an SMC ensemble approximates p(theta | pi, data). The expected
// log joint pi' -> sum_i W_i log p(pi', theta_i | data) is then maximized
// over the simplex (softmax logits, BFGS) in the M-step.
#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>
#include <gsl/gsl_vector.h>

#include "error.hpp"
#include "execution.hpp"
#include "gp_expert.hpp"
#include "moe_gp.hpp"
#include "smc.hpp"

namespace sdtwin {

struct MStepSettings {
    std::size_t max_iterations = 200;
    double gradient_tolerance = 1e-9;
};

struct EmConfig {
    std::size_t experts = 4;
    double epsilon = 1e-3;
    std::size_t max_iters = 20;
    SmcConfig smc;
    std::vector<double> pi_init; ///< empty = uniform
    MStepSettings m_step;

    MixingCoefficients initial_mixing() const {
        if (pi_init.empty())
            return MixingCoefficients::uniform(experts);
        MixingCoefficients m{pi_init};
        m.validate();
        if (m.pi.size() != experts)
            throw Error(Errc::ConfigInvalid, "pi_init length differs from expert count");
        return m;
    }

    void validate() const {
        if (experts < 1)
            throw Error(Errc::ConfigInvalid, "em: at least one expert required");
        if (!(epsilon > 0.0))
            throw Error(Errc::ConfigInvalid, "em: epsilon must be > 0");
        if (max_iters < 1)
            throw Error(Errc::ConfigInvalid, "em: max_iters must be >= 1");
        smc.validate();
        (void)initial_mixing();
    }
};

/// The E-step functional pi' -> sum_i W_i log p(pi', theta_i | data) + const,
/// with a flat Dirichlet prior on pi. Per-particle gate and expert
/// log-densities are tabulated once so evaluating a new pi costs one pass.
class ExpectedLogPosterior {
  public:
    ExpectedLogPosterior() = default;

    ExpectedLogPosterior(const ParticleEnsemble &ensemble, std::span<const TrainingPoint> data, std::size_t experts)
        : experts_(experts), points_(data.size()) {
        const HyperparameterLayout layout{experts};
        for (std::size_t i = 0; i < ensemble.size(); ++i) {
            if (!(ensemble.weights[i] > 0.0))
                continue;
            const auto theta = ensemble.particle(i);
            weights_.push_back(ensemble.weights[i]);
            constant_ += ensemble.weights[i] * log_prior_density(theta);
            for (std::size_t s = 0; s < data.size(); ++s) {
                for (std::size_t m = 0; m < experts; ++m) {
                    const double lg = gate_log_kernel(data[s].t, theta[layout.center(m)], theta[layout.log_precision(m)]);
                    const auto e = GPExpertParams::from_span(theta.subspan(layout.expert(m), GPExpertParams::size));
                    log_gate_.push_back(lg);
                    log_joint_.push_back(lg + pointwise_log_density(data[s].y, data[s].t, e));
                }
            }
        }
        // log of the flat Dirichlet density (M - 1)!
        constant_ += std::lgamma(static_cast<double>(experts));
    }

    std::size_t experts() const { return experts_; }

    double operator()(std::span<const double> pi) const { return evaluate(pi, {}); }

    /// Value and (when `grad` is non-empty) gradient with respect to pi.
    double evaluate(std::span<const double> pi, std::span<double> grad) const {
        std::vector<double> log_pi(experts_);
        for (std::size_t m = 0; m < experts_; ++m)
            log_pi[m] = std::log(pi[m]);
        if (!grad.empty())
            std::fill(grad.begin(), grad.end(), 0.0);
        std::vector<double> a(experts_), g(experts_);
        double total = constant_;
        std::size_t k = 0;
        for (double w : weights_) {
            double acc = 0.0;
            for (std::size_t s = 0; s < points_; ++s, k += experts_) {
                for (std::size_t m = 0; m < experts_; ++m) {
                    a[m] = log_pi[m] + log_joint_[k + m];
                    g[m] = log_pi[m] + log_gate_[k + m];
                }
                const double la = log_sum_exp(a);
                const double lg = log_sum_exp(g);
                acc += la - lg;
                if (!grad.empty())
                    for (std::size_t m = 0; m < experts_; ++m)
                        grad[m] += w * (std::exp(log_joint_[k + m] - la) - std::exp(log_gate_[k + m] - lg));
            }
            total += w * acc;
        }
        return total;
    }

  private:
    std::size_t experts_ = 1;
    std::size_t points_ = 0;
    std::vector<double> weights_;
    std::vector<double> log_gate_;  ///< [particle][point][expert]
    std::vector<double> log_joint_; ///< log gate kernel + expert log density
    double constant_ = 0.0;
};

struct EStepResult {
    SmcResult smc;
    ExpectedLogPosterior functional;
};

inline EStepResult e_step(const MixingCoefficients &pi, std::span<const TrainingPoint> data, const SmcConfig &smc) {
    pi.validate();
    MixturePosterior target(data, pi);
    EStepResult out;
    out.smc = run_smc(target, smc);
    out.functional = ExpectedLogPosterior(out.smc.ensemble, data, pi.pi.size());
    return out;
}

struct MStepResult {
    MixingCoefficients pi;
    double value_prev = 0.0;
    double value_new = 0.0;
    bool failed = false;
};

namespace detail {

inline std::vector<double> softmax_with_reference(const double *free, std::size_t m) {
    // Last logit fixed at zero.
    std::vector<double> logits(m, 0.0);
    for (std::size_t k = 0; k + 1 < m; ++k)
        logits[k] = free[k];
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (auto &l : logits) {
        l = std::exp(l - mx);
        sum += l;
    }
    for (auto &l : logits)
        l /= sum;
    return logits;
}

} // namespace detail

/// Maximizes a simplex functional starting from pi_prev. Never returns a
/// point with a lower functional value than pi_prev.
template <typename Functional>
    requires requires(const Functional &f, std::span<const double> pi, std::span<double> g) {
        { f.evaluate(pi, g) } -> std::convertible_to<double>;
        { f.experts() } -> std::convertible_to<std::size_t>;
    }
MStepResult m_step(const Functional &functional, const MixingCoefficients &pi_prev, const MStepSettings &settings = {}) {
    pi_prev.validate();
    const std::size_t m = pi_prev.pi.size();
    MStepResult out;
    out.pi = pi_prev;
    out.value_prev = functional.evaluate(pi_prev.pi, {});
    out.value_new = out.value_prev;
    if (m == 1)
        return out;

    struct Problem {
        const Functional *f;
        double scale;
        std::size_t m;

        // Negated, scaled objective over free logits; gradient through the softmax.
        double eval(const gsl_vector *x, gsl_vector *g) const {
            const auto pi = detail::softmax_with_reference(x->data, m);
            std::vector<double> grad(g ? m : 0);
            const double v = f->evaluate(pi, grad);
            if (g) {
                double dot = 0.0;
                for (std::size_t k = 0; k < m; ++k)
                    dot += pi[k] * grad[k];
                for (std::size_t k = 0; k + 1 < m; ++k)
                    gsl_vector_set(g, k, -pi[k] * (grad[k] - dot) / scale);
            }
            return std::isfinite(v) ? -v / scale : std::numeric_limits<double>::max();
        }
    } problem{&functional, std::max(1.0, std::abs(out.value_prev)), m};

    gsl_set_error_handler_off();
    gsl_multimin_function_fdf fdf;
    fdf.n = m - 1;
    fdf.f = [](const gsl_vector *x, void *params) { return static_cast<const Problem *>(params)->eval(x, nullptr); };
    fdf.df = [](const gsl_vector *x, void *params, gsl_vector *g) {
        static_cast<const Problem *>(params)->eval(x, g);
    };
    fdf.fdf = [](const gsl_vector *x, void *params, double *fx, gsl_vector *g) {
        *fx = static_cast<const Problem *>(params)->eval(x, g);
    };
    fdf.params = &problem;

    gsl_vector *x = gsl_vector_alloc(m - 1);
    for (std::size_t k = 0; k + 1 < m; ++k)
        gsl_vector_set(x, k, std::log(std::max(pi_prev.pi[k], 1e-300)) - std::log(std::max(pi_prev.pi[m - 1], 1e-300)));
    gsl_multimin_fdfminimizer *solver = gsl_multimin_fdfminimizer_alloc(gsl_multimin_fdfminimizer_vector_bfgs2, m - 1);
    gsl_multimin_fdfminimizer_set(solver, &fdf, x, 0.1, 0.1);
    for (std::size_t it = 0; it < settings.max_iterations; ++it) {
        if (gsl_multimin_fdfminimizer_iterate(solver) != GSL_SUCCESS)
            break;
        if (gsl_multimin_test_gradient(solver->gradient, settings.gradient_tolerance) == GSL_SUCCESS)
            break;
    }
    const auto candidate = detail::softmax_with_reference(solver->x->data, m);
    gsl_multimin_fdfminimizer_free(solver);
    gsl_vector_free(x);

    const double value = functional.evaluate(candidate, {});
    if (std::isfinite(value) && value > out.value_prev) {
        out.pi.pi = candidate;
        out.value_new = value;
    } else if (!(std::isfinite(value) && value >= out.value_prev - 1e-10)) {
        out.failed = true; // pi_prev is kept
    }
    return out;
}

struct EmIteration {
    std::size_t iter = 0;
    std::vector<double> pi;
    double em_error = 0.0;
    double expected_log_posterior = 0.0; ///< functional at the updated pi
    double functional_prev = 0.0;        ///< functional at the pi used by the E-step
    bool optimizer_failed = false;
    double final_ess = 0.0;
    std::size_t resample_count = 0;
    double mean_acceptance = 0.0;
};

struct EmTrace {
    std::vector<EmIteration> iterations;
    bool converged = false;
};

/// Raw training sample in service time.
struct Sample {
    double t_s = 0.0;
    double y = 0.0;
};

struct FitResult {
    MoEGPModel model;
    EmTrace trace;
    std::vector<SmcStepRecord> smc_trace; ///< final E-step
};

using EStepFunction =
    std::function<EStepResult(const MixingCoefficients &, std::span<const TrainingPoint>, const SmcConfig &)>;

/// SMC seed used by EM iteration `iter` (1-based).
inline std::uint64_t em_iteration_seed(std::uint64_t seed, std::size_t iter) { return stream_key(seed, {0xE5, iter}); }

/// Alternates E- and M-steps until ||pi - pi_prev||_2 <= epsilon or max_iters.
inline FitResult fit(std::span<const Sample> samples, const EmConfig &config, const EStepFunction &estep = e_step) {
    config.validate();
    if (samples.size() < config.experts + 2)
        throw Error(Errc::InsufficientData, std::to_string(samples.size()) + " point(s) for " +
                                                std::to_string(config.experts) + " expert(s); need at least M + 2");
    std::vector<double> times;
    times.reserve(samples.size());
    for (const auto &s : samples)
        times.push_back(s.t_s);
    const auto standardizer = TimeStandardizer::fit(times);
    std::vector<TrainingPoint> data;
    data.reserve(samples.size());
    for (const auto &s : samples)
        data.push_back({standardizer(s.t_s), s.y});

    FitResult result;
    MixingCoefficients pi = config.initial_mixing();
    double em_error = 10.0 * config.epsilon;
    SmcResult last;
    for (std::size_t iter = 1; iter <= config.max_iters && em_error > config.epsilon; ++iter) {
        const MixingCoefficients pi_prev = pi;
        SmcConfig smc = config.smc;
        smc.seed = em_iteration_seed(config.smc.seed, iter);
        EStepResult e = estep(pi, data, smc);
        const MStepResult mres = m_step(e.functional, pi, config.m_step);
        pi = mres.pi;
        double sq = 0.0;
        for (std::size_t k = 0; k < pi.pi.size(); ++k)
            sq += (pi.pi[k] - pi_prev.pi[k]) * (pi.pi[k] - pi_prev.pi[k]);
        em_error = std::sqrt(sq);

        EmIteration rec;
        rec.iter = iter;
        rec.pi = pi.pi;
        rec.em_error = em_error;
        rec.expected_log_posterior = mres.value_new;
        rec.functional_prev = mres.value_prev;
        rec.optimizer_failed = mres.failed;
        if (!e.smc.trace.empty()) {
            rec.final_ess = e.smc.trace.back().ess;
            double acc = 0.0;
            for (const auto &s : e.smc.trace) {
                rec.resample_count += s.resampled ? 1 : 0;
                acc += s.acceptance_rate;
            }
            rec.mean_acceptance = e.smc.trace.size() > 1 ? acc / static_cast<double>(e.smc.trace.size() - 1) : 0.0;
        }
        result.trace.iterations.push_back(rec);
        last = std::move(e.smc);
    }
    result.trace.converged = em_error <= config.epsilon;
    result.model.experts = config.experts;
    result.model.mixing = pi;
    result.model.ensemble = std::move(last.ensemble);
    result.smc_trace = std::move(last.trace);
    result.model.standardizer = standardizer;
    return result;
}

} // namespace sdtwin
