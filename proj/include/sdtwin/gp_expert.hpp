// Gaussian-process expert
// Quadratic mean in standardized time, stationary Matern covariance and the
// pointwise Gaussian density used by the mixture likelihood.
#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <span>

namespace sdtwin {

/// Affine map from service time to standardized time.
struct TimeStandardizer {
    double mean = 0.0;
    double scale = 1.0;

    double operator()(double t) const { return (t - mean) / scale; }

    /// Population mean and standard deviation of the training times; a
    /// degenerate spread falls back to unit scale.
    static TimeStandardizer fit(std::span<const double> times) {
        TimeStandardizer s;
        if (times.empty())
            return s;
        double sum = 0.0;
        for (double t : times)
            sum += t;
        s.mean = sum / static_cast<double>(times.size());
        double ss = 0.0;
        for (double t : times)
            ss += (t - s.mean) * (t - s.mean);
        const double sd = std::sqrt(ss / static_cast<double>(times.size()));
        s.scale = sd > 0.0 ? sd : 1.0;
        return s;
    }
};

enum class MaternSmoothness { ThreeHalves, FiveHalves };

/// Unconstrained expert hyperparameters. Scales are stored as logs.
struct GPExpertParams {
    std::array<double, 3> h{0.0, 0.0, 0.0}; ///< mean-basis coefficients
    double log_length = 0.0;
    double log_signal = 0.0; ///< log sigma_f
    double log_noise = 0.0;  ///< log sigma_n

    static constexpr std::size_t size = 6;

    double length() const { return std::exp(log_length); }
    double signal_variance() const { return std::exp(2.0 * log_signal); }
    double noise_variance() const { return std::exp(2.0 * log_noise); }
    /// Marginal variance at a single input: kernel diagonal plus noise.
    double pointwise_variance() const { return signal_variance() + noise_variance(); }

    static GPExpertParams from_span(std::span<const double> v) {
        return {{v[0], v[1], v[2]}, v[3], v[4], v[5]};
    }
    void write_to(std::span<double> v) const {
        v[0] = h[0];
        v[1] = h[1];
        v[2] = h[2];
        v[3] = log_length;
        v[4] = log_signal;
        v[5] = log_noise;
    }
};

/// [1, t, t^2] with t in standardized time.
inline std::array<double, 3> mean_basis(double t_std) { return {1.0, t_std, t_std * t_std}; }

inline double expert_mean(double t_std, const std::array<double, 3> &h) {
    return h[0] + t_std * (h[1] + t_std * h[2]);
}

inline double matern_kernel(double t1_std, double t2_std, const GPExpertParams &p,
                            MaternSmoothness nu = MaternSmoothness::FiveHalves) {
    const double r = std::abs(t1_std - t2_std) / p.length();
    const double sf2 = p.signal_variance();
    if (nu == MaternSmoothness::ThreeHalves) {
        const double a = std::sqrt(3.0) * r;
        return sf2 * (1.0 + a) * std::exp(-a);
    }
    const double a = std::sqrt(5.0) * r;
    return sf2 * (1.0 + a + 5.0 * r * r / 3.0) * std::exp(-a);
}

inline double gaussian_log_density(double y, double mean, double variance) {
    const double d = y - mean;
    return -0.5 * (std::log(2.0 * std::numbers::pi * variance) + d * d / variance);
}

inline double pointwise_log_density(double y, double t_std, const GPExpertParams &p) {
    return gaussian_log_density(y, expert_mean(t_std, p.h), p.pointwise_variance());
}

struct ExpertPrediction {
    double mean = 0.0;
    double variance = 0.0;
};

inline ExpertPrediction expert_predict(double t_std, const GPExpertParams &p) {
    return {expert_mean(t_std, p.h), p.pointwise_variance()};
}

} // namespace sdtwin
