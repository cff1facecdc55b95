// Frequency-to-parameter inversion
// Converts damped-frequency (and eigenvalue real part) readings into
// fractional stiffness / mass changes relative to the nominal model.
#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "degradation.hpp"
#include "error.hpp"
#include "sdof.hpp"

namespace sdtwin {

/// Normalized distances between nominal and observed spectral quantities.
/// Only the fields relevant to the inverted case are populated.
struct InversionDiagnostics {
    double d1_tilde = 0.0; ///< (omega_d0 - omega_ds_obs) / omega0, stiffness case
    double d2_tilde = 0.0; ///< same quantity, mass case
    double dR_tilde = 0.0; ///< (lambda_re0 - lambda_re_obs) / omega0, joint case
    double dI_tilde = 0.0; ///< sqrt(1 - zeta0^2) - omega_ds_obs / omega0, joint case
    std::optional<double> alt_delta_k; ///< joint case, alternative closed form (comparison only)
};

struct DeltaEstimate {
    double t_s = 0.0;
    std::optional<double> delta_k;
    std::optional<double> delta_m;
    InversionDiagnostics diagnostics;
};

namespace detail {

inline void require_positive_frequency(const FrequencyObservation &obs) {
    if (!(obs.omega_ds > 0.0) || !std::isfinite(obs.omega_ds))
        throw Error(Errc::InvalidFrequency,
                    "damped frequency must be positive (t_s=" + std::to_string(obs.t_s) + ")");
}

} // namespace detail

inline DeltaEstimate invert_stiffness(const FrequencyObservation &obs, const NominalModel &model) {
    detail::require_positive_frequency(obs);
    const double root = std::sqrt(1.0 - model.zeta0 * model.zeta0);
    // Signed distance: positive for softening, negative for stiffening.
    const double d1 = (model.damped_omega0() - obs.omega_ds) / model.omega0;
    DeltaEstimate est;
    est.t_s = obs.t_s;
    est.delta_k = -d1 * (2.0 * root - d1);
    est.diagnostics.d1_tilde = d1;
    if (!(1.0 + *est.delta_k > 0.0))
        throw Error(Errc::ResultOutOfRange, "1 + dk_hat <= 0 at t_s=" + std::to_string(obs.t_s));
    return est;
}

inline DeltaEstimate invert_mass(const FrequencyObservation &obs, const NominalModel &model) {
    detail::require_positive_frequency(obs);
    const double z2 = model.zeta0 * model.zeta0;
    const double root = std::sqrt(1.0 - z2);
    const double d2 = (model.damped_omega0() - obs.omega_ds) / model.omega0;
    const double denom = 2.0 * (root - d2) * (root - d2);
    const double radicand =
        1.0 - 4.0 * d2 * d2 * z2 + 8.0 * d2 * root * z2 - 4.0 * z2 + 4.0 * z2 * z2;
    if (radicand < 0.0)
        throw Error(Errc::ComplexRoot, "negative radicand " + std::to_string(radicand) +
                                           " at t_s=" + std::to_string(obs.t_s));
    DeltaEstimate est;
    est.t_s = obs.t_s;
    est.delta_m = (-2.0 * d2 * d2 + 4.0 * d2 * root - 1.0 + 2.0 * z2) / denom +
                  std::sqrt(radicand) / denom;
    est.diagnostics.d2_tilde = d2;
    if (!(1.0 + *est.delta_m > 0.0) || !std::isfinite(*est.delta_m))
        throw Error(Errc::ResultOutOfRange, "1 + dm_hat <= 0 at t_s=" + std::to_string(obs.t_s));
    return est;
}

/// Alternative joint-case stiffness expression kept for comparison studies;
/// the estimator itself uses the imaginary-part identity.
inline double joint_stiffness_alt_form(double zeta0, double dR, double dI) {
    return (zeta0 * dR * dR - (1.0 - 2.0 * zeta0 * zeta0) * dI + zeta0 * zeta0 * dI * dI) /
           (zeta0 + dR);
}

inline DeltaEstimate invert_mass_stiffness(const FrequencyObservation &obs, const NominalModel &model,
                                           bool compare_alt_form = false) {
    if (!(model.zeta0 > 0.0))
        throw Error(Errc::UndampedAmbiguity,
                    "mass and stiffness are not separately identifiable without damping");
    detail::require_positive_frequency(obs);
    if (!obs.lambda_re || !(*obs.lambda_re < 0.0) || !std::isfinite(*obs.lambda_re))
        throw Error(Errc::InvalidFrequency,
                    "eigenvalue real part must be present and negative (t_s=" + std::to_string(obs.t_s) + ")");
    const double z = model.zeta0;
    const double dR = (model.lambda_re0() - *obs.lambda_re) / model.omega0;
    const double ratio = obs.omega_ds / model.omega0;
    const double mass_factor = z * model.omega0 / (-*obs.lambda_re); // 1 + dm
    DeltaEstimate est;
    est.t_s = obs.t_s;
    est.delta_m = mass_factor - 1.0;
    est.delta_k = mass_factor * ratio * ratio + z * z / mass_factor - 1.0;
    est.diagnostics.dR_tilde = dR;
    est.diagnostics.dI_tilde = std::sqrt(1.0 - z * z) - ratio;
    if (compare_alt_form)
        est.diagnostics.alt_delta_k = joint_stiffness_alt_form(z, dR, est.diagnostics.dI_tilde);
    if (!(1.0 + *est.delta_k > 0.0))
        throw Error(Errc::ResultOutOfRange, "1 + dk_hat <= 0 at t_s=" + std::to_string(obs.t_s));
    return est;
}

struct RejectedObservation {
    std::size_t index = 0;
    double t_s = 0.0;
    Errc reason = Errc::InvalidFrequency;
    std::string message;
};

/// Inversion results in input order; rejected rows are reported separately.
struct ProcessedDataset {
    std::vector<DeltaEstimate> estimates;
    std::vector<RejectedObservation> rejected;
    std::size_t total = 0;
};

/// Inverts every observation for the given case. Observations outside the
/// model manifold are excluded and reported, never clamped.
inline ProcessedDataset process_dataset(std::span<const FrequencyObservation> observations,
                                        const NominalModel &model, DegradationCase which) {
    if (which == DegradationCase::Joint && !(model.zeta0 > 0.0))
        throw Error(Errc::UndampedAmbiguity,
                    "mass and stiffness are not separately identifiable without damping");
    ProcessedDataset out;
    out.total = observations.size();
    for (std::size_t i = 0; i < observations.size(); ++i) {
        const auto &obs = observations[i];
        try {
            switch (which) {
            case DegradationCase::Stiffness: out.estimates.push_back(invert_stiffness(obs, model)); break;
            case DegradationCase::Mass: out.estimates.push_back(invert_mass(obs, model)); break;
            case DegradationCase::Joint: out.estimates.push_back(invert_mass_stiffness(obs, model)); break;
            }
        } catch (const Error &e) {
            if (e.code() == Errc::UndampedAmbiguity)
                throw;
            out.rejected.push_back({i, obs.t_s, e.code(), e.what()});
        }
    }
    if (out.estimates.empty())
        throw Error(Errc::AllObservationsRejected,
                    std::to_string(out.total) + " observation(s), none usable");
    return out;
}

} // namespace sdtwin
