// Nominal single-degree-of-freedom model
// Modal algebra under fractional mass/stiffness changes and analytic free response.
#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"

namespace sdtwin {

/// Pristine spring-mass-damper at service time zero.
///
/// Derived quantities are stored alongside the physical inputs; construct
/// through nominal_from_physical() so they stay consistent.
struct NominalModel {
    double m0 = 1.0;     ///< mass
    double c0 = 0.0;     ///< viscous damping coefficient
    double k0 = 1.0;     ///< stiffness
    double omega0 = 1.0; ///< natural frequency sqrt(k0/m0)
    double zeta0 = 0.0;  ///< damping ratio c0 / (2 sqrt(k0 m0))
    double period0 = 2.0 * std::numbers::pi; ///< 2 pi / omega0

    /// Damped natural frequency of the nominal system.
    double damped_omega0() const { return omega0 * std::sqrt(1.0 - zeta0 * zeta0); }
    /// Real part of the nominal eigenvalue.
    double lambda_re0() const { return -zeta0 * omega0; }
};

inline NominalModel nominal_from_physical(double m0, double c0, double k0) {
    if (!(m0 > 0.0) || !(k0 > 0.0) || !(c0 >= 0.0))
        throw Error(Errc::NonPositiveParameter,
                    "require m0 > 0, k0 > 0, c0 >= 0 (got m0=" + std::to_string(m0) +
                        ", c0=" + std::to_string(c0) + ", k0=" + std::to_string(k0) + ")");
    NominalModel model;
    model.m0 = m0;
    model.c0 = c0;
    model.k0 = k0;
    model.omega0 = std::sqrt(k0 / m0);
    model.zeta0 = c0 / (2.0 * std::sqrt(k0 * m0));
    if (!(model.zeta0 < 1.0))
        throw Error(Errc::Overdamped, "nominal damping ratio " + std::to_string(model.zeta0) + " >= 1");
    model.period0 = 2.0 * std::numbers::pi / model.omega0;
    return model;
}

/// Unit mass, unit period, given damping ratio.
inline NominalModel normalized_nominal(double zeta0 = 0.05) {
    const double k0 = 4.0 * std::numbers::pi * std::numbers::pi;
    return nominal_from_physical(1.0, 2.0 * zeta0 * std::sqrt(k0), k0);
}

/// Instantaneous modal quantities of the evolved system.
struct ModalState {
    double omega = 0.0;     ///< natural frequency
    double zeta = 0.0;      ///< damping ratio
    double omega_d = 0.0;   ///< damped natural frequency (= +imaginary part of eigenvalue)
    double lambda_re = 0.0; ///< real part of eigenvalue
    double lambda_im = 0.0; ///< positive imaginary part of eigenvalue
};

/// Modal state for m = m0 (1 + dm), k = k0 (1 + dk), constant damping.
inline ModalState modal_state(const NominalModel &model, double dm, double dk) {
    if (!(1.0 + dm > 0.0))
        throw Error(Errc::DegenerateMass, "1 + dm = " + std::to_string(1.0 + dm) + " <= 0");
    if (!(1.0 + dk > 0.0))
        throw Error(Errc::DegenerateStiffness, "1 + dk = " + std::to_string(1.0 + dk) + " <= 0");
    ModalState s;
    s.omega = model.omega0 * std::sqrt((1.0 + dk) / (1.0 + dm));
    s.zeta = model.zeta0 / (std::sqrt(1.0 + dm) * std::sqrt(1.0 + dk));
    if (!(s.zeta < 1.0))
        throw Error(Errc::Overdamped, "evolved damping ratio " + std::to_string(s.zeta) + " >= 1");
    s.omega_d = s.omega * std::sqrt(1.0 - s.zeta * s.zeta);
    s.lambda_re = -s.omega * s.zeta;
    s.lambda_im = s.omega_d;
    return s;
}

/// Intrinsic-time free vibration of the evolved system.
struct PredictedResponse {
    std::vector<double> time;
    std::vector<double> displacement;
    std::vector<double> velocity;
};

/// Underdamped free vibration from (u_init, v_init) sampled on a strictly
/// increasing grid of intrinsic time.
inline PredictedResponse free_response(const NominalModel &model, double dm, double dk,
                                       double u_init, double v_init,
                                       std::span<const double> time_grid) {
    for (std::size_t i = 1; i < time_grid.size(); ++i)
        if (!(time_grid[i] > time_grid[i - 1]))
            throw Error(Errc::InvalidGrid, "time grid must be strictly increasing");
    const ModalState s = modal_state(model, dm, dk);
    const double decay = s.zeta * s.omega;
    const double a = u_init;
    const double b = (v_init + decay * u_init) / s.omega_d;

    PredictedResponse r;
    r.time.assign(time_grid.begin(), time_grid.end());
    r.displacement.reserve(time_grid.size());
    r.velocity.reserve(time_grid.size());
    for (double t : time_grid) {
        const double env = std::exp(-decay * t);
        const double c = std::cos(s.omega_d * t);
        const double sn = std::sin(s.omega_d * t);
        r.displacement.push_back(env * (a * c + b * sn));
        r.velocity.push_back(env * ((s.omega_d * b - decay * a) * c - (s.omega_d * a + decay * b) * sn));
    }
    return r;
}

} // namespace sdtwin
