#pragma once

// Special functions used throughout: log-gamma, the gamma ratio entering the
// intercept function, harmonic-oscillator s-wave amplitudes and
// Clebsch-Gordan coefficients for integer angular momenta.

#include <array>
#include <cmath>
#include <cstdlib>
#include <string>

#include <boost/math/special_functions/digamma.hpp>

#include "trapspec/constants.hpp"
#include "trapspec/error.hpp"

namespace trapspec {

/// |f1 m1> |f2 m2> product state of two integer spins.
struct AngularMomentumKet {
    int f1 = 0;
    int m1 = 0;
    int f2 = 0;
    int m2 = 0;

    int total_projection() const noexcept { return m1 + m2; }
    bool valid() const noexcept {
        return f1 >= 0 && f2 >= 0 && std::abs(m1) <= f1 && std::abs(m2) <= f2;
    }
};

namespace special_fn {

namespace detail {

// Lanczos approximation, g = 7, nine coefficients.
inline constexpr double lanczos_g = 7.0;
inline constexpr std::array<double, 9> lanczos_coeff{
    0.99999999999980993,     676.5203681218851,     -1259.1392167224028,
    771.32342877765313,      -176.61502916214059,   12.507343278686905,
    -0.13857109526572012,    9.9843695780195716e-6, 1.5056327351493116e-7};

inline constexpr int log_factorial_table_size = 128;

inline const std::array<double, log_factorial_table_size>& log_factorials() {
    static const auto table = [] {
        std::array<double, log_factorial_table_size> t{};
        t[0] = 0.0;
        for (int i = 1; i < log_factorial_table_size; ++i) t[i] = t[i - 1] + std::log(double(i));
        return t;
    }();
    return table;
}

inline double log_factorial(int n) {
    if (n < 0 || n >= log_factorial_table_size)
        throw DomainError("log_factorial: argument " + std::to_string(n) + " outside table");
    return log_factorials()[static_cast<std::size_t>(n)];
}

} // namespace detail

/// ln Gamma(x) for x > 0.
inline double log_gamma(double x) {
    if (!(x > 0.0) || !std::isfinite(x))
        throw DomainError("log_gamma: argument must be positive and finite");
    if (x < 0.5) {
        // Gamma(x) = Gamma(x + 1) / x keeps the Lanczos sum in its accurate range.
        return log_gamma(x + 1.0) - std::log(x);
    }
    const double z = x - 1.0;
    double sum = detail::lanczos_coeff[0];
    for (std::size_t i = 1; i < detail::lanczos_coeff.size(); ++i)
        sum += detail::lanczos_coeff[i] / (z + double(i));
    const double t = z + detail::lanczos_g + 0.5;
    return 0.5 * std::log(2.0 * constants::pi) + (z + 0.5) * std::log(t) - t + std::log(sum);
}

/// Gamma(1/4 + E/2) / Gamma(3/4 + E/2), E in units of hbar*omega.
inline double gamma_ratio(double E) {
    if (!(E > -0.5))
        throw DomainError("gamma_ratio: requires E > -1/2");
    return std::exp(log_gamma(0.25 + 0.5 * E) - log_gamma(0.75 + 0.5 * E));
}

/// d/dE ln gamma_ratio(E).
inline double gamma_ratio_log_derivative(double E) {
    if (!(E > -0.5))
        throw DomainError("gamma_ratio_log_derivative: requires E > -1/2");
    return 0.5 * (boost::math::digamma(0.25 + 0.5 * E) - boost::math::digamma(0.75 + 0.5 * E));
}

/// <j1 m1; j2 m2 | J M> for integer spins, Condon-Shortley phase.
/// Returns 0 whenever the coefficient vanishes by selection rules.
inline double clebsch_gordan(int j1, int m1, int j2, int m2, int J, int M) {
    if (j1 < 0 || j2 < 0 || J < 0) return 0.0;
    if (M != m1 + m2) return 0.0;
    if (std::abs(m1) > j1 || std::abs(m2) > j2 || std::abs(M) > J) return 0.0;
    if (J < std::abs(j1 - j2) || J > j1 + j2) return 0.0;

    using detail::log_factorial;
    const double log_pre =
        0.5 * (std::log(2.0 * J + 1.0) + log_factorial(J + j1 - j2) + log_factorial(J - j1 + j2) +
               log_factorial(j1 + j2 - J) - log_factorial(j1 + j2 + J + 1) +
               log_factorial(J + M) + log_factorial(J - M) + log_factorial(j1 - m1) +
               log_factorial(j1 + m1) + log_factorial(j2 - m2) + log_factorial(j2 + m2));

    const int k_min = std::max({0, j2 - J - m1, j1 - J + m2});
    const int k_max = std::min({j1 + j2 - J, j1 - m1, j2 + m2});
    double sum = 0.0;
    for (int k = k_min; k <= k_max; ++k) {
        const double log_den = log_factorial(k) + log_factorial(j1 + j2 - J - k) +
                               log_factorial(j1 - m1 - k) + log_factorial(j2 + m2 - k) +
                               log_factorial(J - j2 + m1 + k) + log_factorial(J - j1 - m2 + k);
        const double term = std::exp(log_pre - log_den);
        sum += (k % 2 == 0) ? term : -term;
    }
    return sum;
}

/// psi_n(0) of the normalized n-th s-wave state of the 3D isotropic oscillator
/// with Gaussian length `length` (psi_0 ~ exp(-r^2 / 2 length^2)). Positive by
/// convention; units length^{-3/2}.
inline double ho_origin_amplitude(int n, double length = 1.0) {
    if (n < 0) throw DomainError("ho_origin_amplitude: n must be non-negative");
    if (!(length > 0.0)) throw DomainError("ho_origin_amplitude: length must be positive");
    const double ratio = std::exp(log_gamma(n + 1.5) - log_gamma(n + 1.0));
    return std::sqrt(2.0 * ratio) / constants::pi * std::pow(length, -1.5);
}

/// psi_n(r), the normalized s-wave oscillator eigenfunction (including the
/// 1/sqrt(4 pi) of Y_00), with psi_n(0) = ho_origin_amplitude(n, length).
inline double ho_radial(int n, double r, double length = 1.0) {
    if (n < 0) throw DomainError("ho_radial: n must be non-negative");
    const double x = (r / length) * (r / length);
    constexpr double alpha = 0.5;
    // Normalized Laguerre recurrence: u_k = L_k^{1/2}(x) sqrt(k!/Gamma(k+3/2)) e^{-x/2}.
    double u_prev = 0.0;
    double u = std::exp(-0.5 * x - 0.5 * log_gamma(1.5));
    for (int k = 0; k < n; ++k) {
        const double kk = k;
        const double r1 = std::sqrt((kk + 1.0) / (kk + alpha + 1.0));
        const double r2 = k > 0 ? std::sqrt((kk + 1.0) * kk / ((kk + alpha + 1.0) * (kk + alpha))) : 0.0;
        const double next = ((2.0 * kk + 1.0 + alpha - x) * u * r1 - (kk + alpha) * u_prev * r2) / (kk + 1.0);
        u_prev = u;
        u = next;
    }
    return u * std::sqrt(2.0 / (4.0 * constants::pi)) * std::pow(length, -1.5);
}

} // namespace special_fn
} // namespace trapspec
