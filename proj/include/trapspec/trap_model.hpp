#pragma once

// Harmonic trap for the relative motion of an atom pair, the intercept
// function f(E) and the forward eigenenergy solver for an energy-dependent
// scattering length a(E) = l f(E).
//
// Internal units: energies in hbar*omega, lengths in l = sqrt(2 hbar / m omega).

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "trapspec/constants.hpp"
#include "trapspec/error.hpp"
#include "trapspec/special_fn.hpp"

namespace trapspec {

struct TrapConfig {
    double nu_trap_hz = 4000.0;
    double mass_kg = constants::atom_presets[0].mass_kg;

    TrapConfig() = default;
    TrapConfig(double nu_hz, double mass) : nu_trap_hz(nu_hz), mass_kg(mass) { validate(); }

    void validate() const {
        if (!(nu_trap_hz > 0.0) || !std::isfinite(nu_trap_hz))
            throw InputError("trap frequency must be positive");
        if (!(mass_kg > 0.0) || !std::isfinite(mass_kg))
            throw InputError("atom mass must be positive");
    }

    double omega() const noexcept { return 2.0 * constants::pi * nu_trap_hz; }
    double nu_khz() const noexcept { return nu_trap_hz * 1e-3; }
    /// Relative-motion length sqrt(2 hbar / (m omega)) with m the single-atom mass.
    double l_rel_m() const noexcept { return std::sqrt(2.0 * constants::hbar / (mass_kg * omega())); }
    double l_rel_a0() const noexcept { return l_rel_m() / constants::bohr_radius; }

    /// hbar*omega = h*nu, so E/h in kHz is E[hbar omega] * nu[kHz].
    double to_khz(double E_hw) const noexcept { return E_hw * nu_khz(); }
    double to_trap_units(double E_khz) const noexcept { return E_khz / nu_khz(); }
};

/// Energy of the k-th tangent pole, 1/2 + 2k.
inline constexpr double tangent_pole(int k) noexcept { return 0.5 + 2.0 * k; }

/// Index of the tangent-pole interval containing E: 0 for (0, 1/2), k for
/// (1/2 + 2(k-1), 1/2 + 2k).
inline int tangent_interval(double E) noexcept {
    if (E < 0.5) return 0;
    return static_cast<int>(std::floor((E - 0.5) / 2.0)) + 1;
}

/// Distance from E to the nearest tangent pole.
inline double distance_to_tangent_pole(double E) noexcept {
    const double k = std::round((E - 0.5) / 2.0);
    return std::abs(E - tangent_pole(static_cast<int>(k)));
}

inline constexpr double tangent_pole_exclusion = 1e-9;

/// f(E) = (1/2) tan(pi E / 2 + pi / 4) Gamma(1/4 + E/2) / Gamma(3/4 + E/2).
inline double intercept_function(double E) {
    if (!(E > -0.5)) throw DomainError("intercept_function: requires E > -1/2");
    if (distance_to_tangent_pole(E) < tangent_pole_exclusion)
        throw PoleError("intercept_function: E = " + std::to_string(E) + " is at a tangent pole");
    return 0.5 * std::tan(0.5 * constants::pi * E + 0.25 * constants::pi) * special_fn::gamma_ratio(E);
}

/// df/dE.
inline double intercept_derivative(double E) {
    const double theta = 0.5 * constants::pi * E + 0.25 * constants::pi;
    const double t = std::tan(theta);
    const double ratio = special_fn::gamma_ratio(E);
    const double sec2 = 1.0 + t * t;
    return 0.5 * ratio * (0.5 * constants::pi * sec2 + t * special_fn::gamma_ratio_log_derivative(E));
}

/// Scattering length expressed in trap units: E in hbar*omega -> a/l.
/// `poles` lists energies (hbar*omega) where a(E) diverges.
struct LengthCurve {
    std::function<double(double)> a_over_l;
    std::vector<double> poles;

    static LengthCurve constant(double a_over_l) {
        return {[a_over_l](double) { return a_over_l; }, {}};
    }
};

struct EigenLevel {
    int n = 0;
    double E = 0.0;           // hbar*omega
    int interval_index = 0;
};

struct EigenSpectrum {
    std::vector<EigenLevel> levels;
    TrapConfig trap;
    /// Intervals scanned without any sign change of a(E)/l - f(E).
    std::vector<int> empty_intervals;

    std::size_t size() const noexcept { return levels.size(); }
    double energy(std::size_t i) const { return levels.at(i).E; }
    double energy_khz(std::size_t i) const { return trap.to_khz(levels.at(i).E); }
    std::vector<double> energies() const {
        std::vector<double> out;
        out.reserve(levels.size());
        for (const auto& lv : levels) out.push_back(lv.E);
        return out;
    }
};

struct EigenSolverOptions {
    int grid_points = 200;
    int max_grid_points = 3200;
    double tolerance = 1e-13;   // hbar*omega, bracket width at termination
};

namespace detail {

inline double bisect(const std::function<double(double)>& g, double lo, double hi, double g_lo, double tol) {
    for (int it = 0; it < 200 && hi - lo > tol; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        const double g_mid = g(mid);
        if (g_mid == 0.0) return mid;
        if ((g_mid > 0.0) == (g_lo > 0.0)) {
            lo = mid;
            g_lo = g_mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

} // namespace detail

/// Lowest `n_levels` solutions of a(E)/l = f(E) with 0 < E < E_max.
///
/// Each tangent-pole interval is split at the declared poles of a(E); every
/// continuous segment is scanned on a uniform grid for sign changes of
/// g(E) = a(E)/l - f(E), and each bracket is bisected.
inline EigenSpectrum find_eigenenergies(const LengthCurve& curve, const TrapConfig& trap, int n_levels,
                                        double E_max, const EigenSolverOptions& opt = {}) {
    if (n_levels < 1) throw InputError("find_eigenenergies: n_levels must be >= 1");
    if (!curve.a_over_l) throw InputError("find_eigenenergies: empty scattering-length function");
    trap.validate();

    const std::function<double(double)> g = [&](double E) {
        return curve.a_over_l(E) - 0.5 * std::tan(0.5 * constants::pi * E + 0.25 * constants::pi) *
                                       special_fn::gamma_ratio(E);
    };

    EigenSpectrum out;
    out.trap = trap;
    const double edge = 1e-10;

    for (int k = 0;; ++k) {
        const double lo = k == 0 ? 0.0 : tangent_pole(k - 1);
        const double hi = tangent_pole(k);
        if (lo >= E_max) break;
        if (static_cast<int>(out.levels.size()) >= n_levels) break;
        const double top = std::min(hi, E_max);

        std::vector<double> cuts{lo};
        bool has_pole = false;
        for (double p : curve.poles) {
            if (p > lo && p < top) {
                cuts.push_back(p);
                has_pole = true;
            }
        }
        std::sort(cuts.begin(), cuts.end());
        cuts.push_back(top);

        const int n_grid = has_pole ? opt.max_grid_points : opt.grid_points;
        std::vector<double> roots;
        for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
            const double a = cuts[s] + edge;
            const double b = cuts[s + 1] - (cuts[s + 1] == hi || s + 2 < cuts.size() ? edge : 0.0);
            if (!(b > a)) continue;
            const int points = std::max(2, n_grid / static_cast<int>(cuts.size() - 1));
            double x_prev = a;
            double g_prev = g(a);
            for (int i = 1; i <= points; ++i) {
                const double x = a + (b - a) * double(i) / double(points);
                const double gx = g(x);
                if (std::isfinite(g_prev) && std::isfinite(gx)) {
                    if (g_prev == 0.0) {
                        roots.push_back(x_prev);
                    } else if ((g_prev > 0.0) != (gx > 0.0) && gx != 0.0) {
                        roots.push_back(detail::bisect(g, x_prev, x, g_prev, opt.tolerance));
                    }
                }
                x_prev = x;
                g_prev = gx;
            }
            if (g_prev == 0.0) roots.push_back(x_prev);
        }
        std::sort(roots.begin(), roots.end());
        if (roots.empty()) out.empty_intervals.push_back(k);
        for (double r : roots) {
            if (r > 0.0 && r < E_max)
                out.levels.push_back({static_cast<int>(out.levels.size()), r, k});
        }
    }

    if (static_cast<int>(out.levels.size()) < n_levels)
        throw SolverError("find_eigenenergies: found " + std::to_string(out.levels.size()) + " of " +
                          std::to_string(n_levels) + " levels below E_max = " + std::to_string(E_max));
    out.levels.resize(static_cast<std::size_t>(n_levels));
    return out;
}

/// Default energy ceiling for `n_levels` levels: two tangent intervals of headroom.
inline double default_energy_ceiling(int n_levels) { return tangent_pole(n_levels + 2); }

struct Transition {
    int from = 0;
    int to = 0;
    double delta_hw = 0.0;
    double delta_khz = 0.0;
};

/// E_i - E_ref for every i != ref, in both unit systems.
inline std::vector<Transition> transition_energies(const EigenSpectrum& spectrum, int reference_index) {
    if (reference_index < 0 || reference_index >= static_cast<int>(spectrum.size()))
        throw InputError("transition_energies: reference index out of range");
    std::vector<Transition> out;
    const double ref = spectrum.levels[static_cast<std::size_t>(reference_index)].E;
    for (const auto& lv : spectrum.levels) {
        if (lv.n == reference_index) continue;
        const double d = lv.E - ref;
        out.push_back({reference_index, lv.n, d, spectrum.trap.to_khz(d)});
    }
    return out;
}

} // namespace trapspec
