#pragma once

// Effective scattering length models: a(E) = a_b + sum_k alpha_k / (E - E_r,k)
// and a(E) = -tan(delta_0(k)) / k from tabulated s-wave phase shifts.
//
// Units at this boundary: lengths in Bohr radii, energies E/h in kHz,
// alpha in a0 kHz.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "trapspec/constants.hpp"
#include "trapspec/error.hpp"
#include "trapspec/trap_model.hpp"
#include "trapspec/varpro.hpp"

namespace trapspec {

struct ResonanceTerm {
    double alpha_a0khz = 0.0;
    double E_r_khz = 0.0;

    bool operator==(const ResonanceTerm&) const = default;
};

struct ResonanceModel {
    double a_b_a0 = 0.0;
    std::vector<ResonanceTerm> terms;

    bool operator==(const ResonanceModel&) const = default;

    static ResonanceModel background(double a_b) { return {a_b, {}}; }
    static ResonanceModel single(double a_b, double alpha, double E_r) { return {a_b, {{alpha, E_r}}}; }

    std::vector<double> poles_khz() const {
        std::vector<double> p;
        for (const auto& t : terms) p.push_back(t.E_r_khz);
        std::sort(p.begin(), p.end());
        return p;
    }

    void validate() const {
        if (!std::isfinite(a_b_a0)) throw InputError("resonance model: non-finite background length");
        auto p = poles_khz();
        for (std::size_t i = 0; i < p.size(); ++i) {
            if (!std::isfinite(p[i]) || !std::isfinite(terms[i].alpha_a0khz))
                throw InputError("resonance model: non-finite term");
            if (i > 0 && p[i] == p[i - 1]) throw InputError("resonance model: duplicate resonance positions");
        }
    }

    /// Same model with every length scaled by `factor`.
    ResonanceModel scaled(double factor) const {
        ResonanceModel m = *this;
        m.a_b_a0 *= factor;
        for (auto& t : m.terms) t.alpha_a0khz *= factor;
        return m;
    }
};

inline constexpr double resonance_pole_exclusion_khz = 1e-9;

/// a(E) in a0 for E/h in kHz. No pole check.
inline double evaluate_unchecked(const ResonanceModel& m, double E_khz) noexcept {
    double a = m.a_b_a0;
    for (const auto& t : m.terms) a += t.alpha_a0khz / (E_khz - t.E_r_khz);
    return a;
}

/// a(E) in a0 for E/h in kHz.
inline double evaluate(const ResonanceModel& m, double E_khz) {
    for (const auto& t : m.terms)
        if (std::abs(E_khz - t.E_r_khz) < resonance_pole_exclusion_khz)
            throw PoleError("resonance model evaluated at its pole E_r = " + std::to_string(t.E_r_khz) + " kHz");
    return evaluate_unchecked(m, E_khz);
}

/// The model as a function of trap-unit energy, in units of l.
inline LengthCurve as_length_curve(const ResonanceModel& m, const TrapConfig& trap) {
    const double l_a0 = trap.l_rel_a0();
    const double nu = trap.nu_khz();
    LengthCurve c;
    c.a_over_l = [m, l_a0, nu](double E_hw) { return evaluate_unchecked(m, E_hw * nu) / l_a0; };
    for (double p : m.poles_khz()) c.poles.push_back(p / nu);
    return c;
}

/// Forward solve for a resonance model in a trap.
inline EigenSpectrum solve_trap_levels(const ResonanceModel& m, const TrapConfig& trap, int n_levels) {
    return find_eigenenergies(as_length_curve(m, trap), trap, n_levels, default_energy_ceiling(n_levels));
}

// --- phase shifts -----------------------------------------------------------

struct PhaseShiftTable {
    std::vector<double> k_per_m;
    std::vector<double> delta0_rad;

    void validate() const {
        if (k_per_m.size() != delta0_rad.size()) throw InputError("phase-shift table: column length mismatch");
        if (k_per_m.size() < 2) throw InputError("phase-shift table: need at least two rows");
        for (std::size_t i = 0; i < k_per_m.size(); ++i) {
            if (!(k_per_m[i] > 0.0)) throw InputError("phase-shift table: k must be positive");
            if (i > 0 && !(k_per_m[i] > k_per_m[i - 1]))
                throw InputError("phase-shift table: k must be strictly increasing");
        }
    }
};

/// Wavenumber for collision energy E = hbar^2 k^2 / m (single-atom mass).
inline double wavenumber(double mass_kg, double E_khz) {
    const double E_joule = E_khz * 1e3 * constants::planck;
    return std::sqrt(mass_kg * E_joule) / constants::hbar;
}

struct PhaseShiftLength {
    double a_a0 = 0.0;
    bool pole_warning = false;
};

/// a(E) = -tan(delta_0(k)) / k with delta_0 linearly interpolated in k.
inline PhaseShiftLength effective_length_from_phase_shift(const PhaseShiftTable& table, double mass_kg,
                                                          double E_khz) {
    table.validate();
    if (!(E_khz > 0.0)) throw DomainError("phase-shift length: energy must be positive");
    const double k = wavenumber(mass_kg, E_khz);
    const auto& ks = table.k_per_m;
    if (k < ks.front() || k > ks.back())
        throw DomainError("phase-shift length: k = " + std::to_string(k) + " outside table range");
    auto it = std::upper_bound(ks.begin(), ks.end(), k);
    std::size_t hi = static_cast<std::size_t>(std::distance(ks.begin(), it));
    if (hi >= ks.size()) hi = ks.size() - 1;
    const std::size_t lo = hi - 1;
    const double t = (k - ks[lo]) / (ks[hi] - ks[lo]);
    const double d_lo = table.delta0_rad[lo];
    const double d_hi = table.delta0_rad[hi];
    const double delta = d_lo + t * (d_hi - d_lo);

    PhaseShiftLength out;
    out.a_a0 = -std::tan(delta) / k / constants::bohr_radius;
    // delta crossing pi/2 (mod pi) inside the cell means a(E) has a pole there.
    auto branch = [](double d) { return std::floor((d - 0.5 * constants::pi) / constants::pi); };
    out.pole_warning = branch(d_lo) != branch(d_hi);
    return out;
}

// --- model fitting -----------------------------------------------------------

struct CurveSample {
    double E_khz = 0.0;
    double a_a0 = 0.0;
};

struct CurveFitOptions {
    /// Window for the resonance positions; NaN means four sample spans on
    /// either side of the sampled energies.
    double pole_lo_khz = std::numeric_limits<double>::quiet_NaN();
    double pole_hi_khz = std::numeric_limits<double>::quiet_NaN();
    double grid_step_khz = 0.25;
    double refine_tol_khz = 1e-9;
    double sample_exclusion_khz = 1e-6;
};

struct CurveFitReport {
    ResonanceModel model;
    double rms_residual_a0 = 0.0;
    int n_samples = 0;
};

/// Least-squares fit of a 1- or 2-term resonance model to (E, a) samples.
inline CurveFitReport fit_model_to_curve(std::span<const CurveSample> samples, int n_terms,
                                         const CurveFitOptions& opt = {}) {
    if (n_terms != 1 && n_terms != 2) throw InputError("fit_model_to_curve: n_terms must be 1 or 2");
    const std::size_t need = n_terms == 1 ? 4 : 6;
    if (samples.size() < need)
        throw InputError("fit_model_to_curve: need at least " + std::to_string(need) + " samples");
    std::vector<double> x, y;
    for (const auto& s : samples) {
        if (!std::isfinite(s.E_khz) || !std::isfinite(s.a_a0)) throw InputError("fit_model_to_curve: non-finite sample");
        x.push_back(s.E_khz);
        y.push_back(s.a_a0);
    }
    {
        auto xs = x;
        std::sort(xs.begin(), xs.end());
        if (std::adjacent_find(xs.begin(), xs.end()) != xs.end())
            throw InputError("fit_model_to_curve: sample energies must be distinct");
    }
    const auto [mn, mx] = std::minmax_element(x.begin(), x.end());
    const double span = *mx - *mn;

    varpro::PoleSearch s;
    s.lo = std::isnan(opt.pole_lo_khz) ? *mn - 4.0 * span : opt.pole_lo_khz;
    s.hi = std::isnan(opt.pole_hi_khz) ? *mx + 4.0 * span : opt.pole_hi_khz;
    s.step = opt.grid_step_khz;
    s.tol = opt.refine_tol_khz;
    s.exclusion = opt.sample_exclusion_khz;

    const auto pf = n_terms == 1 ? varpro::fit_one_pole(x, y, s) : varpro::fit_two_poles(x, y, s);
    if (!std::isfinite(pf.linear.ssr)) throw SolverError("fit_model_to_curve: no finite residual");

    CurveFitReport rep;
    rep.model.a_b_a0 = pf.linear.a_b;
    for (std::size_t k = 0; k < pf.poles.size(); ++k) rep.model.terms.push_back({pf.linear.alpha[k], pf.poles[k]});
    rep.n_samples = pf.linear.n_used;
    rep.rms_residual_a0 = std::sqrt(pf.linear.ssr / double(std::max(1, pf.linear.n_used)));
    return rep;
}

} // namespace trapspec
