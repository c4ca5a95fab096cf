#pragma once

// Recovery of resonance-model parameters and the absolute reference energy
// from measured transition energies.
//
// For each trial reference energy E_0 the implied levels E_i = E_0 + dE_i are
// fitted by a(E_i) = l f(E_i) with variable projection; chi2(E_0) is the
// residual sum of squares (a0^2). Near-zero local minima of chi2(E_0) are the
// admissible reference energies.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "trapspec/error.hpp"
#include "trapspec/parallel.hpp"
#include "trapspec/scattering_model.hpp"
#include "trapspec/trap_model.hpp"
#include "trapspec/varpro.hpp"

namespace trapspec {

struct MeasuredSpectrum {
    std::vector<double> delta_E_khz;  // E_i - E_0, i = 1..N
    double sigma_hz = 0.0;
    TrapConfig trap;

    void validate(int n_terms = 1) const {
        trap.validate();
        const std::size_t need = n_terms == 1 ? 3 : 5;
        if (delta_E_khz.size() < need)
            throw InputError("measurement: " + std::to_string(delta_E_khz.size()) + " transition energies for a " +
                             std::to_string(n_terms) + "-term model; at least " + std::to_string(need) +
                             " are needed (one equation per unknown)");
        for (std::size_t i = 0; i < delta_E_khz.size(); ++i) {
            if (!std::isfinite(delta_E_khz[i]) || !(delta_E_khz[i] > 0.0))
                throw InputError("measurement: transition energies must be positive");
            if (i > 0 && !(delta_E_khz[i] > delta_E_khz[i - 1]))
                throw InputError("measurement: transition energies must be strictly increasing and distinct");
        }
        if (!(sigma_hz >= 0.0)) throw InputError("measurement: sigma must be non-negative");
    }

    /// Exact transition energies of the lowest n_lines + 1 levels of a model.
    static MeasuredSpectrum synthetic(const ResonanceModel& truth, const TrapConfig& trap, int n_lines) {
        const auto spec = solve_trap_levels(truth, trap, n_lines + 1);
        MeasuredSpectrum m;
        m.trap = trap;
        for (const auto& t : transition_energies(spec, 0)) m.delta_E_khz.push_back(t.delta_khz);
        return m;
    }
};

struct ScanOptions {
    /// Trial reference-energy window (kHz); NaN means (0.05, 2.45) hbar*omega.
    double E0_lo_khz = std::numeric_limits<double>::quiet_NaN();
    double E0_hi_khz = std::numeric_limits<double>::quiet_NaN();
    double grid_step_khz = 0.01;
    /// Near-zero threshold in a0^2; NaN means the default (see chi2_threshold).
    double threshold_a0sq = std::numeric_limits<double>::quiet_NaN();
    /// Floor of the default threshold, as a fraction of l.
    double threshold_rel_l = 1e-5;
    double refine_tol_khz = 1e-9;
    int n_terms = 1;
    /// Resonance-position search window in units of hbar*omega.
    double pole_lo_hw = -50.0;
    double pole_hi_hw = 100.0;
    double pole_step_khz = 0.25;
    double pole_tol_khz = 1e-9;
    /// Resonance positions closer than this to the fitted level span are rejected.
    double pole_exclusion_hw = 0.5;
    int threads = 1;
};

struct ScanPoint {
    double E0_khz = 0.0;
    double chi2 = std::numeric_limits<double>::infinity();
    bool valid = false;
    ResonanceModel model;
};

struct ScanMinimum {
    double E0_khz = 0.0;
    double chi2 = 0.0;
    double threshold = 0.0;
    ResonanceModel model;
};

struct FitResult {
    std::vector<ScanPoint> scan;
    std::vector<ScanMinimum> minima;   // near-zero minima, ascending E0
    std::optional<std::size_t> selected;
    MeasuredSpectrum measurement;
    ScanOptions options;
    std::vector<std::string> warnings;
};

namespace detail {

inline bool levels_admissible(std::span<const double> E_hw, double pole_window) {
    int prev_interval = -1;
    for (double E : E_hw) {
        if (!(E > 0.0)) return false;
        if (distance_to_tangent_pole(E) < pole_window) return false;
        const int k = tangent_interval(E);
        if (k == prev_interval) return false;
        prev_interval = k;
    }
    return true;
}

} // namespace detail

inline constexpr double level_pole_window_hw = 1e-6;

/// Best fit of the resonance model at one trial reference energy.
inline ScanPoint chi2_at(const MeasuredSpectrum& meas, double E0_khz, const ScanOptions& opt) {
    ScanPoint pt;
    pt.E0_khz = E0_khz;
    const auto& trap = meas.trap;
    std::vector<double> E_khz{E0_khz};
    for (double d : meas.delta_E_khz) E_khz.push_back(E0_khz + d);
    std::vector<double> E_hw;
    for (double e : E_khz) E_hw.push_back(trap.to_trap_units(e));
    if (!detail::levels_admissible(E_hw, level_pole_window_hw)) return pt;

    const double l_a0 = trap.l_rel_a0();
    std::vector<double> y;
    for (double e : E_hw) y.push_back(l_a0 * intercept_function(e));

    varpro::PoleSearch s;
    s.lo = trap.to_khz(opt.pole_lo_hw);
    s.hi = trap.to_khz(opt.pole_hi_hw);
    s.step = opt.pole_step_khz;
    s.tol = opt.pole_tol_khz;
    const double margin = trap.to_khz(opt.pole_exclusion_hw);
    // A pole among the fitted levels would add crossings inside the data span.
    s.forbid_lo = E_khz.front() - margin;
    s.forbid_hi = E_khz.back() + margin;

    varpro::PoleFit pf;
    try {
        pf = opt.n_terms == 1 ? varpro::fit_one_pole(E_khz, y, s) : varpro::fit_two_poles(E_khz, y, s);
    } catch (const SolverError&) {
        return pt;
    }
    if (!std::isfinite(pf.linear.ssr)) return pt;
    pt.valid = true;
    pt.chi2 = pf.linear.ssr;
    pt.model.a_b_a0 = pf.linear.a_b;
    for (std::size_t k = 0; k < pf.poles.size(); ++k) pt.model.terms.push_back({pf.linear.alpha[k], pf.poles[k]});
    return pt;
}

/// Near-zero threshold (a0^2) at a trial E0: (threshold_rel_l * l)^2 plus the
/// squared residual that the stated line uncertainty can produce,
/// sum_i (l f'(E_i) sigma)^2.
inline double chi2_threshold(const MeasuredSpectrum& meas, double E0_khz, const ScanOptions& opt) {
    if (!std::isnan(opt.threshold_a0sq)) return opt.threshold_a0sq;
    const double l_a0 = meas.trap.l_rel_a0();
    double th = (opt.threshold_rel_l * l_a0) * (opt.threshold_rel_l * l_a0);
    if (meas.sigma_hz > 0.0) {
        const double sigma_hw = meas.trap.to_trap_units(meas.sigma_hz * 1e-3);
        for (double d : meas.delta_E_khz) {
            const double E = meas.trap.to_trap_units(E0_khz + d);
            const double r = l_a0 * intercept_derivative(E) * sigma_hw;
            th += r * r;
        }
    }
    return th;
}

inline std::pair<double, double> default_E0_window(const TrapConfig& trap) {
    return {trap.to_khz(0.05), trap.to_khz(2.45)};
}

/// chi2(E_0) over a window of trial reference energies, with near-zero minima
/// refined by golden-section search.
inline FitResult chi2_scan(const MeasuredSpectrum& meas, const ScanOptions& opt_in = {}) {
    meas.validate(opt_in.n_terms);
    if (!(opt_in.grid_step_khz > 0.0)) throw InputError("chi2_scan: grid step must be positive");
    ScanOptions opt = opt_in;
    const auto [dlo, dhi] = default_E0_window(meas.trap);
    if (std::isnan(opt.E0_lo_khz)) opt.E0_lo_khz = dlo;
    if (std::isnan(opt.E0_hi_khz)) opt.E0_hi_khz = dhi;
    if (!(opt.E0_hi_khz > opt.E0_lo_khz)) throw InputError("chi2_scan: empty E0 window");

    FitResult res;
    res.measurement = meas;
    res.options = opt;

    const auto n = static_cast<std::size_t>(std::floor((opt.E0_hi_khz - opt.E0_lo_khz) / opt.grid_step_khz + 1e-9)) + 1;
    res.scan.resize(n);
    parallel_for(n, opt.threads, [&](std::size_t i) {
        res.scan[i] = chi2_at(meas, opt.E0_lo_khz + opt.grid_step_khz * double(i), opt);
    });
    if (std::none_of(res.scan.begin(), res.scan.end(), [](const ScanPoint& p) { return p.valid; }))
        throw InputError("chi2_scan: every trial E0 places a level on a tangent pole or two levels in one interval");

    // Local minima of the grid, refined and then tested against the threshold.
    std::vector<std::size_t> grid_minima;
    for (std::size_t i = 1; i + 1 < n; ++i) {
        const auto& a = res.scan[i - 1];
        const auto& b = res.scan[i];
        const auto& c = res.scan[i + 1];
        if (!b.valid) continue;
        const bool left = !a.valid || a.chi2 > b.chi2;
        const bool right = !c.valid || c.chi2 >= b.chi2;
        if (left && right && (a.valid || c.valid)) grid_minima.push_back(i);
    }

    std::vector<ScanMinimum> refined(grid_minima.size());
    std::vector<char> keep(grid_minima.size(), 0);
    parallel_for(grid_minima.size(), opt.threads, [&](std::size_t m) {
        const std::size_t i = grid_minima[m];
        double lo = res.scan[i - 1].valid ? res.scan[i - 1].E0_khz : res.scan[i].E0_khz;
        double hi = res.scan[i + 1].valid ? res.scan[i + 1].E0_khz : res.scan[i].E0_khz;
        auto obj = [&](double e) {
            const auto p = chi2_at(meas, e, opt);
            return p.valid ? p.chi2 : std::numeric_limits<double>::infinity();
        };
        double best = res.scan[i].E0_khz;
        if (hi > lo) best = varpro::golden_section(obj, lo, hi, opt.refine_tol_khz);
        auto pt = chi2_at(meas, best, opt);
        if (!pt.valid || pt.chi2 > res.scan[i].chi2) pt = res.scan[i];
        const double th = chi2_threshold(meas, pt.E0_khz, opt);
        if (pt.chi2 < th) {
            refined[m] = {pt.E0_khz, pt.chi2, th, pt.model};
            keep[m] = 1;
        }
    });
    for (std::size_t m = 0; m < refined.size(); ++m)
        if (keep[m]) res.minima.push_back(refined[m]);
    if (res.minima.empty()) res.warnings.push_back("no chi2 minimum below the near-zero threshold");
    return res;
}

// --- disambiguation ----------------------------------------------------------

/// Outside estimate: a(E_khz) expected within [a_lo, a_hi] (a0).
struct LengthPrior {
    double E_khz = 0.0;
    double a_lo_a0 = 0.0;
    double a_hi_a0 = 0.0;
};

struct Disambiguation {
    std::vector<std::size_t> candidates;   // minima compatible with the prior
    std::optional<std::size_t> selected;   // set only when the choice is unique
    bool tied() const noexcept { return candidates.size() > 1; }
};

/// Minima whose fitted a(E) at the prior energy lies inside the prior interval.
inline Disambiguation disambiguate(const FitResult& result, const LengthPrior& prior) {
    if (result.minima.empty()) throw NoFitError("disambiguate: no near-zero minimum to choose from");
    Disambiguation d;
    for (std::size_t i = 0; i < result.minima.size(); ++i) {
        const auto& m = result.minima[i].model;
        bool at_pole = false;
        for (const auto& t : m.terms)
            if (std::abs(prior.E_khz - t.E_r_khz) < resonance_pole_exclusion_khz) at_pole = true;
        if (at_pole) continue;
        const double a = evaluate_unchecked(m, prior.E_khz);
        if (a >= prior.a_lo_a0 && a <= prior.a_hi_a0) d.candidates.push_back(i);
    }
    if (d.candidates.empty()) throw NoFitError("disambiguate: every minimum violates the prior");
    if (d.candidates.size() == 1) d.selected = d.candidates.front();
    return d;
}

/// Explicit tie-break for callers that must pick one candidate: the minimum
/// whose a(E_khz) is nearest `a_center`.
inline std::size_t closest_to_prior(const FitResult& result, const Disambiguation& d, double E_khz,
                                    double a_center) {
    if (d.candidates.empty()) throw NoFitError("closest_to_prior: no candidates");
    std::size_t pick = d.candidates.front();
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t c : d.candidates) {
        const double dist = std::abs(evaluate_unchecked(result.minima[c].model, E_khz) - a_center);
        if (dist < best) {
            best = dist;
            pick = c;
        }
    }
    return pick;
}

/// Mean |a1 - a2| / |a2| over [lo, hi] (fraction), trapezoid rule.
inline double integrated_relative_difference(const ResonanceModel& a1, const ResonanceModel& a2, double lo,
                                             double hi, int n_grid = 400) {
    double sum = 0.0;
    const double h = (hi - lo) / double(n_grid - 1);
    for (int i = 0; i < n_grid; ++i) {
        const double E = lo + h * double(i);
        const double w = (i == 0 || i == n_grid - 1) ? 0.5 : 1.0;
        sum += w * std::abs(evaluate(a1, E) - evaluate(a2, E)) / std::abs(evaluate(a2, E));
    }
    return sum * h / (hi - lo);
}

struct PairedDisambiguation {
    std::vector<std::pair<std::size_t, std::size_t>> candidates;
    std::optional<std::pair<std::size_t, std::size_t>> selected;
    bool tied() const noexcept { return candidates.size() > 1; }
};

/// Two-trap mode: pairs of minima (one per trap frequency) whose fitted models
/// agree within `tolerance` (fractional integrated difference) over the
/// overlap of their fitted level spans.
inline PairedDisambiguation disambiguate(const FitResult& a, const FitResult& b, double tolerance = 0.05) {
    if (a.minima.empty() || b.minima.empty()) throw NoFitError("disambiguate: no near-zero minimum to choose from");
    PairedDisambiguation d;
    auto span_of = [](const FitResult& r, const ScanMinimum& m) {
        return std::pair{m.E0_khz, m.E0_khz + r.measurement.delta_E_khz.back()};
    };
    for (std::size_t i = 0; i < a.minima.size(); ++i) {
        for (std::size_t j = 0; j < b.minima.size(); ++j) {
            const auto [alo, ahi] = span_of(a, a.minima[i]);
            const auto [blo, bhi] = span_of(b, b.minima[j]);
            const double lo = std::max(alo, blo), hi = std::min(ahi, bhi);
            if (!(hi > lo)) continue;
            bool pole = false;
            for (const auto* m : {&a.minima[i].model, &b.minima[j].model})
                for (const auto& t : m->terms)
                    if (t.E_r_khz >= lo - 1e-3 && t.E_r_khz <= hi + 1e-3) pole = true;
            if (pole) continue;
            if (integrated_relative_difference(a.minima[i].model, b.minima[j].model, lo, hi) <= tolerance)
                d.candidates.emplace_back(i, j);
        }
    }
    if (d.candidates.empty()) throw NoFitError("disambiguate: no pair of minima agrees across trap frequencies");
    if (d.candidates.size() == 1) d.selected = d.candidates.front();
    return d;
}

struct CurvePoint {
    double E_khz = 0.0;
    double a_a0 = 0.0;
};

/// Selected fitted model sampled on a uniform grid over [lo, hi].
inline std::vector<CurvePoint> extract_length_curve(const FitResult& result, std::size_t selected, double lo_khz,
                                                    double hi_khz, int n_points) {
    if (selected >= result.minima.size()) throw InputError("extract_length_curve: no such minimum");
    if (n_points < 1) throw InputError("extract_length_curve: n_points must be >= 1");
    if (n_points > 1 && !(hi_khz > lo_khz)) throw InputError("extract_length_curve: empty energy range");
    const auto& model = result.minima[selected].model;
    for (const auto& t : model.terms)
        if (t.E_r_khz >= lo_khz - 1e-3 && t.E_r_khz <= hi_khz + 1e-3)
            throw PoleError("extract_length_curve: fitted resonance at " + std::to_string(t.E_r_khz) +
                            " kHz lies in the requested range");
    std::vector<CurvePoint> out;
    out.reserve(static_cast<std::size_t>(n_points));
    for (int i = 0; i < n_points; ++i) {
        const double E = n_points == 1 ? lo_khz : lo_khz + (hi_khz - lo_khz) * double(i) / double(n_points - 1);
        out.push_back({E, evaluate(model, E)});
    }
    return out;
}

} // namespace trapspec
