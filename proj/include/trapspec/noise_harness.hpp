#pragma once

// Monte Carlo accuracy analysis: exact transition energies from a known model
// are perturbed by uniform line-position noise, inverted, and compared with the
// truth by the integrated mean percent difference over [E_0, E_3].

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "trapspec/error.hpp"
#include "trapspec/inversion.hpp"
#include "trapspec/parallel.hpp"
#include "trapspec/scattering_model.hpp"

namespace trapspec {

/// 100/(hi-lo) * integral_lo^hi |a_est - a_true| / |a_true| dE, trapezoid rule.
inline double error_metric(const ResonanceModel& a_est, const ResonanceModel& a_true, double lo_khz, double hi_khz,
                           int n_grid = 400) {
    if (n_grid < 50) throw InputError("error_metric: n_grid must be >= 50");
    if (!(hi_khz > lo_khz)) throw InputError("error_metric: empty energy range");
    for (const auto* m : {&a_est, &a_true})
        for (const auto& t : m->terms)
            if (t.E_r_khz >= lo_khz - 1e-3 && t.E_r_khz <= hi_khz + 1e-3)
                throw PoleError("error_metric: resonance at " + std::to_string(t.E_r_khz) + " kHz inside range");
    const double h = (hi_khz - lo_khz) / double(n_grid - 1);
    double sum = 0.0;
    for (int i = 0; i < n_grid; ++i) {
        const double E = lo_khz + h * double(i);
        const double w = (i == 0 || i == n_grid - 1) ? 0.5 : 1.0;
        const double a = evaluate(a_true, E);
        sum += w * std::abs(evaluate(a_est, E) - a) / std::abs(a);
    }
    return 100.0 * sum * h / (hi_khz - lo_khz);
}

enum class SweepMode { raman, rabi };

inline const char* to_string(SweepMode m) { return m == SweepMode::raman ? "raman" : "rabi"; }

struct NoiseSweepConfig {
    ResonanceModel truth;
    TrapConfig trap;
    SweepMode mode = SweepMode::raman;
    std::vector<double> uncertainties_hz;
    int n_sims = 20;
    std::uint64_t seed = 1;
    /// Transition energies per simulated measurement; 0 picks the mode default
    /// (4 for Raman, 3 for Rabi).
    int n_lines = 0;
    /// Prior half-width as a fraction of the true a(E) at the prior energy.
    double prior_fraction = 0.5;
    int n_grid = 400;
    ScanOptions scan;
    int threads = 1;

    int lines() const { return n_lines > 0 ? n_lines : (mode == SweepMode::raman ? 4 : 3); }

    void validate() const {
        truth.validate();
        trap.validate();
        if (uncertainties_hz.empty()) throw InputError("noise sweep: empty uncertainty list");
        for (double u : uncertainties_hz)
            if (!(u > 0.0)) throw InputError("noise sweep: uncertainties must be positive");
        if (n_sims < 1) throw InputError("noise sweep: n_sims must be >= 1");
        if (lines() < 3) throw InputError("noise sweep: at least three transition energies are needed");
    }
};

struct SimOutcome {
    bool ok = false;
    double error_pct = 0.0;
    double E0_khz = 0.0;
};

struct AccuracyPoint {
    double uncertainty_hz = 0.0;
    double mean_error_pct = 0.0;
    double stderr_pct = 0.0;
    std::vector<double> per_sim_errors;
    std::vector<SimOutcome> outcomes;  // every simulation, in seed order
    int n_failed = 0;
};

/// One noisy inversion. When several minima satisfy the prior, the one whose
/// fitted a(E) at the prior energy is closest to the prior centre is used.
inline SimOutcome simulate_once(const NoiseSweepConfig& cfg, const MeasuredSpectrum& exact, double truth_E0,
                                double truth_E3, double u_hz, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    MeasuredSpectrum m = exact;
    m.sigma_hz = u_hz;
    for (auto& d : m.delta_E_khz) d += (2.0 * uniform01(rng) - 1.0) * u_hz * 1e-3;
    SimOutcome out;
    try {
        m.validate(cfg.scan.n_terms);
        ScanOptions opt = cfg.scan;
        opt.threads = 1;
        const auto res = chi2_scan(m, opt);
        const double E_prior = 0.5 * (truth_E0 + truth_E3);
        const double a_prior = evaluate(cfg.truth, E_prior);
        const double half = cfg.prior_fraction * std::abs(a_prior);
        const auto d = disambiguate(res, LengthPrior{E_prior, a_prior - half, a_prior + half});
        const std::size_t pick = closest_to_prior(res, d, E_prior, a_prior);
        out.error_pct = error_metric(res.minima[pick].model, cfg.truth, truth_E0, truth_E3, cfg.n_grid);
        out.E0_khz = res.minima[pick].E0_khz;
        out.ok = true;
    } catch (const Error&) {
        out.ok = false;
    }
    return out;
}

inline std::vector<AccuracyPoint> run_noise_sweep(const NoiseSweepConfig& cfg) {
    cfg.validate();
    const int lines = cfg.lines();
    const auto levels = solve_trap_levels(cfg.truth, cfg.trap, std::max(lines + 1, 4));
    MeasuredSpectrum exact;
    exact.trap = cfg.trap;
    for (int i = 1; i <= lines; ++i) exact.delta_E_khz.push_back(levels.energy_khz(static_cast<std::size_t>(i)) - levels.energy_khz(0));
    const double E0 = levels.energy_khz(0);
    const double E3 = levels.energy_khz(3);

    const std::size_t n_u = cfg.uncertainties_hz.size();
    const std::size_t n_s = static_cast<std::size_t>(cfg.n_sims);
    std::vector<SimOutcome> outcomes(n_u * n_s);
    parallel_for(outcomes.size(), cfg.threads, [&](std::size_t idx) {
        const std::size_t iu = idx / n_s, is = idx % n_s;
        outcomes[idx] = simulate_once(cfg, exact, E0, E3, cfg.uncertainties_hz[iu], derive_seed(cfg.seed, iu, is));
    });

    std::vector<AccuracyPoint> out(n_u);
    for (std::size_t iu = 0; iu < n_u; ++iu) {
        auto& pt = out[iu];
        pt.uncertainty_hz = cfg.uncertainties_hz[iu];
        for (std::size_t is = 0; is < n_s; ++is) {
            const auto& o = outcomes[iu * n_s + is];
            pt.outcomes.push_back(o);
            if (o.ok)
                pt.per_sim_errors.push_back(o.error_pct);
            else
                ++pt.n_failed;
        }
        const double n = double(pt.per_sim_errors.size());
        if (n > 0) {
            double s = 0.0;
            for (double e : pt.per_sim_errors) s += e;
            pt.mean_error_pct = s / n;
            double v = 0.0;
            for (double e : pt.per_sim_errors) v += (e - pt.mean_error_pct) * (e - pt.mean_error_pct);
            pt.stderr_pct = n > 1 ? std::sqrt(v / (n - 1.0) / n) : 0.0;
        } else {
            pt.mean_error_pct = std::numeric_limits<double>::quiet_NaN();
        }
    }
    return out;
}

} // namespace trapspec
