#pragma once

// Shared fixtures for the unit tests and the acceptance binary.

#include <cmath>
#include <random>

#include "trapspec.hpp"

namespace trapspec::testing {

inline const TrapConfig& cs_trap_4khz() {
    static const TrapConfig t{4000.0, constants::atom_presets[0].mass_kg};
    return t;
}

inline ResonanceModel raman_model() { return ResonanceModel::single(36.0, -2.049e5, 84.72); }
inline ResonanceModel rabi_f0_model() { return ChannelSet::cesium_f3().channels.front().model; }

struct RandomModel {
    ResonanceModel model;
    EigenSpectrum levels;  // lowest four
};

/// Random one-term model with |a(E_i)|/l < 0.9 at its lowest four levels and
/// the resonance at least half a trap quantum outside [E_0, E_3].
inline RandomModel random_one_term_model(std::mt19937_64& rng, const TrapConfig& trap) {
    const double l = trap.l_rel_a0();
    const double nu = trap.nu_khz();
    auto u = [&](double lo, double hi) { return lo + (hi - lo) * uniform01(rng); };
    for (;;) {
        const double a_b = u(-0.6, 0.6) * l;
        const double E_r = u(-150.0, 300.0);
        const double a_res = u(-0.6, 0.6) * l;  // resonant part at 20 kHz
        const ResonanceModel m = ResonanceModel::single(a_b, a_res * (20.0 - E_r), E_r);
        try {
            m.validate();
            const auto spec = solve_trap_levels(m, trap, 4);
            bool ok = E_r < spec.energy_khz(0) - 0.5 * nu || E_r > spec.energy_khz(3) + 0.5 * nu;
            for (std::size_t i = 0; i < 4 && ok; ++i) ok = std::abs(evaluate(m, spec.energy_khz(i))) / l < 0.9;
            if (ok) return {m, spec};
        } catch (const Error&) {
        }
    }
}

/// Prior used for random round trips: a(E) at the middle of [E_0, E_3]
/// within +-50% of the generator's value.
inline LengthPrior truth_prior(const ResonanceModel& truth, const EigenSpectrum& levels, double* center = nullptr) {
    const double E = 0.5 * (levels.energy_khz(0) + levels.energy_khz(3));
    const double a = evaluate(truth, E);
    if (center) *center = a;
    return {E, a - 0.5 * std::abs(a), a + 0.5 * std::abs(a)};
}

}  // namespace trapspec::testing
