#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "support.hpp"

using namespace trapspec;
using namespace trapspec::testing;

namespace {

const FitResult& raman_fit() {
    static const FitResult r = chi2_scan(MeasuredSpectrum::synthetic(raman_model(), cs_trap_4khz(), 4));
    return r;
}

const FitResult& rabi_f0_fit() {
    static const FitResult r = chi2_scan(MeasuredSpectrum::synthetic(rabi_f0_model(), cs_trap_4khz(), 3));
    return r;
}

bool has_minimum_near(const FitResult& r, double E, double tol) {
    for (const auto& m : r.minima)
        if (std::abs(m.E0_khz - E) <= tol) return true;
    return false;
}

}  // namespace

TEST(Measurement, Validation) {
    MeasuredSpectrum m;
    m.trap = cs_trap_4khz();
    m.delta_E_khz = {8.0, 16.0};
    EXPECT_THROW(m.validate(1), InputError);  // 2 lines, 3 unknowns plus E0
    m.delta_E_khz = {8.0, 16.0, 24.0};
    EXPECT_NO_THROW(m.validate(1));
    EXPECT_THROW(m.validate(2), InputError);
    m.delta_E_khz = {8.0, 8.0, 24.0};
    EXPECT_THROW(m.validate(1), InputError);
    m.delta_E_khz = {8.0, 16.0, 24.0};
    m.sigma_hz = -1.0;
    EXPECT_THROW(m.validate(1), InputError);
}

TEST(Measurement, SyntheticMatchesForwardSolve) {
    const auto m = MeasuredSpectrum::synthetic(raman_model(), cs_trap_4khz(), 4);
    const auto spec = solve_trap_levels(raman_model(), cs_trap_4khz(), 5);
    ASSERT_EQ(m.delta_E_khz.size(), 4u);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(m.delta_E_khz[i], spec.energy_khz(i + 1) - spec.energy_khz(0));
}

TEST(Chi2Scan, RamanDataHasTwoMinima) {
    const auto& r = raman_fit();
    ASSERT_EQ(r.minima.size(), 2u);
    EXPECT_NEAR(r.minima[0].E0_khz, 4.580, 0.05);
    EXPECT_NEAR(r.minima[1].E0_khz, 8.549, 0.05);
}

TEST(Chi2Scan, ExactSolutionAtTrueReference) {
    const auto meas = MeasuredSpectrum::synthetic(raman_model(), cs_trap_4khz(), 4);
    const double E0 = solve_trap_levels(raman_model(), cs_trap_4khz(), 1).energy_khz(0);
    const auto p = chi2_at(meas, E0, ScanOptions{});
    ASSERT_TRUE(p.valid);
    const double l = cs_trap_4khz().l_rel_a0();
    EXPECT_LE(p.chi2, 1e-12 * l * l);
    ASSERT_EQ(p.model.terms.size(), 1u);
    EXPECT_NEAR(p.model.terms[0].E_r_khz, 84.72, 1e-4);
}

TEST(Chi2Scan, NonNegativeEverywhere) {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 5; ++trial) {
        MeasuredSpectrum m;
        m.trap = cs_trap_4khz();
        double acc = 0.0;
        for (int i = 0; i < 4; ++i) {
            acc += 6.0 + 4.0 * uniform01(rng);
            m.delta_E_khz.push_back(acc);
        }
        ScanOptions opt;
        opt.grid_step_khz = 0.05;
        const auto r = chi2_scan(m, opt);
        for (const auto& p : r.scan)
            if (p.valid) EXPECT_GE(p.chi2, 0.0);
        for (const auto& mn : r.minima) EXPECT_GE(mn.chi2, 0.0);
    }
}

TEST(Chi2Scan, DeterministicAcrossThreadCounts) {
    const auto meas = MeasuredSpectrum::synthetic(raman_model(), cs_trap_4khz(), 4);
    ScanOptions a, b;
    a.grid_step_khz = b.grid_step_khz = 0.05;
    a.threads = 1;
    b.threads = 3;
    const auto ra = chi2_scan(meas, a);
    const auto rb = chi2_scan(meas, b);
    ASSERT_EQ(ra.scan.size(), rb.scan.size());
    for (std::size_t i = 0; i < ra.scan.size(); ++i) EXPECT_EQ(ra.scan[i].chi2, rb.scan[i].chi2);
    ASSERT_EQ(ra.minima.size(), rb.minima.size());
    for (std::size_t i = 0; i < ra.minima.size(); ++i) EXPECT_EQ(ra.minima[i].E0_khz, rb.minima[i].E0_khz);
}

TEST(Chi2Scan, WindowErrors) {
    const auto meas = MeasuredSpectrum::synthetic(raman_model(), cs_trap_4khz(), 4);
    ScanOptions opt;
    opt.E0_lo_khz = 5.0;
    opt.E0_hi_khz = 4.0;
    EXPECT_THROW(chi2_scan(meas, opt), InputError);
    ScanOptions step;
    step.grid_step_khz = 0.0;
    EXPECT_THROW(chi2_scan(meas, step), InputError);
}

TEST(Chi2Scan, NoMinimumIsReportedNotThrown) {
    // Window away from both admissible reference energies.
    const auto meas = MeasuredSpectrum::synthetic(raman_model(), cs_trap_4khz(), 4);
    ScanOptions opt;
    opt.E0_lo_khz = 5.5;
    opt.E0_hi_khz = 7.5;
    const auto r = chi2_scan(meas, opt);
    EXPECT_TRUE(r.minima.empty());
    EXPECT_FALSE(r.warnings.empty());
    EXPECT_THROW(disambiguate(r, LengthPrior{8.5, 0, 1}), NoFitError);
}

TEST(Chi2Scan, RabiF0DataMinima) {
    const auto& r = rabi_f0_fit();
    EXPECT_TRUE(has_minimum_near(r, 4.038, 0.05));
    EXPECT_TRUE(has_minimum_near(r, 8.022, 0.05));
}

TEST(Disambiguation, RamanPriorSelectsUpperBranch) {
    const auto d = disambiguate(raman_fit(), LengthPrior{8.5, 1000.0, 4000.0});
    ASSERT_TRUE(d.selected.has_value());
    EXPECT_NEAR(raman_fit().minima[*d.selected].E0_khz, 8.549, 0.05);
}

TEST(Disambiguation, PriorExcludingEverything) {
    EXPECT_THROW(disambiguate(raman_fit(), LengthPrior{8.5, 1e6, 2e6}), NoFitError);
}

TEST(Disambiguation, TieIsReportedNotResolved) {
    const auto d = disambiguate(raman_fit(), LengthPrior{8.5, -1e6, 1e6});
    EXPECT_TRUE(d.tied());
    EXPECT_FALSE(d.selected.has_value());
    // explicit tie-break
    const double a_true = evaluate(raman_model(), 8.5);
    EXPECT_NEAR(raman_fit().minima[closest_to_prior(raman_fit(), d, 8.5, a_true)].E0_khz, 8.549, 0.05);
}

TEST(Disambiguation, SingleMinimumWithCompatiblePrior) {
    const auto meas = MeasuredSpectrum::synthetic(raman_model(), cs_trap_4khz(), 4);
    ScanOptions opt;
    opt.E0_lo_khz = 7.0;
    opt.E0_hi_khz = 9.5;
    const auto r = chi2_scan(meas, opt);
    ASSERT_EQ(r.minima.size(), 1u);
    const auto d = disambiguate(r, LengthPrior{8.5, 0.0, 1e5});
    ASSERT_TRUE(d.selected.has_value());
    EXPECT_EQ(*d.selected, 0u);
}

TEST(Disambiguation, RabiF0PriorSelectsLowerBranch) {
    const auto& r = rabi_f0_fit();
    const auto levels = solve_trap_levels(rabi_f0_model(), cs_trap_4khz(), 4);
    double center = 0.0;
    const auto prior = truth_prior(rabi_f0_model(), levels, &center);
    const auto d = disambiguate(r, prior);
    const std::size_t pick = d.selected ? *d.selected : closest_to_prior(r, d, prior.E_khz, center);
    EXPECT_NEAR(r.minima[pick].E0_khz, 4.038, 0.05);
    const double lo = levels.energy_khz(0), hi = levels.energy_khz(3);
    EXPECT_LT(integrated_relative_difference(r.minima[pick].model, rabi_f0_model(), lo, hi), 0.01);
}

TEST(Disambiguation, TwoTrapFrequencies) {
    const TrapConfig t5{5000.0, constants::atom_presets[0].mass_kg};
    const auto r4 = raman_fit();
    const auto r5 = chi2_scan(MeasuredSpectrum::synthetic(raman_model(), t5, 4));
    const auto d = disambiguate(r4, r5, 0.01);
    ASSERT_FALSE(d.candidates.empty());
    for (const auto& [i, j] : d.candidates) EXPECT_NEAR(r4.minima[i].E0_khz, 8.549, 0.05);
}

TEST(LengthCurve, RamanFitExtrapolatesToZeroEnergy) {
    const auto& r = raman_fit();
    const auto d = disambiguate(r, LengthPrior{8.5, 1000.0, 4000.0});
    const auto pts = extract_length_curve(r, *d.selected, 0.0, 0.0, 1);
    ASSERT_EQ(pts.size(), 1u);
    EXPECT_EQ(pts[0].E_khz, 0.0);
    EXPECT_NEAR(pts[0].a_a0, 2455.0, 1.0);
}

TEST(LengthCurve, MatchesGeneratorOverFittedSpan) {
    const auto& r = raman_fit();
    const auto d = disambiguate(r, LengthPrior{8.5, 1000.0, 4000.0});
    const auto& m = r.minima[*d.selected];
    const auto pts = extract_length_curve(r, *d.selected, m.E0_khz, m.E0_khz + r.measurement.delta_E_khz[2], 101);
    ASSERT_EQ(pts.size(), 101u);
    for (const auto& p : pts) EXPECT_LT(std::abs(p.a_a0 / evaluate(raman_model(), p.E_khz) - 1.0), 0.01);
}

TEST(LengthCurve, Errors) {
    const auto& r = raman_fit();
    EXPECT_THROW(extract_length_curve(r, 99, 0.0, 1.0, 10), InputError);
    EXPECT_THROW(extract_length_curve(r, 0, 1.0, 0.0, 10), InputError);
    EXPECT_THROW(extract_length_curve(r, 0, 0.0, 1.0, 0), InputError);
    const auto& m = r.minima[1].model;
    EXPECT_THROW(extract_length_curve(r, 1, 0.0, m.terms[0].E_r_khz + 1.0, 10), PoleError);
}

TEST(RoundTrip, RandomOneTermModelsFourLevels) {
    std::mt19937_64 rng(20240601);
    int failures = 0;
    for (int trial = 0; trial < 12; ++trial) {
        const auto rm = random_one_term_model(rng, cs_trap_4khz());
        const auto meas = MeasuredSpectrum::synthetic(rm.model, cs_trap_4khz(), 3);
        double center = 0.0;
        const auto prior = truth_prior(rm.model, rm.levels, &center);
        try {
            const auto r = chi2_scan(meas);
            const auto d = disambiguate(r, prior);
            const std::size_t pick = d.selected ? *d.selected : closest_to_prior(r, d, prior.E_khz, center);
            const double err = integrated_relative_difference(r.minima[pick].model, rm.model, rm.levels.energy_khz(0),
                                                              rm.levels.energy_khz(3));
            EXPECT_LT(err, 0.005) << "trial " << trial;
        } catch (const Error& e) {
            ++failures;
            ADD_FAILURE() << "trial " << trial << ": " << e.what();
        }
    }
    EXPECT_EQ(failures, 0);
}
