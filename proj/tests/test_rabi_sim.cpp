#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include <Eigen/Dense>

#include "support.hpp"

using namespace trapspec;
using namespace trapspec::testing;

namespace {

constexpr double pi = constants::pi;

// <n | g_s> for the normalized Gaussian (s/pi)^{3/4} exp(-s r^2 / 2) in
// oscillator units, from the Laguerre generating function.
double squeezed_closed_form(int n, double s) {
    const double p = 0.5 * (1.0 + s);
    const double log_norm = 0.5 * (std::log(2.0) + std::lgamma(n + 1.0) - std::lgamma(n + 1.5));
    const double log_mag = 0.5 * std::log(4.0 * pi) + 0.75 * std::log(s / pi) + log_norm + std::log(0.5) +
                           std::lgamma(n + 1.5) - std::lgamma(n + 1.0) + n * std::log(std::abs(p - 1.0)) -
                           (n + 1.5) * std::log(p);
    const double sign = (p - 1.0 < 0.0 && n % 2 == 1) ? -1.0 : 1.0;
    return sign * std::exp(log_mag);
}

// Brute-force sum over n of u_n v_n, u_n = f_u psi_n(0) sqrt(2 pi / f'_u) / (E_u - E_n),
// out to n = 2e6 by the psi_n(0)^2 recurrence, plus the asymptotic tail.
double brute_force_overlap(double Eu, double fu, double fpu, double Ev, double fv, double fpv) {
    const double pref = fu * fv * 2.0 * pi / std::sqrt(fpu * fpv);
    const long N = 2000000;
    double psi2 = std::pow(pi, -1.5);
    double s = 0.0;
    for (long n = 0; n < N; ++n) {
        if (n > 0) psi2 *= (double(n) + 0.5) / double(n);
        const double En = 2.0 * double(n) + 1.5;
        s += pref * psi2 / ((Eu - En) * (Ev - En));
    }
    return s + pref / (pi * pi * std::sqrt(double(N)));
}

Channel constant_channel(int F, double a_over_l) {
    return {F, ResonanceModel::background(a_over_l * cs_trap_4khz().l_rel_a0()), 0.0};
}

struct DefaultRun {
    ChannelSet set = ChannelSet::cesium_f3();
    RabiInitialState init = RabiInitialState::squeezed();
    RabiSystem sys;
    RabiModel model;
    TimeSeries series;
    BeatSpectrum spectrum;
    std::vector<LinePrediction> guide;
    AssignmentReport report;
};

const DefaultRun& default_run() {
    static const DefaultRun r = [] {
        DefaultRun d;
        const RabiOptions opt;
        d.sys = build_system(d.set, cs_trap_4khz(), opt.n_levels, opt.n_basis);
        d.model = build_model(d.sys, d.set, d.init, opt.target);
        d.series = evolve(d.model, opt.T_total_s, opt.dt_s);
        SpectrumOptions so;
        so.nu_trap_khz = cs_trap_4khz().nu_khz();
        d.spectrum = beat_spectrum(d.series, so);
        d.guide = predict_lines(d.model);
        d.report = assign_lines(d.spectrum, d.guide, 1.0);
        return d;
    }();
    return r;
}

}  // namespace

TEST(PairAmplitude, DefaultStatesMatchClosedForms) {
    const AngularMomentumKet init{3, 3, 3, -3}, target{3, 0, 3, 0};
    const double c[] = {std::sqrt(14.0) / 7.0, 5.0 * std::sqrt(42.0) / 42.0, 3.0 * std::sqrt(77.0) / 77.0,
                        std::sqrt(462.0) / 462.0};
    const double d[] = {-1.0 / std::sqrt(7.0), 2.0 * std::sqrt(21.0) / 21.0, -3.0 * std::sqrt(154.0) / 77.0,
                        10.0 * std::sqrt(231.0) / 231.0};
    double dc = 0.0;
    for (int i = 0; i < 4; ++i) {
        EXPECT_NEAR(pair_channel_amplitude(init, 2 * i), c[i], 1e-14);
        EXPECT_NEAR(pair_channel_amplitude(target, 2 * i), d[i], 1e-14);
        dc += c[i] * d[i];
    }
    EXPECT_NEAR(dc, 0.0, 1e-15);
}

TEST(PairAmplitude, EvenChannelsAreComplete) {
    for (int m = 0; m <= 3; ++m) {
        double s = 0.0;
        for (int F = 0; F <= 6; F += 2) s += std::pow(pair_channel_amplitude({3, m, 3, -m}, F), 2);
        EXPECT_NEAR(s, 1.0, 1e-13) << m;
        // odd F is forbidden by exchange symmetry
        EXPECT_NEAR(pair_channel_amplitude({3, m, 3, -m}, 3), 0.0, 1e-15);
    }
    EXPECT_THROW(pair_channel_amplitude({3, 0, 2, 0}, 0), InputError);
}

TEST(InitialState, SqueezedOverlapMatchesClosedForm) {
    for (double s : {4.0, 2.0, 0.5})
        for (int n = 0; n < 60; ++n) EXPECT_NEAR(squeezed_overlap(n, s), squeezed_closed_form(n, s), 1e-8) << s << " " << n;
}

TEST(InitialState, SqueezedIsNormalized) {
    const auto st = RabiInitialState::squeezed(4.0, 200);
    EXPECT_NO_THROW(st.validate());
    double s = 0.0;
    for (double b : st.spatial_coeffs) s += b * b;
    EXPECT_NEAR(s, 1.0, 1e-12);
    // raw projections already hold almost all of the norm at N = 200
    double raw = 0.0;
    for (int n = 0; n < 200; ++n) raw += std::pow(squeezed_closed_form(n, 4.0), 2);
    EXPECT_NEAR(raw, 1.0, 1e-6);
    EXPECT_THROW(RabiInitialState::squeezed(0.0), InputError);
    RabiInitialState bad;
    bad.spatial_coeffs = {0.5, 0.5};
    EXPECT_THROW(bad.validate(), InputError);
}

TEST(Eigenvectors, OriginAmplitudeMatchesInterceptSlope) {
    // psi_n(0)^2 = 1 / (2 pi f'(E_n)) at the unperturbed energies
    for (int n = 0; n < 40; ++n) {
        const double p = special_fn::ho_origin_amplitude(n);
        EXPECT_NEAR(2.0 * pi * p * p * intercept_derivative(2.0 * n + 1.5), 1.0, 1e-11) << n;
    }
}

TEST(Eigenvectors, NormMatchesBruteForceSum) {
    for (double a : {0.3, -0.2, 0.8}) {
        const auto es = channel_eigensystem(constant_channel(0, a), cs_trap_4khz(), 3, 200);
        for (std::size_t j = 0; j < es.size(); ++j) {
            const double E = es.energy_hw(j);
            EXPECT_NEAR(brute_force_overlap(E, es.f[j], es.fp[j], E, es.f[j], es.fp[j]), 1.0, 1e-6) << a << " " << j;
        }
    }
}

TEST(Eigenvectors, CrossOverlapMatchesBruteForceSum) {
    const auto e1 = channel_eigensystem(constant_channel(0, 0.3), cs_trap_4khz(), 2, 200);
    const auto e2 = channel_eigensystem(constant_channel(2, -0.2), cs_trap_4khz(), 2, 200);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j) {
            const double closed = eigvec::overlap(e1.energy_hw(i), e1.f[i], e1.fp[i], e2.energy_hw(j), e2.f[j], e2.fp[j]);
            const double brute = brute_force_overlap(e1.energy_hw(i), e1.f[i], e1.fp[i], e2.energy_hw(j), e2.f[j], e2.fp[j]);
            EXPECT_NEAR(closed, brute, 1e-6) << i << " " << j;
        }
}

TEST(Eigenvectors, FirstOrderPerturbation) {
    const double a = 0.01;
    const auto es = channel_eigensystem(constant_channel(0, a), cs_trap_4khz(), 4, 200);
    for (std::size_t j = 0; j < es.size(); ++j) {
        const auto v = es.vector(j, 200);
        EXPECT_GT(v[j], 0.999) << j;
        const double pj = special_fn::ho_origin_amplitude(static_cast<int>(j));
        for (int n = 0; n < 12; ++n) {
            if (n == static_cast<int>(j)) continue;
            const double pn = special_fn::ho_origin_amplitude(n);
            const double first = 2.0 * pi * a * pn * pj / ((2.0 * double(j) + 1.5) - (2.0 * n + 1.5));
            EXPECT_NEAR(v[static_cast<std::size_t>(n)], first, 0.05 * std::abs(first)) << j << " " << n;
        }
    }
}

TEST(Eigenvectors, NonInteractingChannelIsIdentity) {
    const auto es = channel_eigensystem({0, ResonanceModel::background(0.0), 0.0}, cs_trap_4khz(), 6, 200);
    EXPECT_LT(es.orthogonality_defect, 1e-12);
    EXPECT_LT(es.truncation_tail, 1e-12);
    for (std::size_t j = 0; j < es.size(); ++j) {
        const auto v = es.vector(j, 30);
        for (std::size_t n = 0; n < v.size(); ++n) EXPECT_NEAR(v[n], n == j ? 1.0 : 0.0, 1e-12);
    }
    const auto other = channel_eigensystem({2, ResonanceModel::background(0.0), 0.0}, cs_trap_4khz(), 6, 200);
    EXPECT_LT((es.overlap_with(other) - Eigen::MatrixXd::Identity(6, 6)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Eigenvectors, OrthonormalWithinEachChannel) {
    for (const auto& ch : ChannelSet::cesium_f3().channels) {
        const auto es = channel_eigensystem(ch, cs_trap_4khz(), 20, 200);
        const auto J = static_cast<Eigen::Index>(es.size());
        Eigen::MatrixXd S(J, J);
        for (Eigen::Index i = 0; i < J; ++i)
            for (Eigen::Index k = 0; k < J; ++k) {
                const auto a = static_cast<std::size_t>(i), b = static_cast<std::size_t>(k);
                S(i, k) = i == k ? 1.0 : eigvec::overlap(es.energy_hw(a), es.f[a], es.fp[a], es.energy_hw(b), es.f[b], es.fp[b]);
            }
        const Eigen::MatrixXd G = es.lowdin.transpose() * S * es.lowdin;
        EXPECT_LT((G - Eigen::MatrixXd::Identity(J, J)).cwiseAbs().maxCoeff(), 1e-10) << "F=" << ch.F;
        EXPECT_LT((es.overlap_with(es) - Eigen::MatrixXd::Identity(J, J)).cwiseAbs().maxCoeff(), 1e-10);
    }
}

TEST(Eigenvectors, TruncationTailIsReported) {
    const auto set = ChannelSet::cesium_f3();
    const auto sys = build_system(set, cs_trap_4khz(), 20, 200);
    EXPECT_FALSE(sys.warnings().empty());
    EXPECT_THROW(channel_eigensystem(set.channels[0], cs_trap_4khz(), 60, 200), InputError);
    EXPECT_THROW(channel_eigensystem(set.channels[0], cs_trap_4khz(), 0, 200), InputError);
}

TEST(Population, DefaultInitialValueIsNearCgOracle) {
    // identical spatial factors would give |sum_F d_F c_F|^2 = 0 exactly;
    // channel-dependent eigenvectors leave a small remainder
    EXPECT_NEAR(default_run().series.P.front(), 0.0, 5e-3);
}

TEST(Population, IdenticalSpatialFactorsGiveExactCgOracle) {
    ChannelSet set = ChannelSet::cesium_f3();
    for (auto& ch : set.channels) ch.model = ResonanceModel::background(0.0);
    RabiInitialState init;
    init.spatial_coeffs = {1.0};
    const auto sys = build_system(set, cs_trap_4khz(), 5, 40);
    const auto model = build_model(sys, set, init, {3, 0, 3, 0});
    EXPECT_NEAR(evolve(model, 1e-3, 1e-5).P.front(), 0.0, 1e-14);
    // init projected on itself
    const auto same = build_model(sys, set, init, init.internal);
    EXPECT_NEAR(evolve(same, 1e-3, 1e-5).P.front(), 1.0, 1e-13);
}

TEST(Population, ConservationOverCompleteTargetSet) {
    const auto& d = default_run();
    std::vector<double> total(4000, 0.0);
    for (int m = 0; m <= 3; ++m) {
        const auto model = build_model(d.sys, d.set, d.init, {3, m, 3, -m});
        const auto ts = evolve(model, 4000 * 2.5e-6, 2.5e-6);
        ASSERT_EQ(ts.P.size(), total.size());
        for (std::size_t i = 0; i < total.size(); ++i) total[i] += ts.P[i];
    }
    for (std::size_t i = 0; i < total.size(); ++i) ASSERT_NEAR(total[i], 1.0, 1e-6) << i;
}

TEST(Population, BoundedByZeroAndOne) {
    for (double p : default_run().series.P) {
        ASSERT_GE(p, 0.0);
        ASSERT_LE(p, 1.0 + 1e-9);
    }
}

TEST(Population, TimeReversalSymmetry) {
    const auto& d = default_run();
    const auto back = evolve(d.model, 0.05, 2.5e-6, true);
    for (std::size_t i = 0; i < back.P.size(); ++i) ASSERT_NEAR(back.P[i], d.series.P[i], 1e-12) << i;
}

TEST(Population, StationaryStateInOneChannel) {
    ChannelSet set;
    set.f_atom = 3;
    set.channels = {ChannelSet::cesium_f3().channels[0]};
    const auto sys = build_system(set, cs_trap_4khz(), 10, 200);
    RabiInitialState init;
    init.spatial_coeffs = sys.channels[0].vector(2, 200);
    init.normalize();
    const auto model = build_model(sys, set, init, {3, 0, 3, 0});
    const auto ts = evolve(model, 0.01, 2e-6);
    const auto [lo, hi] = std::minmax_element(ts.P.begin(), ts.P.end());
    EXPECT_LT(*hi - *lo, 1e-12);
    EXPECT_GT(*lo, 0.0);
}

TEST(Population, TwoChannelBeatIsSinusoidal) {
    // f = 1 pair, |1,1;1,-1> -> |1,0;1,0>: d_0 c_0 = -sqrt(2)/3, d_2 c_2 = +sqrt(2)/3,
    // so P(t) = 4/9 (1 - cos 2 pi Delta t) up to O((a/l)^2) in the spatial overlaps.
    ChannelSet set;
    set.f_atom = 1;
    set.channels = {constant_channel(0, 0.02), constant_channel(2, -0.02)};
    RabiInitialState init;
    init.internal = {1, 1, 1, -1};
    init.spatial_coeffs = {1.0};
    const auto sys = build_system(set, cs_trap_4khz(), 1, 8);
    const auto model = build_model(sys, set, init, {1, 0, 1, 0});

    const double E0 = find_eigenenergies(LengthCurve::constant(0.02), cs_trap_4khz(), 1, 4.0).energy_khz(0);
    const double E2 = find_eigenenergies(LengthCurve::constant(-0.02), cs_trap_4khz(), 1, 4.0).energy_khz(0);
    const double delta_hz = (E0 - E2) * 1e3;

    const double dt = 1e-4;
    const auto ts = evolve(model, 0.05, dt);
    const auto M = static_cast<Eigen::Index>(ts.P.size());
    Eigen::MatrixXd X(M, 3);
    Eigen::VectorXd y(M);
    for (Eigen::Index m = 0; m < M; ++m) {
        const double t = ts.t(static_cast<std::size_t>(m));
        X(m, 0) = 1.0;
        X(m, 1) = std::cos(2.0 * pi * delta_hz * t);
        X(m, 2) = std::sin(2.0 * pi * delta_hz * t);
        y(m) = ts.P[static_cast<std::size_t>(m)];
    }
    const Eigen::VectorXd c = X.colPivHouseholderQr().solve(y);
    EXPECT_LT((X * c - y).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(c(0), 4.0 / 9.0, 2e-3);
    EXPECT_NEAR(c(1), -4.0 / 9.0, 2e-3);
    EXPECT_NEAR(c(2), 0.0, 1e-12);
}

TEST(Population, Errors) {
    const auto& d = default_run();
    EXPECT_THROW(evolve(d.model, 0.01, 1e-4), SolverError);
    EXPECT_THROW(evolve(d.model, 0.0, 1e-6), InputError);
    EXPECT_THROW(build_model(d.sys, d.set, d.init, {3, 1, 3, 0}), InputError);
    EXPECT_THROW(build_model(d.sys, d.set, d.init, {2, 0, 2, 0}), InputError);
}

TEST(BeatSpectrum, PureSinusoid) {
    TimeSeries ts;
    ts.dt_s = 2.5e-6;
    for (std::size_t m = 0; m < 200000; ++m) ts.P.push_back(0.5 + 0.3 * std::cos(2.0 * pi * 8000.0 * ts.t(m)));
    const auto sp = beat_spectrum(ts);
    EXPECT_NEAR(sp.bin_khz, 5e-4, 1e-15);
    ASSERT_EQ(sp.peaks.size(), 2u);
    EXPECT_EQ(sp.peaks[0].freq_khz, 0.0);
    EXPECT_NEAR(sp.peaks[1].freq_khz, 8.0, 2e-3);
    ASSERT_EQ(sp.groups.size(), 2u);
    EXPECT_EQ(sp.groups[1].delta_n, 1);
}

TEST(BeatSpectrum, ConstantSeriesHasOnlyZeroFrequency) {
    TimeSeries ts;
    ts.dt_s = 1e-5;
    ts.P.assign(4096, 0.25);
    const auto sp = beat_spectrum(ts);
    ASSERT_EQ(sp.peaks.size(), 1u);
    EXPECT_EQ(sp.peaks[0].freq_khz, 0.0);
    TimeSeries short_ts{1e-5, std::vector<double>(63, 0.1)};
    EXPECT_THROW(beat_spectrum(short_ts), InputError);
}

TEST(BeatSpectrum, DefaultScenarioGroups) {
    const auto& sp = default_run().spectrum;
    for (int dn = 0; dn <= 3; ++dn) {
        auto it = std::find_if(sp.groups.begin(), sp.groups.end(), [&](const PeakGroup& g) { return g.delta_n == dn; });
        ASSERT_NE(it, sp.groups.end()) << dn;
        EXPECT_NEAR(it->center_khz, 8.0 * dn, 1.0) << dn;
    }
    for (const auto& g : sp.groups)
        for (std::size_t i : g.peaks) EXPECT_LE(std::abs(sp.peaks[i].freq_khz - 8.0 * g.delta_n), 4.0);
    for (const auto& pk : sp.peaks) EXPECT_LE(pk.freq_khz, 0.5 / (default_run().series.dt_s * 1e3));
}

TEST(LineAssignment, SelfAssignment) {
    ChannelSet set = ChannelSet::cesium_f3();
    set.channels.resize(2);  // F = 0, 2
    const RabiOptions opt;
    const auto init = RabiInitialState::squeezed();
    const auto model = build_model(build_system(set, cs_trap_4khz(), opt.n_levels, opt.n_basis), set, init, opt.target);
    auto sp = beat_spectrum(evolve(model, opt.T_total_s, opt.dt_s));
    const auto rep = assign_lines(sp, predict_lines(model), 1.0);
    EXPECT_EQ(rep.unassigned, 0);
    EXPECT_EQ(rep.ambiguous, 0);
    EXPECT_EQ(rep.assigned + 1, int(sp.peaks.size()));  // all but the zero-frequency bin
    for (const auto& pk : sp.peaks)
        if (pk.assignment) EXPECT_LT(std::abs(pk.freq_khz - pk.assignment->predicted_khz), 2e-3) << pk.freq_khz;
}

TEST(LineAssignment, DefaultScenarioReportsUnresolvableCoincidence) {
    // Two beat lines of the four-channel example lie 0.14 Hz apart, far inside
    // one resolution bin; that peak must be flagged, every other one is clean.
    const auto& d = default_run();
    EXPECT_EQ(d.report.unassigned, 0);
    EXPECT_EQ(d.report.ambiguous, 1);
    EXPECT_GT(d.report.assigned, 100);
    for (const auto& pk : d.spectrum.peaks) {
        if (!pk.assignment) continue;
        EXPECT_LT(std::abs(pk.freq_khz - pk.assignment->predicted_khz), 2e-3) << pk.freq_khz;
        if (!pk.assignment->ambiguous) continue;
        int close = 0;
        for (const auto& g : d.guide) close += std::abs(g.freq_khz - pk.assignment->predicted_khz) < 2e-4 ? 1 : 0;
        EXPECT_EQ(close, 2);
    }
}

TEST(LineAssignment, ScaledGuideKeepsWellSeparatedLines) {
    const auto& d = default_run();
    ChannelSet scaled = d.set;
    for (auto& ch : scaled.channels) ch.model = ch.model.scaled(1.2);
    const auto sys = build_system(scaled, cs_trap_4khz(), 20, 200);
    const auto guide = predict_lines(build_model(sys, scaled, d.init, {3, 0, 3, 0}));

    auto label = [](const LinePrediction& p) { return std::array<int, 4>{p.F, p.j, p.F2, p.j2}; };
    auto find = [&](const std::vector<LinePrediction>& v, std::array<int, 4> l) -> const LinePrediction* {
        for (const auto& p : v)
            if (label(p) == l) return &p;
        return nullptr;
    };
    // A line is well separated when it stays closer to its own exact position
    // than any other line of either guide comes.
    BeatSpectrum sp = d.spectrum;
    assign_lines(sp, guide, 1e4);
    int checked = 0;
    for (std::size_t i = 0; i < sp.peaks.size(); ++i) {
        const auto& exact = d.spectrum.peaks[i].assignment;
        if (!exact) continue;
        const std::array<int, 4> l{exact->F, exact->j, exact->F2, exact->j2};
        const auto* moved = find(guide, l);
        if (!moved) continue;
        const double shift = std::abs(moved->freq_khz - exact->predicted_khz);
        bool separated = true;
        for (const auto* g : {&d.guide, &guide})
            for (const auto& p : *g)
                if (label(p) != l && std::abs(p.freq_khz - exact->predicted_khz) <= 2.0 * shift + 0.05) separated = false;
        if (!separated) continue;
        ++checked;
        ASSERT_TRUE(sp.peaks[i].assignment.has_value());
        const auto& a = *sp.peaks[i].assignment;
        EXPECT_EQ((std::array<int, 4>{a.F, a.j, a.F2, a.j2}), l) << sp.peaks[i].freq_khz;
    }
    EXPECT_GT(checked, 0);
}

TEST(LineAssignment, EmptyPeakList) {
    BeatSpectrum sp;
    const auto rep = assign_lines(sp, default_run().guide, 1.0);
    EXPECT_EQ(rep.assigned + rep.unassigned + rep.ambiguous, 0);
}

TEST(LineAssignment, LowestTransitionsMatchChannelLevels) {
    const auto& d = default_run();
    for (const auto& ch : d.sys.channels) {
        const auto lines = lowest_transitions(d.spectrum, ch.F, 3);
        for (std::size_t i = 0; i < lines.size(); ++i)
            EXPECT_NEAR(lines[i], ch.energy_khz(i + 1) - ch.energy_khz(0), 2e-3) << "F=" << ch.F << " i=" << i;
        if (ch.F == 0) EXPECT_EQ(lines.size(), 3u);
    }
}

TEST(Jitter, ZeroJitterEqualsSingleShot) {
    const auto set = ChannelSet::cesium_f3();
    const auto init = RabiInitialState::squeezed();
    RabiOptions opt;
    opt.T_total_s = 0.02;
    const auto single = simulate_population(set, init, cs_trap_4khz(), opt);
    const auto one = jitter_ensemble(set, init, cs_trap_4khz(), opt, 0.0, 1, 7);
    EXPECT_EQ(one.series.P, single.P);
    const auto three = jitter_ensemble(set, init, cs_trap_4khz(), opt, 0.0, 3, 7);
    for (std::size_t i = 0; i < single.P.size(); ++i) ASSERT_NEAR(three.series.P[i], single.P[i], 1e-15);
}

TEST(Jitter, DeterministicUnderSeed) {
    const auto set = ChannelSet::cesium_f3();
    const auto init = RabiInitialState::squeezed();
    RabiOptions opt;
    opt.T_total_s = 0.01;
    const auto a = jitter_ensemble(set, init, cs_trap_4khz(), opt, 1e-3, 3, 42, 1);
    const auto b = jitter_ensemble(set, init, cs_trap_4khz(), opt, 1e-3, 3, 42, 3);
    const auto c = jitter_ensemble(set, init, cs_trap_4khz(), opt, 1e-3, 3, 43, 1);
    EXPECT_EQ(a.shot_nu_hz, b.shot_nu_hz);
    EXPECT_EQ(a.series.P, b.series.P);
    EXPECT_NE(a.shot_nu_hz, c.shot_nu_hz);
    for (double nu : a.shot_nu_hz) EXPECT_LE(std::abs(nu / 4000.0 - 1.0), 1e-3);
    EXPECT_THROW(jitter_ensemble(set, init, cs_trap_4khz(), opt, -1.0, 1, 1), InputError);
    EXPECT_THROW(jitter_ensemble(set, init, cs_trap_4khz(), opt, 0.0, 0, 1), InputError);
}

TEST(Readability, ResolutionCriterion) {
    BeatSpectrum sp;
    sp.T_total_s = 0.5;
    sp.bin_khz = 5e-4;
    for (int k = 0; k < 2000; ++k) {
        sp.freqs_khz.push_back(sp.bin_khz * k);
        sp.amplitude.push_back(1.0);
    }
    sp.amplitude[1000] = 10.0;  // 0.5 kHz
    const auto r = resolve_lines(sp, {0.5, 0.7});
    EXPECT_TRUE(r[0].resolved);
    EXPECT_FALSE(r[1].resolved);
    EXPECT_NEAR(r[1].peak / r[1].background, 1.0, 1e-12);
}
