#pragma once

// Coupled internal/trap-motion dynamics of an atom pair whose molecular
// channels |f f F M> each carry their own effective scattering length.
//
// Each channel's eigenvectors are written in the unperturbed s-wave basis with
// coefficients proportional to psi_n(0) / (E_n - E). Their norms and mutual
// overlaps have closed forms in terms of the intercept function f(E), so no
// basis truncation enters anything but the projection of the initial state.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <fftw3.h>

#include "trapspec/constants.hpp"
#include "trapspec/error.hpp"
#include "trapspec/parallel.hpp"
#include "trapspec/scattering_model.hpp"
#include "trapspec/special_fn.hpp"
#include "trapspec/trap_model.hpp"

namespace trapspec {

struct Channel {
    int F = 0;
    ResonanceModel model;
    /// Internal energy of the channel (kHz), added to every trap level.
    double offset_khz = 0.0;
};

struct ChannelSet {
    int f_atom = 3;
    std::vector<Channel> channels;

    void validate() const {
        if (f_atom < 0) throw InputError("channel set: f_atom must be non-negative");
        if (channels.empty()) throw InputError("channel set: no channels");
        std::vector<int> seen;
        for (const auto& c : channels) {
            if (c.F < 0 || c.F > 2 * f_atom || c.F % 2 != 0)
                throw InputError("channel set: F must be even and within [0, 2 f_atom], got " + std::to_string(c.F));
            if (std::find(seen.begin(), seen.end(), c.F) != seen.end())
                throw InputError("channel set: duplicate F = " + std::to_string(c.F));
            seen.push_back(c.F);
            c.model.validate();
            if (!std::isfinite(c.offset_khz)) throw InputError("channel set: non-finite offset");
        }
    }

    const Channel* find(int F) const {
        for (const auto& c : channels)
            if (c.F == F) return &c;
        return nullptr;
    }

    /// Cs f = 3 pair in the M = 0 manifold; all lengths negative.
    static ChannelSet cesium_f3() {
        ChannelSet s;
        s.f_atom = 3;
        s.channels = {
            {0, ResonanceModel::single(-2021.5, 9.504e4, 250.0), 0.0},
            {2, ResonanceModel::single(-1420.0, 6.0e4, 300.0), 0.0},
            {4, ResonanceModel::single(-760.0, 3.0e4, 300.0), 0.0},
            {6, ResonanceModel::background(-310.0), 0.0},
        };
        return s;
    }
};

/// Amplitude <F M | pair>, with the pair Bose-symmetrized when m1 != m2.
inline double pair_channel_amplitude(const AngularMomentumKet& k, int F) {
    if (!k.valid()) throw InputError("invalid angular momentum ket");
    if (k.f1 != k.f2) throw InputError("pair states must have equal single-atom f");
    const int M = k.total_projection();
    const double direct = special_fn::clebsch_gordan(k.f1, k.m1, k.f2, k.m2, F, M);
    if (k.m1 == k.m2) return direct;
    const double swapped = special_fn::clebsch_gordan(k.f2, k.m2, k.f1, k.m1, F, M);
    return (direct + swapped) / std::sqrt(2.0);
}

// --- initial spatial state -----------------------------------------------------

/// <n | g_s>: overlap of unperturbed s-wave state n (length 1) with the
/// normalized ground Gaussian of a trap `squeeze` times stiffer, by adaptive
/// radial quadrature.
inline double squeezed_overlap(int n, double squeeze, double tol = 1e-8) {
    const double norm = std::pow(squeeze / constants::pi, 0.75);
    const double r_max = std::sqrt(100.0 / (1.0 + squeeze)) + std::sqrt(4.0 * n + 3.0) * (squeeze < 1.0 ? 1.5 : 0.0);
    auto integrand = [&](double r) {
        return 4.0 * constants::pi * r * r * special_fn::ho_radial(n, r) * norm * std::exp(-0.5 * squeeze * r * r);
    };
    double err = 0.0;
    return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(integrand, 0.0, r_max, 15, tol, &err);
}

struct RabiInitialState {
    AngularMomentumKet internal{3, 3, 3, -3};
    /// b_n over the unperturbed s-wave states n = 0..N_basis-1, normalized.
    std::vector<double> spatial_coeffs;
    double squeeze = 0.0;  // 0 when the coefficients were supplied directly

    static RabiInitialState squeezed(double squeeze = 4.0, int n_basis = 200,
                                     AngularMomentumKet internal = {3, 3, 3, -3}) {
        if (!(squeeze > 0.0)) throw InputError("initial state: squeeze factor must be positive");
        if (n_basis < 1) throw InputError("initial state: n_basis must be >= 1");
        RabiInitialState s;
        s.internal = internal;
        s.squeeze = squeeze;
        s.spatial_coeffs.resize(static_cast<std::size_t>(n_basis));
        for (int n = 0; n < n_basis; ++n) s.spatial_coeffs[static_cast<std::size_t>(n)] = squeezed_overlap(n, squeeze);
        s.normalize();
        return s;
    }

    void normalize() {
        double sum = 0.0;
        for (double b : spatial_coeffs) sum += b * b;
        if (!(sum > 0.0)) throw InputError("initial state: spatial coefficients vanish");
        const double inv = 1.0 / std::sqrt(sum);
        for (double& b : spatial_coeffs) b *= inv;
    }

    void validate() const {
        if (!internal.valid()) throw InputError("initial state: invalid internal ket");
        if (spatial_coeffs.empty()) throw InputError("initial state: no spatial coefficients");
        double sum = 0.0;
        for (double b : spatial_coeffs) {
            if (!std::isfinite(b)) throw InputError("initial state: non-finite coefficient");
            sum += b * b;
        }
        if (std::abs(sum - 1.0) > 1e-10) throw InputError("initial state: spatial coefficients not normalized");
    }
};

// --- eigenvectors --------------------------------------------------------------

namespace eigvec {

/// Component of the normalized eigenvector at energy E (hbar*omega, f = f(E),
/// fp = f'(E)) along unperturbed state n. Sign chosen so that the vector
/// tends to +|n> as the interaction vanishes.
inline double component(int n, double E, double f, double fp) {
    const double En = 2.0 * n + 1.5;
    const double psi0 = special_fn::ho_origin_amplitude(n);
    const double d = E - En;
    if (std::abs(d) < 1e-12) return psi0 * std::sqrt(2.0 * constants::pi * fp);
    return f * psi0 * std::sqrt(2.0 * constants::pi / fp) / d;
}

/// <phi(E1) | phi(E2)> for two eigenvector-form states at arbitrary energies.
inline double overlap(double E1, double f1, double fp1, double E2, double f2, double fp2) {
    const double d = E1 - E2;
    if (std::abs(d) < 1e-7) {
        const double fpm = intercept_derivative(0.5 * (E1 + E2));
        return fpm / std::sqrt(fp1 * fp2);
    }
    return (f1 - f2) / (d * std::sqrt(fp1 * fp2));
}

}  // namespace eigvec

struct ChannelEigensystem {
    int F = 0;
    double offset_khz = 0.0;
    EigenSpectrum spectrum;
    std::vector<double> f;   // f(E_j)
    std::vector<double> fp;  // f'(E_j)
    /// S^{-1/2} of the raw overlap matrix; columns give the orthonormalized
    /// eigenvectors in terms of the raw ones.
    Eigen::MatrixXd lowdin;
    /// max |S - 1| of the raw overlap matrix.
    double orthogonality_defect = 0.0;
    /// 1 - (norm captured by the first N_basis unperturbed states), worst level.
    double truncation_tail = 0.0;

    std::size_t size() const noexcept { return spectrum.size(); }
    double energy_hw(std::size_t j) const { return spectrum.energy(j); }
    double energy_khz(std::size_t j) const { return spectrum.energy_khz(j) + offset_khz; }

    /// Raw eigenvector j over unperturbed states 0..n_basis-1.
    std::vector<double> raw_vector(std::size_t j, int n_basis) const {
        std::vector<double> v(static_cast<std::size_t>(n_basis));
        for (int n = 0; n < n_basis; ++n) v[static_cast<std::size_t>(n)] = eigvec::component(n, spectrum.energy(j), f[j], fp[j]);
        return v;
    }

    /// Orthonormalized eigenvector j over unperturbed states 0..n_basis-1.
    std::vector<double> vector(std::size_t j, int n_basis) const {
        std::vector<double> v(static_cast<std::size_t>(n_basis), 0.0);
        for (std::size_t k = 0; k < size(); ++k) {
            const double w = lowdin(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j));
            if (w == 0.0) continue;
            const auto raw = raw_vector(k, n_basis);
            for (int n = 0; n < n_basis; ++n) v[static_cast<std::size_t>(n)] += w * raw[static_cast<std::size_t>(n)];
        }
        return v;
    }

    /// Overlap matrix between the orthonormalized eigenvectors of two channels.
    Eigen::MatrixXd overlap_with(const ChannelEigensystem& other) const {
        Eigen::MatrixXd raw(static_cast<Eigen::Index>(size()), static_cast<Eigen::Index>(other.size()));
        for (std::size_t i = 0; i < size(); ++i)
            for (std::size_t j = 0; j < other.size(); ++j)
                raw(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                    eigvec::overlap(energy_hw(i), f[i], fp[i], other.energy_hw(j), other.f[j], other.fp[j]);
        return lowdin.transpose() * raw * other.lowdin;
    }
};

inline ChannelEigensystem channel_eigensystem(const Channel& ch, const TrapConfig& trap, int n_levels,
                                              int n_basis = 200) {
    if (n_levels < 1) throw InputError("channel eigensystem: n_levels must be >= 1");
    if (n_levels > n_basis / 4)
        throw InputError("channel eigensystem: n_levels must not exceed n_basis / 4");
    ChannelEigensystem es;
    es.F = ch.F;
    es.offset_khz = ch.offset_khz;
    es.spectrum = solve_trap_levels(ch.model, trap, n_levels);
    const std::size_t J = es.size();
    for (std::size_t j = 0; j < J; ++j) {
        const double E = es.spectrum.energy(j);
        es.f.push_back(intercept_function(E));
        es.fp.push_back(intercept_derivative(E));
        if (!(es.fp.back() > 0.0)) throw SolverError("channel eigensystem: non-positive f'(E) at a level");
    }

    Eigen::MatrixXd S(static_cast<Eigen::Index>(J), static_cast<Eigen::Index>(J));
    for (std::size_t i = 0; i < J; ++i)
        for (std::size_t j = 0; j < J; ++j)
            S(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                i == j ? 1.0
                       : eigvec::overlap(es.energy_hw(i), es.f[i], es.fp[i], es.energy_hw(j), es.f[j], es.fp[j]);
    es.orthogonality_defect = (S - Eigen::MatrixXd::Identity(S.rows(), S.cols())).cwiseAbs().maxCoeff();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S);
    if (eig.info() != Eigen::Success || eig.eigenvalues().minCoeff() <= 1e-12)
        throw SolverError("channel eigensystem: eigenvectors are numerically dependent");
    es.lowdin = eig.eigenvectors() * eig.eigenvalues().cwiseInverse().cwiseSqrt().asDiagonal() *
                eig.eigenvectors().transpose();

    for (std::size_t j = 0; j < J; ++j) {
        double captured = 0.0;
        for (int n = 0; n < n_basis; ++n) {
            const double c = eigvec::component(n, es.spectrum.energy(j), es.f[j], es.fp[j]);
            captured += c * c;
        }
        es.truncation_tail = std::max(es.truncation_tail, 1.0 - captured);
    }
    return es;
}

// --- population dynamics ---------------------------------------------------------

struct RabiSystem {
    std::vector<ChannelEigensystem> channels;
    int n_basis = 200;

    std::size_t n_states() const {
        std::size_t k = 0;
        for (const auto& c : channels) k += c.size();
        return k;
    }
    std::vector<std::string> warnings() const {
        std::vector<std::string> w;
        for (const auto& c : channels)
            if (c.truncation_tail > 1e-4)
                w.push_back("F=" + std::to_string(c.F) + ": eigenvector norm outside the first " +
                            std::to_string(n_basis) + " basis states is " + std::to_string(c.truncation_tail) +
                            " (norms and overlaps are exact; only the initial-state projection is truncated)");
        return w;
    }
};

struct RabiOptions {
    int n_levels = 20;
    int n_basis = 200;
    double T_total_s = 0.5;
    double dt_s = 2.5e-6;
    AngularMomentumKet target{3, 0, 3, 0};
};

inline RabiSystem build_system(const ChannelSet& set, const TrapConfig& trap, int n_levels, int n_basis) {
    set.validate();
    trap.validate();
    RabiSystem sys;
    sys.n_basis = n_basis;
    for (const auto& ch : set.channels) sys.channels.push_back(channel_eigensystem(ch, trap, n_levels, n_basis));
    return sys;
}

/// One eigenstate (F, j) of the coupled problem with its weight in the
/// observed amplitude.
struct StateWeight {
    int F = 0;
    int j = 0;
    double energy_khz = 0.0;
    double weight = 0.0;  // d_F c_F <phi'_{F,j} | psi>
    double population = 0.0;  // |c_F <phi'_{F,j} | psi>|^2
};

struct RabiModel {
    std::vector<StateWeight> states;
    Eigen::MatrixXd gram;  // overlaps between all orthonormalized eigenvectors
    double max_frequency_khz = 0.0;
    /// Constant contribution to P of the initial-state weight that lies above
    /// the retained levels, treated as fully dephased:
    /// sum_F d_F^2 c_F^2 (1 - sum_j |beta_{F,j}|^2).
    double dephased_background = 0.0;
    std::vector<std::string> warnings;

    /// Sum over channels of |c_F|^2 times the spatial norm held by the
    /// retained levels.
    double captured_norm() const {
        double s = 0.0;
        for (const auto& st : states) s += st.population;
        return s;
    }
};

inline RabiModel build_model(const RabiSystem& sys, const ChannelSet& set, const RabiInitialState& init,
                             const AngularMomentumKet& target) {
    init.validate();
    if (!target.valid()) throw InputError("target: invalid angular momentum ket");
    if (target.total_projection() != init.internal.total_projection())
        throw InputError("target and initial internal states have different total projection M");
    if (target.f1 != init.internal.f1 || target.f2 != init.internal.f2 || init.internal.f1 != set.f_atom)
        throw InputError("target, initial state and channel set must share the single-atom f");

    RabiModel model;
    model.warnings = sys.warnings();
    const int nb = std::min<int>(sys.n_basis, static_cast<int>(init.spatial_coeffs.size()));
    std::vector<Eigen::VectorXd> beta;
    for (const auto& ch : sys.channels) {
        Eigen::VectorXd raw(static_cast<Eigen::Index>(ch.size()));
        for (std::size_t j = 0; j < ch.size(); ++j) {
            double s = 0.0;
            for (int n = 0; n < nb; ++n)
                s += eigvec::component(n, ch.energy_hw(j), ch.f[j], ch.fp[j]) * init.spatial_coeffs[static_cast<std::size_t>(n)];
            raw(static_cast<Eigen::Index>(j)) = s;
        }
        beta.push_back(ch.lowdin.transpose() * raw);
    }

    for (std::size_t c = 0; c < sys.channels.size(); ++c) {
        const auto& ch = sys.channels[c];
        const double cF = pair_channel_amplitude(init.internal, ch.F);
        const double dF = pair_channel_amplitude(target, ch.F);
        const double retained = std::min(1.0, beta[c].squaredNorm());
        model.dephased_background += dF * dF * cF * cF * (1.0 - retained);
        for (std::size_t j = 0; j < ch.size(); ++j) {
            const double b = beta[c](static_cast<Eigen::Index>(j));
            model.states.push_back({ch.F, static_cast<int>(j), ch.energy_khz(j), dF * cF * b, cF * cF * b * b});
        }
    }

    const auto K = static_cast<Eigen::Index>(model.states.size());
    model.gram = Eigen::MatrixXd::Identity(K, K);
    Eigen::Index r0 = 0;
    for (std::size_t a = 0; a < sys.channels.size(); ++a) {
        Eigen::Index c0 = r0 + static_cast<Eigen::Index>(sys.channels[a].size());
        for (std::size_t b = a + 1; b < sys.channels.size(); ++b) {
            const Eigen::MatrixXd O = sys.channels[a].overlap_with(sys.channels[b]);
            model.gram.block(r0, c0, O.rows(), O.cols()) = O;
            model.gram.block(c0, r0, O.cols(), O.rows()) = O.transpose();
            c0 += O.cols();
        }
        r0 += static_cast<Eigen::Index>(sys.channels[a].size());
    }

    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& st : model.states) {
        lo = std::min(lo, st.energy_khz);
        hi = std::max(hi, st.energy_khz);
    }
    model.max_frequency_khz = hi - lo;
    return model;
}

struct TimeSeries {
    double dt_s = 0.0;
    std::vector<double> P;

    double t(std::size_t m) const noexcept { return dt_s * double(m); }
};

/// Largest admissible sampling step for a model (5% margin under Nyquist).
inline double nyquist_dt(const RabiModel& model) {
    return 1.0 / (2.0 * model.max_frequency_khz * 1e3 * 1.05);
}

/// P(t_m) = || sum_k w_k exp(-i 2 pi E_k t_m) phi'_k ||^2 for the model's states.
inline TimeSeries evolve(const RabiModel& model, double T_total_s, double dt_s, bool negate_energies = false) {
    if (!(T_total_s > 0.0) || !(dt_s > 0.0)) throw InputError("simulation: T_total and dt must be positive");
    const double dt_max = nyquist_dt(model);
    if (dt_s > dt_max)
        throw SolverError("simulation: dt = " + std::to_string(dt_s) + " s violates the Nyquist limit for the " +
                          std::to_string(model.max_frequency_khz) + " kHz frequency span; use dt <= " +
                          std::to_string(dt_max) + " s");
    const auto n_steps = static_cast<std::size_t>(std::floor(T_total_s / dt_s + 1e-9));
    if (n_steps < 1) throw InputError("simulation: T_total shorter than dt");

    // Factor the gram matrix as L L^T, dropping null directions, and keep only
    // states that carry weight.
    std::vector<Eigen::Index> active;
    double wmax = 0.0;
    for (const auto& st : model.states) wmax = std::max(wmax, std::abs(st.weight));
    for (std::size_t k = 0; k < model.states.size(); ++k)
        if (std::abs(model.states[k].weight) > 1e-14 * wmax) active.push_back(static_cast<Eigen::Index>(k));

    TimeSeries ts;
    ts.dt_s = dt_s;
    ts.P.assign(n_steps, model.dephased_background);
    if (active.empty() || wmax == 0.0) return ts;

    const auto A = static_cast<Eigen::Index>(active.size());
    Eigen::MatrixXd G(A, A);
    for (Eigen::Index i = 0; i < A; ++i)
        for (Eigen::Index j = 0; j < A; ++j) G(i, j) = model.gram(active[static_cast<std::size_t>(i)], active[static_cast<std::size_t>(j)]);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(G);
    const double lmax = eig.eigenvalues().maxCoeff();
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < A; ++i)
        if (eig.eigenvalues()(i) > 1e-13 * lmax) keep.push_back(i);
    Eigen::MatrixXd LT(static_cast<Eigen::Index>(keep.size()), A);
    for (std::size_t r = 0; r < keep.size(); ++r)
        LT.row(static_cast<Eigen::Index>(r)) =
            std::sqrt(eig.eigenvalues()(keep[r])) * eig.eigenvectors().col(keep[r]).transpose();

    Eigen::VectorXd w(A), omega(A);
    for (Eigen::Index i = 0; i < A; ++i) {
        const auto& st = model.states[static_cast<std::size_t>(active[static_cast<std::size_t>(i)])];
        w(i) = st.weight;
        omega(i) = (negate_energies ? -1.0 : 1.0) * 2.0 * constants::pi * st.energy_khz * 1e3;
    }
    // Column-scaled factors; time steps are processed in blocks so that the
    // amplitudes come from two real matrix products per block.
    const Eigen::MatrixXd LTw = LT * w.asDiagonal();
    constexpr std::size_t block = 512;
    Eigen::MatrixXd Zr(A, static_cast<Eigen::Index>(block)), Zi(A, static_cast<Eigen::Index>(block));
    for (std::size_t m0 = 0; m0 < n_steps; m0 += block) {
        const std::size_t nb = std::min(block, n_steps - m0);
        for (Eigen::Index i = 0; i < A; ++i) {
            // Exact phase at the block start, then rotation by omega dt.
            const double ph0 = omega(i) * dt_s * double(m0);
            const std::complex<double> step(std::cos(omega(i) * dt_s), -std::sin(omega(i) * dt_s));
            std::complex<double> z(std::cos(ph0), -std::sin(ph0));
            for (std::size_t b = 0; b < nb; ++b) {
                Zr(i, static_cast<Eigen::Index>(b)) = z.real();
                Zi(i, static_cast<Eigen::Index>(b)) = z.imag();
                z *= step;
            }
        }
        const auto cols = static_cast<Eigen::Index>(nb);
        const Eigen::MatrixXd Ar = LTw * Zr.leftCols(cols);
        const Eigen::MatrixXd Ai = LTw * Zi.leftCols(cols);
        for (Eigen::Index b = 0; b < cols; ++b)
            ts.P[m0 + static_cast<std::size_t>(b)] = model.dephased_background + Ar.col(b).squaredNorm() + Ai.col(b).squaredNorm();
    }
    return ts;
}

inline TimeSeries simulate_population(const ChannelSet& set, const RabiInitialState& init, const TrapConfig& trap,
                                      const RabiOptions& opt = {}) {
    const auto sys = build_system(set, trap, opt.n_levels, opt.n_basis);
    const auto model = build_model(sys, set, init, opt.target);
    return evolve(model, opt.T_total_s, opt.dt_s);
}

// --- spectrum ------------------------------------------------------------------------

struct PeakAssignment {
    int F = 0, j = 0, F2 = 0, j2 = 0;
    double predicted_khz = 0.0;
    bool ambiguous = false;
};

struct SpectralPeak {
    double freq_khz = 0.0;
    double magnitude = 0.0;
    std::optional<PeakAssignment> assignment;
};

struct PeakGroup {
    int delta_n = 0;
    double center_khz = 0.0;  // magnitude-weighted mean position
    std::vector<std::size_t> peaks;
};

struct BeatSpectrum {
    std::vector<double> freqs_khz;
    std::vector<double> amplitude;
    std::vector<SpectralPeak> peaks;
    std::vector<PeakGroup> groups;
    double T_total_s = 0.0;
    double bin_khz = 0.0;
};

struct SpectrumOptions {
    int zero_pad_factor = 4;
    double peak_threshold = 1e-3;  // relative to the largest non-DC magnitude
    /// Local maxima below this multiple of the Hann sidelobe envelope of a
    /// larger peak are treated as window sidelobes.
    double sidelobe_guard = 2.0;
    double nu_trap_khz = 4.0;  // for grouping by delta n (2 nu_trap apart)
};

namespace detail {
inline std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}
}  // namespace detail

/// Hann-windowed, zero-padded magnitude spectrum with peak picking. The series
/// mean is removed before windowing and reported as the zero-frequency bin.
inline BeatSpectrum beat_spectrum(const TimeSeries& series, const SpectrumOptions& opt = {}) {
    const std::size_t N = series.P.size();
    if (N < 64) throw InputError("beat spectrum: need at least 64 samples");
    if (opt.zero_pad_factor < 1) throw InputError("beat spectrum: zero_pad_factor must be >= 1");
    const std::size_t L = N * static_cast<std::size_t>(opt.zero_pad_factor);

    double mean = 0.0, scale = 0.0;
    for (double p : series.P) {
        mean += p;
        scale = std::max(scale, std::abs(p));
    }
    mean /= double(N);

    double* in = fftw_alloc_real(L);
    fftw_complex* out = fftw_alloc_complex(L / 2 + 1);
    fftw_plan plan;
    {
        std::lock_guard lock(detail::fftw_planner_mutex());
        plan = fftw_plan_dft_r2c_1d(static_cast<int>(L), in, out, FFTW_ESTIMATE);
    }
    double wsum = 0.0;
    for (std::size_t i = 0; i < L; ++i) {
        if (i < N) {
            const double w = 0.5 - 0.5 * std::cos(2.0 * constants::pi * double(i) / double(N - 1));
            wsum += w;
            in[i] = (series.P[i] - mean) * w;
        } else {
            in[i] = 0.0;
        }
    }
    fftw_execute(plan);

    BeatSpectrum sp;
    sp.T_total_s = series.dt_s * double(N);
    const std::size_t H = L / 2 + 1;
    sp.bin_khz = 1.0 / (series.dt_s * double(L)) * 1e-3;
    sp.freqs_khz.resize(H);
    sp.amplitude.resize(H);
    for (std::size_t k = 0; k < H; ++k) {
        sp.freqs_khz[k] = sp.bin_khz * double(k);
        sp.amplitude[k] = std::hypot(out[k][0], out[k][1]);
    }
    sp.amplitude[0] = std::abs(mean) * wsum;
    {
        std::lock_guard lock(detail::fftw_planner_mutex());
        fftw_destroy_plan(plan);
    }
    fftw_free(in);
    fftw_free(out);

    const double floor = 1e-10 * wsum * scale;
    if (sp.amplitude[0] > floor) sp.peaks.push_back({0.0, sp.amplitude[0], std::nullopt});

    double ac_max = 0.0;
    for (std::size_t k = 1; k < H; ++k) ac_max = std::max(ac_max, sp.amplitude[k]);
    if (ac_max > floor) {
        const double thr = opt.peak_threshold * ac_max;
        std::vector<std::size_t> idx;
        for (std::size_t k = 1; k + 1 < H; ++k) {
            const double a = sp.amplitude[k];
            if (a >= thr && a > sp.amplitude[k - 1] && a >= sp.amplitude[k + 1]) idx.push_back(k);
        }
        // Hann kernel envelope at x resolution bins (1/T) from a line: 1/(pi x (x^2 - 1)).
        const double per_bin = 1.0 / double(opt.zero_pad_factor);
        for (std::size_t q = 0; q < idx.size(); ++q) {
            const std::size_t k = idx[q];
            bool sidelobe = false;
            for (std::size_t p = 0; p < idx.size() && !sidelobe; ++p) {
                if (p == q || sp.amplitude[idx[p]] <= sp.amplitude[k]) continue;
                const double x = std::abs(double(idx[p]) - double(k)) * per_bin;
                if (x <= 1.5) {
                    sidelobe = true;
                } else {
                    const double env = 1.0 / (constants::pi * x * (x * x - 1.0));
                    if (sp.amplitude[k] < opt.sidelobe_guard * env * sp.amplitude[idx[p]]) sidelobe = true;
                }
            }
            if (sidelobe) continue;
            const double ym = sp.amplitude[k - 1], y0 = sp.amplitude[k], yp = sp.amplitude[k + 1];
            const double den = ym - 2.0 * y0 + yp;
            const double shift = den != 0.0 ? 0.5 * (ym - yp) / den : 0.0;
            const double mag = y0 - 0.25 * (ym - yp) * shift;
            sp.peaks.push_back({sp.bin_khz * (double(k) + shift), mag, std::nullopt});
        }
    }

    const double spacing = 2.0 * opt.nu_trap_khz;
    for (std::size_t i = 0; i < sp.peaks.size(); ++i) {
        const int dn = static_cast<int>(std::lround(sp.peaks[i].freq_khz / spacing));
        auto it = std::find_if(sp.groups.begin(), sp.groups.end(), [&](const PeakGroup& g) { return g.delta_n == dn; });
        if (it == sp.groups.end()) {
            sp.groups.push_back({dn, 0.0, {}});
            it = sp.groups.end() - 1;
        }
        it->peaks.push_back(i);
    }
    std::sort(sp.groups.begin(), sp.groups.end(), [](const PeakGroup& a, const PeakGroup& b) { return a.delta_n < b.delta_n; });
    for (auto& g : sp.groups) {
        double sw = 0.0, sf = 0.0;
        for (std::size_t i : g.peaks) {
            sw += sp.peaks[i].magnitude;
            sf += sp.peaks[i].magnitude * sp.peaks[i].freq_khz;
        }
        g.center_khz = sw > 0.0 ? sf / sw : 0.0;
    }
    return sp;
}

// --- line assignment -------------------------------------------------------------------

struct LinePrediction {
    double freq_khz = 0.0;
    double amplitude = 0.0;  // coefficient of the cosine in P(t)
    int F = 0, j = 0, F2 = 0, j2 = 0;
};

/// Every beat frequency |E_a - E_b| of a model with its cosine amplitude
/// 2 w_a w_b <phi_a|phi_b>. Lines weaker than `min_rel` of the strongest are dropped.
inline std::vector<LinePrediction> predict_lines(const RabiModel& model, double min_rel = 1e-3) {
    std::vector<LinePrediction> out;
    double amax = 0.0;
    const std::size_t K = model.states.size();
    for (std::size_t a = 0; a < K; ++a)
        for (std::size_t b = a + 1; b < K; ++b) {
            const auto& sa = model.states[a];
            const auto& sb = model.states[b];
            const double amp = 2.0 * sa.weight * sb.weight *
                               model.gram(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
            if (amp == 0.0) continue;
            const bool up = sb.energy_khz >= sa.energy_khz;
            const auto& lo = up ? sa : sb;
            const auto& hi = up ? sb : sa;
            out.push_back({hi.energy_khz - lo.energy_khz, amp, lo.F, lo.j, hi.F, hi.j});
            amax = std::max(amax, std::abs(amp));
        }
    std::erase_if(out, [&](const LinePrediction& p) { return std::abs(p.amplitude) < min_rel * amax; });
    std::sort(out.begin(), out.end(), [](const LinePrediction& a, const LinePrediction& b) { return a.freq_khz < b.freq_khz; });
    return out;
}

struct AssignmentReport {
    int assigned = 0;
    int unassigned = 0;
    int ambiguous = 0;
};

/// Matches each non-DC peak to the nearest predicted line within tolerance.
inline AssignmentReport assign_lines(BeatSpectrum& spec, const std::vector<LinePrediction>& guide,
                                     double tolerance_hz) {
    AssignmentReport rep;
    const double tol = tolerance_hz * 1e-3;
    for (auto& pk : spec.peaks) {
        pk.assignment.reset();
        if (pk.freq_khz == 0.0) continue;
        const LinePrediction* best = nullptr;
        int within = 0;
        for (const auto& g : guide) {
            const double d = std::abs(g.freq_khz - pk.freq_khz);
            if (d <= tol) {
                ++within;
                if (!best || d < std::abs(best->freq_khz - pk.freq_khz)) best = &g;
            }
        }
        if (!best) {
            ++rep.unassigned;
            continue;
        }
        PeakAssignment a{best->F, best->j, best->F2, best->j2, best->freq_khz, within > 1};
        if (a.ambiguous) ++rep.ambiguous;
        pk.assignment = a;
        ++rep.assigned;
    }
    return rep;
}

/// The lowest `n_lines` transition energies E_{F,j} - E_{F,0} of one channel.
/// States of one channel are orthogonal, so these never beat directly; each is
/// the difference of two assigned peaks that share a partner state in another
/// channel. The strongest such pair (by its weaker peak) is used.
inline std::vector<double> lowest_transitions(const BeatSpectrum& spec, int F, int n_lines) {
    struct Leg {
        int G, k;
        double signed_khz;  // E_{F,j} - E_{G,k}
        double magnitude;
    };
    auto legs_of = [&](int j) {
        std::vector<Leg> out;
        for (const auto& pk : spec.peaks) {
            if (!pk.assignment || pk.assignment->ambiguous) continue;
            const auto& a = *pk.assignment;
            if (a.F == F && a.j == j && a.F2 != F) out.push_back({a.F2, a.j2, -pk.freq_khz, pk.magnitude});
            if (a.F2 == F && a.j2 == j && a.F != F) out.push_back({a.F, a.j, pk.freq_khz, pk.magnitude});
        }
        return out;
    };
    const auto base = legs_of(0);
    std::vector<double> out;
    for (int j = 1; j <= n_lines; ++j) {
        double best = -1.0, value = std::numeric_limits<double>::quiet_NaN();
        for (const auto& l : legs_of(j))
            for (const auto& b : base)
                if (l.G == b.G && l.k == b.k && std::min(l.magnitude, b.magnitude) > best) {
                    best = std::min(l.magnitude, b.magnitude);
                    value = l.signed_khz - b.signed_khz;
                }
        if (std::isnan(value)) break;
        out.push_back(value);
    }
    return out;
}

// --- trap-frequency jitter ---------------------------------------------------------

struct JitterResult {
    TimeSeries series;
    BeatSpectrum spectrum;
    std::vector<double> shot_nu_hz;
};

/// Average of n_shots populations, each with a constant trap frequency
/// nu (1 + xi), xi uniform on [-jitter, jitter]. The initial spatial state is
/// squeezed relative to each shot's trap.
inline JitterResult jitter_ensemble(const ChannelSet& set, const RabiInitialState& init, const TrapConfig& trap,
                                    const RabiOptions& opt, double jitter, int n_shots, std::uint64_t seed,
                                    int threads = 1, const SpectrumOptions& spec_opt = {}) {
    if (!(jitter >= 0.0)) throw InputError("jitter must be non-negative");
    if (n_shots < 1) throw InputError("n_shots must be >= 1");
    JitterResult res;
    res.shot_nu_hz.resize(static_cast<std::size_t>(n_shots));
    for (int s = 0; s < n_shots; ++s) {
        std::mt19937_64 rng(derive_seed(seed, 0x7177, static_cast<std::uint64_t>(s)));
        const double xi = jitter * (2.0 * uniform01(rng) - 1.0);
        res.shot_nu_hz[static_cast<std::size_t>(s)] = trap.nu_trap_hz * (1.0 + xi);
    }
    std::vector<TimeSeries> shots(static_cast<std::size_t>(n_shots));
    parallel_for(shots.size(), threads, [&](std::size_t s) {
        TrapConfig t = trap;
        t.nu_trap_hz = res.shot_nu_hz[s];
        shots[s] = simulate_population(set, init, t, opt);
    });
    res.series.dt_s = shots.front().dt_s;
    res.series.P.assign(shots.front().P.size(), 0.0);
    for (const auto& s : shots)  // fixed order: bit-reproducible for any thread count
        for (std::size_t m = 0; m < s.P.size(); ++m) res.series.P[m] += s.P[m];
    for (double& p : res.series.P) p /= double(n_shots);
    SpectrumOptions so = spec_opt;
    so.nu_trap_khz = trap.nu_khz();
    res.spectrum = beat_spectrum(res.series, so);
    return res;
}

// --- readability ---------------------------------------------------------------------

struct LineResolution {
    double freq_khz = 0.0;
    double peak = 0.0;
    double background = 0.0;
    bool resolved = false;
};

/// A reference line is resolved when the largest magnitude within +-1/T of it
/// is at least `factor` times the mean magnitude within +-window_hz.
inline std::vector<LineResolution> resolve_lines(const BeatSpectrum& spec, const std::vector<double>& lines_khz,
                                                 double factor = 2.0, double window_hz = 50.0) {
    std::vector<LineResolution> out;
    const double near = 1.0 / spec.T_total_s * 1e-3;
    const double win = window_hz * 1e-3;
    for (double f0 : lines_khz) {
        LineResolution r;
        r.freq_khz = f0;
        std::vector<double> bg;
        for (std::size_t k = 1; k < spec.freqs_khz.size(); ++k) {
            const double d = std::abs(spec.freqs_khz[k] - f0);
            if (d <= near) r.peak = std::max(r.peak, spec.amplitude[k]);
            if (d <= win) bg.push_back(spec.amplitude[k]);
        }
        if (!bg.empty()) {
            double sum = 0.0;
            for (double v : bg) sum += v;
            r.background = sum / double(bg.size());
        }
        r.resolved = r.peak >= factor * r.background && r.peak > 0.0;
        out.push_back(r);
    }
    return out;
}

/// Reference fine-structure lines of one delta-n group: peaks of a jitter-free
/// spectrum in that group with at least `min_rel` of the group's largest peak.
inline std::vector<double> group_reference_lines(const BeatSpectrum& clean, int delta_n, double min_rel = 0.1) {
    std::vector<double> out;
    for (const auto& g : clean.groups) {
        if (g.delta_n != delta_n) continue;
        double gmax = 0.0;
        for (std::size_t i : g.peaks) gmax = std::max(gmax, clean.peaks[i].magnitude);
        for (std::size_t i : g.peaks)
            if (clean.peaks[i].magnitude >= min_rel * gmax && clean.peaks[i].freq_khz > 0.0)
                out.push_back(clean.peaks[i].freq_khz);
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace trapspec
