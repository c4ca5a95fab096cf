#pragma once

// Variable projection for a(E) = a_b + sum_k alpha_k / (E - E_r,k): the model
// is linear in (a_b, alpha_k) once the pole positions are fixed, so the outer
// problem is a search over pole positions only.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "trapspec/error.hpp"

namespace trapspec::varpro {

struct LinearFit {
    double ssr = std::numeric_limits<double>::infinity();
    double a_b = 0.0;
    std::vector<double> alpha;
    int n_used = 0;
};

/// Least squares for (a_b, alpha) at fixed poles. Samples within `exclusion`
/// of a pole are dropped. Returns ssr = inf when the system is underdetermined.
inline LinearFit solve_linear(std::span<const double> x, std::span<const double> y,
                              std::span<const double> poles, double exclusion = 1e-6) {
    LinearFit fit;
    const std::size_t n_cols = poles.size() + 1;
    std::vector<std::size_t> keep;
    keep.reserve(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        bool ok = true;
        for (double p : poles)
            if (std::abs(x[i] - p) < exclusion) ok = false;
        if (ok) keep.push_back(i);
    }
    fit.n_used = static_cast<int>(keep.size());
    if (keep.size() < n_cols) return fit;

    if (poles.size() == 1) {
        // Centered closed form for the two-column case.
        const double p = poles[0];
        double mg = 0.0, my = 0.0;
        for (std::size_t i : keep) {
            mg += 1.0 / (x[i] - p);
            my += y[i];
        }
        const double inv_n = 1.0 / double(keep.size());
        mg *= inv_n;
        my *= inv_n;
        double sgg = 0.0, sgy = 0.0, syy = 0.0;
        for (std::size_t i : keep) {
            const double dg = 1.0 / (x[i] - p) - mg;
            const double dy = y[i] - my;
            sgg += dg * dg;
            sgy += dg * dy;
            syy += dy * dy;
        }
        if (!(sgg > 0.0) || !std::isfinite(sgg)) return fit;
        const double alpha = sgy / sgg;
        fit.alpha = {alpha};
        fit.a_b = my - alpha * mg;
        // Recompute residuals directly; syy - sgy^2/sgg cancels badly near zero.
        double ssr = 0.0;
        for (std::size_t i : keep) {
            const double r = fit.a_b + alpha / (x[i] - p) - y[i];
            ssr += r * r;
        }
        fit.ssr = ssr;
        (void)syy;
        return fit;
    }

    Eigen::MatrixXd A(static_cast<Eigen::Index>(keep.size()), static_cast<Eigen::Index>(n_cols));
    Eigen::VectorXd b(static_cast<Eigen::Index>(keep.size()));
    for (std::size_t r = 0; r < keep.size(); ++r) {
        const auto row = static_cast<Eigen::Index>(r);
        A(row, 0) = 1.0;
        for (std::size_t c = 0; c < poles.size(); ++c)
            A(row, static_cast<Eigen::Index>(c + 1)) = 1.0 / (x[keep[r]] - poles[c]);
        b(row) = y[keep[r]];
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
    if (qr.rank() < static_cast<Eigen::Index>(n_cols)) return fit;
    const Eigen::VectorXd coef = qr.solve(b);
    const double ssr = (A * coef - b).squaredNorm();
    if (!std::isfinite(ssr)) return fit;
    fit.ssr = ssr;
    fit.a_b = coef(0);
    for (std::size_t c = 0; c < poles.size(); ++c) fit.alpha.push_back(coef(static_cast<Eigen::Index>(c + 1)));
    return fit;
}

/// Golden-section minimization of a unimodal function on [lo, hi].
template <class F>
double golden_section(F&& fn, double lo, double hi, double tol, int max_iter = 200) {
    constexpr double inv_phi = 0.6180339887498949;
    double a = lo, b = hi;
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = fn(c), fd = fn(d);
    for (int it = 0; it < max_iter && (b - a) > tol; ++it) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = fn(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = fn(d);
        }
    }
    return fc < fd ? c : d;
}

struct PoleSearch {
    double lo = -200.0;
    double hi = 400.0;
    double step = 0.25;
    double tol = 1e-4;
    /// Pole positions inside [forbid_lo, forbid_hi] are rejected.
    double forbid_lo = std::numeric_limits<double>::quiet_NaN();
    double forbid_hi = std::numeric_limits<double>::quiet_NaN();
    double exclusion = 1e-6;
    int refine_candidates = 3;
};

struct PoleFit {
    std::vector<double> poles;
    LinearFit linear;
};

namespace detail {

inline bool forbidden(const PoleSearch& s, double p) {
    return !std::isnan(s.forbid_lo) && p >= s.forbid_lo && p <= s.forbid_hi;
}

inline std::vector<double> grid(const PoleSearch& s, double step) {
    std::vector<double> g;
    const auto n = static_cast<long>(std::floor((s.hi - s.lo) / step));
    g.reserve(static_cast<std::size_t>(n + 1));
    for (long i = 0; i <= n; ++i) {
        const double p = s.lo + step * double(i);
        if (!forbidden(s, p)) g.push_back(p);
    }
    return g;
}

} // namespace detail

/// Best single-pole fit: grid over the pole position, then golden-section
/// refinement of the best grid minima.
inline PoleFit fit_one_pole(std::span<const double> x, std::span<const double> y, const PoleSearch& s) {
    const auto g = detail::grid(s, s.step);
    std::vector<double> val(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double p = g[i];
        val[i] = solve_linear(x, y, std::span<const double>(&p, 1), s.exclusion).ssr;
    }

    std::vector<std::size_t> minima;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!std::isfinite(val[i])) continue;
        const bool left = i == 0 || !(val[i - 1] < val[i]);
        const bool right = i + 1 == g.size() || !(val[i + 1] < val[i]);
        if (left && right) minima.push_back(i);
    }
    if (minima.empty()) throw SolverError("variable projection: no pole position gives a finite residual");
    std::sort(minima.begin(), minima.end(), [&](std::size_t a, std::size_t b) {
        return val[a] < val[b] || (val[a] == val[b] && a < b);
    });
    if (static_cast<int>(minima.size()) > s.refine_candidates)
        minima.resize(static_cast<std::size_t>(s.refine_candidates));

    PoleFit best;
    for (std::size_t i : minima) {
        // Bracket by the neighbouring grid points, stopping short of forbidden
        // or excluded pole positions.
        double a = i > 0 ? g[i - 1] : g[i];
        double b = i + 1 < g.size() ? g[i + 1] : g[i];
        if (b - a > 2.5 * s.step) {  // a forbidden band sits between neighbours
            a = std::max(a, g[i] - s.step);
            b = std::min(b, g[i] + s.step);
            if (detail::forbidden(s, a)) a = g[i];
            if (detail::forbidden(s, b)) b = g[i];
        }
        auto obj = [&](double p) {
            if (detail::forbidden(s, p)) return std::numeric_limits<double>::infinity();
            return solve_linear(x, y, std::span<const double>(&p, 1), s.exclusion).ssr;
        };
        double p = g[i];
        if (b > a) p = golden_section(obj, a, b, s.tol);
        if (!(obj(p) <= val[i])) p = g[i];
        LinearFit lf = solve_linear(x, y, std::span<const double>(&p, 1), s.exclusion);
        if (lf.ssr < best.linear.ssr) {
            best.poles = {p};
            best.linear = std::move(lf);
        }
    }
    return best;
}

/// Best two-pole fit (E_r1 < E_r2): coarse pair grid followed by alternating
/// golden-section refinement of each pole.
inline PoleFit fit_two_poles(std::span<const double> x, std::span<const double> y, const PoleSearch& s) {
    const double coarse = std::max(s.step, (s.hi - s.lo) / 240.0);
    const auto g = detail::grid(s, coarse);
    struct Cand {
        double ssr;
        double p1, p2;
    };
    std::vector<Cand> cands;
    for (std::size_t i = 0; i < g.size(); ++i) {
        for (std::size_t j = i + 1; j < g.size(); ++j) {
            const double p[2] = {g[i], g[j]};
            const double v = solve_linear(x, y, std::span<const double>(p, 2), s.exclusion).ssr;
            if (std::isfinite(v)) cands.push_back({v, g[i], g[j]});
        }
    }
    if (cands.empty()) throw SolverError("variable projection: no pole pair gives a finite residual");
    const std::size_t keep = std::min<std::size_t>(cands.size(), static_cast<std::size_t>(s.refine_candidates));
    std::partial_sort(cands.begin(), cands.begin() + static_cast<long>(keep), cands.end(),
                      [](const Cand& a, const Cand& b) { return a.ssr < b.ssr; });

    PoleFit best;
    for (std::size_t c = 0; c < keep; ++c) {
        double p1 = cands[c].p1, p2 = cands[c].p2;
        double width = coarse;
        for (int sweep = 0; sweep < 40 && width > s.tol; ++sweep) {
            auto obj1 = [&](double p) {
                if (detail::forbidden(s, p) || p >= p2) return std::numeric_limits<double>::infinity();
                const double pp[2] = {p, p2};
                return solve_linear(x, y, std::span<const double>(pp, 2), s.exclusion).ssr;
            };
            p1 = golden_section(obj1, p1 - width, std::min(p1 + width, p2 - s.tol), s.tol);
            auto obj2 = [&](double p) {
                if (detail::forbidden(s, p) || p <= p1) return std::numeric_limits<double>::infinity();
                const double pp[2] = {p1, p};
                return solve_linear(x, y, std::span<const double>(pp, 2), s.exclusion).ssr;
            };
            p2 = golden_section(obj2, std::max(p2 - width, p1 + s.tol), p2 + width, s.tol);
            width *= 0.5;
        }
        const double pp[2] = {p1, p2};
        LinearFit lf = solve_linear(x, y, std::span<const double>(pp, 2), s.exclusion);
        if (!(lf.ssr <= cands[c].ssr)) {
            const double q[2] = {cands[c].p1, cands[c].p2};
            lf = solve_linear(x, y, std::span<const double>(q, 2), s.exclusion);
            p1 = q[0];
            p2 = q[1];
        }
        if (lf.ssr < best.linear.ssr) {
            best.poles = {p1, p2};
            best.linear = std::move(lf);
        }
    }
    return best;
}

} // namespace trapspec::varpro
