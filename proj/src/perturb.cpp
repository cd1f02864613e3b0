#include "halfline/perturb.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "halfline/util.hpp"

namespace halfline {

namespace {

bool same_grid(const Grid& a, const Grid& b) {
    return a.kind == b.kind && a.npoints == b.npoints &&
           (a.kind == Kind::discrete || a.h == b.h);
}

std::string fmt(const char* pattern, double a, double b) {
    char buf[192];
    std::snprintf(buf, sizeof buf, pattern, a, b);
    return std::string(buf);
}

} // namespace

CoefficientMatrix build_A(const PerturbationSpec& W, const SolutionPair& pair) {
    const Grid& g = pair.grid;
    const size_t n = g.npoints;
    if (n == 0) throw std::invalid_argument("build_A: pair has an empty grid");

    CoefficientMatrix A;
    A.grid = g;
    A.lambda = pair.lambda;
    A.rank_one = true;
    A.a11.assign(n, 0.0);
    A.a12.assign(n, 0.0);
    A.a21.assign(n, 0.0);
    A.a22.assign(n, 0.0);
    A.pot_total.resize(n);

    const double sign = g.kind == Kind::discrete ? 1.0 : -1.0;
    for (size_t i = 0; i < n; ++i) {
        double wx = W.evaluate(g.kind, g.x(i));
        A.pot_total[i] = pair.pot[i] + wx;
        if (wx == 0.0) continue;                       // keeps W == 0 -> A == 0 exact
        if (g.kind == Kind::discrete && i == 0) continue; // site 0 carries no potential term
        double pm = pair.phi(1, i);
        double pp = pair.phi(2, i);
        double w = pair.wronskian(i);
        double s = sign * wx / w;
        double cross = s * pp * pm;
        A.a11[i] = cross;
        A.a12[i] = s * pp * pp;
        A.a21[i] = -s * pm * pm;
        A.a22[i] = -cross; // trace vanishes exactly, not just to rounding
        if (!std::isfinite(A.a12[i]) || !std::isfinite(A.a21[i]) || !std::isfinite(cross))
            throw HypothesisError("build_A: coefficient entries left the double range at index " +
                                  std::to_string(i));
    }
    return A;
}

WeightPair unit_weights(const Grid& grid) {
    WeightPair w;
    w.grid = grid;
    w.f_plus.assign(grid.npoints, 1.0);
    w.f_minus.assign(grid.npoints, 1.0);
    return w;
}

WeightPair exp_weights(const Grid& grid, double gamma, double eps1) {
    if (!(gamma > 0.0) || !(eps1 >= 0.0) || !(eps1 < gamma))
        throw std::invalid_argument("exp_weights: need gamma > 0 and 0 <= eps1 < gamma");
    WeightPair w;
    w.grid = grid;
    w.f_plus.resize(grid.npoints);
    w.f_minus.resize(grid.npoints);
    for (size_t i = 0; i < grid.npoints; ++i) {
        double x = grid.x(i);
        w.f_plus[i] = std::exp((2.0 * gamma + 2.0 * eps1) * x);
        w.f_minus[i] = std::exp((-2.0 * gamma + 2.0 * eps1) * x);
        if (!std::isfinite(w.f_plus[i]))
            throw std::invalid_argument("exp_weights: weight overflows inside this horizon");
    }
    return w;
}

WeightPair power_weights(const Grid& grid, double mu_plus) {
    if (!(mu_plus >= 0.0)) throw std::invalid_argument("power_weights: exponent must be nonnegative");
    WeightPair w;
    w.grid = grid;
    w.f_plus.resize(grid.npoints);
    w.f_minus.assign(grid.npoints, 1.0);
    for (size_t i = 0; i < grid.npoints; ++i)
        w.f_plus[i] = std::pow(std::max(1.0, grid.x(i)), mu_plus);
    return w;
}

double eps1_for(double gamma, double eps) {
    if (!(gamma > 0.0) || !(eps > 0.0))
        throw std::invalid_argument("eps1_for: need positive gamma and eps");
    return 0.5 * std::min(gamma, 0.25 * eps);
}

WeightPair choose_weights_point(const SolutionPair& pair) {
    const Grid& g = pair.grid;
    const size_t n = g.npoints;
    if (n == 0) throw std::invalid_argument("choose_weights_point: empty pair");

    // boundedness audit of the first column: a peak inside the trailing 5%
    // of the grid means the bounded hypothesis is not credible here
    size_t arg = 0;
    double best = -1.0;
    for (size_t i = 0; i < n; ++i) {
        double v = std::fabs(pair.phi(1, i));
        if (!std::isfinite(v))
            throw HypothesisError("choose_weights_point: first column left the double range");
        if (v > best) { best = v; arg = i; }
    }
    if (n >= 20 && arg >= n - n / 20)
        throw HypothesisError("choose_weights_point: |phi1| still peaking near the horizon; "
                              "the bounded square-summable hypothesis fails at this horizon");

    WeightPair w;
    w.grid = g;
    w.f_plus.resize(n);
    w.f_minus.resize(n);
    double sup = 0.0;
    for (size_t i = 0; i < n; ++i) {
        sup = std::max(sup, std::fabs(pair.phi(2, i)));
        double f = (1.0 + g.x(i)) * std::max(sup, 1e-300);
        w.f_plus[i] = f;
        w.f_minus[i] = 1.0 / f;
    }
    return w;
}

double weighted_norm(double w1, double w2, const WeightPair& weights, size_t i, NormSide side) {
    if (i >= weights.grid.npoints) throw std::out_of_range("weighted_norm: index past the grid");
    double a1 = std::fabs(w1), a2 = std::fabs(w2);
    return side == NormSide::plus ? std::max(a1, a2 * weights.f_plus[i])
                                  : std::max(weights.f_minus[i] * a1, a2);
}

WeightPair build_G(const CoefficientMatrix& A, const WeightPair& weights) {
    if (!same_grid(A.grid, weights.grid)) throw std::invalid_argument("build_G: grid mismatch");
    const size_t n = A.grid.npoints;
    if (weights.f_plus.size() != n || weights.f_minus.size() != n)
        throw std::invalid_argument("build_G: weight tables do not cover the grid");

    WeightPair w = weights;
    for (size_t i = 0; i < n; ++i) {
        double fp = w.f_plus[i], fm = w.f_minus[i];
        if (!(fp > 0.0) || !(fm > 0.0) || fp * fm < 1.0 - 1e-12)
            throw std::invalid_argument("build_G: weight product dips under 1 at index " +
                                        std::to_string(i));
        if (i > 0 && (fp < w.f_plus[i - 1] * (1.0 - 1e-12) ||
                      fm > w.f_minus[i - 1] * (1.0 + 1e-12)))
            throw std::invalid_argument("build_G: weights are not monotone at index " +
                                        std::to_string(i));
    }

    w.G.resize(n);
    for (size_t i = 0; i < n; ++i) {
        double row1 = std::fabs(A.a11[i]) + std::fabs(A.a12[i]) * w.f_minus[i];
        double row2 = std::fabs(A.a21[i]) * w.f_plus[i] + std::fabs(A.a22[i]);
        w.G[i] = std::max(row1, row2);
        if (!std::isfinite(w.G[i]))
            throw HypothesisError("build_G: envelope overflowed at index " + std::to_string(i));
    }

    w.tail.assign(n, 0.0);
    if (A.grid.kind == Kind::discrete) {
        for (size_t i = n; i-- > 0;)
            w.tail[i] = (i + 1 < n ? w.tail[i + 1] : 0.0) + w.G[i];
    } else {
        for (size_t i = n - 1; i-- > 0;)
            w.tail[i] = w.tail[i + 1] + 0.5 * A.grid.h * (w.G[i] + w.G[i + 1]);
    }
    return w;
}

PowerWeightChoice choose_weights_power(double beta_hat, double eta) {
    if (!(beta_hat > 0.0) || !(beta_hat <= 1.0))
        throw std::invalid_argument("choose_weights_power: beta must lie in (0, 1]");
    if (!(eta > 0.0)) throw std::invalid_argument("choose_weights_power: eta must be positive");

    PowerWeightChoice c;
    c.window_lo = 1.0 / beta_hat - 1.0;
    c.window_hi = eta - 1.0;
    if (!(eta > 1.0 / beta_hat)) {
        c.reason = fmt("envelope decay eta = %.6g does not clear 1/beta = %.6g; "
                       "no growth weight balances the off-diagonal entries",
                       eta, 1.0 / beta_hat);
        return c;
    }
    c.feasible = true;
    c.mu_plus = 0.5 * (c.window_lo + c.window_hi);
    return c;
}

// ---------------------------------------------------------------------------
// Successive approximation.

namespace {

// one series term, tail direction: out(i) = -(integral of A*in from x_i to
// the horizon); the truncation pins the coefficient vector to the seed just
// past the last site
void term_tail(const CoefficientMatrix& A, size_t i0,
               const std::vector<double>& in1, const std::vector<double>& in2,
               std::vector<double>& out1, std::vector<double>& out2) {
    const size_t n = A.grid.npoints;
    double s1 = 0.0, s2 = 0.0;
    if (A.grid.kind == Kind::discrete) {
        for (size_t i = n; i-- > i0;) {
            s1 += A.a11[i] * in1[i] + A.a12[i] * in2[i];
            s2 += A.a21[i] * in1[i] + A.a22[i] * in2[i];
            out1[i] = -s1;
            out2[i] = -s2;
        }
    } else {
        double h2 = 0.5 * A.grid.h;
        double f1 = A.a11[n - 1] * in1[n - 1] + A.a12[n - 1] * in2[n - 1];
        double f2 = A.a21[n - 1] * in1[n - 1] + A.a22[n - 1] * in2[n - 1];
        out1[n - 1] = 0.0;
        out2[n - 1] = 0.0;
        for (size_t i = n - 1; i-- > i0;) {
            double g1 = A.a11[i] * in1[i] + A.a12[i] * in2[i];
            double g2 = A.a21[i] * in1[i] + A.a22[i] * in2[i];
            s1 += h2 * (g1 + f1);
            s2 += h2 * (g2 + f2);
            out1[i] = -s1;
            out2[i] = -s2;
            f1 = g1;
            f2 = g2;
        }
    }
}

// one series term, forward direction: out(i) = +(integral of A*in from x0 to x_i)
void term_forward(const CoefficientMatrix& A, size_t i0,
                  const std::vector<double>& in1, const std::vector<double>& in2,
                  std::vector<double>& out1, std::vector<double>& out2) {
    const size_t n = A.grid.npoints;
    out1[i0] = 0.0;
    out2[i0] = 0.0;
    double s1 = 0.0, s2 = 0.0;
    if (A.grid.kind == Kind::discrete) {
        for (size_t i = i0 + 1; i < n; ++i) {
            s1 += A.a11[i - 1] * in1[i - 1] + A.a12[i - 1] * in2[i - 1];
            s2 += A.a21[i - 1] * in1[i - 1] + A.a22[i - 1] * in2[i - 1];
            out1[i] = s1;
            out2[i] = s2;
        }
    } else {
        double h2 = 0.5 * A.grid.h;
        double f1 = A.a11[i0] * in1[i0] + A.a12[i0] * in2[i0];
        double f2 = A.a21[i0] * in1[i0] + A.a22[i0] * in2[i0];
        for (size_t i = i0 + 1; i < n; ++i) {
            double g1 = A.a11[i] * in1[i] + A.a12[i] * in2[i];
            double g2 = A.a21[i] * in1[i] + A.a22[i] * in2[i];
            s1 += h2 * (f1 + g1);
            s2 += h2 * (f2 + g2);
            out1[i] = s1;
            out2[i] = s2;
            f1 = g1;
            f2 = g2;
        }
    }
}

// extend u below the anchor through the same one-step relation: exact 2x2
// inversion per site in the discrete case, trapezoid steps in the continuum
void continue_below(const CoefficientMatrix& A, size_t i0,
                    std::vector<double>& u1, std::vector<double>& u2) {
    if (i0 == 0) return;
    if (A.grid.kind == Kind::discrete) {
        for (size_t i = i0; i-- > 0;) {
            double b11 = 1.0 + A.a11[i], b12 = A.a12[i];
            double b21 = A.a21[i], b22 = 1.0 + A.a22[i];
            double det = b11 * b22 - b12 * b21;
            if (det == 0.0 || !std::isfinite(det))
                throw HypothesisError("series_solve: one-step map degenerate below the anchor");
            double v1 = u1[i + 1], v2 = u2[i + 1];
            u1[i] = (b22 * v1 - b12 * v2) / det;
            u2[i] = (-b21 * v1 + b11 * v2) / det;
        }
    } else {
        double hh = 0.5 * A.grid.h;
        for (size_t i = i0; i-- > 0;) {
            double r1 = (1.0 - hh * A.a11[i + 1]) * u1[i + 1] - hh * A.a12[i + 1] * u2[i + 1];
            double r2 = -hh * A.a21[i + 1] * u1[i + 1] + (1.0 - hh * A.a22[i + 1]) * u2[i + 1];
            double b11 = 1.0 + hh * A.a11[i], b12 = hh * A.a12[i];
            double b21 = hh * A.a21[i], b22 = 1.0 + hh * A.a22[i];
            double det = b11 * b22 - b12 * b21;
            if (det == 0.0 || !std::isfinite(det))
                throw HypothesisError("series_solve: one-step map degenerate below the anchor");
            u1[i] = (b22 * r1 - b12 * r2) / det;
            u2[i] = (-b21 * r1 + b11 * r2) / det;
        }
    }
}

// |(A u)_1| integrated over [i0, ym]; the decay-split audit uses it
double first_row_mass(const CoefficientMatrix& A, size_t i0, size_t ym,
                      const std::vector<double>& u1, const std::vector<double>& u2) {
    double s = 0.0;
    if (A.grid.kind == Kind::discrete) {
        for (size_t i = i0; i <= ym; ++i)
            s += std::fabs(A.a11[i] * u1[i] + A.a12[i] * u2[i]);
    } else {
        double prev = std::fabs(A.a11[i0] * u1[i0] + A.a12[i0] * u2[i0]);
        for (size_t i = i0 + 1; i <= ym; ++i) {
            double cur = std::fabs(A.a11[i] * u1[i] + A.a12[i] * u2[i]);
            s += 0.5 * A.grid.h * (prev + cur);
            prev = cur;
        }
    }
    return s;
}

size_t advance_anchor(const WeightPair& w, size_t hint) {
    const size_t n = w.grid.npoints;
    size_t i0 = std::min(hint, n - 1);
    while (i0 < n && !(w.tail[i0] <= SERIES_CONTRACTION + 1e-12)) ++i0;
    if (i0 >= n)
        throw HypothesisError("series anchor: envelope tail never contracts inside the horizon "
                              "(G is not summable here)");
    return i0;
}

bool tail_route(const WeightPair& w, size_t i0, Branch branch) {
    if (branch == Branch::u_minus) return true;
    // f- essentially level across the window: the plain tail construction
    // contracts (ratio at most 2 * tail) and pins u1 -> 0 as well
    return w.f_minus[w.grid.npoints - 1] >= 0.5 * w.f_minus[i0];
}

} // namespace

SeriesSolution series_solve(const CoefficientMatrix& A, const WeightPair& w, Branch branch,
                            const SeriesOptions& opts) {
    if (!w.has_G()) throw std::invalid_argument("series_solve: weights carry no envelope; run build_G first");
    if (!same_grid(A.grid, w.grid)) throw std::invalid_argument("series_solve: grid mismatch");
    const size_t n = A.grid.npoints;
    if (n < 2) throw std::invalid_argument("series_solve: grid needs at least two points");

    SeriesSolution s;
    s.branch = branch;
    s.grid = A.grid;
    s.lambda = A.lambda;
    s.pot_total = A.pot_total;
    s.x0_index = advance_anchor(w, opts.x0_hint);
    const size_t i0 = s.x0_index;
    s.tail_at_x0 = w.tail[i0];

    const bool from_inf = tail_route(w, i0, branch);
    s.from_infinity = from_inf && branch == Branch::u_plus;
    const NormSide side = branch == Branch::u_minus ? NormSide::plus : NormSide::minus;
    const double seed1 = branch == Branch::u_minus ? 1.0 : 0.0;
    const double seed2 = branch == Branch::u_minus ? 0.0 : 1.0;

    std::vector<double> cur1(n, 0.0), cur2(n, 0.0), nxt1(n, 0.0), nxt2(n, 0.0);
    s.u1.assign(n, 0.0);
    s.u2.assign(n, 0.0);
    for (size_t i = i0; i < n; ++i) {
        cur1[i] = seed1;
        cur2[i] = seed2;
        s.u1[i] = seed1;
        s.u2[i] = seed2;
    }
    s.iter_sup.push_back(1.0); // both seeds have weighted norm exactly 1

    for (int it = 1; it <= opts.max_iterations; ++it) {
        if (from_inf) term_tail(A, i0, cur1, cur2, nxt1, nxt2);
        else term_forward(A, i0, cur1, cur2, nxt1, nxt2);
        double sup = 0.0;
        for (size_t i = i0; i < n; ++i) {
            s.u1[i] += nxt1[i];
            s.u2[i] += nxt2[i];
            sup = std::max(sup, weighted_norm(nxt1[i], nxt2[i], w, i, side));
        }
        s.iterations = it;
        s.iter_sup.push_back(sup);
        std::swap(cur1, nxt1);
        std::swap(cur2, nxt2);
        if (sup < opts.stop_sup) break;
    }

    if (branch == Branch::u_plus && !from_inf) {
        double alpha = s.u2[n - 1];
        if (!(std::fabs(alpha - 1.0) <= 0.5 + 1e-9))
            throw HypothesisError(fmt("series_solve: forward normalizer %.6g drifted past the "
                                      "half-width bound (tail %.3g)", alpha, s.tail_at_x0));
        s.alpha = alpha;
        for (size_t i = i0; i < n; ++i) {
            s.u1[i] /= alpha;
            s.u2[i] /= alpha;
        }
    }

    continue_below(A, i0, s.u1, s.u2);

    // trailing-window audit: weighted distance from the seed limits, less the
    // series bound that the contraction guarantees for it
    std::vector<size_t> ys;
    for (double frac : {1.0, 0.875, 0.75, 0.5}) {
        size_t y = i0 + static_cast<size_t>(std::floor(frac * static_cast<double>(n - 1 - i0)));
        if (ys.empty() || y != ys.back()) ys.push_back(y);
    }
    const double t0 = s.tail_at_x0;
    double worst = -std::numeric_limits<double>::infinity();
    if (branch == Branch::u_minus) {
        for (size_t y : ys) {
            double d = std::max(std::fabs(s.u1[y] - 1.0), w.f_plus[y] * std::fabs(s.u2[y]));
            worst = std::max(worst, d - w.tail[y] / (1.0 - t0));
        }
    } else if (s.from_infinity) {
        double r0 = w.f_minus[i0] / w.f_minus[n - 1];
        double denom = std::max(1.0 - r0 * t0, 0.25);
        for (size_t y : ys) {
            double ry = w.f_minus[y] / w.f_minus[n - 1];
            double d = std::max(w.f_minus[y] * std::fabs(s.u1[y]), std::fabs(s.u2[y] - 1.0));
            worst = std::max(worst, d - ry * w.tail[y] / denom);
        }
    } else {
        for (size_t y : ys)
            worst = std::max(worst, std::fabs(s.u2[y] - 1.0) - 2.0 * w.tail[y] / (1.0 - t0));
        if (w.f_minus[n - 1] < 0.5 * w.f_minus[i0]) {
            // decaying f-: split the first-component mass at the window middle;
            // the early part is crushed by f-(H), the late part by the G tail
            double sup_u = 0.0;
            for (size_t i = i0; i < n; ++i)
                sup_u = std::max(sup_u, weighted_norm(s.u1[i], s.u2[i], w, i, NormSide::minus));
            size_t ym = i0 + (n - 1 - i0) / 2;
            double bound = w.f_minus[n - 1] * first_row_mass(A, i0, ym, s.u1, s.u2) +
                           w.tail[ym] * sup_u;
            worst = std::max(worst, w.f_minus[n - 1] * std::fabs(s.u1[n - 1]) - bound);
        }
    }
    s.limit_defect = worst;
    return s;
}

PsiTrace reconstruct_psi(const SeriesSolution& s, const SolutionPair& pair, double residual_tol) {
    if (!same_grid(s.grid, pair.grid)) throw std::invalid_argument("reconstruct_psi: grid mismatch");
    const size_t n = s.grid.npoints;
    if (s.u1.size() != n) throw std::invalid_argument("reconstruct_psi: series does not cover the grid");

    PsiTrace t;
    t.grid = s.grid;
    t.psi.resize(n);
    t.dpsi.resize(n);
    for (size_t i = 0; i < n; ++i)
        t.psi[i] = s.u1[i] * pair.phi(1, i) + s.u2[i] * pair.phi(2, i);
    if (s.grid.kind == Kind::discrete) {
        for (size_t i = 0; i + 1 < n; ++i) t.dpsi[i] = t.psi[i + 1];
        t.dpsi[n - 1] = n >= 2
            ? (s.lambda - s.pot_total[n - 1]) * t.psi[n - 1] - t.psi[n - 2]
            : 0.0;
    } else {
        for (size_t i = 0; i < n; ++i)
            t.dpsi[i] = s.u1[i] * pair.dphi(1, i) + s.u2[i] * pair.dphi(2, i);
    }

    t.cumnorm_sq.assign(n, 0.0);
    if (s.grid.kind == Kind::discrete) {
        for (size_t i = 1; i < n; ++i) t.cumnorm_sq[i] = t.cumnorm_sq[i - 1] + t.psi[i] * t.psi[i];
    } else {
        for (size_t i = 1; i < n; ++i)
            t.cumnorm_sq[i] = t.cumnorm_sq[i - 1] +
                              0.5 * s.grid.h * (t.psi[i - 1] * t.psi[i - 1] + t.psi[i] * t.psi[i]);
    }

    if (s.grid.kind == Kind::discrete) {
        t.max_residual = discrete_residual(t.psi, s.pot_total, s.lambda);
    } else {
        auto r = continuum_residual(t.psi, s.pot_total, s.lambda, s.grid.h);
        double worst = 0.0;
        for (size_t i = 0; i < n; ++i)
            worst = std::max(worst, std::fabs(r[i]) / (1.0 + std::fabs(t.psi[i])));
        t.max_residual = worst;
    }
    if (t.max_residual > 10.0 * residual_tol)
        throw HypothesisError(fmt("reconstruct_psi: scaled residual %.3g exceeds ten times the "
                                  "tolerance %.3g", t.max_residual, residual_tol));
    return t;
}

// ---------------------------------------------------------------------------
// Reduced-system route.

LevinsonReduction levinson_reduce(const CoefficientMatrix& A, const std::vector<double>& f_plus) {
    const size_t n = A.grid.npoints;
    if (f_plus.size() != n) throw std::invalid_argument("levinson_reduce: weight size mismatch");
    LevinsonReduction r;
    r.grid = A.grid;
    r.b11.resize(n);
    r.b12.resize(n);
    r.b21.resize(n);
    r.b22.resize(n);
    r.alpha2.assign(n, 0.0);
    for (size_t i = 0; i < n; ++i) {
        if (!(f_plus[i] > 0.0)) throw std::invalid_argument("levinson_reduce: f+ must be positive");
        if (i > 0 && f_plus[i] < f_plus[i - 1] * (1.0 - 1e-12)) r.bounded = false;
        r.b11[i] = A.a11[i];
        r.b12[i] = A.a12[i] / f_plus[i];
        r.b21[i] = A.a21[i] * f_plus[i];
        r.b22[i] = A.a22[i];
    }
    if (A.grid.kind == Kind::discrete) {
        for (size_t i = 0; i + 1 < n; ++i) r.alpha2[i] = f_plus[i + 1] / f_plus[i] - 1.0;
        if (n >= 2) r.alpha2[n - 1] = r.alpha2[n - 2];
    } else if (n >= 2) {
        double h = A.grid.h;
        std::vector<double> lnf(n);
        for (size_t i = 0; i < n; ++i) lnf[i] = std::log(f_plus[i]);
        r.alpha2[0] = (lnf[1] - lnf[0]) / h;
        r.alpha2[n - 1] = (lnf[n - 1] - lnf[n - 2]) / h;
        for (size_t i = 1; i + 1 < n; ++i) r.alpha2[i] = (lnf[i + 1] - lnf[i - 1]) / (2.0 * h);
    }
    return r;
}

namespace {

// full-system matrix of the reduced route at index i applied to (v1, v2)
inline void reduced_apply(const LevinsonReduction& r, size_t i, double v1, double v2,
                          double& o1, double& o2) {
    o1 = r.b11[i] * v1 + r.b12[i] * v2;
    o2 = r.b21[i] * v1 + (r.b22[i] + r.alpha2[i]) * v2;
}

// one Runge-Kutta stride across two grid cells (signed), midpoint tabulated
void reduced_step(const LevinsonReduction& r, size_t from, size_t mid, size_t to, double h2,
                  double& v1, double& v2) {
    double k11, k12, k21, k22, k31, k32, k41, k42;
    reduced_apply(r, from, v1, v2, k11, k12);
    reduced_apply(r, mid, v1 + 0.5 * h2 * k11, v2 + 0.5 * h2 * k12, k21, k22);
    reduced_apply(r, mid, v1 + 0.5 * h2 * k21, v2 + 0.5 * h2 * k22, k31, k32);
    reduced_apply(r, to, v1 + h2 * k31, v2 + h2 * k32, k41, k42);
    v1 += h2 / 6.0 * (k11 + 2.0 * k21 + 2.0 * k31 + k41);
    v2 += h2 / 6.0 * (k12 + 2.0 * k22 + 2.0 * k32 + k42);
}

} // namespace

LevinsonSolution levinson_solve(const CoefficientMatrix& A, const WeightPair& w, Branch branch) {
    if (!w.has_G()) throw std::invalid_argument("levinson_solve: weights carry no envelope; run build_G first");
    if (!same_grid(A.grid, w.grid)) throw std::invalid_argument("levinson_solve: grid mismatch");
    const size_t n = A.grid.npoints;
    if (n < 3) throw std::invalid_argument("levinson_solve: grid needs at least three points");

    LevinsonSolution out;
    out.x0_index = advance_anchor(w, 0);
    const size_t i0 = out.x0_index;
    const bool from_inf = tail_route(w, i0, branch);
    const double seed1 = branch == Branch::u_minus ? 1.0 : 0.0;
    const double seed2 = branch == Branch::u_minus ? 0.0 : 1.0;

    if (A.grid.kind == Kind::discrete) {
        // the one-step relation is exact; no reduction needed to run it
        out.idx.resize(n - i0);
        out.u1.resize(n - i0);
        out.u2.resize(n - i0);
        if (from_inf) {
            double v1 = seed1, v2 = seed2; // coefficient vector just past the horizon
            for (size_t i = n; i-- > i0;) {
                double b11 = 1.0 + A.a11[i], b12 = A.a12[i];
                double b21 = A.a21[i], b22 = 1.0 + A.a22[i];
                double det = b11 * b22 - b12 * b21;
                double t1 = (b22 * v1 - b12 * v2) / det;
                double t2 = (-b21 * v1 + b11 * v2) / det;
                v1 = t1;
                v2 = t2;
                out.idx[i - i0] = i;
                out.u1[i - i0] = v1;
                out.u2[i - i0] = v2;
            }
        } else {
            double v1 = seed1, v2 = seed2;
            for (size_t i = i0; i < n; ++i) {
                out.idx[i - i0] = i;
                out.u1[i - i0] = v1;
                out.u2[i - i0] = v2;
                double t1 = v1 + A.a11[i] * v1 + A.a12[i] * v2;
                double t2 = v2 + A.a21[i] * v1 + A.a22[i] * v2;
                v1 = t1;
                v2 = t2;
            }
            out.alpha = out.u2.back();
            for (size_t j = 0; j < out.u1.size(); ++j) {
                out.u1[j] /= out.alpha;
                out.u2[j] /= out.alpha;
            }
        }
        return out;
    }

    LevinsonReduction red = levinson_reduce(A, w.f_plus);
    if (from_inf) {
        size_t i = n - 1;
        double v1 = seed1, v2 = seed2 * w.f_plus[i];
        std::vector<size_t> idx_desc{i};
        std::vector<double> u1_desc{v1}, u2_desc{v2 / w.f_plus[i]};
        double h2 = -2.0 * A.grid.h;
        while (i >= i0 + 2) {
            reduced_step(red, i, i - 1, i - 2, h2, v1, v2);
            i -= 2;
            idx_desc.push_back(i);
            u1_desc.push_back(v1);
            u2_desc.push_back(v2 / w.f_plus[i]);
        }
        out.idx.assign(idx_desc.rbegin(), idx_desc.rend());
        out.u1.assign(u1_desc.rbegin(), u1_desc.rend());
        out.u2.assign(u2_desc.rbegin(), u2_desc.rend());
    } else {
        size_t i = i0;
        double v1 = seed1, v2 = seed2 * w.f_plus[i];
        out.idx.push_back(i);
        out.u1.push_back(v1);
        out.u2.push_back(v2 / w.f_plus[i]);
        double h2 = 2.0 * A.grid.h;
        while (i + 2 < n) {
            reduced_step(red, i, i + 1, i + 2, h2, v1, v2);
            i += 2;
            out.idx.push_back(i);
            out.u1.push_back(v1);
            out.u2.push_back(v2 / w.f_plus[i]);
        }
        out.alpha = out.u2.back();
        for (size_t j = 0; j < out.u1.size(); ++j) {
            out.u1[j] /= out.alpha;
            out.u2[j] /= out.alpha;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Feasibility diagnostics.

ProductTailDiag product_tail_diag(const SolutionPair& pair, const PerturbationSpec& W) {
    const Grid& g = pair.grid;
    const size_t n = g.npoints;
    if (n < 8) throw std::invalid_argument("product_tail_diag: grid too short to fit anything");

    ProductTailDiag d;
    double gsum = 0.0, isum = 0.0;
    double prev_p = 0.0, prev_f = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double p = std::fabs(pair.phi(1, i) * pair.phi(2, i));
        double f = p * std::fabs(W.evaluate(g.kind, g.x(i)));
        if (!std::isfinite(p)) { p = 0.0; f = 0.0; } // overflowed frame: drop the point
        if (g.kind == Kind::discrete) {
            if (i >= 1) { gsum += p; isum += f; }
        } else if (i >= 1) {
            gsum += 0.5 * g.h * (prev_p + p);
            isum += 0.5 * g.h * (prev_f + f);
        }
        prev_p = p;
        prev_f = f;
    }
    d.g_at_horizon = gsum;
    d.integral_to_horizon = isum;

    auto idx = geometric_indices(std::max<size_t>(1, (n - 1) / 10), n - 1, 16);
    std::vector<double> xw, yw, xb, yb;
    for (size_t i : idx) {
        double x = g.x(i);
        double wv = std::fabs(W.evaluate(g.kind, x));
        if (wv > 0.0 && std::isfinite(wv)) {
            xw.push_back(std::log1p(x));
            yw.push_back(std::log(wv));
        }
        double ln1 = pair.lognorm(1, x), ln2 = pair.lognorm(2, x);
        if (std::isfinite(ln1) && std::isfinite(ln2)) {
            xb.push_back(std::log1p(x));
            yb.push_back(ln1 + ln2);
        }
    }
    d.a = xw.size() >= 4 ? -fit_line(xw, yw).slope
                         : std::numeric_limits<double>::infinity();
    d.b = xb.size() >= 4 ? fit_line(xb, yb).slope : 0.0;
    d.integrable = d.a > d.b;
    return d;
}

GrowthWindowCheck growth_window_check(const SolutionPair& pair, double beta, double eps) {
    if (!(beta > 0.0) || !(beta <= 1.0))
        throw std::invalid_argument("growth_window_check: beta must lie in (0, 1]");
    const Grid& g = pair.grid;
    const size_t n = g.npoints;
    if (n < 16) throw std::invalid_argument("growth_window_check: grid too short to fit anything");

    auto idx = geometric_indices(std::max<size_t>(1, (n - 1) / 10), n - 1, 16);
    std::vector<double> xs, y1, y2;
    for (size_t i : idx) {
        double L = g.x(i);
        if (L <= 0.0) continue;
        xs.push_back(std::log(L));
        y1.push_back(pair.lognorm(1, L));
        y2.push_back(pair.lognorm(2, L));
    }
    GrowthWindowCheck c;
    c.slope_minus = fit_line(xs, y1).slope;
    c.slope_plus = fit_line(xs, y2).slope;
    c.lo_minus = 1.0 - 0.5 / beta - eps;
    c.hi_minus = 0.5 + eps;
    c.lo_plus = 0.5 - eps;
    c.hi_plus = 0.5 / beta + eps;
    c.in_window_minus = c.slope_minus >= c.lo_minus && c.slope_minus <= c.hi_minus;
    c.in_window_plus = c.slope_plus >= c.lo_plus && c.slope_plus <= c.hi_plus;
    return c;
}

} // namespace halfline
