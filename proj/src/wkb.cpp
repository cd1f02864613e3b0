#include <halfline/propagate.hpp>
#include <halfline/util.hpp>
#include <halfline/wkb.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <string>

namespace halfline {

namespace {

std::string fmt(const char* pattern, double a, double b = 0.0) {
    char buf[192];
    std::snprintf(buf, sizeof buf, pattern, a, b);
    return std::string(buf);
}

// prefix trapezoid integral of v on a uniform grid, out[0] = 0
std::vector<double> cumtrap(double h, const std::vector<double>& v) {
    std::vector<double> out(v.size(), 0.0);
    for (size_t i = 1; i < v.size(); ++i) out[i] = out[i - 1] + 0.5 * h * (v[i - 1] + v[i]);
    return out;
}

double trapezoid(double h, const std::vector<double>& v) {
    double s = 0.0;
    for (size_t i = 1; i < v.size(); ++i) s += 0.5 * h * (v[i - 1] + v[i]);
    return s;
}

// checkpoints spanning the trailing two decades; the drift diagnostics read
// the trailing one
std::vector<size_t> trace_indices(size_t last) {
    return geometric_indices(std::max<size_t>(1, last / 100), last, 24);
}

double trailing_drift(const std::vector<size_t>& idx, const std::vector<double>& r, size_t last,
                      double limit) {
    double worst = 0.0;
    for (size_t j = 0; j < idx.size(); ++j)
        if (idx[j] * 10 >= last) worst = std::max(worst, std::fabs(r[j] - limit));
    return worst;
}

}  // namespace

double WkbFrame::phi_plus(size_t i) const { return std::exp(eta[i]); }
double WkbFrame::phi_minus(size_t i) const { return std::exp(-eta[i]); }

WkbFrame build_wkb_frame(const PotentialSpec& V1, const PotentialSpec& V2, double lambda,
                         const Grid& grid) {
    if (grid.kind != Kind::continuum)
        throw std::invalid_argument("build_wkb_frame: the frame is a continuum construction");
    if (grid.npoints < 8)
        throw std::invalid_argument("build_wkb_frame: grid is too short to carry a frame");
    if (lambda == 0.0)
        throw std::invalid_argument(
            "build_wkb_frame: lambda = 0 leaves no gap between the energy and the tail");
    if (V2.has_random())
        throw std::invalid_argument("build_wkb_frame: the tail part must be deterministic");

    WkbFrame f;
    f.grid = grid;
    f.lambda = lambda;
    f.oscillatory = lambda > 0.0;
    const size_t n = grid.npoints;
    f.v1 = V1.evaluate_grid(grid);
    f.v2 = V2.evaluate_grid(grid);

    // anchor: everything at and beyond s0 satisfies |V2| <= |lambda|
    size_t s0i = 0;
    for (size_t i = n; i-- > 0;) {
        if (std::fabs(f.v2[i]) > std::fabs(lambda)) {
            s0i = i + 1;
            break;
        }
    }
    if (s0i >= n)
        throw HypothesisError(
            "build_wkb_frame: |V2| never settles under |lambda| before the horizon");
    f.s0_index = s0i;
    f.s0 = grid.x(s0i);

    f.eta_rate.resize(n);
    for (size_t i = 0; i < n; ++i) {
        double gap = f.oscillatory ? lambda - f.v2[i] : f.v2[i] - lambda;
        if (!(gap > 0.0))
            throw HypothesisError(fmt("build_wkb_frame: turning point at x = %.6g "
                                      "(V2 - lambda changes sign inside the window)",
                                      grid.x(i)));
        f.eta_rate[i] = std::sqrt(gap);
    }

    std::vector<double> pre = cumtrap(grid.h, f.eta_rate);
    f.eta.resize(n);
    for (size_t i = 0; i < n; ++i) f.eta[i] = pre[i] - pre[s0i];

    // tail slope: closed form when the rule carries one, else second-order
    // differences of the evaluated tail (all points, for consistency)
    std::vector<double> dv2(n);
    bool closed = true;
    for (size_t i = 0; i < n && closed; ++i) {
        auto d = V2.derivative(grid.x(i));
        if (d)
            dv2[i] = *d;
        else
            closed = false;
    }
    if (!closed) {
        double h2 = 2.0 * grid.h;
        dv2[0] = (-3.0 * f.v2[0] + 4.0 * f.v2[1] - f.v2[2]) / h2;
        for (size_t i = 1; i + 1 < n; ++i) dv2[i] = (f.v2[i + 1] - f.v2[i - 1]) / h2;
        dv2[n - 1] = (3.0 * f.v2[n - 1] - 4.0 * f.v2[n - 2] + f.v2[n - 3]) / h2;
    }

    f.chi.resize(n);
    f.q_plus.resize(n);
    f.q_minus.resize(n);
    f.w.resize(n);
    f.pot_total.resize(n);
    for (size_t i = 0; i < n; ++i) {
        f.chi[i] = dv2[i] / (2.0 * f.eta_rate[i]);
        if (f.oscillatory) {
            double q = std::hypot(f.v1[i], f.chi[i]);
            f.q_plus[i] = q;
            f.q_minus[i] = q;
        } else {
            f.q_plus[i] = f.v1[i] - f.chi[i];
            f.q_minus[i] = f.v1[i] + f.chi[i];
        }
        f.w[i] = 2.0 * f.eta_rate[i];
        f.pot_total[i] = f.v1[i] + f.v2[i];
    }

    std::vector<double> aq(n);
    for (size_t i = 0; i < n; ++i) aq[i] = std::fabs(f.q_plus[i]);
    f.q_plus_l1 = trapezoid(grid.h, aq);
    for (size_t i = 0; i < n; ++i) aq[i] = std::fabs(f.q_minus[i]);
    f.q_minus_l1 = trapezoid(grid.h, aq);
    return f;
}

CoefficientMatrix build_general_A(const WkbFrame& f) {
    if (f.oscillatory)
        throw std::invalid_argument(
            "build_general_A: the first-order form is real only below the tail energy");
    const size_t n = f.grid.npoints;
    if (2.0 * f.eta[n - 1] >= 700.0)
        throw HypothesisError(fmt("build_general_A: frame amplitude e^{2 eta} overflows at the "
                                  "horizon (2 eta = %.4g); shorten the window or use the "
                                  "corrected route",
                                  2.0 * f.eta[n - 1]));
    CoefficientMatrix A;
    A.grid = f.grid;
    A.lambda = f.lambda;
    A.rank_one = false;
    A.pot_total = f.pot_total;
    A.a11.resize(n);
    A.a12.resize(n);
    A.a21.resize(n);
    A.a22.resize(n);
    for (size_t i = 0; i < n; ++i) {
        double e2 = std::exp(2.0 * f.eta[i]);
        A.a11[i] = -f.q_minus[i] / f.w[i];
        A.a12[i] = -f.q_plus[i] * e2 / f.w[i];
        A.a21[i] = f.q_minus[i] / (e2 * f.w[i]);
        A.a22[i] = f.q_plus[i] / f.w[i];
    }
    return A;
}

WeightPair wkb_weights(const WkbFrame& f) {
    if (f.oscillatory)
        throw std::invalid_argument("wkb_weights: the oscillatory route runs unweighted");
    const size_t n = f.grid.npoints;
    if (2.0 * f.eta[n - 1] >= 700.0)
        throw HypothesisError(fmt("wkb_weights: e^{2 eta} overflows at the horizon "
                                  "(2 eta = %.4g); shorten the window or use the corrected route",
                                  2.0 * f.eta[n - 1]));
    WeightPair w;
    w.grid = f.grid;
    w.f_plus.resize(n);
    w.f_minus.resize(n);
    for (size_t i = 0; i < n; ++i) {
        w.f_plus[i] = std::exp(2.0 * f.eta[i]);
        w.f_minus[i] = std::exp(-2.0 * f.eta[i]);
    }
    return w;
}

namespace {

// scaled equation residual, same convention as the series reconstruction
double residual_sup_of(const std::vector<double>& psi, const WkbFrame& f) {
    std::vector<double> r = continuum_residual(psi, f.pot_total, f.lambda, f.grid.h);
    double worst = 0.0;
    for (size_t i = 0; i < psi.size(); ++i)
        worst = std::max(worst, std::fabs(r[i]) / (1.0 + std::fabs(psi[i])));
    return worst;
}

WkbBranch exponential_branch(const WkbFrame& f, const CoefficientMatrix& A, const WeightPair& wt,
                             Branch branch, const SeriesOptions& opts,
                             const std::vector<size_t>& idx) {
    SeriesSolution s = series_solve(A, wt, branch, opts);
    const size_t n = f.grid.npoints;
    WkbBranch b;
    b.branch = branch;
    b.u1 = std::move(s.u1);
    b.u2 = std::move(s.u2);
    b.iterations = s.iterations;
    b.iter_sup = std::move(s.iter_sup);
    b.x0_index = s.x0_index;
    b.tail_at_x0 = s.tail_at_x0;

    b.psi.resize(n);
    b.dpsi.resize(n);
    for (size_t i = 0; i < n; ++i) {
        double pm = std::exp(-f.eta[i]), pp = std::exp(f.eta[i]);
        b.psi[i] = b.u1[i] * pm + b.u2[i] * pp;
        b.dpsi[i] = f.eta_rate[i] * (-b.u1[i] * pm + b.u2[i] * pp);
    }
    b.residual_sup = residual_sup_of(b.psi, f);

    b.ratio.resize(idx.size());
    b.dratio.resize(idx.size());
    for (size_t j = 0; j < idx.size(); ++j) {
        size_t i = idx[j];
        double e2 = std::exp(2.0 * f.eta[i]);
        if (branch == Branch::u_minus) {
            b.ratio[j] = b.u1[i] + b.u2[i] * e2;   // psi / phi_-
            b.dratio[j] = b.u1[i] - b.u2[i] * e2;  // psi' / phi_-'
        } else {
            b.ratio[j] = b.u1[i] / e2 + b.u2[i];
            b.dratio[j] = -b.u1[i] / e2 + b.u2[i];
        }
    }
    b.ratio_limit = b.ratio.back();
    b.dratio_limit = b.dratio.back();
    b.ratio_drift = trailing_drift(idx, b.ratio, n - 1, b.ratio_limit);
    return b;
}

WkbBranch oscillatory_branch(const WkbFrame& f, Branch branch, const SeriesOptions& opts,
                             const std::vector<size_t>& idx) {
    using C = std::complex<double>;
    const size_t n = f.grid.npoints;
    const double h = f.grid.h;

    // complex entries of the first-order system; Q_+- = V1 +- i chi, w = 2 i eta'
    std::vector<C> a11(n), a12(n), a21(n), a22(n);
    for (size_t i = 0; i < n; ++i) {
        C qp(f.v1[i], f.chi[i]), qm(f.v1[i], -f.chi[i]);
        C iw = C(0.0, -0.5) / f.eta_rate[i];  // 1 / (2 i eta')
        C e2 = std::polar(1.0, 2.0 * f.eta[i]);
        a11[i] = -qm * iw;
        a12[i] = -qp * e2 * iw;
        a21[i] = qm * iw / e2;
        a22[i] = qp * iw;
    }

    // tail iteration from the horizon; Volterra, so the terms decay
    // factorially once past the envelope integral
    std::vector<C> t1(n), t2(n), u1(n), u2(n);
    C seed1 = branch == Branch::u_minus ? 1.0 : 0.0;
    C seed2 = branch == Branch::u_minus ? 0.0 : 1.0;
    std::fill(t1.begin(), t1.end(), seed1);
    std::fill(t2.begin(), t2.end(), seed2);
    u1 = t1;
    u2 = t2;

    WkbBranch b;
    b.branch = branch;
    b.iter_sup.push_back(1.0);
    bool converged = false;
    std::vector<C> i1(n), i2(n);
    for (int k = 1; k <= opts.max_iterations; ++k) {
        for (size_t i = 0; i < n; ++i) {
            i1[i] = a11[i] * t1[i] + a12[i] * t2[i];
            i2[i] = a21[i] * t1[i] + a22[i] * t2[i];
        }
        C s1 = 0.0, s2 = 0.0;
        for (size_t i = n - 1; i-- > 0;) {
            s1 += 0.5 * h * (i1[i] + i1[i + 1]);
            s2 += 0.5 * h * (i2[i] + i2[i + 1]);
            t1[i] = -s1;
            t2[i] = -s2;
        }
        t1[n - 1] = 0.0;
        t2[n - 1] = 0.0;
        double sup = 0.0;
        for (size_t i = 0; i < n; ++i) {
            u1[i] += t1[i];
            u2[i] += t2[i];
            sup = std::max(sup, std::max(std::abs(t1[i]), std::abs(t2[i])));
        }
        b.iterations = k;
        b.iter_sup.push_back(sup);
        if (!std::isfinite(sup) || sup > 1e12)
            throw HypothesisError("wkb_solve: the oscillatory tail iteration is blowing up");
        if (sup < opts.stop_sup) {
            converged = true;
            break;
        }
    }
    if (!converged)
        throw HypothesisError(fmt("wkb_solve: the oscillatory tail iteration did not converge "
                                  "(last term sup %.3g)",
                                  b.iter_sup.back()));

    b.u1.resize(n);
    b.u2.resize(n);
    b.psi.resize(n);
    b.dpsi.resize(n);
    std::vector<double> re(n), im(n);
    std::vector<C> psi(n);
    for (size_t i = 0; i < n; ++i) {
        C em = std::polar(1.0, -f.eta[i]), ep = std::polar(1.0, f.eta[i]);
        psi[i] = u1[i] * em + u2[i] * ep;
        C dpsi = C(0.0, f.eta_rate[i]) * (-u1[i] * em + u2[i] * ep);
        b.u1[i] = std::abs(u1[i]);
        b.u2[i] = std::abs(u2[i]);
        b.psi[i] = std::abs(psi[i]);
        b.dpsi[i] = std::abs(dpsi);
        re[i] = psi[i].real();
        im[i] = psi[i].imag();
    }
    // both real slices solve the equation; scale against the complex modulus
    std::vector<double> rr = continuum_residual(re, f.pot_total, f.lambda, h);
    std::vector<double> ri = continuum_residual(im, f.pot_total, f.lambda, h);
    double worst = 0.0;
    for (size_t i = 0; i < n; ++i)
        worst = std::max(worst, std::hypot(rr[i], ri[i]) / (1.0 + b.psi[i]));
    b.residual_sup = worst;

    b.ratio.resize(idx.size());
    b.dratio.resize(idx.size());
    for (size_t j = 0; j < idx.size(); ++j) {
        size_t i = idx[j];
        C e2 = std::polar(1.0, 2.0 * f.eta[i]);
        if (branch == Branch::u_minus) {
            b.ratio[j] = std::abs(u1[i] + u2[i] * e2);
            b.dratio[j] = std::abs(u1[i] - u2[i] * e2);
        } else {
            b.ratio[j] = std::abs(u1[i] / e2 + u2[i]);
            b.dratio[j] = std::abs(-u1[i] / e2 + u2[i]);
        }
    }
    b.ratio_limit = b.ratio.back();
    b.dratio_limit = b.dratio.back();
    b.ratio_drift = trailing_drift(idx, b.ratio, n - 1, b.ratio_limit);
    return b;
}

}  // namespace

WkbSolution wkb_solve(const PotentialSpec& V1, const PotentialSpec& V2, double lambda,
                      const Grid& grid, const SeriesOptions& opts) {
    WkbSolution sol;
    sol.frame = build_wkb_frame(V1, V2, lambda, grid);
    const size_t n = grid.npoints;
    sol.idx = trace_indices(n - 1);

    if (!sol.frame.oscillatory) {
        CoefficientMatrix A = build_general_A(sol.frame);
        WeightPair wt = build_G(A, wkb_weights(sol.frame));
        sol.contraction = wt.tail[0];
        sol.minus = exponential_branch(sol.frame, A, wt, Branch::u_minus, opts, sol.idx);
        sol.plus = exponential_branch(sol.frame, A, wt, Branch::u_plus, opts, sol.idx);
    } else {
        std::vector<double> env(n);
        for (size_t i = 0; i < n; ++i)
            env[i] = (std::fabs(sol.frame.q_plus[i]) + std::fabs(sol.frame.q_minus[i])) /
                     sol.frame.w[i];
        sol.contraction = trapezoid(grid.h, env);
        sol.minus = oscillatory_branch(sol.frame, Branch::u_minus, opts, sol.idx);
        sol.plus = oscillatory_branch(sol.frame, Branch::u_plus, opts, sol.idx);
        sol.minus.tail_at_x0 = sol.contraction;
        sol.plus.tail_at_x0 = sol.contraction;
    }
    return sol;
}

double CorrectedFrame::eta_plus(size_t i) const { return std::exp(frame.eta[i]) * corr_plus[i]; }
double CorrectedFrame::eta_minus(size_t i) const { return std::exp(-frame.eta[i]) * corr_minus[i]; }

CorrectedSolution corrected_asymptotics(const PotentialSpec& V1, const PotentialSpec& V2,
                                        double lambda, const Grid& grid,
                                        const SeriesOptions& opts) {
    if (lambda >= 0.0)
        throw std::invalid_argument("corrected_asymptotics: needs an energy below the tail; "
                                    "above it the correction integrals need not settle");

    CorrectedSolution out;
    CorrectedFrame& cf = out.corrected;
    cf.frame = build_wkb_frame(V1, V2, lambda, grid);
    const WkbFrame& f = cf.frame;
    const size_t n = grid.npoints;
    const double h = grid.h;

    // correction exponents P_+- = integral_0^x Q_+- / (2 eta') and the
    // two-sided kernel exponent g = 2 eta + P_+ + P_-
    std::vector<double> integ(n);
    for (size_t i = 0; i < n; ++i) integ[i] = f.q_plus[i] / f.w[i];
    std::vector<double> pp = cumtrap(h, integ);
    for (size_t i = 0; i < n; ++i) integ[i] = f.q_minus[i] / f.w[i];
    std::vector<double> pm = cumtrap(h, integ);

    cf.corr_plus.resize(n);
    cf.corr_minus.resize(n);
    cf.g.resize(n);
    for (size_t i = 0; i < n; ++i) {
        cf.corr_plus[i] = std::exp(pp[i]);
        cf.corr_minus[i] = std::exp(-pm[i]);
        cf.g[i] = 2.0 * f.eta[i] + pp[i] + pm[i];
    }
    double gmax = *std::max_element(cf.g.begin(), cf.g.end());
    if (gmax >= 700.0)
        throw HypothesisError(fmt("corrected_asymptotics: kernel exponent tops out at %.4g; "
                                  "the window is too long to represent e^g",
                                  gmax));

    // a-priori envelope: |ln corr_+-| <= ||Q_+-||_2 sup(1/w) sqrt(x)
    double sup_inv_w = 0.0;
    for (size_t i = 0; i < n; ++i) sup_inv_w = std::max(sup_inv_w, 1.0 / f.w[i]);
    for (size_t i = 0; i < n; ++i) integ[i] = f.q_plus[i] * f.q_plus[i];
    double l2p = std::sqrt(trapezoid(h, integ));
    for (size_t i = 0; i < n; ++i) integ[i] = f.q_minus[i] * f.q_minus[i];
    double l2m = std::sqrt(trapezoid(h, integ));
    cf.envelope_c = std::max(l2p, l2m) * sup_inv_w;
    cf.envelope_sup = 0.0;
    for (size_t i = 1; i < n; ++i)
        cf.envelope_sup = std::max(
            cf.envelope_sup, std::max(std::fabs(pp[i]), std::fabs(pm[i])) / std::sqrt(grid.x(i)));
    cf.envelope_ok = cf.envelope_sup <= cf.envelope_c + 1e-9;

    cf.bigger_inf = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < n; ++i)
        cf.bigger_inf = std::min(cf.bigger_inf, f.phi_plus(i) * f.phi_minus(i));

    // kernel rows: K(x, y) = e^{g(x) - g(y)} for y >= x.  sup via the suffix
    // minimum; the offset integral is scanned until the rows fall 14 orders,
    // then closed by the fitted decay rate
    std::vector<double> suffmin(n);
    suffmin[n - 1] = cf.g[n - 1];
    for (size_t i = n - 1; i-- > 0;) suffmin[i] = std::min(cf.g[i], suffmin[i + 1]);
    double dip = 0.0;
    for (size_t i = 0; i < n; ++i) dip = std::max(dip, cf.g[i] - suffmin[i]);
    cf.kernel_sup = std::exp(dip);

    std::vector<double> mk{0.0};
    for (size_t k = 1; k < n; ++k) {
        double m = -std::numeric_limits<double>::infinity();
        for (size_t i = 0; i + k < n; ++i) m = std::max(m, cf.g[i] - cf.g[i + k]);
        mk.push_back(m);
        if (m < -32.2) break;
    }
    std::vector<double> ik(mk.size());
    for (size_t k = 0; k < mk.size(); ++k) ik[k] = std::exp(mk[k]);
    double integral = trapezoid(h, ik);
    size_t fit_lo = mk.size() - std::min(mk.size() - 1, std::max<size_t>(8, mk.size() / 4));
    std::vector<double> fy, fm;
    for (size_t k = fit_lo; k < mk.size(); ++k) {
        fy.push_back(h * static_cast<double>(k));
        fm.push_back(mk[k]);
    }
    double slope = fy.size() >= 2 ? fit_line(fy, fm).slope : 0.0;
    if (slope < 0.0)
        cf.kernel_tail_bound = std::exp(mk.back()) / (-slope);
    else if (mk.back() < -30.0)
        cf.kernel_tail_bound = std::exp(mk.back()) * grid.horizon();
    else
        throw HypothesisError("corrected_asymptotics: kernel rows do not decay across the window");
    cf.kernel_integral = integral + cf.kernel_tail_bound;

    // z system for the decaying solution, seeded (1, 0) at the horizon;
    // iter_sup weighs z2 by e^g so both components are read at unit scale
    std::vector<double> bb(n), cc(n);
    for (size_t i = 0; i < n; ++i) {
        bb[i] = -(f.q_plus[i] / f.w[i]) * std::exp(cf.g[i]);
        cc[i] = (f.q_minus[i] / f.w[i]) * std::exp(-cf.g[i]);
        if (!std::isfinite(bb[i]))
            throw HypothesisError("corrected_asymptotics: the z system overflows inside the window");
    }
    std::vector<double> t1(n, 1.0), t2(n, 0.0);
    out.z1 = t1;
    out.z2 = t2;
    out.iter_sup.push_back(1.0);
    bool converged = false;
    for (int k = 1; k <= opts.max_iterations; ++k) {
        double s1 = 0.0, s2 = 0.0, prev1 = bb[n - 1] * t2[n - 1], prev2 = cc[n - 1] * t1[n - 1];
        t1[n - 1] = 0.0;
        t2[n - 1] = 0.0;
        for (size_t i = n - 1; i-- > 0;) {
            double cur1 = bb[i] * t2[i], cur2 = cc[i] * t1[i];
            s1 += 0.5 * h * (cur1 + prev1);
            s2 += 0.5 * h * (cur2 + prev2);
            prev1 = cur1;
            prev2 = cur2;
            t1[i] = -s1;
            t2[i] = -s2;
        }
        double sup = 0.0;
        for (size_t i = 0; i < n; ++i) {
            out.z1[i] += t1[i];
            out.z2[i] += t2[i];
            double w2 = t2[i] == 0.0 ? 0.0 : std::exp(cf.g[i] + std::log(std::fabs(t2[i])));
            sup = std::max(sup, std::max(std::fabs(t1[i]), w2));
        }
        out.iterations = k;
        out.iter_sup.push_back(sup);
        if (!std::isfinite(sup) || sup > 1e12)
            throw HypothesisError("corrected_asymptotics: the tail iteration is blowing up; "
                                  "the kernel hypotheses look violated");
        if (sup < opts.stop_sup) {
            converged = true;
            break;
        }
    }
    if (!converged)
        throw HypothesisError(fmt("corrected_asymptotics: the tail iteration did not converge "
                                  "(last term sup %.3g)",
                                  out.iter_sup.back()));

    // checkpoints rounded down to even indices so the forward companion,
    // integrated in double strides, is sampled at the same rows
    out.idx = trace_indices(n - 1);
    for (size_t& i : out.idx) i &= ~size_t(1);
    out.idx.erase(std::unique(out.idx.begin(), out.idx.end()), out.idx.end());
    if (out.idx.front() == 0) out.idx.erase(out.idx.begin());

    out.ratio_minus.resize(out.idx.size());
    for (size_t j = 0; j < out.idx.size(); ++j) {
        size_t i = out.idx[j];
        out.ratio_minus[j] = out.z1[i] + out.z2[i] * std::exp(cf.g[i]);
    }
    out.ratio_minus_drift = trailing_drift(out.idx, out.ratio_minus, n - 1, 1.0);

    // limit read-out: full-resolution mean and envelope over the trailing
    // tenth, so an oscillatory U is sampled phase-fair
    {
        size_t lo = (n - 1) - (n - 1) / 10;
        double acc = 0.0, env = 0.0;
        for (size_t i = lo; i < n; ++i) {
            double r = out.z1[i] + out.z2[i] * std::exp(cf.g[i]);
            acc += r;
            env = std::max(env, std::fabs(r - 1.0));
        }
        out.ratio_minus_mean = acc / static_cast<double>(n - lo);
        out.ratio_minus_envelope = env;
    }

    // growing companion, forward in double strides, normalized at the far end
    size_t last_even = (n - 1) & ~size_t(1);
    std::vector<double> p1(last_even / 2 + 1), p2(last_even / 2 + 1);
    p1[0] = 0.0;
    p2[0] = 1.0;
    double z1v = 0.0, z2v = 1.0;
    for (size_t i = 0; i + 2 <= last_even; i += 2) {
        auto deriv = [&](size_t k, double a, double b2) {
            return std::pair<double, double>(bb[k] * b2, cc[k] * a);
        };
        auto [k11, k12] = deriv(i, z1v, z2v);
        auto [k21, k22] = deriv(i + 1, z1v + h * k11, z2v + h * k12);
        auto [k31, k32] = deriv(i + 1, z1v + h * k21, z2v + h * k22);
        auto [k41, k42] = deriv(i + 2, z1v + 2.0 * h * k31, z2v + 2.0 * h * k32);
        z1v += (h / 3.0) * (k11 + 2.0 * k21 + 2.0 * k31 + k41);
        z2v += (h / 3.0) * (k12 + 2.0 * k22 + 2.0 * k32 + k42);
        p1[i / 2 + 1] = z1v;
        p2[i / 2 + 1] = z2v;
    }
    if (p2.back() == 0.0 || !std::isfinite(p2.back()) || !std::isfinite(p1.back()))
        throw HypothesisError("corrected_asymptotics: the forward companion degenerated");
    out.ratio_plus.resize(out.idx.size());
    for (size_t j = 0; j < out.idx.size(); ++j) {
        size_t i = std::min(out.idx[j], last_even);
        out.ratio_plus[j] =
            (p1[i / 2] / p2.back()) * std::exp(-cf.g[i]) + p2[i / 2] / p2.back();
    }
    out.ratio_plus_drift = trailing_drift(out.idx, out.ratio_plus, n - 1, 1.0);
    {
        size_t lo = (last_even - last_even / 10) & ~size_t(1);
        double acc = 0.0;
        size_t cnt = 0;
        for (size_t i = lo; i <= last_even; i += 2) {
            acc += (p1[i / 2] / p2.back()) * std::exp(-cf.g[i]) + p2[i / 2] / p2.back();
            ++cnt;
        }
        out.ratio_plus_mean = acc / static_cast<double>(cnt);
    }
    return out;
}

void wkb_to_csv(const WkbSolution& sol, const std::string& path) {
    std::FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw std::runtime_error("wkb_to_csv: cannot open " + path);
    const WkbFrame& f = sol.frame;
    const char* suffix = f.oscillatory ? "_abs" : "";
    std::fprintf(fp,
                 "x,eta,phi_minus%s,phi_plus%s,psi_minus%s,dpsi_minus%s,ratio_minus%s,"
                 "dratio_minus%s,psi_plus%s,dpsi_plus%s,ratio_plus%s,dratio_plus%s\n",
                 suffix, suffix, suffix, suffix, suffix, suffix, suffix, suffix, suffix, suffix);
    for (size_t j = 0; j < sol.idx.size(); ++j) {
        size_t i = sol.idx[j];
        double pm = f.oscillatory ? 1.0 : f.phi_minus(i);
        double pp = f.oscillatory ? 1.0 : f.phi_plus(i);
        std::fprintf(fp, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                     f.grid.x(i), f.eta[i], pm, pp, sol.minus.psi[i], sol.minus.dpsi[i],
                     sol.minus.ratio[j], sol.minus.dratio[j], sol.plus.psi[i], sol.plus.dpsi[i],
                     sol.plus.ratio[j], sol.plus.dratio[j]);
    }
    std::fclose(fp);
}

void corrected_to_csv(const CorrectedSolution& sol, const std::string& path) {
    std::FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw std::runtime_error("corrected_to_csv: cannot open " + path);
    const CorrectedFrame& cf = sol.corrected;
    std::fprintf(fp,
                 "x,g,corr_minus,corr_plus,eta_minus,eta_plus,z1,z2,ratio_minus,ratio_plus\n");
    for (size_t j = 0; j < sol.idx.size(); ++j) {
        size_t i = sol.idx[j];
        std::fprintf(fp, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                     cf.frame.grid.x(i), cf.g[i], cf.corr_minus[i], cf.corr_plus[i],
                     cf.eta_minus(i), cf.eta_plus(i), sol.z1[i], sol.z2[i], sol.ratio_minus[j],
                     sol.ratio_plus[j]);
    }
    std::fclose(fp);
}

}  // namespace halfline
