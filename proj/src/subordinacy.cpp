#include "halfline/subordinacy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "halfline/util.hpp"

namespace halfline {

namespace {

constexpr double GOLD = 0.6180339887498948482045868343656381177;

double wrap_angle(double t) {
    double w = std::fmod(t, PI);
    if (w < 0.0) w += PI;
    return w;
}

// fraction of the squared truncated norm accumulated past the half-horizon
double tail_fraction(const SolutionPair& pair, int column) {
    double H = pair.grid.horizon();
    double lh = pair.lognorm(column, 0.5 * H);
    double lf = pair.lognorm(column, H);
    return -std::expm1(2.0 * (lh - lf));
}

// slope of `vals` against ln L over the trailing window L >= sqrt(horizon)
double trailing_slope(const std::vector<double>& L_grid, const std::vector<double>& vals, double horizon) {
    double lo = std::sqrt(horizon);
    std::vector<double> x, y;
    for (size_t i = 0; i < L_grid.size(); ++i) {
        if (L_grid[i] < lo) continue;
        if (!std::isfinite(vals[i])) continue;
        x.push_back(std::log(L_grid[i]));
        y.push_back(vals[i]);
    }
    if (x.size() < 3) return 0.0;
    return fit_line(x, y).slope;
}

} // namespace

std::string to_string(Classification c) {
    switch (c) {
        case Classification::P: return "P";
        case Classification::S: return "S";
        case Classification::L: return "L";
        case Classification::undecided: return "undecided";
    }
    return "undecided";
}

std::string to_string(SPart s) {
    switch (s) {
        case SPart::Spp: return "S++";
        case SPart::Smm: return "S--";
        case SPart::Sp: return "S+";
        case SPart::Sm: return "S-";
        case SPart::undecided: return "undecided";
    }
    return "undecided";
}

double dimension_B(double alpha) {
    if (alpha < 0.0 || alpha > 1.0) throw std::domain_error("dimension_B: argument outside [0,1]");
    return alpha / (2.0 - alpha);
}

double dimension_A(double beta) {
    if (beta < 0.0 || beta > 1.0) throw std::domain_error("dimension_A: argument outside [0,1]");
    return 2.0 * beta / (1.0 + beta);
}

std::vector<ThetaSearchResult> golden_angle_search(const BatchAngleObjective& f, size_t members,
                                                   int scan_points, int iterations) {
    if (members == 0) throw std::invalid_argument("golden_angle_search: no members");
    if (scan_points < 4) throw std::invalid_argument("golden_angle_search: scan too coarse");

    auto eval = [&](std::vector<double> thetas) {
        for (auto& t : thetas) t = wrap_angle(t);
        std::vector<double> v = f(thetas);
        if (v.size() != members)
            throw std::invalid_argument("golden_angle_search: objective size mismatch");
        return v;
    };

    // coarse scan seeds one bracket per member
    std::vector<double> best_val(members, std::numeric_limits<double>::infinity());
    std::vector<double> best_theta(members, 0.0);
    std::vector<double> scan_min(members, std::numeric_limits<double>::infinity());
    double step = PI / static_cast<double>(scan_points);
    for (int j = 0; j < scan_points; ++j) {
        double t = step * static_cast<double>(j);
        std::vector<double> v = eval(std::vector<double>(members, t));
        for (size_t m = 0; m < members; ++m) {
            scan_min[m] = std::min(scan_min[m], v[m]);
            if (v[m] < best_val[m]) {
                best_val[m] = v[m];
                best_theta[m] = t;
            }
        }
    }

    std::vector<double> a(members), b(members), c(members), d(members);
    for (size_t m = 0; m < members; ++m) {
        a[m] = best_theta[m] - step;
        b[m] = best_theta[m] + step;
        c[m] = b[m] - GOLD * (b[m] - a[m]);
        d[m] = a[m] + GOLD * (b[m] - a[m]);
    }
    std::vector<double> fc = eval(c), fd = eval(d);

    for (int it = 0; it < iterations; ++it) {
        std::vector<double> probe(members);
        std::vector<bool> left(members);
        for (size_t m = 0; m < members; ++m) {
            if (fc[m] < fd[m]) {
                b[m] = d[m];
                d[m] = c[m];
                fd[m] = fc[m];
                c[m] = b[m] - GOLD * (b[m] - a[m]);
                probe[m] = c[m];
                left[m] = true;
            } else {
                a[m] = c[m];
                c[m] = d[m];
                fc[m] = fd[m];
                d[m] = a[m] + GOLD * (b[m] - a[m]);
                probe[m] = d[m];
                left[m] = false;
            }
        }
        std::vector<double> fv = eval(probe);
        for (size_t m = 0; m < members; ++m) {
            if (left[m]) fc[m] = fv[m];
            else fd[m] = fv[m];
        }
    }

    std::vector<ThetaSearchResult> out(members);
    for (size_t m = 0; m < members; ++m) {
        ThetaSearchResult r;
        r.theta = wrap_angle(0.5 * (a[m] + b[m]));
        r.log_ratio = std::min(fc[m], fd[m]);
        r.scan_min_log_ratio = std::min(scan_min[m], r.log_ratio);
        r.converged = (b[m] - a[m]) < 1e-6;
        out[m] = r;
    }
    return out;
}

namespace {

ThetaSearchResult search_single(const PotentialSpec& V, double lambda, const Grid& grid,
                                const SubordinacyOptions& opts) {
    std::vector<size_t> cp{grid.npoints - 1};
    auto f = [&](const std::vector<double>& th) {
        std::vector<double> out(th.size());
        for (size_t i = 0; i < th.size(); ++i) {
            PairProbe pr = probe_pair(V, lambda, BoundaryCondition{th[i]}, grid, cp);
            out[i] = pr.lognorm1[0] - pr.lognorm2[0];
        }
        return out;
    };
    return golden_angle_search(f, 1, opts.scan_points, opts.golden_iterations)[0];
}

} // namespace

ThetaSearchResult find_theta_star(const PotentialSpec& V, double lambda, const Grid& grid,
                                  const SubordinacyOptions& opts) {
    ThetaSearchResult r = search_single(V, lambda, grid, opts);
    if (r.log_ratio > std::log(opts.absent_ratio)) r.theta.reset();
    return r;
}

namespace {

struct GramEigen {
    double e = 0.0; // shared binary exponent of the rescaled entries
    double a = 0.0, b = 0.0, c = 0.0;
    double lmin = 0.0, lmax = 0.0;
};

GramEigen eigen_of(double ln_norm1_sq, ScaledValue cross, double ln_norm2_sq, const char* who) {
    if (!std::isfinite(ln_norm1_sq) || !std::isfinite(ln_norm2_sq))
        throw std::invalid_argument(std::string(who) + ": empty norm window");
    GramEigen g;
    // common binary exponent keeps all three entries representable
    g.e = std::max(ln_norm1_sq, ln_norm2_sq) / LN2;
    if (!cross.zero() && static_cast<double>(cross.e2) > g.e) g.e = static_cast<double>(cross.e2);
    g.a = std::exp(ln_norm1_sq - g.e * LN2);
    g.c = std::exp(ln_norm2_sq - g.e * LN2);
    g.b = cross.zero() ? 0.0 : cross.m * std::exp2(static_cast<double>(cross.e2) - g.e);

    double mean = 0.5 * (g.a + g.c);
    double half = std::hypot(0.5 * (g.a - g.c), g.b);
    g.lmax = mean + half;
    g.lmin = mean - half;
    // below lmax * 1e-15 the subtraction yields cancellation noise, so the
    // small eigenvalue saturates at the double-precision Gram resolution
    double floor_ = g.lmax * 1e-15;
    if (!(g.lmin > floor_)) g.lmin = floor_;
    return g;
}

} // namespace

GramAngle gram_angle(double ln_norm1_sq, ScaledValue cross, double ln_norm2_sq) {
    GramEigen ge = eigen_of(ln_norm1_sq, cross, ln_norm2_sq, "gram_angle");
    GramAngle g;
    g.log_ratio = 0.5 * (std::log(ge.lmin) - std::log(ge.lmax));
    // the quadratic form along (cos d, sin d) is mean + half*cos(2d - p0),
    // p0 = atan2(2b, a - c): maximal at d = p0/2, minimal a quarter turn away
    g.delta_min = wrap_angle(0.5 * std::atan2(2.0 * ge.b, ge.a - ge.c) + 0.5 * PI);
    return g;
}

GramNorms gram_norms(double ln_norm1_sq, ScaledValue cross, double ln_norm2_sq) {
    GramEigen ge = eigen_of(ln_norm1_sq, cross, ln_norm2_sq, "gram_norms");
    GramNorms n;
    n.ln_norm_min = 0.5 * (std::log(ge.lmin) + ge.e * LN2);
    n.ln_norm_max = 0.5 * (std::log(ge.lmax) + ge.e * LN2);
    n.log_ratio = n.ln_norm_min - n.ln_norm_max;
    return n;
}

std::vector<ThetaCurvePoint> theta_star_curve(const SolutionPair& pair,
                                              const std::vector<size_t>& idx) {
    std::vector<ThetaCurvePoint> out;
    out.reserve(idx.size());
    for (size_t i : idx) {
        if (i >= pair.size()) throw std::invalid_argument("theta_star_curve: index beyond grid");
        GramAngle g = gram_angle(pair.ln1sq[i], pair.cross(i), pair.ln2sq[i]);
        out.push_back({pair.grid.x(i), wrap_angle(pair.bc.theta + g.delta_min), g.log_ratio});
    }
    return out;
}

double extrapolate_theta(double t16, double t4, double t1) {
    auto wd = [](double d) { // difference of angles mod pi, in (-pi/2, pi/2]
        double w = std::fmod(d, PI);
        if (w > 0.5 * PI) w -= PI;
        if (w <= -0.5 * PI) w += PI;
        return w;
    };
    double d1 = wd(t4 - t16);
    double d2 = wd(t1 - t4);
    if (std::fabs(d2) < 1e-13) return wrap_angle(t1); // drift below resolution
    double rho = d1 / d2; // contraction of the drift per 4x length
    if (!(rho > 1.2)) return wrap_angle(t1);          // noisy or non-contracting
    return wrap_angle(t1 + d2 / (rho - 1.0));
}

EnsembleThetaResult find_theta_star_ensemble(const EnsembleTables& tables, double lambda,
                                             const std::vector<uint64_t>& seeds, Backend backend,
                                             const SubordinacyOptions& opts) {
    (void)opts;
    const size_t M = seeds.size();
    if (M == 0) throw std::invalid_argument("find_theta_star_ensemble: no members");
    std::vector<LaneSpec> members(M);
    for (size_t m = 0; m < M; ++m) members[m] = LaneSpec{lambda, 0.0, seeds[m]};

    // one pass: Gram angles at three scales per member, drift extrapolated
    size_t n = tables.nmax;
    std::vector<size_t> cps = n >= 256 ? std::vector<size_t>{n / 16, n / 4, n}
                                       : std::vector<size_t>{n};
    PairEnsembleResult res = run_ensemble_pairs(tables, members, cps, backend);

    EnsembleThetaResult out;
    for (size_t m = 0; m < M; ++m) {
        const PairTrace& tr = res.members[m];
        std::vector<double> th(cps.size());
        double lr = 0.0;
        for (size_t j = 0; j < cps.size(); ++j) {
            GramAngle g = gram_angle(2.0 * tr.lognorm1[j],
                                     ScaledValue{tr.cross_m[j], tr.cross_e2[j]},
                                     2.0 * tr.lognorm2[j]);
            th[j] = wrap_angle(g.delta_min); // base angle of the pass is 0
            lr = g.log_ratio;
        }
        out.theta.push_back(cps.size() == 3 ? extrapolate_theta(th[0], th[1], th[2]) : th.back());
        out.log_ratio.push_back(lr);
    }
    return out;
}

std::vector<double> default_L_grid(const Grid& grid, size_t per_decade) {
    size_t lo = 1;
    if (grid.kind == Kind::continuum)
        lo = static_cast<size_t>(std::ceil(1.0 / grid.h));
    std::vector<size_t> idx = geometric_indices(lo, grid.npoints - 1, per_decade);
    std::vector<double> L;
    L.reserve(idx.size());
    for (size_t i : idx) L.push_back(grid.x(i));
    return L;
}

BetaEstimate beta_estimate(const SolutionPair& pair, const SubordinacyOptions& opts) {
    double H = pair.grid.horizon();
    if (tail_fraction(pair, 1) < opts.cauchy_tail)
        throw HypothesisError("beta_estimate: the subordinate column is square-summable; classify P");

    std::vector<double> L_grid = default_L_grid(pair.grid, opts.per_decade);
    double lo = std::sqrt(H);
    BetaEstimate est;
    double mn = std::numeric_limits<double>::infinity();
    double mx = -std::numeric_limits<double>::infinity();
    for (double L : L_grid) {
        if (L < lo) continue;
        double l2 = pair.lognorm(2, L);
        if (!(l2 > 0.1)) continue; // ratio of logs is meaningless near ln||phi2|| = 0
        double q = pair.lognorm(1, L) / l2;
        mn = std::min(mn, q);
        mx = std::max(mx, q);
        if (est.window_lo == 0.0) est.window_lo = L;
        est.window_hi = L;
    }
    if (!std::isfinite(mn))
        throw HypothesisError("beta_estimate: no usable window (||phi2|| has not grown past 1)");
    est.value = std::clamp(mn, 0.0, 1.0);
    est.halfwidth = 0.5 * (mx - mn);
    return est;
}

BetaEstimate ensemble_beta_estimate(const EnsembleTables& tables, double lambda,
                                    const std::vector<uint64_t>& seeds, Backend backend) {
    if (seeds.empty()) throw std::invalid_argument("ensemble_beta_estimate: no members");
    size_t last = tables.nmax;
    std::vector<size_t> idx = geometric_indices(std::max<size_t>(2, last / 10), last, 32);
    std::vector<LaneSpec> lanes(seeds.size());
    for (size_t m = 0; m < seeds.size(); ++m) lanes[m] = {lambda, 0.0, seeds[m]};
    PairEnsembleResult res = run_ensemble_pairs(tables, lanes, idx, backend);

    std::vector<double> lx(idx.size());
    for (size_t j = 0; j < idx.size(); ++j) lx[j] = std::log(static_cast<double>(idx[j]));

    // slope fit with saturated/non-finite points dropped
    auto slope_of = [&](const std::vector<double>& y) {
        std::vector<double> xs, ys;
        for (size_t j = 0; j < y.size(); ++j)
            if (std::isfinite(y[j])) {
                xs.push_back(lx[j]);
                ys.push_back(y[j]);
            }
        if (xs.size() < 8)
            throw HypothesisError("ensemble_beta_estimate: Gram spectrum saturated over the window");
        return fit_line(xs, ys).slope;
    };

    std::vector<double> smins, smaxs;
    smins.reserve(seeds.size());
    smaxs.reserve(seeds.size());
    std::vector<double> ymin(idx.size()), ymax(idx.size());
    for (size_t m = 0; m < seeds.size(); ++m) {
        const PairTrace& t = res.members[m];
        for (size_t j = 0; j < idx.size(); ++j) {
            GramNorms n = gram_norms(2.0 * t.lognorm1[j], ScaledValue{t.cross_m[j], t.cross_e2[j]},
                                     2.0 * t.lognorm2[j]);
            bool ok = n.log_ratio > GRAM_RESOLVED;
            ymin[j] = ok ? n.ln_norm_min : std::numeric_limits<double>::quiet_NaN();
            ymax[j] = n.ln_norm_max;
        }
        smins.push_back(slope_of(ymin));
        smaxs.push_back(slope_of(ymax));
    }

    // ratio of mean slopes, not mean of ratios: the per-member branch
    // fluctuations are anti-correlated, so mean-of-ratios picks up a Jensen
    // bias of order the squared member scatter; the ratio of means is exact
    // to first order and its spread follows from linearizing around the means
    double mmin = mean_of(smins), mmax = mean_of(smaxs);
    if (mmax < 0.1)
        throw HypothesisError("ensemble_beta_estimate: the dominant branch is not growing");
    double beta = mmin / mmax;
    BetaEstimate est;
    est.value = std::clamp(beta, 0.0, 1.0);
    if (seeds.size() > 1) {
        std::vector<double> d(seeds.size());
        for (size_t m = 0; m < seeds.size(); ++m) d[m] = (smins[m] - beta * smaxs[m]) / mmax;
        est.halfwidth = 2.0 * stderr_of_mean(d);
    }
    est.window_lo = static_cast<double>(idx.front());
    est.window_hi = static_cast<double>(idx.back());
    return est;
}

std::pair<bool, double> regularity_check(const SolutionPair& pair, const SubordinacyOptions& opts) {
    double H = pair.grid.horizon();
    std::vector<double> x, y;
    for (double L : default_L_grid(pair.grid, opts.per_decade)) {
        if (L < 0.1 * H) continue;
        x.push_back(std::log(L));
        y.push_back(pair.lognorm(1, L));
    }
    if (x.size() < 3) throw std::invalid_argument("regularity_check: horizon too short for a trailing decade");
    double slope = fit_line(x, y).slope;
    return {slope <= 0.5 + opts.reg_tol, slope};
}

std::vector<double> log_rbeta_trace(const SolutionPair& pair, double beta,
                                    const std::vector<double>& L_grid) {
    std::vector<double> out;
    out.reserve(L_grid.size());
    for (double L : L_grid)
        out.push_back(pair.lognorm(1, L) - beta * pair.lognorm(2, L));
    return out;
}

SPart partition_S(double beta_hat, double beta0, const std::vector<double>& L_grid,
                  const std::vector<double>& log_rbeta0, double tol) {
    if (beta0 > beta_hat + tol) return SPart::Spp;
    if (beta0 < beta_hat - tol) return SPart::Smm;
    if (L_grid.size() != log_rbeta0.size() || L_grid.size() < 8) return SPart::undecided;
    // within tolerance: decide by whether the running infimum keeps falling
    size_t half = L_grid.size() / 2;
    double m1 = std::numeric_limits<double>::infinity();
    double m2 = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < half; ++i) m1 = std::min(m1, log_rbeta0[i]);
    for (size_t i = half; i < L_grid.size(); ++i) m2 = std::min(m2, log_rbeta0[i]);
    if (m2 <= m1 - 0.5) return SPart::Sp;
    if (m2 >= m1 - 0.1) return SPart::Sm;
    return SPart::undecided;
}

SubordinacyReport classify_energy(const PotentialSpec& V, double lambda, const Grid& grid,
                                  const SubordinacyOptions& opts) {
    SubordinacyReport rep;
    rep.lambda = lambda;

    // Stage 1: a reference pair; its Gram matrices localize the minimal-norm
    // direction at every length, and the exact minimum of the horizon norm
    // ratio is the Gram eigenvalue ratio.  theta*(L) is sampled at three
    // scales and the finite-length drift removed: power-law dichotomies shift
    // the length-L minimizer by O(L^-1/2), which is enough to corrupt the
    // growth exponents read from the trailing window.
    SolutionPair ref = solve_pair(V, lambda, BoundaryCondition{0.0}, grid);
    size_t last = grid.npoints - 1;
    double theta_hat, min_log_ratio;
    if (last >= 256) {
        auto curve = theta_star_curve(ref, {last / 16, last / 4, last});
        theta_hat = extrapolate_theta(curve[0].theta, curve[1].theta, curve[2].theta);
        min_log_ratio = curve[2].log_ratio;
    } else {
        auto curve = theta_star_curve(ref, {last});
        theta_hat = curve[0].theta;
        min_log_ratio = curve[0].log_ratio;
    }

    // Stage 2: re-solve at the refined angle; every trace and test reads off
    // this pair.  (Rebuilding it by rotating the reference pair would cancel
    // catastrophically under exponential dichotomies.)
    SolutionPair pair = solve_pair(V, lambda, BoundaryCondition{theta_hat}, grid);
    rep.L_grid = default_L_grid(grid, opts.per_decade);
    rep.log_ratio.reserve(rep.L_grid.size());
    for (double L : rep.L_grid)
        rep.log_ratio.push_back(pair.lognorm(1, L) - pair.lognorm(2, L));

    auto [is_regular, slope] = regularity_check(pair, opts);
    rep.regular = is_regular;
    rep.growth_slope = slope;

    double trend = trailing_slope(rep.L_grid, rep.log_ratio, grid.horizon());

    if (min_log_ratio > std::log(opts.absent_ratio)) {
        rep.classification = Classification::L;
        return rep; // theta_star stays absent: nothing subordinate to point at
    }
    rep.theta_star = theta_hat;
    if (!(min_log_ratio < std::log(opts.subordinate_ratio)) || !(trend < 0.0)) {
        rep.classification = Classification::undecided;
        return rep;
    }
    if (tail_fraction(pair, 1) < opts.cauchy_tail) {
        rep.classification = Classification::P;
        return rep;
    }
    rep.classification = Classification::S;
    rep.beta_hat = beta_estimate(pair, opts);
    return rep;
}

std::string report_csv_header() {
    return "lambda,classification,theta_star,beta_hat,beta_err,regular,slope";
}

std::string report_csv_row(const SubordinacyReport& r) {
    char buf[360];
    auto opt = [](const std::optional<double>& v) {
        if (!v) return std::string();
        char b[40];
        std::snprintf(b, sizeof b, "%.17g", *v);
        return std::string(b);
    };
    std::optional<double> bh, be;
    if (r.beta_hat) {
        bh = r.beta_hat->value;
        be = r.beta_hat->halfwidth;
    }
    std::snprintf(buf, sizeof buf, "%.17g,%s,%s,%s,%s,%d,%.17g", r.lambda,
                  to_string(r.classification).c_str(), opt(r.theta_star).c_str(), opt(bh).c_str(),
                  opt(be).c_str(), r.regular ? 1 : 0, r.growth_slope);
    return std::string(buf);
}

} // namespace halfline
