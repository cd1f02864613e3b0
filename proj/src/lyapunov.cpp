#include "halfline/lyapunov.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "halfline/propagate.hpp"
#include "halfline/subordinacy.hpp"
#include "halfline/util.hpp"

namespace halfline {
namespace {

// evenly spaced indices over the trailing half of the grid, ~257 points
std::vector<size_t> trailing_half_indices(const Grid& g) {
    size_t last = g.npoints - 1;
    size_t mid = last / 2;
    size_t step = std::max<size_t>(1, (last - mid) / 256);
    std::vector<size_t> idx;
    for (size_t i = mid; i < last; i += step) idx.push_back(i);
    idx.push_back(last);
    return idx;
}

struct SlopeFit {
    double slope = 0.0, intercept = 0.0, se = 0.0;
};

SlopeFit fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
    std::vector<double> xs, ys;
    xs.reserve(x.size());
    ys.reserve(y.size());
    for (size_t i = 0; i < x.size(); ++i)
        if (std::isfinite(x[i]) && std::isfinite(y[i])) {
            xs.push_back(x[i]);
            ys.push_back(y[i]);
        }
    if (xs.size() < 8) throw HypothesisError("growth fit: window has fewer than 8 finite samples");
    LineFit f = fit_line(xs, ys);
    double mx = mean_of(xs), sxx = 0.0;
    for (double v : xs) sxx += (v - mx) * (v - mx);
    double n = static_cast<double>(xs.size());
    SlopeFit out;
    out.slope = f.slope;
    out.intercept = f.intercept;
    out.se = f.rms_residual * std::sqrt(n / ((n - 2.0) * sxx));
    return out;
}

bool lane_path(const PotentialSpec& V, const Grid& grid, const EnsembleSpec& ens) {
    if (!V.has_random()) return false;
    if (grid.kind == Kind::discrete) return true;
    if (ens.members > 1)
        throw std::invalid_argument("ensemble growth estimation is discrete-only");
    return false;
}

std::vector<uint64_t> member_seeds(const EnsembleSpec& ens) {
    size_t members = std::max<size_t>(1, ens.members);
    std::vector<uint64_t> seeds(members);
    for (size_t m = 0; m < members; ++m) seeds[m] = derive_seed(ens.base_seed, m);
    return seeds;
}

// extremal Gram norm curves for one member, aligned with the checkpoint list
struct GramCurves {
    std::vector<double> ln_min, ln_max, log_ratio;
};

GramCurves curves_from_pairtrace(const PairTrace& t) {
    size_t k = t.lognorm1.size();
    GramCurves c;
    c.ln_min.resize(k);
    c.ln_max.resize(k);
    c.log_ratio.resize(k);
    for (size_t j = 0; j < k; ++j) {
        GramNorms n = gram_norms(2.0 * t.lognorm1[j], ScaledValue{t.cross_m[j], t.cross_e2[j]},
                                 2.0 * t.lognorm2[j]);
        c.ln_min[j] = n.ln_norm_min;
        c.ln_max[j] = n.ln_norm_max;
        c.log_ratio[j] = n.log_ratio;
    }
    return c;
}

GramCurves curves_from_pair(const SolutionPair& pair, const std::vector<size_t>& idx) {
    GramCurves c;
    c.ln_min.resize(idx.size());
    c.ln_max.resize(idx.size());
    c.log_ratio.resize(idx.size());
    for (size_t j = 0; j < idx.size(); ++j) {
        size_t i = idx[j];
        GramNorms n = gram_norms(pair.ln1sq[i], pair.cross(i), pair.ln2sq[i]);
        c.ln_min[j] = n.ln_norm_min;
        c.ln_max[j] = n.ln_norm_max;
        c.log_ratio[j] = n.log_ratio;
    }
    return c;
}

// one Gram curve per member at boundary angle zero; the spectrum does not
// depend on the angle, so no subordinate-direction search is involved
std::vector<GramCurves> member_curves(const PotentialSpec& V, double lambda, const Grid& grid,
                                      const EnsembleSpec& ens, const std::vector<size_t>& idx,
                                      std::vector<uint64_t>& seeds_out) {
    std::vector<GramCurves> curves;
    if (lane_path(V, grid, ens)) {
        EnsembleTables tables = make_tables(V, grid.npoints - 1);
        seeds_out = member_seeds(ens);
        std::vector<LaneSpec> lanes(seeds_out.size());
        for (size_t m = 0; m < seeds_out.size(); ++m) lanes[m] = {lambda, 0.0, seeds_out[m]};
        PairEnsembleResult res = run_ensemble_pairs(tables, lanes, idx, ens.backend);
        curves.reserve(lanes.size());
        for (size_t m = 0; m < lanes.size(); ++m)
            curves.push_back(curves_from_pairtrace(res.members[m]));
    } else {
        seeds_out.assign(1, 0);
        SolutionPair pair = solve_pair(V, lambda, BoundaryCondition{0.0}, grid);
        curves.push_back(curves_from_pair(pair, idx));
    }
    return curves;
}

struct WitnessResult {
    double total = 0.0, tail_fraction = 0.0;
};

// cumulative integral/sum of |W(x)| * weight(x); terms are assembled in log
// space so a decaying W under a growing weight never overflows en route
WitnessResult weight_witness(const PerturbationSpec& W, const Grid& g, StabilityKind kind,
                             double eps, double tail_tol) {
    std::vector<double> wv = W.evaluate_grid(g);
    auto term = [&](size_t i) {
        double a = std::fabs(wv[i]);
        if (a == 0.0) return 0.0;
        double lw = kind == StabilityKind::exponential ? eps * g.x(i) : eps * std::log1p(g.x(i));
        return std::exp(std::log(a) + lw);
    };
    const size_t n = g.npoints;
    std::vector<double> cum(n, 0.0);
    if (g.kind == Kind::discrete) {
        double s = 0.0;
        for (size_t i = 0; i < n; ++i) {
            s += term(i);
            cum[i] = s;
        }
    } else {
        double s = 0.0, prev = term(0);
        for (size_t i = 1; i < n; ++i) {
            double t = term(i);
            s += 0.5 * g.h * (prev + t);
            cum[i] = s;
            prev = t;
        }
    }
    WitnessResult out;
    out.total = cum[n - 1];
    if (!std::isfinite(out.total))
        throw HypothesisError("perturbation weight integral overflows at the declared epsilon");
    if (out.total > 0.0) {
        double at_half = cum[(n - 1) / 2];
        out.tail_fraction = (out.total - at_half) / out.total;
    }
    if (out.tail_fraction > tail_tol) {
        char buf[160];
        std::snprintf(buf, sizeof buf,
                      "perturbation weight integral keeps growing: %.3g of it lies past "
                      "half the horizon (tolerance %.3g)",
                      out.tail_fraction, tail_tol);
        throw HypothesisError(buf);
    }
    return out;
}

// member-mean Gram curves, for the norm-ratio traces
GramCurves mean_traces(const PotentialSpec& V, double lambda, const Grid& grid,
                       const EnsembleSpec& ens, const std::vector<size_t>& idx) {
    std::vector<uint64_t> seeds;
    std::vector<GramCurves> curves = member_curves(V, lambda, grid, ens, idx, seeds);
    GramCurves t;
    size_t k = idx.size();
    t.ln_min.assign(k, 0.0);
    t.ln_max.assign(k, 0.0);
    t.log_ratio.assign(k, 0.0);
    for (const GramCurves& c : curves)
        for (size_t j = 0; j < k; ++j) {
            t.ln_min[j] += c.ln_min[j];
            t.ln_max[j] += c.ln_max[j];
            t.log_ratio[j] += c.log_ratio[j];
        }
    double inv = 1.0 / static_cast<double>(curves.size());
    for (size_t j = 0; j < k; ++j) {
        t.ln_min[j] *= inv;
        t.ln_max[j] *= inv;
        t.log_ratio[j] *= inv;
    }
    return t;
}

double tail_drift(const std::vector<double>& ratio) {
    if (ratio.empty()) return 0.0;
    double worst = 0.0;
    for (size_t j = ratio.size() / 2; j < ratio.size(); ++j)
        worst = std::max(worst, std::fabs(ratio[j] - 1.0));
    return worst;
}

void append17(std::string& out, double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out += buf;
}

} // namespace

std::string to_string(StabilityKind k) {
    return k == StabilityKind::exponential ? "exponential" : "power";
}

GrowthReport lyapunov_estimate(const PotentialSpec& V, double lambda, const Grid& grid,
                               const EnsembleSpec& ens) {
    if (grid.npoints < 16) throw std::invalid_argument("lyapunov_estimate: horizon too short");
    GrowthReport r;
    r.lambda = lambda;
    r.horizon = grid.horizon();
    std::vector<size_t> idx = trailing_half_indices(grid);
    r.window_lo = grid.x(idx.front());
    r.window_hi = grid.x(idx.back());
    std::vector<double> xs(idx.size());
    for (size_t j = 0; j < idx.size(); ++j) xs[j] = grid.x(idx[j]);

    std::vector<double> slopes;
    if (lane_path(V, grid, ens)) {
        EnsembleTables tables = make_tables(V, grid.npoints - 1);
        std::vector<uint64_t> seeds = member_seeds(ens);
        std::vector<LaneSpec> lanes(seeds.size());
        for (size_t m = 0; m < seeds.size(); ++m) lanes[m] = {lambda, 0.0, seeds[m]};
        PairEnsembleResult res = run_ensemble_pairs(tables, lanes, idx, ens.backend);
        std::vector<double> y(idx.size());
        for (size_t m = 0; m < lanes.size(); ++m) {
            for (size_t j = 0; j < idx.size(); ++j)
                y[j] = 0.5 * log_add(2.0 * res.members[m].logamp1[j],
                                     2.0 * res.members[m].logamp2[j]);
            SlopeFit f = fit_slope(xs, y);
            slopes.push_back(f.slope);
            r.members.push_back({seeds[m], f.slope, f.intercept, 0.0, 0.0});
            if (lanes.size() == 1) r.halfwidth = 2.0 * f.se;
        }
    } else {
        SolutionPair pair = solve_pair(V, lambda, BoundaryCondition{0.0}, grid);
        std::vector<double> y(idx.size());
        for (size_t j = 0; j < idx.size(); ++j) y[j] = pair.transfer_log_norm(idx[j]);
        SlopeFit f = fit_slope(xs, y);
        slopes.push_back(f.slope);
        r.members.push_back({0, f.slope, f.intercept, 0.0, 0.0});
        r.halfwidth = 2.0 * f.se;
    }
    if (slopes.size() > 1) r.halfwidth = 2.0 * stderr_of_mean(slopes);
    r.gamma_exp = std::max(0.0, mean_of(slopes));
    r.ensemble = slopes.size();
    return r;
}

GrowthReport power_lo_estimate(const PotentialSpec& V, double lambda, const Grid& grid,
                               const EnsembleSpec& ens) {
    if (grid.npoints < 64) throw std::invalid_argument("power_lo_estimate: horizon too short");
    size_t last = grid.npoints - 1;
    GrowthReport r;
    r.lambda = lambda;
    r.horizon = grid.horizon();
    std::vector<size_t> idx = geometric_indices(std::max<size_t>(2, last / 10), last, 32);
    r.window_lo = grid.x(idx.front());
    r.window_hi = grid.x(idx.back());
    std::vector<double> xs(idx.size());
    for (size_t j = 0; j < idx.size(); ++j) xs[j] = std::log(grid.x(idx[j]));

    std::vector<uint64_t> seeds;
    std::vector<GramCurves> curves = member_curves(V, lambda, grid, ens, idx, seeds);

    // truncating at L contributes 1/2 to every norm slope; what is left is the
    // amplitude exponent of the branch
    std::vector<double> gammas, gaps, sm, sp;
    std::vector<double> ymin(idx.size());
    for (size_t m = 0; m < curves.size(); ++m) {
        const GramCurves& c = curves[m];
        for (size_t j = 0; j < idx.size(); ++j)
            ymin[j] = c.log_ratio[j] > GRAM_RESOLVED
                          ? c.ln_min[j]
                          : std::numeric_limits<double>::quiet_NaN();
        SlopeFit fmin = fit_slope(xs, ymin);
        SlopeFit fmax = fit_slope(xs, c.ln_max);
        double s_minus = fmin.slope - 0.5, s_plus = fmax.slope - 0.5;
        sm.push_back(s_minus);
        sp.push_back(s_plus);
        gaps.push_back(s_plus - s_minus);
        gammas.push_back(0.5 * (s_plus - s_minus));
        r.members.push_back({seeds[m], gammas.back(), fmax.intercept, s_minus, s_plus});
        if (curves.size() == 1) r.halfwidth = std::hypot(fmin.se, fmax.se);
    }
    if (gammas.size() > 1) r.halfwidth = 2.0 * stderr_of_mean(gammas);
    r.gamma_pow = mean_of(gammas);
    r.slope_minus = mean_of(sm);
    r.slope_plus = mean_of(sp);
    double gap = r.slope_plus - r.slope_minus;
    double scatter = gaps.size() > 1 ? 2.0 * stderr_of_mean(gaps) : 2.0 * r.halfwidth;
    r.separated = gap > std::max(0.08, scatter);
    r.ensemble = gammas.size();
    return r;
}

LyapunovStability stability_experiment_lyapunov(const PotentialSpec& V0, const PerturbationSpec& W,
                                                double lambda, StabilityKind kind, const Grid& grid,
                                                const EnsembleSpec& ens,
                                                const StabilityOptions& opts) {
    LyapunovStability s;
    s.kind = kind;
    s.lambda = lambda;
    s.epsilon = opts.epsilon;

    WitnessResult wit = weight_witness(W, grid, kind, opts.epsilon, opts.witness_tail_tol);
    s.witness_total = wit.total;
    s.witness_tail_fraction = wit.tail_fraction;

    PotentialSpec Vp = sum_potential(V0, W);
    if (kind == StabilityKind::exponential) {
        s.base = lyapunov_estimate(V0, lambda, grid, ens);
        s.perturbed = lyapunov_estimate(Vp, lambda, grid, ens);
        s.delta_gamma = std::fabs(s.base.gamma_exp - s.perturbed.gamma_exp);
    } else {
        s.base = power_lo_estimate(V0, lambda, grid, ens);
        s.perturbed = power_lo_estimate(Vp, lambda, grid, ens);
        s.delta_gamma = std::fabs(s.base.gamma_pow - s.perturbed.gamma_pow);
    }

    // checkpoints start at 2: a one-point truncation window cannot tell the
    // two boundary directions apart, so its Gram is singular by construction
    std::vector<size_t> idx = geometric_indices(2, grid.npoints - 1, opts.trace_per_decade);
    GramCurves tb = mean_traces(V0, lambda, grid, ens, idx);
    GramCurves tp = mean_traces(Vp, lambda, grid, ens, idx);
    s.trace_x.resize(idx.size());
    for (size_t j = 0; j < idx.size(); ++j) s.trace_x[j] = grid.x(idx[j]);

    // the minus trace is kept only while both sides still resolve the
    // minimizing direction
    size_t keep = 0;
    while (keep < idx.size() && tb.log_ratio[keep] >= GRAM_RESOLVED &&
           tp.log_ratio[keep] >= GRAM_RESOLVED)
        ++keep;
    if (keep > 0) {
        s.ratio_minus.resize(keep);
        double at_cap = tp.ln_min[keep - 1] - tb.ln_min[keep - 1];
        for (size_t j = 0; j < keep; ++j)
            s.ratio_minus[j] = std::exp(tp.ln_min[j] - tb.ln_min[j] - at_cap);
    }
    s.minus_trace_len = keep;

    s.ratio_plus.resize(idx.size());
    double at_end = tp.ln_max.back() - tb.ln_max.back();
    for (size_t j = 0; j < idx.size(); ++j)
        s.ratio_plus[j] = std::exp(tp.ln_max[j] - tb.ln_max[j] - at_end);

    s.drift_minus = tail_drift(s.ratio_minus);
    s.drift_plus = tail_drift(s.ratio_plus);

    double noise = std::max(opts.gamma_tol, s.base.halfwidth + s.perturbed.halfwidth);
    if (kind == StabilityKind::power && !(s.base.separated && s.perturbed.separated))
        s.verdict = "undecided";
    else if (s.delta_gamma <= noise)
        s.verdict = "confirmed";
    else if (s.delta_gamma > 3.0 * noise)
        s.verdict = "violated";
    else
        s.verdict = "undecided";
    return s;
}

std::string growth_report_csv(const GrowthReport& r) {
    std::string out = "seed,slope,slope_minus,slope_plus,intercept,window_lo,window_hi\n";
    for (const MemberFit& m : r.members) {
        out += std::to_string(m.seed);
        for (double v : {m.slope, m.slope_minus, m.slope_plus, m.intercept, r.window_lo, r.window_hi}) {
            out += ',';
            append17(out, v);
        }
        out += '\n';
    }
    return out;
}

std::string stability_json(const LyapunovStability& s) {
    nlohmann::json j;
    j["kind"] = to_string(s.kind);
    j["lambda"] = s.lambda;
    j["epsilon"] = s.epsilon;
    j["witness_total"] = s.witness_total;
    j["witness_tail_fraction"] = s.witness_tail_fraction;
    j["gamma_base"] = s.kind == StabilityKind::exponential ? s.base.gamma_exp : s.base.gamma_pow;
    j["gamma_perturbed"] =
        s.kind == StabilityKind::exponential ? s.perturbed.gamma_exp : s.perturbed.gamma_pow;
    j["halfwidth_base"] = s.base.halfwidth;
    j["halfwidth_perturbed"] = s.perturbed.halfwidth;
    j["delta_gamma"] = s.delta_gamma;
    j["drift_minus"] = s.drift_minus;
    j["drift_plus"] = s.drift_plus;
    j["minus_trace_len"] = s.minus_trace_len;
    j["ensemble"] = s.base.ensemble;
    j["verdict"] = s.verdict;
    return j.dump(2) + "\n";
}

} // namespace halfline
