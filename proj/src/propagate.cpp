#include "halfline/propagate.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "halfline/util.hpp"

namespace halfline {

namespace {

constexpr double NEG_INF = -std::numeric_limits<double>::infinity();

struct Col {
    double m = 0.0; // value slot
    double d = 0.0; // companion slot (derivative / next site)
    int32_t k = 0;  // true value = slot * 2^(SCALE_BITS * k)
};

void rescale(Col& c) {
    constexpr double UP = 0x1p250;
    constexpr double DOWN = 0x1p-250;
    double a = std::fabs(c.m) > std::fabs(c.d) ? std::fabs(c.m) : std::fabs(c.d);
    while (a > UP) {
        c.m *= DOWN;
        c.d *= DOWN;
        a *= DOWN;
        ++c.k;
    }
    while (a != 0.0 && a < DOWN) {
        c.m *= UP;
        c.d *= UP;
        a *= UP;
        --c.k;
    }
}

double col_log_amp(const Col& c) {
    return 0.5 * std::log(c.m * c.m + c.d * c.d) + 250.0 * LN2 * static_cast<double>(c.k);
}

// ln of the spectral norm of [[d1,d2],[m1,m2]] with per-column scales
double pair_log_norm(const Col& c1, const Col& c2) {
    int32_t kmax = c1.k > c2.k ? c1.k : c2.k;
    int r1 = 500 * static_cast<int>(c1.k - kmax);
    int r2 = 500 * static_cast<int>(c2.k - kmax);
    double a = std::ldexp(c1.m * c1.m + c1.d * c1.d, r1);
    double b = std::ldexp(c2.m * c2.m + c2.d * c2.d, r2);
    double c = std::ldexp(c1.m * c2.m + c1.d * c2.d, (r1 + r2) / 2);
    double disc = std::sqrt((a - b) * (a - b) + 4.0 * c * c);
    double lmax = 0.5 * ((a + b) + disc);
    return 0.5 * std::log(lmax) + 250.0 * LN2 * static_cast<double>(kmax);
}

double pair_log_det(const Col& c1, const Col& c2) {
    double s = c1.m * c2.d - c1.d * c2.m;
    if (s == 0.0) return NEG_INF;
    return std::log(std::fabs(s)) + 250.0 * LN2 * static_cast<double>(c1.k + c2.k);
}

// modified Wronskian in true units (mantissa product times the joint scale)
double pair_wronskian(const Col& c1, const Col& c2) {
    ScaledValue w{c1.m * c2.d - c1.d * c2.m, 0};
    w.normalize();
    w.e2 += 250ll * (c1.k + c2.k);
    return w.to_double();
}

// The stepping core.  Sink is called at every grid index with the current
// column states and the running ln of the squared truncated norms.
template <class Sink>
void run_pair(const PotentialSpec& V, double lambda, BoundaryCondition bc, const Grid& g, Sink&& sink) {
    if (g.npoints < 2) throw std::invalid_argument("run_pair: grid needs at least two points");

    Col c1{bc.value0(), bc.slope0(), 0};
    BoundaryCondition bc2 = bc.orthogonal();
    Col c2{bc2.value0(), bc2.slope0(), 0};

    std::vector<double> pot = V.evaluate_grid(g);
    ScaledValue acc1, acc2; // squared truncated norms
    ScaledValue accx;       // cross inner product <phi_1, phi_2>

    if (g.kind == Kind::discrete) {
        sink(size_t{0}, c1, c2, NEG_INF, NEG_INF, accx, pot[0]);
        for (size_t i = 0; i + 1 < g.npoints; ++i) {
            double a = lambda - pot[i + 1];
            auto step = [a](Col& c) {
                double next = a * c.d - c.m;
                c.m = c.d;
                c.d = next;
                rescale(c);
            };
            step(c1);
            step(c2);
            acc1.add(c1.m * c1.m, 500ll * c1.k);
            acc2.add(c2.m * c2.m, 500ll * c2.k);
            accx.add(c1.m * c2.m, 250ll * (c1.k + c2.k));
            sink(i + 1, c1, c2, acc1.log_abs(), acc2.log_abs(), accx, pot[i + 1]);
        }
        return;
    }

    // midpoint samples for the RK4 stages
    std::vector<double> mid(g.npoints - 1);
    for (size_t i = 0; i + 1 < g.npoints; ++i)
        mid[i] = V.evaluate(Kind::continuum, g.x(i) + 0.5 * g.h);

    const double h = g.h, h2 = 0.5 * h, h6 = h / 6.0;
    sink(size_t{0}, c1, c2, NEG_INF, NEG_INF, accx, pot[0]);
    for (size_t i = 0; i + 1 < g.npoints; ++i) {
        double qa = pot[i] - lambda;
        double qm = mid[i] - lambda;
        double qb = pot[i + 1] - lambda;
        auto step = [&](Col& c) {
            double prev_m = c.m;
            double k1v = c.d, k1d = qa * c.m;
            double y1 = c.m + h2 * k1v, y2 = c.d + h2 * k1d;
            double k2v = y2, k2d = qm * y1;
            y1 = c.m + h2 * k2v;
            y2 = c.d + h2 * k2d;
            double k3v = y2, k3d = qm * y1;
            y1 = c.m + h * k3v;
            y2 = c.d + h * k3d;
            double k4v = y2, k4d = qb * y1;
            c.m += h6 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
            c.d += h6 * (k1d + 2.0 * k2d + 2.0 * k3d + k4d);
            return prev_m;
        };
        double p1 = step(c1);
        double p2 = step(c2);
        // trapezoid cell [x_i, x_{i+1}] of phi^2 and phi_1 phi_2, both endpoints
        // at the scale they were stored with (the step leaves k unchanged until
        // rescale)
        acc1.add(h2 * p1 * p1, 500ll * c1.k);
        acc2.add(h2 * p2 * p2, 500ll * c2.k);
        acc1.add(h2 * c1.m * c1.m, 500ll * c1.k);
        acc2.add(h2 * c2.m * c2.m, 500ll * c2.k);
        accx.add(h2 * p1 * p2, 250ll * (c1.k + c2.k));
        accx.add(h2 * c1.m * c2.m, 250ll * (c1.k + c2.k));
        rescale(c1);
        rescale(c2);
        sink(i + 1, c1, c2, acc1.log_abs(), acc2.log_abs(), accx, pot[i + 1]);
    }
}

ScaledValue sv_scaled(double m, int32_t k) { return ScaledValue{m, 250ll * k}; }

} // namespace

SolutionPair solve_pair(const PotentialSpec& V, double lambda, BoundaryCondition bc, const Grid& grid) {
    SolutionPair p;
    p.grid = grid;
    p.lambda = lambda;
    p.bc = bc;
    size_t n = grid.npoints;
    p.pot.reserve(n);
    p.m1.reserve(n);
    p.d1.reserve(n);
    p.m2.reserve(n);
    p.d2.reserve(n);
    p.k1.reserve(n);
    p.k2.reserve(n);
    p.ln1sq.reserve(n);
    p.ln2sq.reserve(n);
    p.xm.reserve(n);
    p.xe2.reserve(n);
    run_pair(V, lambda, bc, grid,
             [&](size_t, const Col& c1, const Col& c2, double l1, double l2, const ScaledValue& x,
                 double v) {
                 p.pot.push_back(v);
                 p.m1.push_back(c1.m);
                 p.d1.push_back(c1.d);
                 p.k1.push_back(c1.k);
                 p.m2.push_back(c2.m);
                 p.d2.push_back(c2.d);
                 p.k2.push_back(c2.k);
                 p.ln1sq.push_back(l1);
                 p.ln2sq.push_back(l2);
                 p.xm.push_back(x.m);
                 p.xe2.push_back(x.e2);
             });
    return p;
}

PairProbe probe_pair(const PotentialSpec& V, double lambda, BoundaryCondition bc, const Grid& grid,
                     const std::vector<size_t>& checkpoints) {
    for (size_t j = 1; j < checkpoints.size(); ++j)
        if (checkpoints[j] <= checkpoints[j - 1])
            throw std::invalid_argument("probe_pair: checkpoints must be strictly increasing");
    if (!checkpoints.empty() && checkpoints.back() >= grid.npoints)
        throw std::invalid_argument("probe_pair: checkpoint beyond grid");

    PairProbe probe;
    probe.idx = checkpoints;
    size_t next = 0;
    run_pair(V, lambda, bc, grid,
             [&](size_t i, const Col& c1, const Col& c2, double l1, double l2, const ScaledValue&,
                 double) {
                 if (next >= probe.idx.size() || probe.idx[next] != i) return;
                 probe.lognorm1.push_back(0.5 * l1);
                 probe.lognorm2.push_back(0.5 * l2);
                 probe.logamp1.push_back(col_log_amp(c1));
                 probe.logamp2.push_back(col_log_amp(c2));
                 probe.translognorm.push_back(pair_log_norm(c1, c2));
                 ++next;
             });
    return probe;
}

double SolutionPair::log_abs_phi(int column, size_t i) const {
    const auto& m = column == 1 ? m1 : m2;
    const auto& k = column == 1 ? k1 : k2;
    if (m[i] == 0.0) return NEG_INF;
    return std::log(std::fabs(m[i])) + 250.0 * LN2 * static_cast<double>(k[i]);
}

double SolutionPair::phi(int column, size_t i) const {
    const auto& m = column == 1 ? m1 : m2;
    const auto& k = column == 1 ? k1 : k2;
    return sv_scaled(m[i], k[i]).to_double();
}

double SolutionPair::dphi(int column, size_t i) const {
    const auto& d = column == 1 ? d1 : d2;
    const auto& k = column == 1 ? k1 : k2;
    return sv_scaled(d[i], k[i]).to_double();
}

double SolutionPair::lognorm(int column, double L) const {
    const auto& lnsq = column == 1 ? ln1sq : ln2sq;
    const auto& m = column == 1 ? m1 : m2;
    const auto& k = column == 1 ? k1 : k2;
    if (L <= 0.0) return NEG_INF;

    if (grid.kind == Kind::discrete) {
        double fl = std::floor(L);
        size_t iL = static_cast<size_t>(fl);
        if (iL >= size()) { iL = size() - 1; fl = static_cast<double>(iL); }
        double cum = lnsq[iL];
        double frac = L - fl;
        const auto& d = column == 1 ? d1 : d2;
        if (frac > 0.0 && d[iL] != 0.0) {
            // companion slot holds phi(iL + 1), the fractional-weight site
            double lt = std::log(std::fabs(d[iL])) + 250.0 * LN2 * static_cast<double>(k[iL]);
            cum = log_add(cum, std::log(frac) + 2.0 * lt);
        }
        return 0.5 * cum;
    }

    double pos = L / grid.h;
    size_t i = static_cast<size_t>(std::floor(pos));
    if (i >= size() - 1) return 0.5 * lnsq[size() - 1];
    double t = pos - static_cast<double>(i);
    if (t <= 1e-12) return 0.5 * lnsq[i];
    // partial trapezoid cell with the value at L interpolated between grid points
    ScaledValue vL = sv_scaled((1.0 - t) * m[i], k[i]);
    vL.add(sv_scaled(t * m[i + 1], k[i + 1]));
    double cell = log_add(2.0 * log_abs_phi(column, i), 2.0 * vL.log_abs()) +
                  std::log(0.5 * (L - grid.x(i)));
    return 0.5 * log_add(lnsq[i], cell);
}

double SolutionPair::wronskian(size_t i) const {
    return pair_wronskian(Col{m1[i], d1[i], k1[i]}, Col{m2[i], d2[i], k2[i]});
}

double SolutionPair::wronskian_drift() const {
    double worst = 0.0;
    for (size_t i = 0; i < size(); ++i) {
        double dev = std::fabs(wronskian(i) - 1.0);
        if (dev > worst) worst = dev;
    }
    return worst;
}

double SolutionPair::transfer_log_norm(size_t i) const {
    return pair_log_norm(Col{m1[i], d1[i], k1[i]}, Col{m2[i], d2[i], k2[i]});
}

double SolutionPair::transfer_log_det(size_t i) const {
    return pair_log_det(Col{m1[i], d1[i], k1[i]}, Col{m2[i], d2[i], k2[i]});
}

std::vector<double> continuum_residual(const std::vector<double>& psi, const std::vector<double>& V,
                                       double lambda, double h) {
    if (psi.size() != V.size()) throw std::invalid_argument("continuum_residual: size mismatch");
    std::vector<double> r(psi.size(), 0.0);
    if (psi.size() < 5) return r;
    double inv = 1.0 / (12.0 * h * h);
    for (size_t i = 2; i + 2 < psi.size(); ++i) {
        double dd = (-psi[i - 2] + 16.0 * psi[i - 1] - 30.0 * psi[i] + 16.0 * psi[i + 1] - psi[i + 2]) * inv;
        r[i] = -dd + (V[i] - lambda) * psi[i];
    }
    return r;
}

double discrete_residual(const std::vector<double>& psi, const std::vector<double>& V, double lambda) {
    if (psi.size() != V.size()) throw std::invalid_argument("discrete_residual: size mismatch");
    double worst = 0.0;
    for (size_t n = 1; n + 1 < psi.size(); ++n) {
        double r = psi[n + 1] + psi[n - 1] + (V[n] - lambda) * psi[n];
        double scale = std::fabs(psi[n - 1]);
        scale = std::max(scale, std::fabs(psi[n]));
        scale = std::max(scale, std::fabs(psi[n + 1]));
        scale = std::max(scale, 1.0);
        double rel = std::fabs(r) / scale;
        if (rel > worst) worst = rel;
    }
    return worst;
}

void pair_to_csv(const SolutionPair& pair, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw std::runtime_error("pair_to_csv: cannot open " + path);
    std::fprintf(f, "x,phi1,dphi1,phi2,dphi2,logamp1,logamp2,lognorm1,lognorm2,wronskian\n");
    for (size_t i = 0; i < pair.size(); ++i) {
        Col c1{pair.m1[i], pair.d1[i], pair.k1[i]};
        Col c2{pair.m2[i], pair.d2[i], pair.k2[i]};
        std::fprintf(f, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                     pair.grid.x(i), pair.phi(1, i), pair.dphi(1, i), pair.phi(2, i), pair.dphi(2, i),
                     col_log_amp(c1), col_log_amp(c2), 0.5 * pair.ln1sq[i], 0.5 * pair.ln2sq[i],
                     pair.wronskian(i));
    }
    std::fclose(f);
}

} // namespace halfline
