#pragma once
// Small numeric utilities shared across the library: counter-based random
// draws, wide-dynamic-range accumulators, least-squares fits, grid helpers.

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace halfline {

inline constexpr double PI = 3.141592653589793238462643383279502884;
inline constexpr double LN2 = 0.6931471805599453094172321214581765680755;

// ---------------------------------------------------------------------------
// Counter-based randomness.  Every draw is a pure function of (seed, index),
// so ensembles are reproducible independent of evaluation order.

inline uint64_t splitmix64(uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// uniform in [0,1), 53-bit resolution
inline double uniform01(uint64_t seed, uint64_t index) {
    uint64_t h = splitmix64(splitmix64(seed) ^ (index * 0x9e3779b97f4a7c15ull + 0x632be59bd9b4e019ull));
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

// mean 0, variance 1, bounded support [-sqrt(3), sqrt(3)]
inline double sym_uniform(uint64_t seed, uint64_t index) {
    constexpr double SQRT3 = 1.7320508075688772935274463415058723669428;
    return SQRT3 * (2.0 * uniform01(seed, index) - 1.0);
}

// derive a per-member seed from an ensemble base seed
inline uint64_t derive_seed(uint64_t base, uint64_t member) {
    return splitmix64(base ^ (0xd1b54a32d192ed03ull * (member + 1)));
}

// ---------------------------------------------------------------------------
// ScaledValue: x = m * 2^e2 with |m| kept in a safe band.  Used wherever a
// quantity can leave the double exponent range (norm accumulators, column
// scales).  All rescaling is by exact powers of two.

struct ScaledValue {
    double m = 0.0;
    int64_t e2 = 0;

    static ScaledValue from(double v) {
        ScaledValue s;
        s.m = v;
        s.normalize();
        return s;
    }
    bool zero() const { return m == 0.0; }
    void normalize() {
        if (m == 0.0 || !std::isfinite(m)) { e2 = 0; return; }
        int e = 0;
        m = std::frexp(m, &e); // m in [0.5,1)
        e2 += e;
    }
    // natural log of |value|; -inf for zero
    double log_abs() const {
        if (m == 0.0) return -std::numeric_limits<double>::infinity();
        return std::log(std::fabs(m)) + static_cast<double>(e2) * LN2;
    }
    double to_double() const {
        if (m == 0.0) return 0.0;
        if (e2 > 2000) return m > 0 ? std::numeric_limits<double>::infinity()
                                    : -std::numeric_limits<double>::infinity();
        if (e2 < -2000) return 0.0;
        return std::ldexp(m, static_cast<int>(e2));
    }
    // in-place add of another scaled value (used for sums of nonnegative terms)
    void add(ScaledValue o) {
        if (o.m == 0.0) return;
        o.normalize(); // keeps the alignment ldexp below in range
        if (m == 0.0) { *this = o; return; }
        int64_t d = o.e2 - e2;
        if (d > 1000) { *this = o; }           // existing sum negligible
        else if (d < -1000) { return; }        // addend negligible
        else { m += std::ldexp(o.m, static_cast<int>(d)); }
        normalize();
    }
    void add(double v, int64_t ve2) { add(ScaledValue{v, ve2}); }
};

// log(a) where a = sum of terms, given existing log-sum and a new log-term
inline double log_add(double la, double lb) {
    if (la == -std::numeric_limits<double>::infinity()) return lb;
    if (lb == -std::numeric_limits<double>::infinity()) return la;
    double hi = la > lb ? la : lb, lo = la > lb ? lb : la;
    return hi + std::log1p(std::exp(lo - hi));
}

// ---------------------------------------------------------------------------
// Least squares line fit y ~ a + b x.

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double rms_residual = 0.0;
    size_t n = 0;
};

inline LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2)
        throw std::invalid_argument("fit_line: need two or more matched points");
    LineFit f;
    f.n = x.size();
    double mx = 0, my = 0;
    for (size_t i = 0; i < x.size(); ++i) { mx += x[i]; my += y[i]; }
    mx /= static_cast<double>(x.size());
    my /= static_cast<double>(x.size());
    double sxx = 0, sxy = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx == 0.0) throw std::invalid_argument("fit_line: degenerate abscissae");
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double ss = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        double r = y[i] - (f.intercept + f.slope * x[i]);
        ss += r * r;
    }
    f.rms_residual = std::sqrt(ss / static_cast<double>(x.size()));
    return f;
}

inline double mean_of(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

inline double stderr_of_mean(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    double m = mean_of(v), ss = 0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

// ---------------------------------------------------------------------------
// Geometric index grids (distinct, increasing, within [lo, hi]).

inline std::vector<size_t> geometric_indices(size_t lo, size_t hi, size_t per_decade) {
    if (lo < 1) lo = 1;
    if (hi < lo) hi = lo;
    std::vector<size_t> out;
    double step = std::pow(10.0, 1.0 / static_cast<double>(per_decade));
    double v = static_cast<double>(lo);
    while (v <= static_cast<double>(hi) * (1.0 + 1e-12)) {
        size_t idx = static_cast<size_t>(std::llround(v));
        if (idx > hi) idx = hi;
        if (out.empty() || idx > out.back()) out.push_back(idx);
        v *= step;
    }
    if (out.empty() || out.back() != hi) out.push_back(hi);
    return out;
}

// ---------------------------------------------------------------------------
// Errors carrying the spec'd failure classes.

struct ConfigError : std::runtime_error {
    int line = 0, column = 0;
    ConfigError(const std::string& msg, int l = 0, int c = 0)
        : std::runtime_error(msg), line(l), column(c) {}
};

// numerical hypothesis failures (contraction unattainable, witness divergence
// where convergence is a precondition, non-convergence of an iteration)
struct HypothesisError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace halfline
