#include "doctest.h"

#include <cmath>
#include <cstdlib>

#include "halfline/util.hpp"

using namespace halfline;

TEST_CASE("counter-based draws are pure functions of (seed, index)") {
    double a = uniform01(42, 7);
    double b = uniform01(42, 7);
    CHECK(a == b);
    CHECK(uniform01(42, 8) != a);
    CHECK(uniform01(43, 7) != a);
    for (uint64_t i = 0; i < 1000; ++i) {
        double u = uniform01(5, i);
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
}

TEST_CASE("sym_uniform has the declared moments") {
    const uint64_t n = 200000;
    double s1 = 0, s2 = 0;
    for (uint64_t i = 0; i < n; ++i) {
        double x = sym_uniform(11, i);
        CHECK(std::fabs(x) <= 1.7320508075688773 + 1e-15);
        s1 += x;
        s2 += x * x;
    }
    CHECK(std::fabs(s1 / n) < 0.01);       // mean 0
    CHECK(std::fabs(s2 / n - 1.0) < 0.02); // variance 1
}

TEST_CASE("ScaledValue tracks huge products and sums") {
    ScaledValue v = ScaledValue::from(3.0);
    v.e2 += 2000; // 3 * 2^2000
    CHECK(v.log_abs() == doctest::Approx(std::log(3.0) + 2000 * LN2).epsilon(1e-14));

    ScaledValue acc;
    acc.add(2.0, 0);
    acc.add(3.0, 0);
    CHECK(acc.to_double() == doctest::Approx(5.0));
    acc.add(1.0, 4000); // dominates everything
    CHECK(acc.log_abs() == doctest::Approx(4000 * LN2).epsilon(1e-14));
    acc.add(1.0, 0); // negligible against 2^4000
    CHECK(acc.log_abs() == doctest::Approx(4000 * LN2).epsilon(1e-14));
}

TEST_CASE("ScaledValue add survives unnormalized large mantissas") {
    ScaledValue acc;
    acc.add(0x1p500, 500); // value 2^1000, mantissa far outside [0.5, 1)
    acc.add(0x1p500, 501);
    CHECK(std::isfinite(acc.m));
    CHECK(acc.log_abs() == doctest::Approx(std::log(3.0) + 1000 * LN2).epsilon(1e-14));
}

TEST_CASE("log_add matches direct sums") {
    double l = log_add(std::log(2.0), std::log(5.0));
    CHECK(l == doctest::Approx(std::log(7.0)));
    double ninf = -std::numeric_limits<double>::infinity();
    CHECK(log_add(ninf, std::log(3.0)) == doctest::Approx(std::log(3.0)));
    CHECK(log_add(std::log(3.0), ninf) == doctest::Approx(std::log(3.0)));
}

TEST_CASE("fit_line recovers exact affine data") {
    std::vector<double> x, y;
    for (int i = 0; i < 20; ++i) {
        x.push_back(0.5 * i);
        y.push_back(3.25 - 0.75 * (0.5 * i));
    }
    LineFit f = fit_line(x, y);
    CHECK(f.slope == doctest::Approx(-0.75).epsilon(1e-13));
    CHECK(f.intercept == doctest::Approx(3.25).epsilon(1e-13));
    CHECK(f.rms_residual < 1e-12);
}

TEST_CASE("geometric_indices covers the range with distinct increasing entries") {
    auto idx = geometric_indices(10, 10000, 8);
    REQUIRE(idx.size() > 8);
    CHECK(idx.front() == 10);
    CHECK(idx.back() == 10000);
    for (size_t i = 1; i < idx.size(); ++i) CHECK(idx[i] > idx[i - 1]);
}
