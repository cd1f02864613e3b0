#include "doctest.h"

#include <cmath>

#include "halfline/model.hpp"
#include "halfline/propagate.hpp"
#include "halfline/subordinacy.hpp"
#include "halfline/util.hpp"

using namespace halfline;

TEST_CASE("dimension maps: values, inverse pair, monotonicity") {
    CHECK(dimension_B(1.0) == doctest::Approx(1.0));
    CHECK(dimension_A(1.0) == doctest::Approx(1.0));
    CHECK(dimension_B(0.75) == doctest::Approx(0.6));
    CHECK(dimension_A(dimension_B(0.3)) == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(dimension_B(dimension_A(0.7)) == doctest::Approx(0.7).epsilon(1e-12));
    double prev_b = -1, prev_a = -1;
    for (int i = 0; i <= 20; ++i) {
        double v = i / 20.0;
        CHECK(dimension_B(v) > prev_b);
        CHECK(dimension_A(v) > prev_a);
        prev_b = dimension_B(v);
        prev_a = dimension_A(v);
    }
    CHECK_THROWS(dimension_B(-0.1));
    CHECK_THROWS(dimension_A(1.1));
}

TEST_CASE("golden angle search finds per-member minima of a smooth objective") {
    std::vector<double> targets{0.3, 1.2, 2.8};
    auto f = [&](const std::vector<double>& th) {
        std::vector<double> v(th.size());
        for (size_t m = 0; m < th.size(); ++m) {
            double s = std::sin(th[m] - targets[m]);
            v[m] = s * s;
        }
        return v;
    };
    auto res = golden_angle_search(f, 3, 16, 48);
    for (size_t m = 0; m < 3; ++m) {
        REQUIRE(res[m].theta.has_value());
        CHECK(std::fabs(*res[m].theta - targets[m]) < 1e-6);
        CHECK(res[m].log_ratio < 1e-10);
        CHECK(res[m].converged);
    }
}

TEST_CASE("gram angle: synthetic 2x2 forms, plain and giant scales") {
    // G = R diag(9, 1) R^T at rotation t: minimal direction is t + pi/2,
    // minimal ratio sqrt(1/9)
    double t = 0.7;
    double ct = std::cos(t), st = std::sin(t);
    double a = 9.0 * ct * ct + st * st;
    double c = 9.0 * st * st + ct * ct;
    double b = 8.0 * st * ct;
    GramAngle g = gram_angle(std::log(a), ScaledValue::from(b), std::log(c));
    CHECK(g.log_ratio == doctest::Approx(-std::log(3.0)).epsilon(1e-12));
    CHECK(g.delta_min == doctest::Approx(t + PI / 2.0).epsilon(1e-12));

    // same form scaled by 2^900 must give identical answers
    ScaledValue bscaled = ScaledValue::from(b);
    bscaled.e2 += 900;
    GramAngle gs = gram_angle(std::log(a) + 900.0 * LN2, bscaled, std::log(c) + 900.0 * LN2);
    CHECK(gs.log_ratio == doctest::Approx(g.log_ratio).epsilon(1e-12));
    CHECK(gs.delta_min == doctest::Approx(g.delta_min).epsilon(1e-12));

    // near-degenerate Gram: ratio pinned at the cancellation floor
    GramAngle gf = gram_angle(0.0, ScaledValue::from(1.0 - 1e-16), 0.0);
    CHECK(gf.log_ratio <= 0.5 * std::log(1e-15) + 1e-9);
}

TEST_CASE("theta drift extrapolation: exact power drifts and fallbacks") {
    double tinf = 1.234;
    // L^(-1/2) drift: samples at H/16, H/4, H carry 4s, 2s, s
    CHECK(extrapolate_theta(tinf + 4e-3, tinf + 2e-3, tinf + 1e-3) ==
          doctest::Approx(tinf).epsilon(1e-12));
    // L^(-1) drift: 16s, 4s, s
    CHECK(extrapolate_theta(tinf + 16e-4, tinf + 4e-4, tinf + 1e-4) ==
          doctest::Approx(tinf).epsilon(1e-12));
    // no drift: the last sample is already the answer
    CHECK(extrapolate_theta(tinf, tinf, tinf) == doctest::Approx(tinf));
    // non-contracting jitter: keep the last sample rather than amplify it
    CHECK(extrapolate_theta(tinf + 1e-4, tinf - 1e-4, tinf + 1e-4) == doctest::Approx(tinf + 1e-4));
    // wraps across the angle period: samples climb toward pi + 5e-4 = 5e-4
    double near_pi = PI - 5e-4;
    double ext = extrapolate_theta(near_pi - 3e-3 + PI, near_pi - 1e-3, near_pi);
    CHECK(std::fabs(ext - 5e-4) < 1e-10);
}

TEST_CASE("theta star curve matches the known subordinate direction") {
    // free lambda = 3 from the reference angle 0: the Gram small eigenvector
    // at any decent length points at the decaying branch
    Grid g = Grid::discrete(64);
    SolutionPair ref = solve_pair(PotentialSpec::zero_potential(), 3.0, BoundaryCondition{0.0}, g);
    auto curve = theta_star_curve(ref, {32, 64});
    double mu_plus = (3.0 + std::sqrt(5.0)) / 2.0;
    double oracle = PI - std::atan(mu_plus);
    for (const auto& pt : curve) {
        CHECK(std::fabs(pt.theta - oracle) < 1e-10);
        // true ratios e^(-31), e^(-62): both drown in the saturation band
        // (clamped at lmax * 1e-15, noise reaches a few epsilon above it)
        CHECK(pt.log_ratio <= 0.5 * std::log(1e-14));
    }
}

TEST_CASE("free discrete interior energy has no subordinate solution") {
    // lambda = 0: every angle gives a bounded plane-wave solution, ratio near 1
    Grid g = Grid::discrete(2000);
    ThetaSearchResult ts = find_theta_star(PotentialSpec::zero_potential(), 0.0, g);
    CHECK(!ts.theta.has_value());
    CHECK(ts.log_ratio > std::log(0.5));

    SubordinacyReport rep = classify_energy(PotentialSpec::zero_potential(), 0.0, g);
    CHECK(rep.classification == Classification::L);
    CHECK(!rep.theta_star.has_value());
    CHECK(!rep.beta_hat.has_value());
    // bounded oscillatory solutions: ||phi||_L ~ L^(1/2)
    CHECK(rep.regular);
    CHECK(rep.growth_slope == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("free discrete energy outside the band classifies P") {
    // lambda = 3: decaying branch ((3-sqrt5)/2)^n at tan(theta) = -(3+sqrt5)/2.
    // The horizon balances two leaks: the decay tail mu_minus^H ~ 2e-7 must
    // clear the 1e-6 Cauchy threshold, while forward propagation at the found
    // angle (Gram-angle precision ~1e-14) reinjects the growing branch as
    // 1e-28 * mu_plus^(2n).  H = 16 leaves both orders of magnitude under.
    Grid g = Grid::discrete(16);
    double mu_plus = (3.0 + std::sqrt(5.0)) / 2.0;
    double oracle = PI - std::atan(mu_plus);

    SubordinacyReport rep = classify_energy(PotentialSpec::zero_potential(), 3.0, g);
    CHECK(rep.classification == Classification::P);
    REQUIRE(rep.theta_star.has_value());
    CHECK(std::fabs(*rep.theta_star - oracle) < 1e-9);
    CHECK(!rep.beta_hat.has_value()); // square-summable branch: no growth exponent
    CHECK(rep.regular);               // converged norm: slope ~ 0

    SolutionPair pair = solve_pair(PotentialSpec::zero_potential(), 3.0,
                                   BoundaryCondition{*rep.theta_star}, g);
    CHECK_THROWS_AS(beta_estimate(pair), HypothesisError);

    // the golden-section search agrees at its own (coarser) resolution
    ThetaSearchResult ts = find_theta_star(PotentialSpec::zero_potential(), 3.0, g);
    REQUIRE(ts.theta.has_value());
    CHECK(std::fabs(*ts.theta - oracle) < 1e-6);
}

TEST_CASE("inverse-square tail at zero energy: S with beta 3/5") {
    // Outer region solutions x^(1/4) and x^(3/4); the subordinate angle makes
    // the interior solution match the pure x^(1/4) branch at the cut.
    // Matching data: phi(1) = a, phi'(1) = a/4 against the interior
    // cos/sin basis at frequency w = sqrt(3)/4.
    double w = std::sqrt(3.0) / 4.0;
    double num = std::cos(w) - std::sin(w) / (4.0 * w);
    double den = -w * std::sin(w) - std::cos(w) / 4.0;
    double oracle = PI - std::atan(num / -den); // tan(theta*) = num/den < 0

    PotentialSpec v = PotentialSpec::euler(-3.0 / 16.0, 1.0);
    Grid g = grid_for(v, 0.0, 10000.0);
    SubordinacyReport rep = classify_energy(v, 0.0, g);

    CHECK(rep.classification == Classification::S);
    REQUIRE(rep.theta_star.has_value());
    // the length-L minimizer drifts like L^(-1/2) (~1e-2 at this horizon);
    // classification extrapolates the drift away, leaving the L^(-1) tail
    CHECK(std::fabs(*rep.theta_star - oracle) < 5e-3);
    REQUIRE(rep.beta_hat.has_value());
    CHECK(std::fabs(rep.beta_hat->value - 0.6) < 0.025);
    // ||phi1||_L ~ L^(3/4): grows faster than the regularity cutoff L^(1/2)
    CHECK(!rep.regular);
    CHECK(rep.growth_slope == doctest::Approx(0.75).epsilon(0.04));

    // the golden search on the horizon ratio lands inside the drift basin
    ThetaSearchResult ts = find_theta_star(v, 0.0, g);
    REQUIRE(ts.theta.has_value());
    CHECK(std::fabs(*ts.theta - oracle) < 0.02);
}

TEST_CASE("ensemble theta star from one paired pass") {
    // free lambda = 3: every member must land on the known decaying direction
    EnsembleTables t = make_tables(PotentialSpec::zero_potential(), 500);
    EnsembleThetaResult r = find_theta_star_ensemble(t, 3.0, {1, 2});
    double oracle = PI - std::atan((3.0 + std::sqrt(5.0)) / 2.0);
    REQUIRE(r.theta.size() == 2);
    for (double th : r.theta) CHECK(std::fabs(th - oracle) < 1e-10);
    for (double lr : r.log_ratio) CHECK(lr < std::log(1e-6));

    // random decaying coupling: angles are member-specific but all valid
    EnsembleTables rt = make_tables(PotentialSpec::decaying_anderson(1.0, 40), 4000);
    EnsembleThetaResult rr = find_theta_star_ensemble(rt, 0.5, {11, 12, 13});
    for (double th : rr.theta) {
        CHECK(th >= 0.0);
        CHECK(th < PI);
    }
    for (double lr : rr.log_ratio) CHECK(std::isfinite(lr));
}

TEST_CASE("beta estimate is stable under horizon doubling") {
    PotentialSpec v = PotentialSpec::euler(-3.0 / 16.0, 1.0);
    Grid g1 = grid_for(v, 0.0, 2500.0);
    Grid g2 = grid_for(v, 0.0, 5000.0);
    SubordinacyReport r1 = classify_energy(v, 0.0, g1);
    SubordinacyReport r2 = classify_energy(v, 0.0, g2);
    REQUIRE(r1.beta_hat.has_value());
    REQUIRE(r2.beta_hat.has_value());
    CHECK(std::fabs(r1.beta_hat->value - r2.beta_hat->value) < 0.03);
}

TEST_CASE("growth comparison dichotomy around the estimated exponent") {
    // raising the trial exponent by 0.1 sends r_b(L) to 0, lowering it lets
    // the trace climb past its early values
    PotentialSpec v = PotentialSpec::euler(-3.0 / 16.0, 1.0);
    Grid g = grid_for(v, 0.0, 10000.0);
    SubordinacyReport rep = classify_energy(v, 0.0, g);
    REQUIRE(rep.beta_hat.has_value());
    REQUIRE(rep.theta_star.has_value());
    SolutionPair pair = solve_pair(v, 0.0, BoundaryCondition{*rep.theta_star}, g);

    double beta = rep.beta_hat->value;
    auto up = log_rbeta_trace(pair, beta + 0.1, rep.L_grid);
    auto dn = log_rbeta_trace(pair, beta - 0.1, rep.L_grid);

    size_t q = rep.L_grid.size() / 4;
    double up_early = *std::min_element(up.begin(), up.begin() + q);
    double up_late = *std::min_element(up.end() - q, up.end());
    CHECK(up_late < up_early - 0.3); // running infimum keeps falling

    double dn_early = *std::max_element(dn.begin(), dn.begin() + q);
    double dn_late = *std::max_element(dn.end() - q, dn.end());
    CHECK(dn_late > dn_early + 0.3); // trace outgrows any early bound
}

TEST_CASE("S-partition branches") {
    std::vector<double> L(16), falling(16), flat(16);
    for (size_t i = 0; i < L.size(); ++i) {
        L[i] = std::pow(10.0, 1.0 + 0.2 * static_cast<double>(i));
        falling[i] = -0.3 * std::log(L[i]);
        flat[i] = 0.4 + 0.01 * std::sin(static_cast<double>(i));
    }
    CHECK(partition_S(0.6, 0.9, L, flat) == SPart::Spp);
    CHECK(partition_S(0.6, 0.3, L, flat) == SPart::Smm);
    CHECK(partition_S(0.6, 0.6, L, falling) == SPart::Sp);
    CHECK(partition_S(0.6, 0.6, L, flat) == SPart::Sm);
    CHECK(to_string(SPart::Spp) == "S++");
}

TEST_CASE("report row serialization") {
    SubordinacyReport r;
    r.lambda = 0.5;
    r.classification = Classification::S;
    r.theta_star = 1.25;
    r.beta_hat = BetaEstimate{0.6, 0.01, 100.0, 10000.0};
    r.regular = true;
    r.growth_slope = 0.41;
    std::string row = report_csv_row(r);
    CHECK(row.rfind("0.5,S,1.25", 0) == 0);
    CHECK(report_csv_header() == "lambda,classification,theta_star,beta_hat,beta_err,regular,slope");

    SubordinacyReport l;
    l.lambda = -1.0;
    l.classification = Classification::L;
    CHECK(report_csv_row(l) == "-1,L,,,,0,0");
}
