#include "doctest.h"

#include <cmath>

#include "halfline/kernels.hpp"
#include "halfline/model.hpp"
#include "halfline/propagate.hpp"
#include "halfline/util.hpp"

using namespace halfline;

namespace {

std::vector<LaneSpec> mixed_lanes() {
    std::vector<LaneSpec> lanes;
    // deliberately not a multiple of the vector width
    for (int i = 0; i < 11; ++i) {
        LaneSpec l;
        l.lambda = -2.4 + 0.45 * i;
        l.theta = 0.21 * i;
        l.seed = derive_seed(77, static_cast<uint64_t>(i));
        lanes.push_back(l);
    }
    return lanes;
}

} // namespace

TEST_CASE("ensemble tables split deterministic and random parts") {
    PotentialSpec v = sum_potential(PotentialSpec::power_law(0.5, 1.0),
                                    PotentialSpec::decaying_anderson(2.0, 9));
    EnsembleTables t = make_tables(v, 100);
    REQUIRE(t.det.size() == 101);
    CHECK(t.randomized);
    CHECK(t.det[4] == doctest::Approx(0.5 / 5.0));
    CHECK(t.env[4] == doctest::Approx(2.0 / 2.0));
    CHECK(t.env[0] == 0.0);
    CHECK(t.sup_bound <= 0.5 + 2.0 * std::sqrt(3.0) + 1e-12);

    CHECK_THROWS(make_tables(PotentialSpec::linear(1.0), 10));
}

TEST_CASE("kernel lanes agree with the direct pair solver") {
    PotentialSpec v = PotentialSpec::decaying_anderson(1.2, 5);
    const size_t nmax = 4000;
    EnsembleTables t = make_tables(v, nmax);
    std::vector<size_t> cp = geometric_indices(16, nmax, 6);

    LaneSpec a{0.6, 0.9, 5}, b{0.6, 0.9 + PI / 2.0, 5};
    EnsembleResult r = run_ensemble(t, {a, b}, cp, Backend::scalar);

    Grid g = Grid::discrete(nmax);
    SolutionPair p = solve_pair(v, 0.6, BoundaryCondition{0.9}, g);
    for (size_t j = 0; j < cp.size(); ++j) {
        double n = static_cast<double>(cp[j]);
        CHECK(std::fabs(r.lanes[0].lognorm[j] - p.lognorm(1, n)) < 1e-9);
        CHECK(std::fabs(r.lanes[1].lognorm[j] - p.lognorm(2, n)) < 1e-9);
        double amp = 0.5 * log_add(2.0 * p.log_abs_phi(1, cp[j]),
                                   2.0 * (p.dphi(1, cp[j]) == 0.0
                                              ? -std::numeric_limits<double>::infinity()
                                              : std::log(std::fabs(p.dphi(1, cp[j])))));
        CHECK(std::fabs(r.lanes[0].logamp[j] - amp) < 1e-9);
    }
}

TEST_CASE("pair kernel matches the direct pair solver including the cross sum") {
    PotentialSpec v = PotentialSpec::decaying_anderson(1.2, 5);
    const size_t nmax = 4000;
    EnsembleTables t = make_tables(v, nmax);
    std::vector<size_t> cp = geometric_indices(16, nmax, 6);

    PairEnsembleResult r = run_ensemble_pairs(t, {LaneSpec{0.6, 0.9, 5}}, cp, Backend::scalar);
    const PairTrace& tr = r.members[0];

    Grid g = Grid::discrete(nmax);
    SolutionPair p = solve_pair(v, 0.6, BoundaryCondition{0.9}, g);
    for (size_t j = 0; j < cp.size(); ++j) {
        double n = static_cast<double>(cp[j]);
        CHECK(std::fabs(tr.lognorm1[j] - p.lognorm(1, n)) < 1e-9);
        CHECK(std::fabs(tr.lognorm2[j] - p.lognorm(2, n)) < 1e-9);
        ScaledValue kx{tr.cross_m[j], tr.cross_e2[j]};
        ScaledValue px = p.cross(cp[j]);
        CHECK(std::fabs(kx.log_abs() - px.log_abs()) < 1e-9);
        CHECK(((kx.m > 0) == (px.m > 0)));
    }
}

TEST_CASE("pair kernel backends are bitwise identical") {
    if (!avx2_supported()) {
        MESSAGE("avx2 not available on this host; skipping");
        return;
    }
    PotentialSpec v = sum_potential(PotentialSpec::power_law(0.3, 0.7, SignRule::alternating),
                                    PotentialSpec::decaying_anderson(1.5, 123));
    const size_t nmax = 20000;
    EnsembleTables t = make_tables(v, nmax);
    std::vector<size_t> cp = geometric_indices(10, nmax, 8);
    auto lanes = mixed_lanes();

    PairEnsembleResult rs = run_ensemble_pairs(t, lanes, cp, Backend::scalar);
    PairEnsembleResult rv = run_ensemble_pairs(t, lanes, cp, Backend::avx2);
    CHECK(rv.used == Backend::avx2);
    for (size_t l = 0; l < lanes.size(); ++l) {
        for (size_t j = 0; j < cp.size(); ++j) {
            CHECK(rs.members[l].lognorm1[j] == rv.members[l].lognorm1[j]);
            CHECK(rs.members[l].lognorm2[j] == rv.members[l].lognorm2[j]);
            CHECK(rs.members[l].logamp1[j] == rv.members[l].logamp1[j]);
            CHECK(rs.members[l].logamp2[j] == rv.members[l].logamp2[j]);
            CHECK(rs.members[l].cross_m[j] == rv.members[l].cross_m[j]);
            CHECK(rs.members[l].cross_e2[j] == rv.members[l].cross_e2[j]);
        }
    }
}

TEST_CASE("rescaling engages on growing lanes without corrupting norms") {
    // lambda = 3 free: growth e^(0.962 n) reaches 2^250 near n = 180
    EnsembleTables t = make_tables(PotentialSpec::zero_potential(), 3000);
    std::vector<size_t> cp{1000, 3000};
    EnsembleResult r = run_ensemble(t, {LaneSpec{3.0, 0.4, 0}}, cp, Backend::scalar);
    double mu = std::log((3.0 + std::sqrt(5.0)) / 2.0);
    double slope = (r.lanes[0].lognorm[1] - r.lanes[0].lognorm[0]) / 2000.0;
    CHECK(slope == doctest::Approx(mu).epsilon(1e-10));
}

TEST_CASE("precondition on the one-step multiplier is enforced") {
    EnsembleTables t = make_tables(PotentialSpec::zero_potential(), 100);
    CHECK_THROWS(run_ensemble(t, {LaneSpec{30.0, 0.0, 0}}, {100}, Backend::scalar));
}

TEST_CASE("scalar and avx2 backends are bitwise identical") {
    if (!avx2_supported()) {
        MESSAGE("avx2 not available on this host; skipping");
        return;
    }
    PotentialSpec v = sum_potential(PotentialSpec::power_law(0.3, 0.7, SignRule::alternating),
                                    PotentialSpec::decaying_anderson(1.5, 123));
    const size_t nmax = 20000;
    EnsembleTables t = make_tables(v, nmax);
    std::vector<size_t> cp = geometric_indices(10, nmax, 8);
    auto lanes = mixed_lanes();

    EnsembleResult rs = run_ensemble(t, lanes, cp, Backend::scalar);
    EnsembleResult rv = run_ensemble(t, lanes, cp, Backend::avx2);
    CHECK(rv.used == Backend::avx2);
    for (size_t l = 0; l < lanes.size(); ++l) {
        for (size_t j = 0; j < cp.size(); ++j) {
            // exact equality, not approximate: same IEEE operation sequence
            CHECK(rs.lanes[l].lognorm[j] == rv.lanes[l].lognorm[j]);
            CHECK(rs.lanes[l].logamp[j] == rv.lanes[l].logamp[j]);
        }
    }
}

TEST_CASE("automatic backend runs and reports what it picked") {
    EnsembleTables t = make_tables(PotentialSpec::anderson(1.0, 3), 500);
    EnsembleResult r = run_ensemble(t, mixed_lanes(), {500});
    if (avx2_supported())
        CHECK(r.used == Backend::avx2);
    else
        CHECK(r.used == Backend::scalar);
    for (const auto& lane : r.lanes) {
        REQUIRE(lane.lognorm.size() == 1);
        CHECK(std::isfinite(lane.lognorm[0]));
    }
}
