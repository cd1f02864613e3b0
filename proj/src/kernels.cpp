#include "halfline/kernels.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "halfline/util.hpp"
#include "kernel_block.hpp"

namespace halfline {

namespace {

constexpr size_t BLOCK = 64;
constexpr double UP = 0x1p250;
constexpr double DOWN = 0x1p-250;
constexpr double SUP_LIMIT = 15.0; // see the overflow budget in kernels.hpp

detail::BlockFn pick_block(Backend b, Backend& used) {
    if (b == Backend::scalar) {
        used = Backend::scalar;
        return detail::scalar_block();
    }
    if (b == Backend::avx2) {
        if (!avx2_supported())
            throw std::invalid_argument("avx2 backend requested but not available on this host");
        used = Backend::avx2;
        return detail::avx2_block();
    }
    if (avx2_supported()) {
        used = Backend::avx2;
        return detail::avx2_block();
    }
    used = Backend::scalar;
    return detail::scalar_block();
}

detail::PairBlockFn pick_pair_block(Backend b, Backend& used) {
    if (b == Backend::scalar) {
        used = Backend::scalar;
        return detail::scalar_pair_block();
    }
    if (b == Backend::avx2) {
        if (!avx2_supported())
            throw std::invalid_argument("avx2 backend requested but not available on this host");
        used = Backend::avx2;
        return detail::avx2_pair_block();
    }
    if (avx2_supported()) {
        used = Backend::avx2;
        return detail::avx2_pair_block();
    }
    used = Backend::scalar;
    return detail::scalar_pair_block();
}

void validate_run(const EnsembleTables& tables, const std::vector<LaneSpec>& lanes,
                  const std::vector<size_t>& checkpoints, const char* who) {
    const std::string name(who);
    if (lanes.empty()) throw std::invalid_argument(name + ": no lanes");
    if (tables.det.size() != tables.nmax + 1 || tables.env.size() != tables.nmax + 1)
        throw std::invalid_argument(name + ": table size mismatch");
    for (size_t j = 0; j < checkpoints.size(); ++j) {
        if (checkpoints[j] < 1 || checkpoints[j] > tables.nmax)
            throw std::invalid_argument(name + ": checkpoint outside [1, nmax]");
        if (j > 0 && checkpoints[j] <= checkpoints[j - 1])
            throw std::invalid_argument(name + ": checkpoints must be strictly increasing");
    }
    for (const auto& lane : lanes)
        if (std::fabs(lane.lambda) + tables.sup_bound > SUP_LIMIT)
            throw std::invalid_argument(name + ": |lambda| + sup|V| exceeds " +
                                        std::to_string(SUP_LIMIT) + "; use solve_pair instead");
}

void rescale_lane(double& u, double& unext, int64_t& k) {
    double a = std::fabs(u) > std::fabs(unext) ? std::fabs(u) : std::fabs(unext);
    while (a > UP) {
        u *= DOWN;
        unext *= DOWN;
        a *= DOWN;
        ++k;
    }
    while (a != 0.0 && a < DOWN) {
        u *= UP;
        unext *= UP;
        a *= UP;
        --k;
    }
}

void fill_coeff_rows(const EnsembleTables& tables, const std::vector<LaneSpec>& lanes,
                     size_t site, size_t steps, std::vector<double>& coeff) {
    const size_t W = lanes.size();
    for (size_t s = 0; s < steps; ++s) {
        size_t j = site + 1 + s;
        double base = tables.det[j];
        double e = tables.env[j];
        double* row = coeff.data() + s * W;
        if (e == 0.0) {
            for (size_t l = 0; l < W; ++l) row[l] = lanes[l].lambda - base;
        } else {
            for (size_t l = 0; l < W; ++l)
                row[l] = lanes[l].lambda - (base + e * sym_uniform(lanes[l].seed, j));
        }
    }
}

} // namespace

bool avx2_supported() {
    if (detail::avx2_block() == nullptr) return false;
#if defined(__x86_64__) || defined(__i386__)
    return __builtin_cpu_supports("avx2") != 0;
#else
    return false;
#endif
}

EnsembleTables make_tables(const PotentialSpec& V, size_t nmax) {
    auto bound = V.bound();
    if (!bound) throw std::invalid_argument("ensemble kernel needs a bounded potential");
    if (nmax < 1) throw std::invalid_argument("ensemble kernel needs at least one step");

    EnsembleTables t;
    t.nmax = nmax;
    t.det.resize(nmax + 1);
    t.env.assign(nmax + 1, 0.0);
    for (size_t n = 0; n <= nmax; ++n)
        t.det[n] = V.deterministic_part(Kind::discrete, static_cast<double>(n));

    if (auto leaf = single_random_leaf(V)) {
        t.randomized = true;
        for (size_t n = 1; n <= nmax; ++n)
            t.env[n] = leaf->coupling * std::pow(static_cast<double>(n), -leaf->envelope);
    }

    constexpr double SQRT3 = 1.7320508075688772935274463415058723669428;
    for (size_t n = 0; n <= nmax; ++n)
        t.sup_bound = std::max(t.sup_bound, std::fabs(t.det[n]) + std::fabs(t.env[n]) * SQRT3);
    return t;
}

EnsembleResult run_ensemble(const EnsembleTables& tables, const std::vector<LaneSpec>& lanes,
                            const std::vector<size_t>& checkpoints, Backend backend) {
    validate_run(tables, lanes, checkpoints, "run_ensemble");
    const size_t W = lanes.size();
    const size_t nmax = tables.nmax;

    EnsembleResult out;
    out.checkpoints = checkpoints;
    out.lanes.resize(W);
    detail::BlockFn fn = pick_block(backend, out.used);

    std::vector<double> u(W), unext(W), bs(W, 0.0);
    std::vector<int64_t> k(W, 0);
    std::vector<ScaledValue> acc(W);
    for (size_t l = 0; l < W; ++l) {
        u[l] = std::sin(lanes[l].theta);
        unext[l] = -std::cos(lanes[l].theta);
    }

    std::vector<double> coeff(BLOCK * W);
    size_t site = 0; // u holds phi(site)
    size_t cp = 0;

    auto flush = [&](size_t l) {
        if (bs[l] != 0.0) {
            acc[l].add(bs[l], 500 * k[l]);
            bs[l] = 0.0;
        }
    };

    while (site < nmax) {
        size_t blockend = site + (BLOCK - site % BLOCK);
        if (blockend > nmax) blockend = nmax;
        size_t steps = blockend - site;
        fill_coeff_rows(tables, lanes, site, steps, coeff);

        size_t done = 0;
        while (done < steps) {
            size_t stop = steps;
            if (cp < checkpoints.size() && checkpoints[cp] <= blockend)
                stop = checkpoints[cp] - site;
            fn(coeff.data() + done * W, stop - done, W, u.data(), unext.data(), bs.data());
            done = stop;
            if (cp < checkpoints.size() && checkpoints[cp] == site + done) {
                for (size_t l = 0; l < W; ++l) {
                    flush(l);
                    out.lanes[l].lognorm.push_back(0.5 * acc[l].log_abs());
                    out.lanes[l].logamp.push_back(0.5 * std::log(u[l] * u[l] + unext[l] * unext[l]) +
                                                  250.0 * LN2 * static_cast<double>(k[l]));
                }
                ++cp;
            }
        }

        site = blockend;
        for (size_t l = 0; l < W; ++l) {
            flush(l);
            rescale_lane(u[l], unext[l], k[l]);
        }
    }
    return out;
}

PairEnsembleResult run_ensemble_pairs(const EnsembleTables& tables,
                                      const std::vector<LaneSpec>& members,
                                      const std::vector<size_t>& checkpoints, Backend backend) {
    validate_run(tables, members, checkpoints, "run_ensemble_pairs");
    const size_t W = members.size();
    const size_t nmax = tables.nmax;

    PairEnsembleResult out;
    out.checkpoints = checkpoints;
    out.members.resize(W);
    detail::PairBlockFn fn = pick_pair_block(backend, out.used);

    std::vector<double> ua(W), una(W), ub(W), unb(W);
    std::vector<double> bsa(W, 0.0), bsb(W, 0.0), bsx(W, 0.0);
    std::vector<int64_t> ka(W, 0), kb(W, 0);
    std::vector<ScaledValue> acca(W), accb(W), accx(W);
    for (size_t l = 0; l < W; ++l) {
        ua[l] = std::sin(members[l].theta);
        una[l] = -std::cos(members[l].theta);
        double t2 = members[l].theta + PI / 2.0;
        ub[l] = std::sin(t2);
        unb[l] = -std::cos(t2);
    }

    std::vector<double> coeff(BLOCK * W);
    size_t site = 0;
    size_t cp = 0;

    auto flush = [&](size_t l) {
        if (bsa[l] != 0.0) {
            acca[l].add(bsa[l], 500 * ka[l]);
            bsa[l] = 0.0;
        }
        if (bsb[l] != 0.0) {
            accb[l].add(bsb[l], 500 * kb[l]);
            bsb[l] = 0.0;
        }
        if (bsx[l] != 0.0) {
            accx[l].add(bsx[l], 250 * (ka[l] + kb[l]));
            bsx[l] = 0.0;
        }
    };

    while (site < nmax) {
        size_t blockend = site + (BLOCK - site % BLOCK);
        if (blockend > nmax) blockend = nmax;
        size_t steps = blockend - site;
        fill_coeff_rows(tables, members, site, steps, coeff);

        size_t done = 0;
        while (done < steps) {
            size_t stop = steps;
            if (cp < checkpoints.size() && checkpoints[cp] <= blockend)
                stop = checkpoints[cp] - site;
            fn(coeff.data() + done * W, stop - done, W, ua.data(), una.data(), bsa.data(),
               ub.data(), unb.data(), bsb.data(), bsx.data());
            done = stop;
            if (cp < checkpoints.size() && checkpoints[cp] == site + done) {
                for (size_t l = 0; l < W; ++l) {
                    flush(l);
                    PairTrace& tr = out.members[l];
                    tr.lognorm1.push_back(0.5 * acca[l].log_abs());
                    tr.lognorm2.push_back(0.5 * accb[l].log_abs());
                    tr.logamp1.push_back(0.5 * std::log(ua[l] * ua[l] + una[l] * una[l]) +
                                         250.0 * LN2 * static_cast<double>(ka[l]));
                    tr.logamp2.push_back(0.5 * std::log(ub[l] * ub[l] + unb[l] * unb[l]) +
                                         250.0 * LN2 * static_cast<double>(kb[l]));
                    tr.cross_m.push_back(accx[l].m);
                    tr.cross_e2.push_back(accx[l].e2);
                }
                ++cp;
            }
        }

        site = blockend;
        for (size_t l = 0; l < W; ++l) {
            flush(l);
            rescale_lane(ua[l], una[l], ka[l]);
            rescale_lane(ub[l], unb[l], kb[l]);
        }
    }
    return out;
}

} // namespace halfline
