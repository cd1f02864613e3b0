#pragma once
// Solution pairs of the eigenvalue equation at a boundary angle theta:
//   continuum: -phi'' + V phi = lambda phi,  phi(0)=sin t, phi'(0)=-cos t
//   discrete:  phi(n+1) + phi(n-1) + V(n) phi(n) = lambda phi(n),
//              phi(0)=sin t, phi(1)=-cos t
// The second column is the same construction at t + pi/2, which makes the
// (modified) Wronskian of the pair exactly +1.
//
// Columns are stored as mantissa + power-of-two scale count so exponential
// growth/decay over long horizons stays representable: the true value is
// m * 2^(250*k).  Cumulative squared norms (the length-L truncations
// ||f||_L^2) are kept as natural logs per grid point.

#include <cstdint>
#include <string>
#include <vector>

#include "halfline/model.hpp"
#include "halfline/util.hpp"

namespace halfline {

inline constexpr int SCALE_BITS = 250; // rescale quantum: 2^250

struct SolutionPair {
    Grid grid;
    double lambda = 0.0;
    BoundaryCondition bc;
    std::vector<double> pot; // V at grid points

    // value slot m, companion slot d: (phi, phi') continuum; (phi(n), phi(n+1)) discrete
    std::vector<double> m1, d1, m2, d2;
    std::vector<int32_t> k1, k2;
    std::vector<double> ln1sq, ln2sq; // ln ||phi_j||_{x_i}^2, -inf at index 0
    std::vector<double> xm;           // cross inner product <phi_1, phi_2>_{x_i},
    std::vector<int64_t> xe2;         // stored as mantissa * 2^e2 (signed)

    size_t size() const { return m1.size(); }

    // <phi_1, phi_2> over the same truncation window as ln1sq/ln2sq
    ScaledValue cross(size_t i) const { return ScaledValue{xm[i], xe2[i]}; }

    double log_abs_phi(int column, size_t i) const;
    double phi(int column, size_t i) const;   // true value; +-inf on overflow
    double dphi(int column, size_t i) const;  // companion slot, true value

    // ln ||phi_column||_L (JL truncated norm), L in grid units
    double lognorm(int column, double L) const;

    // modified Wronskian at grid point i (discrete: site n = i)
    double wronskian(size_t i) const;
    double wronskian_drift() const; // max |W(i) - 1|

    double transfer_log_norm(size_t i) const; // ln ||T(0, x_i)||_2
    double transfer_log_det(size_t i) const;  // ln |det T(0, x_i)|
};

SolutionPair solve_pair(const PotentialSpec& V, double lambda, BoundaryCondition bc, const Grid& grid);

// Norm/growth data at selected grid indices only (no per-point storage);
// used by searches and fits where the full tables would be wasteful.
struct PairProbe {
    std::vector<size_t> idx;
    std::vector<double> lognorm1, lognorm2;   // ln ||phi_j||_{x_idx}
    std::vector<double> logamp1, logamp2;     // ln sqrt(phi^2 + companion^2)
    std::vector<double> translognorm;         // ln ||T(0, x_idx)||
};
PairProbe probe_pair(const PotentialSpec& V, double lambda, BoundaryCondition bc, const Grid& grid,
                     const std::vector<size_t>& checkpoints);

// -phi'' + (V - lambda) phi at interior points via the 4th-order 5-point
// stencil; entries 0,1,N-2,N-1 are set to 0.
std::vector<double> continuum_residual(const std::vector<double>& psi, const std::vector<double>& V,
                                       double lambda, double h);

// max over n of |psi(n+1) + psi(n-1) + (V-lambda) psi(n)| / local scale
double discrete_residual(const std::vector<double>& psi, const std::vector<double>& V, double lambda);

void pair_to_csv(const SolutionPair& pair, const std::string& path);

} // namespace halfline
