#pragma once
// Subordinate-solution detection and growth-exponent estimation.
//
// At a fixed energy the boundary-angle family phi_{1,t} contains at most one
// direction (up to scale) whose truncated norm is eventually negligible
// against its orthogonal partner.  Two ways to find it:
//  - golden-section minimization of the norm ratio at the horizon
//    (find_theta_star), which carries an O(H^-1/2) bias for power-law
//    dichotomies: the finite-horizon minimizer is the direction
//    L^2[0,H]-orthogonal to the dominant branch, not the asymptotic one;
//  - the small-eigenvector angle of the 2x2 Gram matrix of any solved pair,
//    read at several lengths and extrapolated in L (theta_star_curve +
//    extrapolate_theta), which classification uses.
// The growth comparison exponent
//   beta = liminf_L  ln ||phi_1||_L / ln ||phi_2||_L
// is read off a trailing geometric window, and energies are classified:
//   P  subordinate solution exists and is square-summable
//   S  subordinate solution exists but is not square-summable
//   L  no subordinate solution
// with "undecided" wherever the horizon does not support a clean call.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "halfline/kernels.hpp"
#include "halfline/model.hpp"
#include "halfline/propagate.hpp"

namespace halfline {

enum class Classification { P, S, L, undecided };
std::string to_string(Classification c);

// S-partition by comparing a trial exponent beta0 against the estimate
enum class SPart { Spp, Smm, Sp, Sm, undecided };
std::string to_string(SPart s);

// inverse pair of dimension transfer maps on [0,1]
double dimension_B(double alpha); // alpha / (2 - alpha)
double dimension_A(double beta);  // 2 beta / (1 + beta)

struct SubordinacyOptions {
    double subordinate_ratio = 0.1; // r(horizon) below this, with a falling trend: subordinate
    double absent_ratio = 0.5;      // minimum over angles above this: no subordinate solution
    double cauchy_tail = 1e-6;      // squared-norm tail fraction separating P from S
    double reg_tol = 0.02;          // slope margin for the regularity test
    double partition_tol = 0.05;    // beta comparison margin in the S-partition
    int scan_points = 16;
    int golden_iterations = 48;
    size_t per_decade = 16; // L-grid density
};

struct BetaEstimate {
    double value = 0.0;
    double halfwidth = 0.0; // window dispersion, not a rigorous error bar
    double window_lo = 0.0; // L-range the minimum was taken over
    double window_hi = 0.0;
};

struct ThetaSearchResult {
    std::optional<double> theta;    // absent: no subordinate direction (classification L)
    double log_ratio = 0.0;         // objective ln(||phi1||/||phi2||) at the horizon, at theta
    double scan_min_log_ratio = 0.0;// best value seen across the angle scan
    bool converged = true;
};

struct SubordinacyReport {
    double lambda = 0.0;
    std::optional<double> theta_star;
    std::optional<BetaEstimate> beta_hat; // present only for classification S
    bool regular = false;
    double growth_slope = 0.0; // fitted d ln||phi1||_L / d ln L over the trailing decade
    Classification classification = Classification::undecided;
    std::vector<double> L_grid;
    std::vector<double> log_ratio; // ln r(L) along L_grid, at theta_star (or best angle)
};

// Batched golden-section minimization over boundary angles on [0, pi).
// The objective maps one angle per member to one value per member; members
// advance in lockstep so ensemble backends can evaluate all of them in a
// single pass per iteration.
using BatchAngleObjective =
    std::function<std::vector<double>(const std::vector<double>&)>;
std::vector<ThetaSearchResult> golden_angle_search(const BatchAngleObjective& f, size_t members,
                                                   int scan_points, int iterations);

ThetaSearchResult find_theta_star(const PotentialSpec& V, double lambda, const Grid& grid,
                                  const SubordinacyOptions& opts = {});

// Spectral reading of the Gram matrix [[A,B],[B,C]] of a pair truncated at
// one length: A = ||phi1||^2, C = ||phi2||^2 as logs, B = <phi1,phi2> scaled.
// log_ratio = ln sqrt(lmin/lmax) is the exact minimum of the length-L norm
// ratio over all boundary directions; delta_min is the minimizing direction
// relative to the pair's own angle.  The eigenvalue subtraction bottoms out
// in cancellation noise near lmax * 1e-15, so log_ratio saturates around
// -17.3; the angle is unaffected (it never subtracts eigenvalues).
struct GramAngle {
    double delta_min = 0.0;
    double log_ratio = 0.0;
};
GramAngle gram_angle(double ln_norm1_sq, ScaledValue cross, double ln_norm2_sq);

// Truncated norms along the extremal Gram directions at one length:
// ln_norm_min/max = ln ||phi_dir||_L for the minimizing and maximizing
// boundary direction.  Reading branch growth off these curves needs no
// subordinate angle, so it avoids the finite-horizon rotation bias a fixed
// theta* carries; the min curve is only resolved down to the same
// cancellation floor as log_ratio (which is repeated here for saturation
// checks).
struct GramNorms {
    double ln_norm_min = 0.0;
    double ln_norm_max = 0.0;
    double log_ratio = 0.0;
};
GramNorms gram_norms(double ln_norm1_sq, ScaledValue cross, double ln_norm2_sq);

// The small Gram eigenvalue comes out of a near-cancelling subtraction, so it
// carries about eps * e^{-2 log_ratio} relative error: a few parts in 1e4 at
// log_ratio -14, percent level at -16.  Consumers treat points below this as
// unresolved.
constexpr double GRAM_RESOLVED = -14.0;

// theta*(L) at selected grid indices (absolute boundary angles in [0, pi))
struct ThetaCurvePoint {
    double L = 0.0;
    double theta = 0.0;
    double log_ratio = 0.0;
};
std::vector<ThetaCurvePoint> theta_star_curve(const SolutionPair& pair,
                                              const std::vector<size_t>& idx);

// Removes the leading power-law drift of the finite-length minimizer from
// three geometrically spaced samples theta*(H/16), theta*(H/4), theta*(H);
// returns theta*(H) unchanged when the drift does not contract cleanly.
double extrapolate_theta(double t16, double t4, double t1);

// theta* per ensemble member (member m uses seeds[m] for its disorder), read
// from Gram angles of one paired kernel pass and drift-extrapolated;
// log_ratio is the exact minimum of the horizon norm ratio over directions
struct EnsembleThetaResult {
    std::vector<double> theta;
    std::vector<double> log_ratio;
};
EnsembleThetaResult find_theta_star_ensemble(const EnsembleTables& tables, double lambda,
                                             const std::vector<uint64_t>& seeds,
                                             Backend backend = Backend::automatic,
                                             const SubordinacyOptions& opts = {});

// beta from a pair solved at theta_star; throws HypothesisError when phi1 is
// square-summable (caller should classify P instead)
BetaEstimate beta_estimate(const SolutionPair& pair, const SubordinacyOptions& opts = {});

// Ensemble beta via the Gram spectrum: the two eigen-norm curves are fitted
// against ln L over the trailing decade per member and beta is the ratio of
// the ensemble-mean slopes (mean-of-ratios would carry a Jensen bias, since
// the branch fluctuations are anti-correlated member by member).  The
// single-pair liminf reading keeps the norm intercepts as an O(1/ln L) bias
// and dips with every fluctuation; fitting slopes removes both, which
// matters for disordered ensembles.
BetaEstimate ensemble_beta_estimate(const EnsembleTables& tables, double lambda,
                                    const std::vector<uint64_t>& seeds,
                                    Backend backend = Backend::automatic);

// least-squares growth exponent of ln||phi1||_L vs ln L over the trailing
// decade; regular when it does not exceed 1/2 + reg_tol
std::pair<bool, double> regularity_check(const SolutionPair& pair, const SubordinacyOptions& opts = {});

SubordinacyReport classify_energy(const PotentialSpec& V, double lambda, const Grid& grid,
                                  const SubordinacyOptions& opts = {});

// ln of r_b(L) = ||phi1||_L / ||phi2||_L^b along an L grid
std::vector<double> log_rbeta_trace(const SolutionPair& pair, double beta,
                                    const std::vector<double>& L_grid);

SPart partition_S(double beta_hat, double beta0, const std::vector<double>& L_grid,
                  const std::vector<double>& log_rbeta0, double tol = 0.05);

// geometric L values spanning [1, horizon] on a pair's grid
std::vector<double> default_L_grid(const Grid& grid, size_t per_decade = 16);

std::string report_csv_header();
std::string report_csv_row(const SubordinacyReport& r);

} // namespace halfline
