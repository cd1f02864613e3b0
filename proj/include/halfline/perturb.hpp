#pragma once
// Variation of parameters for decaying perturbations.  A solution psi of the
// perturbed equation is written as psi = u1 phi_- + u2 phi_+ against a solved
// unperturbed pair; the coefficient vector u then satisfies a first-order
// system u' = A u (continuum) or u(n+1) - u(n) = A(n) u(n) (discrete) whose
// entries decay with the perturbation.  A pair of monotone weights (f+, f-)
// with f+ f- >= 1 trades the growth of one off-diagonal entry against the
// decay of the other; the scalar envelope
//   G = max(|a11| + |a12| f-, |a21| f+ + |a22|)
// dominates A in the weighted norms below, so once the tail integral of G
// drops under 1/3 the successive-approximation series contracts geometrically
// and the horizon limits of u are pinned to the seed direction.
//
// Everything here works in plain doubles: the weighted combinations that
// matter (u against f+/f-) stay O(1) by construction, and the raw factors
// only cover desk-scale horizons, far inside the double exponent range.

#include <cstddef>
#include <string>
#include <vector>

#include "halfline/model.hpp"
#include "halfline/propagate.hpp"

namespace halfline {

// series anchor rule: iteration starts at the first grid point whose G tail
// does not exceed this (the quantitative constant that also bounds the
// forward-branch normalization drift |alpha - 1| <= 1/2)
inline constexpr double SERIES_CONTRACTION = 1.0 / 3.0;

struct CoefficientMatrix {
    Grid grid;
    double lambda = 0.0;
    // built from a solution pair: a22 = -a11 exactly and det = 0 up to
    // rounding at every point (the general first-order form drops this)
    bool rank_one = true;
    std::vector<double> a11, a12, a21, a22;
    std::vector<double> pot_total; // V0 + W at grid points, for residual checks
};

// Coefficient field of the perturbed system against the pair's frame:
//   continuum  A = -(W/w) [[p+ p-, p+^2], [-p-^2, -p+ p-]],  w = p- p+' - p-' p+
//   discrete   A = +(W/w) [[p+ p-, p+^2], [-p-^2, -p+ p-]],  w = p-(n) p+(n+1) - p+(n) p-(n+1)
// The signs differ because the discrete increment is eliminated against the
// one-step frame at (n, n+1) rather than the derivative frame at x.  w is the
// pair's measured Wronskian at each point, so rescaled pairs work unchanged.
// Discrete site 0 carries no potential term and gets A(0) = 0.
CoefficientMatrix build_A(const PerturbationSpec& W, const SolutionPair& pair);

// Weight pair on a grid; G and its tail table are filled by build_G.
// tail[i] = integral of G from x_i to the horizon (trapezoid), or the sum
// over sites k >= i in the discrete case.
struct WeightPair {
    Grid grid;
    std::vector<double> f_plus, f_minus;
    std::vector<double> G;
    std::vector<double> tail;
    bool has_G() const { return !G.empty(); }
};

WeightPair unit_weights(const Grid& grid);
// f+- = exp((+-2 gamma + 2 eps1) x); needs 0 <= eps1 < gamma so f- decreases
WeightPair exp_weights(const Grid& grid, double gamma, double eps1);
// f+ = max(1, x)^mu_plus, f- = 1; the floor keeps f+ f- >= 1 near 0
WeightPair power_weights(const Grid& grid, double mu_plus);
// weight margin for exponential dichotomies: half of min(gamma, eps/4), so
// f- still decreases and the envelope e^{4 eps1 x} |W| stays integrable when
// e^{eps x} |W| is
double eps1_for(double gamma, double eps);

// f+(x) = (1+x) * running sup of |phi2| (nondecreasing by construction),
// f- = 1/f+.  Requires the first column to be bounded: if |phi1| peaks in the
// trailing stretch of the grid the square-summable-and-bounded hypothesis is
// not believable at this horizon and the call throws.
WeightPair choose_weights_point(const SolutionPair& pair);

enum class NormSide { plus, minus };

// ||w||+ = max(|w1|, |w2| f+(x_i)); ||w||- = max(f-(x_i) |w1|, |w2|)
double weighted_norm(double w1, double w2, const WeightPair& weights, size_t i, NormSide side);

// Fill G and its tail table.  Validates f+ f- >= 1 (to rounding), f+
// nondecreasing, f- nonincreasing.
WeightPair build_G(const CoefficientMatrix& A, const WeightPair& weights);

// Power-weight selection for a growth exponent beta in (0,1] against an
// envelope decay |W| <= C (1+x)^-eta: feasible iff eta > 1/beta, in which
// case mu_plus is the midpoint of (1/beta - 1, eta - 1) and the two side
// conditions 1/2 + 1/(2 beta) < eta and 1/beta < eta hold automatically.
struct PowerWeightChoice {
    bool feasible = false;
    double mu_plus = 0.0;
    double window_lo = 0.0, window_hi = 0.0;
    std::string reason; // set when infeasible
};
PowerWeightChoice choose_weights_power(double beta_hat, double eta);

enum class Branch { u_minus, u_plus };

struct SeriesOptions {
    size_t x0_hint = 0;       // requested anchor; advanced until the tail contracts
    double stop_sup = 1e-12;  // stop once a term's weighted sup drops below this
    int max_iterations = 60;
};

// Successive-approximation solution of the u system.
//   u_minus: seed (1,0), terms integrate the tail from x to the horizon;
//            limits u1 -> 1, f+ u2 -> 0.
//   u_plus:  seed (0,1).  When f- decays (f-(H) < f-(x0)/2) terms integrate
//            forward from x0 and the sum is normalized by its second
//            component at the horizon (kept within 1/2 of 1 by contraction);
//            otherwise f- is essentially level, the plain tail construction
//            converges, and the branch is built from the horizon like u_minus.
// u is stored on the full grid: the series covers [x0, horizon] and the
// segment below x0 is continued through the same one-step relation (exact
// 2x2 inversion in the discrete case, trapezoid steps in the continuum).
struct SeriesSolution {
    Branch branch = Branch::u_minus;
    Grid grid;
    double lambda = 0.0;
    size_t x0_index = 0;
    double tail_at_x0 = 0.0;       // contraction constant actually in force
    std::vector<double> u1, u2;
    int iterations = 0;            // Picard terms beyond the seed
    std::vector<double> iter_sup;  // weighted sup of each term, seed first
    double alpha = 1.0;            // forward-branch normalizer
    bool from_infinity = false;    // u_plus built by the tail route
    double limit_defect = 0.0;     // worst trailing-window distance from the
                                   // seed limits, minus its contraction bound
    std::vector<double> pot_total; // carried over from A for residual checks
};

SeriesSolution series_solve(const CoefficientMatrix& A, const WeightPair& weights, Branch branch,
                            const SeriesOptions& opts = {});

// psi = u1 phi_- + u2 phi_+ and its companion (derivative / next-site value),
// with the recursion residual of the perturbed equation checked on the grid
// interior: scaled residual above 10x the tolerance throws.
struct PsiTrace {
    Grid grid;
    std::vector<double> psi, dpsi;
    std::vector<double> cumnorm_sq; // truncated squared norm up to x_i
    double max_residual = 0.0;      // max |residual| / (1 + |psi|)
};
PsiTrace reconstruct_psi(const SeriesSolution& series, const SolutionPair& pair,
                         double residual_tol = 1e-6);

// Change of variables u -> (u1, u2 f+): the system splits into an integrable
// part A1 = [[a11, a12/f+], [a21 f+, a22]] (row sums bounded by G) plus the
// diagonal rate alpha2 = f+'/f+ (continuum) or f+(n+1)/f+(n) - 1 (discrete).
// bounded reports that the accumulated rate difference between the rows is
// one-sided, which holds exactly when f+ is monotone.
struct LevinsonReduction {
    Grid grid;
    std::vector<double> b11, b12, b21, b22;
    std::vector<double> alpha2;
    bool bounded = true;
};
LevinsonReduction levinson_reduce(const CoefficientMatrix& A, const std::vector<double>& f_plus);

// One-pass construction of the same branches through the reduced system:
// Runge-Kutta strides over two grid cells in the continuum (so true midpoint
// entries are available) anchored at the horizon (tail branches) or at x0
// (forward branch); the discrete case runs the exact one-step recursion.
// Values land on every other grid index in the continuum.  Used as a
// cross-method check against series_solve.
struct LevinsonSolution {
    std::vector<size_t> idx;
    std::vector<double> u1, u2;
    double alpha = 1.0;
    size_t x0_index = 0;
};
LevinsonSolution levinson_solve(const CoefficientMatrix& A, const WeightPair& weights, Branch branch);

// Integrability forecast for the cross term: fits |W| against (1+x)^-a and
// ||phi+||_L ||phi-||_L against (1+L)^b on the trailing decade; the integral
// of |W phi+ phi-| converges when a > b.  g tracks the running integral of
// |phi+ phi-| (the primitive the integration-by-parts bound runs on).
struct ProductTailDiag {
    double a = 0.0, b = 0.0;
    bool integrable = false;
    double integral_to_horizon = 0.0;
    double g_at_horizon = 0.0;
};
ProductTailDiag product_tail_diag(const SolutionPair& pair, const PerturbationSpec& W);

// Trailing-decade growth slopes of ln||phi_j||_L in ln L against the windows
// a growth exponent beta admits for a regular energy:
//   ||phi1||: [1 - 1/(2 beta) - eps, 1/2 + eps]
//   ||phi2||: [1/2 - eps, 1/(2 beta) + eps]
// Used to explain weight-feasibility failures (a slope outside its window
// means the norm growth contradicts beta-regularity at this horizon).
struct GrowthWindowCheck {
    double slope_minus = 0.0, slope_plus = 0.0;
    double lo_minus = 0.0, hi_minus = 0.0;
    double lo_plus = 0.0, hi_plus = 0.0;
    bool in_window_minus = false, in_window_plus = false;
};
GrowthWindowCheck growth_window_check(const SolutionPair& pair, double beta, double eps = 0.05);

} // namespace halfline
