#pragma once

#include <halfline/model.hpp>
#include <halfline/perturb.hpp>

#include <string>
#include <vector>

namespace halfline {

// Exponential comparison frame for a split potential V = V1 + V2 on the
// continuum half line.  V2 is the smooth tail part: the frame functions are
//   phi_+- = exp(+-eta),  eta(x) = integral_{s0}^x sqrt(V2 - lambda) dt
// below the tail energy (lambda < V2 eventually), and carry the real phase
// integral_{s0}^x sqrt(lambda - V2) above it.  s0 is the first grid point
// from which |V2| <= |lambda| holds out to the horizon, so the frame is
// anchored where the tail has entered its asymptotic window; eta is negative
// below s0 and increasing everywhere.
//
// Applying the full operator to the frame gives exactly
//   (-d^2/dx^2 + V1 + V2 - lambda) phi_+- = Q_+- phi_+-,
//   Q_+- = V1 -+ V2' / (2 eta'),
// because phi'' = (eta'^2 +- eta'') phi and eta'' = V2'/(2 eta').  Everything
// downstream (the first-order system, its envelope, the corrected frame) is
// an exact reformulation of the equation; the only numerical error is
// quadrature and iteration truncation.
struct WkbFrame {
    Grid grid;
    double lambda = 0.0;
    bool oscillatory = false;  // lambda above the tail: eta stores a phase, |phi_+-| = 1
    double s0 = 0.0;
    size_t s0_index = 0;

    std::vector<double> eta;       // exponent (or phase) at grid points, 0 at s0
    std::vector<double> eta_rate;  // eta' = sqrt(|V2 - lambda|) > 0
    std::vector<double> v1, v2;    // the two parts at grid points
    std::vector<double> chi;       // V2' / (2 eta_rate), the frame defect rate
    // Q_+- as above; oscillatory frames store the modulus |V1 +- i chi| in
    // both slots (the two are conjugate, so the moduli coincide)
    std::vector<double> q_plus, q_minus;
    std::vector<double> w;          // frame Wronskian magnitude 2 eta_rate
    std::vector<double> pot_total;  // V1 + V2, for residual checks
    double q_plus_l1 = 0.0, q_minus_l1 = 0.0;  // integral of |Q_+-| over the grid

    // exponential branches; meaningful when !oscillatory (moduli are 1 above)
    double phi_plus(size_t i) const;
    double phi_minus(size_t i) const;
};

// Builds the frame on the given continuum grid.  V2 must be deterministic and
// differentiable; rules without a closed-form derivative fall back to second
// order differences of the evaluated tail.  Throws std::invalid_argument for
// discrete grids, lambda = 0, or a random tail part, and HypothesisError when
// |V2| never settles under |lambda| before the horizon or the window contains
// a turning point (V2 - lambda changes sign against the frame's branch).
WkbFrame build_wkb_frame(const PotentialSpec& V1, const PotentialSpec& V2, double lambda,
                         const Grid& grid);

// First-order system for psi = u1 phi_- + u2 phi_+ under the variation
// constraint u1' phi_- + u2' phi_+ = 0:
//   a11 = -Q-/w, a12 = -Q+ e^{2 eta}/w, a21 = +Q- e^{-2 eta}/w, a22 = +Q+/w.
// det A = 0 at every point but a22 != -a11 (the matrix is not the rank-one
// pair form), so rank_one is false.  Exponential frames only: the oscillatory
// system is complex and lives inside wkb_solve.
CoefficientMatrix build_general_A(const WkbFrame& frame);

// Natural weights f_+- = e^{+-2 eta} for the frame's system; with these the
// envelope of build_G collapses to G = (|Q-| + |Q+|)/w on the nose.
// Exponential frames only.
WeightPair wkb_weights(const WkbFrame& frame);

// One frame branch of the solved equation.  Below the tail energy u1, u2,
// psi, dpsi are the real coordinates, solution and derivative; above it the
// system is complex and all four store moduli.  ratio = psi/phi and dratio =
// psi'/phi' at the trace indices (moduli above the tail energy); both tend to
// the same constant when the envelope is integrable.
struct WkbBranch {
    Branch branch = Branch::u_minus;
    std::vector<double> u1, u2;
    std::vector<double> psi, dpsi;
    std::vector<double> ratio, dratio;
    double ratio_limit = 0.0;   // ratio at the last trace point
    double dratio_limit = 0.0;
    double ratio_drift = 0.0;   // max |ratio - ratio_limit| over the trailing decade
    int iterations = 0;
    std::vector<double> iter_sup;
    size_t x0_index = 0;        // series anchor (exponential route)
    double tail_at_x0 = 0.0;    // contraction constant in force at the anchor
    double residual_sup = 0.0;  // max scaled equation residual on the interior
};

struct WkbSolution {
    WkbFrame frame;
    std::vector<size_t> idx;  // geometric trace checkpoints
    WkbBranch minus, plus;
    double contraction = 0.0;  // integral of the envelope over the whole grid
};

// Solves -psi'' + (V1 + V2) psi = lambda psi along both frame branches.
// Below the tail energy this runs the weighted successive-approximation
// series in the frame's coordinates; above it both branches are built by the
// unweighted tail iteration of the complex system (Volterra, so the terms
// decay factorially once the envelope integral is passed).  The exponential
// route needs 2 eta(horizon) < 700 or the weights overflow (HypothesisError);
// use corrected_asymptotics for long windows.
WkbSolution wkb_solve(const PotentialSpec& V1, const PotentialSpec& V2, double lambda,
                      const Grid& grid, const SeriesOptions& opts = {});

// Corrected frame: eta_+- = phi_+- exp(+- integral_0^x U_+- / (2 eta') dt)
// with U_+- = Q_+- absorbs the first-order effect of V1 into the asymptotics.
// corr_+- stores the correction factors; their logs obey the a-priori bound
// |ln corr| <= ||U||_2 sup(1/(2 eta')) sqrt(x) (Cauchy-Schwarz), recorded as
// envelope_c and checked on the grid.  The two-sided kernel
//   K(x, y) = e^{g(x) - g(y)},  g = 2 eta + integral_0^x (U- + U+)/(2 eta'),
// controls the remainder: kernel_sup = sup_{y >= x} K, kernel_integral =
// integral of sup_x K(x, x + y) dy (scanned until the rows fall 14 orders,
// then closed by the fitted decay rate as kernel_tail_bound).
struct CorrectedFrame {
    WkbFrame frame;
    std::vector<double> corr_plus, corr_minus;
    std::vector<double> g;      // two-sided kernel exponent
    double envelope_c = 0.0;    // Cauchy-Schwarz constant, worse of the two signs
    double envelope_sup = 0.0;  // measured sup of |ln corr| / sqrt(x)
    bool envelope_ok = false;
    double bigger_inf = 0.0;    // inf of phi_+ phi_- (identically 1 for this frame)
    double kernel_sup = 0.0;
    double kernel_integral = 0.0;
    double kernel_tail_bound = 0.0;

    double eta_plus(size_t i) const;   // phi_+ corr_+
    double eta_minus(size_t i) const;  // phi_- corr_-
};

// Corrected-asymptotics solution.  The decaying solution is produced by the
// tail iteration of the z system
//   z1' = -(U+/w) e^{+g} z2,  z2' = +(U-/w) e^{-g} z1,
// seeded (1, 0) at the horizon, so psi = z1 eta_- + z2 eta_+ and
// psi/eta_- = z1 + z2 e^g -> 1.  The growing companion is integrated forward
// from (0, 1) in double grid strides and normalized at the horizon; its ratio
// psi/eta_+ = z1 e^{-g} + z2 is a diagnostic of the same limit structure.
// iter_sup records the weighted term sups max(|t1|, e^g |t2|).
//
// When U is square- but not absolutely integrable the ratio approaches its
// limit through an oscillation whose envelope is the L2 tail of U (that slow
// tail is exactly why the correction factor exists), so the limit is read as
// the mean over the trailing tenth of the window, taken at full grid
// resolution to keep the phases fair; the envelope over the same stretch is
// recorded alongside.
struct CorrectedSolution {
    CorrectedFrame corrected;
    std::vector<size_t> idx;
    std::vector<double> z1, z2;            // decaying-solution coordinates on the grid
    std::vector<double> ratio_minus;       // psi/eta_- at idx
    std::vector<double> ratio_plus;        // companion ratio at idx (even indices)
    double ratio_minus_drift = 0.0;        // max |ratio_minus - 1| over the trailing decade
    double ratio_plus_drift = 0.0;         // max |ratio_plus - 1| over the trailing decade
    double ratio_minus_mean = 0.0;         // grid mean of psi/eta_- over the trailing tenth
    double ratio_minus_envelope = 0.0;     // max |psi/eta_- - 1| over the same stretch
    double ratio_plus_mean = 0.0;          // companion mean over its sampled trailing tenth
    int iterations = 0;
    std::vector<double> iter_sup;
};

// Builds the corrected frame and solves along it.  Only the region below the
// tail energy is covered (lambda >= 0 throws std::invalid_argument: above the
// tail the correction integrals need not settle).  Throws HypothesisError
// when the kernel rows fail to decay across the window or the tail iteration
// does not converge.  Usable far beyond wkb_solve's horizon since everything
// exponential is handled through g; the hard ceiling is g(horizon) < 700.
CorrectedSolution corrected_asymptotics(const PotentialSpec& V1, const PotentialSpec& V2,
                                        double lambda, const Grid& grid,
                                        const SeriesOptions& opts = {});

// Trace tables at the checkpoint indices, %.17g columns.  Oscillatory
// solutions write moduli (documented in the header row by the _abs suffix).
void wkb_to_csv(const WkbSolution& sol, const std::string& path);
void corrected_to_csv(const CorrectedSolution& sol, const std::string& path);

}  // namespace halfline
