#pragma once
// Problem statement types: half-line grids, boundary data, potential and
// perturbation families.  Continuum operators are -d^2/dx^2 + V on [0,inf);
// discrete operators act on u(n) as u(n+1) + u(n-1) + V(n)u(n), n >= 1.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "halfline/config.hpp"
#include "halfline/util.hpp"

namespace halfline {

enum class Kind { continuum, discrete };

struct Grid {
    Kind kind = Kind::continuum;
    double h = 0.01;      // continuum step; 1 for discrete
    size_t npoints = 0;   // points 0..npoints-1; x_i = i*h (continuum) or n = i (discrete)

    double x(size_t i) const { return kind == Kind::discrete ? static_cast<double>(i) : h * static_cast<double>(i); }
    double horizon() const { return npoints == 0 ? 0.0 : x(npoints - 1); }
    static Grid continuum(double horizon, double h);
    static Grid discrete(size_t nmax); // sites 0..nmax
};

// theta in [0, pi) selects the boundary condition; the pair solved downstream
// uses initial data (sin theta, -cos theta) and its orthogonal rotation.
struct BoundaryCondition {
    double theta = 0.0;
    double value0() const { return std::sin(theta); }
    double slope0() const { return -std::cos(theta); }
    BoundaryCondition orthogonal() const { return BoundaryCondition{theta + PI / 2.0}; }
    // canonical angle in [0, pi) and the sign picked up by the shift
    std::pair<double, int> canonical() const;
};

enum class Rule {
    zero,
    constant,          // c
    euler,             // c * x^-2 for x >= x_cut, frozen at x_cut below
    linear,            // slope * x
    anderson,          // coupling * X(n), X iid uniform[-sqrt3, sqrt3]; discrete only
    decaying_anderson, // coupling * n^-1/2 * X(n); discrete only
    tabulated,         // two-column table; interpolated (continuum) or indexed (discrete)
    sum,               // sum of sub-terms
    power_law,         // C * (1+x)^-eta * sign_rule
    exp_weighted,      // C * exp(-rate * x)
    compact_support    // explicit values on [0, support_end], or a smooth bump profile
};

enum class SignRule { plus, alternating, sinusoid };

struct Tabulated {
    std::vector<double> x, v;
};

struct PotentialSpec {
    Rule rule = Rule::zero;
    double c = 0.0;          // constant / euler coefficient / power-law and exp amplitudes
    double x_cut = 1.0;      // euler regularization point
    double slope = 0.0;      // linear
    double coupling = 0.0;   // random rules
    double envelope = 0.5;   // random envelope exponent p: coupling * n^-p * X(n)
    uint64_t seed = 1;       // random rules
    double eta = 2.0;        // power-law decay exponent
    double rate = 1.0;       // exp-weighted rate
    SignRule sign = SignRule::plus;
    double freq = 1.0;       // sinusoid sign rule frequency
    double support_end = 0.0;// compact support right edge
    double amplitude = 0.0;  // bump amplitude (compact_support without values)
    Tabulated tab;
    std::vector<PotentialSpec> terms;

    double evaluate(Kind kind, double x) const;
    // closed-form d/dx where the rule is smooth; nullopt otherwise
    std::optional<double> derivative(double x) const;
    std::optional<double> bound() const;
    bool has_random() const;
    // all deterministic content of this spec evaluated at x (random terms dropped)
    double deterministic_part(Kind kind, double x) const;

    std::vector<double> evaluate_grid(const Grid& g) const;

    static PotentialSpec zero_potential();
    static PotentialSpec constant(double c);
    static PotentialSpec euler(double c, double x_cut);
    static PotentialSpec linear(double slope);
    static PotentialSpec anderson(double coupling, uint64_t seed);
    static PotentialSpec decaying_anderson(double coupling, uint64_t seed);
    static PotentialSpec tabulated_values(Tabulated t);
    static PotentialSpec power_law(double C, double eta, SignRule s = SignRule::plus, double freq = 1.0);
    static PotentialSpec exp_weighted(double C, double rate);
    static PotentialSpec bump(double amplitude, double support_end);
    static PotentialSpec compact_values(std::vector<double> values, double support_end, Kind kind);
    PotentialSpec with_seed(uint64_t s) const;
};

// Perturbations use the same evaluation machinery; the distinct name marks
// intent (decaying W added to a background V0) and restricts config rules.
using PerturbationSpec = PotentialSpec;

PotentialSpec sum_potential(const PotentialSpec& a, const PotentialSpec& b);

// split spec into (deterministic evaluator handled by caller) + at most one
// random leaf; used by the lane kernels.  Throws if the random structure is
// richer than one iid leaf.
struct RandomLeaf {
    double coupling = 0.0;
    double envelope = 0.0;
    uint64_t seed = 0;
};
std::optional<RandomLeaf> single_random_leaf(const PotentialSpec& spec);

// grid construction per the step rule h * sqrt(|lambda| + sup|V|) <= 0.05;
// falls back to cap when the potential is unbounded
Grid grid_for(const PotentialSpec& V, double lambda, double horizon, double h_cap = 0.05);

Tabulated load_tabulated(const std::string& path);

PotentialSpec potential_from_config(const Config& cfg, const std::string& prefix, const std::string& base_dir);
PerturbationSpec perturbation_from_config(const Config& cfg, const std::string& prefix, const std::string& base_dir);

} // namespace halfline
