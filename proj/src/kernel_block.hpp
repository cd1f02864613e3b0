#pragma once
// Internal contract between the ensemble driver and its block kernels.
// A block function advances all W lanes by `steps` sites:
//   new = coeff[s*W + l] * unext[l] - u[l];  u <- unext;  unext <- new;
//   bs[l] += u[l]^2   (the freshly reached site value, squared)
// Implementations must keep this exact operation order per lane so the
// scalar and SIMD paths agree bitwise.

#include <cstddef>

namespace halfline::detail {

using BlockFn = void (*)(const double* coeff, std::size_t steps, std::size_t W,
                         double* u, double* unext, double* bs);

// Pair variant: lane l advances two columns of the same operator (shared
// coefficient row) and additionally accumulates the cross sum.  Exact order
// per step and lane:
//   column a as above into bsa;  column b as above into bsb;
//   bsx[l] += ua[l] * ub[l]
using PairBlockFn = void (*)(const double* coeff, std::size_t steps, std::size_t W,
                             double* ua, double* uanext, double* bsa,
                             double* ub, double* ubnext, double* bsb, double* bsx);

BlockFn scalar_block();
BlockFn avx2_block(); // nullptr when not compiled in
PairBlockFn scalar_pair_block();
PairBlockFn avx2_pair_block(); // nullptr when not compiled in

} // namespace halfline::detail
