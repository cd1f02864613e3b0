// Reference block kernel.  Compiled with contraction disabled; every
// floating-point operation here defines the sequence the SIMD variants
// must reproduce exactly.

#include "kernel_block.hpp"

namespace halfline::detail {

namespace {

void block_step_scalar(const double* coeff, std::size_t steps, std::size_t W,
                       double* u, double* unext, double* bs) {
    for (std::size_t s = 0; s < steps; ++s) {
        const double* a = coeff + s * W;
        for (std::size_t l = 0; l < W; ++l) {
            double next = a[l] * unext[l] - u[l];
            u[l] = unext[l];
            unext[l] = next;
            bs[l] += u[l] * u[l];
        }
    }
}

void pair_block_step_scalar(const double* coeff, std::size_t steps, std::size_t W,
                            double* ua, double* uanext, double* bsa,
                            double* ub, double* ubnext, double* bsb, double* bsx) {
    for (std::size_t s = 0; s < steps; ++s) {
        const double* a = coeff + s * W;
        for (std::size_t l = 0; l < W; ++l) {
            double na = a[l] * uanext[l] - ua[l];
            ua[l] = uanext[l];
            uanext[l] = na;
            bsa[l] += ua[l] * ua[l];
            double nb = a[l] * ubnext[l] - ub[l];
            ub[l] = ubnext[l];
            ubnext[l] = nb;
            bsb[l] += ub[l] * ub[l];
            bsx[l] += ua[l] * ub[l];
        }
    }
}

} // namespace

BlockFn scalar_block() { return &block_step_scalar; }
PairBlockFn scalar_pair_block() { return &pair_block_step_scalar; }

} // namespace halfline::detail
