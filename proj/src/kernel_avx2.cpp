// AVX2 block kernel: four lanes per vector, explicit mul/sub/add intrinsics
// (no FMA) so each lane performs the same IEEE operations as the scalar
// reference.  The lane remainder runs the scalar sequence inline; this
// translation unit is built with contraction off, which keeps it from
// being fused behind our back.

#include "kernel_block.hpp"

#if defined(__AVX2__)
#include <immintrin.h>

namespace halfline::detail {

namespace {

void block_step_avx2(const double* coeff, std::size_t steps, std::size_t W,
                     double* u, double* unext, double* bs) {
    const std::size_t W4 = W - W % 4;
    for (std::size_t s = 0; s < steps; ++s) {
        const double* a = coeff + s * W;
        std::size_t l = 0;
        for (; l < W4; l += 4) {
            __m256d va = _mm256_loadu_pd(a + l);
            __m256d vn = _mm256_loadu_pd(unext + l);
            __m256d vu = _mm256_loadu_pd(u + l);
            __m256d vnext = _mm256_sub_pd(_mm256_mul_pd(va, vn), vu);
            _mm256_storeu_pd(u + l, vn);
            _mm256_storeu_pd(unext + l, vnext);
            __m256d vb = _mm256_loadu_pd(bs + l);
            vb = _mm256_add_pd(vb, _mm256_mul_pd(vn, vn));
            _mm256_storeu_pd(bs + l, vb);
        }
        for (; l < W; ++l) {
            double next = a[l] * unext[l] - u[l];
            u[l] = unext[l];
            unext[l] = next;
            bs[l] += u[l] * u[l];
        }
    }
}

void pair_block_step_avx2(const double* coeff, std::size_t steps, std::size_t W,
                          double* ua, double* uanext, double* bsa,
                          double* ub, double* ubnext, double* bsb, double* bsx) {
    const std::size_t W4 = W - W % 4;
    for (std::size_t s = 0; s < steps; ++s) {
        const double* a = coeff + s * W;
        std::size_t l = 0;
        for (; l < W4; l += 4) {
            __m256d va = _mm256_loadu_pd(a + l);

            __m256d vna = _mm256_loadu_pd(uanext + l);
            __m256d vua = _mm256_loadu_pd(ua + l);
            __m256d vnexta = _mm256_sub_pd(_mm256_mul_pd(va, vna), vua);
            _mm256_storeu_pd(ua + l, vna);
            _mm256_storeu_pd(uanext + l, vnexta);
            __m256d vb = _mm256_loadu_pd(bsa + l);
            vb = _mm256_add_pd(vb, _mm256_mul_pd(vna, vna));
            _mm256_storeu_pd(bsa + l, vb);

            __m256d vnb = _mm256_loadu_pd(ubnext + l);
            __m256d vub = _mm256_loadu_pd(ub + l);
            __m256d vnextb = _mm256_sub_pd(_mm256_mul_pd(va, vnb), vub);
            _mm256_storeu_pd(ub + l, vnb);
            _mm256_storeu_pd(ubnext + l, vnextb);
            vb = _mm256_loadu_pd(bsb + l);
            vb = _mm256_add_pd(vb, _mm256_mul_pd(vnb, vnb));
            _mm256_storeu_pd(bsb + l, vb);

            __m256d vx = _mm256_loadu_pd(bsx + l);
            vx = _mm256_add_pd(vx, _mm256_mul_pd(vna, vnb));
            _mm256_storeu_pd(bsx + l, vx);
        }
        for (; l < W; ++l) {
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

BlockFn avx2_block() { return &block_step_avx2; }
PairBlockFn avx2_pair_block() { return &pair_block_step_avx2; }

} // namespace halfline::detail

#else

namespace halfline::detail {
BlockFn avx2_block() { return nullptr; }
PairBlockFn avx2_pair_block() { return nullptr; }
} // namespace halfline::detail

#endif
