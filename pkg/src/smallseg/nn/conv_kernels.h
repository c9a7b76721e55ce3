/* Same-padded 3-D cross-correlation on flattened, zero-padded channel planes.
 *
 * Each channel is one contiguous run of the padded volume. A kernel tap is a
 * constant flat offset, so output position p is sum_k w[k] * x[p + off[k]].
 * Positions in the padding band are computed too and discarded by the caller.
 * Buffers must carry SS_VEC elements of slack past the last position read.
 */
#ifndef SMALLSEG_CONV_KERNELS_H
#define SMALLSEG_CONV_KERNELS_H

#include <stddef.h>
#include <string.h>

#define SS_VEC 16  /* tail slack: the widest tile in positions */
#define SS_COB 4   /* output channels per tile (cout is padded to a multiple) */
#define SS_KB 9    /* taps per weight-gradient tile */

/* Register tiles use GCC vector extensions; unaligned loads go through memcpy. */
#define SS_DEFINE_CONV(T, SUFFIX, V)                                                     \
typedef T ss_vec_##SUFFIX __attribute__((vector_size(V * sizeof(T))));           \
                                                                                      \
static inline ss_vec_##SUFFIX ss_load_##SUFFIX(const T *p)                            \
{                                                                                     \
    ss_vec_##SUFFIX v;                                                                \
    memcpy(&v, p, sizeof v);                                                          \
    return v;                                                                         \
}                                                                                     \
                                                                                      \
/* out[co, p] = bias[co] + sum_{ci,k} w[co, ci, k] * xp[ci, p + offs[k]] */            \
static void conv_fwd_##SUFFIX(const T *xp, ptrdiff_t xstride, const T *w,            \
                              const T *bias, ptrdiff_t cout, ptrdiff_t cin,           \
                              ptrdiff_t nk, const ptrdiff_t *offs, ptrdiff_t start,   \
                              ptrdiff_t stop, T *out, ptrdiff_t ostride)              \
{                                                                                     \
    for (ptrdiff_t b0 = start; b0 < stop; b0 += V) {                             \
        for (ptrdiff_t co = 0; co < cout; co += SS_COB) {                             \
            ss_vec_##SUFFIX a0, a1, a2, a3;                                           \
            const T *wr0 = w + (co + 0) * cin * nk, *wr1 = w + (co + 1) * cin * nk;   \
            const T *wr2 = w + (co + 2) * cin * nk, *wr3 = w + (co + 3) * cin * nk;   \
            a0 = a1 = a2 = a3 = (ss_vec_##SUFFIX){0};                                 \
            if (bias) {                                                               \
                a0 += bias[co]; a1 += bias[co + 1];                                   \
                a2 += bias[co + 2]; a3 += bias[co + 3];                               \
            }                                                                         \
            for (ptrdiff_t ci = 0; ci < cin; ++ci) {                                  \
                const T *xc = xp + ci * xstride + b0;                                 \
                const ptrdiff_t wo = ci * nk;                                         \
                for (ptrdiff_t k = 0; k < nk; ++k) {                                  \
                    const ss_vec_##SUFFIX v = ss_load_##SUFFIX(xc + offs[k]);         \
                    a0 += wr0[wo + k] * v;                                            \
                    a1 += wr1[wo + k] * v;                                            \
                    a2 += wr2[wo + k] * v;                                            \
                    a3 += wr3[wo + k] * v;                                            \
                }                                                                     \
            }                                                                         \
            memcpy(out + (co + 0) * ostride + b0, &a0, sizeof a0);                    \
            memcpy(out + (co + 1) * ostride + b0, &a1, sizeof a1);                    \
            memcpy(out + (co + 2) * ostride + b0, &a2, sizeof a2);                    \
            memcpy(out + (co + 3) * ostride + b0, &a3, sizeof a3);                    \
        }                                                                             \
    }                                                                                 \
}                                                                                     \
                                                                                      \
/* dw[co, ci, k] += sum_p dop[co, p] * xp[ci, p + offs[k]] over p in [start, stop) */  \
static void conv_wgrad_##SUFFIX(const T *dop, ptrdiff_t dstride, const T *xp,        \
                                ptrdiff_t xstride, ptrdiff_t cout, ptrdiff_t cin,     \
                                ptrdiff_t nk, const ptrdiff_t *offs,                  \
                                ptrdiff_t start, ptrdiff_t stop, T *dw)               \
{                                                                                     \
    for (ptrdiff_t co = 0; co < cout; ++co) {                                         \
        const T *d = dop + co * dstride;                                              \
        for (ptrdiff_t ci = 0; ci < cin; ++ci) {                                      \
            const T *xc = xp + ci * xstride;                                          \
            for (ptrdiff_t k0 = 0; k0 < nk; k0 += SS_KB) {                            \
                const int kb = (nk - k0 < SS_KB) ? (int)(nk - k0) : SS_KB;            \
                const T *src[SS_KB];                                                  \
                for (int t = 0; t < SS_KB; ++t)                                       \
                    src[t] = xc + offs[k0 + (t < kb ? t : 0)];                        \
                ss_vec_##SUFFIX part[SS_KB];                                          \
                for (int t = 0; t < SS_KB; ++t) part[t] = (ss_vec_##SUFFIX){0};       \
                for (ptrdiff_t p = start; p < stop; p += V) {                    \
                    const ss_vec_##SUFFIX dv = ss_load_##SUFFIX(d + p);               \
                    for (int t = 0; t < SS_KB; ++t)                                   \
                        part[t] += dv * ss_load_##SUFFIX(src[t] + p);                 \
                }                                                                     \
                for (int t = 0; t < kb; ++t) {                                        \
                    T sum = 0;                                                        \
                    for (int j = 0; j < V; ++j) sum += part[t][j];               \
                    dw[(co * cin + ci) * nk + k0 + t] += sum;                         \
                }                                                                     \
            }                                                                         \
        }                                                                             \
    }                                                                                 \
}

SS_DEFINE_CONV(float, f32, 16)
SS_DEFINE_CONV(double, f64, 8)

#endif
