// AVX2 + FMA kernels. Compiled with -mavx2 -mfma; only reached through the
// dispatcher after a CPUID check. Tails are handled with masked loads so
// every element goes through the same vector code path.

#include "polsens/kernels.hpp"

#if defined(__x86_64__) && defined(__AVX2__) && defined(__FMA__)

#include <immintrin.h>

namespace polsens::kernels::avx2_impl {
namespace {

inline __m256i tail_mask(std::size_t rem) {
  return _mm256_cmpgt_epi64(_mm256_set1_epi64x(static_cast<long long>(rem)),
                            _mm256_setr_epi64x(0, 1, 2, 3));
}

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

inline __m256d vabs(__m256d x) {
  return _mm256_andnot_pd(_mm256_set1_pd(-0.0), x);
}

// exp(x) by range reduction x = n ln2 + r, |r| <= ln2/2, and a degree-13
// Taylor polynomial; relative error below 1e-16 on [-708, 709].
inline __m256d vexp(__m256d x) {
  x = _mm256_max_pd(x, _mm256_set1_pd(-708.0));
  x = _mm256_min_pd(x, _mm256_set1_pd(709.0));
  const __m256d n = _mm256_round_pd(
      _mm256_mul_pd(x, _mm256_set1_pd(1.4426950408889634)),
      _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(n, _mm256_set1_pd(0.693145751953125), x);
  r = _mm256_fnmadd_pd(n, _mm256_set1_pd(1.42860682030941723212e-6), r);

  __m256d p = _mm256_set1_pd(1.0 / 6227020800.0);  // 1/13!
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 479001600.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 39916800.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 3628800.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 362880.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 40320.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 5040.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 720.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 120.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 24.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 6.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(0.5));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0));

  // 2^n through the exponent field; n is integral and |n| < 1100.
  const __m256d magic = _mm256_set1_pd(6755399441055744.0);  // 2^52 + 2^51
  const __m256i ni = _mm256_sub_epi64(
      _mm256_castpd_si256(_mm256_add_pd(n, magic)), _mm256_castpd_si256(magic));
  const __m256i bits =
      _mm256_slli_epi64(_mm256_add_epi64(ni, _mm256_set1_epi64x(1023)), 52);
  return _mm256_mul_pd(p, _mm256_castsi256_pd(bits));
}

// log(1 + z) for z in [0, 1] via 2 atanh(s) with |s| <= 0.1716.
inline __m256d vlog1p_unit(__m256d z) {
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d two = _mm256_set1_pd(2.0);
  const __m256d small_s = _mm256_div_pd(z, _mm256_add_pd(two, z));
  const __m256d large_s = _mm256_div_pd(_mm256_sub_pd(z, one),
                                        _mm256_add_pd(z, _mm256_set1_pd(3.0)));
  const __m256d is_large =
      _mm256_cmp_pd(z, _mm256_set1_pd(0.41421356237309503), _CMP_GT_OQ);
  const __m256d s = _mm256_blendv_pd(small_s, large_s, is_large);
  const __m256d t = _mm256_mul_pd(s, s);
  __m256d p = _mm256_set1_pd(1.0 / 21.0);
  p = _mm256_fmadd_pd(p, t, _mm256_set1_pd(1.0 / 19.0));
  p = _mm256_fmadd_pd(p, t, _mm256_set1_pd(1.0 / 17.0));
  p = _mm256_fmadd_pd(p, t, _mm256_set1_pd(1.0 / 15.0));
  p = _mm256_fmadd_pd(p, t, _mm256_set1_pd(1.0 / 13.0));
  p = _mm256_fmadd_pd(p, t, _mm256_set1_pd(1.0 / 11.0));
  p = _mm256_fmadd_pd(p, t, _mm256_set1_pd(1.0 / 9.0));
  p = _mm256_fmadd_pd(p, t, _mm256_set1_pd(1.0 / 7.0));
  p = _mm256_fmadd_pd(p, t, _mm256_set1_pd(1.0 / 5.0));
  p = _mm256_fmadd_pd(p, t, _mm256_set1_pd(1.0 / 3.0));
  p = _mm256_fmadd_pd(p, t, one);
  const __m256d atanh2 = _mm256_mul_pd(_mm256_mul_pd(two, s), p);
  const __m256d offset = _mm256_and_pd(
      is_large, _mm256_set1_pd(0.69314718055994530942));
  return _mm256_add_pd(atanh2, offset);
}

inline __m256d vsoftplus(__m256d eta) {
  const __m256d z = vexp(_mm256_sub_pd(_mm256_setzero_pd(), vabs(eta)));
  return _mm256_add_pd(_mm256_max_pd(eta, _mm256_setzero_pd()),
                       vlog1p_unit(z));
}

inline __m256d vlogistic(__m256d eta) {
  const __m256d z = vexp(_mm256_sub_pd(_mm256_setzero_pd(), vabs(eta)));
  const __m256d q = _mm256_div_pd(_mm256_set1_pd(1.0),
                                  _mm256_add_pd(_mm256_set1_pd(1.0), z));
  const __m256d nonneg =
      _mm256_cmp_pd(eta, _mm256_setzero_pd(), _CMP_GE_OQ);
  return _mm256_blendv_pd(_mm256_mul_pd(z, q), q, nonneg);
}

double sum(const double* x, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(x + i));
    acc1 = _mm256_add_pd(acc1, _mm256_loadu_pd(x + i + 4));
  }
  for (; i + 4 <= n; i += 4) acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(x + i));
  if (i < n) acc1 = _mm256_add_pd(acc1, _mm256_maskload_pd(x + i, tail_mask(n - i)));
  return hsum(_mm256_add_pd(acc0, acc1));
}

double dot(const double* x, const double* y, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4),
                           _mm256_loadu_pd(y + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4)
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
  if (i < n) {
    const __m256i m = tail_mask(n - i);
    acc1 = _mm256_fmadd_pd(_mm256_maskload_pd(x + i, m),
                           _mm256_maskload_pd(y + i, m), acc1);
  }
  return hsum(_mm256_add_pd(acc0, acc1));
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i),
                                            _mm256_loadu_pd(y + i)));
  if (i < n) {
    const __m256i m = tail_mask(n - i);
    _mm256_maskstore_pd(y + i, m,
                        _mm256_fmadd_pd(va, _mm256_maskload_pd(x + i, m),
                                        _mm256_maskload_pd(y + i, m)));
  }
}

void affine(double a, double b, const double* x, double c, const double* u,
            double* out, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  const __m256d vb = _mm256_set1_pd(b);
  const __m256d vc = _mm256_set1_pd(c);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d t = _mm256_fmadd_pd(vb, _mm256_loadu_pd(x + i), va);
    _mm256_storeu_pd(out + i, _mm256_fmadd_pd(vc, _mm256_loadu_pd(u + i), t));
  }
  if (i < n) {
    const __m256i m = tail_mask(n - i);
    const __m256d t = _mm256_fmadd_pd(vb, _mm256_maskload_pd(x + i, m), va);
    _mm256_maskstore_pd(out + i, m,
                        _mm256_fmadd_pd(vc, _mm256_maskload_pd(u + i, m), t));
  }
}

double bernoulli_logit(const double* eta, const double* y, double* resid,
                       std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d e = _mm256_loadu_pd(eta + i);
    const __m256d yy = _mm256_loadu_pd(y + i);
    acc = _mm256_add_pd(acc, _mm256_fmsub_pd(yy, e, vsoftplus(e)));
    _mm256_storeu_pd(resid + i, _mm256_sub_pd(yy, vlogistic(e)));
  }
  if (i < n) {
    const __m256i m = tail_mask(n - i);
    const __m256d e = _mm256_maskload_pd(eta + i, m);
    const __m256d yy = _mm256_maskload_pd(y + i, m);
    const __m256d ll = _mm256_fmsub_pd(yy, e, vsoftplus(e));
    acc = _mm256_add_pd(acc, _mm256_and_pd(ll, _mm256_castsi256_pd(m)));
    _mm256_maskstore_pd(resid + i, m, _mm256_sub_pd(yy, vlogistic(e)));
  }
  return hsum(acc);
}

void sigmoid(const double* eta, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, vlogistic(_mm256_loadu_pd(eta + i)));
  if (i < n) {
    const __m256i m = tail_mask(n - i);
    _mm256_maskstore_pd(out + i, m, vlogistic(_mm256_maskload_pd(eta + i, m)));
  }
}

CoordStats logit_coord(const double* x, const double* eta, const double* y,
                       std::size_t n) {
  __m256d g = _mm256_setzero_pd();
  __m256d h = _mm256_setzero_pd();
  const __m256d one = _mm256_set1_pd(1.0);
  std::size_t i = 0;
  auto step = [&](__m256d xx, __m256d e, __m256d yy) {
    const __m256d p = vlogistic(e);
    g = _mm256_fmadd_pd(xx, _mm256_sub_pd(p, yy), g);
    const __m256d w = _mm256_mul_pd(p, _mm256_sub_pd(one, p));
    h = _mm256_fmadd_pd(_mm256_mul_pd(xx, xx), w, h);
  };
  for (; i + 4 <= n; i += 4)
    step(_mm256_loadu_pd(x + i), _mm256_loadu_pd(eta + i),
         _mm256_loadu_pd(y + i));
  if (i < n) {
    // Masked-off lanes load x = 0, so they contribute nothing.
    const __m256i m = tail_mask(n - i);
    step(_mm256_maskload_pd(x + i, m), _mm256_maskload_pd(eta + i, m),
         _mm256_maskload_pd(y + i, m));
  }
  return CoordStats{hsum(g), hsum(h)};
}

double logit_loss_shifted(const double* eta, const double* x, double d,
                          const double* y, std::size_t n) {
  const __m256d vd = _mm256_set1_pd(d);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d e =
        _mm256_fmadd_pd(vd, _mm256_loadu_pd(x + i), _mm256_loadu_pd(eta + i));
    acc = _mm256_add_pd(
        acc, _mm256_fnmadd_pd(_mm256_loadu_pd(y + i), e, vsoftplus(e)));
  }
  if (i < n) {
    const __m256i m = tail_mask(n - i);
    const __m256d e = _mm256_fmadd_pd(vd, _mm256_maskload_pd(x + i, m),
                                      _mm256_maskload_pd(eta + i, m));
    const __m256d l =
        _mm256_fnmadd_pd(_mm256_maskload_pd(y + i, m), e, vsoftplus(e));
    acc = _mm256_add_pd(acc, _mm256_and_pd(l, _mm256_castsi256_pd(m)));
  }
  return hsum(acc);
}

}  // namespace

const KernelTable kTable{
    "avx2",   &sum,     &dot,         &axpy,
    &affine,  &bernoulli_logit, &sigmoid, &logit_coord,
    &logit_loss_shifted,
};

}  // namespace polsens::kernels::avx2_impl

namespace polsens::kernels {
const KernelTable* avx2_table_if_compiled() { return &avx2_impl::kTable; }
}  // namespace polsens::kernels

#else

namespace polsens::kernels {
const KernelTable* avx2_table_if_compiled() { return nullptr; }
}  // namespace polsens::kernels

#endif
