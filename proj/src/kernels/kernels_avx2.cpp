// Compiled with -mavx2 -mfma; only reached after a CPUID check.
#include <immintrin.h>

#include <algorithm>

#include "surt/kernels.hpp"

namespace surt::kernels::avx2 {

namespace {

inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  __m128 shuf = _mm_movehdup_ps(lo);
  __m128 sums = _mm_add_ps(lo, shuf);
  shuf = _mm_movehl_ps(shuf, sums);
  sums = _mm_add_ss(sums, shuf);
  return _mm_cvtss_f32(sums);
}

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d high64 = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, high64));
}

}  // namespace

float dot(const float* a, const float* b, std::size_t n) {
  __m256 acc0 = _mm256_setzero_ps();
  __m256 acc1 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
    acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 8), _mm256_loadu_ps(b + i + 8), acc1);
  }
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
  }
  float acc = hsum(_mm256_add_ps(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double dot(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy(float alpha, const float* x, float* y, std::size_t n) {
  const __m256 va = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

namespace {

template <class T>
struct Vec;

template <>
struct Vec<float> {
  using reg = __m256;
  static constexpr std::size_t lanes = 8;
  static reg zero() { return _mm256_setzero_ps(); }
  static reg set1(float v) { return _mm256_set1_ps(v); }
  static reg load(const float* p) { return _mm256_loadu_ps(p); }
  static void store(float* p, reg v) { _mm256_storeu_ps(p, v); }
  static reg fma(reg a, reg b, reg c) { return _mm256_fmadd_ps(a, b, c); }
  static reg add(reg a, reg b) { return _mm256_add_ps(a, b); }
  static float sum(reg v) { return hsum(v); }
  static __m256i mask(std::size_t count) {
    return _mm256_cmpgt_epi32(_mm256_set1_epi32(static_cast<int>(count)), _mm256_setr_epi32(0, 1, 2, 3, 4, 5, 6, 7));
  }
  static reg load_partial(const float* p, __m256i m) { return _mm256_maskload_ps(p, m); }
  static void store_partial(float* p, __m256i m, reg v) { _mm256_maskstore_ps(p, m, v); }
};

template <>
struct Vec<double> {
  using reg = __m256d;
  static constexpr std::size_t lanes = 4;
  static reg zero() { return _mm256_setzero_pd(); }
  static reg set1(double v) { return _mm256_set1_pd(v); }
  static reg load(const double* p) { return _mm256_loadu_pd(p); }
  static void store(double* p, reg v) { _mm256_storeu_pd(p, v); }
  static reg fma(reg a, reg b, reg c) { return _mm256_fmadd_pd(a, b, c); }
  static reg add(reg a, reg b) { return _mm256_add_pd(a, b); }
  static double sum(reg v) { return hsum(v); }
  static __m256i mask(std::size_t count) {
    const long long m[4] = {0, 1, 2, 3};
    return _mm256_cmpgt_epi64(_mm256_set1_epi64x(static_cast<long long>(count)), _mm256_loadu_si256(reinterpret_cast<const __m256i*>(m)));
  }
  static reg load_partial(const double* p, __m256i m) { return _mm256_maskload_pd(p, m); }
  static void store_partial(double* p, __m256i m, reg v) { _mm256_maskstore_pd(p, m, v); }
};

// C[rows x n] += A * B[depth x n], where A(i, p) = a[i*rs + p*cs].
// Register tile: R rows by two vectors of columns.
template <class T, std::size_t R>
void tile(const T* a, std::size_t rs, std::size_t cs, const T* b, T* c, std::size_t depth, std::size_t n,
          std::size_t j) {
  using V = Vec<T>;
  constexpr std::size_t L = V::lanes;
  typename V::reg acc0[R], acc1[R];
  for (std::size_t r = 0; r < R; ++r) {
    acc0[r] = V::load(c + r * n + j);
    acc1[r] = V::load(c + r * n + j + L);
  }
  for (std::size_t p = 0; p < depth; ++p) {
    const auto b0 = V::load(b + p * n + j);
    const auto b1 = V::load(b + p * n + j + L);
    for (std::size_t r = 0; r < R; ++r) {
      const auto av = V::set1(a[r * rs + p * cs]);
      acc0[r] = V::fma(av, b0, acc0[r]);
      acc1[r] = V::fma(av, b1, acc1[r]);
    }
  }
  for (std::size_t r = 0; r < R; ++r) {
    V::store(c + r * n + j, acc0[r]);
    V::store(c + r * n + j + L, acc1[r]);
  }
}

template <class T, std::size_t R>
void tile_narrow(const T* a, std::size_t rs, std::size_t cs, const T* b, T* c, std::size_t depth, std::size_t n,
                 std::size_t j) {
  using V = Vec<T>;
  typename V::reg acc[R];
  for (std::size_t r = 0; r < R; ++r) acc[r] = V::load(c + r * n + j);
  for (std::size_t p = 0; p < depth; ++p) {
    const auto b0 = V::load(b + p * n + j);
    for (std::size_t r = 0; r < R; ++r) acc[r] = V::fma(V::set1(a[r * rs + p * cs]), b0, acc[r]);
  }
  for (std::size_t r = 0; r < R; ++r) V::store(c + r * n + j, acc[r]);
}

template <class T, std::size_t R>
void row_block(const T* a, std::size_t rs, std::size_t cs, const T* b, T* c, std::size_t depth, std::size_t n) {
  constexpr std::size_t L = Vec<T>::lanes;
  std::size_t j = 0;
  for (; j + 2 * L <= n; j += 2 * L) tile<T, R>(a, rs, cs, b, c, depth, n, j);
  for (; j + L <= n; j += L) tile_narrow<T, R>(a, rs, cs, b, c, depth, n, j);
  if (j < n) {
    using V = Vec<T>;
    const __m256i m = V::mask(n - j);
    typename V::reg acc[R];
    for (std::size_t r = 0; r < R; ++r) acc[r] = V::load_partial(c + r * n + j, m);
    for (std::size_t p = 0; p < depth; ++p) {
      const auto b0 = V::load_partial(b + p * n + j, m);
      for (std::size_t r = 0; r < R; ++r) acc[r] = V::fma(V::set1(a[r * rs + p * cs]), b0, acc[r]);
    }
    for (std::size_t r = 0; r < R; ++r) V::store_partial(c + r * n + j, m, acc[r]);
  }
}

template <class T>
void gemm_strided(const T* a, std::size_t rs, std::size_t cs, const T* b, T* c, std::size_t rows,
                  std::size_t depth, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= rows; i += 4) row_block<T, 4>(a + i * rs, rs, cs, b, c + i * n, depth, n);
  for (; i < rows; ++i) row_block<T, 1>(a + i * rs, rs, cs, b, c + i * n, depth, n);
}

// C[m x n] += A[m x k] * B[n x k]^T, four output columns at a time.
template <class T>
void gemm_nt_impl(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  using V = Vec<T>;
  constexpr std::size_t L = V::lanes;
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    T* crow = c + i * n;
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
      const T* b0 = b + j * k;
      typename V::reg s0 = V::zero(), s1 = V::zero(), s2 = V::zero(), s3 = V::zero();
      std::size_t p = 0;
      for (; p + L <= k; p += L) {
        const auto av = V::load(arow + p);
        s0 = V::fma(av, V::load(b0 + p), s0);
        s1 = V::fma(av, V::load(b0 + k + p), s1);
        s2 = V::fma(av, V::load(b0 + 2 * k + p), s2);
        s3 = V::fma(av, V::load(b0 + 3 * k + p), s3);
      }
      if (p < k) {
        const __m256i mk = V::mask(k - p);
        const auto av = V::load_partial(arow + p, mk);
        s0 = V::fma(av, V::load_partial(b0 + p, mk), s0);
        s1 = V::fma(av, V::load_partial(b0 + k + p, mk), s1);
        s2 = V::fma(av, V::load_partial(b0 + 2 * k + p, mk), s2);
        s3 = V::fma(av, V::load_partial(b0 + 3 * k + p, mk), s3);
      }
      crow[j] += V::sum(s0);
      crow[j + 1] += V::sum(s1);
      crow[j + 2] += V::sum(s2);
      crow[j + 3] += V::sum(s3);
    }
    for (; j < n; ++j) {
      const T* brow = b + j * k;
      typename V::reg s0 = V::zero();
      std::size_t p = 0;
      for (; p + L <= k; p += L) s0 = V::fma(V::load(arow + p), V::load(brow + p), s0);
      if (p < k) {
        const __m256i mk = V::mask(k - p);
        s0 = V::fma(V::load_partial(arow + p, mk), V::load_partial(brow + p, mk), s0);
      }
      crow[j] += V::sum(s0);
    }
  }
}

// Odd/even rational approximation, coefficients as used by Eigen's fast tanh.
inline __m256 tanh8(__m256 x) {
  const __m256 clamp = _mm256_set1_ps(7.90531110763549805f);
  const __m256 tiny = _mm256_set1_ps(0.0004f);
  const __m256 sign_mask = _mm256_set1_ps(-0.0f);
  const __m256 abs_x = _mm256_andnot_ps(sign_mask, x);
  const __m256 small = _mm256_cmp_ps(abs_x, tiny, _CMP_LT_OQ);
  const __m256 xc = _mm256_max_ps(_mm256_min_ps(x, clamp), _mm256_sub_ps(_mm256_setzero_ps(), clamp));
  const __m256 x2 = _mm256_mul_ps(xc, xc);
  __m256 p = _mm256_set1_ps(-2.76076847742355e-16f);
  p = _mm256_fmadd_ps(x2, p, _mm256_set1_ps(2.00018790482477e-13f));
  p = _mm256_fmadd_ps(x2, p, _mm256_set1_ps(-8.60467152213735e-11f));
  p = _mm256_fmadd_ps(x2, p, _mm256_set1_ps(5.12229709037114e-08f));
  p = _mm256_fmadd_ps(x2, p, _mm256_set1_ps(1.48572235717979e-05f));
  p = _mm256_fmadd_ps(x2, p, _mm256_set1_ps(6.37261928875436e-04f));
  p = _mm256_fmadd_ps(x2, p, _mm256_set1_ps(4.89352455891786e-03f));
  p = _mm256_mul_ps(xc, p);
  __m256 q = _mm256_set1_ps(1.19825839466702e-06f);
  q = _mm256_fmadd_ps(x2, q, _mm256_set1_ps(1.18534705686654e-04f));
  q = _mm256_fmadd_ps(x2, q, _mm256_set1_ps(2.26843463243900e-03f));
  q = _mm256_fmadd_ps(x2, q, _mm256_set1_ps(4.89352518554385e-03f));
  return _mm256_blendv_ps(_mm256_div_ps(p, q), x, small);
}

}  // namespace

void tanh_inplace(float* x, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(x + i, tanh8(_mm256_loadu_ps(x + i)));
  if (i < n) {
    float buf[8] = {};
    std::copy_n(x + i, n - i, buf);
    _mm256_storeu_ps(buf, tanh8(_mm256_loadu_ps(buf)));
    std::copy_n(buf, n - i, x + i);
  }
}

void sigmoid_inplace(float* x, std::size_t n) {
  const __m256 half = _mm256_set1_ps(0.5f);
  auto sig = [&](__m256 v) { return _mm256_fmadd_ps(half, tanh8(_mm256_mul_ps(half, v)), half); };
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(x + i, sig(_mm256_loadu_ps(x + i)));
  if (i < n) {
    float buf[8] = {};
    std::copy_n(x + i, n - i, buf);
    _mm256_storeu_ps(buf, sig(_mm256_loadu_ps(buf)));
    std::copy_n(buf, n - i, x + i);
  }
}

void gemm_nn(const float* a, const float* b, float* c, std::size_t m, std::size_t k, std::size_t n) {
  gemm_strided(a, k, 1, b, c, m, k, n);
}
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  gemm_strided(a, k, 1, b, c, m, k, n);
}
void gemm_nt(const float* a, const float* b, float* c, std::size_t m, std::size_t k, std::size_t n) {
  gemm_nt_impl(a, b, c, m, k, n);
}
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  gemm_nt_impl(a, b, c, m, k, n);
}
void gemm_tn(const float* a, const float* b, float* c, std::size_t m, std::size_t k, std::size_t n) {
  gemm_strided(a, 1, k, b, c, k, m, n);
}
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  gemm_strided(a, 1, k, b, c, k, m, n);
}

}  // namespace surt::kernels::avx2
