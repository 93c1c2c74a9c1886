#include <cmath>

#include "surt/kernels.hpp"

namespace surt::kernels::scalar {

template <class T>
T dot(const T* a, const T* b, std::size_t n) {
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <class T>
void axpy(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <class T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      if (a[i * k + p] != T(0)) axpy(a[i * k + p], b + p * n, c + i * n, n);
    }
  }
}

template <class T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) c[i * n + j] += dot(a + i * k, b + j * k, k);
  }
}

template <class T>
void gemm_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < m; ++p) {
    for (std::size_t i = 0; i < k; ++i) {
      if (a[p * k + i] != T(0)) axpy(a[p * k + i], b + p * n, c + i * n, n);
    }
  }
}

template <class T>
void tanh_inplace(T* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] = std::tanh(x[i]);
}

template <class T>
void sigmoid_inplace(T* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    if (x[i] >= 0) {
      x[i] = T(1) / (T(1) + std::exp(-x[i]));
    } else {
      const T e = std::exp(x[i]);
      x[i] = e / (T(1) + e);
    }
  }
}

template float dot(const float*, const float*, std::size_t);
template double dot(const double*, const double*, std::size_t);
template void axpy(float, const float*, float*, std::size_t);
template void axpy(double, const double*, double*, std::size_t);
template void gemm_nn(const float*, const float*, float*, std::size_t, std::size_t, std::size_t);
template void gemm_nn(const double*, const double*, double*, std::size_t, std::size_t, std::size_t);
template void gemm_nt(const float*, const float*, float*, std::size_t, std::size_t, std::size_t);
template void gemm_nt(const double*, const double*, double*, std::size_t, std::size_t, std::size_t);
template void gemm_tn(const float*, const float*, float*, std::size_t, std::size_t, std::size_t);
template void gemm_tn(const double*, const double*, double*, std::size_t, std::size_t, std::size_t);

template void tanh_inplace(float*, std::size_t);
template void tanh_inplace(double*, std::size_t);
template void sigmoid_inplace(float*, std::size_t);
template void sigmoid_inplace(double*, std::size_t);

}  // namespace surt::kernels::scalar
