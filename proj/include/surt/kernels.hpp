#pragma once
// Dense inner-loop kernels. Every kernel has a portable scalar reference
// and, on x86-64, an AVX2+FMA variant. The variant is chosen once at
// startup from CPUID; SURT_KERNELS=scalar forces the reference path.

#include <cstddef>

namespace surt::kernels {

enum class Isa { Scalar, Avx2 };

const char* isa_name(Isa isa);

// True when the running CPU and the build both support the variant.
bool isa_available(Isa isa);

Isa active_isa();

// Switches the dispatch table. Throws if the variant is unavailable.
void set_isa(Isa isa);

// Row-major conventions throughout.
//   dot:     returns sum_i a[i]*b[i]
//   axpy:    y += alpha*x
//   gemm_nn: C[m x n] += A[m x k] * B[k x n]
//   gemm_nt: C[m x n] += A[m x k] * B[n x k]^T
//   gemm_tn: C[k x n] += A[m x k]^T * B[m x n]
//   tanh_inplace, sigmoid_inplace: elementwise, in place
template <class T>
T dot(const T* a, const T* b, std::size_t n);
template <class T>
void axpy(T alpha, const T* x, T* y, std::size_t n);
template <class T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n);
template <class T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n);
template <class T>
void gemm_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n);
template <class T>
void tanh_inplace(T* x, std::size_t n);
template <class T>
void sigmoid_inplace(T* x, std::size_t n);

namespace scalar {
template <class T>
T dot(const T* a, const T* b, std::size_t n);
template <class T>
void axpy(T alpha, const T* x, T* y, std::size_t n);
template <class T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n);
template <class T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n);
template <class T>
void gemm_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n);
template <class T>
void tanh_inplace(T* x, std::size_t n);
template <class T>
void sigmoid_inplace(T* x, std::size_t n);
}  // namespace scalar

#if defined(SURT_HAVE_AVX2)
namespace avx2 {
float dot(const float* a, const float* b, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);
void axpy(float alpha, const float* x, float* y, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void gemm_nn(const float* a, const float* b, float* c, std::size_t m, std::size_t k, std::size_t n);
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
void gemm_nt(const float* a, const float* b, float* c, std::size_t m, std::size_t k, std::size_t n);
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
void gemm_tn(const float* a, const float* b, float* c, std::size_t m, std::size_t k, std::size_t n);
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
// Float only; rational approximation accurate to a few ulp. Double stays on the reference path.
void tanh_inplace(float* x, std::size_t n);
void sigmoid_inplace(float* x, std::size_t n);
}  // namespace avx2
#endif

}  // namespace surt::kernels
