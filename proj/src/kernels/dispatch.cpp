#include <cstdlib>
#include <cstring>
#include <string>
#include <type_traits>

#include "surt/error.hpp"
#include "surt/kernels.hpp"

namespace surt::kernels {

namespace {

template <class T>
struct Table {
  T (*dot)(const T*, const T*, std::size_t);
  void (*axpy)(T, const T*, T*, std::size_t);
  using Gemm = void (*)(const T*, const T*, T*, std::size_t, std::size_t, std::size_t);
  Gemm gemm_nn, gemm_nt, gemm_tn;
  void (*tanh_inplace)(T*, std::size_t);
  void (*sigmoid_inplace)(T*, std::size_t);
};

template <class T>
Table<T> scalar_table() {
  return {&scalar::dot<T>, &scalar::axpy<T>, &scalar::gemm_nn<T>, &scalar::gemm_nt<T>, &scalar::gemm_tn<T>,
          &scalar::tanh_inplace<T>, &scalar::sigmoid_inplace<T>};
}

#if defined(SURT_HAVE_AVX2)
template <class T>
auto elementwise(void (*f32)(float*, std::size_t), void (*reference)(T*, std::size_t)) {
  if constexpr (std::is_same_v<T, float>) {
    return f32;
  } else {
    return reference;
  }
}

template <class T>
Table<T> avx2_table() {
  return {static_cast<T (*)(const T*, const T*, std::size_t)>(&avx2::dot),
          static_cast<void (*)(T, const T*, T*, std::size_t)>(&avx2::axpy),
          static_cast<typename Table<T>::Gemm>(&avx2::gemm_nn), static_cast<typename Table<T>::Gemm>(&avx2::gemm_nt),
          static_cast<typename Table<T>::Gemm>(&avx2::gemm_tn), elementwise<T>(&avx2::tanh_inplace, &scalar::tanh_inplace<T>),
          elementwise<T>(&avx2::sigmoid_inplace, &scalar::sigmoid_inplace<T>)};
}
#endif

bool cpu_has_avx2() {
#if defined(SURT_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa initial_isa() {
  const char* env = std::getenv("SURT_KERNELS");
  if (env != nullptr && std::strcmp(env, "scalar") == 0) return Isa::Scalar;
  return cpu_has_avx2() ? Isa::Avx2 : Isa::Scalar;
}

struct Dispatch {
  Isa isa;
  Table<float> f32;
  Table<double> f64;

  void install(Isa which) {
    isa = which;
#if defined(SURT_HAVE_AVX2)
    if (which == Isa::Avx2) {
      f32 = avx2_table<float>();
      f64 = avx2_table<double>();
      return;
    }
#endif
    f32 = scalar_table<float>();
    f64 = scalar_table<double>();
  }
};

Dispatch& dispatch() {
  static Dispatch d = [] {
    Dispatch out{};
    out.install(initial_isa());
    return out;
  }();
  return d;
}

template <class T>
const Table<T>& table() {
  if constexpr (std::is_same_v<T, float>) {
    return dispatch().f32;
  } else {
    return dispatch().f64;
  }
}

}  // namespace

const char* isa_name(Isa isa) { return isa == Isa::Avx2 ? "avx2" : "scalar"; }

bool isa_available(Isa isa) { return isa == Isa::Scalar || cpu_has_avx2(); }

Isa active_isa() { return dispatch().isa; }

void set_isa(Isa isa) {
  if (!isa_available(isa)) fail(ErrorKind::BadConfig, std::string("kernel variant unavailable: ") + isa_name(isa));
  dispatch().install(isa);
}

template <class T>
T dot(const T* a, const T* b, std::size_t n) {
  return table<T>().dot(a, b, n);
}

template <class T>
void axpy(T alpha, const T* x, T* y, std::size_t n) {
  table<T>().axpy(alpha, x, y, n);
}

template <class T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  table<T>().gemm_nn(a, b, c, m, k, n);
}

template <class T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  table<T>().gemm_nt(a, b, c, m, k, n);
}

template <class T>
void gemm_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  table<T>().gemm_tn(a, b, c, m, k, n);
}

template <class T>
void tanh_inplace(T* x, std::size_t n) {
  table<T>().tanh_inplace(x, n);
}

template <class T>
void sigmoid_inplace(T* x, std::size_t n) {
  table<T>().sigmoid_inplace(x, n);
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
template void tanh_inplace(float*, std::size_t);
template void tanh_inplace(double*, std::size_t);
template void sigmoid_inplace(float*, std::size_t);
template void sigmoid_inplace(double*, std::size_t);
template void gemm_tn(const double*, const double*, double*, std::size_t, std::size_t, std::size_t);

}  // namespace surt::kernels
