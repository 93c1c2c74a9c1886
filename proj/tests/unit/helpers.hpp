#pragma once

#include <random>

#include "doctest.h"
#include "surt/error.hpp"
#include "surt/tensor.hpp"

#define CHECK_FAILS_WITH(expr, expected_kind)                         \
  do {                                                                \
    bool caught_ = false;                                             \
    try {                                                             \
      (void)(expr);                                                   \
    } catch (const surt::Error& e_) {                                 \
      caught_ = true;                                                 \
      CHECK_MESSAGE(e_.kind() == (expected_kind), e_.what());         \
    }                                                                 \
    CHECK_MESSAGE(caught_, "expected an error from " #expr);          \
  } while (0)

namespace testutil {

template <class T>
surt::Tensor<T> random_tensor(surt::Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  surt::Tensor<T> t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<T>(n(rng));
  return t;
}

}  // namespace testutil
