#pragma once
// Minimal reverse-mode tape. Each op records its value and a hand-derived
// backward closure; backward() replays closures in reverse creation order.
// Not a general autodiff system: only the ops the encoders need.

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "surt/numcore.hpp"
#include "surt/tensor.hpp"

namespace surt {

struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
};

// Per-query key lists for sparse attention.
using NeighborLists = std::vector<std::vector<std::size_t>>;

template <class T>
class Tape {
 public:
  explicit Tape(const ParamStore<T>* store = nullptr) : store_(store) {}

  Var constant(Tensor<T> value);
  Var input(Tensor<T> value);  // leaf that records a gradient
  Var param(const std::string& name);

  const Tensor<T>& value(Var v) const { return values_[v.id]; }
  Tensor<T>& value_mut(Var v) { return values_[v.id]; }
  // Allocates a zero gradient on first access.
  Tensor<T>& grad(Var v);
  bool has_grad(Var v) const { return !grads_[v.id].empty(); }
  bool requires_grad(Var v) const { return requires_[v.id]; }
  std::size_t size() const { return values_.size(); }

  // Seeds d(out)/d(out) = seed for a 1x1 output and runs every closure.
  void backward(Var out, T seed = T(1));

  // Adds parameter-leaf gradients into `grads` (indexed like the store's
  // slots; missing entries are allocated).
  void accumulate_param_grads(std::vector<Tensor<T>>& grads) const;

  // Registers a custom op. `backward` reads grad(out) and adds into parents.
  Var record(Tensor<T> value, std::vector<Var> parents, std::function<void(Var out)> backward);

  Var matmul(Var x, Var w);          // [n,k] x [k,m]
  Var add_bias(Var x, Var b);        // b has m entries, broadcast over rows
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);             // Hadamard
  Var scale(Var a, T s);
  Var one_minus(Var a);
  Var add_const(Var a, const Tensor<T>& c);
  Var sigmoid(Var a);
  Var tanh(Var a);
  Var relu(Var a);
  Var layer_norm(Var x, Var gain, Var bias, T eps = T(1e-5));
  // Row t becomes [x_{t-k+1}, ..., x_t]; rows before the start are zero.
  Var causal_window(Var x, std::size_t k);
  // out[i] = x[index[i]], or a zero row for index -1.
  Var gather_rows(Var x, std::vector<std::ptrdiff_t> index);
  // out[target[i]] += x[i] / coverage(target[i]); target -1 rows are dropped.
  Var overlap_add(Var x, std::vector<std::ptrdiff_t> target, std::size_t out_rows);
  Var concat_cols(Var a, Var b);
  Var sum_all(Var a);                // 1x1

  // LSTM over row-index sequences of x. Each sequence starts from a zero
  // state; sequences are batched step by step. Gate order: input, forget,
  // cell, output. Rows not covered by any sequence produce zeros.
  Var lstm(Var x, Var w_input, Var w_hidden, Var bias, const std::vector<std::vector<std::size_t>>& sequences,
           bool reverse = false);

  // Multi-head scaled dot-product attention where query i sees only keys
  // neighbors[i]. q, k, v are [n, d] with d divisible by heads.
  Var attention(Var q, Var k, Var v, std::size_t heads, std::shared_ptr<const NeighborLists> neighbors);

 private:
  Var push(Tensor<T> value, bool needs_grad);
  bool any_requires(std::initializer_list<Var> vs) const;

  const ParamStore<T>* store_;
  std::vector<Tensor<T>> values_;
  std::vector<Tensor<T>> grads_;
  std::vector<bool> requires_;
  std::vector<std::function<void()>> backward_;
  std::vector<std::pair<std::size_t, std::size_t>> param_nodes_;  // (node, store slot)
};

// Forward-only dense reference: full score matrix with -inf fill outside
// `mask` (row-major n x n booleans).
template <class T>
Tensor<T> dense_masked_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, std::size_t heads,
                                 const std::vector<bool>& mask);

}  // namespace surt
