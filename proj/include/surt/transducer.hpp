#pragma once
// Transducer lattice loss, its gradient, an alignment-enumeration oracle,
// and greedy/beam decoding. Blank is token 0 everywhere.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "surt/tensor.hpp"

namespace surt {

inline constexpr int kBlank = 0;

// Token ids in 1..V; never the blank.
using Labels = std::vector<int>;

// Checks a T x (U+1) x (V+1) lattice against its label sequence.
template <class T>
void validate_lattice(const Tensor<T>& logits, std::span<const int> labels);

// Negative log marginal over all monotone blank/label alignments.
// Logits are unnormalized; log-softmax is applied per (t, u).
template <class T>
double rnnt_loss_forward(const Tensor<T>& logits, std::span<const int> labels);

template <class T>
struct RnntLossGrad {
  double loss = 0.0;
  Tensor<T> grad;  // d loss / d logits, same shape as logits
};

template <class T>
RnntLossGrad<T> rnnt_loss_grad(const Tensor<T>& logits, std::span<const int> labels);

// Number of complete alignments of a T x U lattice: C(T-1+U, U).
double alignment_count(std::size_t frames, std::size_t labels);

// Explicit path enumeration; refuses lattices with more than max_paths alignments.
double brute_force_loss(const Tensor<double>& logits, std::span<const int> labels, double max_paths = 1e6);

// Returns the unnormalized next-symbol scores (V+1 values) for frame t after
// emitting `prefix`.
using StepFn = std::function<std::vector<double>(std::size_t t, std::span<const int> prefix)>;

struct Hypothesis {
  Labels tokens;
  double log_prob = 0.0;  // log probability of the single alignment path followed

  bool operator==(const Hypothesis&) const = default;
};

inline constexpr std::size_t kMaxSymbolsPerFrame = 3;

Hypothesis greedy_decode(const StepFn& step, std::size_t frames, std::size_t max_symbols_per_frame = kMaxSymbolsPerFrame);

struct BeamResult {
  Hypothesis best;
  std::vector<Hypothesis> nbest;  // sorted by descending log_prob
};

// Fixed-width beam search: at every expansion round within a frame, all
// blank-terminated and label-extended candidates compete for `beam` slots.
// The greedy hypothesis is always merged into the final n-best list.
BeamResult beam_decode(const StepFn& step, std::size_t frames, std::size_t beam,
                       std::size_t max_symbols_per_frame = kMaxSymbolsPerFrame);

}  // namespace surt
