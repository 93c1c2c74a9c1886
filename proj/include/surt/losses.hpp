#pragma once
// Session-level transducer losses over the two output channels.
//
// Costs are indexed (reference i, channel j) = L_rnnt(Y_i, H_j).

#include <array>
#include <cstddef>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "surt/tape.hpp"
#include "surt/tensor.hpp"
#include "surt/transducer.hpp"

namespace surt {

using CostMatrix = Tensor<double>;

// Fixed start-time assignment: C(0,0) + C(1,1).
double heat_value(const CostMatrix& costs);

struct PitChoice {
  double value = 0.0;
  bool swapped = false;  // true when refs go to channels (2, 1)
};

// min over both permutations; ties keep the identity assignment.
PitChoice pit_value(const CostMatrix& costs);

struct LsaResult {
  double value = 0.0;
  std::vector<std::size_t> channel_of_ref;  // assignment[i] = column matched to row i
};

// Hungarian algorithm, O(N^3). Throws BadMatrix for non-square input.
LsaResult pit_loss_lsa(const CostMatrix& costs);

// Builds L_rnnt(Y_ref, H_channel) on the tape as a 1x1 node.
using PairLossFn = std::function<Var(std::size_t ref, std::size_t channel)>;

struct SessionLoss {
  Var value;
  bool swapped = false;
  CostMatrix pairwise;  // only the entries that were evaluated are meaningful for heat
};

template <class T>
SessionLoss heat_loss(Tape<T>& tape, const PairLossFn& pair);

// Evaluates all four pairings; only the winning sum is connected to `value`,
// so backward() leaves the losing branch without gradient.
template <class T>
SessionLoss pit_loss_2ch(Tape<T>& tape, const PairLossFn& pair);

using ChannelPair = std::array<Labels, 2>;

// Edit-distance form: correct iff d(h1,Y1)+d(h2,Y2) <= d(h1,Y2)+d(h2,Y1).
bool assignment_correct(const ChannelPair& hyps, const ChannelPair& refs);
// Same comparison with ties counted as incorrect.
bool assignment_correct_strict(const ChannelPair& hyps, const ChannelPair& refs);
// Loss-comparison form: correct iff the identity pairing is no costlier.
bool assignment_correct_by_loss(const CostMatrix& costs);

double assignment_accuracy(std::span<const ChannelPair> hyps, std::span<const ChannelPair> refs);
double assignment_accuracy_strict(std::span<const ChannelPair> hyps, std::span<const ChannelPair> refs);

}  // namespace surt
