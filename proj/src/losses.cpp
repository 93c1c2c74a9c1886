#include "surt/losses.hpp"

#include <cmath>
#include <limits>

#include "surt/scoring.hpp"

namespace surt {

namespace {

void require_2x2(const CostMatrix& c) {
  if (c.rank() != 2 || c.rows() != 2 || c.cols() != 2) {
    fail(ErrorKind::BadMatrix, "expected a 2x2 cost matrix, got " + shape_string(c.shape()));
  }
}

}  // namespace

double heat_value(const CostMatrix& costs) {
  require_2x2(costs);
  return costs.at(0, 0) + costs.at(1, 1);
}

PitChoice pit_value(const CostMatrix& costs) {
  require_2x2(costs);
  const double identity = costs.at(0, 0) + costs.at(1, 1);
  const double crossed = costs.at(0, 1) + costs.at(1, 0);
  if (crossed < identity) return {crossed, true};
  return {identity, false};
}

LsaResult pit_loss_lsa(const CostMatrix& costs) {
  if (costs.rank() != 2 || costs.rows() != costs.cols()) {
    fail(ErrorKind::BadMatrix, "assignment needs a square matrix, got " + shape_string(costs.shape()));
  }
  const std::size_t n = costs.rows();
  LsaResult out;
  if (n == 0) return out;
  constexpr double inf = std::numeric_limits<double>::infinity();
  // Potentials u (rows), v (cols); 1-based with a virtual column 0.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = match[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = costs.at(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  out.channel_of_ref.assign(n, 0);
  for (std::size_t j = 1; j <= n; ++j) out.channel_of_ref[match[j] - 1] = j - 1;
  for (std::size_t i = 0; i < n; ++i) out.value += costs.at(i, out.channel_of_ref[i]);
  return out;
}

template <class T>
SessionLoss heat_loss(Tape<T>& tape, const PairLossFn& pair) {
  SessionLoss out;
  out.pairwise = CostMatrix::matrix(2, 2, std::numeric_limits<double>::quiet_NaN());
  Var a = pair(0, 0), b = pair(1, 1);
  out.pairwise.at(0, 0) = tape.value(a)[0];
  out.pairwise.at(1, 1) = tape.value(b)[0];
  out.value = tape.add(a, b);
  return out;
}

template <class T>
SessionLoss pit_loss_2ch(Tape<T>& tape, const PairLossFn& pair) {
  SessionLoss out;
  out.pairwise = CostMatrix::matrix(2, 2);
  std::array<std::array<Var, 2>, 2> v;
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      v[i][j] = pair(i, j);
      out.pairwise.at(i, j) = tape.value(v[i][j])[0];
    }
  }
  const PitChoice choice = pit_value(out.pairwise);
  out.swapped = choice.swapped;
  out.value = choice.swapped ? tape.add(v[0][1], v[1][0]) : tape.add(v[0][0], v[1][1]);
  return out;
}

namespace {

std::pair<std::size_t, std::size_t> pairing_costs(const ChannelPair& hyps, const ChannelPair& refs) {
  const std::size_t same = edit_distance_value(refs[0], hyps[0]) + edit_distance_value(refs[1], hyps[1]);
  const std::size_t crossed = edit_distance_value(refs[1], hyps[0]) + edit_distance_value(refs[0], hyps[1]);
  return {same, crossed};
}

template <class F>
double batch_fraction(std::span<const ChannelPair> hyps, std::span<const ChannelPair> refs, F correct) {
  if (hyps.size() != refs.size()) fail(ErrorKind::ShapeMismatch, "hypothesis and reference batch sizes differ");
  if (hyps.empty()) return 0.0;
  std::size_t good = 0;
  for (std::size_t i = 0; i < hyps.size(); ++i) good += correct(hyps[i], refs[i]) ? 1 : 0;
  return static_cast<double>(good) / static_cast<double>(hyps.size());
}

}  // namespace

bool assignment_correct(const ChannelPair& hyps, const ChannelPair& refs) {
  const auto [same, crossed] = pairing_costs(hyps, refs);
  return same <= crossed;
}

bool assignment_correct_strict(const ChannelPair& hyps, const ChannelPair& refs) {
  const auto [same, crossed] = pairing_costs(hyps, refs);
  return same < crossed;
}

bool assignment_correct_by_loss(const CostMatrix& costs) { return !pit_value(costs).swapped; }

double assignment_accuracy(std::span<const ChannelPair> hyps, std::span<const ChannelPair> refs) {
  return batch_fraction(hyps, refs, assignment_correct);
}

double assignment_accuracy_strict(std::span<const ChannelPair> hyps, std::span<const ChannelPair> refs) {
  return batch_fraction(hyps, refs, assignment_correct_strict);
}

template SessionLoss heat_loss<float>(Tape<float>&, const PairLossFn&);
template SessionLoss heat_loss<double>(Tape<double>&, const PairLossFn&);
template SessionLoss pit_loss_2ch<float>(Tape<float>&, const PairLossFn&);
template SessionLoss pit_loss_2ch<double>(Tape<double>&, const PairLossFn&);

}  // namespace surt
