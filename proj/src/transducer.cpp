#include "surt/transducer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace surt {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double logaddexp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

// Per-cell log-normalizer and the two log-probabilities the lattice needs.
template <class T>
struct LatticeScores {
  std::size_t frames = 0, states = 0, classes = 0;
  std::vector<double> lse;     // frames*states
  std::vector<double> blank;   // log P(blank | t, u)
  std::vector<double> label;   // log P(y_{u+1} | t, u), -inf at u = U

  LatticeScores(const Tensor<T>& logits, std::span<const int> labels)
      : frames(logits.dim(0)), states(logits.dim(1)), classes(logits.dim(2)) {
    const std::size_t cells = frames * states;
    lse.resize(cells);
    blank.resize(cells);
    label.resize(cells, kNegInf);
    for (std::size_t c = 0; c < cells; ++c) {
      const T* z = logits.data() + c * classes;
      double m = z[0];
      for (std::size_t k = 1; k < classes; ++k) m = std::max(m, static_cast<double>(z[k]));
      double s = 0.0;
      for (std::size_t k = 0; k < classes; ++k) s += std::exp(static_cast<double>(z[k]) - m);
      lse[c] = m + std::log(s);
      blank[c] = static_cast<double>(z[kBlank]) - lse[c];
      const std::size_t u = c % states;
      if (u + 1 < states) label[c] = static_cast<double>(z[labels[u]]) - lse[c];
    }
  }
  std::size_t at(std::size_t t, std::size_t u) const { return t * states + u; }
};

template <class T>
std::vector<double> forward_variables(const LatticeScores<T>& s) {
  std::vector<double> alpha(s.frames * s.states, kNegInf);
  alpha[0] = 0.0;
  for (std::size_t t = 0; t < s.frames; ++t) {
    for (std::size_t u = 0; u < s.states; ++u) {
      if (t == 0 && u == 0) continue;
      double a = kNegInf;
      if (t > 0) a = alpha[s.at(t - 1, u)] + s.blank[s.at(t - 1, u)];
      if (u > 0) a = logaddexp(a, alpha[s.at(t, u - 1)] + s.label[s.at(t, u - 1)]);
      alpha[s.at(t, u)] = a;
    }
  }
  return alpha;
}

template <class T>
std::vector<double> backward_variables(const LatticeScores<T>& s) {
  std::vector<double> beta(s.frames * s.states, kNegInf);
  const std::size_t last_t = s.frames - 1, last_u = s.states - 1;
  beta[s.at(last_t, last_u)] = s.blank[s.at(last_t, last_u)];
  for (std::size_t t = s.frames; t-- > 0;) {
    for (std::size_t u = s.states; u-- > 0;) {
      if (t == last_t && u == last_u) continue;
      double b = kNegInf;
      if (t < last_t) b = beta[s.at(t + 1, u)] + s.blank[s.at(t, u)];
      if (u < last_u) b = logaddexp(b, beta[s.at(t, u + 1)] + s.label[s.at(t, u)]);
      beta[s.at(t, u)] = b;
    }
  }
  return beta;
}

}  // namespace

template <class T>
void validate_lattice(const Tensor<T>& logits, std::span<const int> labels) {
  if (logits.rank() != 3) fail(ErrorKind::ShapeMismatch, "lattice must be rank 3, got " + shape_string(logits.shape()));
  if (logits.dim(0) < 1) fail(ErrorKind::ShapeMismatch, "lattice needs at least one frame");
  if (logits.dim(1) != labels.size() + 1) {
    fail(ErrorKind::ShapeMismatch, "lattice has " + std::to_string(logits.dim(1)) + " label states for " +
                                       std::to_string(labels.size()) + " labels");
  }
  if (logits.dim(2) < 2) fail(ErrorKind::ShapeMismatch, "lattice needs blank plus at least one token");
  const int vocab = static_cast<int>(logits.dim(2)) - 1;
  for (int y : labels) {
    if (y < 1 || y > vocab) fail(ErrorKind::BadLabel, "label " + std::to_string(y) + " outside 1.." + std::to_string(vocab));
  }
}

template <class T>
double rnnt_loss_forward(const Tensor<T>& logits, std::span<const int> labels) {
  validate_lattice(logits, labels);
  const LatticeScores<T> s(logits, labels);
  const auto alpha = forward_variables(s);
  const std::size_t end = s.at(s.frames - 1, s.states - 1);
  return -(alpha[end] + s.blank[end]);
}

template <class T>
RnntLossGrad<T> rnnt_loss_grad(const Tensor<T>& logits, std::span<const int> labels) {
  validate_lattice(logits, labels);
  const LatticeScores<T> s(logits, labels);
  const auto alpha = forward_variables(s);
  const auto beta = backward_variables(s);
  const double log_z = beta[0];
  RnntLossGrad<T> out;
  out.loss = -log_z;
  out.grad = Tensor<T>(logits.shape());
  const std::size_t last_t = s.frames - 1, last_u = s.states - 1;
  for (std::size_t t = 0; t < s.frames; ++t) {
    for (std::size_t u = 0; u < s.states; ++u) {
      const std::size_t c = s.at(t, u);
      // Occupancy of the blank and label arcs leaving (t, u).
      double blank_next = kNegInf;
      if (t < last_t) {
        blank_next = beta[s.at(t + 1, u)];
      } else if (u == last_u) {
        blank_next = 0.0;
      }
      const double occ_blank = std::exp(alpha[c] + s.blank[c] + blank_next - log_z);
      const double occ_label = u < last_u ? std::exp(alpha[c] + s.label[c] + beta[s.at(t, u + 1)] - log_z) : 0.0;
      const double occ = occ_blank + occ_label;
      const T* z = logits.data() + c * s.classes;
      T* g = out.grad.data() + c * s.classes;
      for (std::size_t k = 0; k < s.classes; ++k) {
        g[k] = static_cast<T>(std::exp(static_cast<double>(z[k]) - s.lse[c]) * occ);
      }
      g[kBlank] -= static_cast<T>(occ_blank);
      if (u < last_u) g[labels[u]] -= static_cast<T>(occ_label);
    }
  }
  return out;
}

double alignment_count(std::size_t frames, std::size_t labels) {
  // C(frames - 1 + labels, labels)
  double c = 1.0;
  for (std::size_t i = 1; i <= labels; ++i) c = c * static_cast<double>(frames - 1 + i) / static_cast<double>(i);
  return std::round(c);
}

double brute_force_loss(const Tensor<double>& logits, std::span<const int> labels, double max_paths) {
  validate_lattice(logits, labels);
  const std::size_t frames = logits.dim(0), states = logits.dim(1), classes = logits.dim(2);
  if (alignment_count(frames, labels.size()) > max_paths) {
    fail(ErrorKind::OracleTooLarge, "lattice has " + std::to_string(alignment_count(frames, labels.size())) + " alignments");
  }
  auto log_prob = [&](std::size_t t, std::size_t u, int k) {
    const double* z = logits.data() + (t * states + u) * classes;
    double m = z[0];
    for (std::size_t j = 1; j < classes; ++j) m = std::max(m, z[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < classes; ++j) s += std::exp(z[j] - m);
    return z[k] - m - std::log(s);
  };
  // Each complete alignment's log probability is summed explicitly, then
  // all of them are combined with a single log-sum-exp.
  std::vector<double> path_scores;
  std::function<void(std::size_t, std::size_t, double)> walk = [&](std::size_t t, std::size_t u, double acc) {
    if (t == frames - 1 && u == states - 1) {
      path_scores.push_back(acc + log_prob(t, u, kBlank));
      return;
    }
    if (u < states - 1) walk(t, u + 1, acc + log_prob(t, u, labels[u]));
    if (t < frames - 1) walk(t + 1, u, acc + log_prob(t, u, kBlank));
  };
  walk(0, 0, 0.0);
  const double m = *std::max_element(path_scores.begin(), path_scores.end());
  double s = 0.0;
  for (double p : path_scores) s += std::exp(p - m);
  return -(m + std::log(s));
}

namespace {

std::vector<double> log_softmax(std::vector<double> z) {
  double m = z[0];
  for (double v : z) m = std::max(m, v);
  double s = 0.0;
  for (double v : z) s += std::exp(v - m);
  const double lse = m + std::log(s);
  for (double& v : z) v -= lse;
  return z;
}

std::size_t argmax(const std::vector<double>& v) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < v.size(); ++k) {
    if (v[k] > v[best]) best = k;
  }
  return best;
}

}  // namespace

Hypothesis greedy_decode(const StepFn& step, std::size_t frames, std::size_t max_symbols_per_frame) {
  if (max_symbols_per_frame < 1) fail(ErrorKind::BadConfig, "max_symbols_per_frame must be >= 1");
  Hypothesis hyp;
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t emitted = 0;; ++emitted) {
      const auto lp = log_softmax(step(t, hyp.tokens));
      const std::size_t k = emitted < max_symbols_per_frame ? argmax(lp) : std::size_t{kBlank};
      hyp.log_prob += lp[k];
      if (k == kBlank) break;
      hyp.tokens.push_back(static_cast<int>(k));
    }
  }
  return hyp;
}

BeamResult beam_decode(const StepFn& step, std::size_t frames, std::size_t beam, std::size_t max_symbols_per_frame) {
  if (beam == 0) fail(ErrorKind::BadBeam, "beam must be >= 1");
  if (max_symbols_per_frame < 1) fail(ErrorKind::BadConfig, "max_symbols_per_frame must be >= 1");

  struct Candidate {
    Hypothesis hyp;
    std::size_t emitted = 0;  // labels emitted in the current frame
    bool closed = false;      // ended the frame with a blank
  };
  auto by_score = [](const Candidate& a, const Candidate& b) { return a.hyp.log_prob > b.hyp.log_prob; };

  std::vector<Hypothesis> current{Hypothesis{}};
  for (std::size_t t = 0; t < frames; ++t) {
    std::vector<Candidate> active;
    for (auto& h : current) active.push_back({std::move(h), 0, false});
    std::map<Labels, Hypothesis> closed;
    while (!active.empty()) {
      std::vector<Candidate> pool;
      for (const auto& a : active) {
        const auto lp = log_softmax(step(t, a.hyp.tokens));
        Candidate b = a;
        b.hyp.log_prob += lp[kBlank];
        b.closed = true;
        pool.push_back(std::move(b));
        if (a.emitted >= max_symbols_per_frame) continue;
        for (std::size_t k = 1; k < lp.size(); ++k) {
          Candidate e = a;
          e.hyp.tokens.push_back(static_cast<int>(k));
          e.hyp.log_prob += lp[k];
          e.emitted += 1;
          pool.push_back(std::move(e));
        }
      }
      std::stable_sort(pool.begin(), pool.end(), by_score);
      if (pool.size() > beam) pool.resize(beam);
      active.clear();
      for (auto& c : pool) {
        if (!c.closed) {
          active.push_back(std::move(c));
          continue;
        }
        auto it = closed.find(c.hyp.tokens);
        if (it == closed.end()) {
          closed.emplace(c.hyp.tokens, std::move(c.hyp));
        } else if (c.hyp.log_prob > it->second.log_prob) {
          it->second = std::move(c.hyp);
        }
      }
    }
    current.clear();
    for (auto& [tokens, h] : closed) current.push_back(std::move(h));
    std::stable_sort(current.begin(), current.end(),
                     [](const Hypothesis& a, const Hypothesis& b) { return a.log_prob > b.log_prob; });
    if (current.size() > beam) current.resize(beam);
  }

  BeamResult result;
  result.nbest = std::move(current);
  const Hypothesis greedy = greedy_decode(step, frames, max_symbols_per_frame);
  auto same = std::find_if(result.nbest.begin(), result.nbest.end(),
                           [&](const Hypothesis& h) { return h.tokens == greedy.tokens; });
  if (same == result.nbest.end()) {
    result.nbest.push_back(greedy);
  } else if (greedy.log_prob > same->log_prob) {
    *same = greedy;
  }
  std::stable_sort(result.nbest.begin(), result.nbest.end(),
                   [](const Hypothesis& a, const Hypothesis& b) { return a.log_prob > b.log_prob; });
  result.best = result.nbest.front();
  return result;
}

template void validate_lattice(const Tensor<float>&, std::span<const int>);
template void validate_lattice(const Tensor<double>&, std::span<const int>);
template double rnnt_loss_forward(const Tensor<float>&, std::span<const int>);
template double rnnt_loss_forward(const Tensor<double>&, std::span<const int>);
template RnntLossGrad<float> rnnt_loss_grad(const Tensor<float>&, std::span<const int>);
template RnntLossGrad<double> rnnt_loss_grad(const Tensor<double>&, std::span<const int>);

}  // namespace surt
