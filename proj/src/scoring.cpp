#include "surt/scoring.hpp"

#include <algorithm>
#include <limits>

#include "surt/simulator.hpp"

namespace surt {

EditAlignment edit_distance(std::span<const int> ref, std::span<const int> hyp) {
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<std::size_t> d((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return d[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t diag = at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      at(i, j) = std::min({diag, at(i - 1, j) + 1, at(i, j - 1) + 1});
    }
  }
  EditAlignment out;
  out.distance = at(n, m);
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && at(i, j) == at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
      const bool same = ref[i - 1] == hyp[j - 1];
      out.steps.push_back({same ? EditOp::Match : EditOp::Substitute, std::ptrdiff_t(i - 1), std::ptrdiff_t(j - 1)});
      if (!same) ++out.substitutions;
      --i;
      --j;
    } else if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      out.steps.push_back({EditOp::Delete, std::ptrdiff_t(i - 1), -1});
      ++out.deletions;
      --i;
    } else {
      out.steps.push_back({EditOp::Insert, -1, std::ptrdiff_t(j - 1)});
      ++out.insertions;
      --j;
    }
  }
  std::reverse(out.steps.begin(), out.steps.end());
  return out;
}

std::size_t edit_distance_value(std::span<const int> ref, std::span<const int> hyp) {
  std::vector<std::size_t> row(hyp.size() + 1);
  for (std::size_t j = 0; j <= hyp.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= ref.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= hyp.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({diag + (ref[i - 1] == hyp[j - 1] ? 0 : 1), up + 1, row[j - 1] + 1});
      diag = up;
    }
  }
  return row.back();
}

namespace {

// Depth-first search over assignments with one DP row stack per channel.
class AssignmentSearch {
 public:
  AssignmentSearch(std::span<const RefUtterance> refs, const std::array<Labels, 2>& hyps) : refs_(refs), hyps_(hyps) {
    for (std::size_t c = 0; c < 2; ++c) {
      std::vector<std::size_t> base(hyps[c].size() + 1);
      for (std::size_t j = 0; j < base.size(); ++j) base[j] = j;
      rows_[c].push_back(std::move(base));
    }
    current_.assign(refs.size(), 0);
  }

  void run() { visit(0); }

  std::size_t visited = 0;
  std::size_t best_cost = std::numeric_limits<std::size_t>::max();
  std::vector<int> best;

 private:
  void push_token(std::size_t c, int token) {
    const auto& prev = rows_[c].back();
    const auto& hyp = hyps_[c];
    std::vector<std::size_t> next(prev.size());
    next[0] = prev[0] + 1;
    for (std::size_t j = 1; j < next.size(); ++j) {
      next[j] = std::min({prev[j] + 1, next[j - 1] + 1, prev[j - 1] + (hyp[j - 1] == token ? 0 : 1)});
    }
    rows_[c].push_back(std::move(next));
  }

  void visit(std::size_t i) {
    if (i == refs_.size()) {
      ++visited;
      const std::size_t cost = rows_[0].back().back() + rows_[1].back().back();
      if (cost < best_cost) {
        best_cost = cost;
        best = current_;
      }
      return;
    }
    for (int c = 0; c < 2; ++c) {
      current_[i] = c;
      for (int tok : refs_[i].tokens) push_token(static_cast<std::size_t>(c), tok);
      visit(i + 1);
      rows_[static_cast<std::size_t>(c)].resize(rows_[static_cast<std::size_t>(c)].size() - refs_[i].tokens.size());
    }
  }

  std::span<const RefUtterance> refs_;
  const std::array<Labels, 2>& hyps_;
  std::array<std::vector<std::vector<std::size_t>>, 2> rows_;
  std::vector<int> current_;
};

}  // namespace

WerReport multichannel_wer(std::span<const RefUtterance> refs, const std::array<Labels, 2>& hyps, std::size_t cap) {
  if (refs.size() > cap) {
    fail(ErrorKind::TooManyUtterances, std::to_string(refs.size()) + " reference utterances exceed the scoring cap of " +
                                           std::to_string(cap));
  }
  AssignmentSearch search(refs, hyps);
  search.run();

  WerReport r;
  r.assignment = search.best;
  r.assignments_visited = search.visited;
  std::array<Labels, 2> concat;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto c = static_cast<std::size_t>(r.assignment[i]);
    for (int tok : refs[i].tokens) {
      concat[c].push_back(tok);
      r.token_owner[c].push_back(i);
    }
    r.ref_words += refs[i].tokens.size();
  }
  r.matched_tokens.assign(refs.size(), 0);
  for (std::size_t c = 0; c < 2; ++c) {
    r.alignments[c] = edit_distance(concat[c], hyps[c]);
    r.channel_refs[c] = concat[c];
    r.channel_hyps[c] = hyps[c];
    const auto& a = r.alignments[c];
    r.substitutions += a.substitutions;
    r.insertions += a.insertions;
    r.deletions += a.deletions;
    for (const auto& step : a.steps) {
      if (step.op == EditOp::Match) ++r.matched_tokens[r.token_owner[c][static_cast<std::size_t>(step.ref)]];
    }
  }
  if (r.errors() != search.best_cost) fail(ErrorKind::BadConfig, "alignment disagrees with assignment search");
  if (r.ref_words > 0) {
    r.wer = static_cast<double>(r.errors()) / static_cast<double>(r.ref_words);
  } else {
    r.wer = r.errors() == 0 ? 0.0 : 1.0;
  }
  return r;
}

std::vector<RefUtterance> session_refs(const Session& session) {
  std::vector<RefUtterance> out;
  for (const auto& u : session.utterances_by_start()) out.push_back({u.tokens, u.start_frame, u.end_frame});
  return out;
}

std::size_t lcs_length(std::span<const int> a, std::span<const int> b) {
  std::vector<std::size_t> row(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = 0;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = a[i - 1] == b[j - 1] ? diag + 1 : std::max(up, row[j - 1]);
      diag = up;
    }
  }
  return row.back();
}

ErrorClasses classify_errors(const WerReport& report, std::span<const RefUtterance> refs) {
  ErrorClasses out;
  const std::size_t n = refs.size();
  if (report.assignment.size() != n) fail(ErrorKind::ShapeMismatch, "report does not match the references");

  for (std::size_t i = 0; i < n; ++i) {
    if (report.matched_tokens[i] == 0) ++out.omitted_utterances;
  }

  std::vector<bool> isolated(n, true);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j && refs[i].start_frame < refs[j].end_frame && refs[j].start_frame < refs[i].end_frame) {
        isolated[i] = false;
      }
    }
  }

  // Matched tokens per reference utterance, in order.
  std::vector<Labels> matched(n);
  for (std::size_t c = 0; c < 2; ++c) {
    for (const auto& step : report.alignments[c].steps) {
      if (step.op != EditOp::Match) continue;
      const auto k = static_cast<std::size_t>(step.ref);
      matched[report.token_owner[c][k]].push_back(report.channel_refs[c][k]);
    }
  }

  for (std::size_t b = 0; b < 2; ++b) {
    const std::size_t other = 1 - b;
    const auto& steps = report.alignments[b].steps;
    const auto& owners = report.token_owner[b];
    std::ptrdiff_t prev_owner = -1;
    Labels run;
    auto close_run = [&](std::ptrdiff_t next_owner) {
      if (run.empty()) return;
      if (prev_owner >= 0 && prev_owner == next_owner) {
        run.clear();
        return;
      }
      const std::size_t lo = prev_owner >= 0 ? refs[static_cast<std::size_t>(prev_owner)].end_frame : 0;
      const std::size_t hi = next_owner >= 0 ? refs[static_cast<std::size_t>(next_owner)].start_frame
                                             : std::numeric_limits<std::size_t>::max();
      Labels candidates;
      for (std::size_t i = 0; i < n; ++i) {
        if (static_cast<std::size_t>(report.assignment[i]) != other || !isolated[i]) continue;
        if (refs[i].start_frame < hi && refs[i].end_frame > lo) {
          candidates.insert(candidates.end(), matched[i].begin(), matched[i].end());
        }
      }
      out.leakage_insertions += lcs_length(run, candidates);
      run.clear();
    };
    for (const auto& step : steps) {
      if (step.op == EditOp::Insert) {
        run.push_back(report.channel_hyps[b][static_cast<std::size_t>(step.hyp)]);
        continue;
      }
      const auto owner = static_cast<std::ptrdiff_t>(owners[static_cast<std::size_t>(step.ref)]);
      close_run(owner);
      prev_owner = owner;
    }
    close_run(-1);
  }
  return out;
}

ErrorClasses classify_errors(const WerReport& report, const Session& session) {
  return classify_errors(report, session_refs(session));
}

}  // namespace surt
