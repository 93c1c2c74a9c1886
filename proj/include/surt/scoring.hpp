#pragma once
// Levenshtein alignment, best-assignment two-channel WER, and the
// leakage/omission error classes.

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "surt/transducer.hpp"

namespace surt {

struct Session;

enum class EditOp { Match, Substitute, Insert, Delete };

struct AlignStep {
  EditOp op;
  std::ptrdiff_t ref = -1;  // index into ref, -1 for insertions
  std::ptrdiff_t hyp = -1;  // index into hyp, -1 for deletions
};

struct EditAlignment {
  std::size_t distance = 0;
  std::size_t substitutions = 0;
  std::size_t insertions = 0;
  std::size_t deletions = 0;
  std::vector<AlignStep> steps;
};

EditAlignment edit_distance(std::span<const int> ref, std::span<const int> hyp);
std::size_t edit_distance_value(std::span<const int> ref, std::span<const int> hyp);

struct RefUtterance {
  Labels tokens;
  std::size_t start_frame = 0;
  std::size_t end_frame = 0;
};

inline constexpr std::size_t kMaxScoredUtterances = 12;

struct WerReport {
  std::size_t substitutions = 0;
  std::size_t insertions = 0;
  std::size_t deletions = 0;
  std::size_t ref_words = 0;
  double wer = 0.0;
  std::vector<int> assignment;           // channel (0 or 1) per reference utterance
  std::size_t assignments_visited = 0;   // leaves of the search
  std::array<EditAlignment, 2> alignments;
  std::array<std::vector<std::size_t>, 2> token_owner;  // utterance index per concatenated ref token
  std::vector<std::size_t> matched_tokens;               // per reference utterance
  std::array<Labels, 2> channel_refs;                    // concatenated references under the best assignment
  std::array<Labels, 2> channel_hyps;

  std::size_t errors() const { return substitutions + insertions + deletions; }
};

// refs ordered by start. Exhaustive over all 2^N assignments; the first
// minimum in search order wins (utterance 0's channel varies slowest, channel 1 first).
WerReport multichannel_wer(std::span<const RefUtterance> refs, const std::array<Labels, 2>& hyps,
                           std::size_t cap = kMaxScoredUtterances);

std::vector<RefUtterance> session_refs(const Session& session);

struct ErrorClasses {
  std::size_t leakage_insertions = 0;
  std::size_t omitted_utterances = 0;
};

// Leakage: inserted tokens on one channel that also appear matched on the
// other channel inside a reference utterance no other utterance overlaps,
// within the time span between the inserting channel's neighbouring refs.
ErrorClasses classify_errors(const WerReport& report, std::span<const RefUtterance> refs);
ErrorClasses classify_errors(const WerReport& report, const Session& session);

// Longest common subsequence length.
std::size_t lcs_length(std::span<const int> a, std::span<const int> b);

}  // namespace surt
