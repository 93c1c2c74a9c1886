#include <algorithm>

#include "helpers.hpp"
#include "surt/scoring.hpp"
#include "surt/simulator.hpp"

using namespace surt;

namespace {

// Plain two-row Levenshtein, kept separate from the library implementation.
std::size_t levenshtein(const Labels& a, const Labels& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::size_t brute_force_errors(const std::vector<RefUtterance>& refs, const std::array<Labels, 2>& hyps) {
  std::size_t best = static_cast<std::size_t>(-1);
  const std::size_t n = refs.size();
  for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
    std::array<Labels, 2> cat;
    for (std::size_t i = 0; i < n; ++i) {
      auto& dst = cat[(mask >> i) & 1U];
      dst.insert(dst.end(), refs[i].tokens.begin(), refs[i].tokens.end());
    }
    best = std::min(best, levenshtein(cat[0], hyps[0]) + levenshtein(cat[1], hyps[1]));
  }
  return best;
}

Labels random_tokens(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  std::uniform_int_distribution<std::size_t> len(lo, hi);
  std::uniform_int_distribution<int> tok(1, 4);
  Labels y(len(rng));
  for (auto& v : y) v = tok(rng);
  return y;
}

std::vector<RefUtterance> random_refs(std::mt19937_64& rng, std::size_t n) {
  std::vector<RefUtterance> refs(n);
  std::size_t start = 0;
  for (auto& r : refs) {
    r.tokens = random_tokens(rng, 1, 4);
    r.start_frame = start;
    r.end_frame = start + 5 * r.tokens.size();
    start += 7;
  }
  return refs;
}

RefUtterance ref(Labels tokens, std::size_t start, std::size_t end) { return RefUtterance{std::move(tokens), start, end}; }

}  // namespace

TEST_CASE("edit distance basics") {
  const Labels abc{1, 2, 3}, axc{1, 9, 3}, ab{1, 2}, empty;
  CHECK(edit_distance(abc, abc).distance == 0);
  auto sub = edit_distance(abc, axc);
  CHECK(sub.distance == 1);
  CHECK(sub.substitutions == 1);
  auto del = edit_distance(ab, empty);
  CHECK(del.distance == 2);
  CHECK(del.deletions == 2);
  auto ins = edit_distance(empty, ab);
  CHECK(ins.insertions == 2);
}

TEST_CASE("edit alignments are consistent with their counts") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 500; ++trial) {
    const auto a = random_tokens(rng, 0, 8), b = random_tokens(rng, 0, 8);
    const auto e = edit_distance(a, b);
    CHECK(e.distance == levenshtein(a, b));
    CHECK(e.distance == edit_distance_value(a, b));
    CHECK(e.distance == e.substitutions + e.insertions + e.deletions);
    std::size_t ri = 0, hi = 0;
    for (const auto& s : e.steps) {
      switch (s.op) {
        case EditOp::Match:
          CHECK(a[s.ref] == b[s.hyp]);
          [[fallthrough]];
        case EditOp::Substitute:
          CHECK(s.ref == static_cast<std::ptrdiff_t>(ri++));
          CHECK(s.hyp == static_cast<std::ptrdiff_t>(hi++));
          if (s.op == EditOp::Substitute) CHECK(a[s.ref] != b[s.hyp]);
          break;
        case EditOp::Insert: CHECK(s.hyp == static_cast<std::ptrdiff_t>(hi++)); break;
        case EditOp::Delete: CHECK(s.ref == static_cast<std::ptrdiff_t>(ri++)); break;
      }
    }
    CHECK(ri == a.size());
    CHECK(hi == b.size());
  }
}

TEST_CASE("multichannel wer on exact and swapped hypotheses") {
  std::vector<RefUtterance> refs{ref({1, 2}, 0, 10), ref({3, 4, 1}, 5, 20), ref({2, 2}, 21, 30)};
  const std::array<Labels, 2> heat{Labels{1, 2, 2, 2}, Labels{3, 4, 1}};
  auto r = multichannel_wer(refs, heat);
  CHECK(r.wer == 0.0);
  CHECK(r.assignment == std::vector<int>{0, 1, 0});
  CHECK(r.ref_words == 7);
  CHECK(r.assignments_visited == 8);
  auto s = multichannel_wer(refs, {heat[1], heat[0]});
  CHECK(s.wer == 0.0);
  CHECK(s.assignment == std::vector<int>{1, 0, 1});

  auto empty = multichannel_wer(refs, {Labels{}, Labels{}});
  CHECK(empty.wer == 1.0);
  CHECK(empty.deletions == 7);
}

TEST_CASE("multichannel wer matches brute force enumeration") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 300; ++trial) {
    std::uniform_int_distribution<std::size_t> count(1, 6);
    const auto refs = random_refs(rng, count(rng));
    const std::array<Labels, 2> hyps{random_tokens(rng, 0, 10), random_tokens(rng, 0, 10)};
    const auto r = multichannel_wer(refs, hyps);
    const std::size_t want = brute_force_errors(refs, hyps);
    CHECK(r.errors() == want);
    CHECK(r.assignments_visited == (std::size_t{1} << refs.size()));
    std::size_t words = 0;
    for (const auto& u : refs) words += u.tokens.size();
    CHECK(r.wer == doctest::Approx(double(want) / double(words)));
    const auto swapped = multichannel_wer(refs, {hyps[1], hyps[0]});
    CHECK(swapped.errors() == r.errors());
  }
}

TEST_CASE("adding a reference shifts the error count by at most its length") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    auto refs = random_refs(rng, 4);
    const std::array<Labels, 2> hyps{random_tokens(rng, 0, 10), random_tokens(rng, 0, 10)};
    const auto before = multichannel_wer(std::span<const RefUtterance>(refs.data(), 3), hyps).errors();
    const auto after = multichannel_wer(refs, hyps).errors();
    const std::size_t len = refs[3].tokens.size();
    CHECK(after + len >= before);
    CHECK(after <= before + len);
  }
  // A new reference can absorb what were insertions.
  std::vector<RefUtterance> one{ref({1}, 0, 5)};
  std::vector<RefUtterance> two{ref({1}, 0, 5), ref({2}, 3, 8)};
  const std::array<Labels, 2> hyps{Labels{1}, Labels{2}};
  CHECK(multichannel_wer(one, hyps).errors() == 1);
  CHECK(multichannel_wer(two, hyps).errors() == 0);
}

TEST_CASE("assignment search refuses sessions past the cap") {
  std::mt19937_64 rng(4);
  auto refs = random_refs(rng, 13);
  CHECK_FAILS_WITH(multichannel_wer(refs, {Labels{1}, Labels{2}}), ErrorKind::TooManyUtterances);
  CHECK_NOTHROW(multichannel_wer(std::span<const RefUtterance>(refs.data(), 12), {Labels{1}, Labels{2}}));
  CHECK_FAILS_WITH(multichannel_wer(std::span<const RefUtterance>(refs.data(), 5), {Labels{1}, Labels{2}}, 4),
                   ErrorKind::TooManyUtterances);
}

TEST_CASE("duplicated single utterance counts as leakage") {
  std::vector<RefUtterance> refs{ref({1, 2, 3}, 0, 15)};
  const std::array<Labels, 2> hyps{Labels{1, 2, 3}, Labels{1, 2, 3}};
  auto r = multichannel_wer(refs, hyps);
  CHECK(r.insertions == 3);
  auto e = classify_errors(r, refs);
  CHECK(e.leakage_insertions == 3);
  CHECK(e.omitted_utterances == 0);
}

TEST_CASE("missing utterances are omissions") {
  std::vector<RefUtterance> refs{ref({1, 2}, 0, 10), ref({3, 4}, 20, 30)};
  auto r = multichannel_wer(refs, {Labels{1, 2}, Labels{}});
  auto e = classify_errors(r, refs);
  CHECK(e.omitted_utterances == 1);
  CHECK(e.leakage_insertions == 0);
  auto none = classify_errors(multichannel_wer(refs, {Labels{}, Labels{}}), refs);
  CHECK(none.omitted_utterances == 2);
}

TEST_CASE("leakage on a three-utterance session") {
  // u0 is alone; u1 and u2 overlap. Channel 2 repeats u0 with one error
  // before transcribing u2.
  //   ch1 ref: 1 2 | 3 4 5    hyp: 1 2 3 4 5   (all matched)
  //   ch2 ref: 6 1            hyp: 1 9 6 1     (two insertions, then matches)
  // The inserted run [1 9] sits before u2 and overlaps u0's span on the
  // other channel; it shares one token with u0, so leakage is 1.
  std::vector<RefUtterance> refs{ref({1, 2}, 0, 20), ref({3, 4, 5}, 30, 50), ref({6, 1}, 40, 60)};
  const std::array<Labels, 2> hyps{Labels{1, 2, 3, 4, 5}, Labels{1, 9, 6, 1}};
  auto r = multichannel_wer(refs, hyps);
  CHECK(r.assignment == std::vector<int>{0, 0, 1});
  CHECK(r.insertions == 2);
  CHECK(r.errors() == 2);
  CHECK(r.wer == doctest::Approx(2.0 / 7.0));
  CHECK(r.matched_tokens == std::vector<std::size_t>{2, 3, 2});
  auto e = classify_errors(r, refs);
  CHECK(e.leakage_insertions == 1);
  CHECK(e.omitted_utterances == 0);

  // The same insertions next to an overlapped utterance are not leakage.
  std::vector<RefUtterance> shifted{ref({1, 2}, 0, 45), ref({6, 1}, 40, 60), ref({3, 4, 5}, 50, 70)};
  auto r2 = multichannel_wer(shifted, hyps);
  CHECK(classify_errors(r2, shifted).leakage_insertions == 0);
}

TEST_CASE("longest common subsequence") {
  CHECK(lcs_length(Labels{1, 2, 3, 4}, Labels{2, 4, 3}) == 2);
  CHECK(lcs_length(Labels{}, Labels{1}) == 0);
  CHECK(lcs_length(Labels{5, 5}, Labels{5, 5, 5}) == 2);
}

TEST_CASE("session references follow start order") {
  ToyCorpus corpus(CorpusConfig{});
  std::mt19937_64 rng(5);
  auto a = corpus.generate_toy_utterance(0, 3, rng);
  auto b = corpus.generate_toy_utterance(1, 4, rng);
  auto c = corpus.generate_toy_utterance(0, 2, rng);
  auto s = mix_session({a, b, c}, {0.0, 0.1, 0.2}, rng);
  auto refs = session_refs(s);
  REQUIRE(refs.size() == 3);
  CHECK(refs[0].tokens == a.tokens);
  CHECK(refs[1].tokens == b.tokens);
  CHECK(refs[2].tokens == c.tokens);
  for (std::size_t i = 1; i < 3; ++i) CHECK(refs[i - 1].start_frame <= refs[i].start_frame);
  auto labels = s.channel_labels();
  auto r = multichannel_wer(refs, labels);
  CHECK(r.wer == 0.0);
  CHECK(classify_errors(r, s).leakage_insertions == 0);
}
