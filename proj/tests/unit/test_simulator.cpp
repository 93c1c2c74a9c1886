#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <unistd.h>

#include "helpers.hpp"
#include "surt/simulator.hpp"

using namespace surt;
namespace fs = std::filesystem;

namespace {

Utterance span_utt(std::size_t start, std::size_t len, int speaker = 0) {
  Utterance u;
  u.speaker = speaker;
  u.tokens = {1};
  u.start_frame = start;
  u.end_frame = start + len;
  return u;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path scratch_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("surt_unit_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void check_session_invariants(const Session& s, const TierSpec& spec) {
  CHECK(s.num_utterances >= spec.min_utterances);
  CHECK(s.num_utterances <= spec.max_utterances);
  CHECK(s.channels[0].size() + s.channels[1].size() == s.num_utterances);
  std::set<int> speakers;
  for (const auto& ch : s.channels) {
    for (std::size_t i = 0; i < ch.size(); ++i) {
      speakers.insert(ch[i].speaker);
      CHECK_FALSE(ch[i].tokens.empty());
      CHECK(ch[i].end_frame <= s.frames());
      if (i > 0) CHECK(ch[i - 1].end_frame <= ch[i].start_frame);
    }
  }
  CHECK(speakers.size() >= spec.min_speakers);
  CHECK(speakers.size() <= spec.max_speakers);
  REQUIRE_FALSE(s.channels[0].empty());
  if (!s.channels[1].empty()) CHECK(s.channels[0].front().start_frame <= s.channels[1].front().start_frame);
  CHECK(s.overlap_ratio >= 0.0);
  CHECK(s.overlap_ratio <= 0.45);
  auto all = s.utterances_by_start();
  CHECK(s.overlap_ratio == doctest::Approx(overlap_ratio(all, s.frames())));
}

}  // namespace

TEST_CASE("noiseless utterances are template concatenations") {
  CorpusConfig cfg;
  cfg.noise = 0.0;
  ToyCorpus corpus(cfg);
  std::mt19937_64 rng(1);
  auto u = corpus.generate_toy_utterance(2, 3, rng);
  REQUIRE(u.tokens.size() == 3);
  REQUIRE(u.features.shape() == Shape{15, cfg.feat_dim()});
  for (std::size_t k = 0; k < 3; ++k) {
    const auto& tmpl = corpus.token_template(2, u.tokens[k]);
    for (std::size_t r = 0; r < 5; ++r) {
      for (std::size_t c = 0; c < cfg.feat_dim(); ++c) CHECK(u.features.at(k * 5 + r, c) == tmpl.at(r, c));
    }
  }
  for (int t : u.tokens) {
    CHECK(t >= 1);
    CHECK(t <= static_cast<int>(cfg.vocab));
  }
  CHECK(u.speaker == 2);
  CHECK(u.length() == 15);
}

TEST_CASE("utterance generation is deterministic") {
  ToyCorpus corpus(CorpusConfig{});
  std::mt19937_64 a(9), b(9);
  auto u = corpus.generate_toy_utterance(1, 5, a);
  auto v = corpus.generate_toy_utterance(1, 5, b);
  CHECK(u.tokens == v.tokens);
  CHECK(u.features == v.features);
}

TEST_CASE("speaker templates are separated beyond the noise") {
  CorpusConfig cfg;
  ToyCorpus corpus(cfg);
  CHECK(corpus.separation_threshold() ==
        doctest::Approx(cfg.separation_k * cfg.noise * std::sqrt(double(cfg.frames_per_token * cfg.feat_dim()))));
  double smallest = 1e300;
  for (int s1 = 0; s1 < static_cast<int>(cfg.speakers); ++s1) {
    for (int s2 = s1 + 1; s2 < static_cast<int>(cfg.speakers); ++s2) {
      for (int t1 = 1; t1 <= static_cast<int>(cfg.vocab); ++t1) {
        for (int t2 = 1; t2 <= static_cast<int>(cfg.vocab); ++t2) {
          const auto &a = corpus.token_template(s1, t1), &b = corpus.token_template(s2, t2);
          double d = 0;
          for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
          smallest = std::min(smallest, std::sqrt(d));
        }
      }
    }
  }
  CHECK(smallest == doctest::Approx(corpus.min_template_distance()).epsilon(1e-5));
  CHECK(smallest > corpus.separation_threshold());
}

TEST_CASE("first-fit channel assignment") {
  auto [a1, a2] = channel_assign_heat({span_utt(0, 4), span_utt(5, 4), span_utt(10, 4)});
  CHECK(a1.size() == 3);
  CHECK(a2.empty());

  auto [b1, b2] = channel_assign_heat({span_utt(0, 10), span_utt(4, 10)});
  REQUIRE(b1.size() == 1);
  REQUIRE(b2.size() == 1);
  CHECK(b1[0].start_frame == 0);
  CHECK(b2[0].start_frame == 4);

  // u2 overlaps u1; u3 overlaps u2 but starts after u1 ends.
  auto [c1, c2] = channel_assign_heat({span_utt(0, 10), span_utt(6, 12), span_utt(12, 5)});
  REQUIRE(c1.size() == 2);
  CHECK(c1[1].start_frame == 12);
  CHECK(c2.size() == 1);

  CHECK_FAILS_WITH(channel_assign_heat({span_utt(0, 10), span_utt(2, 10), span_utt(4, 10)}),
                   ErrorKind::TooManySimultaneous);
}

TEST_CASE("mixing sums features and places utterances by delay") {
  CorpusConfig cfg;
  ToyCorpus corpus(cfg);
  std::mt19937_64 rng(3);
  auto u1 = corpus.generate_toy_utterance(0, 50, rng);
  auto u2 = corpus.generate_toy_utterance(1, 45, rng);
  const auto f1 = u1.features, f2 = u2.features;
  auto s = mix_session({u1, u2}, {0.0, 2.0}, rng);
  REQUIRE(s.channels[0].size() == 1);
  REQUIRE(s.channels[1].size() == 1);
  CHECK(s.channels[0][0].start_frame == 0);
  CHECK(s.channels[1][0].start_frame == 200);
  CHECK(s.frames() == 200 + f2.rows());
  for (std::size_t t = 0; t < s.frames(); ++t) {
    for (std::size_t c = 0; c < cfg.feat_dim(); ++c) {
      float want = 0;
      if (t < f1.rows()) want += f1.at(t, c);
      if (t >= 200) want += f2.at(t - 200, c);
      CHECK(s.features.at(t, c) == doctest::Approx(want));
    }
  }
  const double ov = double(f1.rows() - 200) / double(s.frames());
  CHECK(s.overlap_ratio == doctest::Approx(ov));

  auto w1 = corpus.generate_toy_utterance(0, 6, rng);
  auto w2 = corpus.generate_toy_utterance(1, 6, rng);
  auto zero = mix_session({w1, w2}, {0.0, 0.0}, rng);
  CHECK(zero.overlap_ratio == 1.0);

  auto single = mix_session({corpus.generate_toy_utterance(3, 4, rng)}, {0.0}, rng);
  CHECK(single.overlap_ratio == 0.0);
  CHECK(single.channels[1].empty());
}

TEST_CASE("tied starts are ordered at random") {
  ToyCorpus corpus(CorpusConfig{});
  std::mt19937_64 rng(5);
  auto a = corpus.generate_toy_utterance(0, 4, rng);
  auto b = corpus.generate_toy_utterance(1, 4, rng);
  int first_is_a = 0;
  for (int i = 0; i < 200; ++i) first_is_a += mix_session({a, b}, {0.0, 0.0}, rng).channels[0][0].speaker == 0;
  CHECK(first_is_a > 60);
  CHECK(first_is_a < 140);
}

TEST_CASE("tier datasets respect their specs") {
  ToyCorpus corpus(CorpusConfig{});
  for (auto spec : {TierSpec::t1(), TierSpec::t2(), TierSpec::t3()}) {
    spec.sessions = 40;
    std::mt19937_64 rng(7);
    auto sessions = make_tier_dataset(spec, -1.0, rng, corpus);
    REQUIRE(sessions.size() == 40);
    std::set<std::string> ids;
    for (const auto& s : sessions) {
      check_session_invariants(s, spec);
      CHECK(s.tier == spec.name);
      ids.insert(s.id);
    }
    CHECK(ids.size() == 40);
  }
  auto t1 = TierSpec::t1();
  CHECK(t1.min_speakers == 2);
  CHECK(t1.max_utterances == 2);
  auto t3 = TierSpec::t3();
  CHECK(t3.max_speakers == 4);
  CHECK(t3.max_utterances == 12);
  CHECK_FAILS_WITH(TierSpec::by_name("t9"), ErrorKind::BadConfig);
}

TEST_CASE("requested overlap is realized within tolerance") {
  ToyCorpus corpus(CorpusConfig{});
  for (double target : {0.0, 0.1, 0.25, 0.4}) {
    auto spec = TierSpec::t2();
    spec.sessions = 25;
    std::mt19937_64 rng(11);
    for (const auto& s : make_tier_dataset(spec, target, rng, corpus)) {
      CHECK(std::abs(s.overlap_ratio - target) <= kOverlapTolerance);
      if (target == 0.0) CHECK(s.channels[1].empty());
    }
  }
}

TEST_CASE("delay datasets use two speakers and equal lengths") {
  ToyCorpus corpus(CorpusConfig{});
  std::mt19937_64 rng(13);
  for (double delay : {0.0, 2.0}) {
    auto sessions = make_delay_dataset(20, delay, 4, 8, rng, corpus);
    for (const auto& s : sessions) {
      auto all = s.utterances_by_start();
      REQUIRE(all.size() == 2);
      CHECK(all[0].speaker != all[1].speaker);
      CHECK(all[0].length() == all[1].length());
      CHECK(all[1].start_frame - all[0].start_frame == static_cast<std::size_t>(delay * 100));
    }
  }
}

TEST_CASE("manifests round trip and are deterministic") {
  ToyCorpus corpus(CorpusConfig{});
  auto spec = TierSpec::t3();
  spec.sessions = 6;
  auto d1 = scratch_dir("m1"), d2 = scratch_dir("m2");
  std::mt19937_64 r1(21), r2(21);
  auto s1 = make_tier_dataset(spec, -1.0, r1, corpus);
  auto s2 = make_tier_dataset(spec, -1.0, r2, corpus);
  write_manifest(d1.string(), "t3.jsonl", s1);
  write_manifest(d2.string(), "t3.jsonl", s2);
  CHECK(slurp(d1 / "t3.jsonl") == slurp(d2 / "t3.jsonl"));
  for (const auto& s : s1) {
    const auto name = fs::path("features") / (s.id + ".surt");
    CHECK(slurp(d1 / name) == slurp(d2 / name));
  }

  auto back = read_manifest((d1 / "t3.jsonl").string());
  REQUIRE(back.size() == s1.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].id == s1[i].id);
    CHECK(back[i].tier == s1[i].tier);
    CHECK(back[i].features == s1[i].features);
    CHECK(back[i].channel_labels() == s1[i].channel_labels());
    CHECK(back[i].num_utterances == s1[i].num_utterances);
    CHECK(back[i].overlap_ratio == doctest::Approx(s1[i].overlap_ratio));
    for (std::size_t c = 0; c < 2; ++c) {
      REQUIRE(back[i].channels[c].size() == s1[i].channels[c].size());
      for (std::size_t k = 0; k < back[i].channels[c].size(); ++k) {
        CHECK(back[i].channels[c][k].start_frame == s1[i].channels[c][k].start_frame);
        CHECK(back[i].channels[c][k].end_frame == s1[i].channels[c][k].end_frame);
        CHECK(back[i].channels[c][k].speaker == s1[i].channels[c][k].speaker);
      }
    }
  }
  CHECK_FAILS_WITH(read_manifest((d1 / "missing.jsonl").string()), ErrorKind::Io);
  fs::remove_all(d1);
  fs::remove_all(d2);
}
