#include "surt/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "surt/dualpath.hpp"

namespace surt {

namespace fs = std::filesystem;
using nlohmann::json;

void CorpusConfig::validate() const {
  if (vocab == 0 || speakers == 0 || band_dim == 0 || frames_per_token == 0) {
    fail(ErrorKind::BadConfig, "corpus dimensions must be positive");
  }
  if (noise < 0.0 || separation_k < 0.0) fail(ErrorKind::BadConfig, "noise and separation must be nonnegative");
}

json CorpusConfig::to_json() const {
  return {{"vocab", vocab},       {"speakers", speakers},         {"band_dim", band_dim},
          {"frames_per_token", frames_per_token}, {"noise", noise}, {"separation_k", separation_k},
          {"seed", seed}};
}

CorpusConfig CorpusConfig::from_json(const json& j) {
  CorpusConfig c;
  c.vocab = j.value("vocab", c.vocab);
  c.speakers = j.value("speakers", c.speakers);
  c.band_dim = j.value("band_dim", c.band_dim);
  c.frames_per_token = j.value("frames_per_token", c.frames_per_token);
  c.noise = j.value("noise", c.noise);
  c.separation_k = j.value("separation_k", c.separation_k);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

std::vector<Utterance> Session::utterances_by_start() const {
  std::vector<Utterance> all(channels[0]);
  all.insert(all.end(), channels[1].begin(), channels[1].end());
  std::stable_sort(all.begin(), all.end(),
                   [](const Utterance& a, const Utterance& b) { return a.start_frame < b.start_frame; });
  return all;
}

std::array<Labels, 2> Session::channel_labels() const {
  std::array<Labels, 2> out;
  for (std::size_t c = 0; c < 2; ++c) {
    for (const auto& u : channels[c]) out[c].insert(out[c].end(), u.tokens.begin(), u.tokens.end());
  }
  return out;
}

void TierSpec::validate() const {
  if (min_speakers < 1 || min_speakers > max_speakers) fail(ErrorKind::BadConfig, "tier speaker range");
  if (min_utterances < 1 || min_utterances > max_utterances) fail(ErrorKind::BadConfig, "tier utterance range");
  if (max_utterances < min_speakers) fail(ErrorKind::BadConfig, "tier needs at least one utterance per speaker");
  if (min_tokens < 1 || min_tokens > max_tokens) fail(ErrorKind::BadConfig, "tier token range");
  if (max_overlap < 0.0 || max_overlap > 0.4) fail(ErrorKind::BadConfig, "tier overlap must lie in [0, 0.4]");
}

TierSpec TierSpec::t1() { return {"t1", 2, 2, 2, 2}; }
TierSpec TierSpec::t2() { return {"t2", 2, 2, 2, 4}; }
TierSpec TierSpec::t3() { return {"t3", 2, 4, 2, 12}; }

TierSpec TierSpec::by_name(const std::string& name) {
  if (name == "t1") return t1();
  if (name == "t2") return t2();
  if (name == "t3") return t3();
  fail(ErrorKind::BadConfig, "unknown tier '" + name + "' (t1, t2, t3)");
}

ToyCorpus::ToyCorpus(CorpusConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  std::mt19937_64 rng(cfg_.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t f = cfg_.feat_dim();
  for (std::size_t s = 0; s < cfg_.speakers; ++s) {
    for (std::size_t k = 0; k < cfg_.vocab; ++k) {
      Tensor<float> t = Tensor<float>::matrix(cfg_.frames_per_token, f);
      for (std::size_t r = 0; r < cfg_.frames_per_token; ++r) {
        for (std::size_t d = 0; d < cfg_.band_dim; ++d) t.at(r, s * cfg_.band_dim + d) = static_cast<float>(normal(rng));
      }
      templates_.push_back(std::move(t));
    }
  }
  if (cfg_.speakers > 1 && min_template_distance() <= separation_threshold()) {
    fail(ErrorKind::BadConfig, "speaker templates are not separable at the configured noise level");
  }
}

const Tensor<float>& ToyCorpus::token_template(int speaker, int token) const {
  if (speaker < 0 || static_cast<std::size_t>(speaker) >= cfg_.speakers) fail(ErrorKind::BadConfig, "speaker id");
  if (token < 1 || static_cast<std::size_t>(token) > cfg_.vocab) fail(ErrorKind::BadLabel, "token id");
  return templates_[static_cast<std::size_t>(speaker) * cfg_.vocab + static_cast<std::size_t>(token - 1)];
}

double ToyCorpus::min_template_distance() const {
  double best = std::numeric_limits<double>::infinity();
  const std::size_t v = cfg_.vocab;
  for (std::size_t a = 0; a < templates_.size(); ++a) {
    for (std::size_t b = a + 1; b < templates_.size(); ++b) {
      if (a / v == b / v) continue;
      double sq = 0.0;
      for (std::size_t i = 0; i < templates_[a].size(); ++i) {
        const double d = double(templates_[a][i]) - double(templates_[b][i]);
        sq += d * d;
      }
      best = std::min(best, std::sqrt(sq));
    }
  }
  return best;
}

double ToyCorpus::separation_threshold() const {
  return cfg_.separation_k * cfg_.noise * std::sqrt(double(cfg_.frames_per_token * cfg_.feat_dim()));
}

Utterance ToyCorpus::generate_toy_utterance(int speaker, std::size_t length, std::mt19937_64& rng) const {
  if (length == 0) fail(ErrorKind::BadConfig, "utterance needs at least one token");
  std::uniform_int_distribution<int> token(1, static_cast<int>(cfg_.vocab));
  std::normal_distribution<double> noise(0.0, 1.0);
  Utterance u;
  u.speaker = speaker;
  const std::size_t fpt = cfg_.frames_per_token, f = cfg_.feat_dim();
  u.features = Tensor<float>::matrix(length * fpt, f);
  for (std::size_t i = 0; i < length; ++i) {
    const int y = token(rng);
    u.tokens.push_back(y);
    const auto& tpl = token_template(speaker, y);
    std::copy(tpl.values().begin(), tpl.values().end(), u.features.row(i * fpt));
  }
  if (cfg_.noise > 0.0) {
    for (auto& x : u.features.values()) x += static_cast<float>(cfg_.noise * noise(rng));
  }
  u.start_frame = 0;
  u.end_frame = length * fpt;
  return u;
}

std::pair<std::vector<Utterance>, std::vector<Utterance>> channel_assign_heat(const std::vector<Utterance>& ordered) {
  std::pair<std::vector<Utterance>, std::vector<Utterance>> out;
  for (std::size_t i = 0; i < ordered.size(); ++i) {
    const Utterance& u = ordered[i];
    if (i > 0 && u.start_frame < ordered[i - 1].start_frame) {
      fail(ErrorKind::BadConfig, "utterances must be ordered by start frame");
    }
    auto fits = [&](const std::vector<Utterance>& ch) { return ch.empty() || ch.back().end_frame <= u.start_frame; };
    if (fits(out.first)) {
      out.first.push_back(u);
    } else if (fits(out.second)) {
      out.second.push_back(u);
    } else {
      fail(ErrorKind::TooManySimultaneous, "three utterances active at frame " + std::to_string(u.start_frame));
    }
  }
  return out;
}

double overlap_ratio(std::span<const Utterance> utterances, std::size_t total_frames) {
  if (total_frames == 0) return 0.0;
  std::vector<int> active(total_frames + 1, 0);
  for (const auto& u : utterances) {
    active[std::min(u.start_frame, total_frames)] += 1;
    active[std::min(u.end_frame, total_frames)] -= 1;
  }
  std::size_t overlapped = 0;
  int running = 0;
  for (std::size_t t = 0; t < total_frames; ++t) {
    running += active[t];
    if (running >= 2) ++overlapped;
  }
  return static_cast<double>(overlapped) / static_cast<double>(total_frames);
}

Session mix_session(std::vector<Utterance> utterances, const std::vector<double>& delays, std::mt19937_64& rng) {
  const std::size_t n = utterances.size();
  if (n == 0) fail(ErrorKind::BadConfig, "session needs at least one utterance");
  std::vector<double> d = delays;
  if (d.size() + 1 == n) d.insert(d.begin(), 0.0);
  if (d.size() != n) fail(ErrorKind::ShapeMismatch, "need one delay per utterance");
  const std::size_t f = utterances[0].features.cols();
  std::size_t start = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(d[i] >= 0.0) || !std::isfinite(d[i])) fail(ErrorKind::BadConfig, "delays must be finite and nonnegative");
    if (utterances[i].features.cols() != f || utterances[i].features.rank() != 2) {
      fail(ErrorKind::ShapeMismatch, "utterance feature widths differ");
    }
    start += static_cast<std::size_t>(std::llround(d[i] * 1000.0 / kFrameMillis));
    utterances[i].start_frame = start;
    utterances[i].end_frame = start + utterances[i].features.rows();
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return utterances[a].start_frame < utterances[b].start_frame;
  });
  for (std::size_t lo = 0; lo < n;) {
    std::size_t hi = lo + 1;
    while (hi < n && utterances[order[hi]].start_frame == utterances[order[lo]].start_frame) ++hi;
    if (hi - lo > 1) std::shuffle(order.begin() + static_cast<std::ptrdiff_t>(lo), order.begin() + static_cast<std::ptrdiff_t>(hi), rng);
    lo = hi;
  }

  std::vector<Utterance> ordered;
  std::size_t total = 0;
  for (std::size_t i : order) {
    total = std::max(total, utterances[i].end_frame);
    ordered.push_back(std::move(utterances[i]));
  }

  Session s;
  s.features = Tensor<float>::matrix(total, f);
  for (const auto& u : ordered) {
    for (std::size_t r = 0; r < u.features.rows(); ++r) {
      float* dst = s.features.row(u.start_frame + r);
      const float* src = u.features.row(r);
      for (std::size_t c = 0; c < f; ++c) dst[c] += src[c];
    }
  }
  s.overlap_ratio = overlap_ratio(ordered, total);
  s.num_utterances = n;
  s.delays = d;
  auto [ch1, ch2] = channel_assign_heat(ordered);
  for (auto& u : ch1) u.features = {};
  for (auto& u : ch2) u.features = {};
  s.channels = {std::move(ch1), std::move(ch2)};
  return s;
}

namespace {

std::string session_id(const std::string& tier, std::size_t i) {
  std::ostringstream os;
  os << tier << '-';
  os.width(5);
  os.fill('0');
  os << i;
  return os.str();
}

// Turn order over speakers, each speaker at least once, avoiding repeated
// consecutive speakers where the counts allow it.
std::vector<int> turn_order(const std::vector<int>& speakers, std::size_t utterances, std::mt19937_64& rng) {
  std::vector<int> turns(speakers);
  std::uniform_int_distribution<std::size_t> pick(0, speakers.size() - 1);
  while (turns.size() < utterances) turns.push_back(speakers[pick(rng)]);
  for (int attempt = 0; attempt < 64; ++attempt) {
    std::shuffle(turns.begin(), turns.end(), rng);
    bool ok = true;
    for (std::size_t i = 1; i < turns.size() && ok; ++i) ok = turns[i] != turns[i - 1];
    if (ok) break;
  }
  return turns;
}

// Overlap per junction i (between utterance i-1 and i) so that the total
// overlapped frame count is as close as possible to `target`. Never lets
// three utterances be active together.
std::vector<std::size_t> distribute_overlap(const std::vector<std::size_t>& lens, const std::vector<int>& speakers,
                                            std::size_t target, std::mt19937_64& rng) {
  const std::size_t n = lens.size();
  std::vector<double> weight(n, 0.0);
  std::uniform_real_distribution<double> w(0.3, 1.0);
  for (std::size_t i = 1; i < n; ++i) weight[i] = speakers[i] == speakers[i - 1] ? 0.0 : w(rng);
  auto realize = [&](double scale) {
    std::vector<std::size_t> o(n, 0);
    for (std::size_t i = 1; i < n; ++i) {
      if (weight[i] == 0.0) continue;
      std::size_t v = static_cast<std::size_t>(std::floor(scale * weight[i]));
      v = std::min(v, std::min(lens[i - 1], lens[i]) - 1);
      v = std::min(v, lens[i - 1] - o[i - 1]);
      o[i] = v;
    }
    return o;
  };
  auto total = [](const std::vector<std::size_t>& o) { return std::accumulate(o.begin(), o.end(), std::size_t{0}); };
  double lo = 0.0, hi = static_cast<double>(*std::max_element(lens.begin(), lens.end())) * 4.0;
  std::vector<std::size_t> best = realize(0.0);
  std::size_t best_gap = target;
  for (int it = 0; it < 50; ++it) {
    const double mid = 0.5 * (lo + hi);
    auto o = realize(mid);
    const std::size_t sum = total(o);
    const std::size_t gap = sum > target ? sum - target : target - sum;
    if (gap < best_gap) {
      best_gap = gap;
      best = o;
    }
    if (sum < target) lo = mid; else hi = mid;
  }
  return best;
}

Session tier_session(const TierSpec& spec, double target, std::mt19937_64& rng, const ToyCorpus& corpus) {
  const auto& cc = corpus.config();
  std::uniform_int_distribution<std::size_t> nspk(spec.min_speakers, std::min(spec.max_speakers, cc.speakers));
  std::uniform_int_distribution<std::size_t> ntok(spec.min_tokens, spec.max_tokens);
  std::uniform_real_distribution<double> rho(0.0, spec.max_overlap);
  std::uniform_int_distribution<std::size_t> gap(0, 4 * cc.frames_per_token);

  for (int attempt = 0; attempt < 20; ++attempt) {
    const std::size_t k = nspk(rng);
    std::uniform_int_distribution<std::size_t> nutt(std::max(spec.min_utterances, k), spec.max_utterances);
    const std::size_t n = nutt(rng);
    std::vector<int> pool(cc.speakers);
    std::iota(pool.begin(), pool.end(), 0);
    std::shuffle(pool.begin(), pool.end(), rng);
    pool.resize(k);
    const std::vector<int> turns = turn_order(pool, n, rng);
    const double goal = target < 0.0 ? rho(rng) : target;

    std::vector<Utterance> utts;
    std::vector<std::size_t> lens;
    for (int spk : turns) {
      utts.push_back(corpus.generate_toy_utterance(spk, ntok(rng), rng));
      lens.push_back(utts.back().features.rows());
    }
    const std::size_t total_len = std::accumulate(lens.begin(), lens.end(), std::size_t{0});

    std::vector<std::size_t> starts(n, 0);
    if (goal <= 0.0) {
      for (std::size_t i = 1; i < n; ++i) starts[i] = starts[i - 1] + lens[i - 1] + gap(rng);
    } else {
      const auto want = static_cast<std::size_t>(std::llround(goal * double(total_len) / (1.0 + goal)));
      const auto o = distribute_overlap(lens, turns, want, rng);
      for (std::size_t i = 1; i < n; ++i) starts[i] = starts[i - 1] + lens[i - 1] - o[i];
    }
    std::vector<double> delays(n, 0.0);
    for (std::size_t i = 1; i < n; ++i) delays[i] = double(starts[i] - starts[i - 1]) * kFrameMillis / 1000.0;

    Session s = mix_session(std::move(utts), delays, rng);
    if (std::abs(s.overlap_ratio - goal) <= kOverlapTolerance && s.overlap_ratio <= spec.max_overlap + kOverlapTolerance) {
      return s;
    }
  }
  fail(ErrorKind::InfeasibleOverlap, "could not realize the target overlap for tier " + spec.name);
}

}  // namespace

std::vector<Session> make_tier_dataset(const TierSpec& spec, double target_overlap, std::mt19937_64& rng,
                                       const ToyCorpus& corpus) {
  spec.validate();
  if (target_overlap > spec.max_overlap) fail(ErrorKind::InfeasibleOverlap, "target overlap above tier maximum");
  if (spec.max_speakers > corpus.config().speakers) fail(ErrorKind::BadConfig, "tier needs more speakers than the corpus has");
  std::vector<Session> out;
  out.reserve(spec.sessions);
  for (std::size_t i = 0; i < spec.sessions; ++i) {
    std::mt19937_64 session_rng(rng());
    Session s = tier_session(spec, target_overlap, session_rng, corpus);
    s.id = session_id(spec.name, i);
    s.tier = spec.name;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<Session> make_delay_dataset(std::size_t sessions, double delay_seconds, std::size_t min_tokens,
                                        std::size_t max_tokens, std::mt19937_64& rng, const ToyCorpus& corpus,
                                        const std::string& tier) {
  if (min_tokens < 1 || min_tokens > max_tokens) fail(ErrorKind::BadConfig, "token range");
  if (corpus.config().speakers < 2) fail(ErrorKind::BadConfig, "delay sessions need two speakers");
  std::vector<Session> out;
  for (std::size_t i = 0; i < sessions; ++i) {
    std::mt19937_64 srng(rng());
    std::uniform_int_distribution<int> spk(0, static_cast<int>(corpus.config().speakers) - 1);
    std::uniform_int_distribution<std::size_t> ntok(min_tokens, max_tokens);
    const int a = spk(srng);
    int b = spk(srng);
    while (b == a) b = spk(srng);
    const std::size_t len = ntok(srng);
    std::vector<Utterance> utts{corpus.generate_toy_utterance(a, len, srng), corpus.generate_toy_utterance(b, len, srng)};
    Session s = mix_session(std::move(utts), {0.0, delay_seconds}, srng);
    s.id = session_id(tier, i);
    s.tier = tier;
    out.push_back(std::move(s));
  }
  return out;
}

void write_manifest(const std::string& dir, const std::string& name, std::span<const Session> sessions) {
  const fs::path root(dir);
  std::error_code ec;
  fs::create_directories(root / "features", ec);
  if (ec) fail(ErrorKind::Io, "cannot create " + (root / "features").string() + ": " + ec.message());
  std::ofstream out(root / name, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write " + (root / name).string());
  for (const auto& s : sessions) {
    const std::string rel = "features/" + s.id + ".surt";
    save_tensor((root / rel).string(), s.features);
    json channels = json::array();
    for (const auto& ch : s.channels) {
      json list = json::array();
      for (const auto& u : ch) {
        list.push_back({{"tokens", u.tokens}, {"start_frame", u.start_frame}, {"end_frame", u.end_frame},
                        {"speaker", u.speaker}});
      }
      channels.push_back(std::move(list));
    }
    json line = {{"id", s.id}, {"tier", s.tier}, {"features", rel}, {"overlap_ratio", s.overlap_ratio},
                 {"channels", std::move(channels)}};
    out << line.dump() << '\n';
  }
  if (!out) fail(ErrorKind::Io, "failed writing " + (root / name).string());
}

std::vector<Session> read_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot read manifest " + path);
  const fs::path base = fs::path(path).parent_path();
  std::vector<Session> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
      Session s;
      s.id = j.at("id").get<std::string>();
      s.tier = j.at("tier").get<std::string>();
      s.overlap_ratio = j.at("overlap_ratio").get<double>();
      s.features = load_tensor((base / j.at("features").get<std::string>()).string());
      const auto& chans = j.at("channels");
      if (chans.size() != 2) fail(ErrorKind::Io, "session needs two channel lists");
      for (std::size_t c = 0; c < 2; ++c) {
        for (const auto& u : chans[c]) {
          Utterance utt;
          utt.tokens = u.at("tokens").get<Labels>();
          utt.start_frame = u.at("start_frame").get<std::size_t>();
          utt.end_frame = u.at("end_frame").get<std::size_t>();
          utt.speaker = u.at("speaker").get<int>();
          s.channels[c].push_back(std::move(utt));
        }
      }
      s.num_utterances = s.channels[0].size() + s.channels[1].size();
      const auto ordered = s.utterances_by_start();
      for (std::size_t i = 0; i < ordered.size(); ++i) {
        const double prev = i == 0 ? 0.0 : double(ordered[i - 1].start_frame);
        s.delays.push_back((double(ordered[i].start_frame) - prev) * kFrameMillis / 1000.0);
      }
      out.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::Io, path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace surt
