#pragma once
// Synthetic toy-speech corpus and tiered multi-turn session mixing.
//
// Each speaker owns a disjoint band of feature dimensions; each
// (speaker, token) pair renders to a fixed template of a few frames plus
// Gaussian noise. Sessions are feature-domain sums of utterances.

#include <array>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "surt/tensor.hpp"
#include "surt/transducer.hpp"

namespace surt {

struct CorpusConfig {
  std::size_t vocab = 6;
  std::size_t speakers = 8;
  std::size_t band_dim = 4;
  std::size_t frames_per_token = 5;
  double noise = 0.1;         // sigma
  double separation_k = 3.0;  // required template separation, in noise units
  std::uint64_t seed = 1;     // template seed (fixed per corpus, independent of session seeds)

  std::size_t feat_dim() const { return speakers * band_dim; }
  void validate() const;
  nlohmann::json to_json() const;
  static CorpusConfig from_json(const nlohmann::json& j);
};

struct Utterance {
  int speaker = 0;
  Labels tokens;
  Tensor<float> features;  // may be dropped once mixed into a session
  std::size_t start_frame = 0;
  std::size_t end_frame = 0;

  std::size_t length() const { return end_frame - start_frame; }
};

struct Session {
  std::string id;
  std::string tier;
  Tensor<float> features;  // T x F mixture
  std::array<std::vector<Utterance>, 2> channels;
  std::size_t num_utterances = 0;
  double overlap_ratio = 0.0;
  std::vector<double> delays;  // seconds, each start relative to the previous start

  std::size_t frames() const { return features.rows(); }
  // Both channels merged in start order (channel 1 first on ties).
  std::vector<Utterance> utterances_by_start() const;
  std::array<Labels, 2> channel_labels() const;
};

struct TierSpec {
  std::string name;
  std::size_t min_speakers = 2, max_speakers = 2;
  std::size_t min_utterances = 2, max_utterances = 2;
  std::size_t sessions = 200;
  std::size_t min_tokens = 3, max_tokens = 8;
  double max_overlap = 0.4;

  void validate() const;
  static TierSpec t1();  // 2 speakers, 2 utterances
  static TierSpec t2();  // 2 speakers, 2-4 utterances
  static TierSpec t3();  // 2-4 speakers, 2-12 utterances
  static TierSpec by_name(const std::string& name);
};

class ToyCorpus {
 public:
  explicit ToyCorpus(CorpusConfig cfg);

  const CorpusConfig& config() const { return cfg_; }
  // frames_per_token x feat_dim template for a (speaker, token) pair.
  const Tensor<float>& token_template(int speaker, int token) const;
  // Smallest Frobenius distance between templates of different speakers.
  double min_template_distance() const;
  // Distance a template pair must exceed: k * sigma * sqrt(template size).
  double separation_threshold() const;

  Utterance generate_toy_utterance(int speaker, std::size_t length, std::mt19937_64& rng) const;

 private:
  CorpusConfig cfg_;
  std::vector<Tensor<float>> templates_;  // speaker-major
};

// First-fit by start time. Input must be ordered by start frame.
std::pair<std::vector<Utterance>, std::vector<Utterance>> channel_assign_heat(const std::vector<Utterance>& ordered);

// delays[i] is the start of utterance i relative to the start of utterance
// i-1 (the first relative to frame 0); delays may also omit the first entry.
// Utterances that start on the same frame are ordered at random.
Session mix_session(std::vector<Utterance> utterances, const std::vector<double>& delays, std::mt19937_64& rng);

// Frames with at least two active utterances over total frames.
double overlap_ratio(std::span<const Utterance> utterances, std::size_t total_frames);

inline constexpr double kOverlapTolerance = 0.05;

// target_overlap < 0 samples a per-session target uniformly in [0, spec.max_overlap].
std::vector<Session> make_tier_dataset(const TierSpec& spec, double target_overlap, std::mt19937_64& rng,
                                       const ToyCorpus& corpus);

// Two-speaker sessions with a fixed start delay and equal-length utterances.
std::vector<Session> make_delay_dataset(std::size_t sessions, double delay_seconds, std::size_t min_tokens,
                                        std::size_t max_tokens, std::mt19937_64& rng, const ToyCorpus& corpus,
                                        const std::string& tier = "delay");

// Writes <dir>/<name> (JSON Lines) and <dir>/features/<id>.surt.
void write_manifest(const std::string& dir, const std::string& name, std::span<const Session> sessions);
std::vector<Session> read_manifest(const std::string& path);

}  // namespace surt
