#pragma once
// Training loop with a single-turn -> multi-turn curriculum, chunk-width
// randomization, periodic held-out evaluation, checkpoints, and decoding.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "surt/dualpath.hpp"
#include "surt/losses.hpp"
#include "surt/model.hpp"
#include "surt/numcore.hpp"
#include "surt/simulator.hpp"

namespace surt {

struct CurriculumConfig {
  std::uint64_t single_turn_steps = 200;
  std::uint64_t total_steps = 2000;
  std::size_t batch_size = 4;
  std::uint64_t eval_every = 100;
  std::uint64_t seed = 1;

  void validate() const;
};

enum class DatasetTag { SingleTurn, MultiTurn };

const char* to_string(DatasetTag tag);

DatasetTag curriculum_schedule(std::uint64_t step, const CurriculumConfig& cfg);

enum class LossKind { Heat, Pit };

const char* to_string(LossKind kind);
LossKind parse_loss_kind(const std::string& name);

// Where sessions come from. Manifest paths win over the synthetic recipes.
struct DataConfig {
  std::string single_turn_manifest;
  std::string multi_turn_manifest;
  std::string dev_manifest;
  std::string recipe = "tiers";   // "tiers" or "delay"
  double delay_seconds = 2.0;     // delay recipe only
  std::size_t train_sessions = 200;
  std::size_t dev_sessions = 50;
  std::size_t min_tokens = 3;
  std::size_t max_tokens = 8;
  std::vector<std::string> dev_tiers{"t1", "t2", "t3"};
  std::uint64_t seed = 1;
};

struct DecodeConfig {
  std::size_t beam = 1;
  std::size_t chunk_width = 35;
};

struct TrainConfig {
  ModelConfig model;
  CorpusConfig corpus;
  DataConfig data;
  ScheduleConfig schedule;
  CurriculumConfig curriculum;
  CwrConfig cwr;
  bool cwr_enabled = false;
  DecodeConfig decode;
  AdamWConfig optimizer;
  double clip_norm = 5.0;
  LossKind loss = LossKind::Heat;
  std::size_t threads = 1;
  std::size_t eval_sessions = 0;  // 0 uses the full dev set during training

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

TrainConfig load_train_config(const std::string& path);

struct TrainData {
  std::vector<Session> single_turn;
  std::vector<Session> multi_turn;  // also contains single-turn sessions
  std::vector<Session> dev;
};

TrainData build_train_data(const TrainConfig& cfg);

struct Checkpoint {
  ModelConfig model;
  ParamStore<float> params;
  std::uint64_t step = 0;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

struct DecodedSession {
  std::string id;
  std::array<Labels, 2> channels;
};

// Decodes both output channels of one session.
std::array<Labels, 2> decode_session(const SurtModel& model, const ParamStore<float>& params, const Session& session,
                                     std::size_t beam, std::size_t chunk_width);

struct TierScore {
  std::string tier;
  std::size_t sessions = 0;
  std::size_t skipped = 0;  // more utterances than the scorer allows
  std::size_t ref_words = 0;
  std::size_t errors = 0;
  std::size_t leakage_insertions = 0;
  std::size_t omitted_utterances = 0;

  double wer() const { return ref_words == 0 ? 0.0 : double(errors) / double(ref_words); }
  void add(const TierScore& other);
};

struct EvalReport {
  std::vector<TierScore> tiers;  // sorted by tier name
  TierScore overall;
  std::size_t chunk_width = 0;
  std::size_t beam = 1;
  double latency_ms = 0.0;
  double assign_acc = 0.0;         // ties count as correct
  double assign_acc_strict = 0.0;  // ties count as incorrect
  double identical_channels = 0.0; // fraction of sessions whose two channels decode identically
  std::vector<DecodedSession> decoded;
};

// Scores decoded channels against sessions (matched by position).
EvalReport score_sessions(std::span<const Session> sessions, std::span<const DecodedSession> decoded);

EvalReport evaluate(const SurtModel& model, const ParamStore<float>& params, std::span<const Session> sessions,
                    std::size_t beam, std::size_t chunk_width, std::size_t threads = 1);

struct EvalPoint {
  std::uint64_t step = 0;
  double assign_acc = 0.0;
  double assign_acc_strict = 0.0;
  double wer = 0.0;
  double identical_channels = 0.0;
};

struct TrainResult {
  Checkpoint last;
  Checkpoint best;  // lowest dev WER among evaluations
  std::vector<double> losses;  // per step, batch mean
  std::vector<EvalPoint> evals;
};

// out_dir empty: nothing is written. Otherwise writes metrics.csv,
// eval.csv, last.ckpt, best.ckpt, and config.json.
TrainResult run_training(const TrainConfig& cfg, const TrainData& data, const std::string& out_dir);

// Mean session loss (sum of the two channel losses) for one batch, plus
// gradients accumulated into `grads` (indexed like params.slots()).
struct BatchLoss {
  double loss = 0.0;
  std::size_t swapped = 0;
};

BatchLoss batch_loss_and_grad(const SurtModel& model, const ParamStore<float>& params,
                              std::span<const Session* const> batch, std::size_t chunk_width, LossKind loss,
                              std::size_t threads, std::vector<Tensor<float>>& grads);

// Convenience for tests: session loss on a tape of any precision.
template <class T>
SessionLoss session_loss(const SurtModel& model, Tape<T>& tape, const Tensor<float>& features,
                         const std::array<Labels, 2>& refs, std::size_t chunk_width, LossKind loss);

// Tiny f64 configuration used by the gradient-check diagnostics.
ModelConfig tiny_model_config(EncoderKind encoder);

// Gradients of individual weights in the full pipeline reach 1e-8 against
// losses near 10, so plain central differences at tiny h drown in roundoff.
// Larger steps can carry the pit minimum across a branch switch.
inline GradCheckOptions pipeline_check_options() {
  GradCheckOptions o;
  o.h = 1e-3;
  o.richardson = true;
  return o;
}

// Finite-difference check of the full unmix -> encoder -> joint -> session
// loss pipeline on random features and labels.
GradCheckReport pipeline_grad_check(EncoderKind encoder, LossKind loss, std::uint64_t seed,
                                    const GradCheckOptions& opts = pipeline_check_options());

}  // namespace surt
