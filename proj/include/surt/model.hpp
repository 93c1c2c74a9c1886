#pragma once
// The two-channel streaming unmixing + transducer network.
//
//   Xbar = MixEnc(X), M = sigmoid(MaskEnc(X)), H1 = M*Xbar, H2 = (1-M)*Xbar
//
// Both channels share one encoder, prediction network, and joint network.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>

#include "json.hpp"
#include "surt/dualpath.hpp"
#include "surt/numcore.hpp"
#include "surt/tape.hpp"
#include "surt/transducer.hpp"

namespace surt {

enum class EncoderKind { Lstm, DpLstm, DpTransformer };

std::string to_string(EncoderKind kind);
EncoderKind parse_encoder_kind(const std::string& name);

struct ModelConfig {
  std::size_t feat_dim = 32;
  std::size_t model_dim = 32;  // D: MixEnc/MaskEnc output and encoder width
  std::size_t conv_kernel = 3;  // causal 1-D convolutions over time
  EncoderKind encoder = EncoderKind::Lstm;
  std::size_t encoder_layers = 2;
  std::size_t lstm_hidden = 32;
  std::size_t heads = 4;
  std::size_t ffn_dim = 64;
  std::size_t pred_embed = 16;
  std::size_t pred_hidden = 32;
  std::size_t pred_layers = 1;
  std::size_t joint_dim = 32;
  std::size_t vocab = 6;        // V; token ids 1..V, 0 is blank
  std::size_t chunk_width = 30;
  std::size_t chunk_hop = 0;    // 0 means hop = chunk width (disjoint chunks)

  void validate() const;
  bool dual_path() const { return encoder != EncoderKind::Lstm; }
  std::size_t hop_for(std::size_t width) const { return chunk_hop == 0 ? width : std::min(chunk_hop, width); }

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);

  // Full-scale reference configurations (documented, not trained here).
  static ModelConfig reference_lstm();
  static ModelConfig reference_dp_lstm();
  static ModelConfig reference_dp_transformer();
};

struct UnmixVars {
  Var mix;   // Xbar
  Var mask;  // M
  Var h1;
  Var h2;
};

class SurtModel {
 public:
  explicit SurtModel(ModelConfig cfg);

  const ModelConfig& config() const { return cfg_; }

  template <class T>
  ParamStore<T> init_params(std::uint64_t seed) const;

  template <class T>
  UnmixVars unmix(Tape<T>& tape, Var features) const;

  // Shared encoder applied to one channel. chunk_width is ignored by the
  // plain LSTM encoder.
  template <class T>
  Var encode(Tape<T>& tape, Var h, std::size_t chunk_width) const;

  // Prediction network over the blank-prefixed labels: (U+1) x pred_hidden.
  template <class T>
  Var predict(Tape<T>& tape, std::span<const int> labels) const;

  // Joint network + transducer loss for one channel as a single 1x1 node.
  template <class T>
  Var transducer_loss(Tape<T>& tape, Var enc, std::span<const int> labels) const;

  // T x (U+1) x (V+1) lattice scores (forward only).
  template <class T>
  Tensor<T> joint_logits(Tape<T>& tape, Var enc, std::span<const int> labels) const;

  // Projected encoder frames (T x joint_dim) used by the decoders.
  template <class T>
  Tensor<T> project_encoder(Tape<T>& tape, Var enc) const;

  // Step function over projected encoder frames; caches prediction states by prefix.
  StepFn make_step_fn(const ParamStore<float>& params, Tensor<float> enc_projected) const;

 private:
  template <class T>
  Var conv_stack(Tape<T>& tape, Var x, const std::string& prefix) const;
  template <class T>
  Var encode_lstm(Tape<T>& tape, Var h) const;
  template <class T>
  Var encode_dp_lstm(Tape<T>& tape, Var h, std::size_t width) const;
  template <class T>
  Var encode_dp_transformer(Tape<T>& tape, Var h, std::size_t width) const;
  template <class T>
  Var attention_block(Tape<T>& tape, Var x, const std::string& prefix, std::shared_ptr<const NeighborLists> nbrs) const;
  template <class T>
  Var feed_forward_block(Tape<T>& tape, Var x, const std::string& prefix) const;
  template <class T>
  Var linear(Tape<T>& tape, Var x, const std::string& prefix) const;
  template <class T>
  Var norm(Tape<T>& tape, Var x, const std::string& prefix) const;

  ModelConfig cfg_;
};

// Sinusoidal codes for within-chunk offset plus chunk index (rows x dim).
template <class T>
Tensor<T> chunk_positional_encoding(std::size_t frames, std::size_t width, std::size_t dim);

}  // namespace surt
