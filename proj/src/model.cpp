#include "surt/model.hpp"

#include <cmath>
#include <map>
#include <random>

#include "surt/kernels.hpp"

namespace surt {

std::string to_string(EncoderKind kind) {
  switch (kind) {
    case EncoderKind::Lstm: return "lstm";
    case EncoderKind::DpLstm: return "dp-lstm";
    case EncoderKind::DpTransformer: return "dp-transformer";
  }
  return "?";
}

EncoderKind parse_encoder_kind(const std::string& name) {
  if (name == "lstm") return EncoderKind::Lstm;
  if (name == "dp-lstm") return EncoderKind::DpLstm;
  if (name == "dp-transformer") return EncoderKind::DpTransformer;
  fail(ErrorKind::BadConfig, "unknown encoder '" + name + "' (lstm, dp-lstm, dp-transformer)");
}

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* what) {
    if (v == 0) fail(ErrorKind::BadConfig, std::string(what) + " must be positive");
  };
  positive(feat_dim, "feat_dim");
  positive(model_dim, "model_dim");
  positive(conv_kernel, "conv_kernel");
  positive(encoder_layers, "encoder_layers");
  positive(lstm_hidden, "lstm_hidden");
  positive(heads, "heads");
  positive(ffn_dim, "ffn_dim");
  positive(pred_embed, "pred_embed");
  positive(pred_hidden, "pred_hidden");
  positive(pred_layers, "pred_layers");
  positive(joint_dim, "joint_dim");
  positive(vocab, "vocab");
  positive(chunk_width, "chunk_width");
  if (model_dim % heads != 0) fail(ErrorKind::BadConfig, "model_dim must be divisible by heads");
  if (chunk_hop > chunk_width) fail(ErrorKind::BadHop, "chunk_hop exceeds chunk_width");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"feat_dim", feat_dim},       {"model_dim", model_dim},   {"conv_kernel", conv_kernel},
          {"encoder", surt::to_string(encoder)}, {"encoder_layers", encoder_layers}, {"lstm_hidden", lstm_hidden},
          {"heads", heads},             {"ffn_dim", ffn_dim},       {"pred_embed", pred_embed},
          {"pred_hidden", pred_hidden}, {"pred_layers", pred_layers}, {"joint_dim", joint_dim},   {"vocab", vocab},
          {"chunk_width", chunk_width}, {"chunk_hop", chunk_hop}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  auto get = [&](const char* key, std::size_t& field) {
    if (j.contains(key)) field = j.at(key).get<std::size_t>();
  };
  get("feat_dim", c.feat_dim);
  get("model_dim", c.model_dim);
  get("conv_kernel", c.conv_kernel);
  if (j.contains("encoder")) c.encoder = parse_encoder_kind(j.at("encoder").get<std::string>());
  get("encoder_layers", c.encoder_layers);
  get("lstm_hidden", c.lstm_hidden);
  get("heads", c.heads);
  get("ffn_dim", c.ffn_dim);
  get("pred_embed", c.pred_embed);
  get("pred_hidden", c.pred_hidden);
  get("pred_layers", c.pred_layers);
  get("joint_dim", c.joint_dim);
  get("vocab", c.vocab);
  get("chunk_width", c.chunk_width);
  get("chunk_hop", c.chunk_hop);
  c.validate();
  return c;
}

ModelConfig ModelConfig::reference_lstm() {
  ModelConfig c;
  c.feat_dim = 80;
  c.model_dim = 256;
  c.encoder = EncoderKind::Lstm;
  c.encoder_layers = 6;
  c.lstm_hidden = 1024;
  c.pred_embed = 256;
  c.pred_hidden = 1024;
  c.pred_layers = 2;
  c.joint_dim = 512;
  c.vocab = 4000;
  return c;
}

ModelConfig ModelConfig::reference_dp_lstm() {
  ModelConfig c = reference_lstm();
  c.encoder = EncoderKind::DpLstm;
  c.model_dim = 512;
  c.encoder_layers = 6;
  c.lstm_hidden = 512;
  c.chunk_width = 35;
  return c;
}

ModelConfig ModelConfig::reference_dp_transformer() {
  ModelConfig c = reference_lstm();
  c.encoder = EncoderKind::DpTransformer;
  c.model_dim = 256;
  c.encoder_layers = 12;
  c.heads = 8;
  c.ffn_dim = 1024;
  c.chunk_width = 35;
  return c;
}

SurtModel::SurtModel(ModelConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

namespace {

std::string pred_layer_name(std::size_t i) { return i == 0 ? std::string("pred.lstm") : "pred.lstm" + std::to_string(i + 1); }

template <class T>
Tensor<T> uniform_matrix(std::size_t rows, std::size_t cols, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor<T> t = Tensor<T>::matrix(rows, cols);
  for (auto& v : t.values()) v = static_cast<T>(dist(rng));
  return t;
}

template <class T>
Tensor<T> vector_of(std::size_t n, T fill) {
  return Tensor<T>({n}, fill);
}

template <class T>
void add_linear(ParamStore<T>& s, const std::string& prefix, std::size_t in, std::size_t out, std::mt19937_64& rng,
                bool bias = true) {
  s.add(prefix + ".w", uniform_matrix<T>(in, out, 1.0 / std::sqrt(double(in)), rng));
  if (bias) s.add(prefix + ".b", vector_of<T>(out, T(0)));
}

template <class T>
void add_norm(ParamStore<T>& s, const std::string& prefix, std::size_t dim) {
  s.add(prefix + ".g", vector_of<T>(dim, T(1)));
  s.add(prefix + ".b", vector_of<T>(dim, T(0)));
}

template <class T>
void add_lstm(ParamStore<T>& s, const std::string& prefix, std::size_t in, std::size_t hidden, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(double(hidden));
  s.add(prefix + ".wx", uniform_matrix<T>(in, 4 * hidden, bound, rng));
  s.add(prefix + ".wh", uniform_matrix<T>(hidden, 4 * hidden, bound, rng));
  Tensor<T> b = vector_of<T>(4 * hidden, T(0));
  for (std::size_t i = hidden; i < 2 * hidden; ++i) b[i] = T(1);  // forget gate
  s.add(prefix + ".b", std::move(b));
}

std::string layer_name(std::size_t i) { return "enc.l" + std::to_string(i); }

}  // namespace

template <class T>
ParamStore<T> SurtModel::init_params(std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  ParamStore<T> s;
  const std::size_t k = cfg_.conv_kernel, f = cfg_.feat_dim, d = cfg_.model_dim;
  for (const char* branch : {"mix", "mask"}) {
    add_linear(s, std::string(branch) + ".conv1", k * f, d, rng);
    add_linear(s, std::string(branch) + ".conv2", k * d, d, rng);
  }
  // The mask starts at 0.5 everywhere, so both channels begin identical.
  s.value("mask.conv2.w").fill(T(0));
  const std::size_t h = cfg_.lstm_hidden;
  for (std::size_t l = 0; l < cfg_.encoder_layers; ++l) {
    const std::string p = layer_name(l);
    switch (cfg_.encoder) {
      case EncoderKind::Lstm:
        add_norm(s, p + ".ln", d);
        add_lstm(s, p + ".lstm", d, h, rng);
        add_linear(s, p + ".proj", h, d, rng);
        break;
      case EncoderKind::DpLstm:
        add_norm(s, p + ".intra.ln", d);
        add_lstm(s, p + ".intra.fwd", d, h, rng);
        add_lstm(s, p + ".intra.bwd", d, h, rng);
        add_linear(s, p + ".intra.proj", 2 * h, d, rng);
        add_norm(s, p + ".inter.ln", d);
        add_lstm(s, p + ".inter.lstm", d, h, rng);
        add_linear(s, p + ".inter.proj", h, d, rng);
        break;
      case EncoderKind::DpTransformer:
        for (const char* blk : {".intra", ".inter"}) {
          const std::string b = p + blk;
          add_norm(s, b + ".ln1", d);
          add_linear(s, b + ".wq", d, d, rng, false);
          add_linear(s, b + ".wk", d, d, rng, false);
          add_linear(s, b + ".wv", d, d, rng, false);
          add_linear(s, b + ".wo", d, d, rng);
          add_norm(s, b + ".ln2", d);
          add_linear(s, b + ".ff1", d, cfg_.ffn_dim, rng);
          add_linear(s, b + ".ff2", cfg_.ffn_dim, d, rng);
        }
        break;
    }
  }
  add_norm(s, "enc.final_ln", d);

  const std::size_t classes = cfg_.vocab + 1;
  s.add("pred.embed", uniform_matrix<T>(classes, cfg_.pred_embed, 1.0, rng));
  for (std::size_t i = 0; i < cfg_.pred_layers; ++i) {
    add_lstm(s, pred_layer_name(i), i == 0 ? cfg_.pred_embed : cfg_.pred_hidden, cfg_.pred_hidden, rng);
  }
  add_linear(s, "joint.enc", d, cfg_.joint_dim, rng);
  add_linear(s, "joint.pred", cfg_.pred_hidden, cfg_.joint_dim, rng, false);
  add_linear(s, "joint.out", cfg_.joint_dim, classes, rng);
  return s;
}

template <class T>
Var SurtModel::linear(Tape<T>& tape, Var x, const std::string& prefix) const {
  Var y = tape.matmul(x, tape.param(prefix + ".w"));
  return tape.add_bias(y, tape.param(prefix + ".b"));
}

template <class T>
Var SurtModel::norm(Tape<T>& tape, Var x, const std::string& prefix) const {
  return tape.layer_norm(x, tape.param(prefix + ".g"), tape.param(prefix + ".b"));
}

template <class T>
Var SurtModel::conv_stack(Tape<T>& tape, Var x, const std::string& prefix) const {
  Var h = tape.tanh(linear(tape, tape.causal_window(x, cfg_.conv_kernel), prefix + ".conv1"));
  return linear(tape, tape.causal_window(h, cfg_.conv_kernel), prefix + ".conv2");
}

template <class T>
UnmixVars SurtModel::unmix(Tape<T>& tape, Var features) const {
  if (tape.value(features).cols() != cfg_.feat_dim || tape.value(features).rank() != 2) {
    fail(ErrorKind::ShapeMismatch, "features " + shape_string(tape.value(features).shape()) + ", expected [T, " +
                                       std::to_string(cfg_.feat_dim) + "]");
  }
  UnmixVars u;
  u.mix = conv_stack(tape, features, "mix");
  u.mask = tape.sigmoid(conv_stack(tape, features, "mask"));
  u.h1 = tape.mul(u.mask, u.mix);
  u.h2 = tape.mul(tape.one_minus(u.mask), u.mix);
  return u;
}

template <class T>
Var SurtModel::encode(Tape<T>& tape, Var h, std::size_t chunk_width) const {
  switch (cfg_.encoder) {
    case EncoderKind::Lstm: return encode_lstm(tape, h);
    case EncoderKind::DpLstm: return encode_dp_lstm(tape, h, chunk_width);
    case EncoderKind::DpTransformer: return encode_dp_transformer(tape, h, chunk_width);
  }
  return h;
}

template <class T>
Var SurtModel::encode_lstm(Tape<T>& tape, Var h) const {
  const std::size_t frames = tape.value(h).rows();
  std::vector<std::vector<std::size_t>> seq(1);
  for (std::size_t t = 0; t < frames; ++t) seq[0].push_back(t);
  Var x = h;
  for (std::size_t l = 0; l < cfg_.encoder_layers; ++l) {
    const std::string p = layer_name(l);
    Var y = norm(tape, x, p + ".ln");
    y = tape.lstm(y, tape.param(p + ".lstm.wx"), tape.param(p + ".lstm.wh"), tape.param(p + ".lstm.b"), seq);
    x = tape.add(x, linear(tape, y, p + ".proj"));
  }
  return norm(tape, x, "enc.final_ln");
}

template <class T>
Var SurtModel::encode_dp_lstm(Tape<T>& tape, Var h, std::size_t width) const {
  const std::size_t frames = tape.value(h).rows();
  const ChunkGrid grid = make_chunk_grid(frames, width, cfg_.hop_for(width));
  const std::size_t w = grid.width, c = grid.chunks;
  std::vector<std::vector<std::size_t>> intra(c), inter(w);
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t o = 0; o < w; ++o) {
      intra[ci].push_back(ci * w + o);
      inter[o].push_back(ci * w + o);
    }
  }
  const auto index = grid.frame_index();
  Var x = tape.gather_rows(h, index);
  auto lstm = [&](Var in, const std::string& p, const std::vector<std::vector<std::size_t>>& seqs, bool reverse) {
    return tape.lstm(in, tape.param(p + ".wx"), tape.param(p + ".wh"), tape.param(p + ".b"), seqs, reverse);
  };
  for (std::size_t l = 0; l < cfg_.encoder_layers; ++l) {
    const std::string p = layer_name(l);
    Var y = norm(tape, x, p + ".intra.ln");
    Var both = tape.concat_cols(lstm(y, p + ".intra.fwd", intra, false), lstm(y, p + ".intra.bwd", intra, true));
    x = tape.add(x, linear(tape, both, p + ".intra.proj"));
    y = norm(tape, x, p + ".inter.ln");
    x = tape.add(x, linear(tape, lstm(y, p + ".inter.lstm", inter, false), p + ".inter.proj"));
  }
  x = norm(tape, x, "enc.final_ln");
  return tape.overlap_add(x, index, frames);
}

template <class T>
Tensor<T> chunk_positional_encoding(std::size_t frames, std::size_t width, std::size_t dim) {
  Tensor<T> pe = Tensor<T>::matrix(frames, dim);
  auto code = [dim](std::size_t pos, std::size_t j) {
    const double rate = std::pow(10000.0, -double(2 * (j / 2)) / double(dim));
    return j % 2 == 0 ? std::sin(double(pos) * rate) : std::cos(double(pos) * rate);
  };
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t j = 0; j < dim; ++j) {
      pe.at(t, j) = static_cast<T>(0.5 * (code(t % width, j) + code(t / width, j)));
    }
  }
  return pe;
}

template <class T>
Var SurtModel::attention_block(Tape<T>& tape, Var x, const std::string& prefix,
                               std::shared_ptr<const NeighborLists> nbrs) const {
  Var y = norm(tape, x, prefix + ".ln1");
  Var q = tape.matmul(y, tape.param(prefix + ".wq.w"));
  Var k = tape.matmul(y, tape.param(prefix + ".wk.w"));
  Var v = tape.matmul(y, tape.param(prefix + ".wv.w"));
  Var a = tape.attention(q, k, v, cfg_.heads, std::move(nbrs));
  return tape.add(x, linear(tape, a, prefix + ".wo"));
}

template <class T>
Var SurtModel::feed_forward_block(Tape<T>& tape, Var x, const std::string& prefix) const {
  Var y = norm(tape, x, prefix + ".ln2");
  y = linear(tape, tape.tanh(linear(tape, y, prefix + ".ff1")), prefix + ".ff2");
  return tape.add(x, y);
}

template <class T>
Var SurtModel::encode_dp_transformer(Tape<T>& tape, Var h, std::size_t width) const {
  const std::size_t frames = tape.value(h).rows();
  if (width == 0) fail(ErrorKind::BadConfig, "chunk width must be positive");
  const std::size_t w = std::min(width, frames);
  auto intra = std::make_shared<const NeighborLists>(intra_neighbors(frames, w));
  auto inter = std::make_shared<const NeighborLists>(inter_neighbors(frames, w, true));
  Var x = tape.add_const(h, chunk_positional_encoding<T>(frames, w, cfg_.model_dim));
  for (std::size_t l = 0; l < cfg_.encoder_layers; ++l) {
    const std::string p = layer_name(l);
    x = attention_block(tape, x, p + ".intra", intra);
    x = feed_forward_block(tape, x, p + ".intra");
    x = attention_block(tape, x, p + ".inter", inter);
    x = feed_forward_block(tape, x, p + ".inter");
  }
  return norm(tape, x, "enc.final_ln");
}

template <class T>
Var SurtModel::predict(Tape<T>& tape, std::span<const int> labels) const {
  std::vector<std::ptrdiff_t> index{kBlank};
  for (int y : labels) {
    if (y < 1 || y > static_cast<int>(cfg_.vocab)) {
      fail(ErrorKind::BadLabel, "label " + std::to_string(y) + " outside 1.." + std::to_string(cfg_.vocab));
    }
    index.push_back(y);
  }
  std::vector<std::vector<std::size_t>> seq(1);
  for (std::size_t u = 0; u < index.size(); ++u) seq[0].push_back(u);
  Var x = tape.gather_rows(tape.param("pred.embed"), std::move(index));
  for (std::size_t i = 0; i < cfg_.pred_layers; ++i) {
    const std::string n = pred_layer_name(i);
    x = tape.lstm(x, tape.param(n + ".wx"), tape.param(n + ".wh"), tape.param(n + ".b"), seq);
  }
  return x;
}

namespace {

// z[t,u] = tanh(e[t] + p[u]) for all lattice cells, row-major (t, u).
template <class T>
Tensor<T> joint_hidden(const Tensor<T>& e, const Tensor<T>& p) {
  const std::size_t frames = e.rows(), states = p.rows(), j = e.cols();
  Tensor<T> z = Tensor<T>::matrix(frames * states, j);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t u = 0; u < states; ++u) {
      T* zr = z.row(t * states + u);
      const T* er = e.row(t);
      const T* pr = p.row(u);
      for (std::size_t k = 0; k < j; ++k) zr[k] = er[k] + pr[k];
    }
  }
  kernels::tanh_inplace(z.data(), z.size());
  return z;
}

template <class T>
Tensor<T> joint_output(const Tensor<T>& z, const Tensor<T>& wo, const Tensor<T>& bo) {
  const std::size_t cells = z.rows(), j = z.cols(), classes = wo.cols();
  Tensor<T> logits = Tensor<T>::matrix(cells, classes);
  for (std::size_t r = 0; r < cells; ++r) std::copy_n(bo.data(), classes, logits.row(r));
  kernels::gemm_nn(z.data(), wo.data(), logits.data(), cells, j, classes);
  return logits;
}

}  // namespace

template <class T>
Var SurtModel::transducer_loss(Tape<T>& tape, Var enc, std::span<const int> labels) const {
  Var e = linear(tape, enc, "joint.enc");
  Var p = tape.matmul(predict(tape, labels), tape.param("joint.pred.w"));
  Var wo = tape.param("joint.out.w");
  Var bo = tape.param("joint.out.b");
  const std::size_t frames = tape.value(e).rows(), states = tape.value(p).rows();
  const std::size_t j = cfg_.joint_dim, classes = cfg_.vocab + 1;

  Tensor<T> z = joint_hidden(tape.value(e), tape.value(p));
  Tensor<T> logits = joint_output(z, tape.value(wo), tape.value(bo));
  Tensor<T> lattice({frames, states, classes}, std::move(logits.values()));
  RnntLossGrad<T> lg = rnnt_loss_grad(lattice, labels);
  Tensor<T> loss = Tensor<T>::matrix(1, 1, static_cast<T>(lg.loss));

  return tape.record(std::move(loss), {e, p, wo, bo},
                     [&tape, e, p, wo, bo, frames, states, j, classes, z = std::move(z),
                      dl = std::move(lg.grad)](Var out) {
                       const T seed = tape.grad(out)[0];
                       const std::size_t cells = frames * states;
                       Tensor<T> dlog = Tensor<T>::matrix(cells, classes);
                       for (std::size_t i = 0; i < dlog.size(); ++i) dlog[i] = seed * dl[i];
                       if (tape.requires_grad(wo)) kernels::gemm_tn(z.data(), dlog.data(), tape.grad(wo).data(), cells, j, classes);
                       if (tape.requires_grad(bo)) {
                         auto& gb = tape.grad(bo);
                         for (std::size_t r = 0; r < cells; ++r) kernels::axpy(T(1), dlog.row(r), gb.data(), classes);
                       }
                       Tensor<T> dz = Tensor<T>::matrix(cells, j);
                       kernels::gemm_nt(dlog.data(), tape.value(wo).data(), dz.data(), cells, classes, j);
                       for (std::size_t i = 0; i < dz.size(); ++i) dz[i] *= T(1) - z[i] * z[i];
                       const bool ge = tape.requires_grad(e), gp = tape.requires_grad(p);
                       for (std::size_t t = 0; t < frames; ++t) {
                         for (std::size_t u = 0; u < states; ++u) {
                           const T* row = dz.row(t * states + u);
                           if (ge) kernels::axpy(T(1), row, tape.grad(e).row(t), j);
                           if (gp) kernels::axpy(T(1), row, tape.grad(p).row(u), j);
                         }
                       }
                     });
}

template <class T>
Tensor<T> SurtModel::joint_logits(Tape<T>& tape, Var enc, std::span<const int> labels) const {
  Var e = linear(tape, enc, "joint.enc");
  Var p = tape.matmul(predict(tape, labels), tape.param("joint.pred.w"));
  Tensor<T> z = joint_hidden(tape.value(e), tape.value(p));
  Tensor<T> logits = joint_output(z, tape.value(tape.param("joint.out.w")), tape.value(tape.param("joint.out.b")));
  return Tensor<T>({tape.value(e).rows(), tape.value(p).rows(), cfg_.vocab + 1}, std::move(logits.values()));
}

template <class T>
Tensor<T> SurtModel::project_encoder(Tape<T>& tape, Var enc) const {
  return tape.value(linear(tape, enc, "joint.enc"));
}

namespace {

struct PredState {
  std::vector<std::vector<float>> h, c;
  std::vector<float> proj;
};

struct LstmWeights {
  Tensor<float> wx, wh, b;
};

// Incremental prediction network plus joint output for decoding. Mirrors the
// tape LSTM (gate order i, f, g, o) one step at a time.
class ChannelScorer {
 public:
  ChannelScorer(const ModelConfig& cfg, const ParamStore<float>& params, Tensor<float> enc)
      : cfg_(cfg),
        embed_(params.value("pred.embed")),
        wp_(params.value("joint.pred.w")),
        wo_(params.value("joint.out.w")),
        bo_(params.value("joint.out.b")),
        enc_(std::move(enc)) {
    for (std::size_t i = 0; i < cfg.pred_layers; ++i) {
      const std::string n = pred_layer_name(i);
      layers_.push_back({params.value(n + ".wx"), params.value(n + ".wh"), params.value(n + ".b")});
    }
  }

  std::vector<double> operator()(std::size_t t, std::span<const int> prefix) {
    const PredState& s = state(Labels(prefix.begin(), prefix.end()));
    const std::size_t j = cfg_.joint_dim, classes = cfg_.vocab + 1;
    std::vector<float> z(j);
    for (std::size_t k = 0; k < j; ++k) z[k] = enc_.at(t, k) + s.proj[k];
    kernels::tanh_inplace(z.data(), j);
    std::vector<double> out(classes);
    std::vector<float> logits(bo_.values());
    kernels::gemm_nn(z.data(), wo_.data(), logits.data(), 1, j, classes);
    for (std::size_t c = 0; c < classes; ++c) out[c] = logits[c];
    return out;
  }

 private:
  const PredState& state(const Labels& prefix) {
    auto it = cache_.find(prefix);
    if (it != cache_.end()) return it->second;
    PredState prev;
    int token = kBlank;
    const std::size_t hid = cfg_.pred_hidden;
    if (prefix.empty()) {
      prev.h.assign(layers_.size(), std::vector<float>(hid, 0.0f));
      prev.c = prev.h;
    } else {
      prev = state(Labels(prefix.begin(), prefix.end() - 1));
      token = prefix.back();
    }
    PredState next;
    std::vector<float> input(embed_.row(static_cast<std::size_t>(token)), embed_.row(static_cast<std::size_t>(token)) + cfg_.pred_embed);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const LstmWeights& w = layers_[l];
      std::vector<float> g(w.b.values());
      kernels::gemm_nn(input.data(), w.wx.data(), g.data(), 1, input.size(), 4 * hid);
      kernels::gemm_nn(prev.h[l].data(), w.wh.data(), g.data(), 1, hid, 4 * hid);
      kernels::sigmoid_inplace(g.data(), 2 * hid);
      kernels::tanh_inplace(g.data() + 2 * hid, hid);
      kernels::sigmoid_inplace(g.data() + 3 * hid, hid);
      std::vector<float> h(hid), c(hid);
      for (std::size_t k = 0; k < hid; ++k) c[k] = g[hid + k] * prev.c[l][k] + g[k] * g[2 * hid + k];
      std::copy(c.begin(), c.end(), h.begin());
      kernels::tanh_inplace(h.data(), hid);
      for (std::size_t k = 0; k < hid; ++k) h[k] *= g[3 * hid + k];
      input = h;
      next.h.push_back(std::move(h));
      next.c.push_back(std::move(c));
    }
    next.proj.assign(cfg_.joint_dim, 0.0f);
    kernels::gemm_nn(next.h.back().data(), wp_.data(), next.proj.data(), 1, hid, cfg_.joint_dim);
    return cache_.emplace(prefix, std::move(next)).first->second;
  }

  ModelConfig cfg_;
  Tensor<float> embed_, wp_, wo_, bo_;
  std::vector<LstmWeights> layers_;
  Tensor<float> enc_;
  std::map<Labels, PredState> cache_;
};

}  // namespace

StepFn SurtModel::make_step_fn(const ParamStore<float>& params, Tensor<float> enc_projected) const {
  if (enc_projected.cols() != cfg_.joint_dim) fail(ErrorKind::ShapeMismatch, "projected encoder width");
  auto scorer = std::make_shared<ChannelScorer>(cfg_, params, std::move(enc_projected));
  return [scorer](std::size_t t, std::span<const int> prefix) { return (*scorer)(t, prefix); };
}

#define SURT_INSTANTIATE(T)                                                                        \
  template ParamStore<T> SurtModel::init_params<T>(std::uint64_t) const;                           \
  template UnmixVars SurtModel::unmix<T>(Tape<T>&, Var) const;                                     \
  template Var SurtModel::encode<T>(Tape<T>&, Var, std::size_t) const;                             \
  template Var SurtModel::predict<T>(Tape<T>&, std::span<const int>) const;                        \
  template Var SurtModel::transducer_loss<T>(Tape<T>&, Var, std::span<const int>) const;           \
  template Tensor<T> SurtModel::joint_logits<T>(Tape<T>&, Var, std::span<const int>) const;        \
  template Tensor<T> SurtModel::project_encoder<T>(Tape<T>&, Var) const;                           \
  template Tensor<T> chunk_positional_encoding<T>(std::size_t, std::size_t, std::size_t);

SURT_INSTANTIATE(float)
SURT_INSTANTIATE(double)

}  // namespace surt
