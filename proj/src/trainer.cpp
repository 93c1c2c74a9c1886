#include "surt/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <thread>

#include "surt/kernels.hpp"
#include "surt/scoring.hpp"

namespace surt {

namespace fs = std::filesystem;
using nlohmann::json;

void CurriculumConfig::validate() const {
  if (total_steps == 0) fail(ErrorKind::BadConfig, "total_steps must be positive");
  if (single_turn_steps > total_steps) fail(ErrorKind::BadConfig, "single_turn_steps exceeds total_steps");
  if (batch_size == 0) fail(ErrorKind::BadConfig, "batch_size must be positive");
}

const char* to_string(DatasetTag tag) { return tag == DatasetTag::SingleTurn ? "single-turn" : "multi-turn"; }

DatasetTag curriculum_schedule(std::uint64_t step, const CurriculumConfig& cfg) {
  if (step >= cfg.total_steps) {
    fail(ErrorKind::OutOfSchedule, "step " + std::to_string(step) + " outside [0, " + std::to_string(cfg.total_steps) + ")");
  }
  return step < cfg.single_turn_steps ? DatasetTag::SingleTurn : DatasetTag::MultiTurn;
}

const char* to_string(LossKind kind) { return kind == LossKind::Heat ? "heat" : "pit"; }

LossKind parse_loss_kind(const std::string& name) {
  if (name == "heat") return LossKind::Heat;
  if (name == "pit") return LossKind::Pit;
  fail(ErrorKind::BadConfig, "unknown loss '" + name + "' (heat, pit)");
}

void TrainConfig::validate() const {
  model.validate();
  corpus.validate();
  schedule.validate();
  curriculum.validate();
  if (cwr_enabled) cwr.validate();
  if (model.feat_dim != corpus.feat_dim()) {
    fail(ErrorKind::BadConfig, "model feat_dim " + std::to_string(model.feat_dim) + " does not match corpus width " +
                                   std::to_string(corpus.feat_dim()));
  }
  if (model.vocab != corpus.vocab) fail(ErrorKind::BadConfig, "model and corpus vocabularies differ");
  if (schedule.total_steps < curriculum.total_steps) fail(ErrorKind::BadConfig, "schedule shorter than curriculum");
  if (!(clip_norm > 0.0)) fail(ErrorKind::BadConfig, "clip_norm must be positive");
  if (decode.beam == 0) fail(ErrorKind::BadBeam, "beam must be positive");
  if (decode.chunk_width == 0) fail(ErrorKind::BadConfig, "decode chunk width must be positive");
  if (data.recipe != "tiers" && data.recipe != "delay") fail(ErrorKind::BadConfig, "data recipe must be tiers or delay");
}

json TrainConfig::to_json() const {
  return {
      {"model", model.to_json()},
      {"corpus", corpus.to_json()},
      {"data",
       {{"single_turn_manifest", data.single_turn_manifest},
        {"multi_turn_manifest", data.multi_turn_manifest},
        {"dev_manifest", data.dev_manifest},
        {"recipe", data.recipe},
        {"delay_seconds", data.delay_seconds},
        {"train_sessions", data.train_sessions},
        {"dev_sessions", data.dev_sessions},
        {"min_tokens", data.min_tokens},
        {"max_tokens", data.max_tokens},
        {"dev_tiers", data.dev_tiers},
        {"seed", data.seed}}},
      {"schedule",
       {{"warmup_steps", schedule.warmup_steps}, {"peak_lr", schedule.peak_lr}, {"total_steps", schedule.total_steps}}},
      {"curriculum",
       {{"single_turn_steps", curriculum.single_turn_steps},
        {"total_steps", curriculum.total_steps},
        {"batch_size", curriculum.batch_size},
        {"eval_every", curriculum.eval_every},
        {"seed", curriculum.seed}}},
      {"cwr", {{"enabled", cwr_enabled}, {"w_min", cwr.w_min}, {"w_max", cwr.w_max}, {"decode_w", cwr.decode_w}}},
      {"decode", {{"beam", decode.beam}, {"chunk_width", decode.chunk_width}}},
      {"optimizer",
       {{"beta1", optimizer.beta1},
        {"beta2", optimizer.beta2},
        {"eps", optimizer.eps},
        {"weight_decay", optimizer.weight_decay},
        {"clip_norm", clip_norm}}},
      {"loss", to_string(loss)},
      {"threads", threads},
      {"eval_sessions", eval_sessions},
  };
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  try {
    if (j.contains("model")) c.model = ModelConfig::from_json(j.at("model"));
    if (j.contains("corpus")) c.corpus = CorpusConfig::from_json(j.at("corpus"));
    if (j.contains("data")) {
      const auto& d = j.at("data");
      c.data.single_turn_manifest = d.value("single_turn_manifest", c.data.single_turn_manifest);
      c.data.multi_turn_manifest = d.value("multi_turn_manifest", c.data.multi_turn_manifest);
      c.data.dev_manifest = d.value("dev_manifest", c.data.dev_manifest);
      c.data.recipe = d.value("recipe", c.data.recipe);
      c.data.delay_seconds = d.value("delay_seconds", c.data.delay_seconds);
      c.data.train_sessions = d.value("train_sessions", c.data.train_sessions);
      c.data.dev_sessions = d.value("dev_sessions", c.data.dev_sessions);
      c.data.min_tokens = d.value("min_tokens", c.data.min_tokens);
      c.data.max_tokens = d.value("max_tokens", c.data.max_tokens);
      c.data.dev_tiers = d.value("dev_tiers", c.data.dev_tiers);
      c.data.seed = d.value("seed", c.data.seed);
    }
    if (j.contains("schedule")) {
      const auto& s = j.at("schedule");
      c.schedule.warmup_steps = s.value("warmup_steps", c.schedule.warmup_steps);
      c.schedule.peak_lr = s.value("peak_lr", c.schedule.peak_lr);
      c.schedule.total_steps = s.value("total_steps", c.schedule.total_steps);
    }
    if (j.contains("curriculum")) {
      const auto& s = j.at("curriculum");
      c.curriculum.single_turn_steps = s.value("single_turn_steps", c.curriculum.single_turn_steps);
      c.curriculum.total_steps = s.value("total_steps", c.curriculum.total_steps);
      c.curriculum.batch_size = s.value("batch_size", c.curriculum.batch_size);
      c.curriculum.eval_every = s.value("eval_every", c.curriculum.eval_every);
      c.curriculum.seed = s.value("seed", c.curriculum.seed);
    }
    if (j.contains("cwr")) {
      const auto& s = j.at("cwr");
      c.cwr_enabled = s.value("enabled", c.cwr_enabled);
      c.cwr.w_min = s.value("w_min", c.cwr.w_min);
      c.cwr.w_max = s.value("w_max", c.cwr.w_max);
      c.cwr.decode_w = s.value("decode_w", c.cwr.decode_w);
    }
    if (j.contains("decode")) {
      const auto& s = j.at("decode");
      c.decode.beam = s.value("beam", c.decode.beam);
      c.decode.chunk_width = s.value("chunk_width", c.decode.chunk_width);
    }
    if (j.contains("optimizer")) {
      const auto& s = j.at("optimizer");
      c.optimizer.beta1 = s.value("beta1", c.optimizer.beta1);
      c.optimizer.beta2 = s.value("beta2", c.optimizer.beta2);
      c.optimizer.eps = s.value("eps", c.optimizer.eps);
      c.optimizer.weight_decay = s.value("weight_decay", c.optimizer.weight_decay);
      c.clip_norm = s.value("clip_norm", c.clip_norm);
    }
    if (j.contains("loss")) c.loss = parse_loss_kind(j.at("loss").get<std::string>());
    c.threads = j.value("threads", c.threads);
    c.eval_sessions = j.value("eval_sessions", c.eval_sessions);
  } catch (const json::exception& e) {
    fail(ErrorKind::BadConfig, std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot read config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::BadConfig, path + ": " + e.what());
  }
  return TrainConfig::from_json(j);
}

TrainData build_train_data(const TrainConfig& cfg) {
  const ToyCorpus corpus(cfg.corpus);
  const auto& d = cfg.data;
  std::mt19937_64 rng(d.seed);
  TrainData out;
  auto tier = [&](const std::string& name, std::size_t sessions) {
    TierSpec spec = TierSpec::by_name(name);
    spec.sessions = sessions;
    spec.min_tokens = d.min_tokens;
    spec.max_tokens = d.max_tokens;
    return make_tier_dataset(spec, -1.0, rng, corpus);
  };
  auto append = [](std::vector<Session>& dst, std::vector<Session> src) {
    for (auto& s : src) dst.push_back(std::move(s));
  };

  if (d.recipe == "delay") {
    out.single_turn = make_delay_dataset(d.train_sessions, d.delay_seconds, d.min_tokens, d.max_tokens, rng, corpus,
                                         "train");
    out.multi_turn = out.single_turn;
    out.dev = make_delay_dataset(d.dev_sessions, d.delay_seconds, d.min_tokens, d.max_tokens, rng, corpus, "dev");
  } else {
    out.single_turn = tier("t1", d.train_sessions);
    out.multi_turn = out.single_turn;
    append(out.multi_turn, tier("t2", d.train_sessions));
    append(out.multi_turn, tier("t3", d.train_sessions));
    for (const auto& name : d.dev_tiers) {
      auto dev = tier(name, d.dev_sessions);
      for (auto& s : dev) s.id = "dev-" + s.id;
      append(out.dev, std::move(dev));
    }
  }
  if (!d.single_turn_manifest.empty()) out.single_turn = read_manifest(d.single_turn_manifest);
  if (!d.multi_turn_manifest.empty()) out.multi_turn = read_manifest(d.multi_turn_manifest);
  if (!d.dev_manifest.empty()) out.dev = read_manifest(d.dev_manifest);
  if (out.single_turn.empty() && cfg.curriculum.single_turn_steps > 0) fail(ErrorKind::BadConfig, "no single-turn sessions");
  if (out.multi_turn.empty() && cfg.curriculum.single_turn_steps < cfg.curriculum.total_steps) {
    fail(ErrorKind::BadConfig, "no multi-turn sessions");
  }
  return out;
}

namespace {

constexpr const char* kCheckpointMagic = "SURTCKPT";

template <class F>
void parallel_for(std::size_t n, std::size_t threads, F&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += threads) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  json params = json::array();
  for (const auto& s : ckpt.params.slots()) params.push_back({{"name", s.name}, {"shape", s.value.shape()}});
  json header = {{"format", kCheckpointMagic}, {"version", 1}, {"step", ckpt.step}, {"model", ckpt.model.to_json()},
                 {"params", params}};
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write checkpoint " + path);
  out << header.dump() << '\n';
  for (const auto& s : ckpt.params.slots()) write_tensor(out, s.value);
  if (!out) fail(ErrorKind::Io, "failed writing checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot read checkpoint " + path);
  std::string line;
  std::getline(in, line);
  Checkpoint c;
  try {
    const json header = json::parse(line);
    if (header.at("format") != kCheckpointMagic) fail(ErrorKind::Io, path + " is not a checkpoint");
    c.model = ModelConfig::from_json(header.at("model"));
    c.step = header.at("step").get<std::uint64_t>();
    for (const auto& p : header.at("params")) {
      Tensor<float> t = read_tensor(in);
      if (t.shape() != p.at("shape").get<Shape>()) fail(ErrorKind::Io, "checkpoint tensor shape mismatch");
      c.params.add(p.at("name").get<std::string>(), std::move(t));
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::Io, path + ": " + e.what());
  }
  c.params.set_step(c.step);
  // The parameter set must match what the model expects.
  const auto expected = SurtModel(c.model).init_params<float>(0);
  for (const auto& s : expected.slots()) {
    if (!c.params.contains(s.name) || c.params.value(s.name).shape() != s.value.shape()) {
      fail(ErrorKind::Io, "checkpoint is missing or misshapes parameter " + s.name);
    }
  }
  return c;
}

template <class T>
SessionLoss session_loss(const SurtModel& model, Tape<T>& tape, const Tensor<float>& features,
                         const std::array<Labels, 2>& refs, std::size_t chunk_width, LossKind loss) {
  Var x = tape.constant(features.template cast<T>());
  const UnmixVars u = model.unmix(tape, x);
  const std::array<Var, 2> enc{model.encode(tape, u.h1, chunk_width), model.encode(tape, u.h2, chunk_width)};
  PairLossFn pair = [&](std::size_t ref, std::size_t channel) {
    return model.transducer_loss(tape, enc[channel], refs[ref]);
  };
  return loss == LossKind::Heat ? heat_loss(tape, pair) : pit_loss_2ch(tape, pair);
}

template SessionLoss session_loss<float>(const SurtModel&, Tape<float>&, const Tensor<float>&,
                                         const std::array<Labels, 2>&, std::size_t, LossKind);
template SessionLoss session_loss<double>(const SurtModel&, Tape<double>&, const Tensor<float>&,
                                          const std::array<Labels, 2>&, std::size_t, LossKind);

BatchLoss batch_loss_and_grad(const SurtModel& model, const ParamStore<float>& params,
                              std::span<const Session* const> batch, std::size_t chunk_width, LossKind loss,
                              std::size_t threads, std::vector<Tensor<float>>& grads) {
  const std::size_t n = batch.size();
  std::vector<std::vector<Tensor<float>>> per(n);
  std::vector<double> values(n, 0.0);
  std::vector<char> swapped(n, 0);
  parallel_for(n, threads, [&](std::size_t i) {
    Tape<float> tape(&params);
    const SessionLoss l = session_loss(model, tape, batch[i]->features, batch[i]->channel_labels(), chunk_width, loss);
    values[i] = tape.value(l.value)[0];
    swapped[i] = l.swapped ? 1 : 0;
    tape.backward(l.value);
    tape.accumulate_param_grads(per[i]);
  });
  // Ordered reduction keeps the result independent of the thread count.
  grads.assign(params.size(), Tensor<float>());
  const float inv = 1.0f / static_cast<float>(n);
  BatchLoss out;
  for (std::size_t i = 0; i < n; ++i) {
    out.loss += values[i] / double(n);
    out.swapped += static_cast<std::size_t>(swapped[i]);
    for (std::size_t p = 0; p < params.size(); ++p) {
      if (grads[p].empty()) grads[p] = Tensor<float>(params.slots()[p].value.shape());
      if (p < per[i].size() && !per[i][p].empty()) {
        kernels::axpy(inv, per[i][p].data(), grads[p].data(), grads[p].size());
      }
    }
  }
  return out;
}

std::array<Labels, 2> decode_session(const SurtModel& model, const ParamStore<float>& params, const Session& session,
                                     std::size_t beam, std::size_t chunk_width) {
  if (beam == 0) fail(ErrorKind::BadBeam, "beam must be positive");
  Tape<float> tape(&params);
  Var x = tape.constant(session.features);
  const UnmixVars u = model.unmix(tape, x);
  std::array<Labels, 2> out;
  const std::array<Var, 2> h{u.h1, u.h2};
  for (std::size_t c = 0; c < 2; ++c) {
    Var enc = model.encode(tape, h[c], chunk_width);
    Tensor<float> proj = model.project_encoder(tape, enc);
    const std::size_t frames = proj.rows();
    StepFn step = model.make_step_fn(params, std::move(proj));
    out[c] = beam == 1 ? greedy_decode(step, frames).tokens : beam_decode(step, frames, beam).best.tokens;
  }
  return out;
}

void TierScore::add(const TierScore& o) {
  sessions += o.sessions;
  skipped += o.skipped;
  ref_words += o.ref_words;
  errors += o.errors;
  leakage_insertions += o.leakage_insertions;
  omitted_utterances += o.omitted_utterances;
}

EvalReport score_sessions(std::span<const Session> sessions, std::span<const DecodedSession> decoded) {
  if (sessions.size() != decoded.size()) fail(ErrorKind::ShapeMismatch, "decoded output does not cover the sessions");
  EvalReport r;
  std::map<std::string, TierScore> tiers;
  std::size_t correct = 0, strict = 0, identical = 0;
  for (std::size_t i = 0; i < sessions.size(); ++i) {
    const Session& s = sessions[i];
    const auto& hyps = decoded[i].channels;
    TierScore& t = tiers[s.tier];
    t.tier = s.tier;
    const auto refs = s.channel_labels();
    correct += assignment_correct(hyps, refs) ? 1 : 0;
    strict += assignment_correct_strict(hyps, refs) ? 1 : 0;
    identical += hyps[0] == hyps[1] ? 1 : 0;
    if (s.num_utterances > kMaxScoredUtterances) {
      ++t.skipped;
      std::cerr << "warning: skipping " << s.id << " (" << s.num_utterances << " utterances exceed the scoring cap)\n";
      continue;
    }
    const auto ref_utts = session_refs(s);
    const WerReport w = multichannel_wer(ref_utts, hyps);
    const ErrorClasses e = classify_errors(w, ref_utts);
    ++t.sessions;
    t.ref_words += w.ref_words;
    t.errors += w.errors();
    t.leakage_insertions += e.leakage_insertions;
    t.omitted_utterances += e.omitted_utterances;
  }
  r.overall.tier = "all";
  for (auto& [name, t] : tiers) {
    r.overall.add(t);
    r.tiers.push_back(t);
  }
  if (!sessions.empty()) {
    const double n = double(sessions.size());
    r.assign_acc = double(correct) / n;
    r.assign_acc_strict = double(strict) / n;
    r.identical_channels = double(identical) / n;
  }
  r.decoded.assign(decoded.begin(), decoded.end());
  return r;
}

EvalReport evaluate(const SurtModel& model, const ParamStore<float>& params, std::span<const Session> sessions,
                    std::size_t beam, std::size_t chunk_width, std::size_t threads) {
  std::vector<DecodedSession> decoded(sessions.size());
  parallel_for(sessions.size(), threads, [&](std::size_t i) {
    decoded[i].id = sessions[i].id;
    decoded[i].channels = decode_session(model, params, sessions[i], beam, chunk_width);
  });
  EvalReport r = score_sessions(sessions, decoded);
  r.beam = beam;
  r.chunk_width = chunk_width;
  r.latency_ms = latency_millis(chunk_width);
  return r;
}

TrainResult run_training(const TrainConfig& cfg, const TrainData& data, const std::string& out_dir) {
  cfg.validate();
  const SurtModel model(cfg.model);
  ParamStore<float> params = model.init_params<float>(cfg.curriculum.seed);
  std::mt19937_64 rng(cfg.curriculum.seed ^ 0x5eed5eedULL);

  std::ofstream metrics, evals;
  if (!out_dir.empty()) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) fail(ErrorKind::Io, "cannot create " + out_dir + ": " + ec.message());
    metrics.open(fs::path(out_dir) / "metrics.csv", std::ios::trunc);
    evals.open(fs::path(out_dir) / "eval.csv", std::ios::trunc);
    if (!metrics || !evals) fail(ErrorKind::Io, "cannot write logs in " + out_dir);
    metrics << "step,loss,assign_acc,lr,chunk_width\n";
    evals << "step,assign_acc,assign_acc_strict,wer,identical_channels\n";
    std::ofstream(fs::path(out_dir) / "config.json", std::ios::trunc) << cfg.to_json().dump(2) << '\n';
  }

  std::span<const Session> dev(data.dev);
  if (cfg.eval_sessions > 0 && dev.size() > cfg.eval_sessions) dev = dev.first(cfg.eval_sessions);

  TrainResult result;
  double best_wer = std::numeric_limits<double>::infinity();
  double last_acc = 0.0;
  auto run_eval = [&](std::uint64_t step) {
    if (dev.empty()) return;
    const EvalReport r = evaluate(model, params, dev, 1, cfg.decode.chunk_width, cfg.threads);
    EvalPoint p{step, r.assign_acc, r.assign_acc_strict, r.overall.wer(), r.identical_channels};
    result.evals.push_back(p);
    last_acc = r.assign_acc;
    if (evals.is_open()) {
      evals << step << ',' << fixed(p.assign_acc) << ',' << fixed(p.assign_acc_strict) << ',' << fixed(p.wer) << ','
            << fixed(p.identical_channels) << '\n';
    }
    if (p.wer < best_wer) {
      best_wer = p.wer;
      result.best = {cfg.model, params, step};
      if (!out_dir.empty()) save_checkpoint((fs::path(out_dir) / "best.ckpt").string(), result.best);
    }
  };

  run_eval(0);
  std::vector<Tensor<float>> grads;
  std::vector<const Session*> batch(cfg.curriculum.batch_size);
  for (std::uint64_t step = 0; step < cfg.curriculum.total_steps; ++step) {
    const DatasetTag tag = curriculum_schedule(step, cfg.curriculum);
    const auto& pool = tag == DatasetTag::SingleTurn ? data.single_turn : data.multi_turn;
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    for (auto& b : batch) b = &pool[pick(rng)];
    const std::size_t width = cfg.cwr_enabled ? sample_chunk_width(cfg.cwr, rng) : cfg.model.chunk_width;

    const BatchLoss bl = batch_loss_and_grad(model, params, batch, width, cfg.loss, cfg.threads, grads);
    bool finite = std::isfinite(bl.loss);
    for (const auto& g : grads) finite = finite && g.all_finite();
    if (!finite) {
      if (!out_dir.empty()) save_checkpoint((fs::path(out_dir) / "last_good.ckpt").string(), {cfg.model, params, step});
      fail(ErrorKind::NonFiniteLoss, "non-finite loss at step " + std::to_string(step));
    }
    for (std::size_t p = 0; p < params.size(); ++p) params.slots()[p].grad = std::move(grads[p]);
    clip_gradients(params, cfg.clip_norm);
    const double lr = lr_at_step(step + 1, cfg.schedule);
    optimizer_step(params, lr, cfg.optimizer);
    result.losses.push_back(bl.loss);

    const std::uint64_t done = step + 1;
    if (cfg.curriculum.eval_every > 0 && (done % cfg.curriculum.eval_every == 0 || done == cfg.curriculum.total_steps)) {
      run_eval(done);
      if (!out_dir.empty()) save_checkpoint((fs::path(out_dir) / "last.ckpt").string(), {cfg.model, params, done});
    }
    if (metrics.is_open()) {
      metrics << done << ',' << fixed(bl.loss) << ',' << fixed(last_acc) << ',' << fixed(lr, 8) << ',' << width << '\n';
    }
  }
  result.last = {cfg.model, params, cfg.curriculum.total_steps};
  if (result.best.params.size() == 0) result.best = result.last;
  if (!out_dir.empty()) save_checkpoint((fs::path(out_dir) / "last.ckpt").string(), result.last);
  return result;
}

ModelConfig tiny_model_config(EncoderKind encoder) {
  ModelConfig c;
  c.feat_dim = 6;
  c.model_dim = 8;
  c.conv_kernel = 3;
  c.encoder = encoder;
  c.encoder_layers = 1;
  c.lstm_hidden = 5;
  c.heads = 2;
  c.ffn_dim = 8;
  c.pred_embed = 4;
  c.pred_hidden = 5;
  c.joint_dim = 6;
  c.vocab = 3;
  c.chunk_width = 4;
  return c;
}

GradCheckReport pipeline_grad_check(EncoderKind encoder, LossKind loss, std::uint64_t seed,
                                    const GradCheckOptions& opts) {
  const SurtModel model(tiny_model_config(encoder));
  const auto& cfg = model.config();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> frames_dist(7, 11);
  std::uniform_int_distribution<std::size_t> len_dist(0, 3);
  std::uniform_int_distribution<int> token(1, static_cast<int>(cfg.vocab));

  Tensor<float> features = Tensor<float>::matrix(frames_dist(rng), cfg.feat_dim);
  for (auto& v : features.values()) v = static_cast<float>(normal(rng));
  std::array<Labels, 2> refs;
  for (auto& r : refs) {
    r.resize(len_dist(rng));
    for (auto& y : r) y = token(rng);
  }
  ParamStore<double> store = model.init_params<double>(seed + 1);
  // Jitter so zero-initialized tensors (mask head, biases) are checked at a generic point.
  for (auto& slot : store.slots()) {
    for (auto& v : slot.value.values()) v += 0.1 * normal(rng);
  }

  auto objective = [&](ParamStore<double>& s) {
    Tape<double> tape(&s);
    const SessionLoss l = session_loss(model, tape, features, refs, cfg.chunk_width, loss);
    return tape.value(l.value)[0];
  };
  auto analytic = [&](ParamStore<double>& s) {
    Tape<double> tape(&s);
    const SessionLoss l = session_loss(model, tape, features, refs, cfg.chunk_width, loss);
    tape.backward(l.value);
    std::vector<Tensor<double>> grads;
    tape.accumulate_param_grads(grads);
    for (std::size_t p = 0; p < s.size(); ++p) {
      s.slots()[p].grad = p < grads.size() && !grads[p].empty() ? std::move(grads[p])
                                                               : Tensor<double>(s.slots()[p].value.shape());
    }
  };
  return grad_check(objective, analytic, store, opts);
}

}  // namespace surt
