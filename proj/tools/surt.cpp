// surt: simulate, train, decode, score, and diagnostics.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "surt/dualpath.hpp"
#include "surt/scoring.hpp"
#include "surt/simulator.hpp"
#include "surt/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint64_t seed_or_env(const CLI::Option* opt, std::uint64_t value) {
  if (opt->count() > 0) return value;
  if (const char* env = std::getenv("SURT_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw CLI::ValidationError("SURT_SEED", std::string("not an integer: ") + env);
    }
  }
  return 1;
}

fs::path ensure_out(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) surt::fail(surt::ErrorKind::Io, "cannot create " + dir + ": " + ec.message());
  return fs::path(dir);
}

std::string fmt(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::vector<surt::DecodedSession> read_decoded(const std::string& path) {
  std::ifstream in(path);
  if (!in) surt::fail(surt::ErrorKind::Io, "cannot read " + path);
  std::vector<surt::DecodedSession> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      surt::DecodedSession d;
      d.id = j.at("id").get<std::string>();
      const auto& ch = j.at("channels");
      if (ch.size() != 2) surt::fail(surt::ErrorKind::Io, "decoded line needs two channels");
      d.channels = {ch[0].get<surt::Labels>(), ch[1].get<surt::Labels>()};
      out.push_back(std::move(d));
    } catch (const json::exception& e) {
      surt::fail(surt::ErrorKind::Io, path + ": " + e.what());
    }
  }
  return out;
}

void write_decoded(const fs::path& path, const std::vector<surt::DecodedSession>& decoded) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) surt::fail(surt::ErrorKind::Io, "cannot write " + path.string());
  for (const auto& d : decoded) out << json{{"id", d.id}, {"channels", {d.channels[0], d.channels[1]}}}.dump() << '\n';
}

void write_score_csv(const fs::path& path, const surt::EvalReport& r) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) surt::fail(surt::ErrorKind::Io, "cannot write " + path.string());
  out << "tier,sessions,wer,leakage_insertions,omitted_utterances\n";
  auto row = [&](const surt::TierScore& t) {
    out << t.tier << ',' << t.sessions << ',' << fmt(t.wer()) << ',' << t.leakage_insertions << ','
        << t.omitted_utterances << '\n';
  };
  for (const auto& t : r.tiers) row(t);
  row(r.overall);
}

std::vector<std::size_t> parse_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(item, &used);
      if (used != item.size() || v == 0) throw std::invalid_argument(item);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw CLI::ValidationError("list", "expected positive integers, got '" + item + "'");
    }
  }
  if (out.empty()) throw CLI::ValidationError("list", "empty list");
  return out;
}

// Sessions reordered to match decoded ids.
std::vector<surt::Session> align_sessions(std::vector<surt::Session> sessions,
                                          const std::vector<surt::DecodedSession>& decoded) {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < sessions.size(); ++i) index[sessions[i].id] = i;
  std::vector<surt::Session> out;
  for (const auto& d : decoded) {
    auto it = index.find(d.id);
    if (it == index.end()) surt::fail(surt::ErrorKind::Io, "decoded session " + d.id + " is not in the manifest");
    out.push_back(sessions[it->second]);
  }
  if (out.size() != sessions.size()) surt::fail(surt::ErrorKind::Io, "decoded output does not cover the manifest");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Streaming two-channel multi-talker transducer toolkit"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  std::uint64_t seed = 1;
  std::size_t threads = 1;
  std::string out_dir;

  // simulate
  auto* sim = app.add_subcommand("simulate", "Generate a toy session manifest and feature files");
  std::string tier = "t1", manifest_name = "manifest.jsonl", corpus_path;
  std::size_t sessions = 50, min_tokens = 3, max_tokens = 8;
  double overlap = -1.0, delay = 2.0;
  sim->add_option("--tier", tier, "t1, t2, t3, or delay")->check(CLI::IsMember({"t1", "t2", "t3", "delay"}));
  sim->add_option("--sessions", sessions, "Number of sessions")->check(CLI::PositiveNumber);
  auto* sim_seed = sim->add_option("--seed", seed, "Random seed (falls back to SURT_SEED, then 1)");
  sim->add_option("--out", out_dir, "Output directory")->required();
  sim->add_option("--name", manifest_name, "Manifest file name inside --out");
  sim->add_option("--overlap", overlap, "Target overlap ratio; negative samples per session")->check(CLI::Range(-1.0, 0.4));
  sim->add_option("--delay", delay, "Start delay in seconds for the delay recipe")->check(CLI::NonNegativeNumber);
  sim->add_option("--min-tokens", min_tokens, "Fewest tokens per utterance")->check(CLI::PositiveNumber);
  sim->add_option("--max-tokens", max_tokens, "Most tokens per utterance")->check(CLI::PositiveNumber);
  sim->add_option("--corpus", corpus_path, "Corpus JSON (vocab, speakers, band_dim, ...)")->check(CLI::ExistingFile);

  // train
  auto* train = app.add_subcommand("train", "Train a model; writes metrics.csv, eval.csv, checkpoints");
  std::string config_path, loss_name, train_manifest, dev_manifest;
  std::uint64_t steps = 0;
  double train_delay = -1.0;
  train->add_option("--config", config_path, "JSON config {model, data, schedule, curriculum, cwr, decode}")
      ->check(CLI::ExistingFile);
  train->add_option("--loss", loss_name, "heat or pit")->check(CLI::IsMember({"heat", "pit"}));
  train->add_option("--delay", train_delay, "Train on two-speaker sessions with this start delay (seconds)")
      ->check(CLI::NonNegativeNumber);
  train->add_option("--steps", steps, "Override total steps");
  train->add_option("--train-manifest", train_manifest, "Training manifest (all curriculum stages)")->check(CLI::ExistingFile);
  train->add_option("--dev-manifest", dev_manifest, "Held-out manifest")->check(CLI::ExistingFile);
  auto* train_seed = train->add_option("--seed", seed, "Random seed (falls back to SURT_SEED, then 1)");
  train->add_option("--threads", threads, "Worker threads; 1 is bitwise reproducible")->check(CLI::PositiveNumber);
  train->add_option("--out", out_dir, "Output directory")->required();

  // decode
  auto* dec = app.add_subcommand("decode", "Decode a manifest with a checkpoint");
  std::string ckpt_path, manifest_path;
  std::size_t beam = 1, chunk_width = 35;
  dec->add_option("--ckpt", ckpt_path, "Checkpoint")->required()->check(CLI::ExistingFile);
  dec->add_option("--manifest", manifest_path, "Session manifest")->required()->check(CLI::ExistingFile);
  dec->add_option("--beam", beam, "Beam width; 1 is greedy")->check(CLI::PositiveNumber);
  dec->add_option("--chunk-width", chunk_width, "Decoding chunk width in frames")->check(CLI::PositiveNumber);
  dec->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  dec->add_option("--out", out_dir, "Output directory (writes decode.jsonl)")->required();

  // score
  auto* score = app.add_subcommand("score", "Score decoded channels against a manifest");
  std::string hyps_path;
  score->add_option("--manifest", manifest_path, "Session manifest")->required()->check(CLI::ExistingFile);
  score->add_option("--hyps", hyps_path, "decode.jsonl")->required()->check(CLI::ExistingFile);
  score->add_option("--out", out_dir, "Output directory (writes score.csv)")->required();

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of the full pipeline (f64)");
  std::string encoder_name = "dp-lstm";
  std::size_t instances = 5;
  double tol = 1e-4;
  gc->add_option("--encoder", encoder_name, "lstm, dp-lstm, or dp-transformer")
      ->check(CLI::IsMember({"lstm", "dp-lstm", "dp-transformer"}));
  gc->add_option("--loss", loss_name, "heat or pit")->check(CLI::IsMember({"heat", "pit"}));
  gc->add_option("--instances", instances, "Random instances")->check(CLI::PositiveNumber);
  gc->add_option("--tol", tol, "Relative error tolerance")->check(CLI::PositiveNumber);
  auto* gc_seed = gc->add_option("--seed", seed, "Random seed (falls back to SURT_SEED, then 1)");

  // mask-bench
  auto* mb = app.add_subcommand("mask-bench", "Attention-pattern sizes, build times, and reachability");
  std::string lengths = "64,256,1024";
  bool streaming = false;
  mb->add_option("--lengths", lengths, "Comma-separated sequence lengths");
  mb->add_flag("--streaming", streaming, "Causal variants of strided, block, and axial");
  mb->add_option("--out", out_dir, "Output directory (writes mask_bench.csv)")->required();

  // latency-sweep
  auto* ls = app.add_subcommand("latency-sweep", "WER versus decoding chunk width");
  std::string widths = "15,25,35,45";
  ls->add_option("--ckpt", ckpt_path, "Checkpoint")->required()->check(CLI::ExistingFile);
  ls->add_option("--manifest", manifest_path, "Session manifest")->required()->check(CLI::ExistingFile);
  ls->add_option("--widths", widths, "Comma-separated chunk widths");
  ls->add_option("--beam", beam, "Beam width")->check(CLI::PositiveNumber);
  ls->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  ls->add_option("--out", out_dir, "Output directory (writes latency.csv)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return e.get_exit_code() == 0 ? 0 : (code == 0 ? 0 : 2);
  }

  try {
    if (*sim) {
      seed = seed_or_env(sim_seed, seed);
      if (min_tokens > max_tokens) throw CLI::ValidationError("--min-tokens", "exceeds --max-tokens");
      surt::CorpusConfig cc;
      if (!corpus_path.empty()) {
        std::ifstream in(corpus_path);
        cc = surt::CorpusConfig::from_json(json::parse(in));
      }
      const surt::ToyCorpus corpus(cc);
      std::mt19937_64 rng(seed);
      std::vector<surt::Session> data;
      if (tier == "delay") {
        data = surt::make_delay_dataset(sessions, delay, min_tokens, max_tokens, rng, corpus);
      } else {
        surt::TierSpec spec = surt::TierSpec::by_name(tier);
        spec.sessions = sessions;
        spec.min_tokens = min_tokens;
        spec.max_tokens = max_tokens;
        data = surt::make_tier_dataset(spec, overlap, rng, corpus);
      }
      ensure_out(out_dir);
      surt::write_manifest(out_dir, manifest_name, data);
      std::cout << "wrote " << data.size() << " sessions to " << (fs::path(out_dir) / manifest_name).string() << '\n';
    } else if (*train) {
      surt::TrainConfig cfg = config_path.empty() ? surt::TrainConfig{} : surt::load_train_config(config_path);
      if (train_seed->count() > 0 || std::getenv("SURT_SEED") != nullptr) {
        seed = seed_or_env(train_seed, seed);
        cfg.curriculum.seed = seed;
        cfg.data.seed = seed;
      }
      if (!loss_name.empty()) cfg.loss = surt::parse_loss_kind(loss_name);
      if (train_delay >= 0.0) {
        cfg.data.recipe = "delay";
        cfg.data.delay_seconds = train_delay;
      }
      if (steps > 0) {
        cfg.curriculum.total_steps = steps;
        cfg.curriculum.single_turn_steps = std::min(cfg.curriculum.single_turn_steps, steps);
        cfg.schedule.total_steps = std::max(cfg.schedule.total_steps, steps);
        if (cfg.schedule.warmup_steps >= cfg.schedule.total_steps) cfg.schedule.warmup_steps = cfg.schedule.total_steps / 2;
      }
      if (!train_manifest.empty()) {
        cfg.data.single_turn_manifest = train_manifest;
        cfg.data.multi_turn_manifest = train_manifest;
      }
      if (!dev_manifest.empty()) cfg.data.dev_manifest = dev_manifest;
      cfg.threads = threads;
      cfg.validate();
      const surt::TrainData data = surt::build_train_data(cfg);
      const auto result = surt::run_training(cfg, data, out_dir);
      std::cout << "trained " << result.losses.size() << " steps; final loss " << fmt(result.losses.back()) << '\n';
    } else if (*dec) {
      const surt::Checkpoint ckpt = surt::load_checkpoint(ckpt_path);
      const auto data = surt::read_manifest(manifest_path);
      const surt::SurtModel model(ckpt.model);
      const auto report = surt::evaluate(model, ckpt.params, data, beam, chunk_width, threads);
      write_decoded(ensure_out(out_dir) / "decode.jsonl", report.decoded);
      std::cout << "decoded " << report.decoded.size() << " sessions at width " << chunk_width << " ("
                << fmt(report.latency_ms, 0) << " ms)\n";
    } else if (*score) {
      const auto decoded = read_decoded(hyps_path);
      const auto data = align_sessions(surt::read_manifest(manifest_path), decoded);
      const auto report = surt::score_sessions(data, decoded);
      write_score_csv(ensure_out(out_dir) / "score.csv", report);
      std::cout << "wer " << fmt(report.overall.wer()) << " over " << report.overall.sessions << " sessions\n";
    } else if (*gc) {
      seed = seed_or_env(gc_seed, seed);
      const auto kind = surt::parse_encoder_kind(encoder_name);
      const auto loss = loss_name.empty() ? surt::LossKind::Heat : surt::parse_loss_kind(loss_name);
      surt::GradCheckOptions opts = surt::pipeline_check_options();
      opts.tol = tol;
      double worst = 0.0;
      bool pass = true;
      for (std::size_t i = 0; i < instances; ++i) {
        const auto r = surt::pipeline_grad_check(kind, loss, seed + i, opts);
        worst = std::max(worst, r.max_rel_error);
        pass = pass && r.pass;
        std::cout << "instance " << i << " max_rel_error " << r.max_rel_error << " (" << r.worst_param << ")\n";
      }
      std::cout << (pass ? "PASS" : "FAIL") << " worst " << worst << '\n';
      return pass ? 0 : 1;
    } else if (*mb) {
      const auto ls_list = parse_list(lengths);
      std::ofstream out(ensure_out(out_dir) / "mask_bench.csv", std::ios::trunc);
      out << "pattern,l,W,nonzeros,build_micros,reach2\n";
      using clock = std::chrono::steady_clock;
      for (std::size_t l : ls_list) {
        const auto w = static_cast<std::size_t>(std::ceil(std::sqrt(double(l))));
        auto micros = [](clock::time_point a, clock::time_point b) {
          return std::chrono::duration_cast<std::chrono::microseconds>(b - a).count();
        };
        auto t0 = clock::now();
        const auto intra = surt::build_mask(surt::MaskPattern::DualPathIntra, l, w);
        const auto inter = surt::build_mask(surt::MaskPattern::DualPathInterOffline, l, w);
        auto t1 = clock::now();
        const auto report = surt::analyze_pattern(intra, inter, w);
        out << "dual-path," << l << ',' << w << ',' << report.nonzeros << ',' << micros(t0, t1) << ','
            << (report.two_layer_full_reach ? 1 : 0) << '\n';
        for (auto p : {surt::MaskPattern::Strided, surt::MaskPattern::Block, surt::MaskPattern::Axial}) {
          t0 = clock::now();
          const auto m = surt::build_mask(p, l, w, streaming);
          t1 = clock::now();
          const bool reach = surt::all_true(surt::reach_product(m, m));
          out << surt::to_string(p) << ',' << l << ',' << w << ',' << m.nonzeros() << ',' << micros(t0, t1) << ','
              << (reach ? 1 : 0) << '\n';
        }
      }
      std::cout << "wrote " << (fs::path(out_dir) / "mask_bench.csv").string() << '\n';
    } else if (*ls) {
      const auto width_list = parse_list(widths);
      const surt::Checkpoint ckpt = surt::load_checkpoint(ckpt_path);
      const auto data = surt::read_manifest(manifest_path);
      const surt::SurtModel model(ckpt.model);
      std::ofstream out(ensure_out(out_dir) / "latency.csv", std::ios::trunc);
      out << "chunk_width,latency_ms,sessions,wer\n";
      for (std::size_t w : width_list) {
        const auto r = surt::evaluate(model, ckpt.params, data, beam, w, threads);
        out << w << ',' << fmt(r.latency_ms, 0) << ',' << r.overall.sessions << ',' << fmt(r.overall.wer()) << '\n';
        std::cout << "width " << w << " (" << fmt(r.latency_ms, 0) << " ms): wer " << fmt(r.overall.wer()) << '\n';
      }
    }
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << '\n';
    return 2;
  } catch (const surt::Error& e) {
    std::cerr << "error (" << surt::to_string(e.kind()) << "): " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
