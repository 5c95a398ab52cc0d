// droneguard: acoustic drone-detection pipeline CLI.
//
// Subcommands: synth (synthetic corpus), augment, train gmm|cnn|rnn,
// detect, eval, bench. Exit codes: 0 success, 1 validation error,
// 2 runtime failure. Ctrl-C during training checkpoints the best-so-far
// model before exiting.

#include <algorithm>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "droneguard/audio.hpp"
#include "droneguard/augment.hpp"
#include "droneguard/config.hpp"
#include "droneguard/dataset.hpp"
#include "droneguard/eval.hpp"
#include "droneguard/model_io.hpp"
#include "droneguard/pipeline.hpp"
#include "droneguard/synth.hpp"
#include "droneguard/timeline.hpp"

namespace fs = std::filesystem;
using namespace droneguard;

namespace {

void handle_sigint(int) { nn::g_training_interrupted.store(true); }

std::vector<std::string> list_wavs(const std::string& dir) {
  std::vector<std::string> out;
  if (!fs::is_directory(dir)) throw ConfigError(dir + " is not a directory");
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".wav")
      out.push_back(entry.path().string());
  std::sort(out.begin(), out.end());
  return out;
}

RunConfig make_config(const std::string& config_path, const std::vector<std::string>& overrides,
                      bool seed_given, std::uint64_t seed) {
  RunConfig cfg;
  if (!config_path.empty()) cfg.load_file(config_path);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--set expects KEY=VALUE, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (seed_given) cfg.seed = seed;
  cfg.validate();
  return cfg;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << text;
  if (!os) throw IoError("write failed: " + path);
}

int run(int argc, char** argv) {
  CLI::App app{"droneguard: acoustic drone detection (augment / train / detect / eval / bench)"};
  app.require_subcommand(1);
  app.fallthrough();  // --config/--set/--seed may follow the subcommand

  std::string config_path;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  bool seed_given = false;
  app.add_option("--config", config_path, "key=value config file")->expected(1);
  app.add_option("--set", overrides, "override a config key (KEY=VALUE, repeatable)");
  auto* seed_opt = app.add_option("--seed", seed, "override the config seed");

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic background/drone corpus");
  std::string synth_out = "corpus";
  int synth_bgs = 5, synth_events = 2;
  double synth_bg_s = 8.0, synth_event_s = 2.5;
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--backgrounds", synth_bgs, "background clip count");
  synth->add_option("--events", synth_events, "drone clip count");
  synth->add_option("--bg-duration", synth_bg_s, "background duration, seconds");
  synth->add_option("--event-duration", synth_event_s, "drone duration, seconds");

  // augment
  auto* augment = app.add_subcommand("augment", "overlay drone clips on backgrounds");
  std::string aug_bg_dir, aug_event_dir, aug_out;
  augment->add_option("--backgrounds", aug_bg_dir, "directory of background WAVs")->required();
  augment->add_option("--events", aug_event_dir, "directory of drone WAVs")->required();
  augment->add_option("--out", aug_out, "output directory")->required();

  // train
  auto* train = app.add_subcommand("train", "train a detector from a manifest");
  std::string train_kind, train_manifest, train_out;
  double val_split = -1.0;
  train->add_option("model", train_kind, "gmm, cnn or rnn")
      ->required()
      ->check(CLI::IsMember({"gmm", "cnn", "rnn"}));
  train->add_option("--manifest", train_manifest, "manifest.jsonl path")->required();
  train->add_option("--val-split", val_split, "validation fraction, by clip");
  train->add_option("--out", train_out, "model output path")->required();

  // detect
  auto* detect = app.add_subcommand("detect", "emit a detection timeline CSV for one clip");
  std::string det_model, det_input, det_out;
  detect->add_option("--model", det_model, "model file")->required();
  detect->add_option("--input", det_input, "input WAV")->required();
  detect->add_option("--out", det_out, "output CSV path")->required();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "score a model against a manifest");
  std::string eval_model, eval_manifest, eval_out;
  int eval_reps = -1;
  eval_cmd->add_option("--model", eval_model, "model file")->required();
  eval_cmd->add_option("--manifest", eval_manifest, "manifest.jsonl path")->required();
  eval_cmd->add_option("--reps", eval_reps, "evaluation repetitions");
  eval_cmd->add_option("--out", eval_out, "output JSON path")->required();

  // bench
  auto* bench = app.add_subcommand("bench", "stage timing on a 60 s clip");
  std::string bench_clip, bench_models, bench_out;
  bench->add_option("--clip", bench_clip, "60 second WAV")->required();
  bench->add_option("--models", bench_models, "directory of model files")->required();
  bench->add_option("--out", bench_out, "output JSON path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  apply_thread_cap();
  RunConfig cfg = make_config(config_path, overrides, seed_opt->count() > 0, seed);
  const std::string config_hash = cfg.hash_hex();

  if (synth->parsed()) {
    const fs::path bg_dir = fs::path(synth_out) / "backgrounds";
    const fs::path ev_dir = fs::path(synth_out) / "events";
    fs::create_directories(bg_dir);
    fs::create_directories(ev_dir);
    for (int i = 0; i < synth_bgs; ++i) {
      AudioClip bg = synth_background(synth_bg_s, cfg.sample_rate_hz, cfg.seed + i);
      write_wav(bg, (bg_dir / (bg.source_id + ".wav")).string());
    }
    for (int i = 0; i < synth_events; ++i) {
      AudioClip ev = synth_drone(synth_event_s, cfg.sample_rate_hz, cfg.seed + 1000 + i);
      write_wav(ev, (ev_dir / (ev.source_id + ".wav")).string());
    }
    std::cout << "wrote " << synth_bgs << " backgrounds and " << synth_events << " events under "
              << synth_out << "\n";
    return 0;
  }

  if (augment->parsed()) {
    const auto bgs = list_wavs(aug_bg_dir);
    const auto events = list_wavs(aug_event_dir);
    if (bgs.empty() || events.empty())
      throw ConfigError("augment: need at least one background and one event WAV");
    std::vector<std::pair<std::string, std::string>> pairs;
    for (const auto& b : bgs)
      for (const auto& e : events) pairs.emplace_back(b, e);
    const std::string manifest =
        build_manifest(pairs, cfg.augment_spec(), aug_out, config_hash, cfg.sample_rate_hz);
    std::size_t ok = 0, failed = 0;
    for (const auto& entry : load_manifest(manifest)) (entry.ok() ? ok : failed) += 1;
    std::cout << "wrote " << manifest << ": " << ok << " clips";
    if (failed > 0) std::cout << ", " << failed << " failed pairs";
    std::cout << "\n";
    return 0;
  }

  if (train->parsed()) {
    if (val_split > 0.0) cfg.set("val_split", std::to_string(val_split));
    cfg.validate();
    const auto entries = load_manifest(train_manifest);
    const auto [train_entries, val_entries] = split_manifest(entries, cfg.val_split, cfg.seed);
    const FeatureExtractor fx = cfg.feature_extractor();
    std::signal(SIGINT, handle_sigint);
    const std::string echo = cfg.canonical();

    if (train_kind == "gmm") {
      const GmmDetector det = train_gmm_pipeline(train_entries, val_entries, cfg, fx);
      save_gmm(det, train_out, echo);
      std::cout << "wrote " << train_out << " (theta=" << det.theta << ")\n";
      return 0;
    }
    nn::TrainHistory history;
    if (train_kind == "cnn") {
      auto [net, hist] = train_cnn_pipeline(train_entries, val_entries, cfg, fx);
      save_cnn(net, train_out, cfg.cnn_train_config(), hist, echo);
      history = hist;
    } else {
      auto [net, hist] = train_rnn_pipeline(train_entries, val_entries, cfg, fx);
      save_rnn(net, train_out, cfg.rnn_train_config(), hist, echo);
      history = hist;
    }
    std::ostringstream csv;
    nn::write_history_csv(history, csv);
    write_text_file(train_out + ".history.csv", csv.str());
    if (history.diverged) {
      std::cerr << "error: training diverged: " << history.divergence_note << "\n";
      return 2;
    }
    std::cout << "wrote " << train_out << " (best epoch " << history.best_epoch
              << ", val accuracy " << history.best_val_accuracy << ")\n";
    if (history.interrupted) {
      std::cerr << "error: interrupted; checkpoint holds the best weights so far\n";
      return 2;
    }
    return 0;
  }

  if (detect->parsed()) {
    LoadedModel model(det_model);
    const AudioClip clip = read_wav(det_input);
    const DetectionTimeline tl = model.predict(clip);
    std::ofstream os(det_out, std::ios::binary);
    if (!os) throw IoError("cannot open " + det_out + " for writing");
    write_timeline_csv(tl, os, model.config().hash_hex());
    std::cout << "wrote " << det_out << " (" << tl.spans.size() << " spans)\n";
    return 0;
  }

  if (eval_cmd->parsed()) {
    const auto entries = load_manifest(eval_manifest);
    const int reps = eval_reps > 0 ? eval_reps : cfg.eval_reps;
    EvalRun run = evaluate_model_file(eval_model, entries, reps);
    write_text_file(eval_out, eval_run_to_json(run).dump(2) + "\n");
    std::cout << "wrote " << eval_out << " (pooled F " << run.pooled.f_score << ")\n";
    return 0;
  }

  if (bench->parsed()) {
    AudioClip probe = read_wav(bench_clip);
    if (std::fabs(probe.duration_seconds() - 60.0) > 1.0)
      throw ConfigError("bench: clip must be 60 s long, got " +
                        std::to_string(probe.duration_seconds()) + " s");
    std::vector<std::pair<std::string, LoadedModel>> models;
    for (const auto& entry : fs::directory_iterator(bench_models)) {
      if (!entry.is_regular_file()) continue;
      try {
        LoadedModel m(entry.path().string());
        models.emplace_back(model_kind_name(m.kind()), std::move(m));
      } catch (const DecodeError&) {
        // not a model container; skip
      }
    }
    if (models.empty()) throw ConfigError("bench: no model files found in " + bench_models);
    std::sort(models.begin(), models.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    AudioClip clip;
    FeatureMatrix log_mel_features, mfcc_features;
    const FeatureExtractor fx = cfg.feature_extractor();
    std::vector<std::pair<std::string, std::function<void()>>> stages;
    stages.emplace_back("data_read_wav", [&] { clip = read_wav(bench_clip); });
    stages.emplace_back("feature_engineering", [&] {
      AudioClip at_rate = clip.sample_rate == fx.sample_rate ? clip : resample(clip, fx.sample_rate);
      log_mel_features = fx.extract_log_mel(at_rate);
      mfcc_features = fx.extract_mfcc(log_mel_features);
    });
    for (auto& [name, m] : models) {
      LoadedModel& model = m;
      stages.emplace_back("prediction_" + name, [&model, &clip] { model.predict(clip); });
    }
    TimingReport report = benchmark_stages(stages, probe.duration_seconds(), cfg.bench_reps);
    report.config_hash = config_hash;
    write_text_file(bench_out, timing_to_json(report).dump(2) + "\n");
    std::cout << timing_to_table(report);
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
