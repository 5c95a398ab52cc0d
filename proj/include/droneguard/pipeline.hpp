// End-to-end compositions shared by the CLI and the acceptance suite:
// manifest -> trained detector, and model file -> detection timeline.
#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "droneguard/config.hpp"
#include "droneguard/dataset.hpp"
#include "droneguard/eval.hpp"
#include "droneguard/gmm.hpp"
#include "droneguard/model_io.hpp"
#include "droneguard/nn/cnn.hpp"
#include "droneguard/nn/lstm.hpp"
#include "droneguard/nn/predict.hpp"
#include "droneguard/nn/train.hpp"
#include "droneguard/timeline.hpp"

namespace droneguard {

// Fit both class mixtures on the training split; theta comes from an
// F-Score sweep on the validation frames unless calibration is off.
inline GmmDetector train_gmm_pipeline(const std::vector<ManifestEntry>& train_entries,
                                      const std::vector<ManifestEntry>& val_entries,
                                      const RunConfig& cfg, const FeatureExtractor& fx,
                                      GmmFitReport* report_pos = nullptr,
                                      GmmFitReport* report_neg = nullptr) {
  const auto [pos, neg] = build_gmm_frames(train_entries, fx, cfg.label_positive);
  GmmFitOptions opts;
  opts.restarts = cfg.gmm_restarts;
  opts.max_iterations = cfg.gmm_max_iterations;
  GmmDetector det;
  det.positive = fit_em(pos, cfg.gmm_components, cfg.seed, opts, report_pos);
  det.negative = fit_em(neg, cfg.gmm_components, cfg.seed + 1, opts, report_neg);
  det.theta = cfg.gmm_theta;
  det.smoothing_window = cfg.gmm_smoothing_frames;
  det.validate();

  if (cfg.gmm_calibrate && !val_entries.empty()) {
    std::vector<double> scores;
    std::vector<int> truth;
    for (const auto& entry : val_entries) {
      if (!entry.ok()) continue;
      const AudioClip clip = load_clip_resampled(entry, fx.sample_rate);
      const FeatureMatrix mf = fx.extract_mfcc(clip);
      const std::vector<double> s = gmm_scores(det, mf);
      std::vector<double> centers(mf.size());
      for (std::size_t t = 0; t < mf.size(); ++t)
        centers[t] = mf.frame_times[t] + fx.frame_spec.window_ms / 2000.0;
      const std::vector<int> lab = labels_at_times(entry.spans, cfg.label_positive, centers);
      scores.insert(scores.end(), s.begin(), s.end());
      truth.insert(truth.end(), lab.begin(), lab.end());
    }
    if (!scores.empty()) det.theta = calibrate_theta(scores, truth);
  }
  return det;
}

template <typename Net>
std::pair<Net, nn::TrainHistory> train_net_pipeline(Net net,
                                                    const std::vector<ManifestEntry>& train_entries,
                                                    const std::vector<ManifestEntry>& val_entries,
                                                    const RunConfig& cfg,
                                                    const FeatureExtractor& fx,
                                                    const nn::TrainConfig& tc) {
  const nn::WindowDataset train_set =
      build_window_dataset(train_entries, fx, cfg.frames_per_window, cfg.label_positive,
                           static_cast<std::size_t>(cfg.train_window_stride));
  const nn::WindowDataset val_set =
      build_window_dataset(val_entries, fx, cfg.frames_per_window, cfg.label_positive);
  nn::TrainHistory history = nn::train_model(net, train_set, val_set, tc);
  return {std::move(net), std::move(history)};
}

inline std::pair<nn::CnnNet<double>, nn::TrainHistory> train_cnn_pipeline(
    const std::vector<ManifestEntry>& train_entries, const std::vector<ManifestEntry>& val_entries,
    const RunConfig& cfg, const FeatureExtractor& fx) {
  nn::CnnArch arch;
  arch.height = cfg.frames_per_window;
  arch.width = cfg.n_mels;
  nn::CnnNet<double> net(arch);
  return train_net_pipeline(std::move(net), train_entries, val_entries, cfg, fx,
                            cfg.cnn_train_config());
}

inline std::pair<nn::BiLstmNet<double>, nn::TrainHistory> train_rnn_pipeline(
    const std::vector<ManifestEntry>& train_entries, const std::vector<ManifestEntry>& val_entries,
    const RunConfig& cfg, const FeatureExtractor& fx) {
  nn::RnnArch arch;
  arch.input_dim = cfg.n_mels;
  arch.steps = cfg.frames_per_window;
  arch.hidden = cfg.rnn_hidden;
  arch.num_layers = cfg.rnn_layers;
  arch.mean_pool = cfg.rnn_mean_pool;
  nn::BiLstmNet<double> net(arch);
  return train_net_pipeline(std::move(net), train_entries, val_entries, cfg, fx,
                            cfg.rnn_train_config());
}

// A model file plus everything needed to run it on raw audio: the feature
// extractor rebuilt from the embedded config echo and, for the networks,
// the inference-precision instantiation.
class LoadedModel {
 public:
  explicit LoadedModel(const std::string& path) {
    kind_ = sniff_model_kind(path);
    std::string echo;
    switch (kind_) {
      case ModelKind::kGmm:
        gmm_ = std::make_unique<GmmDetector>(load_gmm(path, &echo));
        break;
      case ModelKind::kCnn:
        cnn_ = std::make_unique<nn::CnnNet<double>>(load_cnn(path, &echo));
        break;
      case ModelKind::kRnn:
        rnn_ = std::make_unique<nn::BiLstmNet<double>>(load_rnn(path, &echo));
        break;
    }
    if (!echo.empty()) config_.load_string(echo);
    config_.validate();
    fx_ = config_.feature_extractor();
    if (config_.inference_precision == "float32") {
      if (cnn_) cnn_f_ = std::make_unique<nn::CnnNet<float>>(to_float(*cnn_));
      if (rnn_) rnn_f_ = std::make_unique<nn::BiLstmNet<float>>(to_float(*rnn_));
    }
  }

  ModelKind kind() const { return kind_; }
  const RunConfig& config() const { return config_; }
  const FeatureExtractor& features() const { return fx_; }
  const GmmDetector& gmm() const { return *gmm_; }

  DetectionTimeline predict(const AudioClip& raw) {
    AudioClip clip = raw;
    if (clip.sample_rate != fx_.sample_rate) clip = resample(clip, fx_.sample_rate);
    const double duration = clip.duration_seconds();
    if (kind_ == ModelKind::kGmm) {
      const FeatureMatrix mf = fx_.extract_mfcc(clip);
      return classify(*gmm_, mf, duration);
    }
    const FeatureMatrix lm = fx_.extract_log_mel(clip);
    const std::size_t fpw = static_cast<std::size_t>(config_.frames_per_window);
    if (kind_ == ModelKind::kCnn)
      return cnn_f_ ? nn::predict_timeline(*cnn_f_, lm, duration, fpw)
                    : nn::predict_timeline(*cnn_, lm, duration, fpw);
    return rnn_f_ ? nn::predict_timeline(*rnn_f_, lm, duration, fpw)
                  : nn::predict_timeline(*rnn_, lm, duration, fpw);
  }

 private:
  ModelKind kind_ = ModelKind::kGmm;
  std::unique_ptr<GmmDetector> gmm_;
  std::unique_ptr<nn::CnnNet<double>> cnn_;
  std::unique_ptr<nn::BiLstmNet<double>> rnn_;
  std::unique_ptr<nn::CnnNet<float>> cnn_f_;
  std::unique_ptr<nn::BiLstmNet<float>> rnn_f_;
  RunConfig config_;
  FeatureExtractor fx_;
};

// Manifest evaluation for a model file; repetition seeds only matter for
// stochastic predictors, deterministic models report zero spread.
inline EvalRun evaluate_model_file(const std::string& model_path,
                                   const std::vector<ManifestEntry>& entries, int repetitions) {
  LoadedModel model(model_path);
  const double hop = model.config().hop_ms / 1000.0;
  EvalRun run = evaluate_run(
      entries, model.config().label_positive, hop,
      [&model](const ManifestEntry& entry, std::uint64_t) {
        return model.predict(read_wav(entry.path));
      },
      repetitions, model.config().seed);
  run.config_hash = model.config().hash_hex();
  return run;
}

}  // namespace droneguard
