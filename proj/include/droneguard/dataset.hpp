// Bridges manifests to trainable data: expands span labels to frame and
// window labels keyed to the active framing, so one manifest serves the
// GMM and both networks.
#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "droneguard/audio.hpp"
#include "droneguard/augment.hpp"
#include "droneguard/features.hpp"
#include "droneguard/nn/train.hpp"
#include "droneguard/timeline.hpp"

namespace droneguard {

// Split manifest rows by clip. Validation receives ceil(fraction * n)
// clips; both sides end up non-empty whenever n >= 2.
inline std::pair<std::vector<ManifestEntry>, std::vector<ManifestEntry>> split_manifest(
    const std::vector<ManifestEntry>& entries, double val_fraction, std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0))
    throw ConfigError("split: val fraction must lie in (0, 1)");
  std::vector<const ManifestEntry*> ok;
  for (const auto& e : entries)
    if (e.ok()) ok.push_back(&e);
  if (ok.size() < 2)
    throw InsufficientDataError("split: need at least two usable manifest rows");
  std::vector<std::size_t> order(ok.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t n_val = static_cast<std::size_t>(std::ceil(val_fraction * ok.size()));
  n_val = std::min(n_val, ok.size() - 1);
  std::pair<std::vector<ManifestEntry>, std::vector<ManifestEntry>> out;
  for (std::size_t i = 0; i < order.size(); ++i)
    (i < n_val ? out.second : out.first).push_back(*ok[order[i]]);
  return out;
}

inline AudioClip load_clip_resampled(const ManifestEntry& entry, int sample_rate) {
  AudioClip clip = read_wav(entry.path);
  if (clip.sample_rate != sample_rate) clip = resample(clip, sample_rate);
  return clip;
}

// Sliding 240 ms windows with span-derived labels at the window centers.
// `stride` subsamples windows for cheaper training epochs; prediction
// always runs stride 1.
inline nn::WindowDataset build_window_dataset(const std::vector<ManifestEntry>& entries,
                                              const FeatureExtractor& fx,
                                              std::size_t frames_per_window,
                                              const std::string& positive_label,
                                              std::size_t stride = 1) {
  nn::WindowDataset ds;
  ds.window_size = frames_per_window * static_cast<std::size_t>(fx.mel_config.n_mels);
  for (const auto& entry : entries) {
    if (!entry.ok()) continue;
    const AudioClip clip = load_clip_resampled(entry, fx.sample_rate);
    const FeatureMatrix lm = fx.extract_log_mel(clip);
    const WindowSet ws = nn_windows(lm, frames_per_window);
    if (ws.count == 0) continue;
    const std::vector<int> labels = labels_at_times(entry.spans, positive_label, ws.center_times);
    for (std::size_t i = 0; i < ws.count; i += stride) {
      ds.x.insert(ds.x.end(), ws.window(i), ws.window(i) + ds.window_size);
      ds.labels.push_back(labels[i]);
      ds.clip_ids.push_back(entry.path);
    }
  }
  return ds;
}

// MFCC frames split by class for the two-mixture fit. Frames are labeled
// at their own centers (start + window/2).
inline std::pair<Matrix, Matrix> build_gmm_frames(const std::vector<ManifestEntry>& entries,
                                                  const FeatureExtractor& fx,
                                                  const std::string& positive_label) {
  std::vector<double> pos, neg;
  std::size_t dim = 0;
  for (const auto& entry : entries) {
    if (!entry.ok()) continue;
    const AudioClip clip = load_clip_resampled(entry, fx.sample_rate);
    const FeatureMatrix mf = fx.extract_mfcc(clip);
    dim = mf.dim();
    std::vector<double> centers(mf.size());
    const double half_window = fx.frame_spec.window_ms / 2000.0;
    for (std::size_t t = 0; t < mf.size(); ++t) centers[t] = mf.frame_times[t] + half_window;
    const std::vector<int> labels = labels_at_times(entry.spans, positive_label, centers);
    for (std::size_t t = 0; t < mf.size(); ++t) {
      auto& dst = labels[t] == 1 ? pos : neg;
      dst.insert(dst.end(), mf.frames.row(t), mf.frames.row(t) + dim);
    }
  }
  Matrix pos_m(pos.size() / std::max<std::size_t>(dim, 1), dim);
  pos_m.data = std::move(pos);
  Matrix neg_m(neg.size() / std::max<std::size_t>(dim, 1), dim);
  neg_m.data = std::move(neg);
  return {pos_m, neg_m};
}

}  // namespace droneguard
