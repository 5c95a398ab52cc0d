// Timeline inference for the neural detectors: stride-1 sliding windows,
// argmax labels, and the frame grid taking each frame's label from the
// window centered nearest to it (ties resolve to the later window,
// matching the span boundary convention).
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "droneguard/features.hpp"
#include "droneguard/timeline.hpp"

namespace droneguard::nn {

template <typename Model>
DetectionTimeline predict_timeline(Model& model, const FeatureMatrix& log_mel_features,
                                   double clip_duration_s, std::size_t frames_per_window,
                                   std::size_t batch = 512) {
  using T = std::remove_reference_t<decltype(model.probs[0])>;
  if (log_mel_features.kind != FeatureKind::kLogMel)
    throw ShapeError("predict_timeline: model consumes log_mel features");
  const double hop = log_mel_features.hop_seconds();
  const WindowSet ws = nn_windows(log_mel_features, frames_per_window);
  DetectionTimeline empty;
  empty.frame_hop_s = hop;
  if (ws.count == 0) return empty;

  std::vector<int> window_labels(ws.count);
  std::vector<double> window_scores(ws.count);  // positive-class probability
  const std::size_t wsize = ws.frames_per_window * ws.bins;
  std::vector<T> xbuf;
  for (std::size_t b0 = 0; b0 < ws.count; b0 += batch) {
    const std::size_t n = std::min(batch, ws.count - b0);
    xbuf.assign(ws.data.begin() + b0 * wsize, ws.data.begin() + (b0 + n) * wsize);
    const T* probs = model.forward(xbuf.data(), n, false);
    for (std::size_t i = 0; i < n; ++i) {
      const double p_pos = static_cast<double>(probs[i * 2 + 1]);
      window_labels[b0 + i] = p_pos > static_cast<double>(probs[i * 2]) ? 1 : 0;
      window_scores[b0 + i] = p_pos;
    }
  }

  const double duration =
      clip_duration_s > 0.0 ? clip_duration_s : log_mel_features.size() * hop;
  const std::size_t n_frames = static_cast<std::size_t>(std::llround(duration / hop));
  std::vector<int> labels(n_frames);
  std::vector<double> scores(n_frames);
  for (std::size_t f = 0; f < n_frames; ++f) {
    const double ideal = static_cast<double>(f) + 0.5 - static_cast<double>(frames_per_window) / 2.0;
    const long w = std::clamp<long>(static_cast<long>(std::ceil(ideal)), 0,
                                    static_cast<long>(ws.count) - 1);
    labels[f] = window_labels[static_cast<std::size_t>(w)];
    scores[f] = window_scores[static_cast<std::size_t>(w)];
  }
  return merge_frame_labels(labels, scores, hop, duration);
}

}  // namespace droneguard::nn
