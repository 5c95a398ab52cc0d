// Detection timelines: labeled spans over a clip, conversion to and from
// the 20 ms frame grid, and the plot-ready CSV export.
#pragma once

#include <cmath>
#include <ostream>
#include <string>
#include <vector>

#include "droneguard/augment.hpp"
#include "droneguard/common.hpp"

namespace droneguard {

struct TimelineSpan {
  double start_s = 0.0;
  double end_s = 0.0;
  int label = 0;  // 0 = negative, 1 = positive
  double score = 0.0;
};

struct DetectionTimeline {
  std::vector<TimelineSpan> spans;  // sorted, non-overlapping, covering [0, duration]
  double frame_hop_s = 0.02;

  bool empty() const { return spans.empty(); }
  double duration() const { return spans.empty() ? 0.0 : spans.back().end_s; }
};

// Collapse per-frame labels into spans. Span score is the mean frame score.
// The final span is extended to `duration_s` so the timeline covers the
// whole clip.
inline DetectionTimeline merge_frame_labels(const std::vector<int>& labels,
                                            const std::vector<double>& scores, double hop_s,
                                            double duration_s) {
  DetectionTimeline tl;
  tl.frame_hop_s = hop_s;
  if (labels.empty()) return tl;

  std::size_t run_start = 0;
  double score_acc = scores.empty() ? 0.0 : scores[0];
  for (std::size_t i = 1; i <= labels.size(); ++i) {
    if (i < labels.size() && labels[i] == labels[run_start]) {
      if (!scores.empty()) score_acc += scores[i];
      continue;
    }
    TimelineSpan span;
    span.start_s = run_start * hop_s;
    span.end_s = i * hop_s;
    span.label = labels[run_start];
    span.score = scores.empty() ? 0.0 : score_acc / (i - run_start);
    tl.spans.push_back(span);
    if (i < labels.size()) {
      run_start = i;
      score_acc = scores[i];
    }
  }
  tl.spans.front().start_s = 0.0;
  tl.spans.back().end_s = std::max(tl.spans.back().end_s, duration_s);
  return tl;
}

// One label per hop-aligned frame; a frame takes the label of the span
// containing its center, and a center landing exactly on a boundary
// belongs to the later span.
inline std::vector<int> frame_labels(const DetectionTimeline& tl, double hop_s,
                                     double duration_s) {
  const std::size_t n = static_cast<std::size_t>(std::llround(duration_s / hop_s));
  std::vector<int> out(n);
  std::size_t si = 0;
  constexpr double eps = 1e-9;
  for (std::size_t i = 0; i < n; ++i) {
    const double center = (i + 0.5) * hop_s;
    while (si < tl.spans.size() && tl.spans[si].end_s <= center + eps) ++si;
    if (si >= tl.spans.size() || tl.spans[si].start_s > center + eps)
      throw CoverageError("frame_labels: timeline does not cover t=" + std::to_string(center));
    out[i] = tl.spans[si].label;
  }
  return out;
}

// Ground-truth labels at arbitrary times from manifest spans. Same
// center/boundary convention as frame_labels.
inline std::vector<int> labels_at_times(const std::vector<LabelSpan>& spans,
                                        const std::string& positive_label,
                                        const std::vector<double>& times) {
  std::vector<int> out(times.size(), 0);
  constexpr double eps = 1e-9;
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double t = times[i];
    bool found = false;
    for (const auto& s : spans) {
      if (t + eps >= s.start_s && t + eps < s.end_s) {
        out[i] = s.label == positive_label ? 1 : 0;
        found = true;
        break;
      }
    }
    if (!found)
      throw CoverageError("labels_at_times: spans do not cover t=" + std::to_string(t));
  }
  return out;
}

// Frame-granular CSV (time_s, label, score) on the hop grid; feeds external
// plotters directly. The leading comment embeds the effective config hash.
inline void write_timeline_csv(const DetectionTimeline& tl, std::ostream& os,
                               const std::string& config_hash = "") {
  if (!config_hash.empty()) os << "# config_hash=" << config_hash << '\n';
  os << "time_s,label,score\n";
  os.precision(9);
  for (const auto& span : tl.spans) {
    const std::size_t first = static_cast<std::size_t>(std::llround(span.start_s / tl.frame_hop_s));
    const std::size_t last = static_cast<std::size_t>(std::llround(span.end_s / tl.frame_hop_s));
    for (std::size_t i = first; i < last; ++i)
      os << i * tl.frame_hop_s << ',' << span.label << ',' << span.score << '\n';
  }
}

}  // namespace droneguard
