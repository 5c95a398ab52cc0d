// Frame-level detection metrics, manifest-driven evaluation runs, and the
// per-stage execution-time benchmark. All scoring happens on the 20 ms hop
// grid regardless of the model's native window size; every report records
// that normalization alongside the config hash.
#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "droneguard/augment.hpp"
#include "droneguard/common.hpp"
#include "droneguard/timeline.hpp"

namespace droneguard {

struct MetricsReport {
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
  double precision = 0.0, recall = 0.0, f_score = 0.0, accuracy = 0.0;
  bool degenerate_precision = false, degenerate_recall = false, degenerate_f = false;

  std::uint64_t total() const { return tp + fp + tn + fn; }
};

inline double f_score_from(double precision, double recall) {
  return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

inline MetricsReport metrics_from_counts(std::uint64_t tp, std::uint64_t fp, std::uint64_t tn,
                                         std::uint64_t fn) {
  MetricsReport m;
  m.tp = tp;
  m.fp = fp;
  m.tn = tn;
  m.fn = fn;
  if (tp + fp > 0)
    m.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  else
    m.degenerate_precision = true;
  if (tp + fn > 0)
    m.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  else
    m.degenerate_recall = true;
  if (m.precision + m.recall > 0.0)
    m.f_score = f_score_from(m.precision, m.recall);
  else
    m.degenerate_f = true;
  m.accuracy = m.total() > 0 ? static_cast<double>(tp + tn) / static_cast<double>(m.total()) : 0.0;
  return m;
}

inline MetricsReport compute_metrics(const std::vector<int>& pred,
                                     const std::vector<int>& truth) {
  if (pred.size() != truth.size())
    throw ShapeError("compute_metrics: " + std::to_string(pred.size()) + " predictions vs " +
                     std::to_string(truth.size()) + " truth labels");
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] == 1)
      truth[i] == 1 ? ++tp : ++fp;
    else
      truth[i] == 1 ? ++fn : ++tn;
  }
  return metrics_from_counts(tp, fp, tn, fn);
}

inline nlohmann::json metrics_to_json(const MetricsReport& m) {
  nlohmann::json j;
  // F-Score, precision and recall lead; accuracy is reported but carries
  // less weight for this task.
  j["f_score"] = m.f_score;
  j["precision"] = m.precision;
  j["recall"] = m.recall;
  j["accuracy"] = m.accuracy;
  j["counts"] = {{"tp", m.tp}, {"fp", m.fp}, {"tn", m.tn}, {"fn", m.fn}};
  j["degenerate"] = {{"precision", m.degenerate_precision},
                     {"recall", m.degenerate_recall},
                     {"f_score", m.degenerate_f}};
  return j;
}

// --- evaluation over a manifest --------------------------------------------

struct ClipEval {
  std::string path;
  MetricsReport metrics;
};

struct EvalRun {
  MetricsReport pooled;               // micro-average over all frames, last rep
  std::vector<ClipEval> per_clip;     // last rep
  std::vector<std::string> skipped;   // unreadable clips
  int repetitions = 1;
  // Mean and population std over repetitions, keyed metric name.
  std::map<std::string, double> mean, stddev;
  std::string config_hash;
  std::string normalization = "frame-level, 20 ms hop grid";
};

// `predict` maps (entry, rep_seed) to a DetectionTimeline covering the
// clip; unreadable clips are recorded and skipped. Metrics pool frame
// counts across clips (micro-average); repetitions rerun the whole pass
// with distinct seeds for stochastic predictors.
template <typename PredictFn>
EvalRun evaluate_run(const std::vector<ManifestEntry>& entries, const std::string& positive_label,
                     double hop_s, PredictFn&& predict, int repetitions,
                     std::uint64_t base_seed = 0) {
  if (repetitions < 1) throw ConfigError("evaluate_run: repetitions must be >= 1");
  EvalRun run;
  run.repetitions = repetitions;
  std::vector<std::array<double, 4>> rep_values;  // f, precision, recall, accuracy

  for (int rep = 0; rep < repetitions; ++rep) {
    std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
    run.per_clip.clear();
    run.skipped.clear();
    for (const auto& entry : entries) {
      if (!entry.ok()) {
        run.skipped.push_back(entry.background_id + "/" + entry.event_id + ": " + entry.error);
        continue;
      }
      DetectionTimeline tl;
      try {
        tl = predict(entry, base_seed + static_cast<std::uint64_t>(rep));
      } catch (const Error& e) {
        run.skipped.push_back(entry.path + ": " + e.what());
        continue;
      }
      const std::size_t n = static_cast<std::size_t>(std::llround(entry.duration_s / hop_s));
      std::vector<double> centers(n);
      for (std::size_t i = 0; i < n; ++i) centers[i] = (i + 0.5) * hop_s;
      const std::vector<int> truth = labels_at_times(entry.spans, positive_label, centers);
      std::vector<int> pred;
      if (tl.empty())
        pred.assign(n, 0);  // no detection = all negative
      else
        pred = frame_labels(tl, hop_s, entry.duration_s);
      const MetricsReport clip_m = compute_metrics(pred, truth);
      run.per_clip.push_back({entry.path, clip_m});
      tp += clip_m.tp;
      fp += clip_m.fp;
      tn += clip_m.tn;
      fn += clip_m.fn;
    }
    run.pooled = metrics_from_counts(tp, fp, tn, fn);
    rep_values.push_back(
        {run.pooled.f_score, run.pooled.precision, run.pooled.recall, run.pooled.accuracy});
  }

  const char* names[4] = {"f_score", "precision", "recall", "accuracy"};
  for (int k = 0; k < 4; ++k) {
    double sum = 0.0;
    for (const auto& rv : rep_values) sum += rv[k];
    const double mean = sum / rep_values.size();
    double var = 0.0;
    for (const auto& rv : rep_values) var += (rv[k] - mean) * (rv[k] - mean);
    run.mean[names[k]] = mean;
    run.stddev[names[k]] = std::sqrt(var / rep_values.size());
  }
  return run;
}

inline nlohmann::json eval_run_to_json(const EvalRun& run) {
  nlohmann::json j;
  j["config_hash"] = run.config_hash;
  j["normalization"] = run.normalization;
  j["repetitions"] = run.repetitions;
  j["pooled"] = metrics_to_json(run.pooled);
  j["mean"] = run.mean;
  j["stddev"] = run.stddev;
  nlohmann::json clips = nlohmann::json::array();
  for (const auto& c : run.per_clip)
    clips.push_back({{"path", c.path}, {"metrics", metrics_to_json(c.metrics)}});
  j["per_clip"] = clips;
  j["skipped"] = run.skipped;
  return j;
}

// --- timing -----------------------------------------------------------------

struct TimingStage {
  std::string name;
  double median_s = 0.0;
  std::vector<double> samples_s;
};

struct TimingReport {
  std::vector<TimingStage> stages;
  double clip_length_s = 0.0;
  int repetitions = 0;
  std::string machine;
  bool real_time_capable = false;  // sum of stage medians < clip length
  std::string config_hash;

  double stage_median(const std::string& name) const {
    for (const auto& s : stages)
      if (s.name == name) return s.median_s;
    throw Error("timing report has no stage named " + name);
  }
  double total_median() const {
    double t = 0.0;
    for (const auto& s : stages) t += s.median_s;
    return t;
  }
};

inline std::string machine_descriptor() {
  std::string model = "unknown cpu";
  std::ifstream is("/proc/cpuinfo");
  std::string line;
  while (std::getline(is, line)) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) model = line.substr(colon + 2);
      break;
    }
  }
  return model + ", " + std::to_string(std::thread::hardware_concurrency()) + " hw threads";
}

inline double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Wall-clock medians around each stage call only; stages run serially.
inline TimingReport benchmark_stages(
    const std::vector<std::pair<std::string, std::function<void()>>>& stages,
    double clip_length_s, int repetitions) {
  if (repetitions < 5) throw ConfigError("benchmark: need at least 5 repetitions");
  TimingReport report;
  report.clip_length_s = clip_length_s;
  report.repetitions = repetitions;
  report.machine = machine_descriptor();
  for (const auto& [name, fn] : stages) {
    TimingStage stage;
    stage.name = name;
    for (int r = 0; r < repetitions; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      fn();
      const auto t1 = std::chrono::steady_clock::now();
      stage.samples_s.push_back(std::chrono::duration<double>(t1 - t0).count());
    }
    stage.median_s = median_of(stage.samples_s);
    report.stages.push_back(std::move(stage));
  }
  report.real_time_capable = report.total_median() < clip_length_s;
  return report;
}

inline nlohmann::json timing_to_json(const TimingReport& report) {
  nlohmann::json j;
  j["config_hash"] = report.config_hash;
  j["clip_length_s"] = report.clip_length_s;
  j["repetitions"] = report.repetitions;
  j["machine"] = report.machine;
  j["real_time_capable"] = report.real_time_capable;
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : report.stages)
    stages.push_back({{"stage", s.name}, {"median_s", s.median_s}, {"samples_s", s.samples_s}});
  j["stages"] = stages;
  return j;
}

inline std::string timing_to_table(const TimingReport& report) {
  std::ostringstream os;
  os << "Process                          Median time (s)\n";
  for (const auto& s : report.stages)
    os << std::left << std::setw(33) << s.name << std::fixed << std::setprecision(4)
       << s.median_s << '\n';
  os << std::left << std::setw(33) << "total" << std::fixed << std::setprecision(4)
     << report.total_median() << '\n';
  os << "clip length: " << std::setprecision(1) << report.clip_length_s
     << " s; real-time capable: " << (report.real_time_capable ? "yes" : "no") << '\n';
  return os.str();
}

}  // namespace droneguard
