// Likelihood-ratio detector over MFCC frames: one diagonal-covariance
// Gaussian mixture per class, trained by EM from k-means++ seeds, scored
// per frame as L_pos - L_neg against a decision threshold, with
// majority-vote smoothing over the frame labels.
//
// Covariances are diagonal by policy (full covariance overfits at this
// data scale and is out of scope).
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "droneguard/common.hpp"
#include "droneguard/features.hpp"
#include "droneguard/timeline.hpp"

namespace droneguard {

struct GaussianMixture {
  std::vector<double> weights;  // K, sums to 1
  Matrix means;                 // K x D
  Matrix variances;             // K x D, floored positive

  std::size_t components() const { return weights.size(); }
  std::size_t dim() const { return means.cols; }
};

struct GmmFitOptions {
  int max_iterations = 200;
  double tolerance = 1e-4;          // stop when avg-LL improvement falls below
  double variance_floor_dg = 1e-3;  // x per-dimension data variance
  int restarts = 10;                // k-means++ restarts, best final LL kept
};

struct GmmFitReport {
  std::vector<double> avg_log_likelihood;  // per EM iteration of the winning restart
  std::vector<int> reseed_iterations;      // iterations where a collapsed component was reseeded
  int restarts_run = 0;
  int best_restart = 0;
};

namespace gmm_detail {

constexpr double kLog2Pi = 1.8378770664093454836;

// Per-frame log density under one mixture, written into out[t].
inline void per_frame_log_density(const GaussianMixture& g, const Matrix& frames,
                                  std::vector<double>& out) {
  const std::size_t K = g.components(), D = g.dim(), T = frames.rows;
  std::vector<double> log_const(K);
  for (std::size_t k = 0; k < K; ++k) {
    double c = std::log(g.weights[k]) - 0.5 * D * kLog2Pi;
    const double* var = g.variances.row(k);
    for (std::size_t d = 0; d < D; ++d) c -= 0.5 * std::log(var[d]);
    log_const[k] = c;
  }
  out.resize(T);
  std::vector<double> comp(K);
  for (std::size_t t = 0; t < T; ++t) {
    const double* x = frames.row(t);
    double max_lp = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < K; ++k) {
      const double* mu = g.means.row(k);
      const double* var = g.variances.row(k);
      double q = 0.0;
      for (std::size_t d = 0; d < D; ++d) {
        const double diff = x[d] - mu[d];
        q += diff * diff / var[d];
      }
      comp[k] = log_const[k] - 0.5 * q;
      max_lp = std::max(max_lp, comp[k]);
    }
    double acc = 0.0;
    for (std::size_t k = 0; k < K; ++k) acc += std::exp(comp[k] - max_lp);
    out[t] = max_lp + std::log(acc);
  }
}

inline std::vector<std::size_t> kmeanspp_seeds(const Matrix& frames, std::size_t K,
                                               std::mt19937_64& rng) {
  const std::size_t N = frames.rows, D = frames.cols;
  std::vector<std::size_t> seeds;
  seeds.reserve(K);
  std::uniform_int_distribution<std::size_t> uni(0, N - 1);
  seeds.push_back(uni(rng));
  std::vector<double> dist2(N, std::numeric_limits<double>::infinity());
  for (std::size_t c = 1; c < K; ++c) {
    const double* last = frames.row(seeds.back());
    double total = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      const double* x = frames.row(i);
      double d2 = 0.0;
      for (std::size_t d = 0; d < D; ++d) {
        const double diff = x[d] - last[d];
        d2 += diff * diff;
      }
      dist2[i] = std::min(dist2[i], d2);
      total += dist2[i];
    }
    if (total <= 0.0) {
      seeds.push_back(uni(rng));  // all points identical; any seed will do
      continue;
    }
    std::uniform_real_distribution<double> pick(0.0, total);
    double r = pick(rng), acc = 0.0;
    std::size_t chosen = N - 1;
    for (std::size_t i = 0; i < N; ++i) {
      acc += dist2[i];
      if (acc >= r) {
        chosen = i;
        break;
      }
    }
    seeds.push_back(chosen);
  }
  return seeds;
}

}  // namespace gmm_detail

// Total log-likelihood of a frame set under the mixture.
inline double log_likelihood(const GaussianMixture& g, const Matrix& frames) {
  if (frames.rows > 0 && frames.cols != g.dim())
    throw ShapeError("log_likelihood: frame dim " + std::to_string(frames.cols) +
                     " != mixture dim " + std::to_string(g.dim()));
  std::vector<double> per_frame;
  gmm_detail::per_frame_log_density(g, frames, per_frame);
  return std::accumulate(per_frame.begin(), per_frame.end(), 0.0);
}

// EM fit with k-means++ restarts. Average log-likelihood is non-decreasing
// across iterations (up to the reseed escape hatch for collapsed
// components, which the report records).
inline GaussianMixture fit_em(const Matrix& frames, std::size_t K, std::uint64_t seed,
                              const GmmFitOptions& opts = {}, GmmFitReport* report = nullptr) {
  const std::size_t N = frames.rows, D = frames.cols;
  if (N < K)
    throw InsufficientDataError("fit_em: " + std::to_string(N) + " frames for " +
                                std::to_string(K) + " components");
  if (K < 1 || D < 1) throw ConfigError("fit_em: need K >= 1 and D >= 1");

  // Per-dimension data variance sets the floor.
  std::vector<double> data_mean(D, 0.0), data_var(D, 0.0);
  for (std::size_t t = 0; t < N; ++t) {
    const double* x = frames.row(t);
    for (std::size_t d = 0; d < D; ++d) data_mean[d] += x[d];
  }
  for (double& m : data_mean) m /= N;
  for (std::size_t t = 0; t < N; ++t) {
    const double* x = frames.row(t);
    for (std::size_t d = 0; d < D; ++d) {
      const double diff = x[d] - data_mean[d];
      data_var[d] += diff * diff;
    }
  }
  for (double& v : data_var) v = std::max(v / N, 1e-12);
  std::vector<double> floor(D);
  for (std::size_t d = 0; d < D; ++d) floor[d] = opts.variance_floor_dg * data_var[d];

  std::mt19937_64 rng(seed);
  GaussianMixture best;
  double best_ll = -std::numeric_limits<double>::infinity();
  GmmFitReport best_report;

  for (int restart = 0; restart < opts.restarts; ++restart) {
    GaussianMixture g;
    g.weights.assign(K, 1.0 / K);
    g.means = Matrix(K, D);
    g.variances = Matrix(K, D);
    const auto seeds = gmm_detail::kmeanspp_seeds(frames, K, rng);
    for (std::size_t k = 0; k < K; ++k) {
      const double* x = frames.row(seeds[k]);
      for (std::size_t d = 0; d < D; ++d) {
        g.means.at(k, d) = x[d];
        g.variances.at(k, d) = data_var[d];
      }
    }

    GmmFitReport rep;
    rep.restarts_run = opts.restarts;
    Matrix resp(N, K);  // responsibilities
    std::vector<double> log_const(K), comp(K);
    std::vector<int> reseed_count(K, 0);
    double prev_avg = -std::numeric_limits<double>::infinity();

    for (int iter = 0; iter < opts.max_iterations; ++iter) {
      // E-step in log space.
      for (std::size_t k = 0; k < K; ++k) {
        double c = std::log(g.weights[k]) - 0.5 * D * gmm_detail::kLog2Pi;
        const double* var = g.variances.row(k);
        for (std::size_t d = 0; d < D; ++d) c -= 0.5 * std::log(var[d]);
        log_const[k] = c;
      }
      double total_ll = 0.0;
      for (std::size_t t = 0; t < N; ++t) {
        const double* x = frames.row(t);
        double max_lp = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < K; ++k) {
          const double* mu = g.means.row(k);
          const double* var = g.variances.row(k);
          double q = 0.0;
          for (std::size_t d = 0; d < D; ++d) {
            const double diff = x[d] - mu[d];
            q += diff * diff / var[d];
          }
          comp[k] = log_const[k] - 0.5 * q;
          max_lp = std::max(max_lp, comp[k]);
        }
        double denom = 0.0;
        for (std::size_t k = 0; k < K; ++k) denom += std::exp(comp[k] - max_lp);
        const double frame_ll = max_lp + std::log(denom);
        total_ll += frame_ll;
        double* r = resp.row(t);
        for (std::size_t k = 0; k < K; ++k) r[k] = std::exp(comp[k] - frame_ll);
      }
      const double avg = total_ll / N;
      rep.avg_log_likelihood.push_back(avg);
      if (iter > 0 && std::fabs(avg - prev_avg) < opts.tolerance) break;
      prev_avg = avg;

      // M-step.
      bool reseeded = false;
      for (std::size_t k = 0; k < K; ++k) {
        double nk = 0.0;
        for (std::size_t t = 0; t < N; ++t) nk += resp.at(t, k);
        if (nk < 1e-6 * N && reseed_count[k] < 3) {
          // Collapsed component: reseed at the point the mixture explains
          // worst, reset spread to the data variance.
          std::vector<double> pf;
          gmm_detail::per_frame_log_density(g, frames, pf);
          std::size_t worst = std::min_element(pf.begin(), pf.end()) - pf.begin();
          const double* x = frames.row(worst);
          for (std::size_t d = 0; d < D; ++d) {
            g.means.at(k, d) = x[d];
            g.variances.at(k, d) = data_var[d];
          }
          g.weights[k] = 1.0 / K;
          ++reseed_count[k];
          rep.reseed_iterations.push_back(iter);
          reseeded = true;
          continue;
        }
        g.weights[k] = nk / N;
        double* mu = g.means.row(k);
        double* var = g.variances.row(k);
        for (std::size_t d = 0; d < D; ++d) mu[d] = 0.0;
        for (std::size_t t = 0; t < N; ++t) {
          const double r = resp.at(t, k);
          const double* x = frames.row(t);
          for (std::size_t d = 0; d < D; ++d) mu[d] += r * x[d];
        }
        for (std::size_t d = 0; d < D; ++d) mu[d] /= std::max(nk, 1e-300);
        for (std::size_t d = 0; d < D; ++d) var[d] = 0.0;
        for (std::size_t t = 0; t < N; ++t) {
          const double r = resp.at(t, k);
          const double* x = frames.row(t);
          for (std::size_t d = 0; d < D; ++d) {
            const double diff = x[d] - mu[d];
            var[d] += r * diff * diff;
          }
        }
        for (std::size_t d = 0; d < D; ++d)
          var[d] = std::max(var[d] / std::max(nk, 1e-300), floor[d]);
      }
      // Renormalize weights (exact simplex after reseeds).
      double wsum = std::accumulate(g.weights.begin(), g.weights.end(), 0.0);
      for (double& w : g.weights) w /= wsum;
      if (reseeded) prev_avg = -std::numeric_limits<double>::infinity();
    }

    const double final_ll = rep.avg_log_likelihood.empty()
                                ? -std::numeric_limits<double>::infinity()
                                : rep.avg_log_likelihood.back();
    if (final_ll > best_ll) {
      best_ll = final_ll;
      best = g;
      rep.best_restart = restart;
      best_report = rep;
    }
  }
  if (report != nullptr) *report = best_report;
  return best;
}

struct GmmDetector {
  GaussianMixture positive;
  GaussianMixture negative;
  double theta = 0.0;
  int smoothing_window = 5;     // odd frame count
  int aggregation_frames = 1;   // frames per scored sample X; 1 = per-frame

  void validate() const {
    if (positive.dim() != negative.dim())
      throw ShapeError("GmmDetector: mixtures disagree on dimension");
    if (smoothing_window < 1 || smoothing_window % 2 == 0)
      throw ConfigError("GmmDetector: smoothing_window must be odd and >= 1");
    if (aggregation_frames < 1)
      throw ConfigError("GmmDetector: aggregation_frames must be >= 1");
  }
};

// Sliding-window majority vote over binary frame labels. Windows shrink
// symmetrically at the edges, so they stay odd and ties cannot occur.
inline std::vector<int> smooth(const std::vector<int>& labels, int window) {
  if (window < 1 || window % 2 == 0) throw ConfigError("smooth: window must be odd and >= 1");
  if (window == 1 || labels.size() <= 1) return labels;
  const std::size_t n = labels.size();
  const int h = window / 2;
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int hi = std::min<int>({h, static_cast<int>(i), static_cast<int>(n - 1 - i)});
    int ones = 0;
    for (int j = -hi; j <= hi; ++j) ones += labels[i + j];
    out[i] = ones * 2 > 2 * hi + 1 ? 1 : 0;
  }
  return out;
}

// Per-frame log-likelihood ratio scores L_pos - L_neg.
inline std::vector<double> gmm_scores(const GmmDetector& det, const FeatureMatrix& features) {
  if (features.kind != FeatureKind::kMfcc)
    throw ShapeError("gmm_scores: detector consumes MFCC features");
  if (features.size() > 0 && features.dim() != det.positive.dim())
    throw ShapeError("gmm_scores: feature dim " + std::to_string(features.dim()) +
                     " != model dim " + std::to_string(det.positive.dim()));
  std::vector<double> lp, ln;
  gmm_detail::per_frame_log_density(det.positive, features.frames, lp);
  gmm_detail::per_frame_log_density(det.negative, features.frames, ln);
  std::vector<double> scores(features.size());
  for (std::size_t t = 0; t < scores.size(); ++t) scores[t] = lp[t] - ln[t];
  return scores;
}

// Sum each frame's score with its trailing neighbors so a sample X of
// `window` frames is scored as one log-likelihood difference.
inline std::vector<double> aggregate_scores(const std::vector<double>& scores, int window) {
  if (window <= 1) return scores;
  std::vector<double> out(scores.size());
  double acc = 0.0;
  for (std::size_t t = 0; t < scores.size(); ++t) {
    acc += scores[t];
    if (t >= static_cast<std::size_t>(window)) acc -= scores[t - window];
    out[t] = acc;
  }
  return out;
}

// Label positive where L1 - L2 > theta (strict), smooth, merge to spans.
inline DetectionTimeline classify(const GmmDetector& det, const FeatureMatrix& features,
                                  double clip_duration_s = -1.0) {
  det.validate();
  if (features.size() == 0) return DetectionTimeline{{}, features.hop_seconds()};
  const std::vector<double> scores =
      aggregate_scores(gmm_scores(det, features), det.aggregation_frames);
  std::vector<int> labels(scores.size());
  for (std::size_t t = 0; t < scores.size(); ++t) labels[t] = scores[t] > det.theta ? 1 : 0;
  labels = smooth(labels, det.smoothing_window);
  const double hop = features.hop_seconds();
  const double duration = clip_duration_s > 0.0 ? clip_duration_s : features.size() * hop;
  return merge_frame_labels(labels, scores, hop, duration);
}

// Threshold sweep on validation scores maximizing F-Score. Candidates are
// midpoints between adjacent distinct scores, plus the default 0.
inline double calibrate_theta(const std::vector<double>& scores, const std::vector<int>& truth) {
  if (scores.size() != truth.size()) throw ShapeError("calibrate_theta: length mismatch");
  if (scores.empty()) return 0.0;
  std::vector<double> sorted = scores;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::vector<double> candidates{0.0};
  const std::size_t max_cands = 512;
  const std::size_t stride = std::max<std::size_t>(1, sorted.size() / max_cands);
  for (std::size_t i = 0; i + 1 < sorted.size(); i += stride)
    candidates.push_back(0.5 * (sorted[i] + sorted[i + 1]));

  double best_theta = 0.0, best_f = -1.0;
  for (double theta : candidates) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const int pred = scores[i] > theta ? 1 : 0;
      tp += pred == 1 && truth[i] == 1;
      fp += pred == 1 && truth[i] == 0;
      fn += pred == 0 && truth[i] == 1;
    }
    const double denom = 2.0 * tp + fp + fn;
    const double f = denom > 0.0 ? 2.0 * tp / denom : 0.0;
    if (f > best_f + 1e-12 || (std::fabs(f - best_f) <= 1e-12 &&
                               std::fabs(theta) < std::fabs(best_theta))) {
      best_f = f;
      best_theta = theta;
    }
  }
  return best_theta;
}

// --- serialization --------------------------------------------------------

inline constexpr char kGmmMagic[8] = {'D', 'G', 'G', 'M', 'M', '0', '\0', '\0'};
inline constexpr std::uint32_t kGmmVersion = 1;

namespace gmm_detail {

inline void write_mixture(std::ostream& os, const GaussianMixture& g) {
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(g.components()));
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(g.dim()));
  detail::write_f64_vec(os, g.weights);
  detail::write_f64_vec(os, g.means.data);
  detail::write_f64_vec(os, g.variances.data);
}

inline GaussianMixture read_mixture(std::istream& is) {
  GaussianMixture g;
  const auto K = detail::read_le<std::uint32_t>(is);
  const auto D = detail::read_le<std::uint32_t>(is);
  g.weights = detail::read_f64_vec(is);
  g.means = Matrix(K, D);
  g.means.data = detail::read_f64_vec(is);
  g.variances = Matrix(K, D);
  g.variances.data = detail::read_f64_vec(is);
  if (g.weights.size() != K || g.means.data.size() != std::size_t{K} * D ||
      g.variances.data.size() != std::size_t{K} * D)
    throw DecodeError("gmm container: inconsistent mixture dims");
  return g;
}

}  // namespace gmm_detail

inline void save_gmm(const GmmDetector& det, const std::string& path,
                     const std::string& config_echo = "") {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os.write(kGmmMagic, 8);
  detail::write_le<std::uint32_t>(os, kGmmVersion);
  gmm_detail::write_mixture(os, det.positive);
  gmm_detail::write_mixture(os, det.negative);
  detail::write_le<double>(os, det.theta);
  detail::write_le<std::int32_t>(os, det.smoothing_window);
  detail::write_le<std::int32_t>(os, det.aggregation_frames);
  detail::write_string(os, config_echo);
  if (!os) throw IoError("write failed: " + path);
}

inline GmmDetector load_gmm(const std::string& path, std::string* config_echo = nullptr) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kGmmMagic, 8) != 0)
    throw DecodeError(path + ": not a GMM model container");
  const auto version = detail::read_le<std::uint32_t>(is);
  if (version != kGmmVersion)
    throw DecodeError(path + ": unsupported GMM container version " + std::to_string(version));
  GmmDetector det;
  det.positive = gmm_detail::read_mixture(is);
  det.negative = gmm_detail::read_mixture(is);
  det.theta = detail::read_le<double>(is);
  det.smoothing_window = detail::read_le<std::int32_t>(is);
  det.aggregation_frames = detail::read_le<std::int32_t>(is);
  const std::string echo = detail::read_string(is);
  if (config_echo != nullptr) *config_echo = echo;
  det.validate();
  return det;
}

// JSON export for diffing.
inline nlohmann::json gmm_to_json(const GmmDetector& det) {
  auto mixture = [](const GaussianMixture& g) {
    nlohmann::json j;
    j["components"] = g.components();
    j["dim"] = g.dim();
    j["weights"] = g.weights;
    j["means"] = g.means.data;
    j["variances"] = g.variances.data;
    return j;
  };
  nlohmann::json j;
  j["positive"] = mixture(det.positive);
  j["negative"] = mixture(det.negative);
  j["theta"] = det.theta;
  j["smoothing_window"] = det.smoothing_window;
  j["aggregation_frames"] = det.aggregation_frames;
  return j;
}

}  // namespace droneguard
