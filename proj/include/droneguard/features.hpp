// Audio -> feature views. One framing scheme (40 ms window / 20 ms hop by
// default) feeds both detectors: MFCC vectors for the GMM and log-mel
// frames for the neural models, so detection timelines stay aligned.
//
// The mel filterbank runs 0..1500 Hz by default (the band where drone
// rotor harmonics sit); full-band extraction is a config choice, not a
// code change.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "droneguard/audio.hpp"
#include "droneguard/common.hpp"
#include "droneguard/fft.hpp"

namespace droneguard {

// Row-major real matrix; the workhorse container for frames and banks.
struct Matrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  double* row(std::size_t r) { return data.data() + r * cols; }
  const double* row(std::size_t r) const { return data.data() + r * cols; }
};

enum class WindowFn { kHann, kRect };

inline WindowFn window_fn_from_name(const std::string& name) {
  if (name == "hann") return WindowFn::kHann;
  if (name == "rect") return WindowFn::kRect;
  throw ConfigError("unknown window function: " + name + " (supported: hann, rect)");
}

inline std::string window_fn_name(WindowFn fn) {
  return fn == WindowFn::kHann ? "hann" : "rect";
}

struct FrameSpec {
  double window_ms = 40.0;
  double hop_ms = 20.0;
  WindowFn window_fn = WindowFn::kHann;

  void validate() const {
    if (!(hop_ms > 0.0 && hop_ms <= window_ms))
      throw ConfigError("FrameSpec: need 0 < hop_ms <= window_ms");
  }
  std::size_t window_samples(int sample_rate) const {
    return static_cast<std::size_t>(std::lround(window_ms * sample_rate / 1000.0));
  }
  std::size_t hop_samples(int sample_rate) const {
    return static_cast<std::size_t>(std::lround(hop_ms * sample_rate / 1000.0));
  }
};

struct MelConfig {
  int n_mels = 40;
  double f_min = 0.0;
  double f_max = 1500.0;
  std::size_t n_fft = 2048;
  double log_floor = 1e-10;

  void validate(int sample_rate, std::size_t window_samples) const {
    if (n_mels < 1) throw ConfigError("MelConfig: n_mels must be >= 1");
    if (!(f_min >= 0.0 && f_min < f_max && f_max <= sample_rate / 2.0))
      throw ConfigError("MelConfig: need 0 <= f_min < f_max <= sample_rate/2");
    if (n_fft < window_samples)
      throw ConfigError("MelConfig: n_fft shorter than the analysis window");
    if (!is_power_of_two(n_fft)) throw ConfigError("MelConfig: n_fft must be a power of two");
    if (!(log_floor > 0.0)) throw ConfigError("MelConfig: log_floor must be positive");
  }
};

enum class FeatureKind { kMfcc, kLogMel };

inline std::string feature_kind_name(FeatureKind k) {
  return k == FeatureKind::kMfcc ? "mfcc" : "log_mel";
}

struct FeatureMatrix {
  Matrix frames;                  // T x D, time-major
  std::vector<double> frame_times;  // frame start offsets, seconds
  FeatureKind kind = FeatureKind::kLogMel;
  FrameSpec frame_spec;
  MelConfig mel_config;
  int sample_rate = 0;

  std::size_t size() const { return frames.rows; }
  std::size_t dim() const { return frames.cols; }
  double hop_seconds() const { return frame_spec.hop_ms / 1000.0; }
};

// mel(f) = 2595 * log10(1 + f/700)
inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Frame i covers samples [i*hop, i*hop + win); a tail shorter than one
// window is dropped. Each frame is multiplied by the taper.
inline Matrix frame_signal(const AudioClip& clip, const FrameSpec& spec) {
  spec.validate();
  const std::size_t win = spec.window_samples(clip.sample_rate);
  const std::size_t hop = spec.hop_samples(clip.sample_rate);
  const std::size_t n = clip.samples.size();
  if (win == 0 || hop == 0) throw ConfigError("frame_signal: window/hop round to zero samples");
  const std::size_t count = n >= win ? (n - win) / hop + 1 : 0;

  std::vector<double> taper(win, 1.0);
  if (spec.window_fn == WindowFn::kHann)
    for (std::size_t i = 0; i < win; ++i)
      taper[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / win);

  Matrix frames(count, win);
  for (std::size_t t = 0; t < count; ++t) {
    const double* src = clip.samples.data() + t * hop;
    double* dst = frames.row(t);
    for (std::size_t i = 0; i < win; ++i) dst[i] = src[i] * taper[i];
  }
  return frames;
}

inline std::vector<double> frame_start_times(std::size_t count, const FrameSpec& spec) {
  std::vector<double> times(count);
  for (std::size_t t = 0; t < count; ++t) times[t] = t * spec.hop_ms / 1000.0;
  return times;
}

// Entry (t, k) = |DFT_k(frame_t)|^2, frames zero-padded to n_fft.
inline Matrix power_spectrogram(const Matrix& frames, std::size_t n_fft) {
  if (frames.rows > 0 && n_fft < frames.cols)
    throw ConfigError("power_spectrogram: n_fft shorter than frame length");
  Matrix out(frames.rows, n_fft / 2 + 1);
  std::vector<std::complex<double>> buf(n_fft);
  for (std::size_t t = 0; t < frames.rows; ++t) {
    std::fill(buf.begin(), buf.end(), std::complex<double>{0.0, 0.0});
    const double* src = frames.row(t);
    for (std::size_t i = 0; i < frames.cols; ++i) buf[i] = {src[i], 0.0};
    fft_inplace(buf);
    double* dst = out.row(t);
    for (std::size_t k = 0; k < out.cols; ++k) dst[k] = std::norm(buf[k]);
  }
  return out;
}

// Triangular filters with centers equally spaced on the mel scale between
// f_min and f_max, evaluated at the FFT bin centers. Adjacent triangles
// overlap, so any bin is touched by at most two filters.
inline Matrix mel_filterbank(const MelConfig& cfg, int sample_rate) {
  const std::size_t n_bins = cfg.n_fft / 2 + 1;
  const double mel_lo = hz_to_mel(cfg.f_min);
  const double mel_hi = hz_to_mel(cfg.f_max);
  std::vector<double> edges(cfg.n_mels + 2);
  for (int m = 0; m < cfg.n_mels + 2; ++m)
    edges[m] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * m / (cfg.n_mels + 1));

  Matrix fb(cfg.n_mels, n_bins);
  const double bin_hz = static_cast<double>(sample_rate) / static_cast<double>(cfg.n_fft);
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    bool nonzero = false;
    for (std::size_t k = 0; k < n_bins; ++k) {
      const double f = k * bin_hz;
      double w = 0.0;
      if (f > lo && f < mid)
        w = (f - lo) / (mid - lo);
      else if (f >= mid && f < hi)
        w = (hi - f) / (hi - mid);
      if (w > 0.0) nonzero = true;
      fb.at(m, k) = w;
    }
    if (!nonzero)
      throw ConfigError("mel_filterbank: filter " + std::to_string(m) +
                        " covers no FFT bin; reduce n_mels or raise n_fft");
  }
  return fb;
}

inline FeatureMatrix log_mel(const Matrix& power_spec, const Matrix& filterbank,
                             double log_floor) {
  if (power_spec.rows > 0 && power_spec.cols != filterbank.cols)
    throw ShapeError("log_mel: filterbank/spectrogram bin mismatch");
  FeatureMatrix out;
  out.kind = FeatureKind::kLogMel;
  out.frames = Matrix(power_spec.rows, filterbank.rows);
  for (std::size_t t = 0; t < power_spec.rows; ++t) {
    const double* p = power_spec.row(t);
    double* dst = out.frames.row(t);
    for (std::size_t m = 0; m < filterbank.rows; ++m) {
      const double* w = filterbank.row(m);
      double acc = 0.0;
      for (std::size_t k = 0; k < filterbank.cols; ++k) acc += w[k] * p[k];
      dst[m] = std::log(std::max(acc, log_floor));
    }
  }
  return out;
}

// Orthonormal DCT-II over the mel axis, truncated to n_coeffs (c0 kept).
inline FeatureMatrix mfcc(const FeatureMatrix& log_mel_matrix, int n_coeffs) {
  if (log_mel_matrix.kind != FeatureKind::kLogMel)
    throw ShapeError("mfcc: input must be log_mel features");
  const std::size_t n_mels = log_mel_matrix.dim();
  if (static_cast<std::size_t>(n_coeffs) > n_mels)
    throw ConfigError("mfcc: n_coeffs exceeds mel band count");

  Matrix basis(n_coeffs, n_mels);
  for (int k = 0; k < n_coeffs; ++k) {
    const double scale = k == 0 ? std::sqrt(1.0 / n_mels) : std::sqrt(2.0 / n_mels);
    for (std::size_t n = 0; n < n_mels; ++n)
      basis.at(k, n) = scale * std::cos(M_PI * (n + 0.5) * k / n_mels);
  }

  FeatureMatrix out = log_mel_matrix;
  out.kind = FeatureKind::kMfcc;
  out.frames = Matrix(log_mel_matrix.size(), n_coeffs);
  for (std::size_t t = 0; t < log_mel_matrix.size(); ++t) {
    const double* src = log_mel_matrix.frames.row(t);
    double* dst = out.frames.row(t);
    for (int k = 0; k < n_coeffs; ++k) {
      const double* b = basis.row(k);
      double acc = 0.0;
      for (std::size_t n = 0; n < n_mels; ++n) acc += b[n] * src[n];
      dst[k] = acc;
    }
  }
  return out;
}

// Sliding stack of consecutive log-mel frames for the neural models:
// 12 frames x 20 ms hop = 240 ms per window, stride one frame.
struct WindowSet {
  std::size_t count = 0;
  std::size_t frames_per_window = 0;
  std::size_t bins = 0;
  std::vector<double> data;          // count x (frames_per_window * bins), row-major
  std::vector<double> start_times;   // seconds
  std::vector<double> center_times;  // seconds

  const double* window(std::size_t i) const { return data.data() + i * frames_per_window * bins; }
};

inline WindowSet nn_windows(const FeatureMatrix& log_mel_matrix, std::size_t frames_per_window) {
  if (log_mel_matrix.kind != FeatureKind::kLogMel)
    throw ShapeError("nn_windows: input must be log_mel features");
  WindowSet out;
  out.frames_per_window = frames_per_window;
  out.bins = log_mel_matrix.dim();
  const std::size_t T = log_mel_matrix.size();
  if (T < frames_per_window) return out;  // empty set, not an error

  const double hop_s = log_mel_matrix.hop_seconds();
  const double span_s = static_cast<double>(frames_per_window) * hop_s;
  out.count = T - frames_per_window + 1;
  out.data.resize(out.count * frames_per_window * out.bins);
  out.start_times.resize(out.count);
  out.center_times.resize(out.count);
  for (std::size_t i = 0; i < out.count; ++i) {
    std::copy(log_mel_matrix.frames.row(i),
              log_mel_matrix.frames.row(i) + frames_per_window * out.bins,
              out.data.begin() + i * frames_per_window * out.bins);
    out.start_times[i] = log_mel_matrix.frame_times.empty() ? i * hop_s
                                                            : log_mel_matrix.frame_times[i];
    out.center_times[i] = out.start_times[i] + span_s / 2.0;
  }
  return out;
}

// Convenience bundle: one pass from audio to both feature views with a
// cached filterbank.
struct FeatureExtractor {
  FrameSpec frame_spec;
  MelConfig mel_config;
  int n_mfcc = 20;
  int sample_rate = 24000;
  Matrix filterbank;

  FeatureExtractor() = default;
  FeatureExtractor(const FrameSpec& fs, const MelConfig& mc, int n_coeffs, int rate)
      : frame_spec(fs), mel_config(mc), n_mfcc(n_coeffs), sample_rate(rate) {
    frame_spec.validate();
    mel_config.validate(sample_rate, frame_spec.window_samples(sample_rate));
    filterbank = mel_filterbank(mel_config, sample_rate);
  }

  FeatureMatrix extract_log_mel(const AudioClip& clip) const {
    if (clip.sample_rate != sample_rate)
      throw ConfigError("FeatureExtractor: clip rate " + std::to_string(clip.sample_rate) +
                        " != configured rate " + std::to_string(sample_rate) +
                        "; resample first");
    Matrix frames = frame_signal(clip, frame_spec);
    Matrix power = power_spectrogram(frames, mel_config.n_fft);
    FeatureMatrix lm = log_mel(power, filterbank, mel_config.log_floor);
    lm.frame_times = frame_start_times(lm.size(), frame_spec);
    lm.frame_spec = frame_spec;
    lm.mel_config = mel_config;
    lm.sample_rate = sample_rate;
    return lm;
  }

  FeatureMatrix extract_mfcc(const FeatureMatrix& lm) const { return mfcc(lm, n_mfcc); }

  FeatureMatrix extract_mfcc(const AudioClip& clip) const {
    return extract_mfcc(extract_log_mel(clip));
  }
};

// --- serialization -------------------------------------------------------

inline constexpr char kFeatureMagic[8] = {'D', 'G', 'F', 'E', 'A', 'T', '0', '\0'};
inline constexpr std::uint32_t kFeatureVersion = 1;

inline void save_features(const FeatureMatrix& fm, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os.write(kFeatureMagic, 8);
  detail::write_le<std::uint32_t>(os, kFeatureVersion);
  detail::write_le<std::uint8_t>(os, fm.kind == FeatureKind::kMfcc ? 0 : 1);
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(fm.sample_rate));
  detail::write_le<double>(os, fm.frame_spec.window_ms);
  detail::write_le<double>(os, fm.frame_spec.hop_ms);
  detail::write_le<std::uint64_t>(os, fm.frames.rows);
  detail::write_le<std::uint64_t>(os, fm.frames.cols);
  for (double v : fm.frames.data) detail::write_le<double>(os, v);
  detail::write_f64_vec(os, fm.frame_times);
  if (!os) throw IoError("write failed: " + path);
}

inline FeatureMatrix load_features(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kFeatureMagic, 8) != 0)
    throw DecodeError(path + ": not a feature container");
  const auto version = detail::read_le<std::uint32_t>(is);
  if (version != kFeatureVersion)
    throw DecodeError(path + ": unsupported feature container version " +
                      std::to_string(version));
  FeatureMatrix fm;
  fm.kind = detail::read_le<std::uint8_t>(is) == 0 ? FeatureKind::kMfcc : FeatureKind::kLogMel;
  fm.sample_rate = static_cast<int>(detail::read_le<std::uint32_t>(is));
  fm.frame_spec.window_ms = detail::read_le<double>(is);
  fm.frame_spec.hop_ms = detail::read_le<double>(is);
  const auto rows = detail::read_le<std::uint64_t>(is);
  const auto cols = detail::read_le<std::uint64_t>(is);
  fm.frames = Matrix(rows, cols);
  for (double& v : fm.frames.data) v = detail::read_le<double>(is);
  fm.frame_times = detail::read_f64_vec(is);
  return fm;
}

inline void dump_features_csv(const FeatureMatrix& fm, std::ostream& os) {
  os << "frame_time_s";
  for (std::size_t d = 0; d < fm.dim(); ++d)
    os << ',' << feature_kind_name(fm.kind) << '_' << d;
  os << '\n';
  os.precision(9);
  for (std::size_t t = 0; t < fm.size(); ++t) {
    os << (t < fm.frame_times.size() ? fm.frame_times[t] : 0.0);
    const double* row = fm.frames.row(t);
    for (std::size_t d = 0; d < fm.dim(); ++d) os << ',' << row[d];
    os << '\n';
  }
}

}  // namespace droneguard
