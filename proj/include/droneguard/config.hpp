// Effective run configuration: one flat key=value file (units spelled out
// in the key names), CLI overrides on top, and a canonical echo string
// whose FNV-1a hash is embedded in every output artifact.
#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "droneguard/augment.hpp"
#include "droneguard/common.hpp"
#include "droneguard/features.hpp"
#include "droneguard/gmm.hpp"
#include "droneguard/nn/train.hpp"

namespace droneguard {

struct RunConfig {
  // audio / framing
  int sample_rate_hz = 24000;  // canonical internal rate (12 kHz Nyquist)
  double window_ms = 40.0;
  double hop_ms = 20.0;
  std::string window_fn = "hann";
  // spectral
  int n_fft = 2048;
  int n_mels = 40;
  double fmin_hz = 0.0;
  double fmax_hz = 1500.0;
  double log_floor = 1e-10;
  int n_mfcc = 20;
  int frames_per_window = 12;  // 12 x 20 ms hop = 240 ms per network input
  // augmentation
  double peak_margin = 1.05;
  std::string label_positive = "drone";
  std::string label_negative = "background";
  std::string margin_mode = "peak";
  // gmm
  int gmm_components = 13;
  int gmm_smoothing_frames = 5;
  int gmm_aggregation_frames = 1;
  double gmm_theta = 0.0;
  int gmm_restarts = 10;
  int gmm_max_iterations = 200;
  bool gmm_calibrate = true;
  // neural training
  double cnn_learning_rate = 0.001;
  int cnn_batch_size = 128;
  double rnn_learning_rate = 0.0005;
  int rnn_batch_size = 64;
  int rnn_hidden = 300;
  int rnn_layers = 3;
  bool rnn_mean_pool = false;
  std::string optimizer = "adam";
  int patience_epochs = 3;
  int max_epochs = 50;
  int train_window_stride = 1;
  double val_split = 0.2;
  // inference / evaluation
  std::string inference_precision = "float32";
  int eval_reps = 10;
  int bench_reps = 5;
  std::uint64_t seed = 0;

  void set(const std::string& key, const std::string& value) {
    auto as_int = [&] { return std::stoi(value); };
    auto as_double = [&] { return std::stod(value); };
    auto as_bool = [&] {
      if (value == "1" || value == "true") return true;
      if (value == "0" || value == "false") return false;
      throw ConfigError("config: boolean key " + key + " got '" + value + "'");
    };
    try {
      if (key == "sample_rate_hz") sample_rate_hz = as_int();
      else if (key == "window_ms") window_ms = as_double();
      else if (key == "hop_ms") hop_ms = as_double();
      else if (key == "window_fn") window_fn = value;
      else if (key == "n_fft") n_fft = as_int();
      else if (key == "n_mels") n_mels = as_int();
      else if (key == "fmin_hz") fmin_hz = as_double();
      else if (key == "fmax_hz") fmax_hz = as_double();
      else if (key == "log_floor") log_floor = as_double();
      else if (key == "n_mfcc") n_mfcc = as_int();
      else if (key == "frames_per_window") frames_per_window = as_int();
      else if (key == "peak_margin") peak_margin = as_double();
      else if (key == "label_positive") label_positive = value;
      else if (key == "label_negative") label_negative = value;
      else if (key == "margin_mode") margin_mode = value;
      else if (key == "gmm_components") gmm_components = as_int();
      else if (key == "gmm_smoothing_frames") gmm_smoothing_frames = as_int();
      else if (key == "gmm_aggregation_frames") gmm_aggregation_frames = as_int();
      else if (key == "gmm_theta") gmm_theta = as_double();
      else if (key == "gmm_restarts") gmm_restarts = as_int();
      else if (key == "gmm_max_iterations") gmm_max_iterations = as_int();
      else if (key == "gmm_calibrate") gmm_calibrate = as_bool();
      else if (key == "cnn_learning_rate") cnn_learning_rate = as_double();
      else if (key == "cnn_batch_size") cnn_batch_size = as_int();
      else if (key == "rnn_learning_rate") rnn_learning_rate = as_double();
      else if (key == "rnn_batch_size") rnn_batch_size = as_int();
      else if (key == "rnn_hidden") rnn_hidden = as_int();
      else if (key == "rnn_layers") rnn_layers = as_int();
      else if (key == "rnn_mean_pool") rnn_mean_pool = as_bool();
      else if (key == "optimizer") optimizer = value;
      else if (key == "patience_epochs") patience_epochs = as_int();
      else if (key == "max_epochs") max_epochs = as_int();
      else if (key == "train_window_stride") train_window_stride = as_int();
      else if (key == "val_split") val_split = as_double();
      else if (key == "inference_precision") inference_precision = value;
      else if (key == "eval_reps") eval_reps = as_int();
      else if (key == "bench_reps") bench_reps = as_int();
      else if (key == "seed") seed = std::stoull(value);
      else throw ConfigError("config: unknown key '" + key + "'");
    } catch (const std::invalid_argument&) {
      throw ConfigError("config: key " + key + " got unparseable value '" + value + "'");
    } catch (const std::out_of_range&) {
      throw ConfigError("config: key " + key + " value out of range: '" + value + "'");
    }
  }

  void load_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config file " + path);
    parse_stream(is, path);
  }

  void load_string(const std::string& text) {
    std::istringstream is(text);
    parse_stream(is, "<config echo>");
  }

  void parse_stream(std::istream& is, const std::string& path) {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos) continue;
      const auto last = line.find_last_not_of(" \t\r");
      line = line.substr(first, last - first + 1);
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError(path + ':' + std::to_string(lineno) + ": expected key=value");
      auto strip = [](std::string s) {
        const auto b = s.find_first_not_of(" \t");
        const auto e = s.find_last_not_of(" \t");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
      };
      set(strip(line.substr(0, eq)), strip(line.substr(eq + 1)));
    }
  }

  void validate() const {
    if (sample_rate_hz <= 0) throw ConfigError("config: sample_rate_hz must be positive");
    frame_spec().validate();
    mel_config().validate(sample_rate_hz, frame_spec().window_samples(sample_rate_hz));
    if (n_mfcc < 1 || n_mfcc > n_mels)
      throw ConfigError("config: need 1 <= n_mfcc <= n_mels");
    if (frames_per_window < 1) throw ConfigError("config: frames_per_window must be >= 1");
    if (!(peak_margin > 1.0)) throw ConfigError("config: peak_margin must exceed 1");
    if (margin_mode != "peak" && margin_mode != "rms")
      throw ConfigError("config: margin_mode must be peak or rms");
    if (gmm_components < 1) throw ConfigError("config: gmm_components must be >= 1");
    if (gmm_smoothing_frames < 1 || gmm_smoothing_frames % 2 == 0)
      throw ConfigError("config: gmm_smoothing_frames must be odd and >= 1");
    if (gmm_aggregation_frames < 1)
      throw ConfigError("config: gmm_aggregation_frames must be >= 1");
    if (gmm_restarts < 1 || gmm_max_iterations < 1)
      throw ConfigError("config: gmm_restarts and gmm_max_iterations must be >= 1");
    if (rnn_hidden < 1 || rnn_layers < 1)
      throw ConfigError("config: rnn_hidden and rnn_layers must be >= 1");
    if (!(val_split > 0.0 && val_split < 1.0))
      throw ConfigError("config: val_split must lie in (0, 1)");
    if (train_window_stride < 1) throw ConfigError("config: train_window_stride must be >= 1");
    if (inference_precision != "float32" && inference_precision != "float64")
      throw ConfigError("config: inference_precision must be float32 or float64");
    if (eval_reps < 1 || bench_reps < 1)
      throw ConfigError("config: eval_reps and bench_reps must be >= 1");
    cnn_train_config().validate();
    rnn_train_config().validate();
    window_fn_from_name(window_fn);
  }

  FrameSpec frame_spec() const { return {window_ms, hop_ms, window_fn_from_name(window_fn)}; }

  MelConfig mel_config() const {
    return {n_mels, fmin_hz, fmax_hz, static_cast<std::size_t>(n_fft), log_floor};
  }

  FeatureExtractor feature_extractor() const {
    return FeatureExtractor(frame_spec(), mel_config(), n_mfcc, sample_rate_hz);
  }

  AugmentSpec augment_spec() const {
    return {peak_margin, label_positive, label_negative, seed,
            margin_mode == "peak" ? MarginMode::kPeak : MarginMode::kRms};
  }

  nn::TrainConfig cnn_train_config() const {
    return {cnn_learning_rate, cnn_batch_size, patience_epochs, max_epochs, seed, optimizer};
  }

  nn::TrainConfig rnn_train_config() const {
    return {rnn_learning_rate, rnn_batch_size, patience_epochs, max_epochs, seed, optimizer};
  }

  // Canonical echo: fixed key order, fixed float formatting; hashed into
  // artifacts so byte-identical reruns are checkable.
  std::string canonical() const {
    std::ostringstream os;
    os.precision(17);
    os << "bench_reps=" << bench_reps << '\n'
       << "cnn_batch_size=" << cnn_batch_size << '\n'
       << "cnn_learning_rate=" << cnn_learning_rate << '\n'
       << "eval_reps=" << eval_reps << '\n'
       << "fmax_hz=" << fmax_hz << '\n'
       << "fmin_hz=" << fmin_hz << '\n'
       << "frames_per_window=" << frames_per_window << '\n'
       << "gmm_aggregation_frames=" << gmm_aggregation_frames << '\n'
       << "gmm_calibrate=" << (gmm_calibrate ? 1 : 0) << '\n'
       << "gmm_components=" << gmm_components << '\n'
       << "gmm_max_iterations=" << gmm_max_iterations << '\n'
       << "gmm_restarts=" << gmm_restarts << '\n'
       << "gmm_smoothing_frames=" << gmm_smoothing_frames << '\n'
       << "gmm_theta=" << gmm_theta << '\n'
       << "hop_ms=" << hop_ms << '\n'
       << "inference_precision=" << inference_precision << '\n'
       << "label_negative=" << label_negative << '\n'
       << "label_positive=" << label_positive << '\n'
       << "log_floor=" << log_floor << '\n'
       << "margin_mode=" << margin_mode << '\n'
       << "max_epochs=" << max_epochs << '\n'
       << "n_fft=" << n_fft << '\n'
       << "n_mels=" << n_mels << '\n'
       << "n_mfcc=" << n_mfcc << '\n'
       << "optimizer=" << optimizer << '\n'
       << "patience_epochs=" << patience_epochs << '\n'
       << "peak_margin=" << peak_margin << '\n'
       << "rnn_batch_size=" << rnn_batch_size << '\n'
       << "rnn_hidden=" << rnn_hidden << '\n'
       << "rnn_layers=" << rnn_layers << '\n'
       << "rnn_learning_rate=" << rnn_learning_rate << '\n'
       << "rnn_mean_pool=" << (rnn_mean_pool ? 1 : 0) << '\n'
       << "sample_rate_hz=" << sample_rate_hz << '\n'
       << "seed=" << seed << '\n'
       << "train_window_stride=" << train_window_stride << '\n'
       << "val_split=" << val_split << '\n'
       << "window_fn=" << window_fn << '\n'
       << "window_ms=" << window_ms << '\n';
    return os.str();
  }

  std::string hash_hex() const { return to_hex(fnv1a64(canonical())); }
};

}  // namespace droneguard
