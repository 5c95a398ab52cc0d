#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "droneguard/features.hpp"
#include "droneguard/synth.hpp"
#include "oracles.hpp"

using namespace droneguard;

namespace {

AudioClip clip_of(std::size_t n_samples, int rate = 24000, double value = 0.0) {
  AudioClip c;
  c.sample_rate = rate;
  c.samples.assign(n_samples, value);
  return c;
}

FeatureMatrix make_log_mel(const Matrix& frames, double hop_ms = 20.0) {
  FeatureMatrix fm;
  fm.kind = FeatureKind::kLogMel;
  fm.frames = frames;
  fm.frame_spec.hop_ms = hop_ms;
  fm.frame_times = frame_start_times(frames.rows, fm.frame_spec);
  return fm;
}

}  // namespace

TEST_CASE("frame counts match the counting oracle") {
  FrameSpec spec;  // 40 ms / 20 ms
  CHECK(frame_signal(clip_of(24000), spec).rows == 49);
  CHECK(frame_signal(clip_of(960), spec).rows == 1);   // exactly one window
  CHECK(frame_signal(clip_of(5760), spec).rows == 11); // 240 ms clip
  CHECK(frame_signal(clip_of(959), spec).rows == 0);   // shorter than a window

  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t win = 2 + rng() % 200;
    const std::size_t hop = 1 + rng() % win;
    const std::size_t len = win + rng() % 5000;
    const std::size_t expected = oracle::count_frames(len, win, hop);
    const std::size_t formula = len >= win ? (len - win) / hop + 1 : 0;
    REQUIRE(formula == expected);
  }
}

TEST_CASE("framing covers [i*hop, i*hop+win) with the taper applied") {
  AudioClip ramp = clip_of(2400);
  for (std::size_t i = 0; i < ramp.samples.size(); ++i) ramp.samples[i] = static_cast<double>(i);
  FrameSpec rect{40.0, 20.0, WindowFn::kRect};
  const Matrix frames = frame_signal(ramp, rect);
  REQUIRE(frames.rows == 4);
  CHECK(frames.at(0, 0) == 0.0);
  CHECK(frames.at(1, 0) == 480.0);
  CHECK(frames.at(3, 959) == 3.0 * 480.0 + 959.0);
}

TEST_CASE("power spectrogram basics") {
  Matrix zero(1, 64);
  const Matrix zero_ps = power_spectrogram(zero, 64);
  for (double v : zero_ps.data) CHECK(v == 0.0);

  Matrix impulse(1, 64);
  impulse.at(0, 0) = 1.0;
  const Matrix ps = power_spectrogram(impulse, 64);
  for (std::size_t k = 0; k < ps.cols; ++k) CHECK(ps.at(0, k) == Catch::Approx(1.0));
}

TEST_CASE("1500 Hz sine lands in bin 128 (naive DFT oracle)") {
  const AudioClip tone = synth_sine(1500.0, 0.1, 24000, 0.8);
  FrameSpec rect{40.0, 20.0, WindowFn::kRect};
  const Matrix frames = frame_signal(tone, rect);
  const Matrix ps = power_spectrogram(frames, 2048);

  std::size_t max_bin = 0;
  for (std::size_t k = 1; k < ps.cols; ++k)
    if (ps.at(0, k) > ps.at(0, max_bin)) max_bin = k;
  CHECK(max_bin == 128);

  std::vector<double> frame0(frames.row(0), frames.row(0) + frames.cols);
  CHECK(oracle::dft_peak_bin(frame0, 2048) == 128);

  const auto naive = oracle::naive_dft_power(frame0, 2048);
  for (std::size_t k = 0; k < ps.cols; k += 37)
    REQUIRE(ps.at(0, k) == Catch::Approx(naive[k]).margin(1e-6));
}

TEST_CASE("parseval holds for rectangular windows") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> dist(0.0, 0.3);
  Matrix frames(1, 256);
  for (auto& v : frames.data) v = dist(rng);
  const std::size_t n_fft = 256;
  const Matrix ps = power_spectrogram(frames, n_fft);
  double energy = 0.0;
  for (double v : frames.data) energy += v * v;
  double spectral = ps.at(0, 0) + ps.at(0, n_fft / 2);
  for (std::size_t k = 1; k < n_fft / 2; ++k) spectral += 2.0 * ps.at(0, k);
  spectral /= static_cast<double>(n_fft);
  CHECK(spectral == Catch::Approx(energy).epsilon(1e-6));
}

TEST_CASE("mel scale formula") {
  CHECK(hz_to_mel(0.0) == 0.0);
  CHECK(hz_to_mel(1000.0) == Catch::Approx(999.99).margin(0.005));
  CHECK(mel_to_hz(hz_to_mel(432.5)) == Catch::Approx(432.5).margin(1e-9));
}

TEST_CASE("filterbank coverage for the 0-1500 Hz config") {
  MelConfig cfg;  // 40 mels, 0..1500, n_fft 2048
  const Matrix fb = mel_filterbank(cfg, 24000);
  REQUIRE(fb.rows == 40);
  REQUIRE(fb.cols == 1025);

  for (std::size_t m = 0; m < fb.rows; ++m) {
    double row_sum = 0.0;
    for (std::size_t k = 0; k < fb.cols; ++k) {
      CHECK(fb.at(m, k) >= 0.0);
      row_sum += fb.at(m, k);
    }
    REQUIRE(row_sum > 0.0);
  }
  // Exhaustive scan: any bin is covered by at most two filters.
  for (std::size_t k = 0; k < fb.cols; ++k) {
    int covering = 0;
    for (std::size_t m = 0; m < fb.rows; ++m) covering += fb.at(m, k) > 0.0;
    REQUIRE(covering <= 2);
  }
}

TEST_CASE("too many mels for the bin resolution names the empty filter") {
  MelConfig cfg;
  cfg.n_mels = 300;
  cfg.f_max = 400.0;
  CHECK_THROWS_AS(mel_filterbank(cfg, 24000), ConfigError);
  CHECK_THROWS_WITH(mel_filterbank(cfg, 24000), Catch::Matchers::ContainsSubstring("filter 0"));
}

TEST_CASE("log mel floor and log-homomorphism") {
  MelConfig cfg;
  const Matrix fb = mel_filterbank(cfg, 24000);
  Matrix power(1, fb.cols);
  const FeatureMatrix silent = log_mel(power, fb, 1e-10);
  for (double v : silent.frames.data) CHECK(v == Catch::Approx(std::log(1e-10)));

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> dist(0.1, 2.0);
  for (auto& v : power.data) v = dist(rng);
  const FeatureMatrix base = log_mel(power, fb, 1e-10);
  Matrix doubled = power;
  for (auto& v : doubled.data) v *= 2.0;
  const FeatureMatrix shifted = log_mel(doubled, fb, 1e-10);
  for (std::size_t i = 0; i < base.frames.data.size(); ++i)
    REQUIRE(shifted.frames.data[i] - base.frames.data[i] == Catch::Approx(std::log(2.0)));

  // white-ish frame: entries finite and within [log(floor), log(total power)]
  double total = 0.0;
  for (double v : power.data) total += v;
  for (double v : base.frames.data) {
    REQUIRE(std::isfinite(v));
    REQUIRE(v >= std::log(1e-10));
    REQUIRE(v <= std::log(total));
  }
}

TEST_CASE("mfcc of a constant row is c*sqrt(40) then zeros") {
  Matrix lm(1, 40);
  for (auto& v : lm.data) v = 1.7;
  const FeatureMatrix mf = mfcc(make_log_mel(lm), 20);
  REQUIRE(mf.dim() == 20);
  CHECK(mf.frames.at(0, 0) == Catch::Approx(1.7 * std::sqrt(40.0)));
  for (std::size_t k = 1; k < 20; ++k) CHECK(mf.frames.at(0, k) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("full-length dct is invertible (inverse-DCT oracle)") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix lm(3, 40);
  for (auto& v : lm.data) v = dist(rng);
  const FeatureMatrix mf = mfcc(make_log_mel(lm), 40);
  for (std::size_t t = 0; t < 3; ++t) {
    std::vector<double> coeffs(mf.frames.row(t), mf.frames.row(t) + 40);
    const auto rebuilt = oracle::inverse_dct(coeffs);
    for (std::size_t n = 0; n < 40; ++n)
      REQUIRE(rebuilt[n] == Catch::Approx(lm.at(t, n)).margin(1e-9));
  }
}

TEST_CASE("global gain moves only coefficient zero") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> dist(0.5, 1.5);
  Matrix lm(1, 40);
  for (auto& v : lm.data) v = dist(rng);
  const double gain = 3.7;  // power gain g shifts every log-mel by log g
  Matrix lm_gained = lm;
  for (auto& v : lm_gained.data) v += std::log(gain);
  const FeatureMatrix a = mfcc(make_log_mel(lm), 20);
  const FeatureMatrix b = mfcc(make_log_mel(lm_gained), 20);
  CHECK(b.frames.at(0, 0) - a.frames.at(0, 0) ==
        Catch::Approx(std::sqrt(40.0) * std::log(gain)));
  for (std::size_t k = 1; k < 20; ++k)
    CHECK(b.frames.at(0, k) == Catch::Approx(a.frames.at(0, k)).margin(1e-9));
}

TEST_CASE("dct basis is orthonormal") {
  // B * B^T = identity within 1e-10, using the full 40x40 basis.
  Matrix eye_in(40, 40);
  for (int i = 0; i < 40; ++i) eye_in.at(i, i) = 1.0;
  const FeatureMatrix basis_rows = mfcc(make_log_mel(eye_in), 40);
  // basis_rows[t][k] = B[k][t]; check dot products of basis rows.
  for (int k1 = 0; k1 < 40; ++k1) {
    for (int k2 = 0; k2 < 40; ++k2) {
      double dot = 0.0;
      for (int t = 0; t < 40; ++t) dot += basis_rows.frames.at(t, k1) * basis_rows.frames.at(t, k2);
      REQUIRE(dot == Catch::Approx(k1 == k2 ? 1.0 : 0.0).margin(1e-10));
    }
  }
}

TEST_CASE("nn windows: counts, shape, times") {
  FrameSpec spec;
  MelConfig mel;
  FeatureExtractor fx(spec, mel, 20, 24000);

  const AudioClip one_second = synth_background(1.0, 24000, 4);
  const FeatureMatrix lm = fx.extract_log_mel(one_second);
  REQUIRE(lm.size() == 49);
  const WindowSet ws = nn_windows(lm, 12);
  CHECK(ws.count == 38);
  CHECK(ws.frames_per_window == 12);
  CHECK(ws.bins == 40);
  CHECK(ws.center_times[0] == Catch::Approx(0.12));  // 240 ms window centered at 120 ms

  FeatureMatrix exact = lm;
  exact.frames.rows = 12;
  exact.frames.data.resize(12 * 40);
  exact.frame_times.resize(12);
  CHECK(nn_windows(exact, 12).count == 1);

  FeatureMatrix eleven = lm;
  eleven.frames.rows = 11;
  eleven.frames.data.resize(11 * 40);
  eleven.frame_times.resize(11);
  CHECK(nn_windows(eleven, 12).count == 0);
}

TEST_CASE("pipeline determinism: identical clip and config give identical features") {
  const AudioClip clip = synth_drone(0.6, 24000, 99);
  FeatureExtractor fx(FrameSpec{}, MelConfig{}, 20, 24000);
  const FeatureMatrix a = fx.extract_log_mel(clip);
  const FeatureMatrix b = fx.extract_log_mel(clip);
  REQUIRE(a.frames.data == b.frames.data);
  const FeatureMatrix ma = fx.extract_mfcc(a);
  const FeatureMatrix mb = fx.extract_mfcc(b);
  REQUIRE(ma.frames.data == mb.frames.data);
}

TEST_CASE("feature container roundtrip and csv dump") {
  const AudioClip clip = synth_background(0.3, 24000, 12);
  FeatureExtractor fx(FrameSpec{}, MelConfig{}, 20, 24000);
  const FeatureMatrix mf = fx.extract_mfcc(clip);

  const auto path = std::filesystem::temp_directory_path() / "droneguard_feat.bin";
  save_features(mf, path.string());
  const FeatureMatrix back = load_features(path.string());
  CHECK(back.kind == FeatureKind::kMfcc);
  CHECK(back.frames.rows == mf.frames.rows);
  CHECK(back.frames.data == mf.frames.data);
  CHECK(back.frame_times == mf.frame_times);

  std::ostringstream csv;
  dump_features_csv(back, csv);
  CHECK(csv.str().rfind("frame_time_s,mfcc_0", 0) == 0);
}
