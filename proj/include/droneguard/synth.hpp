// Deterministic signal generators: filtered-noise backgrounds and harmonic
// "rotor" stacks standing in for field recordings, plus plain test tones.
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

#include "droneguard/audio.hpp"

namespace droneguard {

inline AudioClip synth_sine(double freq_hz, double duration_s, int sample_rate,
                            double amplitude = 0.5) {
  AudioClip clip;
  clip.sample_rate = sample_rate;
  clip.source_id = "sine_" + std::to_string(static_cast<int>(freq_hz));
  const std::size_t n = static_cast<std::size_t>(std::lround(duration_s * sample_rate));
  clip.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    clip.samples[i] = amplitude * std::sin(2.0 * M_PI * freq_hz * i / sample_rate);
  return clip;
}

// Gaussian noise through a one-pole lowpass, peak-normalized. Cutoff varies
// per seed so a corpus of backgrounds spans different spectral tilts.
inline AudioClip synth_background(double duration_s, int sample_rate, std::uint64_t seed,
                                  double peak = 0.6) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> cutoff_dist(800.0, 4000.0);
  const double cutoff = cutoff_dist(rng);
  const double alpha = 1.0 - std::exp(-2.0 * M_PI * cutoff / sample_rate);

  AudioClip clip;
  clip.sample_rate = sample_rate;
  clip.source_id = "bg_" + std::to_string(seed);
  const std::size_t n = static_cast<std::size_t>(std::lround(duration_s * sample_rate));
  clip.samples.resize(n);
  double y = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    y += alpha * (noise(rng) - y);
    clip.samples[i] = y;
  }
  const double m = clip.max_abs();
  if (m > 0.0)
    for (double& s : clip.samples) s *= peak / m;
  return clip;
}

// Harmonic stack with a low fundamental (80-400 Hz) and 1/h rolloff capped
// at harmonic_limit_hz, with mild amplitude modulation. Mimics the
// low-frequency rotor harmonics a drone leaves on a spectrogram.
inline AudioClip synth_drone(double duration_s, int sample_rate, std::uint64_t seed,
                             double peak = 0.5, double harmonic_limit_hz = 1500.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> f0_dist(80.0, 400.0);
  std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * M_PI);
  std::uniform_real_distribution<double> am_rate_dist(2.0, 6.0);
  const double f0 = f0_dist(rng);
  const int n_harm = std::max(1, static_cast<int>(harmonic_limit_hz / f0));
  std::vector<double> phases(n_harm);
  for (double& p : phases) p = phase_dist(rng);
  const double am_rate = am_rate_dist(rng);

  AudioClip clip;
  clip.sample_rate = sample_rate;
  clip.source_id = "drone_" + std::to_string(seed);
  const std::size_t n = static_cast<std::size_t>(std::lround(duration_s * sample_rate));
  clip.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    double s = 0.0;
    for (int h = 1; h <= n_harm; ++h)
      s += std::sin(2.0 * M_PI * h * f0 * t + phases[h - 1]) / h;
    clip.samples[i] = s * (1.0 + 0.15 * std::sin(2.0 * M_PI * am_rate * t));
  }
  const double m = clip.max_abs();
  if (m > 0.0)
    for (double& s : clip.samples) s *= peak / m;
  return clip;
}

inline AudioClip synth_uniform_noise(double duration_s, int sample_rate, std::uint64_t seed,
                                     double amplitude = 0.999) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-amplitude, amplitude);
  AudioClip clip;
  clip.sample_rate = sample_rate;
  clip.source_id = "noise_" + std::to_string(seed);
  const std::size_t n = static_cast<std::size_t>(std::lround(duration_s * sample_rate));
  clip.samples.resize(n);
  for (double& s : clip.samples) s = dist(rng);
  return clip;
}

}  // namespace droneguard
