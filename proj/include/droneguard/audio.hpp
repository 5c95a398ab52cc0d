// Mono PCM audio: WAV decode/encode and sample-rate conversion.
//
// Read accepts RIFF/WAVE little-endian, PCM 16-bit or IEEE-float 32-bit,
// 1 or 2 channels (stereo is downmixed by channel mean). Write emits
// 16-bit PCM mono. Decoded samples live in [-1, 1]; float input outside
// that range is clipped and counted, never wrapped.
//
// Resampling is direct windowed-sinc interpolation (Blackman window,
// per-output-phase kernel normalization). Equal-rate calls return the
// input bitwise.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "droneguard/common.hpp"

namespace droneguard {

struct AudioClip {
  std::vector<double> samples;  // mono, [-1, 1]
  int sample_rate = 0;          // Hz
  std::string source_id;
  // Count of float-input samples clipped on decode; nonzero values are
  // surfaced as a warning by callers.
  std::int64_t clipped_on_decode = 0;

  double duration_seconds() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
  double max_abs() const {
    double m = 0.0;
    for (double s : samples) m = std::max(m, std::fabs(s));
    return m;
  }
};

namespace wav_detail {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

inline std::uint32_t read_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
         std::uint32_t(p[3]) << 24;
}
inline std::uint16_t read_u16(const unsigned char* p) {
  return std::uint16_t(p[0] | p[1] << 8);
}

}  // namespace wav_detail

inline AudioClip read_wav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  std::vector<unsigned char> raw((std::istreambuf_iterator<char>(is)),
                                 std::istreambuf_iterator<char>());

  using namespace wav_detail;
  auto fail = [&](std::size_t offset, const std::string& what) {
    throw DecodeError(path + ": malformed WAV at byte " + std::to_string(offset) + ": " + what);
  };
  if (raw.size() < 12) fail(0, "file shorter than RIFF header");
  if (std::memcmp(raw.data(), "RIFF", 4) != 0) fail(0, "missing RIFF tag");
  if (std::memcmp(raw.data() + 8, "WAVE", 4) != 0) fail(8, "missing WAVE tag");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= raw.size()) {
    const unsigned char* chunk = raw.data() + pos;
    std::uint32_t chunk_len = read_u32(chunk + 4);
    std::size_t body = pos + 8;
    if (body + chunk_len > raw.size()) {
      // Tolerate a final data chunk truncated by a sloppy writer only if
      // the declared length overruns; anything else is malformed.
      if (std::memcmp(chunk, "data", 4) != 0) fail(pos, "chunk overruns file");
      chunk_len = static_cast<std::uint32_t>(raw.size() - body);
    }
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (chunk_len < 16) fail(pos, "fmt chunk too short");
      format = read_u16(chunk + 8);
      channels = read_u16(chunk + 10);
      rate = read_u32(chunk + 12);
      bits = read_u16(chunk + 22);
      if (format == kFormatExtensible) {
        if (chunk_len < 40) fail(pos, "extensible fmt chunk too short");
        format = read_u16(chunk + 8 + 24);  // first two bytes of SubFormat GUID
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      data_len = chunk_len;
    }
    pos = body + chunk_len + (chunk_len & 1);  // chunks are word-aligned
  }
  if (!have_fmt) fail(raw.size(), "no fmt chunk");
  if (data == nullptr) fail(raw.size(), "no data chunk");
  if (rate == 0) fail(0, "zero sample rate");
  if (channels != 1 && channels != 2)
    throw UnsupportedFormatError(path + ": " + std::to_string(channels) +
                                 " channels; supported: 1 or 2");
  const bool pcm16 = format == kFormatPcm && bits == 16;
  const bool f32 = format == kFormatFloat && bits == 32;
  if (!pcm16 && !f32)
    throw UnsupportedFormatError(path + ": format tag " + std::to_string(format) + " at " +
                                 std::to_string(bits) +
                                 " bits; supported: PCM 16-bit, IEEE-float 32-bit");

  const std::size_t bytes_per_sample = pcm16 ? 2 : 4;
  const std::size_t frame_bytes = bytes_per_sample * channels;
  const std::size_t n_frames = data_len / frame_bytes;

  AudioClip clip;
  clip.sample_rate = static_cast<int>(rate);
  clip.source_id = std::filesystem::path(path).stem().string();
  clip.samples.resize(n_frames);
  for (std::size_t i = 0; i < n_frames; ++i) {
    double acc = 0.0;
    for (unsigned ch = 0; ch < channels; ++ch) {
      const unsigned char* p = data + i * frame_bytes + ch * bytes_per_sample;
      if (pcm16) {
        std::int16_t v = static_cast<std::int16_t>(read_u16(p));
        acc += v / 32768.0;
      } else {
        std::uint32_t u = read_u32(p);
        float f;
        std::memcpy(&f, &u, 4);
        double d = static_cast<double>(f);
        if (d > 1.0 || d < -1.0 || !std::isfinite(d)) {
          d = std::isfinite(d) ? std::clamp(d, -1.0, 1.0) : 0.0;
          ++clip.clipped_on_decode;
        }
        acc += d;
      }
    }
    clip.samples[i] = acc / channels;
  }
  return clip;
}

// 16-bit PCM mono. Samples must already lie in [-1, 1]. Quantization is
// round-to-nearest against a 1/32768 step; the value +1.0 itself saturates
// to 32767 (one half-step high), the unavoidable int16 asymmetry.
inline void write_wav(const AudioClip& clip, const std::string& path) {
  for (double s : clip.samples)
    if (!(s >= -1.0 && s <= 1.0))
      throw Error("write_wav: sample " + std::to_string(s) +
                  " out of [-1, 1]; peak-limit before writing");
  if (clip.sample_rate <= 0) throw ConfigError("write_wav: sample_rate must be positive");

  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");

  const std::uint32_t data_len = static_cast<std::uint32_t>(clip.samples.size() * 2);
  os.write("RIFF", 4);
  detail::write_le<std::uint32_t>(os, 36 + data_len);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  detail::write_le<std::uint32_t>(os, 16);
  detail::write_le<std::uint16_t>(os, wav_detail::kFormatPcm);
  detail::write_le<std::uint16_t>(os, 1);  // mono
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(clip.sample_rate));
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(clip.sample_rate * 2));
  detail::write_le<std::uint16_t>(os, 2);
  detail::write_le<std::uint16_t>(os, 16);
  os.write("data", 4);
  detail::write_le<std::uint32_t>(os, data_len);
  for (double s : clip.samples) {
    long q = std::lrint(s * 32768.0);
    q = std::clamp(q, -32768l, 32767l);
    detail::write_le<std::int16_t>(os, static_cast<std::int16_t>(q));
  }
  if (!os) throw IoError("write failed: " + path);
}

// Windowed-sinc resampler. Output duration matches input within one output
// sample period; content above the target Nyquist is attenuated by the
// Blackman-windowed kernel (stopband around -58 dB).
inline AudioClip resample(const AudioClip& clip, int target_rate) {
  if (target_rate <= 0) throw ConfigError("resample: target_rate must be positive");
  if (clip.sample_rate <= 0) throw ConfigError("resample: clip has no sample rate");
  if (target_rate == clip.sample_rate) return clip;

  AudioClip out;
  out.sample_rate = target_rate;
  out.source_id = clip.source_id;
  out.clipped_on_decode = clip.clipped_on_decode;
  if (clip.samples.empty()) return out;

  const std::int64_t g = std::gcd(clip.sample_rate, target_rate);
  const std::int64_t up = target_rate / g;    // L
  const std::int64_t down = clip.sample_rate / g;  // M
  const double ratio = static_cast<double>(target_rate) / clip.sample_rate;

  // Cutoff as a fraction of the input Nyquist, with rolloff margin.
  const double fc = std::min(1.0, ratio) * 0.945;
  const int half = static_cast<int>(std::ceil(32.0 / fc));

  const std::int64_t n_in = static_cast<std::int64_t>(clip.samples.size());
  const std::int64_t n_out = std::llround(static_cast<double>(n_in) * ratio);
  out.samples.resize(n_out);

  const double* x = clip.samples.data();
  for (std::int64_t j = 0; j < n_out; ++j) {
    // Center of output sample j in input-sample units: j * M / L.
    const std::int64_t num = j * down;
    const std::int64_t cf = num / up;
    const double frac = static_cast<double>(num % up) / up;
    double acc = 0.0, ksum = 0.0;
    for (std::int64_t i = cf - half + 1; i <= cf + half; ++i) {
      const double t = (static_cast<double>(cf - i) + frac);
      const double u = t / half;
      if (u < -1.0 || u > 1.0) continue;
      const double w = 0.42 + 0.5 * std::cos(M_PI * u) + 0.08 * std::cos(2.0 * M_PI * u);
      const double a = M_PI * fc * t;
      const double s = a == 0.0 ? 1.0 : std::sin(a) / a;
      const double k = fc * s * w;
      ksum += k;
      if (i >= 0 && i < n_in) acc += x[i] * k;
    }
    out.samples[j] = ksum != 0.0 ? acc / ksum : 0.0;
  }
  return out;
}

}  // namespace droneguard
