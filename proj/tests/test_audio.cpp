#include <catch2/catch_amalgamated.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>

#include "droneguard/audio.hpp"
#include "droneguard/synth.hpp"
#include "oracles.hpp"

using namespace droneguard;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "droneguard_test_audio";
  fs::create_directories(dir);
  return dir / name;
}

// Hand-rolled WAV writer so read_wav is tested against independent bytes.
void write_raw_wav(const fs::path& path, std::uint16_t format, std::uint16_t channels,
                   std::uint32_t rate, std::uint16_t bits, const std::vector<char>& payload) {
  std::ofstream os(path, std::ios::binary);
  auto u32 = [&](std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); };
  auto u16 = [&](std::uint16_t v) { os.write(reinterpret_cast<const char*>(&v), 2); };
  os.write("RIFF", 4);
  u32(36 + static_cast<std::uint32_t>(payload.size()));
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  u32(16);
  u16(format);
  u16(channels);
  u32(rate);
  u32(rate * channels * bits / 8);
  u16(static_cast<std::uint16_t>(channels * bits / 8));
  u16(bits);
  os.write("data", 4);
  u32(static_cast<std::uint32_t>(payload.size()));
  os.write(payload.data(), static_cast<std::streamsize>(payload.size()));
}

std::vector<char> pcm16_payload(const std::vector<std::int16_t>& samples) {
  std::vector<char> out(samples.size() * 2);
  std::memcpy(out.data(), samples.data(), out.size());
  return out;
}

}  // namespace

TEST_CASE("pcm16 fixed-point scaling") {
  const auto path = temp_path("pcm16.wav");
  write_raw_wav(path, 1, 1, 24000, 16, pcm16_payload({0, 16384, -32768}));
  const AudioClip clip = read_wav(path.string());
  REQUIRE(clip.sample_rate == 24000);
  REQUIRE(clip.samples.size() == 3);
  CHECK(clip.samples[0] == 0.0);
  CHECK(clip.samples[1] == 0.5);
  CHECK(clip.samples[2] == -1.0);
}

TEST_CASE("stereo downmix is the channel mean") {
  const auto path = temp_path("stereo.wav");
  // one frame: left = 1.0 (as 32767 it would not be exact; use float32)
  std::vector<char> payload(8);
  const float left = 1.0f, right = 0.0f;
  std::memcpy(payload.data(), &left, 4);
  std::memcpy(payload.data() + 4, &right, 4);
  write_raw_wav(path, 3, 2, 48000, 32, payload);
  const AudioClip clip = read_wav(path.string());
  REQUIRE(clip.samples.size() == 1);
  CHECK(clip.samples[0] == 0.5);
}

TEST_CASE("downmix linearity on pcm16 stereo") {
  const auto path = temp_path("stereo16.wav");
  std::vector<std::int16_t> frames = {1000, 3000, -2000, 500, 700, -700};
  write_raw_wav(path, 1, 2, 24000, 16, pcm16_payload(frames));
  const AudioClip clip = read_wav(path.string());
  REQUIRE(clip.samples.size() == 3);
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(clip.samples[i] == (frames[2 * i] / 32768.0 + frames[2 * i + 1] / 32768.0) / 2.0);
}

TEST_CASE("duration from header arithmetic") {
  const auto path = temp_path("onesec.wav");
  write_raw_wav(path, 1, 1, 24000, 16, pcm16_payload(std::vector<std::int16_t>(24000, 0)));
  const AudioClip clip = read_wav(path.string());
  CHECK(clip.samples.size() == 24000);
  CHECK(clip.duration_seconds() == Catch::Approx(1.0));
}

TEST_CASE("malformed and unsupported files") {
  const auto bad = temp_path("bad.wav");
  {
    std::ofstream os(bad, std::ios::binary);
    os << "RIFFxxxxNOPE";
  }
  CHECK_THROWS_AS(read_wav(bad.string()), DecodeError);
  CHECK_THROWS_WITH(read_wav(bad.string()), Catch::Matchers::ContainsSubstring("byte 8"));

  const auto alaw = temp_path("alaw.wav");
  write_raw_wav(alaw, 6, 1, 8000, 8, std::vector<char>(16, 0));
  CHECK_THROWS_AS(read_wav(alaw.string()), UnsupportedFormatError);
  CHECK_THROWS_WITH(read_wav(alaw.string()), Catch::Matchers::ContainsSubstring("PCM 16-bit"));

  CHECK_THROWS_AS(read_wav("/nonexistent/definitely_missing.wav"), IoError);
}

TEST_CASE("float decode clips out-of-range samples and counts them") {
  const auto path = temp_path("hot.wav");
  std::vector<char> payload(12);
  const float a = 1.5f, b = -2.0f, c = 0.25f;
  std::memcpy(payload.data(), &a, 4);
  std::memcpy(payload.data() + 4, &b, 4);
  std::memcpy(payload.data() + 8, &c, 4);
  write_raw_wav(path, 3, 1, 24000, 32, payload);
  const AudioClip clip = read_wav(path.string());
  CHECK(clip.samples[0] == 1.0);
  CHECK(clip.samples[1] == -1.0);
  CHECK(clip.samples[2] == 0.25);
  CHECK(clip.clipped_on_decode == 2);
}

TEST_CASE("write/read roundtrip at the quantization bound") {
  AudioClip clip;
  clip.sample_rate = 24000;
  clip.samples = {0.0, 0.5, -1.0};
  const auto path = temp_path("roundtrip.wav");
  write_wav(clip, path.string());
  const AudioClip back = read_wav(path.string());
  REQUIRE(back.samples.size() == 3);
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(std::fabs(back.samples[i] - clip.samples[i]) <= 1.0 / 65536.0);
}

TEST_CASE("empty clip writes a valid zero-data wav") {
  AudioClip clip;
  clip.sample_rate = 24000;
  const auto path = temp_path("empty.wav");
  write_wav(clip, path.string());
  const AudioClip back = read_wav(path.string());
  CHECK(back.samples.empty());
  CHECK(back.sample_rate == 24000);
}

TEST_CASE("roundtrip of uniform noise stays within half a step") {
  AudioClip clip = synth_uniform_noise(1.0, 24000, 7);
  const auto path = temp_path("noise.wav");
  write_wav(clip, path.string());
  const AudioClip back = read_wav(path.string());
  REQUIRE(back.samples.size() == clip.samples.size());
  double max_err = 0.0;
  for (std::size_t i = 0; i < clip.samples.size(); ++i)
    max_err = std::max(max_err, std::fabs(back.samples[i] - clip.samples[i]));
  CHECK(max_err <= 1.0 / 65536.0);
}

TEST_CASE("out-of-range samples are rejected on write") {
  AudioClip clip;
  clip.sample_rate = 24000;
  clip.samples = {0.0, 1.2};
  CHECK_THROWS_WITH(write_wav(clip, temp_path("reject.wav").string()),
                    Catch::Matchers::ContainsSubstring("peak-limit"));
}

TEST_CASE("decode-encode idempotent within one quantization step (property)") {
  std::mt19937_64 rng(123);
  std::uniform_real_distribution<double> amp(0.05, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    const AudioClip clip = synth_uniform_noise(0.05, 8000 + 1000 * trial, rng(), amp(rng));
    const auto path = temp_path("prop.wav");
    write_wav(clip, path.string());
    const AudioClip back = read_wav(path.string());
    REQUIRE(back.samples.size() == clip.samples.size());
    for (std::size_t i = 0; i < clip.samples.size(); ++i)
      REQUIRE(std::fabs(back.samples[i] - clip.samples[i]) <= 1.0 / 32768.0);
  }
}

TEST_CASE("resample length ratio and identity") {
  AudioClip clip = synth_sine(440.0, 2.0, 48000);
  const AudioClip down = resample(clip, 24000);
  CHECK(down.sample_rate == 24000);
  CHECK(down.samples.size() == 48000);

  const AudioClip same = resample(clip, 48000);
  REQUIRE(same.samples.size() == clip.samples.size());
  CHECK(std::equal(same.samples.begin(), same.samples.end(), clip.samples.begin()));
}

TEST_CASE("resampled tone keeps its frequency (DFT oracle)") {
  const AudioClip clip = synth_sine(440.0, 1.0, 48000);
  const AudioClip down = resample(clip, 24000);

  const std::size_t n_fft = 4096;
  std::vector<double> head_in(clip.samples.begin(), clip.samples.begin() + n_fft);
  std::vector<double> head_out(down.samples.begin(), down.samples.begin() + n_fft);
  const std::size_t bin_in = oracle::dft_peak_bin(head_in, n_fft);
  const std::size_t bin_out = oracle::dft_peak_bin(head_out, n_fft);

  const double f_in = static_cast<double>(bin_in) * 48000.0 / n_fft;
  const double f_out = static_cast<double>(bin_out) * 24000.0 / n_fft;
  CHECK(std::fabs(f_in - 440.0) <= 48000.0 / n_fft);
  CHECK(std::fabs(f_out - 440.0) <= 24000.0 / n_fft);
}

TEST_CASE("resampling removes content above the target nyquist") {
  const AudioClip tone = synth_sine(10000.0, 0.5, 48000);
  const AudioClip down = resample(tone, 16000);  // nyquist 8 kHz
  double rms = 0.0;
  for (double s : down.samples) rms += s * s;
  rms = std::sqrt(rms / down.samples.size());
  CHECK(rms < 1e-2);
}

TEST_CASE("resample preserves duration within one sample period (property)") {
  std::mt19937_64 rng(77);
  const int rates[] = {8000, 16000, 22050, 24000, 44100, 48000};
  for (int trial = 0; trial < 12; ++trial) {
    const int from = rates[rng() % 6];
    const int to = rates[rng() % 6];
    const double dur = 0.05 + 0.001 * static_cast<double>(rng() % 100);
    const AudioClip clip = synth_uniform_noise(dur, from, rng(), 0.5);
    const AudioClip out = resample(clip, to);
    const double in_dur = clip.duration_seconds();
    const double out_dur = out.duration_seconds();
    REQUIRE(std::fabs(in_dur - out_dur) <= 1.0 / to);
  }
}
