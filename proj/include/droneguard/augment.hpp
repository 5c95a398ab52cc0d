// Training-data synthesis: overlay an event (drone) recording on a
// background bed. The event is tiled to the background length and scaled
// so its max peak exceeds the background's by a fixed margin (5% by
// default); the output clip is the raw background followed by the mixed
// half, so every synthesized file carries one negative and one positive
// span of equal length.
#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "droneguard/audio.hpp"
#include "droneguard/common.hpp"

namespace droneguard {

enum class MarginMode { kPeak, kRms };

struct AugmentSpec {
  double peak_margin = 1.05;
  std::string label_positive = "drone";
  std::string label_negative = "background";
  std::uint64_t rng_seed = 0;
  // Amplitude max-peak ratio is the paper reading; RMS mode exists for
  // sensitivity studies only.
  MarginMode margin_mode = MarginMode::kPeak;

  void validate() const {
    if (!(peak_margin > 1.0)) throw ConfigError("AugmentSpec: peak_margin must exceed 1");
  }
  std::string canonical() const {
    return "margin=" + std::to_string(peak_margin) + ";pos=" + label_positive +
           ";neg=" + label_negative + ";seed=" + std::to_string(rng_seed) +
           ";mode=" + (margin_mode == MarginMode::kPeak ? "peak" : "rms");
  }
};

struct LabelSpan {
  double start_s = 0.0;
  double end_s = 0.0;
  std::string label;
};

struct LabeledClip {
  AudioClip clip;
  std::vector<LabelSpan> spans;  // sorted, non-overlapping, covering [0, duration]
  std::string background_id;
  std::string event_id;
  std::string spec_hash;
};

namespace augment_detail {

inline double rms(const AudioClip& c) {
  if (c.samples.empty()) return 0.0;
  double acc = 0.0;
  for (double s : c.samples) acc += s * s;
  return std::sqrt(acc / c.samples.size());
}

}  // namespace augment_detail

// Gain the event so its level exceeds the background's by `margin`.
inline AudioClip scale_to_margin(const AudioClip& event, const AudioClip& background,
                                 double margin, MarginMode mode = MarginMode::kPeak) {
  const double event_level =
      mode == MarginMode::kPeak ? event.max_abs() : augment_detail::rms(event);
  const double bg_level =
      mode == MarginMode::kPeak ? background.max_abs() : augment_detail::rms(background);
  if (event_level <= 0.0)
    throw DegenerateInputError("scale_to_margin: event clip is silent");
  const double gain = margin * bg_level / event_level;
  AudioClip out = event;
  for (double& s : out.samples) s *= gain;
  return out;
}

// Repeat the event end-to-end, truncated to exactly target_len seconds.
inline AudioClip tile_event(const AudioClip& event, double target_len_s) {
  if (event.samples.empty()) throw DegenerateInputError("tile_event: empty event clip");
  AudioClip out;
  out.sample_rate = event.sample_rate;
  out.source_id = event.source_id;
  const std::size_t n =
      static_cast<std::size_t>(std::llround(target_len_s * event.sample_rate));
  out.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.samples[i] = event.samples[i % event.samples.size()];
  return out;
}

// background ++ (background + tiled scaled event). If the mix exceeds full
// scale the whole output is peak-normalized, preserving the drone-to-
// background ratio rather than clipping the event spectrum.
inline LabeledClip synthesize(const AudioClip& background, const AudioClip& event,
                              const AugmentSpec& spec) {
  spec.validate();
  if (background.sample_rate != event.sample_rate)
    throw ConfigError("synthesize: sample rates differ (" +
                      std::to_string(background.sample_rate) + " vs " +
                      std::to_string(event.sample_rate) + "); resample first");
  if (background.samples.empty())
    throw DegenerateInputError("synthesize: empty background clip");

  AudioClip scaled = scale_to_margin(event, background, spec.peak_margin, spec.margin_mode);
  const std::size_t bg_len = background.samples.size();
  AudioClip tiled;
  tiled.sample_rate = event.sample_rate;
  tiled.samples.resize(bg_len);
  for (std::size_t i = 0; i < bg_len; ++i)
    tiled.samples[i] = scaled.samples[i % scaled.samples.size()];

  LabeledClip out;
  out.clip.sample_rate = background.sample_rate;
  out.clip.source_id = "aug_" + background.source_id + "_" + event.source_id;
  out.clip.samples.resize(2 * bg_len);
  for (std::size_t i = 0; i < bg_len; ++i) out.clip.samples[i] = background.samples[i];
  for (std::size_t i = 0; i < bg_len; ++i)
    out.clip.samples[bg_len + i] = background.samples[i] + tiled.samples[i];

  double peak = out.clip.max_abs();
  if (peak > 1.0)
    for (double& s : out.clip.samples) s /= peak;

  const double bg_dur = static_cast<double>(bg_len) / background.sample_rate;
  out.spans = {{0.0, bg_dur, spec.label_negative}, {bg_dur, 2.0 * bg_dur, spec.label_positive}};
  out.background_id = background.source_id;
  out.event_id = event.source_id;
  out.spec_hash = to_hex(fnv1a64(spec.canonical()));
  return out;
}

// --- manifest -------------------------------------------------------------

struct ManifestEntry {
  std::string path;
  int sample_rate = 0;
  double duration_s = 0.0;
  std::vector<LabelSpan> spans;
  std::string background_id;
  std::string event_id;
  std::uint64_t seed = 0;
  std::string tool_version;
  std::string config_hash;
  std::string error;  // nonempty for failed pairs

  bool ok() const { return error.empty(); }
};

inline nlohmann::json manifest_entry_to_json(const ManifestEntry& e) {
  nlohmann::json j;
  if (!e.ok()) {
    j["error"] = e.error;
    j["background_id"] = e.background_id;
    j["event_id"] = e.event_id;
    return j;
  }
  j["path"] = e.path;
  j["sample_rate"] = e.sample_rate;
  j["duration_s"] = e.duration_s;
  nlohmann::json spans = nlohmann::json::array();
  for (const auto& s : e.spans)
    spans.push_back({{"start_s", s.start_s}, {"end_s", s.end_s}, {"label", s.label}});
  j["spans"] = spans;
  j["background_id"] = e.background_id;
  j["event_id"] = e.event_id;
  j["seed"] = e.seed;
  j["tool_version"] = e.tool_version;
  if (!e.config_hash.empty()) j["config_hash"] = e.config_hash;
  return j;
}

inline ManifestEntry manifest_entry_from_json(const nlohmann::json& j) {
  ManifestEntry e;
  if (j.contains("error")) {
    e.error = j["error"].get<std::string>();
    e.background_id = j.value("background_id", "");
    e.event_id = j.value("event_id", "");
    return e;
  }
  e.path = j.at("path").get<std::string>();
  e.sample_rate = j.at("sample_rate").get<int>();
  e.duration_s = j.at("duration_s").get<double>();
  for (const auto& s : j.at("spans"))
    e.spans.push_back({s.at("start_s").get<double>(), s.at("end_s").get<double>(),
                       s.at("label").get<std::string>()});
  e.background_id = j.value("background_id", "");
  e.event_id = j.value("event_id", "");
  e.seed = j.value("seed", std::uint64_t{0});
  e.tool_version = j.value("tool_version", "");
  e.config_hash = j.value("config_hash", "");
  return e;
}

inline std::vector<ManifestEntry> load_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open manifest " + path);
  std::vector<ManifestEntry> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      entries.push_back(manifest_entry_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw DecodeError(path + ':' + std::to_string(lineno) + ": bad manifest row: " + e.what());
    }
  }
  return entries;
}

// Synthesize one WAV per (background, event) pair under out_dir and write
// manifest.jsonl next to them. Failed pairs become error rows; processing
// continues. Deterministic given the seed and input ordering. When
// target_rate > 0 both inputs are resampled to it first, so the corpus
// lands at the pipeline's canonical rate.
inline std::string build_manifest(
    const std::vector<std::pair<std::string, std::string>>& pairs, const AugmentSpec& spec,
    const std::string& out_dir, const std::string& config_hash = "", int target_rate = 0) {
  spec.validate();
  std::filesystem::create_directories(out_dir);
  const std::string manifest_path = (std::filesystem::path(out_dir) / "manifest.jsonl").string();
  std::ofstream os(manifest_path, std::ios::binary);
  if (!os) throw IoError("cannot open " + manifest_path + " for writing");

  for (const auto& [bg_path, event_path] : pairs) {
    ManifestEntry entry;
    entry.seed = spec.rng_seed;
    entry.tool_version = kToolVersion;
    entry.config_hash = config_hash;
    try {
      AudioClip bg = read_wav(bg_path);
      AudioClip ev = read_wav(event_path);
      if (target_rate > 0) {
        bg = resample(bg, target_rate);
        ev = resample(ev, target_rate);
      }
      if (ev.sample_rate != bg.sample_rate) ev = resample(ev, bg.sample_rate);
      LabeledClip lab = synthesize(bg, ev, spec);
      const std::string wav_name = "aug_" + lab.background_id + "_" + lab.event_id + ".wav";
      const std::string wav_path = (std::filesystem::path(out_dir) / wav_name).string();
      write_wav(lab.clip, wav_path);
      entry.path = wav_path;
      entry.sample_rate = lab.clip.sample_rate;
      entry.duration_s = lab.clip.duration_seconds();
      entry.spans = lab.spans;
      entry.background_id = lab.background_id;
      entry.event_id = lab.event_id;
    } catch (const Error& e) {
      entry.error = e.what();
      entry.background_id = std::filesystem::path(bg_path).stem().string();
      entry.event_id = std::filesystem::path(event_path).stem().string();
    }
    os << manifest_entry_to_json(entry).dump() << '\n';
  }
  if (!os) throw IoError("write failed: " + manifest_path);
  return manifest_path;
}

}  // namespace droneguard
