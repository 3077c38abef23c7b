#pragma once

#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "eegcrnn/dataset.hpp"
#include "eegcrnn/recording.hpp"

namespace eegcrnn {

// One synthetic class: two electrode groups oscillating at the recording's
// frequency. order = +1 puts `group_b` a quarter period behind `group_a`,
// -1 a quarter period ahead, 0 in phase.
struct SynthClass {
  std::vector<int> group_a;  // 1-based channels
  std::vector<int> group_b;
  int order = 0;
};

// Default classes pair up so that a single time sample cannot separate them:
// 1/2 and 3/4 share electrodes and differ only in which group leads, while
// 1/3 and 2/4 share the temporal signature at different scalp sites.
inline std::vector<SynthClass> default_synth_classes() {
  const std::vector<int> occipital_a{57, 58, 59}, occipital_b{61, 62, 63};
  const std::vector<int> left_a{1, 2, 8, 9}, left_b{15, 16, 48, 49};
  const std::vector<int> right_a{6, 7, 13, 14}, right_b{20, 21, 53, 54};
  return {{occipital_a, occipital_b, 0}, {left_a, left_b, +1}, {left_a, left_b, -1},
          {right_a, right_b, +1},       {right_a, right_b, -1}};
}

struct SynthSpec {
  std::vector<SynthClass> classes = default_synth_classes();
  std::vector<std::string> label_names = default_label_names();
  std::size_t windows = 2000;
  std::size_t windows_per_recording = 50;
  std::size_t window = 10;
  std::size_t channels = 64;
  double sample_rate = 160.0;
  double noise = 0.5;        // std of additive white noise on every channel
  double amplitude = 1.0;
  double freq_min = 12.0;    // Hz, drawn per recording
  double freq_max = 20.0;
  double missing_rate = 0.0; // probability a sample is all zeros
  std::uint64_t seed = 1;
  std::uint64_t split_seed = 42;
  double split_ratio = 0.75;

  void validate() const {
    if (classes.size() < 2) throw std::invalid_argument("synthetic spec needs at least two classes");
    if (label_names.size() != classes.size()) {
      throw std::invalid_argument("synthetic spec has " + std::to_string(label_names.size()) + " label names for " +
                                  std::to_string(classes.size()) + " classes");
    }
    if (windows < classes.size()) throw std::invalid_argument("fewer windows than classes");
    if (windows_per_recording == 0) throw std::invalid_argument("windows_per_recording must be positive");
    if (window < 2 || window % 2) throw std::invalid_argument("window size must be even and >= 2");
    if (!(noise >= 0.0) || !(amplitude > 0.0)) throw std::invalid_argument("noise must be >= 0 and amplitude > 0");
    if (!(freq_min > 0.0) || freq_max < freq_min || freq_max >= sample_rate / 2) {
      throw std::invalid_argument("frequency range must satisfy 0 < min <= max < sample_rate / 2");
    }
    if (!(missing_rate >= 0.0 && missing_rate < 1.0)) throw std::invalid_argument("missing_rate must lie in [0, 1)");
    if (!(split_ratio > 0.0 && split_ratio < 1.0)) throw std::invalid_argument("split ratio must lie in (0, 1)");
    for (const auto& c : classes) {
      if (c.group_a.empty() || c.group_b.empty()) throw std::invalid_argument("synthetic class with an empty group");
      if (c.order < -1 || c.order > 1) throw std::invalid_argument("class order must be -1, 0 or +1");
      for (const auto* g : {&c.group_a, &c.group_b}) {
        for (int ch : *g) {
          if (ch < 1 || static_cast<std::size_t>(ch) > channels) {
            throw std::invalid_argument("synthetic channel " + std::to_string(ch) + " outside [1, " +
                                        std::to_string(channels) + "]");
          }
        }
      }
    }
  }
};

inline void from_json(const nlohmann::json& j, SynthClass& c) {
  c.group_a = j.at("group_a").get<std::vector<int>>();
  c.group_b = j.at("group_b").get<std::vector<int>>();
  c.order = j.value("order", 0);
}

inline void to_json(nlohmann::json& j, const SynthClass& c) {
  j = {{"group_a", c.group_a}, {"group_b", c.group_b}, {"order", c.order}};
}

inline SynthSpec synth_spec_from_json(const nlohmann::json& j) {
  SynthSpec s;
  if (j.contains("classes")) {
    s.classes = j["classes"].get<std::vector<SynthClass>>();
    if (!j.contains("label_names")) {
      s.label_names.clear();
      for (std::size_t i = 0; i < s.classes.size(); ++i) s.label_names.push_back("class" + std::to_string(i));
    }
  }
  if (j.contains("label_names")) s.label_names = j["label_names"].get<std::vector<std::string>>();
  s.windows = j.value("windows", s.windows);
  s.windows_per_recording = j.value("windows_per_recording", s.windows_per_recording);
  s.window = j.value("window_size", s.window);
  s.sample_rate = j.value("sample_rate", s.sample_rate);
  s.noise = j.value("noise", s.noise);
  s.amplitude = j.value("amplitude", s.amplitude);
  s.freq_min = j.value("freq_min", s.freq_min);
  s.freq_max = j.value("freq_max", s.freq_max);
  s.missing_rate = j.value("missing_rate", s.missing_rate);
  s.seed = j.value("seed", s.seed);
  s.split_seed = j.value("split_seed", s.split_seed);
  s.split_ratio = j.value("split_ratio", s.split_ratio);
  s.validate();
  return s;
}

inline nlohmann::json synth_spec_to_json(const SynthSpec& s) {
  return {{"classes", s.classes},         {"label_names", s.label_names},
          {"windows", s.windows},         {"windows_per_recording", s.windows_per_recording},
          {"window_size", s.window},      {"sample_rate", s.sample_rate},
          {"noise", s.noise},             {"amplitude", s.amplitude},
          {"freq_min", s.freq_min},       {"freq_max", s.freq_max},
          {"missing_rate", s.missing_rate}, {"seed", s.seed},
          {"split_seed", s.split_seed},   {"split_ratio", s.split_ratio}};
}

struct SynthResult {
  DatasetManifest manifest;
  std::vector<Recording> recordings;  // parallel to manifest.recordings
};

// Per-class window counts differ by at most one; each recording is sized to
// yield exactly its share of windows.
inline SynthResult synth_dataset(const SynthSpec& spec) {
  spec.validate();
  const std::size_t k = spec.classes.size();
  const std::size_t half = spec.window / 2;
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  SynthResult result;
  auto& m = result.manifest;
  m.label_names = spec.label_names;
  m.sample_rate = spec.sample_rate;
  m.channels = spec.channels;
  m.window_size = spec.window;
  m.split_seed = spec.split_seed;
  m.split_ratio = spec.split_ratio;

  std::size_t rec_index = 0;
  for (std::size_t label = 0; label < k; ++label) {
    std::size_t remaining = spec.windows / k + (label < spec.windows % k ? 1 : 0);
    const auto& cls = spec.classes[label];
    std::size_t run = 0;
    while (remaining > 0) {
      const std::size_t q = std::min(remaining, spec.windows_per_recording);
      remaining -= q;
      const std::size_t n = spec.window + (q - 1) * half;
      const double freq = spec.freq_min + (spec.freq_max - spec.freq_min) * unit(rng);
      const double omega = 2.0 * std::numbers::pi * freq / spec.sample_rate;
      const double phase0 = 2.0 * std::numbers::pi * unit(rng);
      const double amp = spec.amplitude * (0.8 + 0.4 * unit(rng));
      const double lag = static_cast<double>(cls.order) * std::numbers::pi / 2.0;

      Recording rec;
      rec.label = static_cast<int>(label);
      rec.sample_rate = spec.sample_rate;
      rec.channels = spec.channels;
      rec.subject = "S" + std::to_string(run % 10 + 1);
      rec.samples.assign(n * spec.channels, 0.0f);
      for (std::size_t t = 0; t < n; ++t) {
        float* row = rec.samples.data() + t * spec.channels;
        if (spec.missing_rate > 0.0 && unit(rng) < spec.missing_rate) continue;
        for (std::size_t c = 0; c < spec.channels; ++c) row[c] = static_cast<float>(spec.noise * gauss(rng));
        const double theta = phase0 + omega * static_cast<double>(t);
        for (int ch : cls.group_a) row[ch - 1] += static_cast<float>(amp * std::sin(theta));
        for (int ch : cls.group_b) row[ch - 1] += static_cast<float>(amp * std::sin(theta - lag));
      }
      m.recordings.push_back({"rec" + std::to_string(rec_index) + "_class" + std::to_string(label) + ".csv",
                              rec.subject, rec.label});
      result.recordings.push_back(std::move(rec));
      ++rec_index;
      ++run;
    }
  }
  return result;
}

// Writes manifest.json plus one CSV per recording into `dir`.
inline std::filesystem::path write_synth(const std::filesystem::path& dir, const SynthResult& result) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < result.recordings.size(); ++i) {
    write_recording_csv(dir / result.manifest.recordings[i].path, result.recordings[i]);
  }
  const auto manifest_path = dir / "manifest.json";
  save_manifest(manifest_path, result.manifest);
  return manifest_path;
}

// Windows straight from generated recordings, skipping the CSV round trip.
inline PreparedDataset synth_prepared(const SynthSpec& spec, const ElectrodeLayout& layout = layout_default()) {
  const auto result = synth_dataset(spec);
  std::vector<WindowSegment> all;
  DatasetMeta meta;
  for (const auto& rec : result.recordings) {
    auto w = segment_windows(rec, layout, spec.window);
    std::move(w.begin(), w.end(), std::back_inserter(all));
    if (std::find(meta.subjects.begin(), meta.subjects.end(), rec.subject) == meta.subjects.end()) {
      meta.subjects.push_back(rec.subject);
    }
  }
  meta.window = spec.window;
  meta.channels = layout.channels();
  meta.rows = layout.rows();
  meta.cols = layout.cols();
  meta.label_names = spec.label_names;
  meta.split_seed = spec.split_seed;
  meta.split_ratio = spec.split_ratio;
  auto [train, test] = split_dataset(std::move(all), spec.split_ratio, spec.split_seed);
  return PreparedDataset{std::move(meta), std::move(train), std::move(test)};
}

}  // namespace eegcrnn
