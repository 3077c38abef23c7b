#pragma once

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace eegcrnn {

class RecordingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One task run: time-ordered samples of `channels` values each, one label.
struct Recording {
  std::string subject;
  int label = 0;
  double sample_rate = 160.0;
  std::size_t channels = 64;
  std::vector<float> samples;  // length() x channels, row-major

  std::size_t length() const { return channels ? samples.size() / channels : 0; }
  std::span<const float> sample(std::size_t t) const { return {samples.data() + t * channels, channels}; }
};

namespace detail {

inline std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(trim(field));
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

}  // namespace detail

// CSV with a ch1..chN header and one numeric row per time sample.
inline Recording read_recording_csv(const std::filesystem::path& path, std::size_t channels = 64) {
  std::ifstream in(path);
  if (!in) throw RecordingError("cannot open recording " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw RecordingError(path.string() + ": empty file");
  const auto header = detail::split_csv(line);
  if (header.size() != channels) {
    throw RecordingError(path.string() + ": header has " + std::to_string(header.size()) + " columns, expected " +
                         std::to_string(channels));
  }
  for (std::size_t c = 0; c < channels; ++c) {
    if (header[c] != "ch" + std::to_string(c + 1)) {
      throw RecordingError(path.string() + ": column " + std::to_string(c + 1) + " is '" + header[c] + "', expected ch" +
                           std::to_string(c + 1));
    }
  }
  Recording rec;
  rec.channels = channels;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_csv(line);
    if (fields.size() != channels) {
      throw RecordingError(path.string() + ": row " + std::to_string(row) + " has " + std::to_string(fields.size()) +
                           " values, expected " + std::to_string(channels));
    }
    for (const auto& f : fields) {
      char* end = nullptr;
      const double v = std::strtod(f.c_str(), &end);
      if (f.empty() || end != f.c_str() + f.size() || !std::isfinite(v)) {
        throw RecordingError(path.string() + ": row " + std::to_string(row) + " has invalid value '" + f + "'");
      }
      rec.samples.push_back(static_cast<float>(v));
    }
  }
  return rec;
}

inline void write_recording_csv(const std::filesystem::path& path, const Recording& rec) {
  std::ofstream out(path);
  if (!out) throw RecordingError("cannot write recording " + path.string());
  for (std::size_t c = 0; c < rec.channels; ++c) out << (c ? "," : "") << "ch" << (c + 1);
  out << '\n' << std::setprecision(9);
  for (std::size_t t = 0; t < rec.length(); ++t) {
    for (std::size_t c = 0; c < rec.channels; ++c) out << (c ? "," : "") << rec.samples[t * rec.channels + c];
    out << '\n';
  }
  if (!out) throw RecordingError("failed writing " + path.string());
}

inline const std::vector<std::string>& default_label_names() {
  static const std::vector<std::string> names{"eyes_closed", "both_feet", "both_fists", "left_fist", "right_fist"};
  return names;
}

struct ManifestEntry {
  std::string path;  // relative to the manifest's directory unless absolute
  std::string subject;
  int label = 0;
};

struct DatasetManifest {
  std::vector<ManifestEntry> recordings;
  std::vector<std::string> label_names = default_label_names();
  double sample_rate = 160.0;
  std::size_t channels = 64;
  std::size_t window_size = 10;
  std::uint64_t split_seed = 42;
  double split_ratio = 0.75;
  std::filesystem::path base_dir;

  std::size_t classes() const { return label_names.size(); }

  std::filesystem::path resolve(const ManifestEntry& e) const {
    std::filesystem::path p(e.path);
    return p.is_absolute() ? p : base_dir / p;
  }

  void validate() const {
    if (label_names.empty()) throw std::invalid_argument("manifest declares no labels");
    if (!(split_ratio > 0.0 && split_ratio < 1.0)) throw std::invalid_argument("split ratio must lie in (0, 1)");
    if (window_size < 2 || window_size % 2) throw std::invalid_argument("window size must be even and >= 2");
    for (const auto& r : recordings) {
      if (r.label < 0 || static_cast<std::size_t>(r.label) >= classes()) {
        throw std::invalid_argument("recording " + r.path + " has label " + std::to_string(r.label) + " outside [0, " +
                                    std::to_string(classes()) + ")");
      }
    }
  }
};

inline DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("manifest " + path.string() + " is not valid JSON: " + e.what());
  }
  DatasetManifest m;
  m.base_dir = path.parent_path();
  m.sample_rate = j.value("sample_rate", 160.0);
  m.channels = j.value("channels", std::size_t{64});
  m.window_size = j.value("window_size", std::size_t{10});
  if (j.contains("split")) {
    m.split_seed = j["split"].value("seed", std::uint64_t{42});
    m.split_ratio = j["split"].value("ratio", 0.75);
  }
  if (j.contains("labels")) m.label_names = j["labels"].get<std::vector<std::string>>();
  for (const auto& r : j.at("recordings")) {
    m.recordings.push_back({r.at("path").get<std::string>(), r.value("subject", std::string{}), r.at("label").get<int>()});
  }
  m.validate();
  return m;
}

inline void save_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
  nlohmann::json j;
  j["sample_rate"] = m.sample_rate;
  j["channels"] = m.channels;
  j["window_size"] = m.window_size;
  j["split"] = {{"seed", m.split_seed}, {"ratio", m.split_ratio}};
  j["labels"] = m.label_names;
  j["recordings"] = nlohmann::json::array();
  for (const auto& r : m.recordings) j["recordings"].push_back({{"path", r.path}, {"subject", r.subject}, {"label", r.label}});
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace eegcrnn
