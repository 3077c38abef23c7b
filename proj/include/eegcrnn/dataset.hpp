#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "eegcrnn/binary_io.hpp"
#include "eegcrnn/layout.hpp"
#include "eegcrnn/recording.hpp"

namespace eegcrnn {

// S consecutive samples of one recording, in raw (S x n) and mesh
// (S x rows x cols) form. Both forms hold the normalized values, so
// meshes[k] == to_mesh(raw[k]).
struct WindowSegment {
  std::size_t length = 0;
  std::vector<float> raw;
  std::vector<float> meshes;
  int label = 0;

  bool operator==(const WindowSegment&) const = default;
};

namespace detail {

// Unbiased integer in [0, n) independent of the standard library's
// distribution implementations.
inline std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

template <class T>
void shuffle(std::vector<T>& items, std::mt19937_64& rng) {
  for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[uniform_index(rng, i)]);
}

}  // namespace detail

// Windows start at 0, S/2, 2(S/2), ...; count = floor((N - S) / (S/2)) + 1,
// none when N < S. Every sample is meshed and z-scored first; all-zero
// (missing) samples are kept.
inline std::vector<WindowSegment> segment_windows(const Recording& rec, const ElectrodeLayout& layout,
                                                  std::size_t window = 10) {
  if (window < 2 || window % 2) throw std::invalid_argument("window size must be even and >= 2");
  if (rec.channels != layout.channels()) {
    throw std::invalid_argument("recording has " + std::to_string(rec.channels) + " channels, layout expects " +
                                std::to_string(layout.channels()));
  }
  const std::size_t n = rec.length();
  std::vector<WindowSegment> out;
  if (n < window) return out;
  const std::size_t cells = layout.cells(), channels = rec.channels;
  std::vector<float> raw(n * channels), meshes(n * cells);
  for (std::size_t t = 0; t < n; ++t) {
    const auto mesh = zscore_mesh(to_mesh(rec.sample(t), layout), layout);
    std::copy(mesh.values.begin(), mesh.values.end(), meshes.begin() + static_cast<std::ptrdiff_t>(t * cells));
    const auto back = from_mesh(mesh, layout);
    std::copy(back.begin(), back.end(), raw.begin() + static_cast<std::ptrdiff_t>(t * channels));
  }
  const std::size_t step = window / 2;
  for (std::size_t start = 0; start + window <= n; start += step) {
    WindowSegment seg;
    seg.length = window;
    seg.label = rec.label;
    seg.raw.assign(raw.begin() + static_cast<std::ptrdiff_t>(start * channels),
                   raw.begin() + static_cast<std::ptrdiff_t>((start + window) * channels));
    seg.meshes.assign(meshes.begin() + static_cast<std::ptrdiff_t>(start * cells),
                      meshes.begin() + static_cast<std::ptrdiff_t>((start + window) * cells));
    out.push_back(std::move(seg));
  }
  return out;
}

inline std::size_t window_count(std::size_t samples, std::size_t window) {
  return samples < window ? 0 : (samples - window) / (window / 2) + 1;
}

// Uniform instance-level split; train receives round(ratio * q) windows.
inline std::pair<std::vector<WindowSegment>, std::vector<WindowSegment>> split_dataset(
    std::vector<WindowSegment> segments, double ratio, std::uint64_t seed) {
  if (segments.empty()) throw std::invalid_argument("cannot split an empty dataset");
  if (!(ratio > 0.0 && ratio < 1.0)) throw std::invalid_argument("split ratio must lie in (0, 1)");
  std::vector<std::size_t> order(segments.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  detail::shuffle(order, rng);
  const auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(segments.size())));
  std::vector<WindowSegment> train, test;
  train.reserve(n_train);
  test.reserve(segments.size() - n_train);
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_train ? train : test).push_back(std::move(segments[order[i]]));
  }
  return {std::move(train), std::move(test)};
}

struct DatasetMeta {
  std::size_t window = 10;
  std::size_t channels = 64;
  std::size_t rows = 10;
  std::size_t cols = 11;
  std::vector<std::string> label_names = default_label_names();
  std::uint64_t split_seed = 42;
  double split_ratio = 0.75;
  std::vector<std::string> subjects;

  std::size_t classes() const { return label_names.size(); }
  bool operator==(const DatasetMeta&) const = default;
};

struct PreparedDataset {
  DatasetMeta meta;
  std::vector<WindowSegment> train;
  std::vector<WindowSegment> test;

  std::size_t size() const { return train.size() + test.size(); }
};

inline constexpr char kDatasetMagic[4] = {'E', 'E', 'G', 'W'};
inline constexpr std::uint16_t kDatasetVersion = 1;

// Layout: "EEGW", u16 version, u32 q, u32 q_train, u32 S, u32 n, u32 rows,
// u32 cols, u32 K, then f32 raw block (q*S*n), f32 mesh block
// (q*S*rows*cols), u8 labels (q), then u32 length + JSON metadata trailer.
// Training windows come first. All integers and floats little-endian.
inline void save_prepared(const std::filesystem::path& path, const PreparedDataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const auto& m = ds.meta;
  out.write(kDatasetMagic, 4);
  io::put<std::uint16_t>(out, kDatasetVersion);
  io::put<std::uint32_t>(out, static_cast<std::uint32_t>(ds.size()));
  io::put<std::uint32_t>(out, static_cast<std::uint32_t>(ds.train.size()));
  for (auto v : {m.window, m.channels, m.rows, m.cols, m.classes()}) io::put<std::uint32_t>(out, static_cast<std::uint32_t>(v));
  auto each = [&ds](auto&& fn) {
    for (const auto& w : ds.train) fn(w);
    for (const auto& w : ds.test) fn(w);
  };
  each([&](const WindowSegment& w) {
    if (w.raw.size() != m.window * m.channels || w.meshes.size() != m.window * m.rows * m.cols) {
      throw std::invalid_argument("window shape disagrees with dataset metadata");
    }
    for (float v : w.raw) io::put_f32(out, v);
  });
  each([&](const WindowSegment& w) {
    for (float v : w.meshes) io::put_f32(out, v);
  });
  each([&](const WindowSegment& w) { io::put<std::uint8_t>(out, static_cast<std::uint8_t>(w.label)); });
  const nlohmann::json meta = {{"label_names", m.label_names},
                               {"split_seed", m.split_seed},
                               {"split_ratio", m.split_ratio},
                               {"subjects", m.subjects}};
  const std::string text = meta.dump();
  io::put<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

inline PreparedDataset load_prepared(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  io::Reader r(io::slurp(in));
  if (r.remaining() < 4 || r.bytes(4, "magic") != std::string(kDatasetMagic, 4)) {
    throw FormatError(FormatError::Kind::BadMagic, path.string() + ": not a prepared dataset (expected magic \"EEGW\")");
  }
  const auto version = r.get<std::uint16_t>("version");
  if (version != kDatasetVersion) {
    throw FormatError(FormatError::Kind::VersionMismatch, path.string() + ": dataset format version " +
                                                              std::to_string(version) + ", expected " +
                                                              std::to_string(kDatasetVersion));
  }
  const std::size_t q = r.get<std::uint32_t>("window count");
  const std::size_t q_train = r.get<std::uint32_t>("train count");
  PreparedDataset ds;
  auto& m = ds.meta;
  m.window = r.get<std::uint32_t>("window size");
  m.channels = r.get<std::uint32_t>("channel count");
  m.rows = r.get<std::uint32_t>("mesh rows");
  m.cols = r.get<std::uint32_t>("mesh cols");
  const std::size_t classes = r.get<std::uint32_t>("class count");
  if (q_train > q || classes == 0 || classes > 256) {
    throw FormatError(FormatError::Kind::Corrupt, path.string() + ": inconsistent header counts");
  }
  const std::size_t raw_len = m.window * m.channels, mesh_len = m.window * m.rows * m.cols;
  r.need(q * (raw_len + mesh_len) * 4 + q, "window payload");
  std::vector<WindowSegment> all(q);
  for (auto& w : all) {
    w.length = m.window;
    w.raw.resize(raw_len);
    for (auto& v : w.raw) v = r.get_f32("raw block");
  }
  for (auto& w : all) {
    w.meshes.resize(mesh_len);
    for (auto& v : w.meshes) v = r.get_f32("mesh block");
  }
  for (auto& w : all) {
    w.label = r.get<std::uint8_t>("labels");
    if (static_cast<std::size_t>(w.label) >= classes) {
      throw FormatError(FormatError::Kind::Corrupt, path.string() + ": label outside the declared class count");
    }
  }
  const std::size_t meta_len = r.get<std::uint32_t>("metadata length");
  const std::string text = r.bytes(meta_len, "metadata");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(text);
    m.label_names = meta.at("label_names").get<std::vector<std::string>>();
    m.split_seed = meta.at("split_seed").get<std::uint64_t>();
    m.split_ratio = meta.at("split_ratio").get<double>();
    m.subjects = meta.value("subjects", std::vector<std::string>{});
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatError::Kind::Corrupt, path.string() + ": bad metadata: " + e.what());
  }
  if (m.label_names.size() != classes) {
    throw FormatError(FormatError::Kind::Corrupt, path.string() + ": label names disagree with class count");
  }
  ds.train.assign(std::make_move_iterator(all.begin()), std::make_move_iterator(all.begin() + static_cast<std::ptrdiff_t>(q_train)));
  ds.test.assign(std::make_move_iterator(all.begin() + static_cast<std::ptrdiff_t>(q_train)), std::make_move_iterator(all.end()));
  return ds;
}

struct PrepareReport {
  std::size_t recordings_used = 0;
  std::vector<std::string> skipped;  // "path: reason"
  std::vector<std::size_t> per_class;
};

// load -> mesh -> normalize -> window -> split. Recordings that fail
// validation are skipped and reported through `warn`.
inline PreparedDataset prepare_dataset(const DatasetManifest& manifest, const ElectrodeLayout& layout,
                                       PrepareReport* report = nullptr,
                                       const std::function<void(const std::string&)>& warn = {}) {
  manifest.validate();
  PrepareReport local;
  PrepareReport& rep = report ? *report : local;
  rep.per_class.assign(manifest.classes(), 0);
  std::vector<WindowSegment> all;
  DatasetMeta meta;
  meta.window = manifest.window_size;
  meta.channels = layout.channels();
  meta.rows = layout.rows();
  meta.cols = layout.cols();
  meta.label_names = manifest.label_names;
  meta.split_seed = manifest.split_seed;
  meta.split_ratio = manifest.split_ratio;
  for (const auto& entry : manifest.recordings) {
    Recording rec;
    try {
      rec = read_recording_csv(manifest.resolve(entry), layout.channels());
    } catch (const RecordingError& e) {
      rep.skipped.push_back(entry.path + ": " + e.what());
      if (warn) warn("skipping recording " + entry.path + ": " + e.what());
      continue;
    }
    rec.subject = entry.subject;
    rec.label = entry.label;
    rec.sample_rate = manifest.sample_rate;
    auto windows = segment_windows(rec, layout, manifest.window_size);
    if (windows.empty() && warn) warn("recording " + entry.path + " is shorter than one window");
    for (auto& w : windows) {
      ++rep.per_class[static_cast<std::size_t>(w.label)];
      all.push_back(std::move(w));
    }
    ++rep.recordings_used;
    if (std::find(meta.subjects.begin(), meta.subjects.end(), entry.subject) == meta.subjects.end()) {
      meta.subjects.push_back(entry.subject);
    }
  }
  if (all.empty()) throw std::runtime_error("no windows could be produced from the manifest");
  auto [train, test] = split_dataset(std::move(all), manifest.split_ratio, manifest.split_seed);
  return PreparedDataset{std::move(meta), std::move(train), std::move(test)};
}

}  // namespace eegcrnn
