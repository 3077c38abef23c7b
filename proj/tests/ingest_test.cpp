#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <numeric>
#include <set>

#include "eegcrnn/dataset.hpp"
#include "eegcrnn/layout.hpp"
#include "eegcrnn/synth.hpp"

using namespace eegcrnn;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("eegcrnn_ingest_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<double> random_sample(std::mt19937_64& rng, double lo = -5.0, double hi = 5.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(64);
  for (auto& x : v) x = d(rng);
  return v;
}

Recording ramp_recording(std::size_t n, int label = 1) {
  Recording rec;
  rec.label = label;
  rec.samples.resize(n * 64);
  std::mt19937_64 rng(n);
  std::normal_distribution<double> g;
  for (auto& v : rec.samples) v = static_cast<float>(g(rng));
  return rec;
}

}  // namespace

TEST(Layout, DefaultPlacement) {
  const auto& layout = layout_default();
  EXPECT_EQ(layout.rows(), 10u);
  EXPECT_EQ(layout.cols(), 11u);
  EXPECT_EQ(layout.channel_at(4, 5), 11);
  EXPECT_EQ(layout.channel_at(9, 5), 64);
  EXPECT_EQ(layout.channel_at(0, 0), std::nullopt);
  EXPECT_EQ(layout.channel_at(1, 6), 28);
  EXPECT_EQ(layout.channel_at(1, 7), 29);
  EXPECT_EQ(layout.channel_at(0, 4), 22);
  EXPECT_EQ(layout.channel_at(4, 0), 43);
  EXPECT_EQ(layout.channel_at(4, 10), 44);
}

TEST(Layout, ExhaustiveCount) {
  const auto& layout = layout_default();
  std::multiset<int> seen;
  std::size_t nulls = 0;
  for (std::size_t r = 0; r < 10; ++r)
    for (std::size_t c = 0; c < 11; ++c) {
      if (auto ch = layout.channel_at(r, c)) {
        seen.insert(*ch);
      } else {
        ++nulls;
      }
    }
  EXPECT_EQ(seen.size(), 64u);
  EXPECT_EQ(nulls, 46u);
  for (int ch = 1; ch <= 64; ++ch) EXPECT_EQ(seen.count(ch), 1u) << "channel " << ch;
}

TEST(Layout, RejectsDuplicateOrMissingChannel) {
  EXPECT_THROW(ElectrodeLayout(1, 3, {1, 1, 2}), std::invalid_argument);
  EXPECT_THROW(ElectrodeLayout(1, 3, {1, 3, 0}), std::invalid_argument);
  EXPECT_THROW(ElectrodeLayout(2, 2, {1, 2, 3}), std::invalid_argument);
}

TEST(Mesh, ZerosAndSingleChannel) {
  const auto& layout = layout_default();
  std::vector<double> zeros(64, 0.0);
  auto m0 = to_mesh<double>(zeros, layout);
  EXPECT_TRUE(std::all_of(m0.values.begin(), m0.values.end(), [](double v) { return v == 0.0; }));
  std::vector<double> one(64, 0.0);
  one[10] = 1.0;
  auto m1 = to_mesh<double>(one, layout);
  for (std::size_t i = 0; i < m1.values.size(); ++i) EXPECT_EQ(m1.values[i], i == 4 * 11 + 5 ? 1.0 : 0.0);
  EXPECT_EQ(from_mesh(m0, layout), zeros);
}

TEST(Mesh, WrongLengthAndNonZeroNullRejected) {
  const auto& layout = layout_default();
  std::vector<double> short_sample(63, 0.0);
  EXPECT_THROW(to_mesh<double>(short_sample, layout), std::invalid_argument);
  MeshFrame<double> bad{10, 11, std::vector<double>(110, 0.0)};
  bad.values[0] = 1.0;
  EXPECT_THROW(from_mesh(bad, layout), std::invalid_argument);
}

TEST(Mesh, RandomSampleIsPermutedIntoMesh) {
  const auto& layout = layout_default();
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    auto v = random_sample(rng);
    auto mesh = to_mesh<double>(v, layout);
    std::multiset<double> from_cells, from_sample(v.begin(), v.end());
    for (std::size_t i = 0; i < mesh.values.size(); ++i) {
      if (layout.is_null(i)) {
        EXPECT_EQ(mesh.values[i], 0.0);
      } else {
        from_cells.insert(mesh.values[i]);
      }
    }
    EXPECT_EQ(from_cells, from_sample);
  }
}

TEST(Mesh, RoundTripIsBitExact) {
  const auto& layout = layout_default();
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10000; ++trial) {
    auto v = random_sample(rng, -1e6, 1e6);
    ASSERT_EQ(from_mesh(to_mesh<double>(v, layout), layout), v);
  }
}

TEST(ZScore, ConstantMeshIsZero) {
  const auto& layout = layout_default();
  std::vector<double> v(64, 3.25);
  auto z = zscore_mesh(to_mesh<double>(v, layout), layout);
  EXPECT_TRUE(std::all_of(z.values.begin(), z.values.end(), [](double x) { return x == 0.0; }));
}

TEST(ZScore, SymmetricPairScript) {
  // Two active channels at -a and +a, 62 at zero: mean 0, population std a*sqrt(2/64).
  const auto& layout = layout_default();
  const double a = 2.0;
  std::vector<double> v(64, 0.0);
  v[4] = -a;
  v[30] = a;
  auto z = zscore_mesh(to_mesh<double>(v, layout), layout);
  const double sd = a * std::sqrt(2.0 / 64.0);
  EXPECT_NEAR(z.values[layout.cell_of(4)], -a / sd, 1e-12);
  EXPECT_NEAR(z.values[layout.cell_of(30)], a / sd, 1e-12);
  EXPECT_EQ(z.values[layout.cell_of(0)], 0.0);
}

TEST(ZScore, RandomMeshStatisticsAndNulls) {
  const auto& layout = layout_default();
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    auto z = zscore_mesh(to_mesh<double>(random_sample(rng), layout), layout);
    double mean = 0.0, sq = 0.0;
    for (std::size_t ch = 0; ch < 64; ++ch) mean += z.values[layout.cell_of(ch)] / 64.0;
    for (std::size_t ch = 0; ch < 64; ++ch) sq += std::pow(z.values[layout.cell_of(ch)] - mean, 2) / 64.0;
    EXPECT_LE(std::abs(mean), 1e-9);
    EXPECT_NEAR(std::sqrt(sq), 1.0, 1e-9);
    for (std::size_t i = 0; i < z.values.size(); ++i) {
      if (layout.is_null(i)) {
        EXPECT_EQ(z.values[i], 0.0);
      }
    }
  }
}

TEST(ZScore, AffineInvariance) {
  const auto& layout = layout_default();
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> scale(0.01, 100.0), shift(-50.0, 50.0);
  for (int trial = 0; trial < 200; ++trial) {
    auto v = random_sample(rng);
    const double a = scale(rng), b = shift(rng);
    auto w = v;
    for (auto& x : w) x = a * x + b;
    auto z1 = zscore_mesh(to_mesh<double>(v, layout), layout);
    auto z2 = zscore_mesh(to_mesh<double>(w, layout), layout);
    for (std::size_t i = 0; i < z1.values.size(); ++i) EXPECT_NEAR(z1.values[i], z2.values[i], 1e-9);
  }
}

TEST(Windows, CountsFollowFormula) {
  const auto& layout = layout_default();
  EXPECT_EQ(segment_windows(ramp_recording(10), layout, 10).size(), 1u);
  EXPECT_EQ(segment_windows(ramp_recording(160), layout, 10).size(), 31u);
  EXPECT_EQ(segment_windows(ramp_recording(9), layout, 10).size(), 0u);
  for (std::size_t n = 10; n < 80; ++n) {
    EXPECT_EQ(segment_windows(ramp_recording(n), layout, 10).size(), (n - 10) / 5 + 1);
    EXPECT_EQ(window_count(n, 10), (n - 10) / 5 + 1);
  }
  EXPECT_THROW(segment_windows(ramp_recording(20), layout, 9), std::invalid_argument);
}

TEST(Windows, OverlapAndMeshConsistency) {
  const auto& layout = layout_default();
  auto rec = ramp_recording(160, 3);
  for (std::size_t t = 40; t < 45; ++t) std::fill_n(rec.samples.begin() + static_cast<std::ptrdiff_t>(t * 64), 64, 0.0f);
  auto windows = segment_windows(rec, layout, 10);
  ASSERT_EQ(windows.size(), 31u);
  for (std::size_t j = 0; j + 1 < windows.size(); ++j) {
    // second half of window j == first half of window j + 1
    EXPECT_TRUE(std::equal(windows[j].raw.begin() + 5 * 64, windows[j].raw.end(), windows[j + 1].raw.begin()));
    EXPECT_FALSE(std::equal(windows[j].raw.begin(), windows[j].raw.begin() + 64, windows[j + 1].raw.begin()));
  }
  for (const auto& w : windows) {
    EXPECT_EQ(w.label, 3);
    for (std::size_t k = 0; k < 10; ++k) {
      std::vector<float> raw(w.raw.begin() + static_cast<std::ptrdiff_t>(k * 64),
                             w.raw.begin() + static_cast<std::ptrdiff_t>((k + 1) * 64));
      auto mesh = to_mesh<float>(raw, layout);
      EXPECT_TRUE(std::equal(mesh.values.begin(), mesh.values.end(), w.meshes.begin() + static_cast<std::ptrdiff_t>(k * 110)));
      for (std::size_t i = 0; i < 110; ++i) {
        if (layout.is_null(i)) {
          EXPECT_EQ(w.meshes[k * 110 + i], 0.0f);
        }
      }
    }
  }
  // Missing samples survive as zero frames: window starting at 40 is all zeros in its first 5 steps.
  EXPECT_TRUE(std::all_of(windows[8].raw.begin(), windows[8].raw.begin() + 5 * 64, [](float v) { return v == 0.0f; }));
}

TEST(Split, PartitionSizesAndDeterminism) {
  std::vector<WindowSegment> segs(100);
  for (std::size_t i = 0; i < segs.size(); ++i) segs[i].label = static_cast<int>(i);
  auto [train, test] = split_dataset(segs, 0.75, 9);
  EXPECT_EQ(train.size(), 75u);
  EXPECT_EQ(test.size(), 25u);
  auto [train2, test2] = split_dataset(segs, 0.75, 9);
  EXPECT_EQ(train, train2);
  EXPECT_EQ(test, test2);
  std::set<int> all;
  for (const auto& s : train) all.insert(s.label);
  for (const auto& s : test) EXPECT_TRUE(all.insert(s.label).second);
  EXPECT_EQ(all.size(), 100u);

  std::vector<WindowSegment> odd(101);
  auto [a, b] = split_dataset(odd, 0.5, 1);
  EXPECT_EQ(a.size() + b.size(), 101u);
  EXPECT_TRUE((a.size() == 50 && b.size() == 51) || (a.size() == 51 && b.size() == 50));

  EXPECT_THROW(split_dataset({}, 0.75, 1), std::invalid_argument);
  EXPECT_THROW(split_dataset(segs, 1.0, 1), std::invalid_argument);
}

TEST(PreparedFormat, RoundTripAndErrors) {
  auto dir = scratch_dir("format");
  SynthSpec spec;
  spec.windows = 60;
  spec.windows_per_recording = 6;
  auto ds = synth_prepared(spec);
  save_prepared(dir / "d.eegw", ds);
  auto back = load_prepared(dir / "d.eegw");
  EXPECT_EQ(back.meta, ds.meta);
  EXPECT_EQ(back.train, ds.train);
  EXPECT_EQ(back.test, ds.test);

  // Header bytes: magic then version 1 little-endian.
  std::ifstream raw(dir / "d.eegw", std::ios::binary);
  char head[6];
  raw.read(head, 6);
  EXPECT_EQ(std::string(head, 4), "EEGW");
  EXPECT_EQ(head[4], 1);
  EXPECT_EQ(head[5], 0);
  raw.close();

  const auto full = fs::file_size(dir / "d.eegw");
  fs::copy_file(dir / "d.eegw", dir / "t.eegw");
  fs::resize_file(dir / "t.eegw", full / 2);
  try {
    load_prepared(dir / "t.eegw");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.kind(), FormatError::Kind::Truncated);
  }

  {
    std::ofstream bad(dir / "m.eegw", std::ios::binary);
    bad << "NOPE and some more bytes";
  }
  try {
    load_prepared(dir / "m.eegw");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.kind(), FormatError::Kind::BadMagic);
    EXPECT_NE(std::string(e.what()).find("EEGW"), std::string::npos);
  }

  {
    std::fstream f(dir / "d.eegw", std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(4);
    f.put(7);
  }
  try {
    load_prepared(dir / "d.eegw");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.kind(), FormatError::Kind::VersionMismatch);
  }
}

TEST(Synth, DefaultSpecIsBalanced) {
  SynthSpec spec;
  auto result = synth_dataset(spec);
  std::vector<std::size_t> per_class(5, 0);
  for (const auto& rec : result.recordings) per_class[static_cast<std::size_t>(rec.label)] += window_count(rec.length(), 10);
  for (auto c : per_class) EXPECT_EQ(c, 400u);

  spec.windows = 2003;
  auto uneven = synth_dataset(spec);
  std::fill(per_class.begin(), per_class.end(), 0);
  for (const auto& rec : uneven.recordings) per_class[static_cast<std::size_t>(rec.label)] += window_count(rec.length(), 10);
  const auto [lo, hi] = std::minmax_element(per_class.begin(), per_class.end());
  EXPECT_LE(*hi - *lo, 1u);
  EXPECT_EQ(std::accumulate(per_class.begin(), per_class.end(), std::size_t{0}), 2003u);
}

TEST(Synth, InconsistentSpecRejected) {
  SynthSpec spec;
  spec.label_names.pop_back();
  EXPECT_THROW(spec.validate(), std::invalid_argument);
  SynthSpec bad_channel;
  bad_channel.classes[0].group_a.push_back(65);
  EXPECT_THROW(synth_dataset(bad_channel), std::invalid_argument);
  SynthSpec bad_freq;
  bad_freq.freq_max = 100.0;
  EXPECT_THROW(bad_freq.validate(), std::invalid_argument);
}

TEST(Synth, SameSeedIdenticalAndCsvPipelineMatchesDirect) {
  auto dir = scratch_dir("synth");
  SynthSpec spec;
  spec.windows = 100;
  spec.windows_per_recording = 10;
  spec.missing_rate = 0.05;
  auto a = synth_dataset(spec);
  auto b = synth_dataset(spec);
  ASSERT_EQ(a.recordings.size(), b.recordings.size());
  for (std::size_t i = 0; i < a.recordings.size(); ++i) EXPECT_EQ(a.recordings[i].samples, b.recordings[i].samples);

  const auto manifest_path = write_synth(dir, a);
  auto manifest = load_manifest(manifest_path);
  PrepareReport report;
  auto prepared = prepare_dataset(manifest, layout_default(), &report);
  EXPECT_EQ(report.recordings_used, a.recordings.size());
  EXPECT_TRUE(report.skipped.empty());
  auto direct = synth_prepared(spec);
  EXPECT_EQ(prepared.train, direct.train);
  EXPECT_EQ(prepared.test, direct.test);
  EXPECT_EQ(prepared.size(), 100u);
}

TEST(Prepare, CorruptRecordingSkippedWithWarning) {
  auto dir = scratch_dir("corrupt");
  SynthSpec spec;
  spec.windows = 20;
  spec.windows_per_recording = 2;
  auto result = synth_dataset(spec);
  const auto manifest_path = write_synth(dir, result);
  {
    std::ofstream broken(dir / result.manifest.recordings[3].path);
    broken << "ch1,ch2\n1,2\n";
  }
  {
    std::ofstream nan_row(dir / result.manifest.recordings[5].path, std::ios::app);
    nan_row << "nan";
    for (int i = 1; i < 64; ++i) nan_row << ",0";
    nan_row << "\n";
  }
  auto manifest = load_manifest(manifest_path);
  PrepareReport report;
  std::vector<std::string> warnings;
  auto ds = prepare_dataset(manifest, layout_default(), &report, [&](const std::string& w) { warnings.push_back(w); });
  EXPECT_EQ(report.skipped.size(), 2u);
  EXPECT_EQ(warnings.size(), 2u);
  EXPECT_EQ(report.recordings_used, result.recordings.size() - 2);
  EXPECT_EQ(ds.size(), 16u);
}

TEST(Manifest, LabelsMustBeDense) {
  auto dir = scratch_dir("manifest");
  {
    std::ofstream out(dir / "m.json");
    out << R"({"labels": ["a", "b"], "recordings": [{"path": "x.csv", "label": 2}]})";
  }
  EXPECT_THROW(load_manifest(dir / "m.json"), std::invalid_argument);
}
