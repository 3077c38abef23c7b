#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "eegcrnn/checkpoint.hpp"
#include "eegcrnn/synth.hpp"
#include "eegcrnn/train.hpp"
#include "fixtures.hpp"

using namespace eegcrnn;
using fixture::iota;
using fixture::narrow;

namespace fs = std::filesystem;

namespace {

PreparedDataset small_synth(std::size_t windows, double noise, std::uint64_t seed = 1) {
  SynthSpec spec;
  spec.windows = windows;
  spec.windows_per_recording = 10;
  spec.noise = noise;
  spec.seed = seed;
  return synth_prepared(spec);
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "eegcrnn_train_test";
  fs::create_directories(dir);
  return dir / name;
}

std::string history_text(const History& h) {
  std::ostringstream out;
  write_history_csv(out, h);
  return out.str();
}

template <class T>
void expect_same_params(const ModelParams<T>& a, const ModelParams<T>& b) {
  auto na = a.named(), nb = b.named();
  ASSERT_EQ(na.size(), nb.size());
  for (std::size_t i = 0; i < na.size(); ++i) EXPECT_EQ(na[i].second.value(), nb[i].second.value()) << na[i].first;
}

// Independent recomputation of per-class scores from a confusion matrix.
void check_against_confusion(const Metrics& m) {
  const std::size_t k = m.confusion.size();
  std::size_t total = 0, trace = 0;
  for (std::size_t c = 0; c < k; ++c) {
    double tp = static_cast<double>(m.confusion[c][c]), col = 0, row = 0;
    for (std::size_t o = 0; o < k; ++o) {
      col += static_cast<double>(m.confusion[o][c]);
      row += static_cast<double>(m.confusion[c][o]);
      total += m.confusion[c][o];
    }
    trace += m.confusion[c][c];
    const double p = col > 0 ? tp / col : 0.0, r = row > 0 ? tp / row : 0.0;
    EXPECT_NEAR(m.precision[c], p, 1e-12);
    EXPECT_NEAR(m.recall[c], r, 1e-12);
    EXPECT_NEAR(m.f1[c], p + r > 0 ? 2 * p * r / (p + r) : 0.0, 1e-12);
    EXPECT_EQ(m.support[c], static_cast<std::size_t>(row));
  }
  EXPECT_EQ(m.total, total);
  EXPECT_NEAR(m.accuracy, static_cast<double>(trace) / static_cast<double>(total), 1e-12);
}

}  // namespace

TEST(Metrics, PerfectPredictorIsDiagonal) {
  std::vector<std::vector<std::size_t>> conf(5, std::vector<std::size_t>(5, 0));
  for (std::size_t c = 0; c < 5; ++c) conf[c][c] = 3 + c;
  auto m = metrics_from_confusion(conf, 0.0);
  EXPECT_EQ(m.accuracy, 1.0);
  for (std::size_t c = 0; c < 5; ++c) {
    EXPECT_EQ(m.precision[c], 1.0);
    EXPECT_EQ(m.recall[c], 1.0);
    EXPECT_EQ(m.f1[c], 1.0);
  }
}

TEST(Metrics, RecomputedFromConfusion) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::vector<std::size_t>> conf(5, std::vector<std::size_t>(5));
    for (auto& row : conf) {
      for (auto& v : row) v = rng() % 7;
    }
    if (trial % 5 == 0) {
      for (auto& row : conf) row[2] = 0;  // a never-predicted class
    }
    auto m = metrics_from_confusion(conf, 1.0);
    check_against_confusion(m);
    // the JSON report carries enough to redo the check
    auto j = nlohmann::json::parse(to_json(m, default_label_names()).dump());
    auto again = metrics_from_confusion(j.at("confusion").get<std::vector<std::vector<std::size_t>>>(), 1.0);
    for (std::size_t c = 0; c < 5; ++c) {
      EXPECT_NEAR(j["classes"][c]["f1"].get<double>(), again.f1[c], 1e-12);
      EXPECT_NEAR(j["classes"][c]["precision"].get<double>(), again.precision[c], 1e-12);
    }
  }
}

TEST(Metrics, ZeroConventionWhenNothingPredicted) {
  auto m = metrics_from_confusion({{2, 0}, {3, 0}}, 0.0);
  EXPECT_EQ(m.precision[1], 0.0);
  EXPECT_EQ(m.recall[1], 0.0);
  EXPECT_EQ(m.f1[1], 0.0);
}

TEST(Argmax, TiesGoToLowestIndex) {
  std::vector<double> v{0.1, 0.7, 0.7, 0.2};
  EXPECT_EQ(argmax(v.begin(), v.end()), 1u);
  std::vector<double> flat(5, 0.2);
  EXPECT_EQ(argmax(flat.begin(), flat.end()), 0u);
}

TEST(Evaluate, ConstantPredictorOnBalancedSetScoresChance) {
  auto data = small_synth(50, 0.5);
  auto p = param_init<double>(narrow(Architecture::Cascade), 1);
  p.logits.weight.mutable_value().fill(0.0);
  p.logits.bias.mutable_value()[2] = 1.0;
  std::vector<WindowSegment> all = data.train;
  all.insert(all.end(), data.test.begin(), data.test.end());
  auto m = evaluate(p, std::span<const WindowSegment>(all));
  EXPECT_DOUBLE_EQ(m.accuracy, 0.2);
  for (std::size_t t = 0; t < 5; ++t) EXPECT_EQ(m.confusion[t][2], 10u);
  check_against_confusion(m);
}

TEST(Evaluate, DeterministicAndThreadIndependent) {
  auto data = small_synth(100, 0.5);
  auto p = param_init<float>(narrow(Architecture::Parallel), 4);
  std::span<const WindowSegment> w(data.train);
  auto a = evaluate(p, w, 16, 1), b = evaluate(p, w, 16, 1), c = evaluate(p, w, 16, 3);
  EXPECT_EQ(a.confusion, b.confusion);
  EXPECT_EQ(a.mean_loss, b.mean_loss);
  EXPECT_EQ(a.confusion, c.confusion);
  EXPECT_EQ(a.mean_loss, c.mean_loss);
  EXPECT_THROW(evaluate(p, std::span<const WindowSegment>()), std::invalid_argument);
}

TEST(Predict, ProbabilitiesAndAgreementWithEvaluate) {
  auto data = small_synth(50, 0.5);
  auto p = param_init<double>(narrow(Architecture::Cnn3d), 2);
  std::span<const WindowSegment> w(data.test);
  const auto batch_out = infer(p, w, 8, 1);
  for (std::size_t i = 0; i < w.size(); ++i) {
    auto pr = predict(p, w[i]);
    double total = 0.0;
    for (double v : pr.probabilities) total += v;
    EXPECT_NEAR(total, 1.0, 1e-9);
    EXPECT_EQ(pr.label, batch_out.predictions[i]);
  }
  // a constant shift of every logit changes nothing
  auto shifted = p.clone();
  for (auto& b : shifted.logits.bias.mutable_value().values()) b += 3.5;
  for (std::size_t i = 0; i < w.size(); ++i) {
    auto a = predict(p, w[i]), b = predict(shifted, w[i]);
    EXPECT_EQ(a.label, b.label);
    for (std::size_t c = 0; c < 5; ++c) EXPECT_NEAR(a.probabilities[c], b.probabilities[c], 1e-12);
  }
  auto bad = w[0];
  bad.raw.pop_back();
  EXPECT_THROW(predict(p, bad), ShapeError);
}

TEST(Train, InitialLossNearLnK) {
  auto data = small_synth(50, 0.5);
  std::vector<WindowSegment> all = data.train;
  all.insert(all.end(), data.test.begin(), data.test.end());
  for (auto c : {canonical_config(Architecture::Cascade), canonical_config(Architecture::Parallel)}) {
    auto p = param_init<float>(c, 1);
    auto m = evaluate(p, std::span<const WindowSegment>(all));
    EXPECT_NEAR(m.mean_loss, std::log(5.0), 0.2) << to_string(c.arch);
  }
}

TEST(Train, SingleAdamStepDescends) {
  auto data = small_synth(50, 0.0);
  for (auto arch : {Architecture::Cascade, Architecture::Parallel}) {
    auto c = narrow(arch);
    c.keep_prob = 1.0;
    TrainConfig tc;
    auto s = init_train_state<double>(c, tc);
    auto rows = iota(16);
    std::span<const WindowSegment> w(data.train);
    auto loss_of = [&] {
      auto b = make_batch<double>(c, w, rows);
      return softmax_cross_entropy(forward(b, s.params, ForwardContext<double>{}), b.labels).loss.value().item();
    };
    const double before = loss_of();
    const auto stats = train_step(s, w, rows);
    EXPECT_DOUBLE_EQ(stats.loss, before);
    EXPECT_LT(loss_of(), before) << to_string(arch);
  }
}

TEST(Train, BatchLossMostlyMonotoneOverFirstSteps) {
  auto data = small_synth(100, 0.0);
  auto c = narrow(Architecture::Cascade);
  c.keep_prob = 1.0;
  auto s = init_train_state<double>(c, TrainConfig{});
  auto rows = iota(32);
  std::vector<double> losses;
  for (int step = 0; step < 11; ++step) losses.push_back(train_step(s, std::span<const WindowSegment>(data.train), rows).loss);
  int rises = 0;
  for (std::size_t i = 1; i < losses.size(); ++i) rises += losses[i] > losses[i - 1];
  EXPECT_LE(rises, 2);
  EXPECT_LT(losses.back(), losses.front());
}

TEST(Train, NanLossAborts) {
  auto data = small_synth(50, 0.5);
  auto s = init_train_state<double>(narrow(Architecture::Cascade), TrainConfig{});
  s.params.logits.bias.mutable_value()[0] = std::numeric_limits<double>::quiet_NaN();
  TrainConfig tc;
  tc.epochs = 1;
  EXPECT_THROW(train(s, data, tc), TrainingDiverged);
}

TEST(Train, DeterministicHistoryAndParameters) {
  auto data = small_synth(100, 0.5);
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch = 16;
  tc.seed = 7;
  auto a = init_train_state<float>(narrow(Architecture::Parallel), tc);
  auto b = init_train_state<float>(narrow(Architecture::Parallel), tc);
  train(a, data, tc);
  train(b, data, tc);
  EXPECT_EQ(history_text(a.history), history_text(b.history));
  expect_same_params(a.params, b.params);
  ASSERT_EQ(a.history.size(), 2u);
  EXPECT_TRUE(std::isfinite(a.history[1].test_acc));
}

TEST(Train, EarlyStoppingAfterPatienceEpochs) {
  auto data = small_synth(50, 0.5);
  TrainConfig tc;
  tc.epochs = 10;
  tc.patience = 2;
  auto s = init_train_state<float>(narrow(Architecture::Cnn2d), tc);
  s.best_test_loss = -1.0;  // unbeatable
  train(s, data, tc);
  EXPECT_EQ(s.epoch, 2u);
  EXPECT_TRUE(s.stopped);
}

TEST(Checkpoint, ResumeMatchesStraightRun) {
  auto data = small_synth(100, 0.5);
  TrainConfig tc;
  tc.epochs = 6;
  tc.batch = 16;
  tc.seed = 3;
  const auto cfg = narrow(Architecture::Cascade);
  auto straight = init_train_state<float>(cfg, tc);
  train(straight, data, tc);

  auto first = init_train_state<float>(cfg, tc);
  auto half = tc;
  half.epochs = 3;
  train(first, data, half);
  const auto path = scratch("resume.ckpt");
  save_checkpoint(path, first, tc);
  TrainConfig restored;
  auto resumed = load_checkpoint<float>(path, &restored);
  EXPECT_EQ(restored, tc);
  EXPECT_EQ(resumed.epoch, 3u);
  train(resumed, data, restored);

  EXPECT_EQ(history_text(resumed.history), history_text(straight.history));
  expect_same_params(resumed.params, straight.params);
  auto ma = evaluate(resumed.params, std::span<const WindowSegment>(data.test));
  auto mb = evaluate(straight.params, std::span<const WindowSegment>(data.test));
  EXPECT_EQ(ma.confusion, mb.confusion);
  EXPECT_EQ(ma.mean_loss, mb.mean_loss);
}

TEST(Checkpoint, ReloadGivesBitwiseForward) {
  auto data = small_synth(50, 0.5);
  for (auto cfg : {narrow(Architecture::Parallel, FusionKind::ConcatPointwiseConv), narrow(Architecture::Rnn)}) {
    auto s = init_train_state<double>(cfg, TrainConfig{});
    const auto path = scratch("reload.ckpt");
    save_checkpoint(path, s, TrainConfig{});
    auto t = load_checkpoint<double>(path);
    expect_same_params(s.params, t.params);
    EXPECT_EQ(s.params.config, t.params.config);
    auto a = infer(s.params, std::span<const WindowSegment>(data.test));
    auto b = infer(t.params, std::span<const WindowSegment>(data.test));
    EXPECT_EQ(a.probabilities, b.probabilities);
  }
}

TEST(Checkpoint, BadFilesGiveDistinctErrors) {
  auto s = init_train_state<float>(narrow(Architecture::Cnn1d), TrainConfig{});
  const auto good = scratch("good.ckpt");
  save_checkpoint(good, s, TrainConfig{});
  std::string bytes;
  {
    std::ifstream in(good, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  auto kind_of = [](const std::string& content, const std::string& name) {
    const auto path = scratch(name);
    std::ofstream(path, std::ios::binary) << content;
    try {
      load_checkpoint<float>(path);
    } catch (const FormatError& e) {
      return e.kind();
    }
    ADD_FAILURE() << name << " loaded";
    return FormatError::Kind::Corrupt;
  };
  using K = FormatError::Kind;
  EXPECT_EQ(kind_of("EEGW" + bytes.substr(4), "magic.ckpt"), K::BadMagic);
  auto version = bytes;
  version[4] = 9;
  EXPECT_EQ(kind_of(version, "version.ckpt"), K::VersionMismatch);
  EXPECT_EQ(kind_of(bytes.substr(0, bytes.size() - 7), "short.ckpt"), K::Truncated);
  auto flipped = bytes;
  flipped[flipped.size() - 5] ^= 0x40;
  EXPECT_EQ(kind_of(flipped, "flipped.ckpt"), K::Corrupt);
  EXPECT_EQ(kind_of(bytes.substr(0, 8), "header.ckpt"), K::Truncated);

  // rewrite the header so the declared conv depth disagrees with the tensors
  const std::uint32_t len = static_cast<unsigned char>(bytes[6]) | static_cast<unsigned char>(bytes[7]) << 8 |
                            static_cast<unsigned char>(bytes[8]) << 16 | static_cast<unsigned char>(bytes[9]) << 24;
  auto header = nlohmann::json::parse(bytes.substr(10, len));
  header["model"]["conv_depth"] = 2;
  const auto text = header.dump();
  std::string rewritten = bytes.substr(0, 6);
  for (int i = 0; i < 4; ++i) rewritten.push_back(static_cast<char>(text.size() >> (8 * i)));
  rewritten += text + bytes.substr(10 + len);
  EXPECT_EQ(kind_of(rewritten, "shape.ckpt"), K::ShapeMismatch);

  EXPECT_THROW(load_checkpoint<double>(good), FormatError);  // stored as f32
}

TEST(History, CsvHasHeaderAndFullPrecision) {
  History h{{1, 1.0 / 3.0, 0.5, 0.25, 0.75}};
  const auto text = history_text(h);
  EXPECT_EQ(text.substr(0, text.find('\n')), "epoch,train_loss,train_acc,test_loss,test_acc");
  EXPECT_NE(text.find("0.33333333333333331"), std::string::npos);
}
