#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace eegcrnn {

enum class Architecture { Cascade, Parallel, Cnn1d, Cnn2d, Cnn3d, Rnn };
enum class FusionKind { Concatenate, Add, ConcatDense, ConcatPointwiseConv };

inline std::string to_string(Architecture a) {
  switch (a) {
    case Architecture::Cascade: return "cascade";
    case Architecture::Parallel: return "parallel";
    case Architecture::Cnn1d: return "cnn1d";
    case Architecture::Cnn2d: return "cnn2d";
    case Architecture::Cnn3d: return "cnn3d";
    case Architecture::Rnn: return "rnn";
  }
  return "?";
}

inline std::string to_string(FusionKind f) {
  switch (f) {
    case FusionKind::Concatenate: return "cat";
    case FusionKind::Add: return "add";
    case FusionKind::ConcatDense: return "cat-fc";
    case FusionKind::ConcatPointwiseConv: return "cat-conv";
  }
  return "?";
}

inline Architecture parse_architecture(const std::string& s) {
  for (auto a : {Architecture::Cascade, Architecture::Parallel, Architecture::Cnn1d, Architecture::Cnn2d,
                 Architecture::Cnn3d, Architecture::Rnn}) {
    if (to_string(a) == s) return a;
  }
  throw std::invalid_argument("unknown architecture '" + s + "'");
}

inline FusionKind parse_fusion(const std::string& s) {
  for (auto f : {FusionKind::Concatenate, FusionKind::Add, FusionKind::ConcatDense, FusionKind::ConcatPointwiseConv}) {
    if (to_string(f) == s) return f;
  }
  throw std::invalid_argument("unknown fusion '" + s + "' (expected cat, add, cat-fc or cat-conv)");
}

struct ModelConfig {
  Architecture arch = Architecture::Cascade;
  FusionKind fusion = FusionKind::Concatenate;  // parallel only
  std::size_t window = 10;                      // S
  std::size_t rows = 10;                        // h
  std::size_t cols = 11;                        // w
  std::size_t channels = 64;                    // n
  std::size_t fc_width = 1024;                  // l
  std::size_t hidden = 64;                      // d (cascade) or v
  std::size_t classes = 5;                      // K
  std::size_t conv_depth = 3;
  std::size_t conv_maps = 32;                   // first layer; doubles per layer
  std::size_t lstm_depth = 2;
  double keep_prob = 0.5;
  bool cnn_fc = true;       // dense(l) after the conv stack
  bool post_rnn_fc = true;  // dense(l) after the last LSTM layer

  bool uses_conv() const { return arch != Architecture::Rnn; }
  bool uses_lstm() const {
    return arch == Architecture::Cascade || arch == Architecture::Parallel || arch == Architecture::Rnn;
  }
  std::size_t conv_rank() const {
    return arch == Architecture::Cnn1d ? 1 : arch == Architecture::Cnn3d ? 3 : 2;
  }
  std::vector<std::size_t> conv_widths() const {
    std::vector<std::size_t> w;
    for (std::size_t i = 0; i < conv_depth; ++i) w.push_back(conv_maps << i);
    return w;
  }
  // Flattened conv output per input frame (per window for cnn3d).
  std::size_t conv_flat() const {
    const std::size_t last = conv_maps << (conv_depth - 1);
    switch (conv_rank()) {
      case 1: return last * channels;
      case 3: return last * window * rows * cols;
      default: return last * rows * cols;
    }
  }
  std::size_t spatial_features() const { return cnn_fc ? fc_width : conv_flat(); }
  std::size_t temporal_features() const { return post_rnn_fc ? fc_width : hidden; }
  std::size_t fused_features() const {
    switch (fusion) {
      case FusionKind::Concatenate: return spatial_features() + temporal_features();
      case FusionKind::ConcatDense: return fc_width;
      default: return spatial_features();
    }
  }
  // Width of the representation fed to the logit layer.
  std::size_t head_features() const {
    switch (arch) {
      case Architecture::Parallel: return fused_features();
      case Architecture::Cascade:
      case Architecture::Rnn: return temporal_features();
      default: return spatial_features();
    }
  }

  void validate() const {
    auto positive = [](std::size_t v, const char* name) {
      if (v == 0) throw std::invalid_argument(std::string("model config: ") + name + " must be positive");
    };
    positive(window, "window_size");
    positive(rows, "rows");
    positive(cols, "cols");
    positive(channels, "channels");
    positive(fc_width, "fc_width");
    positive(hidden, "hidden");
    positive(conv_maps, "conv_maps");
    if (classes < 2) throw std::invalid_argument("model config: need at least two classes");
    if (uses_conv() && (conv_depth < 1 || conv_depth > 3)) {
      throw std::invalid_argument("model config: conv_depth must be 1, 2 or 3");
    }
    if (uses_lstm() && (lstm_depth < 1 || lstm_depth > 2)) {
      throw std::invalid_argument("model config: lstm_depth must be 1 or 2");
    }
    if (!(keep_prob > 0.0 && keep_prob <= 1.0)) throw std::invalid_argument("model config: keep_prob must lie in (0, 1]");
    if ((arch == Architecture::Cnn1d || arch == Architecture::Cnn2d || arch == Architecture::Cnn3d) && !cnn_fc) {
      throw std::invalid_argument("model config: CNN baselines require cnn_fc");
    }
    if (arch == Architecture::Parallel &&
        (fusion == FusionKind::Add || fusion == FusionKind::ConcatPointwiseConv) &&
        spatial_features() != temporal_features()) {
      throw std::invalid_argument("model config: " + to_string(fusion) + " fusion needs equal feature sizes, got " +
                                  std::to_string(spatial_features()) + " and " +
                                  std::to_string(temporal_features()));
    }
  }

  bool operator==(const ModelConfig&) const = default;
};

// Published layer sizes for each architecture.
inline ModelConfig canonical_config(Architecture arch, FusionKind fusion = FusionKind::Concatenate) {
  ModelConfig c;
  c.arch = arch;
  c.fusion = fusion;
  c.hidden = arch == Architecture::Cascade ? 64 : 16;
  return c;
}

// CLI names: rnn64 and rnn16 are the RNN baseline at either hidden size.
inline ModelConfig config_for_cli_arch(const std::string& name) {
  if (name == "rnn64" || name == "rnn16") {
    auto c = canonical_config(Architecture::Rnn);
    c.hidden = name == "rnn64" ? 64 : 16;
    return c;
  }
  if (name == "rnn") throw std::invalid_argument("architecture 'rnn' needs a size: use rnn64 or rnn16");
  return canonical_config(parse_architecture(name));
}

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"arch", to_string(c.arch)},
          {"fusion", to_string(c.fusion)},
          {"window_size", c.window},
          {"rows", c.rows},
          {"cols", c.cols},
          {"channels", c.channels},
          {"fc_width", c.fc_width},
          {"hidden", c.hidden},
          {"classes", c.classes},
          {"conv_depth", c.conv_depth},
          {"conv_maps", c.conv_maps},
          {"lstm_depth", c.lstm_depth},
          {"keep_prob", c.keep_prob},
          {"cnn_fc", c.cnn_fc},
          {"post_rnn_fc", c.post_rnn_fc}};
}

// Missing keys keep the values already in `c`.
inline ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig c = {}) {
  if (j.contains("arch")) {
    const auto name = j["arch"].get<std::string>();
    if (name == "rnn64" || name == "rnn16") {
      c.arch = Architecture::Rnn;
      c.hidden = name == "rnn64" ? 64 : 16;
    } else {
      c.arch = parse_architecture(name);
    }
  }
  if (j.contains("fusion")) c.fusion = parse_fusion(j["fusion"].get<std::string>());
  c.window = j.value("window_size", c.window);
  c.rows = j.value("rows", c.rows);
  c.cols = j.value("cols", c.cols);
  c.channels = j.value("channels", c.channels);
  c.fc_width = j.value("fc_width", c.fc_width);
  c.hidden = j.value("hidden", c.hidden);
  c.classes = j.value("classes", c.classes);
  c.conv_depth = j.value("conv_depth", c.conv_depth);
  c.conv_maps = j.value("conv_maps", c.conv_maps);
  c.lstm_depth = j.value("lstm_depth", c.lstm_depth);
  c.keep_prob = j.value("keep_prob", c.keep_prob);
  c.cnn_fc = j.value("cnn_fc", c.cnn_fc);
  c.post_rnn_fc = j.value("post_rnn_fc", c.post_rnn_fc);
  return c;
}

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch = 64;
  double learning_rate = 1e-4;
  std::uint64_t seed = 1;
  bool shuffle = true;
  std::size_t patience = 0;  // 0 disables early stopping on test loss
  std::string precision = "f32";

  void validate() const {
    if (epochs < 1) throw std::invalid_argument("train config: epochs must be >= 1");
    if (batch < 1) throw std::invalid_argument("train config: batch must be >= 1");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("train config: learning_rate must be positive");
    if (precision != "f32" && precision != "f64") {
      throw std::invalid_argument("train config: precision must be f32 or f64");
    }
  }
  bool operator==(const TrainConfig&) const = default;
};

inline nlohmann::json to_json(const TrainConfig& t) {
  return {{"epochs", t.epochs},   {"batch", t.batch},         {"learning_rate", t.learning_rate},
          {"seed", t.seed},       {"shuffle", t.shuffle},     {"patience", t.patience},
          {"precision", t.precision}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig t = {}) {
  t.epochs = j.value("epochs", t.epochs);
  t.batch = j.value("batch", t.batch);
  t.learning_rate = j.value("learning_rate", t.learning_rate);
  t.seed = j.value("seed", t.seed);
  t.shuffle = j.value("shuffle", t.shuffle);
  t.patience = j.value("patience", t.patience);
  t.precision = j.value("precision", t.precision);
  return t;
}

}  // namespace eegcrnn
