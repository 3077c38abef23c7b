#pragma once

#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "eegcrnn/binary_io.hpp"
#include "eegcrnn/train.hpp"

namespace eegcrnn {

// "EEGC", u16 version, u32 header length, JSON header, then the tensor
// payload: parameters, Adam first moments, Adam second moments, each in
// named() order as little-endian f32 or f64.
inline constexpr char kCheckpointMagic[4] = {'E', 'E', 'G', 'C'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

namespace detail {

inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) h = (h ^ c) * 0x100000001b3ULL;
  return h;
}

inline nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }
inline double number_or_nan(const nlohmann::json& j) {
  return j.is_number() ? j.get<double>() : std::numeric_limits<double>::quiet_NaN();
}

template <std::floating_point T>
void put_value(std::ostream& out, T v) {
  if constexpr (sizeof(T) == 4) {
    io::put_f32(out, v);
  } else {
    io::put_f64(out, v);
  }
}

template <std::floating_point T>
T get_value(io::Reader& r) {
  if constexpr (sizeof(T) == 4) {
    return r.get_f32("tensor payload");
  } else {
    return r.get_f64("tensor payload");
  }
}

}  // namespace detail

template <std::floating_point T>
constexpr const char* precision_name() {
  return sizeof(T) == 4 ? "f32" : "f64";
}

template <std::floating_point T>
void save_checkpoint(const std::filesystem::path& path, const TrainState<T>& s, const TrainConfig& train) {
  const auto named = s.params.named();
  std::ostringstream payload;
  for (const auto& [name, v] : named) {
    for (T x : v.value().values()) detail::put_value(payload, x);
  }
  for (const auto* moments : {&s.adam.first, &s.adam.second}) {
    for (const auto& m : *moments) {
      for (T x : m.values()) detail::put_value(payload, x);
    }
  }
  const std::string body = payload.str();

  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& [name, v] : named) tensors.push_back({{"name", name}, {"shape", v.shape()}});
  nlohmann::json history = nlohmann::json::array();
  for (const auto& r : s.history) {
    history.push_back({{"epoch", r.epoch},
                       {"train_loss", detail::finite_or_null(r.train_loss)},
                       {"train_acc", detail::finite_or_null(r.train_acc)},
                       {"test_loss", detail::finite_or_null(r.test_loss)},
                       {"test_acc", detail::finite_or_null(r.test_acc)}});
  }
  std::ostringstream rng;
  rng << s.rng;
  const auto& h = s.adam.hyper;
  nlohmann::json header{
      {"precision", precision_name<T>()},
      {"model", to_json(s.params.config)},
      {"train", to_json(train)},
      {"epoch", s.epoch},
      {"history", history},
      {"rng", rng.str()},
      {"adam", {{"step", s.adam.step}, {"learning_rate", h.learning_rate}, {"beta1", h.beta1},
                {"beta2", h.beta2}, {"epsilon", h.epsilon}, {"moments", !s.adam.first.empty()}}},
      {"early_stop", {{"best_test_loss", detail::finite_or_null(s.best_test_loss)},
                      {"since_best", s.since_best}, {"stopped", s.stopped}}},
      {"tensors", tensors},
      {"payload_bytes", body.size()},
      {"payload_fnv1a", detail::fnv1a(body)}};
  const std::string text = header.dump();

  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(kCheckpointMagic, 4);
    io::put<std::uint16_t>(out, kCheckpointVersion);
    io::put<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

struct CheckpointHeader {
  nlohmann::json json;
  std::string payload;
};

inline CheckpointHeader read_checkpoint_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  io::Reader r(io::slurp(in));
  const auto where = path.string() + ": ";
  if (r.remaining() < 4 || r.bytes(4, "magic") != std::string(kCheckpointMagic, 4)) {
    throw FormatError(FormatError::Kind::BadMagic, where + "not a checkpoint (expected magic \"EEGC\")");
  }
  const auto version = r.get<std::uint16_t>("version");
  if (version != kCheckpointVersion) {
    throw FormatError(FormatError::Kind::VersionMismatch, where + "checkpoint version " + std::to_string(version) +
                                                              ", this build reads version " +
                                                              std::to_string(kCheckpointVersion));
  }
  const auto length = r.get<std::uint32_t>("header length");
  CheckpointHeader out;
  try {
    out.json = nlohmann::json::parse(r.bytes(length, "header"));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(FormatError::Kind::Corrupt, where + "unreadable checkpoint header: " + e.what());
  }
  try {
    const auto expected = out.json.at("payload_bytes").get<std::size_t>();
    if (r.remaining() < expected) {
      throw FormatError(FormatError::Kind::Truncated, where + "tensor payload holds " + std::to_string(r.remaining()) +
                                                          " of " + std::to_string(expected) + " bytes");
    }
    if (r.remaining() > expected) {
      throw FormatError(FormatError::Kind::Corrupt, where + std::to_string(r.remaining() - expected) +
                                                        " trailing bytes after the tensor payload");
    }
    out.payload = r.bytes(expected, "tensor payload");
    if (detail::fnv1a(out.payload) != out.json.at("payload_fnv1a").get<std::uint64_t>()) {
      throw FormatError(FormatError::Kind::Corrupt, where + "tensor payload checksum mismatch");
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatError::Kind::Corrupt, where + "malformed checkpoint header: " + e.what());
  }
  return out;
}

inline std::string checkpoint_precision(const std::filesystem::path& path) {
  return read_checkpoint_header(path).json.value("precision", std::string("f32"));
}

// Loads into a fresh state; nothing is returned unless the whole file checks out.
template <std::floating_point T>
TrainState<T> load_checkpoint(const std::filesystem::path& path, TrainConfig* train = nullptr) {
  const auto file = read_checkpoint_header(path);
  const auto& j = file.json;
  const auto where = path.string() + ": ";
  try {
    if (j.at("precision").get<std::string>() != precision_name<T>()) {
      throw FormatError(FormatError::Kind::ShapeMismatch, where + "checkpoint stores " +
                                                              j.at("precision").get<std::string>() +
                                                              " tensors, requested " + precision_name<T>());
    }
    const ModelConfig model = model_config_from_json(j.at("model"));
    model.validate();
    TrainState<T> s;
    s.params = param_init<T>(model, 0);
    auto named = s.params.named();
    const auto& tensors = j.at("tensors");
    if (tensors.size() != named.size()) {
      throw FormatError(FormatError::Kind::ShapeMismatch, where + "checkpoint lists " +
                                                              std::to_string(tensors.size()) + " tensors, model has " +
                                                              std::to_string(named.size()));
    }
    for (std::size_t i = 0; i < named.size(); ++i) {
      const auto name = tensors[i].at("name").get<std::string>();
      const auto shape = tensors[i].at("shape").get<Shape>();
      if (name != named[i].first || shape != named[i].second.shape()) {
        throw FormatError(FormatError::Kind::ShapeMismatch,
                          where + "tensor " + std::to_string(i) + " is " + name + " " + shape_str(shape) +
                              ", model expects " + named[i].first + " " + shape_str(named[i].second.shape()));
      }
    }
    const auto& adam = j.at("adam");
    const bool moments = adam.at("moments").get<bool>();
    std::size_t values = s.params.count() * (moments ? 3 : 1);
    if (file.payload.size() != values * sizeof(T)) {
      throw FormatError(FormatError::Kind::ShapeMismatch, where + "payload size does not match the tensor list");
    }
    io::Reader r(std::vector<char>(file.payload.begin(), file.payload.end()));
    for (auto& [name, v] : named) {
      for (T& x : v.mutable_value().values()) x = detail::get_value<T>(r);
    }
    s.adam.hyper = {adam.at("learning_rate").get<double>(), adam.at("beta1").get<double>(),
                    adam.at("beta2").get<double>(), adam.at("epsilon").get<double>()};
    s.adam.step = adam.at("step").get<std::uint64_t>();
    if (moments) {
      s.adam.init(s.params.list());
      s.adam.step = adam.at("step").get<std::uint64_t>();
      for (auto* m : {&s.adam.first, &s.adam.second}) {
        for (auto& t : *m) {
          for (T& x : t.values()) x = detail::get_value<T>(r);
        }
      }
    }
    std::istringstream rng(j.at("rng").get<std::string>());
    rng >> s.rng;
    if (!rng) throw FormatError(FormatError::Kind::Corrupt, where + "unreadable generator state");
    s.epoch = j.at("epoch").get<std::size_t>();
    for (const auto& h : j.at("history")) {
      s.history.push_back({h.at("epoch").get<std::size_t>(), detail::number_or_nan(h.at("train_loss")),
                           detail::number_or_nan(h.at("train_acc")), detail::number_or_nan(h.at("test_loss")),
                           detail::number_or_nan(h.at("test_acc"))});
    }
    const auto& es = j.at("early_stop");
    const double best = detail::number_or_nan(es.at("best_test_loss"));
    s.best_test_loss = std::isnan(best) ? std::numeric_limits<double>::infinity() : best;
    s.since_best = es.at("since_best").get<std::size_t>();
    s.stopped = es.at("stopped").get<bool>();
    if (train) *train = train_config_from_json(j.at("train"));
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatError::Kind::Corrupt, where + "malformed checkpoint header: " + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(FormatError::Kind::Corrupt, where + "invalid model config: " + e.what());
  }
}

}  // namespace eegcrnn
