#pragma once

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "eegcrnn/adam.hpp"
#include "eegcrnn/config.hpp"
#include "eegcrnn/dataset.hpp"
#include "eegcrnn/models.hpp"

namespace eegcrnn {

class TrainingDiverged : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double test_loss = std::numeric_limits<double>::quiet_NaN();
  double test_acc = std::numeric_limits<double>::quiet_NaN();
};
using History = std::vector<EpochRecord>;

inline void write_history_csv(std::ostream& out, const History& h) {
  out << "epoch,train_loss,train_acc,test_loss,test_acc\n" << std::setprecision(17);
  for (const auto& r : h) {
    out << r.epoch << ',' << r.train_loss << ',' << r.train_acc << ',' << r.test_loss << ',' << r.test_acc << '\n';
  }
}

inline void write_history_csv(const std::filesystem::path& path, const History& h) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_history_csv(out, h);
}

// Rows are true classes, columns predictions.
struct Metrics {
  std::size_t total = 0;
  double accuracy = 0.0;
  double mean_loss = 0.0;
  std::vector<std::vector<std::size_t>> confusion;
  std::vector<std::size_t> support;
  std::vector<double> precision, recall, f1;
};

// F1 and precision/recall are 0 where their denominators vanish.
inline Metrics metrics_from_confusion(std::vector<std::vector<std::size_t>> confusion, double mean_loss) {
  Metrics m;
  const std::size_t k = confusion.size();
  m.confusion = std::move(confusion);
  m.mean_loss = mean_loss;
  std::size_t hits = 0;
  std::vector<std::size_t> predicted(k, 0);
  for (std::size_t t = 0; t < k; ++t) {
    if (m.confusion[t].size() != k) throw std::invalid_argument("confusion matrix must be square");
    std::size_t row = 0;
    for (std::size_t p = 0; p < k; ++p) {
      row += m.confusion[t][p];
      predicted[p] += m.confusion[t][p];
    }
    m.support.push_back(row);
    m.total += row;
    hits += m.confusion[t][t];
  }
  m.accuracy = m.total ? static_cast<double>(hits) / static_cast<double>(m.total) : 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    const double tp = static_cast<double>(m.confusion[c][c]);
    const double p = predicted[c] ? tp / static_cast<double>(predicted[c]) : 0.0;
    const double r = m.support[c] ? tp / static_cast<double>(m.support[c]) : 0.0;
    m.precision.push_back(p);
    m.recall.push_back(r);
    m.f1.push_back(p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0);
  }
  return m;
}

inline nlohmann::json to_json(const Metrics& m, const std::vector<std::string>& labels = {}) {
  nlohmann::json classes = nlohmann::json::array();
  for (std::size_t c = 0; c < m.support.size(); ++c) {
    classes.push_back({{"label", c < labels.size() ? labels[c] : std::to_string(c)},
                       {"support", m.support[c]},
                       {"precision", m.precision[c]},
                       {"recall", m.recall[c]},
                       {"f1", m.f1[c]}});
  }
  return {{"total", m.total},   {"accuracy", m.accuracy}, {"mean_loss", m.mean_loss},
          {"confusion", m.confusion}, {"classes", classes}};
}

inline std::string format_metrics(const Metrics& m, const std::vector<std::string>& labels) {
  std::ostringstream out;
  out << std::setprecision(6) << "accuracy " << m.accuracy << "  mean loss " << m.mean_loss << "  (n=" << m.total
      << ")\n";
  out << std::left << std::setw(14) << "class" << std::setw(10) << "support" << std::setw(12) << "precision"
      << std::setw(12) << "recall" << "f1\n";
  for (std::size_t c = 0; c < m.support.size(); ++c) {
    out << std::setw(14) << (c < labels.size() ? labels[c] : std::to_string(c)) << std::setw(10) << m.support[c]
        << std::setw(12) << m.precision[c] << std::setw(12) << m.recall[c] << m.f1[c] << '\n';
  }
  out << "confusion (rows true, columns predicted)\n";
  for (const auto& row : m.confusion) {
    for (std::size_t v : row) out << std::right << std::setw(7) << v;
    out << '\n';
  }
  return out.str();
}

// Lowest index wins ties.
template <class It>
std::size_t argmax(It begin, It end) {
  std::size_t best = 0, i = 0;
  for (It it = begin; it != end; ++it, ++i) {
    if (*it > *(begin + static_cast<std::ptrdiff_t>(best))) best = i;
  }
  return best;
}

inline std::size_t worker_threads() {
  if (const char* env = std::getenv("EEGNET_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<std::size_t>(v);
  }
  return 1;
}

struct WindowOutputs {
  std::vector<double> probabilities;  // [count x K]
  std::vector<double> losses;         // per window
  std::vector<int> predictions;
};

// Eval-mode probabilities for every window. Chunks are fixed by `batch`, so
// results do not depend on the thread count.
template <std::floating_point T>
WindowOutputs infer(const ModelParams<T>& p, std::span<const WindowSegment> windows, std::size_t batch = 64,
                    std::size_t threads = worker_threads()) {
  const std::size_t k = p.config.classes;
  WindowOutputs out;
  out.probabilities.resize(windows.size() * k);
  out.losses.resize(windows.size());
  out.predictions.resize(windows.size());
  const std::size_t chunks = (windows.size() + batch - 1) / batch;

  auto run_chunk = [&](std::size_t chunk) {
    NoGradGuard guard;
    const std::size_t begin = chunk * batch, end = std::min(windows.size(), begin + batch);
    std::vector<std::size_t> idx;
    for (std::size_t i = begin; i < end; ++i) idx.push_back(i);
    const auto b = make_batch<T>(p.config, windows, idx);
    const auto logits = forward(b, p, ForwardContext<T>{}).value();
    const auto probs = softmax_rows(logits);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const T* z = logits.data() + r * k;
      const T top = *std::max_element(z, z + k);
      double lse = 0.0;
      for (std::size_t c = 0; c < k; ++c) lse += std::exp(static_cast<double>(z[c] - top));
      const std::size_t i = begin + r;
      const int y = windows[i].label;
      if (y >= 0 && static_cast<std::size_t>(y) < k) {
        const double nll = std::log(lse) + static_cast<double>(top - z[y]);
        out.losses[i] = std::min(nll, -std::log(1e-12));
      }
      for (std::size_t c = 0; c < k; ++c) out.probabilities[i * k + c] = static_cast<double>(probs[r * k + c]);
      out.predictions[i] = static_cast<int>(argmax(z, z + k));
    }
  };

  threads = std::max<std::size_t>(1, std::min(threads, chunks));
  if (threads == 1) {
    for (std::size_t c = 0; c < chunks; ++c) run_chunk(c);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t c = t; c < chunks; c += threads) run_chunk(c);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  return out;
}

template <std::floating_point T>
Metrics evaluate(const ModelParams<T>& p, std::span<const WindowSegment> windows, std::size_t batch = 64,
                 std::size_t threads = worker_threads()) {
  if (windows.empty()) throw std::invalid_argument("evaluate: empty dataset");
  const std::size_t k = p.config.classes;
  for (const auto& w : windows) {
    if (w.label < 0 || static_cast<std::size_t>(w.label) >= k) {
      throw std::out_of_range("evaluate: label " + std::to_string(w.label) + " outside [0, " + std::to_string(k) + ")");
    }
  }
  const auto out = infer(p, windows, batch, threads);
  std::vector<std::vector<std::size_t>> confusion(k, std::vector<std::size_t>(k, 0));
  double loss = 0.0;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    ++confusion[static_cast<std::size_t>(windows[i].label)][static_cast<std::size_t>(out.predictions[i])];
    loss += out.losses[i];
  }
  return metrics_from_confusion(std::move(confusion), loss / static_cast<double>(windows.size()));
}

struct Prediction {
  std::vector<double> probabilities;
  int label = 0;
};

template <std::floating_point T>
Prediction predict(const ModelParams<T>& p, const WindowSegment& window) {
  check_segment(p.config, window);
  WindowSegment w = window;
  w.label = -1;
  const auto out = infer(p, std::span<const WindowSegment>(&w, 1), 1, 1);
  return {out.probabilities, out.predictions[0]};
}

// Everything needed to continue a run exactly where it stopped.
template <std::floating_point T>
struct TrainState {
  ModelParams<T> params;
  AdamState<T> adam;
  std::mt19937_64 rng;  // batch order and dropout masks
  std::size_t epoch = 0;
  History history;
  double best_test_loss = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  bool stopped = false;
};

template <std::floating_point T>
TrainState<T> init_train_state(const ModelConfig& model, const TrainConfig& train) {
  TrainState<T> s;
  s.params = param_init<T>(model, train.seed);
  s.rng.seed(train.seed ^ 0x9e3779b97f4a7c15ULL);
  s.adam.hyper.learning_rate = train.learning_rate;
  s.adam.init(s.params.list());
  return s;
}

struct BatchStats {
  double loss = 0.0;
  std::size_t correct = 0;
};

// One forward/backward/Adam update on the given rows.
template <std::floating_point T>
BatchStats train_step(TrainState<T>& s, std::span<const WindowSegment> windows, std::span<const std::size_t> rows) {
  const auto batch = make_batch<T>(s.params.config, windows, rows);
  ForwardContext<T> ctx{Mode::Train, &s.rng};
  const Var<T> logits = forward(batch, s.params, ctx);
  auto ce = softmax_cross_entropy(logits, std::span<const int>(batch.labels));
  const double loss = static_cast<double>(ce.loss.value().item());
  if (!std::isfinite(loss)) {
    throw TrainingDiverged("loss became " + std::to_string(loss) + " at epoch " + std::to_string(s.epoch + 1) +
                           ", Adam step " + std::to_string(s.adam.step + 1) + "; try a lower learning rate");
  }
  auto params = s.params.list();
  for (auto& v : params) v.zero_grad();
  backward(ce.loss);
  adam_step(params, s.adam);
  BatchStats stats{loss, 0};
  const std::size_t k = s.params.config.classes;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const T* z = logits.value().data() + r * k;
    stats.correct += argmax(z, z + k) == static_cast<std::size_t>(batch.labels[r]);
  }
  return stats;
}

// Called after each epoch; return false to stop.
using EpochCallback = std::function<bool(const EpochRecord&)>;

// Runs epochs until `cfg.epochs` have completed in total, early stopping
// triggers, or the callback declines. Train loss and accuracy are running
// averages over the epoch's mini-batches (dropout active).
template <std::floating_point T>
void train(TrainState<T>& s, const PreparedDataset& data, const TrainConfig& cfg, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (data.train.empty()) throw std::invalid_argument("train: empty training split");
  std::span<const WindowSegment> windows(data.train);
  std::vector<std::size_t> order(windows.size());
  while (s.epoch < cfg.epochs && !s.stopped) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    if (cfg.shuffle) detail::shuffle(order, s.rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch);
      std::span<const std::size_t> rows(order.data() + begin, end - begin);
      const auto stats = train_step(s, windows, rows);
      loss_sum += stats.loss * static_cast<double>(rows.size());
      correct += stats.correct;
    }
    ++s.epoch;
    EpochRecord rec;
    rec.epoch = s.epoch;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.train_acc = static_cast<double>(correct) / static_cast<double>(order.size());
    if (!data.test.empty()) {
      const auto m = evaluate(s.params, std::span<const WindowSegment>(data.test), cfg.batch);
      rec.test_loss = m.mean_loss;
      rec.test_acc = m.accuracy;
      if (cfg.patience > 0) {
        if (m.mean_loss < s.best_test_loss) {
          s.best_test_loss = m.mean_loss;
          s.since_best = 0;
        } else if (++s.since_best >= cfg.patience) {
          s.stopped = true;
        }
      }
    }
    s.history.push_back(rec);
    if (on_epoch && !on_epoch(rec)) break;
  }
}

}  // namespace eegcrnn
