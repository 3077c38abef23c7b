#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include "eegcrnn/checkpoint.hpp"
#include "eegcrnn/dataset.hpp"
#include "eegcrnn/gradsuite.hpp"
#include "eegcrnn/synth.hpp"
#include "eegcrnn/train.hpp"

using namespace eegcrnn;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw UsageError(path.string() + ": " + e.what());
  }
}

// ---- prepare ---------------------------------------------------------------

struct PrepareArgs {
  std::string manifest;
  std::string out = "prepared.eegw";
  std::optional<std::size_t> window;
  std::optional<std::uint64_t> split_seed;
  std::optional<double> split_ratio;
};

int cmd_prepare(const PrepareArgs& a) {
  if (!fs::exists(a.manifest)) throw UsageError("manifest not found: " + a.manifest);
  DatasetManifest m;
  try {
    m = load_manifest(a.manifest);
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  if (a.window) m.window_size = *a.window;
  if (a.split_seed) m.split_seed = *a.split_seed;
  if (a.split_ratio) m.split_ratio = *a.split_ratio;
  PrepareReport report;
  const auto ds = prepare_dataset(m, layout_default(), &report,
                                  [](const std::string& msg) { std::cerr << "warning: " << msg << '\n'; });
  save_prepared(a.out, ds);
  std::cout << "recordings " << report.recordings_used << " used, " << report.skipped.size() << " skipped\n";
  std::cout << "windows " << ds.size() << " (train " << ds.train.size() << ", test " << ds.test.size() << ")\n";
  for (std::size_t c = 0; c < report.per_class.size(); ++c) {
    std::cout << "  " << ds.meta.label_names[c] << ' ' << report.per_class[c] << '\n';
  }
  std::cout << "wrote " << a.out << '\n';
  return 0;
}

// ---- synth -----------------------------------------------------------------

struct SynthArgs {
  std::string spec;
  std::string out = "synth";
  std::optional<double> noise;
  std::optional<std::size_t> windows;
  std::optional<std::uint64_t> seed;
  std::optional<double> missing_rate;
  std::string prepared;
};

int cmd_synth(const SynthArgs& a) {
  json j = a.spec.empty() ? json::object() : read_json(a.spec);
  if (a.noise) j["noise"] = *a.noise;
  if (a.windows) j["windows"] = *a.windows;
  if (a.seed) j["seed"] = *a.seed;
  if (a.missing_rate) j["missing_rate"] = *a.missing_rate;
  SynthSpec spec;
  try {
    spec = synth_spec_from_json(j);
  } catch (const std::exception& e) {
    throw UsageError(std::string("invalid synthetic spec: ") + e.what());
  }
  const auto result = synth_dataset(spec);
  const auto manifest = write_synth(a.out, result);
  std::cout << "wrote " << result.recordings.size() << " recordings and " << manifest.string() << '\n';
  std::cout << "spec " << synth_spec_to_json(spec).dump() << '\n';
  if (!a.prepared.empty()) {
    PrepareArgs p;
    p.manifest = manifest.string();
    p.out = a.prepared;
    return cmd_prepare(p);
  }
  return 0;
}

// ---- train -----------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string data;
  std::string out;
  std::string resume;
  std::optional<std::string> arch, fusion, precision;
  std::optional<std::size_t> conv_depth, lstm_depth, window, epochs, batch, patience, conv_maps, fc_width, hidden;
  std::optional<std::uint64_t> seed;
  std::optional<double> lr, keep_prob;
  bool no_cnn_fc = false, no_post_rnn_fc = false, print_config = false;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::string data;
  std::string out = "run";
};

json to_json(const RunConfig& r) {
  return {{"model", to_json(r.model)}, {"train", to_json(r.train)}, {"data", r.data}, {"out", r.out}};
}

// Precedence: canonical sizes for the architecture, then the config file,
// then flags. Model dims not fixed by either are taken from the dataset.
RunConfig resolve_run(const TrainArgs& a, std::optional<DatasetMeta>* meta) {
  const json file = a.config.empty() ? json::object() : read_json(a.config);
  const json fm = file.value("model", json::object());
  RunConfig r;
  try {
    std::string arch = a.arch.value_or(fm.value("arch", std::string("cascade")));
    if (arch == "rnn" && fm.contains("hidden")) arch = fm["hidden"].get<std::size_t>() == 64 ? "rnn64" : "rnn16";
    r.model = config_for_cli_arch(arch);
    json rest = fm;
    rest.erase("arch");
    if (a.arch) rest.erase("hidden");
    r.model = model_config_from_json(rest, r.model);
    r.train = train_config_from_json(file.value("train", json::object()));
    if (a.fusion) r.model.fusion = parse_fusion(*a.fusion);
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  r.data = a.data.empty() ? file.value("data", std::string()) : a.data;
  r.out = a.out.empty() ? file.value("out", std::string("run")) : a.out;
  auto& m = r.model;
  auto& t = r.train;
  if (a.conv_depth) m.conv_depth = *a.conv_depth;
  if (a.lstm_depth) m.lstm_depth = *a.lstm_depth;
  if (a.window) m.window = *a.window;
  if (a.conv_maps) m.conv_maps = *a.conv_maps;
  if (a.fc_width) m.fc_width = *a.fc_width;
  if (a.hidden) m.hidden = *a.hidden;
  if (a.keep_prob) m.keep_prob = *a.keep_prob;
  if (a.no_cnn_fc) m.cnn_fc = false;
  if (a.no_post_rnn_fc) m.post_rnn_fc = false;
  if (a.epochs) t.epochs = *a.epochs;
  if (a.batch) t.batch = *a.batch;
  if (a.patience) t.patience = *a.patience;
  if (a.seed) t.seed = *a.seed;
  if (a.lr) t.learning_rate = *a.lr;
  if (a.precision) t.precision = *a.precision;

  if (meta && meta->has_value()) {
    const auto& d = **meta;
    if (!a.window && !fm.contains("window_size")) m.window = d.window;
    if (!fm.contains("classes")) m.classes = d.classes();
    if (!fm.contains("channels")) m.channels = d.channels;
    if (!fm.contains("rows")) m.rows = d.rows;
    if (!fm.contains("cols")) m.cols = d.cols;
  }
  try {
    m.validate();
    t.validate();
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  return r;
}

void check_compatible(const ModelConfig& m, const DatasetMeta& d) {
  auto mismatch = [](const std::string& what, std::size_t model, std::size_t data) {
    throw std::runtime_error("config/dataset mismatch: model " + what + " " + std::to_string(model) +
                             ", dataset " + std::to_string(data));
  };
  if (m.window != d.window) mismatch("window_size", m.window, d.window);
  if (m.classes != d.classes()) mismatch("classes", m.classes, d.classes());
  if (m.channels != d.channels) mismatch("channels", m.channels, d.channels);
  if (m.rows != d.rows || m.cols != d.cols) mismatch("mesh cells", m.rows * m.cols, d.rows * d.cols);
}

PreparedDataset load_dataset(const std::string& path) {
  if (path.empty()) throw UsageError("no dataset given (use --data or \"data\" in the config)");
  if (!fs::exists(path)) throw UsageError("dataset not found: " + path);
  return load_prepared(path);
}

template <std::floating_point T>
int run_training(const RunConfig& run, const PreparedDataset& data, const std::string& resume) {
  check_compatible(run.model, data.meta);
  fs::create_directories(run.out);
  const fs::path ckpt = fs::path(run.out) / "checkpoint.eegc";
  const fs::path history = fs::path(run.out) / "history.csv";
  {
    std::ofstream(fs::path(run.out) / "config.json") << to_json(run).dump(2) << '\n';
  }
  TrainState<T> state;
  if (resume.empty()) {
    state = init_train_state<T>(run.model, run.train);
  } else {
    state = load_checkpoint<T>(resume);
    if (state.params.config != run.model) {
      throw std::runtime_error("resume: checkpoint model config differs from the requested one");
    }
    std::cerr << "resuming " << resume << " after epoch " << state.epoch << '\n';
  }
  std::cerr << "training " << to_string(run.model.arch) << " (" << state.params.count() << " parameters) on "
            << data.train.size() << " windows\n";
  const auto start = std::chrono::steady_clock::now();
  train(state, data, run.train, [&](const EpochRecord& r) {
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cerr << std::fixed << std::setprecision(4) << "epoch " << r.epoch << "  train loss " << r.train_loss
              << " acc " << r.train_acc << "  test loss " << r.test_loss << " acc " << r.test_acc << "  ("
              << std::setprecision(1) << secs << "s)\n";
    save_checkpoint(ckpt, state, run.train);
    write_history_csv(history, state.history);
    return true;
  });
  save_checkpoint(ckpt, state, run.train);
  write_history_csv(history, state.history);
  if (state.stopped) std::cerr << "early stop at epoch " << state.epoch << '\n';
  const double acc = state.history.empty() ? std::nan("") : state.history.back().test_acc;
  std::cout << "final test accuracy " << std::setprecision(17) << acc << '\n';
  std::cout << "wrote " << ckpt.string() << " and " << history.string() << '\n';
  return 0;
}

int cmd_train(const TrainArgs& a) {
  std::optional<DatasetMeta> meta;
  PreparedDataset data;
  const bool have_data = !a.data.empty() || (!a.config.empty() && read_json(a.config).contains("data"));
  if (have_data && !a.print_config) {
    const auto probe = resolve_run(a, nullptr);
    data = load_dataset(probe.data);
    meta = data.meta;
  }
  const auto run = resolve_run(a, &meta);
  std::cout << to_json(run).dump(2) << '\n';
  if (a.print_config) return 0;
  if (!have_data) throw UsageError("no dataset given (use --data or \"data\" in the config)");
  return run.train.precision == "f64" ? run_training<double>(run, data, a.resume)
                                      : run_training<float>(run, data, a.resume);
}

// ---- eval / predict --------------------------------------------------------

std::vector<WindowSegment> pick_split(const PreparedDataset& d, const std::string& split) {
  if (split == "train") return d.train;
  if (split == "test") return d.test;
  std::vector<WindowSegment> all = d.train;
  all.insert(all.end(), d.test.begin(), d.test.end());
  return all;
}

template <std::floating_point T>
int run_eval(const std::string& ckpt, const PreparedDataset& data, const std::string& split,
             const std::string& report) {
  const auto state = load_checkpoint<T>(ckpt);
  check_compatible(state.params.config, data.meta);
  const auto windows = pick_split(data, split);
  if (windows.empty()) throw std::runtime_error("the " + split + " split is empty");
  const auto m = evaluate(state.params, std::span<const WindowSegment>(windows));
  std::cout << format_metrics(m, data.meta.label_names);
  json j = to_json(m, data.meta.label_names);
  j["split"] = split;
  j["checkpoint"] = ckpt;
  std::cout << j.dump() << '\n';
  if (!report.empty()) std::ofstream(report) << j.dump(2) << '\n';
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data_path, const std::string& split,
             const std::string& report) {
  if (!fs::exists(ckpt)) throw UsageError("checkpoint not found: " + ckpt);
  const auto data = load_dataset(data_path);
  return checkpoint_precision(ckpt) == "f64" ? run_eval<double>(ckpt, data, split, report)
                                             : run_eval<float>(ckpt, data, split, report);
}

bool is_prepared_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  char magic[4] = {};
  in.read(magic, 4);
  return in && std::equal(magic, magic + 4, kDatasetMagic);
}

template <std::floating_point T>
int run_predict(const std::string& ckpt, const std::string& input, const std::string& split) {
  const auto state = load_checkpoint<T>(ckpt);
  const auto& c = state.params.config;
  std::vector<WindowSegment> windows;
  std::vector<std::string> names;
  if (is_prepared_file(input)) {
    const auto data = load_prepared(input);
    check_compatible(c, data.meta);
    windows = pick_split(data, split);
    names = data.meta.label_names;
  } else {
    const auto rec = read_recording_csv(input, c.channels);
    windows = segment_windows(rec, layout_default(), c.window);
    if (windows.empty()) {
      throw std::runtime_error(input + ": " + std::to_string(rec.length()) + " samples, need at least " +
                               std::to_string(c.window) + " for one window");
    }
  }
  if (names.size() != c.classes) {
    names.clear();
    const auto& defaults = default_label_names();
    for (std::size_t k = 0; k < c.classes; ++k) names.push_back(k < defaults.size() && c.classes == defaults.size()
                                                                    ? defaults[k]
                                                                    : std::to_string(k));
  }
  std::cout << "window";
  for (std::size_t k = 0; k < c.classes; ++k) std::cout << ",p_" << names[k];
  std::cout << ",label\n" << std::setprecision(17);
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const auto p = predict(state.params, windows[i]);
    std::cout << i;
    for (double v : p.probabilities) std::cout << ',' << v;
    std::cout << ',' << names[static_cast<std::size_t>(p.label)] << '\n';
  }
  return 0;
}

int cmd_predict(const std::string& ckpt, const std::string& input, const std::string& split) {
  if (!fs::exists(ckpt)) throw UsageError("checkpoint not found: " + ckpt);
  if (!fs::exists(input)) throw UsageError("input not found: " + input);
  return checkpoint_precision(ckpt) == "f64" ? run_predict<double>(ckpt, input, split)
                                             : run_predict<float>(ckpt, input, split);
}

// ---- gradcheck -------------------------------------------------------------

int cmd_gradcheck(const std::string& op, const std::string& fault, std::uint64_t seed, double tolerance) {
  FaultSite site;
  try {
    site = parse_fault_site(fault);
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  auto cases = gradient_suite();
  if (!op.empty()) {
    std::erase_if(cases, [&](const GradCase& c) { return c.name != op && c.name.rfind(op + ":", 0) != 0; });
    if (cases.empty()) throw UsageError("no gradient check named '" + op + "'");
  }
  FaultInjection injection(site);
  std::size_t failed = 0;
  for (const auto& c : cases) {
    const auto r = c.run(seed);
    const bool ok = r.max_rel_err <= tolerance;
    failed += !ok;
    std::printf("%-5s %-20s max rel err %.3e over %zu coordinates\n", ok ? "PASS" : "FAIL", c.name.c_str(),
                r.max_rel_err, r.coordinates);
  }
  std::printf("%zu of %zu checks within %.0e\n", cases.size() - failed, cases.size(), tolerance);
  return failed ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Convolutional-recurrent EEG motor-imagery classifier"};
  app.require_subcommand(1);

  PrepareArgs prep;
  auto* prepare = app.add_subcommand("prepare", "Mesh, normalize, window and split the recordings of a manifest");
  prepare->add_option("manifest", prep.manifest, "Manifest JSON")->required();
  prepare->add_option("-o,--out", prep.out, "Prepared dataset file")->capture_default_str();
  prepare->add_option("--window-size", prep.window, "Window length S (even)");
  prepare->add_option("--split-seed", prep.split_seed, "Shuffle seed for the train/test split");
  prepare->add_option("--split-ratio", prep.split_ratio, "Train fraction");

  SynthArgs syn;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset (CSV recordings + manifest)");
  synth->add_option("--spec", syn.spec, "Synthetic spec JSON");
  synth->add_option("-o,--out", syn.out, "Output directory")->capture_default_str();
  synth->add_option("--noise", syn.noise, "White-noise std");
  synth->add_option("--windows", syn.windows, "Total windows");
  synth->add_option("--seed", syn.seed, "Generator seed");
  synth->add_option("--missing-rate", syn.missing_rate, "Probability of an all-zero sample");
  synth->add_option("--prepare", syn.prepared, "Also write a prepared dataset to this file");

  TrainArgs tr;
  auto* trainc = app.add_subcommand("train", "Train a model on a prepared dataset");
  trainc->add_option("--config", tr.config, "Run config JSON (as echoed by a previous run)");
  trainc->add_option("--data", tr.data, "Prepared dataset file");
  trainc->add_option("--out", tr.out, "Output directory for checkpoint, history and config");
  trainc->add_option("--resume", tr.resume, "Continue from a checkpoint");
  trainc->add_option("--arch", tr.arch, "Architecture")
      ->check(CLI::IsMember({"cascade", "parallel", "cnn1d", "cnn2d", "cnn3d", "rnn64", "rnn16"}));
  trainc->add_option("--fusion", tr.fusion, "Parallel fusion")->check(CLI::IsMember({"cat", "add", "cat-fc", "cat-conv"}));
  trainc->add_option("--conv-depth", tr.conv_depth, "Conv layers (1-3)")->check(CLI::Range(1, 3));
  trainc->add_option("--lstm-depth", tr.lstm_depth, "LSTM layers (1-2)")->check(CLI::Range(1, 2));
  trainc->add_option("--window-size", tr.window, "Window length S");
  trainc->add_option("--seed", tr.seed, "Init, shuffle and dropout seed");
  trainc->add_option("--epochs", tr.epochs, "Epoch budget");
  trainc->add_option("--batch", tr.batch, "Mini-batch size");
  trainc->add_option("--lr", tr.lr, "Adam learning rate");
  trainc->add_option("--patience", tr.patience, "Early-stop patience on test loss (0 = off)");
  trainc->add_option("--precision", tr.precision, "f32 or f64")->check(CLI::IsMember({"f32", "f64"}));
  trainc->add_option("--conv-maps", tr.conv_maps, "Feature maps of the first conv layer");
  trainc->add_option("--fc-width", tr.fc_width, "Dense layer width l");
  trainc->add_option("--hidden", tr.hidden, "LSTM hidden size");
  trainc->add_option("--keep-prob", tr.keep_prob, "Dropout keep probability");
  trainc->add_flag("--no-cnn-fc", tr.no_cnn_fc, "Drop the dense layer after the conv stack");
  trainc->add_flag("--no-post-rnn-fc", tr.no_post_rnn_fc, "Drop the dense layer after the LSTM");
  trainc->add_flag("--print-config", tr.print_config, "Print the effective config and exit");

  std::string ckpt, data, split = "test", report, input;
  auto* evalc = app.add_subcommand("eval", "Report accuracy, per-class scores and the confusion matrix");
  evalc->add_option("--checkpoint", ckpt, "Checkpoint file")->required();
  evalc->add_option("--data", data, "Prepared dataset file")->required();
  evalc->add_option("--split", split, "train, test or all")->check(CLI::IsMember({"train", "test", "all"}))
      ->capture_default_str();
  evalc->add_option("--report", report, "Also write the JSON report here");

  auto* pred = app.add_subcommand("predict", "Class probabilities per window");
  pred->add_option("--checkpoint", ckpt, "Checkpoint file")->required();
  pred->add_option("--input", input, "Recording CSV or prepared dataset")->required();
  pred->add_option("--split", split, "Split when the input is a prepared dataset")
      ->check(CLI::IsMember({"train", "test", "all"}))
      ->capture_default_str();

  std::string op, fault = "none";
  std::uint64_t gc_seed = 1;
  double tolerance = 1e-4;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every op and architecture (f64)");
  gc->add_option("--op", op, "Restrict to one check (e.g. conv2d, lstm, cascade, parallel)");
  gc->add_option("--inject-fault", fault, "Flip a backward rule: none, elu, conv2d, matmul")->capture_default_str();
  gc->add_option("--seed", gc_seed, "Seed for inputs and parameters")->capture_default_str();
  gc->add_option("--tolerance", tolerance, "Maximum relative error")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*prepare) return cmd_prepare(prep);
    if (*synth) return cmd_synth(syn);
    if (*trainc) return cmd_train(tr);
    if (*evalc) return cmd_eval(ckpt, data, split, report);
    if (*pred) return cmd_predict(ckpt, input, split);
    if (*gc) return cmd_gradcheck(op, fault, gc_seed, tolerance);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
