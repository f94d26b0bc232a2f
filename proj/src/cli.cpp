#include "sensprune/cli.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "fetch.h"

namespace sensprune::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

ExperimentRecipe make_recipe(std::string name, std::string arch, double target, std::size_t e1, std::size_t e2,
                             bool thresholding, std::string summary) {
  ExperimentRecipe r{std::move(name), std::move(arch), TrainConfig{}, thresholding, std::move(summary)};
  r.config.target_error = target;
  r.config.max_epochs_phase1 = e1;
  r.config.max_epochs_phase2 = e2;
  return r;
}

}  // namespace

const std::vector<ExperimentRecipe>& recipes() {
  static const std::vector<ExperimentRecipe> all = [] {
    std::vector<ExperimentRecipe> v;
    v.push_back(make_recipe("lenet300-1.65", "lenet300", 0.0165, 50, 100, true,
                            "LeNet300, unspecific sensitivity, prune while test error stays <= 1.65%"));
    v.push_back(make_recipe("lenet300-1.95", "lenet300", 0.0195, 50, 100, true,
                            "LeNet300, unspecific sensitivity, prune while test error stays <= 1.95%"));
    v.push_back(make_recipe("lenet5-0.78", "lenet5", 0.0078, 30, 70, true,
                            "LeNet5, unspecific sensitivity, prune while test error stays <= 0.78%"));
    ExperimentRecipe fig2 = make_recipe("fig2-comparison", "lenet300", 0.5, 40, 0, false,
                                        "LeNet300 regularizer comparison, fixed epochs, no thresholding");
    fig2.config.threshold = 0.0;
    v.push_back(fig2);
    return v;
  }();
  return all;
}

const ExperimentRecipe& recipe(const std::string& name) {
  for (const ExperimentRecipe& r : recipes()) {
    if (r.name == name) return r;
  }
  std::string known;
  for (const ExperimentRecipe& r : recipes()) known += (known.empty() ? "" : ", ") + r.name;
  throw std::invalid_argument("unknown recipe '" + name + "' (known: " + known + ")");
}

Network build_arch(const std::string& arch) {
  if (arch == "lenet300") return lenet300();
  if (arch == "lenet5") return lenet5();
  throw std::invalid_argument("unknown architecture '" + arch + "' (known: lenet300, lenet5)");
}

namespace {

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

double number(const json& j) {
  if (j.is_string() && j.get<std::string>() == "inf") return std::numeric_limits<double>::infinity();
  return j.get<double>();
}

}  // namespace

ReportRow report_row(const json& summary) {
  try {
    const json& sp = summary.at("sparsity");
    ReportRow row;
    for (const json& l : sp.at("layers")) {
      row.layers.push_back(l.at("name").get<std::string>());
      row.alive_percent.push_back(fixed(l.at("percent").get<double>(), 2) + "%");
    }
    row.remaining = fixed(sp.at("alive").get<double>() / 1000.0, 2) + "k";
    row.footprint = fixed(sp.at("footprint_bytes").get<double>() / 1000.0, 2) + "kB";
    const double ratio = number(sp.at("ratio"));
    row.ratio = std::isfinite(ratio) ? fixed(ratio, 2) + "x" : "inf";
    row.error = fixed(100.0 * summary.at("final").at("test_err").get<double>(), 2) + "%";
    return row;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("summary is missing report fields: ") + e.what());
  }
}

std::string render_report(const std::vector<std::pair<std::string, ReportRow>>& rows) {
  if (rows.empty()) return "";
  std::vector<std::string> header{"run"};
  for (const std::string& l : rows.front().second.layers) header.push_back(l);
  for (const char* h : {"remaining", "footprint", "ratio", "top-1 error"}) header.push_back(h);

  std::vector<std::vector<std::string>> cells{header};
  for (const auto& [name, r] : rows) {
    std::vector<std::string> line{name};
    line.insert(line.end(), r.alive_percent.begin(), r.alive_percent.end());
    for (const std::string* s : {&r.remaining, &r.footprint, &r.ratio, &r.error}) line.push_back(*s);
    cells.push_back(std::move(line));
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& line : cells) {
    for (std::size_t c = 0; c < line.size() && c < width.size(); ++c) width[c] = std::max(width[c], line[c].size());
  }
  std::ostringstream os;
  for (const auto& line : cells) {
    for (std::size_t c = 0; c < line.size(); ++c) {
      if (c) os << "  ";
      if (c == 0) {
        os << std::left << std::setw(static_cast<int>(width[c])) << line[c];
      } else {
        os << std::right << std::setw(static_cast<int>(width[c])) << line[c];
      }
    }
    os << '\n';
  }
  return os.str();
}

json make_summary(const std::string& status, const std::string& arch, const TrainConfig& cfg, const Network& net,
                  const PruneMask& mask, const EpochMetrics& final) {
  return json{{"status", status},
              {"arch", arch},
              {"config", to_json(cfg)},
              {"final", to_json(final, net.groups())},
              {"sparsity", to_json(sparsity_report(net, mask))}};
}

namespace {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  out << j.dump(2) << '\n';
}

// Flags shared by the training subcommands. Every value is optional so that
// only flags actually given override the config file and recipe.
struct ConfigFlags {
  std::optional<double> eta, lambda, threshold, target, phase1_target;
  std::optional<std::size_t> batch_size, epochs1, epochs2, class_subsample;
  std::optional<std::string> mode, output, regularizer;
  std::optional<std::uint64_t> seed;
  std::optional<bool> regularize_biases;

  void attach(CLI::App* app) {
    app->add_option("--eta", eta, "learning rate");
    app->add_option("--lambda", lambda, "regularization factor");
    app->add_option("--threshold", threshold, "pruning threshold T");
    app->add_option("--target", target, "target test top-1 error, fraction in (0,1)");
    app->add_option("--phase1-target", phase1_target, "error phase 1 must reach before pruning starts (default: --target)");
    app->add_option("--batch-size", batch_size, "minibatch size");
    app->add_option("--epochs1", epochs1, "epoch budget of phase 1");
    app->add_option("--epochs2", epochs2, "epoch budget of phase 2");
    app->add_option("--class-subsample", class_subsample, "classes sampled per batch for unspecific sensitivity (0 = all)");
    app->add_option("--mode", mode, "sensitivity mode: unspecific | specific");
    app->add_option("--sens-output", output, "sensitivity of: probabilities | logits");
    app->add_option("--regularizer", regularizer, "none | l1 | l2 | sensitivity");
    app->add_option("--seed", seed, "run seed");
    app->add_option("--regularize-biases", regularize_biases, "apply the sensitivity pull to biases too");
  }

  TrainConfig overlay(TrainConfig c) const {
    if (eta) c.eta = *eta;
    if (lambda) c.lambda = *lambda;
    if (threshold) c.threshold = *threshold;
    if (target) c.target_error = *target;
    if (phase1_target) c.phase1_target_error = *phase1_target;
    if (batch_size) c.batch_size = *batch_size;
    if (epochs1) c.max_epochs_phase1 = *epochs1;
    if (epochs2) c.max_epochs_phase2 = *epochs2;
    if (class_subsample) c.sensitivity.class_subsample = *class_subsample;
    if (mode) c.sensitivity.mode = sensitivity_mode_from_string(*mode);
    if (output) c.sensitivity.output = sensitivity_output_from_string(*output);
    if (regularizer) c.regularizer = regularizer_from_string(*regularizer);
    if (seed) c.seed = *seed;
    if (regularize_biases) c.regularize_biases = *regularize_biases;
    return c;
  }
};

struct DataFlags {
  std::string dir;
  std::size_t train_limit = 0;
  std::size_t test_limit = 0;

  void attach(CLI::App* app, bool train_set) {
    app->add_option("--data", dir, "MNIST directory (default: $SENSPRUNE_DATA_DIR)");
    if (train_set) app->add_option("--train-limit", train_limit, "use only the first N training samples");
    app->add_option("--test-limit", test_limit, "use only the first N test samples");
  }

  fs::path resolve() const {
    if (!dir.empty()) return dir;
    if (const char* env = std::getenv("SENSPRUNE_DATA_DIR"); env && *env) return env;
    throw ConfigError("no data directory: pass --data or set SENSPRUNE_DATA_DIR");
  }

  Dataset load(const std::string& split, const Shape& sample_shape) const {
    const fs::path d = resolve();
    if (!fs::is_directory(d)) throw ConfigError(d.string() + ": not a directory");
    Dataset ds = load_mnist_split(d, split);
    const std::size_t limit = split == "train" ? train_limit : test_limit;
    if (limit > 0 && limit < ds.size()) ds = ds.slice(0, limit);
    return ds.reshaped(sample_shape);
  }
};

json data_echo(const DataFlags& d) {
  return json{{"train_limit", d.train_limit}, {"test_limit", d.test_limit}};
}

void print_epoch(const EpochMetrics& m) {
  std::printf("epoch %3zu  phase %d  train_loss %.5f  test_loss %.5f  test_err %.2f%%  ratio %.2fx  %.1fs\n", m.epoch,
              m.phase, m.train_loss, m.test_loss, 100.0 * m.test_err, m.ratio, m.wall_s);
  std::fflush(stdout);
}

// Trains `net` through the phases requested and writes the run directory.
int train_and_write(Network& net, PruneMask& mask, const std::string& arch, const TrainConfig& cfg, bool phase1,
                    bool thresholding, const Dataset& train, const Dataset& test, const fs::path& out,
                    const json& echo) {
  fs::create_directories(out);
  write_json(out / "config.json", echo);
  MetricsCsv csv(out / "metrics.csv", net.groups());
  auto on_epoch = [&](const EpochMetrics& m) {
    csv.append(m);
    print_epoch(m);
  };

  json phases = json::object();
  EpochMetrics final;
  try {
    std::size_t epoch = 0;
    if (phase1) {
      const PhaseResult p1 = train_phase1(net, train, test, cfg, on_epoch, epoch);
      epoch += p1.history.size();
      phases["phase1"] = {{"epochs", p1.history.size()}, {"target_reached", p1.target_reached}};
      final = p1.final;
    }
    if (thresholding) {
      const PhaseResult p2 = train_phase2(net, mask, train, test, cfg, on_epoch, epoch);
      phases["phase2"] = {{"epochs", p2.history.size()},
                          {"target_reached", p2.target_reached},
                          {"rolled_back", p2.rolled_back}};
      final = p2.final;
    }
    if (!phase1 && !thresholding) final = measure(net, mask, test);
  } catch (const DivergenceError& e) {
    net.params() = e.last_finite();
    enforce_mask(net, mask);
    save_sparse(net, mask, out / "diverged.sparse");
    json s = make_summary("diverged", arch, cfg, net, mask, final);
    s["error"] = e.what();
    s["phases"] = phases;
    write_json(out / "summary.json", s);
    std::fprintf(stderr, "diverged: %s (checkpoint: %s)\n", e.what(), (out / "diverged.sparse").c_str());
    return diverged;
  }

  save_sparse(net, mask, out / "model.sparse");
  json s = make_summary("ok", arch, cfg, net, mask, final);
  s["phases"] = phases;
  write_json(out / "summary.json", s);
  std::printf("final: test_err %.2f%%  ratio %.2fx  -> %s\n", 100.0 * final.test_err, final.ratio, out.c_str());
  return ok;
}

std::string arch_of(const Network& net) {
  for (const char* a : {"lenet300", "lenet5"}) {
    const Network ref = build_arch(a);
    if (ref.input_shape() == net.input_shape() && ref.specs() == net.specs()) return a;
  }
  return "custom";
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

MeanStd mean_std(const std::vector<double>& v) {
  MeanStd r;
  if (v.empty()) return r;
  r.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - r.mean) * (x - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return r;
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw ConfigError("not a number in list: '" + item + "'");
    out.push_back(v);
  }
  return out;
}

struct CurveSet {
  std::vector<std::vector<double>> test_loss;  // [seed][epoch]
  std::vector<double> final_loss;
  std::vector<double> final_err;
};

struct SeedCurve {
  std::vector<double> test_loss;
  double final_err = 0.0;
};

// A per-seed metrics CSV with exactly `epochs` rows, or nothing.
std::optional<SeedCurve> read_seed_curve(const fs::path& path, std::size_t epochs) {
  std::ifstream in(path);
  std::string line;
  if (!in || !std::getline(in, line)) return std::nullopt;
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, ',');) header.push_back(f);
  }
  const auto col = [&](const std::string& name) {
    return static_cast<std::size_t>(std::find(header.begin(), header.end(), name) - header.begin());
  };
  const std::size_t loss_col = col("test_loss"), err_col = col("test_err");
  if (loss_col >= header.size() || err_col >= header.size()) return std::nullopt;
  SeedCurve sc;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string v; std::getline(ss, v, ',');) f.push_back(v);
    if (f.size() != header.size()) return std::nullopt;
    sc.test_loss.push_back(std::stod(f[loss_col]));
    sc.final_err = std::stod(f[err_col]);
  }
  if (sc.test_loss.size() != epochs) return std::nullopt;
  return sc;
}

CurveSet run_curves(const std::string& arch, TrainConfig cfg, std::size_t epochs, std::size_t seeds,
                    std::uint64_t base_seed, const Dataset& train, const Dataset& test, const fs::path& out,
                    const std::string& tag, bool resume) {
  CurveSet cs;
  for (std::size_t s = 0; s < seeds; ++s) {
    cfg.seed = base_seed + s;
    const fs::path seed_csv = out / (tag + "_seed" + std::to_string(cfg.seed) + ".csv");
    if (resume) {
      if (std::optional<SeedCurve> done = read_seed_curve(seed_csv, epochs)) {
        std::printf("%-12s seed %llu  reused %s\n", tag.c_str(), static_cast<unsigned long long>(cfg.seed),
                    seed_csv.filename().string().c_str());
        cs.final_loss.push_back(done->test_loss.back());
        cs.final_err.push_back(done->final_err);
        cs.test_loss.push_back(std::move(done->test_loss));
        continue;
      }
    }
    Network net = build_arch(arch);
    init_params(net, InitScheme::glorot_uniform, cfg.seed);
    MetricsCsv csv(seed_csv, net.groups());
    std::vector<double> curve;
    const PhaseResult r = train_fixed(net, train, test, cfg, epochs, [&](const EpochMetrics& m) {
      csv.append(m);
      curve.push_back(m.test_loss);
      std::printf("%-12s seed %llu  epoch %3zu  test_loss %.5f  test_err %.2f%%\n", tag.c_str(),
                  static_cast<unsigned long long>(cfg.seed), m.epoch, m.test_loss, 100.0 * m.test_err);
      std::fflush(stdout);
    });
    cs.test_loss.push_back(std::move(curve));
    cs.final_loss.push_back(r.final.test_loss);
    cs.final_err.push_back(r.final.test_err);
  }
  return cs;
}

void write_curve_csv(const fs::path& path, const CurveSet& cs) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  out << "epoch,mean_test_loss,std_test_loss";
  for (std::size_t s = 0; s < cs.test_loss.size(); ++s) out << ",seed" << s;
  out << '\n' << std::setprecision(std::numeric_limits<double>::max_digits10);
  const std::size_t epochs = cs.test_loss.empty() ? 0 : cs.test_loss.front().size();
  for (std::size_t e = 0; e < epochs; ++e) {
    std::vector<double> col;
    for (const auto& c : cs.test_loss) col.push_back(c[e]);
    const MeanStd ms = mean_std(col);
    out << e + 1 << ',' << ms.mean << ',' << ms.std;
    for (double v : col) out << ',' << v;
    out << '\n';
  }
}

/// Mean curve rises by more than `rel` after its minimum.
bool overfits(const CurveSet& cs, double rel = 0.01) {
  if (cs.test_loss.empty() || cs.test_loss.front().empty()) return false;
  const std::size_t epochs = cs.test_loss.front().size();
  std::vector<double> mean(epochs, 0.0);
  for (const auto& c : cs.test_loss) {
    for (std::size_t e = 0; e < epochs; ++e) mean[e] += c[e] / static_cast<double>(cs.test_loss.size());
  }
  const auto min_it = std::min_element(mean.begin(), mean.end());
  return mean.back() > *min_it * (1.0 + rel);
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Sensitivity-driven regularization and pruning for small networks"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "sensprune 1.0.0");

  // train
  CLI::App* train = app.add_subcommand("train", "train (and prune) a network from scratch");
  std::string recipe_name, config_path, arch = "lenet300", out_dir;
  bool no_threshold = false;
  ConfigFlags train_cfg;
  DataFlags train_data;
  train->add_option("--recipe", recipe_name, "named experiment recipe");
  train->add_option("--config", config_path, "JSON file overriding recipe values");
  train->add_option("--arch", arch, "lenet300 | lenet5 (when no recipe is given)");
  train->add_option("--out", out_dir, "run directory")->required();
  train->add_flag("--no-threshold", no_threshold, "stop after phase 1");
  train_cfg.attach(train);
  train_data.attach(train, true);

  // prune
  CLI::App* prune = app.add_subcommand("prune", "continue training a saved model with thresholding (phase 2)");
  std::string prune_model, prune_config, prune_out;
  ConfigFlags prune_cfg;
  DataFlags prune_data;
  prune->add_option("--model", prune_model, "input sparse model")->required();
  prune->add_option("--config", prune_config, "JSON file with training values");
  prune->add_option("--out", prune_out, "run directory")->required();
  prune_cfg.attach(prune);
  prune_data.attach(prune, true);

  // eval
  CLI::App* eval = app.add_subcommand("eval", "evaluate a saved model on the MNIST test set");
  std::string eval_model;
  bool eval_json = false;
  DataFlags eval_data;
  eval->add_option("--model", eval_model, "sparse model file")->required();
  eval->add_flag("--json", eval_json, "print JSON");
  eval_data.attach(eval, false);

  // compare-reg
  CLI::App* compare = app.add_subcommand("compare-reg", "test-loss curves for none / l1 / l2 / sensitivity");
  std::string compare_out = "compare-reg";
  std::size_t compare_seeds = 3;
  std::optional<std::size_t> compare_epochs;
  std::optional<double> lambda_l1, lambda_l2;
  std::string lambda_sweep;
  ConfigFlags compare_cfg;
  DataFlags compare_data;
  compare->add_option("--out", compare_out, "output directory");
  compare->add_option("--seeds", compare_seeds, "number of seeds")->check(CLI::PositiveNumber);
  compare->add_option("--epochs", compare_epochs, "epochs per run");
  bool compare_resume = false;
  compare->add_flag("--resume", compare_resume, "reuse complete per-seed CSVs already in --out");
  compare->add_option("--lambda-l1", lambda_l1, "l1 factor (default: --lambda)");
  compare->add_option("--lambda-l2", lambda_l2, "l2 factor (default: --lambda)");
  compare->add_option("--lambda-sweep", lambda_sweep, "comma-separated factors tried for l1 and l2; best final loss kept");
  compare_cfg.attach(compare);
  compare_data.attach(compare, true);

  // report
  CLI::App* report = app.add_subcommand("report", "print compression summary rows for run directories");
  std::vector<std::string> report_runs;
  report->add_option("runs", report_runs, "run directories")->required()->expected(1, -1);

  // fetch
  CLI::App* fetch = app.add_subcommand("fetch", "download MNIST and verify checksums");
  std::string fetch_out, fetch_mirror = std::string(default_mnist_mirror());
  fetch->add_option("--out", fetch_out, "destination directory (default: $SENSPRUNE_DATA_DIR)");
  fetch->add_option("--mirror", fetch_mirror, "base URL");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();  // program name
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? ok : config_error;
  }

  try {
    if (*train) {
      TrainConfig cfg;
      bool thresholding = !no_threshold;
      if (!recipe_name.empty()) {
        const ExperimentRecipe& r = recipe(recipe_name);
        cfg = r.config;
        arch = r.arch;
        thresholding = thresholding && r.thresholding;
      }
      if (!config_path.empty()) {
        json j = read_json(config_path);
        if (j.contains("arch")) {
          arch = j["arch"].get<std::string>();
          j.erase("arch");
        }
        cfg = config_from_json(j, cfg);
      }
      cfg = train_cfg.overlay(cfg);
      cfg.validate();
      Network net = build_arch(arch);
      init_params(net, InitScheme::glorot_uniform, cfg.seed);
      const Dataset tr = train_data.load("train", net.input_shape());
      const Dataset te = train_data.load("t10k", net.input_shape());
      PruneMask mask(net);
      json echo{{"command", "train"}, {"recipe", recipe_name}, {"arch", arch}, {"thresholding", thresholding},
                {"train", to_json(cfg)}, {"data", data_echo(train_data)}};
      return train_and_write(net, mask, arch, cfg, true, thresholding, tr, te, out_dir, echo);
    }

    if (*prune) {
      TrainConfig cfg;
      if (!prune_config.empty()) cfg = config_from_json(read_json(prune_config), cfg);
      cfg = prune_cfg.overlay(cfg);
      cfg.validate();
      SparseModel m = load_sparse(prune_model);
      const std::string a = arch_of(m.net);
      const Dataset tr = prune_data.load("train", m.net.input_shape());
      const Dataset te = prune_data.load("t10k", m.net.input_shape());
      json echo{{"command", "prune"}, {"model", prune_model}, {"arch", a},
                {"train", to_json(cfg)}, {"data", data_echo(prune_data)}};
      return train_and_write(m.net, m.mask, a, cfg, false, true, tr, te, prune_out, echo);
    }

    if (*eval) {
      const SparseModel m = load_sparse(eval_model);
      const Dataset te = eval_data.load("t10k", m.net.input_shape());
      const EpochMetrics r = measure(m.net, m.mask, te);
      if (eval_json) {
        std::cout << json{{"test_loss", r.test_loss}, {"test_err", r.test_err}, {"ratio", r.ratio}}.dump() << '\n';
      } else {
        std::printf("test_loss %.6f  test_err %.4f (%.2f%%)  ratio %.2fx\n", r.test_loss, r.test_err, 100.0 * r.test_err,
                    r.ratio);
      }
      return ok;
    }

    if (*compare) {
      const ExperimentRecipe& base = recipe("fig2-comparison");
      TrainConfig cfg = compare_cfg.overlay(base.config);
      cfg.validate();
      const std::size_t epochs = compare_epochs.value_or(base.config.max_epochs_phase1);
      const std::vector<double> sweep = parse_list(lambda_sweep);
      const Shape shape = build_arch(base.arch).input_shape();
      const Dataset tr = compare_data.load("train", shape);
      const Dataset te = compare_data.load("t10k", shape);
      const fs::path out = compare_out;
      fs::create_directories(out);
      const json run_cfg{{"command", "compare-reg"}, {"arch", base.arch}, {"epochs", epochs},
                         {"seeds", compare_seeds}, {"train", to_json(cfg)},
                         {"lambda_sweep", sweep}, {"data", data_echo(compare_data)}};
      if (compare_resume && fs::exists(out / "config.json") && read_json(out / "config.json") != run_cfg) {
        throw ConfigError((out / "config.json").string() + ": differs from this invocation, cannot resume");
      }
      write_json(out / "config.json", run_cfg);

      json summary = json::object();
      for (RegularizerKind kind :
           {RegularizerKind::none, RegularizerKind::l1, RegularizerKind::l2, RegularizerKind::sensitivity}) {
        TrainConfig c = cfg;
        c.regularizer = kind;
        std::vector<double> lambdas{cfg.lambda};
        if (kind == RegularizerKind::none) lambdas = {0.0};
        if (kind == RegularizerKind::l1 && lambda_l1) lambdas = {*lambda_l1};
        if (kind == RegularizerKind::l2 && lambda_l2) lambdas = {*lambda_l2};
        if ((kind == RegularizerKind::l1 || kind == RegularizerKind::l2) && !sweep.empty()) lambdas = sweep;

        std::optional<CurveSet> best;
        double best_lambda = 0.0;
        json tried = json::array();
        for (double lam : lambdas) {
          c.lambda = lam;
          const std::string tag = to_string(kind) + (lambdas.size() > 1 ? "_lambda" + fixed(lam, 8) : "");
          CurveSet cs = run_curves(base.arch, c, epochs, compare_seeds, cfg.seed, tr, te, out, tag, compare_resume);
          const MeanStd ms = mean_std(cs.final_loss);
          tried.push_back({{"lambda", lam}, {"final_test_loss_mean", ms.mean}});
          if (!best || ms.mean < mean_std(best->final_loss).mean) {
            best = std::move(cs);
            best_lambda = lam;
          }
        }
        write_curve_csv(out / (to_string(kind) + ".csv"), *best);
        const MeanStd loss = mean_std(best->final_loss);
        const MeanStd err = mean_std(best->final_err);
        summary[to_string(kind)] = {{"lambda", best_lambda},
                                    {"final_test_loss_mean", loss.mean},
                                    {"final_test_loss_std", loss.std},
                                    {"final_test_err_mean", err.mean},
                                    {"final_test_loss", best->final_loss},
                                    {"overfits", overfits(*best)},
                                    {"tried", tried}};
      }
      write_json(out / "summary.json", summary);
      for (const char* k : {"none", "l1", "l2", "sensitivity"}) {
        std::printf("%-12s final test loss %.5f +- %.5f  lambda %g\n", k,
                    summary[k]["final_test_loss_mean"].get<double>(), summary[k]["final_test_loss_std"].get<double>(),
                    summary[k]["lambda"].get<double>());
      }
      return ok;
    }

    if (*report) {
      std::vector<std::pair<std::string, ReportRow>> rows;
      for (const std::string& r : report_runs) {
        const fs::path p = fs::path(r) / "summary.json";
        if (!fs::exists(p)) throw ConfigError(p.string() + ": missing run artifact");
        rows.emplace_back(fs::path(r).filename().string(), report_row(read_json(p)));
      }
      std::cout << render_report(rows);
      return ok;
    }

    if (*fetch) {
      fs::path dest = fetch_out;
      if (dest.empty()) {
        const char* env = std::getenv("SENSPRUNE_DATA_DIR");
        if (!env || !*env) throw ConfigError("no destination: pass --out or set SENSPRUNE_DATA_DIR");
        dest = env;
      }
      fetch_mnist(dest, fetch_mirror, std::cout);
      return ok;
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return config_error;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return config_error;
  } catch (const IdxError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return config_error;
  } catch (const SparseFormatError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return config_error;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return failure;
  }
  return failure;
}

int run(int argc, const char* const* argv) {
  return run(std::vector<std::string>(argv, argv + argc));
}

}  // namespace sensprune::cli
