#include "sensprune/trainer.h"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <optional>

namespace sensprune {

using nlohmann::json;

void TrainConfig::validate() const {
  if (!(eta > 0.0) || !std::isfinite(eta)) throw std::invalid_argument("eta must be a positive finite number");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("lambda must be >= 0");
  if (!(threshold >= 0.0) || !std::isfinite(threshold)) throw std::invalid_argument("threshold must be >= 0");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
  if (!(target_error > 0.0 && target_error < 1.0)) throw std::invalid_argument("target_error must lie in (0,1)");
  if (phase1_target_error && !(*phase1_target_error > 0.0 && *phase1_target_error <= target_error)) {
    throw std::invalid_argument("phase1_target_error must lie in (0, target_error]");
  }
}

json to_json(const TrainConfig& c) {
  return json{{"eta", c.eta},
              {"lambda", c.lambda},
              {"threshold", c.threshold},
              {"batch_size", c.batch_size},
              {"max_epochs_phase1", c.max_epochs_phase1},
              {"max_epochs_phase2", c.max_epochs_phase2},
              {"sensitivity_mode", to_string(c.sensitivity.mode)},
              {"sensitivity_output", to_string(c.sensitivity.output)},
              {"class_subsample", c.sensitivity.class_subsample},
              {"regularizer", to_string(c.regularizer)},
              {"regularize_biases", c.regularize_biases},
              {"target_error", c.target_error},
              {"phase1_target_error", c.phase1_target_error ? json(*c.phase1_target_error) : json(nullptr)},
              {"seed", c.seed},
              {"deterministic", c.deterministic}};
}

TrainConfig config_from_json(const json& j, TrainConfig c) {
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "eta") c.eta = v.get<double>();
      else if (key == "lambda") c.lambda = v.get<double>();
      else if (key == "threshold") c.threshold = v.get<double>();
      else if (key == "batch_size") c.batch_size = v.get<std::size_t>();
      else if (key == "max_epochs_phase1") c.max_epochs_phase1 = v.get<std::size_t>();
      else if (key == "max_epochs_phase2") c.max_epochs_phase2 = v.get<std::size_t>();
      else if (key == "sensitivity_mode") c.sensitivity.mode = sensitivity_mode_from_string(v.get<std::string>());
      else if (key == "sensitivity_output") c.sensitivity.output = sensitivity_output_from_string(v.get<std::string>());
      else if (key == "class_subsample") c.sensitivity.class_subsample = v.get<std::size_t>();
      else if (key == "regularizer") c.regularizer = regularizer_from_string(v.get<std::string>());
      else if (key == "regularize_biases") c.regularize_biases = v.get<bool>();
      else if (key == "target_error") c.target_error = v.get<double>();
      else if (key == "phase1_target_error") c.phase1_target_error = v.is_null() ? std::nullopt : std::optional(v.get<double>());
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "deterministic") c.deterministic = v.get<bool>();
      else throw std::invalid_argument("unknown config key '" + key + "'");
    } catch (const json::exception& e) {
      throw std::invalid_argument("config key '" + key + "': " + e.what());
    }
  }
  return c;
}

EvalResult evaluate(const Network& net, const Dataset& test, std::size_t chunk) {
  if (test.size() == 0) throw std::invalid_argument("evaluate: empty dataset");
  chunk = std::max<std::size_t>(chunk, 1);
  double loss = 0.0;
  std::size_t wrong = 0;
  for (std::size_t first = 0; first < test.size(); first += chunk) {
    const std::size_t n = std::min(chunk, test.size() - first);
    const Dataset part = n == test.size() ? test : test.slice(first, n);
    const Tensor probs = net.predict(part.images);
    const std::size_t classes = probs.dim(1);
    for (std::size_t i = 0; i < n; ++i) {
      const double* row = probs.raw() + i * classes;
      std::size_t best = 0;
      for (std::size_t k = 1; k < classes; ++k) {
        if (row[k] > row[best]) best = k;
      }
      wrong += best != part.labels[i];
      loss -= std::log(std::max(row[part.labels[i]], std::numeric_limits<double>::min()));
    }
  }
  return {loss / static_cast<double>(test.size()), static_cast<double>(wrong) / static_cast<double>(test.size())};
}

double train_epoch(Network& net, const Dataset& train, const TrainConfig& cfg, std::size_t epoch,
                   const PruneMask* mask) {
  cfg.validate();
  const BatchSampler sampler(train, cfg.batch_size, cfg.seed, epoch);
  const UpdateStep step{cfg.eta, cfg.lambda};
  SensitivityOptions sopts = cfg.sensitivity;
  double total = 0.0;
  for (std::size_t b = 0; b < sampler.count(); ++b) {
    const Batch batch = sampler.batch(b);
    auto diverged = [&](const std::string& why) {
      return DivergenceError(why + " at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b), epoch, b,
                             net.params());
    };
    LossAndGrad lg;
    try {
      lg = loss_and_grad(net, batch.x, batch.y);
    } catch (const NonFiniteError& e) {
      throw diverged(e.what());
    }
    if (!std::isfinite(lg.loss)) throw diverged("non-finite loss");
    total += lg.loss;
    const ParamSet before = net.params();
    try {
      if (cfg.regularizer == RegularizerKind::sensitivity) {
        SensitivityState state(net);
        sopts.subsample_seed = cfg.seed ^ (epoch << 32) ^ b;
        accumulate_sensitivity_cached(net, &batch.y, sopts, state);
        sgd_step_sensitivity(net, lg.grads, bounded_insensitivity(state), step, mask, cfg.regularize_biases);
      } else {
        sgd_step_baseline(net, lg.grads, cfg.regularizer, step, mask);
      }
    } catch (const NonFiniteError& e) {
      net.params() = before;
      throw diverged(e.what());
    }
  }
  return total / static_cast<double>(sampler.count());
}

EpochMetrics measure(const Network& net, const PruneMask& mask, const Dataset& test) {
  const EvalResult ev = evaluate(net, test);
  const SparsityReport rep = sparsity_report(net, mask);
  EpochMetrics m;
  m.test_loss = ev.loss;
  m.test_err = ev.error;
  m.ratio = rep.ratio;
  for (const LayerSparsity& l : rep.layers) m.alive_percent.push_back(l.percent);
  return m;
}

namespace {

using Clock = std::chrono::steady_clock;

EpochMetrics run_epoch(Network& net, PruneMask& mask, const Dataset& train, const Dataset& test, const TrainConfig& cfg,
                       std::size_t epoch, int phase, bool threshold, Clock::time_point start) {
  const double train_loss = train_epoch(net, train, cfg, epoch, &mask);
  if (threshold) apply_threshold(net, mask, cfg.threshold);
  EpochMetrics m = measure(net, mask, test);
  m.epoch = epoch;
  m.phase = phase;
  m.train_loss = train_loss;
  m.wall_s = std::chrono::duration<double>(Clock::now() - start).count();
  return m;
}

}  // namespace

PhaseResult train_phase1(Network& net, const Dataset& train, const Dataset& test, const TrainConfig& cfg,
                         const EpochCallback& on_epoch, std::size_t first_epoch) {
  cfg.validate();
  const auto start = Clock::now();
  PruneMask mask(net);
  PhaseResult r;
  r.final = measure(net, mask, test);
  r.final.epoch = first_epoch;
  r.final.phase = 1;
  for (std::size_t e = 1; e <= cfg.max_epochs_phase1; ++e) {
    EpochMetrics m = run_epoch(net, mask, train, test, cfg, first_epoch + e, 1, false, start);
    r.history.push_back(m);
    r.final = m;
    if (on_epoch) on_epoch(m);
    if (m.test_err <= cfg.phase1_target()) {
      r.target_reached = true;
      break;
    }
  }
  return r;
}

PhaseResult train_fixed(Network& net, const Dataset& train, const Dataset& test, const TrainConfig& cfg,
                        std::size_t epochs, const EpochCallback& on_epoch, std::size_t first_epoch) {
  cfg.validate();
  const auto start = Clock::now();
  PruneMask mask(net);
  PhaseResult r;
  r.final = measure(net, mask, test);
  r.final.epoch = first_epoch;
  for (std::size_t e = 1; e <= epochs; ++e) {
    EpochMetrics m = run_epoch(net, mask, train, test, cfg, first_epoch + e, 1, false, start);
    r.history.push_back(m);
    r.final = m;
    if (on_epoch) on_epoch(m);
  }
  r.target_reached = r.final.test_err <= cfg.target_error;
  return r;
}

PhaseResult train_phase2(Network& net, PruneMask& mask, const Dataset& train, const Dataset& test,
                         const TrainConfig& cfg, const EpochCallback& on_epoch, std::size_t first_epoch) {
  cfg.validate();
  mask.check_matches(net);
  enforce_mask(net, mask);
  const auto start = Clock::now();

  struct Checkpoint {
    ParamSet params;
    PruneMask mask;
    EpochMetrics metrics;
  };
  std::optional<Checkpoint> best;

  PhaseResult r;
  r.final = measure(net, mask, test);
  r.final.epoch = first_epoch;
  r.final.phase = 2;
  if (r.final.test_err <= cfg.target_error) {
    best = Checkpoint{net.params(), mask, r.final};
    r.target_reached = true;
  }
  for (std::size_t e = 1; e <= cfg.max_epochs_phase2; ++e) {
    EpochMetrics m = run_epoch(net, mask, train, test, cfg, first_epoch + e, 2, true, start);
    r.history.push_back(m);
    r.final = m;
    if (on_epoch) on_epoch(m);
    if (m.test_err <= cfg.target_error) {
      best = Checkpoint{net.params(), mask, m};
      r.target_reached = true;
    } else if (best) {
      net.params() = best->params;
      mask = best->mask;
      r.final = best->metrics;
      r.rolled_back = true;
      break;
    }
  }
  return r;
}

MetricsCsv::MetricsCsv(const std::filesystem::path& path, const std::vector<std::string>& groups)
    : out_(path, std::ios::trunc), columns_(groups.size()) {
  if (!out_) throw std::runtime_error(path.string() + ": cannot open for writing");
  out_ << "epoch,train_loss,test_loss,test_err,ratio";
  for (const std::string& g : groups) out_ << ",alive_" << g;
  out_ << ",wall_s\n" << std::flush;
}

void MetricsCsv::append(const EpochMetrics& m) {
  if (m.alive_percent.size() != columns_) throw std::invalid_argument("metrics row has the wrong number of layers");
  out_ << m.epoch << ',' << std::setprecision(std::numeric_limits<double>::max_digits10) << m.train_loss << ',' << m.test_loss << ',' << m.test_err << ','
       << m.ratio;
  for (double a : m.alive_percent) out_ << ',' << a;
  out_ << ',' << std::setprecision(4) << m.wall_s << '\n' << std::flush;
}

json to_json(const SparsityReport& r) {
  json layers = json::array();
  for (const LayerSparsity& l : r.layers) {
    layers.push_back({{"name", l.name}, {"total", l.total}, {"alive", l.alive}, {"percent", l.percent}});
  }
  return json{{"layers", layers},
              {"total", r.total},
              {"alive", r.alive},
              {"ratio", std::isfinite(r.ratio) ? json(r.ratio) : json("inf")},
              {"footprint_bytes", r.footprint_bytes}};
}

json to_json(const EpochMetrics& m, const std::vector<std::string>& groups) {
  json alive = json::object();
  for (std::size_t i = 0; i < groups.size() && i < m.alive_percent.size(); ++i) alive[groups[i]] = m.alive_percent[i];
  return json{{"epoch", m.epoch},
              {"phase", m.phase},
              {"train_loss", m.train_loss},
              {"test_loss", m.test_loss},
              {"test_err", m.test_err},
              {"ratio", std::isfinite(m.ratio) ? json(m.ratio) : json("inf")},
              {"alive_percent", alive},
              {"wall_s", m.wall_s}};
}

}  // namespace sensprune
