#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "sensprune/data.h"
#include "sensprune/network.h"
#include "sensprune/pruning.h"
#include "sensprune/regularization.h"
#include "sensprune/sensitivity.h"

namespace sensprune {

struct TrainConfig {
  double eta = 0.1;
  double lambda = 1e-5;
  double threshold = 1e-3;
  std::size_t batch_size = 20;
  std::size_t max_epochs_phase1 = 50;
  std::size_t max_epochs_phase2 = 100;
  SensitivityOptions sensitivity;
  RegularizerKind regularizer = RegularizerKind::sensitivity;
  bool regularize_biases = true;
  double target_error = 0.0195;  // test top-1 error, fraction in (0,1)
  // Stricter error phase 1 must reach before it hands over; unset means target_error.
  std::optional<double> phase1_target_error;
  std::uint64_t seed = 1;
  bool deterministic = true;

  /// Throws std::invalid_argument naming the first bad field.
  void validate() const;
  double phase1_target() const { return phase1_target_error.value_or(target_error); }
};

nlohmann::json to_json(const TrainConfig& cfg);
/// Overlays the keys present in `j` on `base`. Unknown keys are rejected.
TrainConfig config_from_json(const nlohmann::json& j, TrainConfig base = {});

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based, counted across phases
  int phase = 1;
  double train_loss = 0.0;
  double test_loss = 0.0;
  double test_err = 0.0;
  double ratio = 1.0;
  std::vector<double> alive_percent;  // per parameterized layer
  double wall_s = 0.0;                // cumulative since the phase started
};

struct EvalResult {
  double loss = 0.0;
  double error = 0.0;
};

/// Mean cross-entropy and top-1 error over the whole set, in chunks.
EvalResult evaluate(const Network& net, const Dataset& test, std::size_t chunk = 1000);

/// Training aborted on a non-finite loss or parameter. Carries the last
/// finite parameters for a post-mortem checkpoint.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, std::size_t epoch, std::size_t batch, ParamSet last_finite)
      : std::runtime_error(what), epoch_(epoch), batch_(batch), last_finite_(std::move(last_finite)) {}
  std::size_t epoch() const { return epoch_; }
  std::size_t batch() const { return batch_; }
  const ParamSet& last_finite() const { return last_finite_; }

 private:
  std::size_t epoch_;
  std::size_t batch_;
  ParamSet last_finite_;
};

/// One shuffled pass over `train` with the configured update rule. Dead
/// entries of `mask` (if given) are never updated. `epoch` seeds the shuffle.
/// Returns the mean minibatch loss.
double train_epoch(Network& net, const Dataset& train, const TrainConfig& cfg, std::size_t epoch,
                   const PruneMask* mask = nullptr);

using EpochCallback = std::function<void(const EpochMetrics&)>;

struct PhaseResult {
  std::vector<EpochMetrics> history;
  bool target_reached = false;
  /// Phase 2: set when an epoch missed the target and the model was restored.
  bool rolled_back = false;
  /// Metrics of the state the network is left in.
  EpochMetrics final;
};

/// Trains without thresholding until the test error reaches the target or
/// the epoch budget runs out. Epoch numbers continue from `first_epoch`.
PhaseResult train_phase1(Network& net, const Dataset& train, const Dataset& test, const TrainConfig& cfg,
                         const EpochCallback& on_epoch = {}, std::size_t first_epoch = 0);

/// Each epoch: training pass, then thresholding, then evaluation. The state
/// is checkpointed whenever it meets the target; the first epoch that misses
/// the target ends the phase and restores the last checkpoint. Until some
/// state has met the target the phase keeps going.
PhaseResult train_phase2(Network& net, PruneMask& mask, const Dataset& train, const Dataset& test,
                         const TrainConfig& cfg, const EpochCallback& on_epoch = {}, std::size_t first_epoch = 0);

/// Exactly `epochs` epochs with no thresholding and no early stop.
PhaseResult train_fixed(Network& net, const Dataset& train, const Dataset& test, const TrainConfig& cfg,
                        std::size_t epochs, const EpochCallback& on_epoch = {}, std::size_t first_epoch = 0);

EpochMetrics measure(const Network& net, const PruneMask& mask, const Dataset& test);

/// Append-only epoch log: epoch,train_loss,test_loss,test_err,ratio,alive_<layer>...,wall_s
class MetricsCsv {
 public:
  MetricsCsv(const std::filesystem::path& path, const std::vector<std::string>& groups);
  void append(const EpochMetrics& m);

 private:
  std::ofstream out_;
  std::size_t columns_;
};

nlohmann::json to_json(const SparsityReport& r);
nlohmann::json to_json(const EpochMetrics& m, const std::vector<std::string>& groups);

}  // namespace sensprune
