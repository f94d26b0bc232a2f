#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "sensprune/network.h"
#include "sensprune/trainer.h"

namespace sensprune::cli {

enum ExitCode : int { ok = 0, failure = 1, config_error = 2, diverged = 3 };

struct ExperimentRecipe {
  std::string name;
  std::string arch;  // "lenet300" or "lenet5"
  TrainConfig config;
  bool thresholding = true;
  std::string summary;
};

const std::vector<ExperimentRecipe>& recipes();
/// Throws std::invalid_argument for unknown names.
const ExperimentRecipe& recipe(const std::string& name);

/// Throws std::invalid_argument for unknown architectures.
Network build_arch(const std::string& arch);

/// One compression summary row rendered from a run summary. Reformats stored
/// values only.
struct ReportRow {
  std::vector<std::string> layers;
  std::vector<std::string> alive_percent;  // "1.04%"
  std::string remaining;                   // "9.55k"
  std::string footprint;                   // "38.20kB", bytes / 1000
  std::string ratio;                       // "27.87x"
  std::string error;                       // "1.65%"
};
ReportRow report_row(const nlohmann::json& summary);
std::string render_report(const std::vector<std::pair<std::string, ReportRow>>& rows);

/// Summary document written next to a trained model.
nlohmann::json make_summary(const std::string& status, const std::string& arch, const TrainConfig& cfg,
                            const Network& net, const PruneMask& mask, const EpochMetrics& final);

/// Entry point of the command-line tool; returns the process exit code.
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);

}  // namespace sensprune::cli
