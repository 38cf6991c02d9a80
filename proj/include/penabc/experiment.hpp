// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the penabc project.

#ifndef PENABC_EXPERIMENT_HPP
#define PENABC_EXPERIMENT_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "penabc/models.hpp"
#include "penabc/reference.hpp"
#include "penabc/summary.hpp"

/// Seeded end-to-end pipelines: simulate -> train -> abc -> evaluate.
namespace penabc::experiment {

/// smoke: seconds-long shape check; desk: minutes; paper: the published settings.
enum class Scale { Smoke, Desk, Paper };

std::string_view scale_name(Scale s) noexcept;
Scale parse_scale(std::string_view name);

struct ExperimentConfig {
  models::ModelId model = models::ModelId::Ar2;
  std::vector<summary::MethodSpec> methods;
  std::vector<std::size_t> n_train;
  std::size_t n_eval = 0;
  std::size_t n_tilde = 0;
  double percentile_x = 0.1;
  std::size_t repetitions = 1;
  std::uint64_t seed = 1;
  std::filesystem::path output_dir = "penabc-out";
  std::size_t series_len = 0;
  std::size_t epochs = 100;
  std::size_t batch_size = 200;
  double learning_rate = 1e-3;
  std::size_t threads = 1;
  std::size_t grid_resolution = 400;
  std::size_t reference_draws = 1000;
  reference::TunedChainConfig mcmc;
  models::RobustScaleSign scale_sign = models::RobustScaleSign::AsPrinted;
};

/// Settings for a model at a scale; methods default to the model's full comparison set.
ExperimentConfig defaults(models::ModelId model, Scale scale);

/// Sets one key (as in the config file). Throws ConfigError on unknown keys or bad values.
void apply_setting(ExperimentConfig& cfg, std::string_view key, std::string_view value);

/// Flat "key = value" text, '#' comments. `model` and `scale` (default desk)
/// pick the base settings, every other key overrides them.
ExperimentConfig parse_config(std::string_view text, std::optional<Scale> scale_override = std::nullopt);

/// Canonical text form; parse_config(format_config(c)) reproduces c.
std::string format_config(const ExperimentConfig& cfg);

/// Throws ConfigError naming the violated constraint.
void validate(const ExperimentConfig& cfg);

void cmd_simulate(const ExperimentConfig& cfg, std::ostream& log);
void cmd_train(const ExperimentConfig& cfg, std::ostream& log);
void cmd_abc(const ExperimentConfig& cfg, std::ostream& log);

struct ResultRow {
  std::string method;
  std::size_t n_train = 0;  // 0 for handpicked statistics
  std::size_t repetition = 0;
  std::optional<double> wasserstein;  // absent without a reference posterior
  double sq_error = 0.0;              // ||posterior mean - truth||^2
  std::vector<double> posterior_mean;
};

struct CellSummary {
  std::string method;
  std::size_t n_train = 0;
  std::size_t repetitions = 0;
  std::optional<double> mean_wasserstein;
  std::optional<double> se_wasserstein;
  double rmse = 0.0;
};

std::vector<CellSummary> summarize(const std::vector<ResultRow>& rows);

/// Writes results.csv and summary.csv under the output directory.
std::vector<ResultRow> cmd_evaluate(const ExperimentConfig& cfg, std::ostream& log);

/// All four stages.
std::vector<ResultRow> run_pipeline(const ExperimentConfig& cfg, std::ostream& log);

/// fig1 (g-and-k), table1 (alpha-stable), fig3 (AR(2)), fig4 (MA(2)).
std::vector<std::string> reproduce_ids();
ExperimentConfig reproduce_config(std::string_view id, Scale scale);

/// Runs the pipeline for a figure/table into <output_dir>/<id>/ and writes
/// <output_dir>/<id>.csv (one row per repetition and cell) and
/// <output_dir>/<id>_summary.csv (one row per cell).
std::vector<CellSummary> cmd_reproduce(std::string_view id, Scale scale, std::uint64_t seed, std::size_t threads,
                                       const std::filesystem::path& output_dir, std::ostream& log);

std::string results_csv(const ExperimentConfig& cfg, const std::vector<ResultRow>& rows);
std::string summary_csv(const ExperimentConfig& cfg, const std::vector<CellSummary>& cells);

}  // namespace penabc::experiment

#endif  // PENABC_EXPERIMENT_HPP
