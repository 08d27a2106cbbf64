#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "ftx/config.hpp"
#include "ftx/data.hpp"
#include "ftx/model.hpp"

namespace ftx::eval {

struct Metrics {
  double r2 = 0.0;  // NaN when r2_defined is false
  double mse = 0.0;
  double rmse = 0.0;
  double mae = 0.0;
  bool r2_defined = true;  // false when the truth has ~zero variance
  std::size_t n = 0;
};

// Coefficient of determination uses the evaluated set's own mean.
Metrics compute_metrics(const std::vector<double>& y,
                        const std::vector<double>& y_hat);

// One evaluation run: metrics in physical units plus provenance tags.
struct EvalReport {
  Metrics metrics;
  std::size_t n_test = 0;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  bool freq_branch = true;
  bool robust = true;
  double p = 0.0;
  double lambda = 0.0;
  double wall_ms = 0.0;  // informational; kept out of rendered reports
  std::string label;
};

nlohmann::json to_json(const EvalReport& r);
EvalReport eval_report_from_json(const nlohmann::json& j);

// Single-report renderings. Wall time is left out so reruns of the same
// checkpoint and data produce identical bytes.
std::string report_csv(const EvalReport& r);
std::string report_table(const EvalReport& r);

// Truth and prediction series mapped back to physical units. Values are
// stored row-major: entry (i, j) of an n x dims layout at truth[i*dims+j].
struct SeriesPair {
  std::vector<double> truth;
  std::vector<double> pred;
  std::vector<std::size_t> origins;  // one per window
  std::size_t dims = 1;
};

SeriesPair predict_denormalized(FTimeXerModel& model,
                                const std::vector<data::SeriesWindow>& windows,
                                const data::Normalizer& norm);

// Plain evaluation of a model over the dataset's test (or train) windows.
EvalReport evaluate(FTimeXerModel& model, const data::Dataset& ds,
                    bool on_train = false);

// Exogenous corruption for robustness curves: Bernoulli missingness
// (zeroed entries, seeded) and a circular row shift within the window.
struct CorruptionSpec {
  double missing_frac = 0.0;
  std::size_t shift = 0;
  std::uint64_t seed = 1;
};

Metrics evaluate_corrupted(FTimeXerModel& model, const data::Dataset& ds,
                           const CorruptionSpec& spec);

struct RobustnessPoint {
  double missing_frac = 0.0;
  std::size_t shift = 0;
  Metrics metrics;
};

std::vector<RobustnessPoint> robustness_eval(
    FTimeXerModel& model, const data::Dataset& ds,
    const std::vector<double>& missing_levels,
    const std::vector<std::size_t>& shifts, std::uint64_t seed);

std::string robustness_csv(const std::vector<RobustnessPoint>& points);

// One ablation grid cell: a labeled configuration derived from a base by
// toggling only the robustness switches (and optionally the frequency
// branch for the no-frequency baseline).
struct AblationCell {
  std::string label;
  ModelConfig cfg;
};

// Default grid: baseline (no masking, no consistency), masking-only at
// p in {0.1..0.5}, and the full robust configuration (p=0.3 + consistency).
// The optional extra cell also disables the frequency branch, covering the
// stricter reading of "baseline".
std::vector<AblationCell> default_ablation_grid(
    const ModelConfig& base, bool include_no_freq_baseline = false);

struct AblationRunResult {
  std::string label;
  std::uint64_t seed = 0;
  EvalReport report;
  bool resumed = false;  // true when loaded from an on-disk marker
};

struct AblationOptions {
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  TrainingConfig training;
  // When set, each (cell, seed) run writes its training log and a completion
  // marker under out_dir; completed runs are skipped on rerun.
  std::string out_dir;
};

std::vector<AblationRunResult> run_ablation_grid(
    const data::Dataset& ds, const std::vector<AblationCell>& grid,
    const AblationOptions& opts);

// Header row, one row per (cell, seed), then one aggregate row per cell.
std::string ablation_csv(const std::vector<AblationRunResult>& rows);
// Fixed-width table, one row per cell, columns R2 MSE RMSE MAE.
std::string ablation_table(const std::vector<AblationRunResult>& rows);

// index,origin,truth,prediction rows for plotting pipelines.
std::string prediction_csv(const SeriesPair& series);

// Self-contained line chart of truth vs prediction.
std::string line_chart_svg(const SeriesPair& series, const std::string& title);

}  // namespace ftx::eval
