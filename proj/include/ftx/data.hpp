#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "ftx/matrix.hpp"

namespace ftx::data {

// Epoch seconds <-> "YYYY-MM-DDTHH:MM:SS" (UTC, no zone suffix).
// parse_timestamp returns false on malformed input.
bool parse_timestamp(const std::string& s, std::int64_t& epoch_s);
std::string format_timestamp(std::int64_t epoch_s);

struct SchemaSpec {
  std::string timestamp_col;
  std::vector<std::string> endo_cols;
  std::vector<std::string> exo_cols;
};

// Hourly series on a contiguous grid. Rows the source file skipped exist
// here as fully-missing rows; per-cell missing flags cover value gaps.
struct RawSeries {
  std::vector<std::int64_t> timestamps;  // strictly increasing, 3600 s apart
  Matrix endo;                           // rows x d_endo
  Matrix exo;                            // rows x d_exo
  std::vector<std::string> endo_names;
  std::vector<std::string> exo_names;
  std::vector<bool> endo_missing;  // rows * d_endo
  std::vector<bool> exo_missing;   // rows * d_exo
  std::vector<std::size_t> rejected_lines;  // 1-based file line numbers

  std::size_t rows() const { return timestamps.size(); }
};

struct SeriesWindow {
  Matrix x_endo;          // lookback x d_endo
  Matrix x_exo;           // lookback x d_exo
  std::vector<double> y;  // d_endo, the step after the window
  std::size_t origin = 0;
  // Cells filled by carry-forward or the training-column mean.
  std::vector<bool> exo_imputed;
  // Cells with no earlier in-window observation; filled after the split.
  std::vector<bool> exo_mean_pending;
};

// Per-column z-score parameters fitted on the training split.
struct Normalizer {
  std::vector<double> endo_mean, endo_std;
  std::vector<double> exo_mean, exo_std;

  double norm_endo(std::size_t col, double v) const {
    return (v - endo_mean[col]) / endo_std[col];
  }
  double denorm_endo(std::size_t col, double z) const {
    return z * endo_std[col] + endo_mean[col];
  }
};

RawSeries ingest_csv(const std::string& path, const SchemaSpec& schema);

std::vector<SeriesWindow> make_windows(const RawSeries& s,
                                       std::size_t lookback,
                                       std::size_t horizon = 1);

std::pair<std::vector<SeriesWindow>, std::vector<SeriesWindow>>
chronological_split(std::vector<SeriesWindow> windows, double train_frac);

// Mean of observed (never-imputed) exogenous entries over training windows.
std::vector<double> train_exo_means(const std::vector<SeriesWindow>& train,
                                    std::size_t d_exo);
void fill_pending_exo(std::vector<SeriesWindow>& windows,
                      const std::vector<double>& means);

Normalizer fit_normalizer(const std::vector<SeriesWindow>& train);
void apply_normalizer(const Normalizer& nz, std::vector<SeriesWindow>& ws);

struct SynthSpec {
  std::size_t length = 4320;  // hours; 180 days
  std::uint64_t seed = 1;
  double noise_sigma = 0.3;
  double amp_daily = 1.0;    // period-24 component
  double amp_weekly = 0.5;   // period-168 component
  double trend_slope = 0.0;
  double driver_rho = 0.95;  // AR(1) persistence of the latent driver
  double driver_scale = 1.0; // driver weight inside the target
  double exo_noise_sigma = 0.05;
};

struct SynthTruth {
  std::vector<double> periods;     // {24, 168}
  std::vector<double> amplitudes;  // matching component amplitudes
  double noise_sigma = 0.0;
  double driver_scale = 0.0;
};

// Deterministic target series (two sinusoids + trend + AR(1) driver + noise)
// with two covariates: a one-step-leading copy of the driver and a
// one-step-lagged copy, both lightly noised. Errors below 200 rows.
RawSeries synth_generate(const SynthSpec& spec, SynthTruth* truth = nullptr);

// Absent keys keep their defaults; unknown keys are rejected.
SynthSpec synth_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SynthSpec& s);

void write_csv(const RawSeries& s, const std::string& path);

struct DatasetManifest {
  std::string csv_path;
  std::string timestamp_col;
  std::vector<std::string> endo_cols;
  std::vector<std::string> exo_cols;
  std::size_t lookback = 12;
  std::size_t horizon = 1;
  double train_frac = 0.8;
};

DatasetManifest manifest_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DatasetManifest& m);

struct Dataset {
  std::vector<SeriesWindow> train;
  std::vector<SeriesWindow> test;
  Normalizer normalizer;
  std::vector<double> exo_impute_means;
  std::size_t d_endo = 0;
  std::size_t d_exo = 0;
};

// Windows -> split -> train-mean imputation of pending cells -> z-score.
Dataset prepare_dataset(const RawSeries& s, std::size_t lookback,
                        std::size_t horizon, double train_frac);

}  // namespace ftx::data
