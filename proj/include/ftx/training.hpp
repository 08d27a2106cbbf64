#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ftx/config.hpp"
#include "ftx/data.hpp"
#include "ftx/matrix.hpp"
#include "ftx/model.hpp"
#include "ftx/rng.hpp"
#include "ftx/tensor.hpp"

namespace ftx::training {

// Bernoulli drop mask over an exogenous input window. With entry
// granularity every cell is dropped independently; variable granularity
// drops whole columns (sensor outage), timestep granularity whole rows
// (alignment gap).
struct MaskSpec {
  double p = 0.3;
  MaskGranularity granularity = MaskGranularity::kEntry;
  std::uint64_t seed = 1;
};

struct MaskedInput {
  Tensor masked;                   // input with dropped cells zeroed
  std::vector<std::uint8_t> keep;  // row-major; 1 kept, 0 dropped
};

// Stream form used by the training loop; draws come from rng in row-major
// order (per column / per row for the coarser granularities).
MaskedInput apply_mask(const Tensor& x_exo, double p,
                       MaskGranularity granularity, Rng& rng);
// Self-seeded form; identical specs produce identical masks.
MaskedInput apply_mask(const Tensor& x_exo, const MaskSpec& spec);

// Squared L2 distance between prediction pairs. 1-D inputs are a single
// sample; 2-D inputs are a batch, one sample per row, averaged over rows.
Tensor consistency_loss(const Tensor& y_clean, const Tensor& y_masked);

// Mean per-sample error of the chosen kind.
Tensor prediction_loss(const Tensor& y_pred, const Tensor& y_true,
                       LossKind kind);

// Adam with global gradient-norm clipping. Parameters with no gradient
// after backward are left untouched by the corresponding update terms.
class Adam {
 public:
  Adam(std::vector<Tensor> params, const TrainingConfig& cfg);

  void step();
  void zero_grad();
  std::size_t step_count() const { return t_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  double lr_, beta1_, beta2_, eps_, clip_;
  std::size_t t_ = 0;
};

struct LossBundle {
  double l_pred = 0.0;
  double l_cons = 0.0;
  double total = 0.0;   // l_pred + lambda * l_cons, same rounding path
  double lambda = 0.0;
};

using WindowRefs = std::vector<const data::SeriesWindow*>;

Tensor window_endo(const data::SeriesWindow& w);
Tensor window_exo(const data::SeriesWindow& w);

// One optimizer update on a mini-batch. Paths:
//  - robust_training_on=false: single clean forward, prediction loss only.
//  - robust on, consistency_on=false: single forward on masked inputs
//    (augmentation); prediction loss only.
//  - robust on, consistency_on=true: clean + masked forwards; prediction
//    loss on the clean pass, consistency penalty between the two.
// Throws DivergedError carrying step_index when the loss is non-finite.
LossBundle train_step(FTimeXerModel& model, Adam& opt, const WindowRefs& batch,
                      const TrainingConfig& cfg, Rng& mask_rng,
                      std::size_t step_index);

// Clean-input predictions, no masking, no graph recording. N x d_endo.
Matrix predict(FTimeXerModel& model, const data::SeriesWindow* begin,
               const data::SeriesWindow* end);
Matrix predict(FTimeXerModel& model,
               const std::vector<data::SeriesWindow>& windows);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double l_pred = 0.0;
  double l_cons = 0.0;
  double total = 0.0;
  double val_mse = 0.0;   // NaN when no validation windows are held out
  double wall_ms = 0.0;
  std::uint64_t seed = 0;
};

struct FitResult {
  std::vector<EpochRecord> log;
  std::size_t best_epoch = 0;  // 1-based; 0 when validation is disabled
  double best_val_mse = 0.0;
  std::size_t steps = 0;
  bool early_stopped = false;
};

// Trains the model in place. The trailing val_frac share of the windows is
// held out for validation MSE; training stops after `patience` epochs
// without improvement and the best-validation parameters are restored
// before returning. Appends one JSON line per epoch to log_path when given.
// Deterministic given the config seed, except for the logged wall_ms.
FitResult fit(FTimeXerModel& model,
              const std::vector<data::SeriesWindow>& train_windows,
              const TrainingConfig& cfg, const std::string& log_path = "");

}  // namespace ftx::training
