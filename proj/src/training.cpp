#include "ftx/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "json.hpp"

#include "ftx/errors.hpp"

namespace ftx::training {

MaskedInput apply_mask(const Tensor& x_exo, double p,
                       MaskGranularity granularity, Rng& rng) {
  if (p < 0.0 || p > 1.0) {
    throw ConfigError("mask p: " + std::to_string(p) + " outside [0, 1]");
  }
  if (x_exo.ndim() != 2) {
    throw ShapeError("apply_mask: expected a 2-D input, got " +
                     shape_str(x_exo.shape()));
  }
  const std::size_t rows = x_exo.rows(), cols = x_exo.cols();
  MaskedInput out;
  out.keep.assign(rows * cols, 1);
  switch (granularity) {
    case MaskGranularity::kEntry:
      for (auto& k : out.keep) k = rng.bernoulli(p) ? 0 : 1;
      break;
    case MaskGranularity::kVariable:
      for (std::size_t j = 0; j < cols; ++j) {
        if (rng.bernoulli(p)) {
          for (std::size_t t = 0; t < rows; ++t) out.keep[t * cols + j] = 0;
        }
      }
      break;
    case MaskGranularity::kTimestep:
      for (std::size_t t = 0; t < rows; ++t) {
        if (rng.bernoulli(p)) {
          for (std::size_t j = 0; j < cols; ++j) out.keep[t * cols + j] = 0;
        }
      }
      break;
  }
  std::vector<double> v = x_exo.data();
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!out.keep[i]) v[i] = 0.0;
  }
  out.masked = Tensor::from_data({rows, cols}, std::move(v));
  return out;
}

MaskedInput apply_mask(const Tensor& x_exo, const MaskSpec& spec) {
  Rng rng(mix_seed(spec.seed));
  return apply_mask(x_exo, spec.p, spec.granularity, rng);
}

Tensor consistency_loss(const Tensor& y_clean, const Tensor& y_masked) {
  if (y_clean.shape() != y_masked.shape()) {
    throw ShapeError("consistency_loss: shape mismatch " +
                     shape_str(y_clean.shape()) + " vs " +
                     shape_str(y_masked.shape()));
  }
  Tensor d = sub(y_clean, y_masked);
  Tensor sq = mul(d, d);
  if (y_clean.ndim() == 1) return sum_all(sq);
  return mean_all(sum(sq, 1));  // per-row squared norm, averaged over rows
}

Tensor prediction_loss(const Tensor& y_pred, const Tensor& y_true,
                       LossKind kind) {
  if (y_pred.size() == 0) throw DataError("prediction_loss: empty batch");
  return kind == LossKind::kMse ? mse(y_pred, y_true) : mae(y_pred, y_true);
}

Adam::Adam(std::vector<Tensor> params, const TrainingConfig& cfg)
    : params_(std::move(params)),
      lr_(cfg.lr),
      beta1_(cfg.beta1),
      beta2_(cfg.beta2),
      eps_(cfg.eps),
      clip_(cfg.clip_norm) {
  cfg.validate();
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Tensor& t : params_) {
    m_.emplace_back(t.size(), 0.0);
    v_.emplace_back(t.size(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  double sq = 0.0;
  for (const Tensor& t : params_) {
    for (double g : t.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  const double rescale = norm > clip_ ? clip_ / norm : 1.0;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& grad = params_[i].grad();
    auto& theta = params_[i].data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < theta.size(); ++j) {
      const double g = (grad.empty() ? 0.0 : grad[j]) * rescale;
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g;
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g * g;
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      theta[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

void Adam::zero_grad() {
  for (Tensor& t : params_) t.zero_grad();
}

Tensor window_endo(const data::SeriesWindow& w) {
  return Tensor::from_data({w.x_endo.rows, w.x_endo.cols}, w.x_endo.v);
}

Tensor window_exo(const data::SeriesWindow& w) {
  return Tensor::from_data({w.x_exo.rows, w.x_exo.cols}, w.x_exo.v);
}

namespace {

Tensor batch_forward(FTimeXerModel& model, const WindowRefs& batch, bool mask,
                     const TrainingConfig& cfg, Rng& mask_rng) {
  const std::size_t de = model.config().d_endo;
  std::vector<Tensor> rows;
  rows.reserve(batch.size());
  for (const data::SeriesWindow* w : batch) {
    Tensor xe = window_endo(*w);
    Tensor xx = window_exo(*w);
    if (mask && model.config().d_exo > 0) {
      xx = apply_mask(xx, model.config().mask_p, cfg.mask_granularity,
                      mask_rng)
               .masked;
    }
    rows.push_back(reshape(model.forward(xe, xx), {1, de}));
  }
  return concat(rows, 0);
}

Tensor batch_targets(const WindowRefs& batch, std::size_t de) {
  std::vector<double> tv;
  tv.reserve(batch.size() * de);
  for (const data::SeriesWindow* w : batch) {
    tv.insert(tv.end(), w->y.begin(), w->y.end());
  }
  return Tensor::from_data({batch.size(), de}, std::move(tv));
}

}  // namespace

LossBundle train_step(FTimeXerModel& model, Adam& opt, const WindowRefs& batch,
                      const TrainingConfig& cfg, Rng& mask_rng,
                      std::size_t step_index) {
  if (batch.empty()) throw DataError("train_step: empty batch");
  const ModelConfig& mc = model.config();

  Tape::active().reset();
  opt.zero_grad();
  Tensor targets = batch_targets(batch, mc.d_endo);

  LossBundle out;
  out.lambda = mc.lambda;
  Tensor total;
  if (!mc.robust_training_on) {
    Tensor pred = batch_forward(model, batch, false, cfg, mask_rng);
    total = prediction_loss(pred, targets, cfg.loss);
    out.l_pred = total.value();
  } else if (!mc.consistency_on) {
    // Augmentation mode: the model only ever sees masked covariates.
    Tensor pred = batch_forward(model, batch, true, cfg, mask_rng);
    total = prediction_loss(pred, targets, cfg.loss);
    out.l_pred = total.value();
  } else {
    Tensor clean = batch_forward(model, batch, false, cfg, mask_rng);
    Tensor masked = batch_forward(model, batch, true, cfg, mask_rng);
    Tensor l_pred = prediction_loss(clean, targets, cfg.loss);
    Tensor l_cons = consistency_loss(clean, masked);
    total = add(l_pred, scale(l_cons, mc.lambda));
    out.l_pred = l_pred.value();
    out.l_cons = l_cons.value();
  }
  out.total = total.value();
  if (!std::isfinite(out.total)) {
    throw DivergedError(step_index, "train_step: non-finite loss at step " +
                                        std::to_string(step_index));
  }
  backward(total);
  opt.step();
  Tape::active().reset();
  return out;
}

Matrix predict(FTimeXerModel& model, const data::SeriesWindow* begin,
               const data::SeriesWindow* end) {
  const std::size_t n = static_cast<std::size_t>(end - begin);
  const std::size_t de = model.config().d_endo;
  Matrix out(n, de);
  NoGradGuard ng;
  for (std::size_t i = 0; i < n; ++i) {
    const data::SeriesWindow& w = begin[i];
    Tensor y = model.forward(window_endo(w), window_exo(w));
    for (std::size_t j = 0; j < de; ++j) out.v[i * de + j] = y.at(j);
  }
  return out;
}

Matrix predict(FTimeXerModel& model,
               const std::vector<data::SeriesWindow>& windows) {
  return predict(model, windows.data(), windows.data() + windows.size());
}

namespace {

double mse_against(const Matrix& pred, const data::SeriesWindow* begin,
                   std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < pred.cols; ++j) {
      const double d = pred.v[i * pred.cols + j] - begin[i].y[j];
      s += d * d;
    }
  }
  return s / static_cast<double>(n * pred.cols);
}

}  // namespace

FitResult fit(FTimeXerModel& model,
              const std::vector<data::SeriesWindow>& train_windows,
              const TrainingConfig& cfg, const std::string& log_path) {
  cfg.validate();
  const std::size_t n = train_windows.size();
  if (n == 0) throw DataError("fit: no training windows");
  std::size_t k_val = 0;
  if (cfg.val_frac > 0.0) {
    k_val = std::max<std::size_t>(
        1, static_cast<std::size_t>(static_cast<double>(n) * cfg.val_frac));
  }
  if (k_val >= n) {
    throw DataError("fit: validation split leaves no training windows");
  }
  const std::size_t n_train = n - k_val;
  const data::SeriesWindow* val_begin = train_windows.data() + n_train;

  Rng shuffle_rng(mix_seed(cfg.seed) ^ 0x5157ae6b0d6c1b2full);
  Rng mask_rng(mix_seed(cfg.seed) ^ 0x94d049bb133111ebull);

  Adam opt([&] {
    std::vector<Tensor> ps;
    for (const auto& [name, t] : model.parameters()) ps.push_back(t);
    return ps;
  }(), cfg);

  std::ofstream log_file;
  if (!log_path.empty()) {
    log_file.open(log_path, std::ios::trunc);
    if (!log_file) throw DataError("fit: cannot open log file '" + log_path +
                                   "'");
  }

  std::vector<std::size_t> order(n_train);
  std::iota(order.begin(), order.end(), 0);

  FitResult result;
  result.best_val_mse = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::vector<double>> best_params;
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    shuffle_rng.shuffle(order);

    double sum_pred = 0.0, sum_cons = 0.0, sum_total = 0.0;
    for (std::size_t start = 0; start < n_train; start += cfg.batch_size) {
      const std::size_t stop = std::min(start + cfg.batch_size, n_train);
      WindowRefs batch;
      batch.reserve(stop - start);
      for (std::size_t i = start; i < stop; ++i) {
        batch.push_back(&train_windows[order[i]]);
      }
      LossBundle b =
          train_step(model, opt, batch, cfg, mask_rng, result.steps++);
      const double w = static_cast<double>(batch.size());
      sum_pred += b.l_pred * w;
      sum_cons += b.l_cons * w;
      sum_total += b.total * w;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.l_pred = sum_pred / static_cast<double>(n_train);
    rec.l_cons = sum_cons / static_cast<double>(n_train);
    rec.total = sum_total / static_cast<double>(n_train);
    rec.seed = cfg.seed;
    if (k_val > 0) {
      Matrix pred = predict(model, val_begin, val_begin + k_val);
      rec.val_mse = mse_against(pred, val_begin, k_val);
    } else {
      rec.val_mse = std::numeric_limits<double>::quiet_NaN();
    }
    rec.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
    result.log.push_back(rec);

    if (log_file) {
      nlohmann::json line = {
          {"epoch", rec.epoch},   {"l_pred", rec.l_pred},
          {"l_cons", rec.l_cons}, {"total", rec.total},
          {"val_mse", rec.val_mse},  // serialized as null when NaN
          {"wall_ms", rec.wall_ms}, {"seed", rec.seed}};
      log_file << line.dump() << "\n";
    }

    if (k_val > 0) {
      if (result.best_epoch == 0 || rec.val_mse < result.best_val_mse) {
        result.best_epoch = epoch;
        result.best_val_mse = rec.val_mse;
        best_params.clear();
        for (const auto& [name, t] : model.parameters()) {
          best_params.push_back(t.data());
        }
        since_best = 0;
      } else {
        ++since_best;
        if (since_best >= cfg.patience) {
          result.early_stopped = true;
          break;
        }
      }
    }
  }

  if (result.best_epoch > 0) {
    const auto& params = model.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor t = params[i].second;
      t.data() = best_params[i];
    }
  }
  return result;
}

}  // namespace ftx::training
