#include "ftx/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "ftx/errors.hpp"
#include "ftx/rng.hpp"
#include "ftx/training.hpp"

namespace ftx::eval {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_cell(double v, bool defined = true) {
  if (!defined || !std::isfinite(v)) return "nan";
  return fmt_double(v);
}

}  // namespace

Metrics compute_metrics(const std::vector<double>& y,
                        const std::vector<double>& y_hat) {
  if (y.size() != y_hat.size()) {
    throw DataError("compute_metrics: length mismatch, " +
                    std::to_string(y.size()) + " truths vs " +
                    std::to_string(y_hat.size()) + " predictions");
  }
  if (y.empty()) throw DataError("compute_metrics: empty input");
  const std::size_t n = y.size();
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(n);

  double ss_res = 0.0, ss_tot = 0.0, abs_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = y[i] - y_hat[i];
    ss_res += d * d;
    abs_sum += std::fabs(d);
    const double c = y[i] - mean;
    ss_tot += c * c;
  }

  Metrics m;
  m.n = n;
  m.mse = ss_res / static_cast<double>(n);
  m.rmse = std::sqrt(m.mse);
  m.mae = abs_sum / static_cast<double>(n);
  if (ss_tot < 1e-12) {
    m.r2_defined = false;
    m.r2 = std::numeric_limits<double>::quiet_NaN();
  } else {
    m.r2 = 1.0 - ss_res / ss_tot;
  }
  return m;
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j{{"label", r.label},
                        {"seed", r.seed},
                        {"config_hash", r.config_hash},
                        {"n_test", r.n_test},
                        {"freq_branch", r.freq_branch},
                        {"robust", r.robust},
                        {"p", r.p},
                        {"lambda", r.lambda},
                        {"wall_ms", r.wall_ms},
                        {"r2", r.metrics.r2},
                        {"mse", r.metrics.mse},
                        {"rmse", r.metrics.rmse},
                        {"mae", r.metrics.mae},
                        {"n", r.metrics.n}};
  if (!r.metrics.r2_defined || !std::isfinite(r.metrics.r2)) {
    j["r2"] = nullptr;
  }
  return j;
}

EvalReport eval_report_from_json(const nlohmann::json& j) {
  EvalReport r;
  r.label = j.at("label").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.config_hash = j.at("config_hash").get<std::uint64_t>();
  r.n_test = j.at("n_test").get<std::size_t>();
  r.freq_branch = j.at("freq_branch").get<bool>();
  r.robust = j.at("robust").get<bool>();
  r.p = j.at("p").get<double>();
  r.lambda = j.at("lambda").get<double>();
  r.wall_ms = j.at("wall_ms").get<double>();
  if (j.at("r2").is_null()) {
    r.metrics.r2 = std::numeric_limits<double>::quiet_NaN();
    r.metrics.r2_defined = false;
  } else {
    r.metrics.r2 = j.at("r2").get<double>();
    r.metrics.r2_defined = true;
  }
  r.metrics.mse = j.at("mse").get<double>();
  r.metrics.rmse = j.at("rmse").get<double>();
  r.metrics.mae = j.at("mae").get<double>();
  r.metrics.n = j.at("n").get<std::size_t>();
  return r;
}

std::string report_csv(const EvalReport& r) {
  std::ostringstream os;
  os << "label,seed,r2,mse,rmse,mae,n_test,freq_branch,robust,p,lambda,"
        "config_hash\n";
  os << r.label << "," << r.seed << ","
     << fmt_cell(r.metrics.r2, r.metrics.r2_defined) << ","
     << fmt_double(r.metrics.mse) << "," << fmt_double(r.metrics.rmse) << ","
     << fmt_double(r.metrics.mae) << "," << r.n_test << ","
     << (r.freq_branch ? 1 : 0) << "," << (r.robust ? 1 : 0) << ","
     << fmt_double(r.p) << "," << fmt_double(r.lambda) << ","
     << r.config_hash << "\n";
  return os.str();
}

std::string report_table(const EvalReport& r) {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-12s %10s %12s %12s %12s %8s\n", "split",
                "R2", "MSE", "RMSE", "MAE", "n");
  os << buf;
  if (r.metrics.r2_defined) {
    std::snprintf(buf, sizeof(buf), "%-12s %10.4f %12.6f %12.6f %12.6f %8zu\n",
                  r.label.c_str(), r.metrics.r2, r.metrics.mse, r.metrics.rmse,
                  r.metrics.mae, r.n_test);
  } else {
    std::snprintf(buf, sizeof(buf), "%-12s %10s %12.6f %12.6f %12.6f %8zu\n",
                  r.label.c_str(), "n/a", r.metrics.mse, r.metrics.rmse,
                  r.metrics.mae, r.n_test);
  }
  os << buf;
  return os.str();
}

SeriesPair predict_denormalized(FTimeXerModel& model,
                                const std::vector<data::SeriesWindow>& windows,
                                const data::Normalizer& norm) {
  Matrix pred = training::predict(model, windows);
  SeriesPair sp;
  sp.dims = pred.cols;
  sp.truth.reserve(pred.size());
  sp.pred.reserve(pred.size());
  sp.origins.reserve(windows.size());
  for (std::size_t i = 0; i < windows.size(); ++i) {
    sp.origins.push_back(windows[i].origin);
    for (std::size_t j = 0; j < pred.cols; ++j) {
      sp.truth.push_back(norm.denorm_endo(j, windows[i].y[j]));
      sp.pred.push_back(norm.denorm_endo(j, pred.at(i, j)));
    }
  }
  return sp;
}

namespace {

void check_model_matches(const FTimeXerModel& model, const data::Dataset& ds,
                         const std::vector<data::SeriesWindow>& ws) {
  const ModelConfig& c = model.config();
  if (c.d_endo != ds.d_endo || c.d_exo != ds.d_exo) {
    throw ConfigError(
        "evaluate: model dims (d_endo " + std::to_string(c.d_endo) +
        ", d_exo " + std::to_string(c.d_exo) + ") do not match dataset (" +
        std::to_string(ds.d_endo) + ", " + std::to_string(ds.d_exo) + ")");
  }
  if (!ws.empty() && ws[0].x_endo.rows != c.lookback) {
    throw ConfigError("evaluate: model lookback " +
                      std::to_string(c.lookback) + " does not match window " +
                      std::to_string(ws[0].x_endo.rows));
  }
}

EvalReport report_from(FTimeXerModel& model, const Metrics& m,
                       std::size_t n_windows, const std::string& label) {
  const ModelConfig& c = model.config();
  EvalReport r;
  r.metrics = m;
  r.n_test = n_windows;
  r.config_hash = config_fingerprint(ftx::to_json(c));
  r.seed = model.init_seed();
  r.freq_branch = c.freq_branch_on;
  r.robust = c.robust_training_on;
  r.p = c.mask_p;
  r.lambda = c.lambda;
  r.label = label;
  return r;
}

}  // namespace

EvalReport evaluate(FTimeXerModel& model, const data::Dataset& ds,
                    bool on_train) {
  const auto& ws = on_train ? ds.train : ds.test;
  if (ws.empty()) throw DataError("evaluate: no windows to evaluate");
  check_model_matches(model, ds, ws);
  const auto t0 = std::chrono::steady_clock::now();
  SeriesPair sp = predict_denormalized(model, ws, ds.normalizer);
  Metrics m = compute_metrics(sp.truth, sp.pred);
  EvalReport r = report_from(model, m, ws.size(),
                             on_train ? "train" : "test");
  r.wall_ms = std::chrono::duration<double, std::milli>(
                  std::chrono::steady_clock::now() - t0)
                  .count();
  return r;
}

Metrics evaluate_corrupted(FTimeXerModel& model, const data::Dataset& ds,
                           const CorruptionSpec& spec) {
  if (spec.missing_frac < 0.0 || spec.missing_frac > 1.0) {
    throw ConfigError("missing_frac: " + std::to_string(spec.missing_frac) +
                      " outside [0, 1]");
  }
  if (ds.test.empty()) throw DataError("evaluate: no windows to evaluate");
  check_model_matches(model, ds, ds.test);

  std::vector<data::SeriesWindow> corrupted = ds.test;
  Rng rng(mix_seed(spec.seed));
  for (auto& w : corrupted) {
    const std::size_t T = w.x_exo.rows, dx = w.x_exo.cols;
    if (dx == 0) continue;
    if (spec.shift % T != 0) {
      // Circular row shift: the model sees covariates from shift steps ahead.
      std::vector<double> shifted(w.x_exo.v.size());
      for (std::size_t t = 0; t < T; ++t) {
        const std::size_t src = (t + spec.shift) % T;
        for (std::size_t j = 0; j < dx; ++j) {
          shifted[t * dx + j] = w.x_exo.v[src * dx + j];
        }
      }
      w.x_exo.v = std::move(shifted);
    }
    if (spec.missing_frac > 0.0) {
      for (auto& v : w.x_exo.v) {
        if (rng.bernoulli(spec.missing_frac)) v = 0.0;
      }
    }
  }

  Matrix pred = training::predict(model, corrupted.data(),
                                  corrupted.data() + corrupted.size());
  std::vector<double> truth, predicted;
  for (std::size_t i = 0; i < corrupted.size(); ++i) {
    for (std::size_t j = 0; j < pred.cols; ++j) {
      truth.push_back(ds.normalizer.denorm_endo(j, corrupted[i].y[j]));
      predicted.push_back(ds.normalizer.denorm_endo(j, pred.at(i, j)));
    }
  }
  return compute_metrics(truth, predicted);
}

std::vector<RobustnessPoint> robustness_eval(
    FTimeXerModel& model, const data::Dataset& ds,
    const std::vector<double>& missing_levels,
    const std::vector<std::size_t>& shifts, std::uint64_t seed) {
  std::vector<RobustnessPoint> out;
  std::uint64_t salt = 0;
  for (double frac : missing_levels) {
    for (std::size_t shift : shifts) {
      CorruptionSpec spec;
      spec.missing_frac = frac;
      spec.shift = shift;
      spec.seed = mix_seed(seed ^ (0x9e3779b97f4a7c15ull + salt++));
      RobustnessPoint pt;
      pt.missing_frac = frac;
      pt.shift = shift;
      pt.metrics = evaluate_corrupted(model, ds, spec);
      out.push_back(pt);
    }
  }
  return out;
}

std::string robustness_csv(const std::vector<RobustnessPoint>& points) {
  std::ostringstream os;
  os << "missing_frac,shift,r2,mse,rmse,mae,n\n";
  for (const auto& pt : points) {
    os << fmt_double(pt.missing_frac) << "," << pt.shift << ","
       << fmt_cell(pt.metrics.r2, pt.metrics.r2_defined) << ","
       << fmt_double(pt.metrics.mse) << "," << fmt_double(pt.metrics.rmse)
       << "," << fmt_double(pt.metrics.mae) << "," << pt.metrics.n << "\n";
  }
  return os.str();
}

std::vector<AblationCell> default_ablation_grid(const ModelConfig& base,
                                                bool include_no_freq_baseline) {
  std::vector<AblationCell> grid;
  {
    AblationCell c{"baseline", base};
    c.cfg.robust_training_on = false;
    c.cfg.consistency_on = false;
    c.cfg.mask_p = 0.0;
    grid.push_back(std::move(c));
  }
  for (int pct = 10; pct <= 50; pct += 10) {
    AblationCell c{"masking-" + std::to_string(pct), base};
    c.cfg.robust_training_on = true;
    c.cfg.consistency_on = false;
    c.cfg.mask_p = static_cast<double>(pct) / 100.0;
    grid.push_back(std::move(c));
  }
  {
    AblationCell c{"full-robust", base};
    c.cfg.robust_training_on = true;
    c.cfg.consistency_on = true;
    c.cfg.mask_p = 0.3;
    grid.push_back(std::move(c));
  }
  if (include_no_freq_baseline) {
    AblationCell c{"baseline-no-freq", base};
    c.cfg.robust_training_on = false;
    c.cfg.consistency_on = false;
    c.cfg.mask_p = 0.0;
    c.cfg.freq_branch_on = false;
    grid.push_back(std::move(c));
  }
  return grid;
}

std::vector<AblationRunResult> run_ablation_grid(
    const data::Dataset& ds, const std::vector<AblationCell>& grid,
    const AblationOptions& opts) {
  namespace fs = std::filesystem;
  std::vector<AblationRunResult> results;
  for (const auto& cell : grid) {
    cell.cfg.validate();
    for (std::uint64_t seed : opts.seeds) {
      fs::path run_dir;
      fs::path marker;
      if (!opts.out_dir.empty()) {
        run_dir = fs::path(opts.out_dir) / cell.label /
                  ("seed_" + std::to_string(seed));
        marker = run_dir / "report.json";
        if (fs::exists(marker)) {
          std::ifstream in(marker);
          nlohmann::json j;
          in >> j;
          AblationRunResult r;
          r.label = cell.label;
          r.seed = seed;
          r.report = eval_report_from_json(j);
          r.resumed = true;
          results.push_back(std::move(r));
          continue;
        }
        fs::create_directories(run_dir);
      }

      const auto t0 = std::chrono::steady_clock::now();
      FTimeXerModel model(cell.cfg, seed);
      TrainingConfig tc = opts.training;
      tc.seed = seed;
      const std::string log_path =
          run_dir.empty() ? "" : (run_dir / "training_log.jsonl").string();
      training::fit(model, ds.train, tc, log_path);

      AblationRunResult r;
      r.label = cell.label;
      r.seed = seed;
      r.report = evaluate(model, ds);
      r.report.label = cell.label;
      r.report.wall_ms = std::chrono::duration<double, std::milli>(
                             std::chrono::steady_clock::now() - t0)
                             .count();
      if (!marker.empty()) {
        // Write-then-rename so an interrupted run never leaves a marker.
        const fs::path tmp = marker.string() + ".tmp";
        {
          std::ofstream out(tmp);
          out << to_json(r.report).dump(2) << "\n";
        }
        fs::rename(tmp, marker);
      }
      results.push_back(std::move(r));
    }
  }
  return results;
}

namespace {

struct CellAgg {
  std::string label;
  double r2 = 0.0, mse = 0.0, rmse = 0.0, mae = 0.0;
  std::size_t count = 0;
  bool r2_defined = true;
};

std::vector<CellAgg> aggregate(const std::vector<AblationRunResult>& rows) {
  std::vector<CellAgg> cells;
  for (const auto& r : rows) {
    CellAgg* agg = nullptr;
    for (auto& c : cells) {
      if (c.label == r.label) {
        agg = &c;
        break;
      }
    }
    if (!agg) {
      cells.push_back(CellAgg{});
      agg = &cells.back();
      agg->label = r.label;
    }
    agg->r2 += r.report.metrics.r2_defined ? r.report.metrics.r2 : 0.0;
    agg->r2_defined = agg->r2_defined && r.report.metrics.r2_defined;
    agg->mse += r.report.metrics.mse;
    agg->rmse += r.report.metrics.rmse;
    agg->mae += r.report.metrics.mae;
    agg->count += 1;
  }
  for (auto& c : cells) {
    const double k = static_cast<double>(c.count);
    c.r2 /= k;
    c.mse /= k;
    c.rmse /= k;
    c.mae /= k;
  }
  return cells;
}

}  // namespace

std::string ablation_csv(const std::vector<AblationRunResult>& rows) {
  std::ostringstream os;
  os << "cell,seed,r2,mse,rmse,mae,n_test,config_hash\n";
  for (const auto& r : rows) {
    os << r.label << "," << r.seed << ","
       << fmt_cell(r.report.metrics.r2, r.report.metrics.r2_defined) << ","
       << fmt_double(r.report.metrics.mse) << ","
       << fmt_double(r.report.metrics.rmse) << ","
       << fmt_double(r.report.metrics.mae) << "," << r.report.n_test << ","
       << r.report.config_hash << "\n";
  }
  for (const auto& c : aggregate(rows)) {
    os << c.label << ",mean," << fmt_cell(c.r2, c.r2_defined) << ","
       << fmt_double(c.mse) << "," << fmt_double(c.rmse) << ","
       << fmt_double(c.mae) << ",,\n";
  }
  return os.str();
}

std::string ablation_table(const std::vector<AblationRunResult>& rows) {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-18s %10s %12s %12s %12s\n", "cell", "R2",
                "MSE", "RMSE", "MAE");
  os << buf;
  for (const auto& c : aggregate(rows)) {
    if (c.r2_defined) {
      std::snprintf(buf, sizeof(buf), "%-18s %10.4f %12.6f %12.6f %12.6f\n",
                    c.label.c_str(), c.r2, c.mse, c.rmse, c.mae);
    } else {
      std::snprintf(buf, sizeof(buf), "%-18s %10s %12.6f %12.6f %12.6f\n",
                    c.label.c_str(), "n/a", c.mse, c.rmse, c.mae);
    }
    os << buf;
  }
  return os.str();
}

std::string prediction_csv(const SeriesPair& series) {
  std::ostringstream os;
  os << "index,origin";
  if (series.dims == 1) {
    os << ",truth,pred";
  } else {
    for (std::size_t j = 0; j < series.dims; ++j) os << ",truth_" << j;
    for (std::size_t j = 0; j < series.dims; ++j) os << ",pred_" << j;
  }
  os << "\n";
  for (std::size_t i = 0; i < series.origins.size(); ++i) {
    os << i << "," << series.origins[i];
    for (std::size_t j = 0; j < series.dims; ++j) {
      os << "," << fmt_double(series.truth[i * series.dims + j]);
    }
    for (std::size_t j = 0; j < series.dims; ++j) {
      os << "," << fmt_double(series.pred[i * series.dims + j]);
    }
    os << "\n";
  }
  return os.str();
}

std::string line_chart_svg(const SeriesPair& series, const std::string& title) {
  const std::size_t dims = std::max<std::size_t>(series.dims, 1);
  std::size_t n = series.origins.size();
  n = std::min<std::size_t>(n, 2000);  // keep the file bounded
  const double W = 960.0, H = 320.0, pad = 42.0;

  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t i = 0; i < n; ++i) {
    for (double v : {series.truth[i * dims], series.pred[i * dims]}) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (!(hi > lo)) {
    hi = lo + 1.0;
    lo -= 1.0;
  }
  auto sx = [&](std::size_t i) {
    return n <= 1 ? pad
                  : pad + (W - 2 * pad) * static_cast<double>(i) /
                        static_cast<double>(n - 1);
  };
  auto sy = [&](double v) { return H - pad - (H - 2 * pad) * (v - lo) / (hi - lo); };
  auto poly = [&](const std::vector<double>& vals) {
    std::ostringstream pts;
    for (std::size_t i = 0; i < n; ++i) {
      if (i) pts << " ";
      pts << fmt_double(sx(i)) << "," << fmt_double(sy(vals[i * dims]));
    }
    return pts.str();
  };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W
     << "\" height=\"" << H << "\" viewBox=\"0 0 " << W << " " << H << "\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << pad << "\" y=\"22\" font-family=\"sans-serif\" "
        "font-size=\"14\">"
     << title << "</text>\n"
     << "<text x=\"" << W - 250 << "\" y=\"22\" font-family=\"sans-serif\" "
        "font-size=\"12\" fill=\"#1f77b4\">truth</text>\n"
     << "<text x=\"" << W - 190 << "\" y=\"22\" font-family=\"sans-serif\" "
        "font-size=\"12\" fill=\"#d62728\">prediction</text>\n"
     << "<line x1=\"" << pad << "\" y1=\"" << H - pad << "\" x2=\"" << W - pad
     << "\" y2=\"" << H - pad << "\" stroke=\"#888\"/>\n"
     << "<line x1=\"" << pad << "\" y1=\"" << pad << "\" x2=\"" << pad
     << "\" y2=\"" << H - pad << "\" stroke=\"#888\"/>\n"
     << "<text x=\"4\" y=\"" << sy(hi) + 4 << "\" font-family=\"sans-serif\" "
        "font-size=\"10\">"
     << fmt_double(hi) << "</text>\n"
     << "<text x=\"4\" y=\"" << sy(lo) + 4 << "\" font-family=\"sans-serif\" "
        "font-size=\"10\">"
     << fmt_double(lo) << "</text>\n"
     << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1\" "
        "points=\""
     << poly(series.truth) << "\"/>\n"
     << "<polyline fill=\"none\" stroke=\"#d62728\" stroke-width=\"1\" "
        "points=\""
     << poly(series.pred) << "\"/>\n"
     << "</svg>\n";
  return os.str();
}

}  // namespace ftx::eval
