#include "ftx/data.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "ftx/errors.hpp"
#include "ftx/rng.hpp"

namespace ftx::data {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr std::int64_t kHour = 3600;

std::int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const int era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy =
      (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2u) / 5u +
      static_cast<unsigned>(d) - 1u;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097LL + static_cast<std::int64_t>(doe) - 719468LL;
}

void civil_from_days(std::int64_t z, int& y, int& m, int& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
  m = static_cast<int>(mp < 10 ? mp + 3 : mp - 9);
  y = static_cast<int>(yy + (m <= 2));
}

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r'))
    --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

bool is_missing_token(const std::string& s) {
  return s.empty() || s == "NA" || s == "na" || s == "NaN" || s == "nan" ||
         s == "NULL" || s == "null";
}

// Parses a full-string double; anything else reads as missing.
bool parse_value(const std::string& s, double& out) {
  if (is_missing_token(s)) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || !std::isfinite(out)) return false;
  return true;
}

}  // namespace

bool parse_timestamp(const std::string& s, std::int64_t& epoch_s) {
  int y, mo, d, h, mi, sec = 0;
  char sep = 0;
  int consumed = 0;
  int n = std::sscanf(s.c_str(), "%4d-%2d-%2d%c%2d:%2d:%2d%n", &y, &mo, &d,
                      &sep, &h, &mi, &sec, &consumed);
  if (n < 6) return false;
  if (n == 6) {
    // No seconds field; re-scan to find the consumed length.
    sec = 0;
    if (std::sscanf(s.c_str(), "%4d-%2d-%2d%c%2d:%2d%n", &y, &mo, &d, &sep, &h,
                    &mi, &consumed) != 6) {
      return false;
    }
  }
  if (static_cast<std::size_t>(consumed) != s.size()) return false;
  if (sep != 'T' && sep != ' ') return false;
  if (mo < 1 || mo > 12 || d < 1 || d > 31) return false;
  if (h < 0 || h > 23 || mi < 0 || mi > 59 || sec < 0 || sec > 59) return false;
  epoch_s = days_from_civil(y, mo, d) * 86400LL + h * 3600LL + mi * 60LL + sec;
  return true;
}

std::string format_timestamp(std::int64_t epoch_s) {
  std::int64_t days = epoch_s / 86400;
  std::int64_t rem = epoch_s % 86400;
  if (rem < 0) {
    rem += 86400;
    --days;
  }
  int y, m, d;
  civil_from_days(days, y, m, d);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d", y, m, d,
                static_cast<int>(rem / 3600), static_cast<int>((rem / 60) % 60),
                static_cast<int>(rem % 60));
  return buf;
}

RawSeries ingest_csv(const std::string& path, const SchemaSpec& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("ingest_csv: cannot open '" + path + "'");

  std::string line;
  if (!std::getline(in, line)) {
    throw DataError("ingest_csv: '" + path + "' is empty");
  }
  const std::vector<std::string> header = split_csv_line(line);
  std::unordered_map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;

  auto col_index = [&](const std::string& name) {
    auto it = col.find(name);
    if (it == col.end()) {
      throw DataError("ingest_csv: schema column '" + name +
                      "' not present in '" + path + "'");
    }
    return it->second;
  };

  const std::size_t ts_ix = col_index(schema.timestamp_col);
  std::vector<std::size_t> endo_ix, exo_ix;
  for (const auto& n : schema.endo_cols) endo_ix.push_back(col_index(n));
  for (const auto& n : schema.exo_cols) exo_ix.push_back(col_index(n));
  const std::size_t d_endo = endo_ix.size();
  const std::size_t d_exo = exo_ix.size();

  struct ParsedRow {
    std::int64_t ts;
    std::vector<double> endo, exo;
    std::vector<bool> endo_miss, exo_miss;
  };
  std::vector<ParsedRow> rows;
  std::vector<std::size_t> rejected;
  std::size_t line_no = 1;

  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() < header.size()) {
      rejected.push_back(line_no);
      continue;
    }
    ParsedRow r;
    if (!parse_timestamp(fields[ts_ix], r.ts)) {
      rejected.push_back(line_no);
      continue;
    }
    if (!rows.empty()) {
      if (r.ts == rows.back().ts) {
        rejected.push_back(line_no);  // duplicate timestamp
        continue;
      }
      if (r.ts < rows.back().ts) {
        throw DataError("ingest_csv: timestamps not increasing at line " +
                        std::to_string(line_no) + ": " + fields[ts_ix] +
                        " after " + format_timestamp(rows.back().ts));
      }
      if ((r.ts - rows.front().ts) % kHour != 0) {
        rejected.push_back(line_no);  // off the hourly grid
        continue;
      }
    }
    r.endo.resize(d_endo);
    r.endo_miss.resize(d_endo);
    for (std::size_t j = 0; j < d_endo; ++j) {
      r.endo_miss[j] = !parse_value(fields[endo_ix[j]], r.endo[j]);
      if (r.endo_miss[j]) r.endo[j] = 0.0;
    }
    r.exo.resize(d_exo);
    r.exo_miss.resize(d_exo);
    for (std::size_t j = 0; j < d_exo; ++j) {
      r.exo_miss[j] = !parse_value(fields[exo_ix[j]], r.exo[j]);
      if (r.exo_miss[j]) r.exo[j] = 0.0;
    }
    rows.push_back(std::move(r));
  }

  if (rows.empty()) {
    throw DataError("ingest_csv: no usable data rows in '" + path + "'");
  }

  // Expand onto the hourly grid; skipped hours become all-missing rows.
  const std::int64_t t0 = rows.front().ts;
  const std::size_t grid =
      static_cast<std::size_t>((rows.back().ts - t0) / kHour) + 1;
  RawSeries s;
  s.timestamps.resize(grid);
  for (std::size_t i = 0; i < grid; ++i) {
    s.timestamps[i] = t0 + static_cast<std::int64_t>(i) * kHour;
  }
  s.endo = Matrix(grid, d_endo);
  s.exo = Matrix(grid, d_exo);
  s.endo_names = schema.endo_cols;
  s.exo_names = schema.exo_cols;
  s.endo_missing.assign(grid * d_endo, true);
  s.exo_missing.assign(grid * d_exo, true);
  s.rejected_lines = std::move(rejected);

  for (const auto& r : rows) {
    const std::size_t i = static_cast<std::size_t>((r.ts - t0) / kHour);
    for (std::size_t j = 0; j < d_endo; ++j) {
      s.endo.at(i, j) = r.endo[j];
      s.endo_missing[i * d_endo + j] = r.endo_miss[j];
    }
    for (std::size_t j = 0; j < d_exo; ++j) {
      s.exo.at(i, j) = r.exo[j];
      s.exo_missing[i * d_exo + j] = r.exo_miss[j];
    }
  }
  return s;
}

std::vector<SeriesWindow> make_windows(const RawSeries& s,
                                       std::size_t lookback,
                                       std::size_t horizon) {
  if (lookback == 0) throw ConfigError("lookback: must be positive");
  if (horizon == 0) throw ConfigError("horizon: must be positive");
  if (s.rows() < lookback + horizon) {
    throw DataError("make_windows: series has " + std::to_string(s.rows()) +
                    " rows, need at least " +
                    std::to_string(lookback + horizon));
  }
  const std::size_t d_endo = s.endo.cols;
  const std::size_t d_exo = s.exo.cols;
  std::vector<SeriesWindow> out;

  for (std::size_t o = 0; o + lookback + horizon <= s.rows(); ++o) {
    const std::size_t target = o + lookback + horizon - 1;
    bool endo_ok = true;
    for (std::size_t t = o; t <= target && endo_ok; ++t) {
      for (std::size_t j = 0; j < d_endo; ++j) {
        if (s.endo_missing[t * d_endo + j]) {
          endo_ok = false;
          break;
        }
      }
    }
    if (!endo_ok) continue;

    SeriesWindow w;
    w.origin = o;
    w.x_endo = Matrix(lookback, d_endo);
    w.x_exo = Matrix(lookback, d_exo);
    w.y.resize(d_endo);
    w.exo_imputed.assign(lookback * d_exo, false);
    w.exo_mean_pending.assign(lookback * d_exo, false);

    for (std::size_t t = 0; t < lookback; ++t) {
      for (std::size_t j = 0; j < d_endo; ++j) {
        w.x_endo.at(t, j) = s.endo.at(o + t, j);
      }
    }
    for (std::size_t j = 0; j < d_endo; ++j) w.y[j] = s.endo.at(target, j);

    // Carry the last observation forward within the window; cells before
    // the first observation wait for the training-column mean.
    for (std::size_t j = 0; j < d_exo; ++j) {
      bool have_carry = false;
      double carry = 0.0;
      for (std::size_t t = 0; t < lookback; ++t) {
        if (s.exo_missing[(o + t) * d_exo + j]) {
          w.exo_imputed[t * d_exo + j] = true;
          if (have_carry) {
            w.x_exo.at(t, j) = carry;
          } else {
            w.exo_mean_pending[t * d_exo + j] = true;
            w.x_exo.at(t, j) = 0.0;
          }
        } else {
          carry = s.exo.at(o + t, j);
          have_carry = true;
          w.x_exo.at(t, j) = carry;
        }
      }
    }
    out.push_back(std::move(w));
  }
  return out;
}

std::pair<std::vector<SeriesWindow>, std::vector<SeriesWindow>>
chronological_split(std::vector<SeriesWindow> windows, double train_frac) {
  if (train_frac <= 0.0 || train_frac >= 1.0) {
    throw ConfigError("train_frac: " + std::to_string(train_frac) +
                      " outside (0, 1)");
  }
  const std::size_t n = windows.size();
  if (n < 2) {
    throw DataError("chronological_split: need at least 2 windows, have " +
                    std::to_string(n));
  }
  const std::size_t k =
      static_cast<std::size_t>(train_frac * static_cast<double>(n));
  if (k == 0 || k == n) {
    throw DataError("chronological_split: train_frac " +
                    std::to_string(train_frac) + " leaves an empty split");
  }
  std::vector<SeriesWindow> train(windows.begin(),
                                  windows.begin() + static_cast<long>(k));
  std::vector<SeriesWindow> test(windows.begin() + static_cast<long>(k),
                                 windows.end());
  return {std::move(train), std::move(test)};
}

std::vector<double> train_exo_means(const std::vector<SeriesWindow>& train,
                                    std::size_t d_exo) {
  std::vector<double> sum(d_exo, 0.0);
  std::vector<std::size_t> count(d_exo, 0);
  for (const auto& w : train) {
    for (std::size_t t = 0; t < w.x_exo.rows; ++t) {
      for (std::size_t j = 0; j < d_exo; ++j) {
        if (!w.exo_imputed[t * d_exo + j]) {
          sum[j] += w.x_exo.at(t, j);
          ++count[j];
        }
      }
    }
  }
  for (std::size_t j = 0; j < d_exo; ++j) {
    sum[j] = count[j] ? sum[j] / static_cast<double>(count[j]) : 0.0;
  }
  return sum;
}

void fill_pending_exo(std::vector<SeriesWindow>& windows,
                      const std::vector<double>& means) {
  for (auto& w : windows) {
    const std::size_t d_exo = w.x_exo.cols;
    for (std::size_t t = 0; t < w.x_exo.rows; ++t) {
      for (std::size_t j = 0; j < d_exo; ++j) {
        if (w.exo_mean_pending[t * d_exo + j]) {
          w.x_exo.at(t, j) = means[j];
          w.exo_mean_pending[t * d_exo + j] = false;
        }
      }
    }
  }
}

namespace {

void column_stats(const std::vector<const Matrix*>& mats, std::size_t col,
                  double& mean, double& sd) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const Matrix* m : mats) {
    for (std::size_t t = 0; t < m->rows; ++t) sum += m->at(t, col);
    n += m->rows;
  }
  mean = n ? sum / static_cast<double>(n) : 0.0;
  double ss = 0.0;
  for (const Matrix* m : mats) {
    for (std::size_t t = 0; t < m->rows; ++t) {
      const double d = m->at(t, col) - mean;
      ss += d * d;
    }
  }
  sd = n ? std::sqrt(ss / static_cast<double>(n)) : 0.0;
  if (sd < 1e-8) sd = 1e-8;
}

}  // namespace

Normalizer fit_normalizer(const std::vector<SeriesWindow>& train) {
  if (train.empty()) throw DataError("fit_normalizer: empty training split");
  const std::size_t d_endo = train[0].x_endo.cols;
  const std::size_t d_exo = train[0].x_exo.cols;
  Normalizer nz;
  nz.endo_mean.resize(d_endo);
  nz.endo_std.resize(d_endo);
  nz.exo_mean.resize(d_exo);
  nz.exo_std.resize(d_exo);

  std::vector<const Matrix*> endo_mats, exo_mats;
  for (const auto& w : train) {
    endo_mats.push_back(&w.x_endo);
    exo_mats.push_back(&w.x_exo);
  }
  for (std::size_t j = 0; j < d_endo; ++j) {
    column_stats(endo_mats, j, nz.endo_mean[j], nz.endo_std[j]);
  }
  for (std::size_t j = 0; j < d_exo; ++j) {
    column_stats(exo_mats, j, nz.exo_mean[j], nz.exo_std[j]);
  }
  return nz;
}

void apply_normalizer(const Normalizer& nz, std::vector<SeriesWindow>& ws) {
  for (auto& w : ws) {
    for (std::size_t t = 0; t < w.x_endo.rows; ++t) {
      for (std::size_t j = 0; j < w.x_endo.cols; ++j) {
        w.x_endo.at(t, j) = nz.norm_endo(j, w.x_endo.at(t, j));
      }
    }
    for (std::size_t t = 0; t < w.x_exo.rows; ++t) {
      for (std::size_t j = 0; j < w.x_exo.cols; ++j) {
        w.x_exo.at(t, j) =
            (w.x_exo.at(t, j) - nz.exo_mean[j]) / nz.exo_std[j];
      }
    }
    for (std::size_t j = 0; j < w.y.size(); ++j) {
      w.y[j] = nz.norm_endo(j, w.y[j]);
    }
  }
}

SynthSpec synth_spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("synth: expected a JSON object");
  SynthSpec s;
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const std::string& k = it.key();
      if (k == "length") s.length = it.value().get<std::size_t>();
      else if (k == "seed") s.seed = it.value().get<std::uint64_t>();
      else if (k == "noise_sigma") s.noise_sigma = it.value().get<double>();
      else if (k == "amp_daily") s.amp_daily = it.value().get<double>();
      else if (k == "amp_weekly") s.amp_weekly = it.value().get<double>();
      else if (k == "trend_slope") s.trend_slope = it.value().get<double>();
      else if (k == "driver_rho") s.driver_rho = it.value().get<double>();
      else if (k == "driver_scale") s.driver_scale = it.value().get<double>();
      else if (k == "exo_noise_sigma")
        s.exo_noise_sigma = it.value().get<double>();
      else
        throw ConfigError("synth: unknown field '" + k + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synth: ") + e.what());
  }
  return s;
}

nlohmann::json to_json(const SynthSpec& s) {
  return nlohmann::json{{"length", s.length},
                        {"seed", s.seed},
                        {"noise_sigma", s.noise_sigma},
                        {"amp_daily", s.amp_daily},
                        {"amp_weekly", s.amp_weekly},
                        {"trend_slope", s.trend_slope},
                        {"driver_rho", s.driver_rho},
                        {"driver_scale", s.driver_scale},
                        {"exo_noise_sigma", s.exo_noise_sigma}};
}

RawSeries synth_generate(const SynthSpec& spec, SynthTruth* truth) {
  if (spec.length < 200) {
    throw ConfigError("length: " + std::to_string(spec.length) +
                      " is below the 200-row minimum");
  }
  if (spec.driver_rho <= -1.0 || spec.driver_rho >= 1.0) {
    throw ConfigError("driver_rho: must lie in (-1, 1)");
  }
  const std::size_t n = spec.length;

  Rng driver_rng(mix_seed(spec.seed) ^ 0x1b873593ull);
  Rng target_rng(mix_seed(spec.seed) ^ 0xcc9e2d51ull);
  Rng exo_rng(mix_seed(spec.seed) ^ 0x85ebca6bull);

  // AR(1) latent driver with unit marginal variance; one extra step so the
  // leading covariate has a value at the final row.
  std::vector<double> driver(n + 1);
  driver[0] = driver_rng.normal();
  const double innov = std::sqrt(1.0 - spec.driver_rho * spec.driver_rho);
  for (std::size_t t = 1; t <= n; ++t) {
    driver[t] = spec.driver_rho * driver[t - 1] + innov * driver_rng.normal();
  }

  RawSeries s;
  s.timestamps.resize(n);
  const std::int64_t t0 = 1609459200;  // 2021-01-01T00:00:00
  for (std::size_t t = 0; t < n; ++t) {
    s.timestamps[t] = t0 + static_cast<std::int64_t>(t) * kHour;
  }
  s.endo = Matrix(n, 1);
  s.exo = Matrix(n, 2);
  s.endo_names = {"target"};
  s.exo_names = {"driver_lead", "driver_lag"};
  s.endo_missing.assign(n, false);
  s.exo_missing.assign(n * 2, false);

  for (std::size_t t = 0; t < n; ++t) {
    const double td = static_cast<double>(t);
    double v = spec.amp_daily * std::sin(kTwoPi * td / 24.0) +
               spec.amp_weekly * std::sin(kTwoPi * td / 168.0) +
               spec.trend_slope * td + spec.driver_scale * driver[t];
    if (spec.noise_sigma > 0.0) v += spec.noise_sigma * target_rng.normal();
    s.endo.at(t, 0) = v;

    double lead = driver[t + 1];
    double lag = t > 0 ? driver[t - 1] : 0.0;
    if (spec.exo_noise_sigma > 0.0) {
      lead += spec.exo_noise_sigma * exo_rng.normal();
      lag += spec.exo_noise_sigma * exo_rng.normal();
    }
    s.exo.at(t, 0) = lead;
    s.exo.at(t, 1) = lag;
  }

  if (truth) {
    truth->periods = {24.0, 168.0};
    truth->amplitudes = {spec.amp_daily, spec.amp_weekly};
    truth->noise_sigma = spec.noise_sigma;
    truth->driver_scale = spec.driver_scale;
  }
  return s;
}

void write_csv(const RawSeries& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("write_csv: cannot open '" + path + "'");
  out << "timestamp";
  for (const auto& n : s.endo_names) out << "," << n;
  for (const auto& n : s.exo_names) out << "," << n;
  out << "\n";
  const std::size_t d_endo = s.endo.cols;
  const std::size_t d_exo = s.exo.cols;
  char buf[40];
  for (std::size_t t = 0; t < s.rows(); ++t) {
    bool all_missing = d_endo + d_exo > 0;
    for (std::size_t j = 0; j < d_endo && all_missing; ++j) {
      if (!s.endo_missing[t * d_endo + j]) all_missing = false;
    }
    for (std::size_t j = 0; j < d_exo && all_missing; ++j) {
      if (!s.exo_missing[t * d_exo + j]) all_missing = false;
    }
    if (all_missing) continue;  // grid gap; re-created on ingest

    out << format_timestamp(s.timestamps[t]);
    for (std::size_t j = 0; j < d_endo; ++j) {
      if (s.endo_missing[t * d_endo + j]) {
        out << ",NA";
      } else {
        std::snprintf(buf, sizeof(buf), "%.17g", s.endo.at(t, j));
        out << "," << buf;
      }
    }
    for (std::size_t j = 0; j < d_exo; ++j) {
      if (s.exo_missing[t * d_exo + j]) {
        out << ",NA";
      } else {
        std::snprintf(buf, sizeof(buf), "%.17g", s.exo.at(t, j));
        out << "," << buf;
      }
    }
    out << "\n";
  }
}

DatasetManifest manifest_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("manifest: expected a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    if (k != "csv_path" && k != "timestamp_col" && k != "endo_cols" &&
        k != "exo_cols" && k != "lookback" && k != "horizon" &&
        k != "train_frac") {
      throw ConfigError("manifest: unknown field '" + k + "'");
    }
  }
  DatasetManifest m;
  if (!j.contains("csv_path") || !j.at("csv_path").is_string()) {
    throw ConfigError("manifest: 'csv_path' (string) is required");
  }
  m.csv_path = j.at("csv_path").get<std::string>();
  if (!j.contains("timestamp_col") || !j.at("timestamp_col").is_string()) {
    throw ConfigError("manifest: 'timestamp_col' (string) is required");
  }
  m.timestamp_col = j.at("timestamp_col").get<std::string>();
  if (!j.contains("endo_cols") || !j.at("endo_cols").is_array() ||
      j.at("endo_cols").empty()) {
    throw ConfigError("manifest: 'endo_cols' (non-empty array) is required");
  }
  for (const auto& e : j.at("endo_cols")) {
    if (!e.is_string()) {
      throw ConfigError("manifest: endo_cols entries must be strings");
    }
    m.endo_cols.push_back(e.get<std::string>());
  }
  if (j.contains("exo_cols")) {
    if (!j.at("exo_cols").is_array()) {
      throw ConfigError("manifest: 'exo_cols' must be an array");
    }
    for (const auto& e : j.at("exo_cols")) {
      if (!e.is_string()) {
        throw ConfigError("manifest: exo_cols entries must be strings");
      }
      m.exo_cols.push_back(e.get<std::string>());
    }
  }
  if (j.contains("lookback")) m.lookback = j.at("lookback").get<std::size_t>();
  if (j.contains("horizon")) m.horizon = j.at("horizon").get<std::size_t>();
  if (j.contains("train_frac")) {
    m.train_frac = j.at("train_frac").get<double>();
  }
  return m;
}

nlohmann::json to_json(const DatasetManifest& m) {
  return nlohmann::json{{"csv_path", m.csv_path},
                        {"timestamp_col", m.timestamp_col},
                        {"endo_cols", m.endo_cols},
                        {"exo_cols", m.exo_cols},
                        {"lookback", m.lookback},
                        {"horizon", m.horizon},
                        {"train_frac", m.train_frac}};
}

Dataset prepare_dataset(const RawSeries& s, std::size_t lookback,
                        std::size_t horizon, double train_frac) {
  Dataset ds;
  ds.d_endo = s.endo.cols;
  ds.d_exo = s.exo.cols;
  auto windows = make_windows(s, lookback, horizon);
  auto [train, test] = chronological_split(std::move(windows), train_frac);
  ds.exo_impute_means = train_exo_means(train, ds.d_exo);
  fill_pending_exo(train, ds.exo_impute_means);
  fill_pending_exo(test, ds.exo_impute_means);
  ds.normalizer = fit_normalizer(train);
  apply_normalizer(ds.normalizer, train);
  apply_normalizer(ds.normalizer, test);
  ds.train = std::move(train);
  ds.test = std::move(test);
  return ds;
}

}  // namespace ftx::data
