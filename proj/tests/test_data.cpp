#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "ftx/data.hpp"
#include "ftx/errors.hpp"
#include "ftx/rng.hpp"
#include "ftx/spectral.hpp"

namespace dt = ftx::data;

namespace {

struct TempCsv {
  std::string path;
  explicit TempCsv(const std::string& name, const std::string& body)
      : path(name) {
    std::ofstream out(path);
    out << body;
  }
  ~TempCsv() { std::remove(path.c_str()); }
};

dt::SchemaSpec basic_schema() {
  dt::SchemaSpec s;
  s.timestamp_col = "ts";
  s.endo_cols = {"y"};
  s.exo_cols = {"x"};
  return s;
}

// Hourly rows starting 2021-03-01T00, columns ts,y,x.
std::string rows_csv(const std::vector<std::pair<double, double>>& vals,
                     const std::vector<std::size_t>& skip = {}) {
  std::string body = "ts,y,x\n";
  const std::int64_t t0 = 1614556800;  // 2021-03-01T00:00:00
  for (std::size_t i = 0; i < vals.size(); ++i) {
    bool skipped = false;
    for (auto s : skip) skipped = skipped || s == i;
    if (skipped) continue;
    body += dt::format_timestamp(t0 + static_cast<std::int64_t>(i) * 3600);
    body += "," + std::to_string(vals[i].first) + "," +
            std::to_string(vals[i].second) + "\n";
  }
  return body;
}

std::vector<std::pair<double, double>> ramp(std::size_t n) {
  std::vector<std::pair<double, double>> v(n);
  for (std::size_t i = 0; i < n; ++i) {
    v[i] = {static_cast<double>(i), 100.0 + static_cast<double>(i)};
  }
  return v;
}

std::size_t brute_force_window_count(const dt::RawSeries& s,
                                     std::size_t lookback,
                                     std::size_t horizon) {
  std::size_t count = 0;
  const std::size_t d = s.endo.cols;
  for (std::size_t o = 0; o + lookback + horizon <= s.rows(); ++o) {
    bool ok = true;
    for (std::size_t t = o; t < o + lookback + horizon; ++t) {
      for (std::size_t j = 0; j < d; ++j) {
        if (s.endo_missing[t * d + j]) ok = false;
      }
    }
    if (ok) ++count;
  }
  return count;
}

}  // namespace

TEST_CASE("timestamp parse and format") {
  std::int64_t t = 0;
  REQUIRE(dt::parse_timestamp("2021-01-01T00:00:00", t));
  CHECK(t == 1609459200);
  CHECK(dt::format_timestamp(t) == "2021-01-01T00:00:00");

  std::int64_t t2 = 0;
  REQUIRE(dt::parse_timestamp("2021-01-01 05:30", t2));
  CHECK(t2 == 1609459200 + 5 * 3600 + 30 * 60);

  for (std::int64_t probe :
       {0LL, 1609459200LL, 1614556800LL, 4102444800LL}) {
    std::int64_t back = -1;
    REQUIRE(dt::parse_timestamp(dt::format_timestamp(probe), back));
    CHECK(back == probe);
  }

  std::int64_t junk;
  CHECK_FALSE(dt::parse_timestamp("not-a-time", junk));
  CHECK_FALSE(dt::parse_timestamp("2021-13-01T00:00:00", junk));
  CHECK_FALSE(dt::parse_timestamp("2021-01-01T25:00:00", junk));
  CHECK_FALSE(dt::parse_timestamp("2021-01-01T00:00:00Z extra", junk));
}

TEST_CASE("ingest well-formed file") {
  TempCsv f("ingest_ok.csv", rows_csv(ramp(3)));
  auto s = dt::ingest_csv(f.path, basic_schema());
  CHECK(s.rows() == 3);
  CHECK(s.rejected_lines.empty());
  CHECK(s.endo.at(2, 0) == 2.0);
  CHECK(s.exo.at(1, 0) == 101.0);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK_FALSE(s.endo_missing[i]);
    CHECK_FALSE(s.exo_missing[i]);
  }
}

TEST_CASE("ingest records gaps in the grid") {
  TempCsv f("ingest_gap.csv", rows_csv(ramp(5), {2}));
  auto s = dt::ingest_csv(f.path, basic_schema());
  CHECK(s.rows() == 5);  // grid includes the skipped hour
  CHECK(s.rejected_lines.empty());
  CHECK(s.endo_missing[2]);
  CHECK(s.exo_missing[2]);
  CHECK_FALSE(s.endo_missing[3]);
  CHECK(s.endo.at(3, 0) == 3.0);
}

TEST_CASE("ingest stores NA cells as missing") {
  std::string body =
      "ts,y,x\n"
      "2021-03-01T00:00:00,1.0,10\n"
      "2021-03-01T01:00:00,2.0,NA\n"
      "2021-03-01T02:00:00,3.0,30\n";
  TempCsv f("ingest_na.csv", body);
  auto s = dt::ingest_csv(f.path, basic_schema());
  CHECK(s.rows() == 3);
  CHECK(s.exo_missing[1]);
  CHECK_FALSE(s.endo_missing[1]);
  CHECK(s.endo.at(1, 0) == 2.0);
}

TEST_CASE("ingest rejections and errors") {
  std::string body =
      "ts,y,x\n"
      "2021-03-01T00:00:00,1.0,10\n"
      "garbage,2.0,20\n"
      "2021-03-01T01:00:00,3.0,30\n"
      "2021-03-01T01:00:00,4.0,40\n"
      "2021-03-01T02:00:00,5.0,50\n";
  TempCsv f("ingest_rej.csv", body);
  auto s = dt::ingest_csv(f.path, basic_schema());
  CHECK(s.rows() == 3);
  REQUIRE(s.rejected_lines.size() == 2);
  CHECK(s.rejected_lines[0] == 3);  // unparseable timestamp
  CHECK(s.rejected_lines[1] == 5);  // duplicate timestamp

  std::string desc =
      "ts,y,x\n"
      "2021-03-01T05:00:00,1.0,10\n"
      "2021-03-01T03:00:00,2.0,20\n";
  TempCsv g("ingest_desc.csv", desc);
  CHECK_THROWS_AS(dt::ingest_csv(g.path, basic_schema()), ftx::DataError);

  dt::SchemaSpec bad = basic_schema();
  bad.exo_cols = {"missing_col"};
  TempCsv h("ingest_schema.csv", rows_csv(ramp(3)));
  CHECK_THROWS_WITH_AS(dt::ingest_csv(h.path, bad),
                       doctest::Contains("missing_col"), ftx::DataError);

  CHECK_THROWS_AS(dt::ingest_csv("no_such_file.csv", basic_schema()),
                  ftx::DataError);
}

TEST_CASE("window counts") {
  TempCsv f13("w13.csv", rows_csv(ramp(13)));
  auto s13 = dt::ingest_csv(f13.path, basic_schema());
  CHECK(dt::make_windows(s13, 12, 1).size() == 1);

  TempCsv f100("w100.csv", rows_csv(ramp(100)));
  auto s100 = dt::ingest_csv(f100.path, basic_schema());
  auto w100 = dt::make_windows(s100, 12, 1);
  CHECK(w100.size() == 88);

  // A skipped hour mid-series knocks out every overlapping window.
  TempCsv fgap("wgap.csv", rows_csv(ramp(100), {50}));
  auto sgap = dt::ingest_csv(fgap.path, basic_schema());
  auto wgap = dt::make_windows(sgap, 12, 1);
  CHECK(wgap.size() == brute_force_window_count(sgap, 12, 1));
  CHECK(wgap.size() == 75);
  for (const auto& w : wgap) {
    CHECK((w.origin + 12 < 50 || w.origin > 50));
  }

  TempCsv fshort("wshort.csv", rows_csv(ramp(12)));
  auto sshort = dt::ingest_csv(fshort.path, basic_schema());
  CHECK_THROWS_AS(dt::make_windows(sshort, 12, 1), ftx::DataError);
}

TEST_CASE("window values mirror the series") {
  TempCsv f("wvals.csv", rows_csv(ramp(30)));
  auto s = dt::ingest_csv(f.path, basic_schema());
  auto ws = dt::make_windows(s, 12, 1);
  for (const auto& w : ws) {
    for (std::size_t t = 0; t < 12; ++t) {
      CHECK(w.x_endo.at(t, 0) == s.endo.at(w.origin + t, 0));
      CHECK(w.x_exo.at(t, 0) == s.exo.at(w.origin + t, 0));
    }
    CHECK(w.y[0] == s.endo.at(w.origin + 12, 0));
  }
}

TEST_CASE("chronological split") {
  auto mk = [](std::size_t n) {
    std::vector<dt::SeriesWindow> ws(n);
    for (std::size_t i = 0; i < n; ++i) ws[i].origin = i;
    return ws;
  };
  auto [tr10, te10] = dt::chronological_split(mk(10), 0.8);
  CHECK(tr10.size() == 8);
  CHECK(te10.size() == 2);

  auto [tr5, te5] = dt::chronological_split(mk(5), 0.8);
  CHECK(tr5.size() == 4);
  CHECK(te5.size() == 1);

  ftx::Rng rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 2 + rng.next_below(200);
    const double frac = 0.2 + 0.6 * rng.uniform();
    std::vector<dt::SeriesWindow> ws;
    try {
      auto [tr, te] = dt::chronological_split(mk(n), frac);
      REQUIRE(!tr.empty());
      REQUIRE(!te.empty());
      std::size_t max_train = 0, min_test = SIZE_MAX;
      for (const auto& w : tr) max_train = std::max(max_train, w.origin);
      for (const auto& w : te) min_test = std::min(min_test, w.origin);
      CHECK(max_train < min_test);
      CHECK(tr.size() + te.size() == n);
    } catch (const ftx::DataError&) {
      // tiny n with extreme frac can leave an empty side; that is the
      // documented error path
    }
  }

  CHECK_THROWS_AS(dt::chronological_split(mk(1), 0.8), ftx::DataError);
  CHECK_THROWS_AS(dt::chronological_split(mk(10), 0.0), ftx::ConfigError);
}

TEST_CASE("exogenous imputation carries forward then falls back to train mean") {
  std::string body = "ts,y,x\n";
  const std::int64_t t0 = 1614556800;
  // 40 hourly rows; x missing at rows 0 (no prior obs) and 7 (carry).
  for (std::size_t i = 0; i < 40; ++i) {
    body += dt::format_timestamp(t0 + static_cast<std::int64_t>(i) * 3600);
    if (i == 0 || i == 7) {
      body += "," + std::to_string(i) + ",NA\n";
    } else {
      body += "," + std::to_string(i) + "," + std::to_string(10.0 * i) + "\n";
    }
  }
  TempCsv f("impute.csv", body);
  auto s = dt::ingest_csv(f.path, basic_schema());
  auto ws = dt::make_windows(s, 12, 1);

  // Window at origin 0: x missing at window rows 0 and 7.
  const auto& w0 = ws[0];
  CHECK(w0.exo_imputed[0]);
  CHECK(w0.exo_mean_pending[0]);  // nothing earlier in the window
  CHECK(w0.exo_imputed[7]);
  CHECK_FALSE(w0.exo_mean_pending[7]);
  CHECK(w0.x_exo.at(7, 0) == 60.0);  // value carried from row 6

  // Window at origin 5: row 7 is in-window index 2, carried from index 1.
  const auto& w5 = ws[5];
  CHECK(w5.exo_imputed[2]);
  CHECK(w5.x_exo.at(2, 0) == 60.0);

  auto [train, test] = dt::chronological_split(std::move(ws), 0.8);
  auto means = dt::train_exo_means(train, 1);

  // Recompute the mean over observed cells only; leakage guard.
  double sum = 0.0;
  std::size_t cnt = 0;
  for (const auto& w : train) {
    for (std::size_t t = 0; t < 12; ++t) {
      if (!w.exo_imputed[t]) {
        sum += w.x_exo.at(t, 0);
        ++cnt;
      }
    }
  }
  CHECK(means[0] == doctest::Approx(sum / cnt).epsilon(1e-15));

  dt::fill_pending_exo(train, means);
  dt::fill_pending_exo(test, means);
  CHECK(train[0].x_exo.at(0, 0) == means[0]);
  for (const auto& w : train) {
    for (std::size_t t = 0; t < 12; ++t) CHECK_FALSE(w.exo_mean_pending[t]);
  }
}

TEST_CASE("normalizer fit apply and inverse") {
  TempCsv f("norm.csv", rows_csv(ramp(60)));
  auto s = dt::ingest_csv(f.path, basic_schema());
  auto ws = dt::make_windows(s, 12, 1);
  auto [train, test] = dt::chronological_split(std::move(ws), 0.8);

  auto raw_train = train;  // keep originals for the round trip
  auto nz = dt::fit_normalizer(train);
  dt::apply_normalizer(nz, train);

  for (std::size_t wi = 0; wi < train.size(); ++wi) {
    for (std::size_t t = 0; t < 12; ++t) {
      const double back = nz.denorm_endo(0, train[wi].x_endo.at(t, 0));
      CHECK(std::abs(back - raw_train[wi].x_endo.at(t, 0)) < 1e-9);
    }
    const double yback = nz.denorm_endo(0, train[wi].y[0]);
    CHECK(std::abs(yback - raw_train[wi].y[0]) < 1e-9);
  }
}

TEST_CASE("constant column normalizes to zero via floored std") {
  std::vector<std::pair<double, double>> vals(30, {5.0, 7.0});
  TempCsv f("const.csv", rows_csv(vals));
  auto s = dt::ingest_csv(f.path, basic_schema());
  auto ws = dt::make_windows(s, 12, 1);
  auto [train, test] = dt::chronological_split(std::move(ws), 0.8);
  auto nz = dt::fit_normalizer(train);
  CHECK(nz.endo_std[0] == 1e-8);
  dt::apply_normalizer(nz, train);
  CHECK(train[0].x_endo.at(0, 0) == 0.0);
  CHECK(train[0].y[0] == 0.0);
}

TEST_CASE("test split normalized with train statistics") {
  // Mean shifts sharply in the tail; train stats must win.
  std::vector<std::pair<double, double>> vals(100);
  for (std::size_t i = 0; i < 100; ++i) {
    const double level = i < 80 ? 0.0 : 1000.0;
    vals[i] = {level + static_cast<double>(i % 7), 1.0};
  }
  TempCsv f("shift.csv", rows_csv(vals));
  auto s = dt::ingest_csv(f.path, basic_schema());
  auto ds = dt::prepare_dataset(s, 12, 1, 0.8);

  // If test windows were normalized with their own stats their mean would
  // be near zero; with train stats the shifted tail stays far from zero.
  double test_mean = 0.0;
  std::size_t n = 0;
  for (const auto& w : ds.test) {
    for (std::size_t t = 0; t < 12; ++t) {
      test_mean += w.x_endo.at(t, 0);
      ++n;
    }
  }
  test_mean /= static_cast<double>(n);
  CHECK(test_mean > 10.0);

  // Leakage guard: stats recomputed from the train split must match.
  double sum = 0.0;
  std::size_t cnt = 0;
  for (const auto& w : ds.train) {
    for (std::size_t t = 0; t < 12; ++t) {
      sum += ds.normalizer.denorm_endo(0, w.x_endo.at(t, 0));
      ++cnt;
    }
  }
  const double recomputed_mean = sum / static_cast<double>(cnt);
  CHECK(recomputed_mean == doctest::Approx(ds.normalizer.endo_mean[0])
                               .epsilon(1e-9));
}

TEST_CASE("synthetic series determinism") {
  dt::SynthSpec spec;
  spec.length = 300;
  spec.seed = 42;
  auto a = dt::synth_generate(spec);
  auto b = dt::synth_generate(spec);
  REQUIRE(a.rows() == 300);
  for (std::size_t t = 0; t < 300; ++t) {
    CHECK(a.endo.at(t, 0) == b.endo.at(t, 0));
    CHECK(a.exo.at(t, 0) == b.exo.at(t, 0));
    CHECK(a.exo.at(t, 1) == b.exo.at(t, 1));
  }

  dt::SynthSpec other = spec;
  other.seed = 43;
  auto c = dt::synth_generate(other);
  bool any_diff = false;
  for (std::size_t t = 0; t < 300; ++t) {
    any_diff = any_diff || c.endo.at(t, 0) != a.endo.at(t, 0);
  }
  CHECK(any_diff);

  dt::SynthSpec tiny = spec;
  tiny.length = 100;
  CHECK_THROWS_AS(dt::synth_generate(tiny), ftx::ConfigError);
}

TEST_CASE("pure daily sinusoid peaks at the period-24 bin") {
  dt::SynthSpec spec;
  spec.length = 240;
  spec.noise_sigma = 0.0;
  spec.amp_weekly = 0.0;
  spec.trend_slope = 0.0;
  spec.driver_scale = 0.0;
  auto s = dt::synth_generate(spec);

  // Any 24-aligned slice of length 24 concentrates energy in bin 1.
  for (std::size_t start : {0, 24, 96}) {
    std::vector<double> slice(24);
    for (std::size_t t = 0; t < 24; ++t) {
      slice[t] = s.endo.at(start + t, 0);
    }
    auto spec24 = ftx::spectral::dft_direct(slice);
    std::vector<double> amp, phase;
    ftx::spectral::amplitude_phase(spec24, amp, phase);
    CHECK(amp[1] == doctest::Approx(12.0).epsilon(1e-9));
    for (std::size_t k = 2; k + 1 < 24; ++k) {
      CHECK(amp[k] < 1e-9);
    }
  }
}

TEST_CASE("leading exogenous channel predicts the target") {
  dt::SynthSpec spec;
  spec.length = 2000;
  spec.seed = 9;
  auto s = dt::synth_generate(spec);

  // One-variable least squares of y[t+1] on the lead channel at t.
  std::vector<double> xs, ys;
  for (std::size_t t = 0; t + 1 < s.rows(); ++t) {
    xs.push_back(s.exo.at(t, 0));
    ys.push_back(s.endo.at(t + 1, 0));
  }
  const std::size_t n = xs.size();
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  const double slope = sxy / sxx;
  double ss_res = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double pred = my + slope * (xs[i] - mx);
    ss_res += (ys[i] - pred) * (ys[i] - pred);
  }
  const double r2 = 1.0 - ss_res / syy;
  CHECK(r2 > 0.2);
}

TEST_CASE("csv round trip") {
  dt::SynthSpec spec;
  spec.length = 250;
  spec.seed = 3;
  auto s = dt::synth_generate(spec);
  dt::write_csv(s, "roundtrip.csv");

  dt::SchemaSpec schema;
  schema.timestamp_col = "timestamp";
  schema.endo_cols = {"target"};
  schema.exo_cols = {"driver_lead", "driver_lag"};
  auto back = dt::ingest_csv("roundtrip.csv", schema);
  std::remove("roundtrip.csv");

  REQUIRE(back.rows() == s.rows());
  CHECK(back.rejected_lines.empty());
  for (std::size_t t = 0; t < s.rows(); ++t) {
    CHECK(back.timestamps[t] == s.timestamps[t]);
    CHECK(back.endo.at(t, 0) == s.endo.at(t, 0));  // %.17g is exact
    CHECK(back.exo.at(t, 0) == s.exo.at(t, 0));
    CHECK(back.exo.at(t, 1) == s.exo.at(t, 1));
  }
}

TEST_CASE("manifest parsing") {
  nlohmann::json j{{"csv_path", "a.csv"},
                   {"timestamp_col", "ts"},
                   {"endo_cols", {"y"}},
                   {"exo_cols", {"x1", "x2"}},
                   {"lookback", 12},
                   {"horizon", 1},
                   {"train_frac", 0.8}};
  auto m = dt::manifest_from_json(j);
  CHECK(m.csv_path == "a.csv");
  CHECK(m.exo_cols.size() == 2);
  auto j2 = dt::to_json(m);
  CHECK(dt::manifest_from_json(j2).lookback == 12);

  nlohmann::json missing{{"csv_path", "a.csv"}};
  CHECK_THROWS_AS(dt::manifest_from_json(missing), ftx::ConfigError);
  nlohmann::json unknown = j;
  unknown["surprise"] = 1;
  CHECK_THROWS_WITH_AS(dt::manifest_from_json(unknown),
                       doctest::Contains("surprise"), ftx::ConfigError);
}

TEST_CASE("prepare_dataset end to end") {
  dt::SynthSpec spec;
  spec.length = 400;
  spec.seed = 17;
  auto s = dt::synth_generate(spec);
  auto ds = dt::prepare_dataset(s, 12, 1, 0.8);

  const std::size_t total = ds.train.size() + ds.test.size();
  CHECK(total == 400 - 12);
  CHECK(ds.train.size() ==
        static_cast<std::size_t>(0.8 * static_cast<double>(total)));
  CHECK(ds.d_endo == 1);
  CHECK(ds.d_exo == 2);

  std::size_t max_train = 0, min_test = SIZE_MAX;
  for (const auto& w : ds.train) max_train = std::max(max_train, w.origin);
  for (const auto& w : ds.test) min_test = std::min(min_test, w.origin);
  CHECK(max_train < min_test);
}
