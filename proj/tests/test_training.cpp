#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <unistd.h>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "json.hpp"

#include "ftx/config.hpp"
#include "ftx/data.hpp"
#include "ftx/errors.hpp"
#include "ftx/model.hpp"
#include "ftx/rng.hpp"
#include "ftx/tensor.hpp"
#include "ftx/training.hpp"

using namespace ftx;
using namespace ftx::training;

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;
// Chi-square critical value, 1 degree of freedom, significance 0.001.
constexpr double kChi2Crit = 10.827566170662733;

ModelConfig small_config(std::size_t d_exo = 2) {
  ModelConfig c;
  c.lookback = 12;
  c.patch_len = 4;
  c.d_endo = 1;
  c.d_exo = d_exo;
  c.hidden = 16;
  c.layers = 1;
  c.heads = 2;
  return c;
}

// Windows over a clean daily sine; exogenous channels are leading copies of
// the target, so they are genuinely informative.
std::vector<data::SeriesWindow> sine_windows(std::size_t count, std::size_t T,
                                             std::size_t d_exo,
                                             double noise = 0.0,
                                             std::uint64_t seed = 5) {
  std::vector<data::SeriesWindow> ws;
  Rng rng(seed);
  auto wave = [](double t) { return std::sin(kTwoPi * t / 24.0); };
  for (std::size_t o = 0; o < count; ++o) {
    data::SeriesWindow w;
    w.x_endo.rows = T;
    w.x_endo.cols = 1;
    w.x_endo.v.resize(T);
    w.x_exo.rows = T;
    w.x_exo.cols = d_exo;
    w.x_exo.v.resize(T * d_exo);
    for (std::size_t t = 0; t < T; ++t) {
      const double time = static_cast<double>(o + t);
      w.x_endo.v[t] = wave(time) + noise * rng.normal();
      for (std::size_t j = 0; j < d_exo; ++j) {
        w.x_exo.v[t * d_exo + j] = wave(time + 1.0 + static_cast<double>(j));
      }
    }
    w.y = {wave(static_cast<double>(o + T))};
    w.origin = o + T;
    ws.push_back(std::move(w));
  }
  return ws;
}

WindowRefs refs_of(const std::vector<data::SeriesWindow>& ws) {
  WindowRefs r;
  for (const auto& w : ws) r.push_back(&w);
  return r;
}

Adam make_adam(FTimeXerModel& m, const TrainingConfig& tc) {
  std::vector<Tensor> ps;
  for (const auto& [name, t] : m.parameters()) ps.push_back(t);
  return Adam(std::move(ps), tc);
}

double chi2_two_bin(std::size_t zeros, std::size_t n, double p) {
  const double e0 = static_cast<double>(n) * p;
  const double e1 = static_cast<double>(n) * (1.0 - p);
  const double d0 = static_cast<double>(zeros) - e0;
  const double d1 = static_cast<double>(n - zeros) - e1;
  return d0 * d0 / e0 + d1 * d1 / e1;
}

struct TempPath {
  std::string path;
  explicit TempPath(const char* tag)
      : path(std::string("/tmp/ftx_training_") + tag + "_" +
             std::to_string(::getpid()) + ".jsonl") {}
  ~TempPath() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("mask extremes, validation, and shape preservation") {
  Rng rng(3);
  std::vector<double> v(24);
  for (auto& x : v) x = rng.uniform(-2.0, 2.0);
  Tensor x = Tensor::from_data({6, 4}, v);

  Rng mr(7);
  MaskedInput keep_all = apply_mask(x, 0.0, MaskGranularity::kEntry, mr);
  CHECK(keep_all.masked.data() == x.data());
  for (auto k : keep_all.keep) CHECK(k == 1);

  MaskedInput drop_all = apply_mask(x, 1.0, MaskGranularity::kEntry, mr);
  for (double d : drop_all.masked.data()) CHECK(d == 0.0);
  for (auto k : drop_all.keep) CHECK(k == 0);
  CHECK(drop_all.masked.shape() == x.shape());

  CHECK_THROWS_AS(apply_mask(x, -0.1, MaskGranularity::kEntry, mr),
                  ConfigError);
  CHECK_THROWS_AS(apply_mask(x, 1.1, MaskGranularity::kEntry, mr),
                  ConfigError);
  CHECK_THROWS_AS(apply_mask(Tensor::zeros({5}), 0.3,
                             MaskGranularity::kEntry, mr),
                  ShapeError);

  // Zeroed cells are exactly the dropped ones, kept cells pass through.
  Rng mr2(8);
  MaskedInput half = apply_mask(x, 0.5, MaskGranularity::kEntry, mr2);
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (half.keep[i]) {
      CHECK(half.masked.data()[i] == v[i]);
    } else {
      CHECK(half.masked.data()[i] == 0.0);
    }
  }
}

TEST_CASE("entry mask matches its Bernoulli rate") {
  SUBCASE("masked fraction within three binomial standard deviations") {
    const double p = 0.3;
    const std::size_t n = 10000;
    Rng mr(101);
    Tensor x = Tensor::full({100, 100}, 1.0);
    MaskedInput mi = apply_mask(x, p, MaskGranularity::kEntry, mr);
    std::size_t zeros = 0;
    for (auto k : mi.keep) zeros += k == 0;
    const double frac = static_cast<double>(zeros) / static_cast<double>(n);
    const double sigma = std::sqrt(p * (1.0 - p) / static_cast<double>(n));
    CHECK(std::fabs(frac - p) <= 3.0 * sigma);
  }
  SUBCASE("chi-square goodness of fit over 1e5 draws") {
    for (double p : {0.1, 0.3, 0.5}) {
      CAPTURE(p);
      Rng mr(202 + static_cast<std::uint64_t>(p * 10));
      Tensor x = Tensor::full({200, 500}, 1.0);
      MaskedInput mi = apply_mask(x, p, MaskGranularity::kEntry, mr);
      std::size_t zeros = 0;
      for (auto k : mi.keep) zeros += k == 0;
      CHECK(chi2_two_bin(zeros, 100000, p) < kChi2Crit);
    }
  }
}

TEST_CASE("coarse granularities drop whole columns and rows") {
  const std::size_t T = 12, dx = 50;
  Tensor x = Tensor::full({T, dx}, 1.0);

  SUBCASE("variable granularity") {
    Rng mr(31);
    std::size_t dropped = 0, total = 0;
    for (int trial = 0; trial < 40; ++trial) {
      MaskedInput mi = apply_mask(x, 0.3, MaskGranularity::kVariable, mr);
      for (std::size_t j = 0; j < dx; ++j) {
        const auto first = mi.keep[j];
        for (std::size_t t = 1; t < T; ++t)
          CHECK(mi.keep[t * dx + j] == first);  // column is all-or-none
        dropped += first == 0;
        ++total;
      }
    }
    const double frac = static_cast<double>(dropped) / total;
    const double sigma = std::sqrt(0.3 * 0.7 / static_cast<double>(total));
    CHECK(std::fabs(frac - 0.3) <= 3.0 * sigma);
  }
  SUBCASE("timestep granularity") {
    Rng mr(32);
    std::size_t dropped = 0, total = 0;
    for (int trial = 0; trial < 160; ++trial) {
      MaskedInput mi = apply_mask(x, 0.3, MaskGranularity::kTimestep, mr);
      for (std::size_t t = 0; t < T; ++t) {
        const auto first = mi.keep[t * dx];
        for (std::size_t j = 1; j < dx; ++j)
          CHECK(mi.keep[t * dx + j] == first);  // row is all-or-none
        dropped += first == 0;
        ++total;
      }
    }
    const double frac = static_cast<double>(dropped) / total;
    const double sigma = std::sqrt(0.3 * 0.7 / static_cast<double>(total));
    CHECK(std::fabs(frac - 0.3) <= 3.0 * sigma);
  }
}

TEST_CASE("mask specs are self-seeded and reproducible") {
  Rng rng(9);
  std::vector<double> v(40);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  Tensor x = Tensor::from_data({10, 4}, v);
  MaskSpec spec;
  spec.p = 0.4;
  spec.seed = 77;
  MaskedInput a = apply_mask(x, spec);
  MaskedInput b = apply_mask(x, spec);
  CHECK(a.keep == b.keep);
  CHECK(a.masked.data() == b.masked.data());

  spec.seed = 78;
  MaskedInput c = apply_mask(x, spec);
  CHECK(a.keep != c.keep);
}

TEST_CASE("consistency loss hand values") {
  Tensor a = Tensor::from_data({2}, {1.0, 2.0});
  Tensor b = Tensor::from_data({2}, {1.0, 3.0});
  CHECK(consistency_loss(a, b).value() == 1.0);
  CHECK(consistency_loss(a, a).value() == 0.0);

  // Batch form: per-row squared norms averaged over rows.
  Tensor m1 = Tensor::from_data({2, 2}, {1.0, 2.0, 1.0, 3.0});
  Tensor m2 = Tensor::from_data({2, 2}, {1.0, 2.0, 2.0, 5.0});
  CHECK(consistency_loss(m1, m2).value() == doctest::Approx(2.5).epsilon(1e-15));

  CHECK_THROWS_AS(consistency_loss(a, Tensor::zeros({3})), ShapeError);

  Tape::active().reset();
  Tensor p = Tensor::from_data({2}, {0.5, -0.5}, true);
  Tensor q = Tensor::from_data({2}, {0.0, 0.0}, true);
  backward(consistency_loss(p, q));
  REQUIRE_FALSE(p.grad().empty());
  CHECK(p.grad()[0] == doctest::Approx(1.0));   // 2 (p - q)
  CHECK(q.grad()[0] == doctest::Approx(-1.0));
  Tape::active().reset();
}

TEST_CASE("prediction loss hand values") {
  Tensor y = Tensor::from_data({3}, {1.0, 2.0, 3.0});
  Tensor yh = Tensor::from_data({3}, {1.0, 2.0, 4.0});
  CHECK(prediction_loss(yh, y, LossKind::kMse).value() == 1.0 / 3.0);
  CHECK(prediction_loss(yh, y, LossKind::kMae).value() == 1.0 / 3.0);
  CHECK(prediction_loss(y, y, LossKind::kMse).value() == 0.0);
  CHECK_THROWS_AS(
      prediction_loss(Tensor::zeros({0}), Tensor::zeros({0}), LossKind::kMse),
      DataError);
}

TEST_CASE("adam converges on a convex quadratic") {
  TrainingConfig tc;
  tc.lr = 1e-2;
  Tensor theta = Tensor::from_data({4}, {5.0, -3.0, 2.0, 8.0}, true);
  Tensor target = Tensor::from_data({4}, {1.0, 1.0, 1.0, 1.0});
  Adam opt({theta}, tc);

  std::size_t steps = 0;
  double err = std::numeric_limits<double>::infinity();
  while (steps < 5000 && err > 1e-6) {
    Tape::active().reset();
    theta.zero_grad();
    backward(mse(theta, target));
    opt.step();
    ++steps;
    err = 0.0;
    for (std::size_t i = 0; i < 4; ++i)
      err = std::max(err, std::fabs(theta.data()[i] - 1.0));
  }
  CHECK(err <= 1e-6);
  CHECK(steps <= 5000);
  CHECK(opt.step_count() == steps);
  MESSAGE("quadratic converged in ", steps, " steps");
  Tape::active().reset();
}

TEST_CASE("adam first step is the clipped bias-corrected update") {
  TrainingConfig tc;  // lr 1e-3, clip 1.0
  Tensor theta = Tensor::from_data({1}, {0.0}, true);
  Adam opt({theta}, tc);
  Tape::active().reset();
  backward(scale(sum_all(theta), 1000.0));  // gradient 1000, norm 1000
  opt.step();
  // Clipping rescales the gradient to unit norm; with zero moments the
  // bias-corrected ratio is 1, so the step is -lr / (1 + eps).
  const double expected = -tc.lr / (1.0 + tc.eps);
  CHECK(theta.data()[0] == doctest::Approx(expected).epsilon(1e-9));
  Tape::active().reset();
}

TEST_CASE("adam leaves parameters without gradients unchanged") {
  TrainingConfig tc;
  Tensor used = Tensor::from_data({1}, {2.0}, true);
  Tensor unused = Tensor::from_data({2}, {3.0, 4.0}, true);
  Adam opt({used, unused}, tc);
  Tape::active().reset();
  backward(sum_all(mul(used, used)));
  opt.step();
  CHECK(unused.data() == std::vector<double>{3.0, 4.0});
  CHECK(used.data()[0] != 2.0);
  Tape::active().reset();
}

TEST_CASE("train step paths, forward counts, and loss algebra") {
  auto ws = sine_windows(8, 12, 2);
  auto batch = refs_of(ws);
  TrainingConfig tc;

  SUBCASE("plain path: one forward per window, no consistency") {
    ModelConfig mc = small_config();
    mc.robust_training_on = false;
    FTimeXerModel m(mc, 50);
    Adam opt = make_adam(m, tc);
    Rng mask_rng(1);
    LossBundle b = train_step(m, opt, batch, tc, mask_rng, 0);
    CHECK(m.forward_count() == batch.size());
    CHECK(b.l_cons == 0.0);
    CHECK(b.total == b.l_pred);
  }

  SUBCASE("augmentation path: one masked forward per window") {
    ModelConfig mc = small_config();
    mc.consistency_on = false;
    mc.mask_p = 1.0;  // all covariates zeroed, so the path is observable
    FTimeXerModel m(mc, 50);
    Adam opt = make_adam(m, tc);
    Rng mask_rng(1);
    LossBundle b = train_step(m, opt, batch, tc, mask_rng, 0);
    CHECK(m.forward_count() == batch.size());
    CHECK(b.l_cons == 0.0);

    ModelConfig plain = mc;
    plain.robust_training_on = false;
    FTimeXerModel m2(plain, 50);
    Adam opt2 = make_adam(m2, tc);
    Rng mask_rng2(1);
    LossBundle b2 = train_step(m2, opt2, batch, tc, mask_rng2, 0);
    CHECK(b.l_pred != b2.l_pred);  // masked inputs actually fed the loss
  }

  SUBCASE("consistency path: two forwards, exact composite") {
    ModelConfig mc = small_config();
    mc.mask_p = 0.5;
    mc.lambda = 0.37;
    FTimeXerModel m(mc, 50);
    Adam opt = make_adam(m, tc);
    Rng mask_rng(1);
    LossBundle b = train_step(m, opt, batch, tc, mask_rng, 0);
    CHECK(m.forward_count() == 2 * batch.size());
    CHECK(b.l_cons > 0.0);
    CHECK(b.total == b.l_pred + b.lambda * b.l_cons);  // same rounding path
  }

  SUBCASE("lambda zero collapses the total to the prediction loss") {
    ModelConfig mc = small_config();
    mc.mask_p = 0.5;
    mc.lambda = 0.0;
    FTimeXerModel m(mc, 50);
    Adam opt = make_adam(m, tc);
    Rng mask_rng(1);
    LossBundle b = train_step(m, opt, batch, tc, mask_rng, 0);
    CHECK(b.total == b.l_pred);
  }

  SUBCASE("p zero makes the consistency term exactly zero") {
    ModelConfig mc = small_config();
    mc.mask_p = 0.0;
    FTimeXerModel m(mc, 50);
    Adam opt = make_adam(m, tc);
    Rng mask_rng(1);
    LossBundle b = train_step(m, opt, batch, tc, mask_rng, 0);
    CHECK(b.l_cons == 0.0);
    CHECK(b.total == b.l_pred);
  }

  SUBCASE("empty batch is rejected") {
    ModelConfig mc = small_config();
    FTimeXerModel m(mc, 50);
    Adam opt = make_adam(m, tc);
    Rng mask_rng(1);
    CHECK_THROWS_AS(train_step(m, opt, WindowRefs{}, tc, mask_rng, 0),
                    DataError);
  }
}

TEST_CASE("sentinel targets never reach the consistency term") {
  auto ws = sine_windows(6, 12, 2);
  auto sentinel = ws;
  for (auto& w : sentinel) w.y = {1.0e6};

  TrainingConfig tc;
  ModelConfig mc = small_config();
  mc.mask_p = 0.5;

  FTimeXerModel ma(mc, 60), mb(mc, 60);
  Adam oa = make_adam(ma, tc), ob = make_adam(mb, tc);
  Rng ra(4), rb(4);
  LossBundle a = train_step(ma, oa, refs_of(ws), tc, ra, 0);
  LossBundle b = train_step(mb, ob, refs_of(sentinel), tc, rb, 0);
  CHECK(a.l_cons == b.l_cons);   // targets do not enter the consistency term
  CHECK(a.l_pred != b.l_pred);
}

TEST_CASE("mask seed toggles consistency but not prediction loss") {
  auto ws = sine_windows(6, 12, 2);
  TrainingConfig tc;
  ModelConfig mc = small_config();
  mc.mask_p = 0.5;

  FTimeXerModel ma(mc, 61), mb(mc, 61);
  Adam oa = make_adam(ma, tc), ob = make_adam(mb, tc);
  Rng ra(100), rb(200);
  LossBundle a = train_step(ma, oa, refs_of(ws), tc, ra, 0);
  LossBundle b = train_step(mb, ob, refs_of(ws), tc, rb, 0);
  CHECK(a.l_pred == b.l_pred);   // clean forward ignores the mask stream
  CHECK(a.l_cons != b.l_cons);
}

TEST_CASE("train step reports divergence with the step index") {
  auto ws = sine_windows(4, 12, 2);
  TrainingConfig tc;
  ModelConfig mc = small_config();
  FTimeXerModel m(mc, 62);
  Tensor w = m.parameter("head.w");
  w.data()[0] = std::numeric_limits<double>::quiet_NaN();
  Adam opt = make_adam(m, tc);
  Rng mask_rng(1);
  try {
    train_step(m, opt, refs_of(ws), tc, mask_rng, 17);
    FAIL("expected DivergedError");
  } catch (const DivergedError& e) {
    CHECK(e.step == 17);
  }
  Tape::active().reset();
}

TEST_CASE("training reduces loss on a sine regression") {
  auto ws = sine_windows(128, 12, 1);
  TrainingConfig tc;
  tc.lr = 3e-3;
  ModelConfig mc = small_config(1);
  mc.robust_training_on = false;
  FTimeXerModel m(mc, 70);
  Adam opt = make_adam(m, tc);

  Rng mask_rng(1);
  double first = 0.0, last = 0.0;
  std::size_t step = 0;
  for (int round = 0; round < 50; ++round) {
    for (std::size_t start = 0; start < ws.size(); start += 32) {
      WindowRefs batch;
      for (std::size_t i = start; i < start + 32 && i < ws.size(); ++i)
        batch.push_back(&ws[i]);
      LossBundle b = train_step(m, opt, batch, tc, mask_rng, step++);
      if (step == 1) first = b.l_pred;
      last = b.l_pred;
      if (step >= 200) break;
    }
    if (step >= 200) break;
  }
  MESSAGE("sine regression: first ", first, " last ", last);
  CHECK(last < 0.5 * first);
}

TEST_CASE("fit is deterministic and restores the best parameters") {
  auto ws = sine_windows(64, 12, 2, 0.05);
  TrainingConfig tc;
  tc.epochs = 3;
  tc.batch_size = 16;
  tc.seed = 9;
  ModelConfig mc = small_config();

  FTimeXerModel m1(mc, tc.seed), m2(mc, tc.seed);
  FitResult r1 = fit(m1, ws, tc);
  FitResult r2 = fit(m2, ws, tc);

  REQUIRE(r1.log.size() == r2.log.size());
  for (std::size_t i = 0; i < r1.log.size(); ++i) {
    CHECK(r1.log[i].l_pred == r2.log[i].l_pred);
    CHECK(r1.log[i].l_cons == r2.log[i].l_cons);
    CHECK(r1.log[i].val_mse == r2.log[i].val_mse);
  }
  const auto& p1 = m1.parameters();
  const auto& p2 = m2.parameters();
  for (std::size_t i = 0; i < p1.size(); ++i)
    CHECK(p1[i].second.data() == p2[i].second.data());

  // The restored parameters reproduce the recorded best validation score.
  const std::size_t k_val = static_cast<std::size_t>(ws.size() * tc.val_frac);
  const std::size_t n_train = ws.size() - k_val;
  Matrix pred = predict(m1, ws.data() + n_train, ws.data() + ws.size());
  double s = 0.0;
  for (std::size_t i = 0; i < k_val; ++i) {
    const double d = pred.v[i] - ws[n_train + i].y[0];
    s += d * d;
  }
  CHECK(s / static_cast<double>(k_val) ==
        doctest::Approx(r1.best_val_mse).epsilon(1e-15));
  CHECK(r1.best_epoch >= 1);
  CHECK(r1.steps == r1.log.size() * ((n_train + 15) / 16));
}

TEST_CASE("fit writes one json line per epoch") {
  auto ws = sine_windows(40, 12, 2);
  TrainingConfig tc;
  tc.epochs = 4;
  tc.batch_size = 16;
  tc.seed = 33;
  ModelConfig mc = small_config();
  mc.mask_p = 0.0;  // consistency term must log as exactly zero

  TempPath log("log");
  FTimeXerModel m(mc, tc.seed);
  FitResult r = fit(m, ws, tc, log.path);
  REQUIRE(r.log.size() == 4);

  std::ifstream in(log.path);
  REQUIRE(in.good());
  std::string line;
  std::size_t epoch = 0;
  while (std::getline(in, line)) {
    ++epoch;
    auto j = nlohmann::json::parse(line);
    CHECK(j.at("epoch").get<std::size_t>() == epoch);
    CHECK(j.at("seed").get<std::uint64_t>() == 33);
    CHECK(j.at("l_cons").get<double>() == 0.0);
    CHECK(j.contains("l_pred"));
    CHECK(j.contains("total"));
    CHECK(j.contains("val_mse"));
    CHECK(j.contains("wall_ms"));
    CHECK(j.at("l_pred").get<double>() == r.log[epoch - 1].l_pred);
  }
  CHECK(epoch == 4);
}

TEST_CASE("fit stops early when validation stalls") {
  // NaN validation targets can never improve on the first epoch's score, so
  // the patience counter runs out deterministically.
  auto ws = sine_windows(20, 12, 2);
  const std::size_t k_val = 2;  // floor(20 * 0.1)
  for (std::size_t i = ws.size() - k_val; i < ws.size(); ++i)
    ws[i].y = {std::numeric_limits<double>::quiet_NaN()};

  TrainingConfig tc;
  tc.epochs = 50;
  tc.batch_size = 8;
  tc.patience = 2;
  ModelConfig mc = small_config();
  FTimeXerModel m(mc, 81);
  TempPath log("stall");
  FitResult r = fit(m, ws, tc, log.path);
  CHECK(r.early_stopped);
  CHECK(r.log.size() == 3);  // best at epoch 1, then patience epochs
  CHECK(r.best_epoch == 1);

  // The stalled run's log records null for the unidentifiable score.
  std::ifstream in(log.path);
  std::string line;
  std::getline(in, line);
  CHECK(nlohmann::json::parse(line).at("val_mse").is_null());
}

TEST_CASE("fit rejects empty or over-held-out window sets") {
  TrainingConfig tc;
  ModelConfig mc = small_config();
  FTimeXerModel m(mc, 1);
  CHECK_THROWS_AS(fit(m, {}, tc), DataError);

  auto one = sine_windows(1, 12, 2);
  CHECK_THROWS_AS(fit(m, one, tc), DataError);  // validation would eat it
}
