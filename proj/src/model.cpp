#include "ftx/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"

#include "ftx/errors.hpp"
#include "ftx/rng.hpp"
#include "ftx/spectral.hpp"

namespace ftx {

namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr double kTwoPi = 6.283185307179586476925286766559;

Tensor init_weight(Rng& rng, std::size_t rows, std::size_t cols) {
  const double bound = std::sqrt(1.0 / static_cast<double>(rows));
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return Tensor::from_data({rows, cols}, std::move(v), true);
}

void check_input(const char* name, const Tensor& x, std::size_t rows,
                 std::size_t cols) {
  if (!x.defined()) {
    throw ShapeError(std::string(name) + ": undefined input, expected (" +
                     std::to_string(rows) + ", " + std::to_string(cols) + ")");
  }
  if (x.ndim() != 2 || x.rows() != rows || x.cols() != cols) {
    throw ShapeError(std::string(name) + ": expected (" +
                     std::to_string(rows) + ", " + std::to_string(cols) +
                     "), got " + shape_str(x.shape()));
  }
}

}  // namespace

FTimeXerModel::FTimeXerModel(ModelConfig cfg, std::uint64_t seed)
    : cfg_(std::move(cfg)), seed_(seed) {
  cfg_.validate();
  Rng rng(mix_seed(seed));
  const std::size_t d = cfg_.hidden;
  const std::size_t P = cfg_.patch_count();

  auto reg = [this](const char* name, Tensor t) {
    params_.emplace_back(name, t);
    return t;
  };
  auto reg_l = [this](std::size_t l, const char* name, Tensor t) {
    params_.emplace_back("layer" + std::to_string(l) + "." + name, t);
    return t;
  };

  patch_w_ = reg("patch_embed.w", init_weight(rng, cfg_.patch_len * cfg_.d_endo, d));
  patch_b_ = reg("patch_embed.b", Tensor::zeros({d}, true));
  global_token_ = reg("global_token", Tensor::zeros({d}, true));

  if (cfg_.d_exo > 0) {
    exo_theta_ = reg("exo.theta", init_weight(rng, cfg_.d_exo, d));
    exo_b_ = reg("exo.b", Tensor::zeros({d}, true));
    if (cfg_.exo_agg == ExoAgg::kAttentionPool) {
      // Zero scores start the pool at the uniform (mean) weighting.
      exo_score_ = reg("exo.score", Tensor::zeros({d}, true));
    }
  }

  layers_.resize(cfg_.layers);
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    LayerParams& lp = layers_[l];
    lp.attn_wq = reg_l(l, "attn.wq", init_weight(rng, d, d));
    lp.attn_wk = reg_l(l, "attn.wk", init_weight(rng, d, d));
    lp.attn_wv = reg_l(l, "attn.wv", init_weight(rng, d, d));
    lp.attn_wo = reg_l(l, "attn.wo", init_weight(rng, d, d));
    if (cfg_.d_exo > 0) {
      lp.cross_wq = reg_l(l, "cross.wq", init_weight(rng, d, d));
      lp.cross_wk = reg_l(l, "cross.wk", init_weight(rng, d, d));
      lp.cross_wv = reg_l(l, "cross.wv", init_weight(rng, d, d));
      lp.cross_wo = reg_l(l, "cross.wo", init_weight(rng, d, d));
    }
    if (cfg_.freq_branch_on) {
      lp.freq_pre = reg_l(l, "freq.pre", init_weight(rng, d, d));
      lp.freq_filter_w = reg_l(l, "freq.filter.w", init_weight(rng, P, P));
      lp.freq_filter_b = reg_l(l, "freq.filter.b", Tensor::zeros({P}, true));
      lp.freq_post = reg_l(l, "freq.post", init_weight(rng, d, d));
      if (cfg_.fusion == Fusion::kConcatMlp) {
        lp.fuse_w1 = reg_l(l, "fuse.w1", init_weight(rng, 2 * d, d));
        lp.fuse_b1 = reg_l(l, "fuse.b1", Tensor::zeros({d}, true));
        lp.fuse_w2 = reg_l(l, "fuse.w2", init_weight(rng, d, d));
        lp.fuse_b2 = reg_l(l, "fuse.b2", Tensor::zeros({d}, true));
      } else {
        lp.gate_w = reg_l(l, "fuse.gate.w", init_weight(rng, 2 * d, d));
        lp.gate_b = reg_l(l, "fuse.gate.b", Tensor::zeros({d}, true));
      }
    }
    lp.ln_gain = reg_l(l, "ffn.ln_gain", Tensor::full({d}, 1.0, true));
    lp.ln_bias = reg_l(l, "ffn.ln_bias", Tensor::zeros({d}, true));
    lp.ffn_w1 = reg_l(l, "ffn.w1", init_weight(rng, d, 4 * d));
    lp.ffn_b1 = reg_l(l, "ffn.b1", Tensor::zeros({4 * d}, true));
    lp.ffn_w2 = reg_l(l, "ffn.w2", init_weight(rng, 4 * d, d));
    lp.ffn_b2 = reg_l(l, "ffn.b2", Tensor::zeros({d}, true));
  }

  head_w_ = reg("head.w", init_weight(rng, cfg_.token_count() * d, cfg_.d_endo));
  head_b_ = reg("head.b", Tensor::zeros({cfg_.d_endo}, true));

  // Constant DFT bases over the patch-token axis.
  std::vector<double> c(P * P), ms(P * P);
  for (std::size_t k = 0; k < P; ++k) {
    for (std::size_t t = 0; t < P; ++t) {
      const double ang = kTwoPi * static_cast<double>(k) *
                         static_cast<double>(t) / static_cast<double>(P);
      c[k * P + t] = std::cos(ang);
      ms[k * P + t] = -std::sin(ang);
    }
  }
  dft_cos_ = Tensor::from_data({P, P}, std::move(c));
  dft_msin_ = Tensor::from_data({P, P}, std::move(ms));

  cached_phase_.resize(cfg_.layers);
}

Tensor FTimeXerModel::parameter(const std::string& name) const {
  for (const auto& [n, t] : params_) {
    if (n == name) return t;
  }
  throw std::logic_error("no parameter named '" + name + "'");
}

void FTimeXerModel::zero_grad() {
  for (auto& [n, t] : params_) t.zero_grad();
}

void FTimeXerModel::set_phase_frozen(bool frozen) { phase_frozen_ = frozen; }

Tensor FTimeXerModel::multi_head_attention(const Tensor& q_src,
                                           const Tensor& kv_src,
                                           const Tensor& wq, const Tensor& wk,
                                           const Tensor& wv,
                                           const Tensor& wo) const {
  const std::size_t d = cfg_.hidden;
  const std::size_t h = cfg_.heads;
  const std::size_t dh = d / h;
  Tensor Q = matmul(q_src, wq);
  Tensor K = matmul(kv_src, wk);
  Tensor V = matmul(kv_src, wv);
  std::vector<Tensor> heads;
  heads.reserve(h);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  for (std::size_t i = 0; i < h; ++i) {
    Tensor Qh = slice(Q, 1, i * dh, (i + 1) * dh);
    Tensor Kh = slice(K, 1, i * dh, (i + 1) * dh);
    Tensor Vh = slice(V, 1, i * dh, (i + 1) * dh);
    Tensor scores = scale(matmul(Qh, transpose(Kh)), inv_sqrt);
    Tensor alpha = softmax(scores, 1);
    heads.push_back(matmul(alpha, Vh));
  }
  return matmul(concat(heads, 1), wo);
}

Tensor FTimeXerModel::embed_endogenous(const Tensor& x_endo) {
  check_input("x_endo", x_endo, cfg_.lookback, cfg_.d_endo);
  // Row-major layout makes each patch a contiguous block, so the patch
  // matrix is a plain reshape.
  Tensor patches = reshape(
      x_endo, {cfg_.patch_count(), cfg_.patch_len * cfg_.d_endo});
  Tensor tokens = add(matmul(patches, patch_w_), patch_b_);
  return concat(reshape(global_token_, {1, cfg_.hidden}), tokens, 0);
}

Tensor FTimeXerModel::embed_exogenous(const Tensor& x_exo) {
  if (cfg_.d_exo == 0) return Tensor();
  check_input("x_exo", x_exo, cfg_.lookback, cfg_.d_exo);
  std::vector<Tensor> rows;
  rows.reserve(cfg_.d_exo);
  for (std::size_t j = 0; j < cfg_.d_exo; ++j) {
    Tensor xj = slice(x_exo, 1, j, j + 1);              // T x 1
    Tensor theta_j = slice(exo_theta_, 0, j, j + 1);    // 1 x d
    Tensor proj = add(matmul(xj, theta_j), exo_b_);     // T x d
    if (cfg_.exo_agg == ExoAgg::kMean) {
      rows.push_back(reshape(mean(proj, 0), {1, cfg_.hidden}));
    } else {
      Tensor scores = matmul(proj, reshape(exo_score_, {cfg_.hidden, 1}));
      Tensor alpha = softmax(scores, 0);                // T x 1
      rows.push_back(matmul(transpose(alpha), proj));   // 1 x d
    }
  }
  return concat(rows, 0);
}

Tensor FTimeXerModel::temporal_self_attention(const Tensor& z,
                                              std::size_t layer) {
  const LayerParams& lp = layers_.at(layer);
  return add(z, multi_head_attention(z, z, lp.attn_wq, lp.attn_wk, lp.attn_wv,
                                     lp.attn_wo));
}

Tensor FTimeXerModel::cross_attention(const Tensor& z, const Tensor& exo_tokens,
                                      std::size_t layer) {
  if (!exo_tokens.defined()) return z;  // endogenous-only mode
  const LayerParams& lp = layers_.at(layer);
  return add(z, multi_head_attention(z, exo_tokens, lp.cross_wq, lp.cross_wk,
                                     lp.cross_wv, lp.cross_wo));
}

Tensor FTimeXerModel::frequency_branch(const Tensor& z, std::size_t layer) {
  const LayerParams& lp = layers_.at(layer);
  const std::size_t P = cfg_.patch_count();
  const std::size_t d = cfg_.hidden;

  Tensor zp = slice(z, 0, 1, P + 1);        // patch tokens only
  Tensor pre = matmul(zp, lp.freq_pre);     // P x d, channels in columns

  // In-graph transform: gradients flow through re/im into the amplitude.
  Tensor re = matmul(dft_cos_, pre);
  Tensor im = matmul(dft_msin_, pre);
  Tensor amp = amplitude(re, im);

  // The phase is a constant carrier during backward. Unless frozen for a
  // finite-difference probe, recompute it from the current signal.
  std::vector<double>& ph = cached_phase_.at(layer);
  if (phase_frozen_) {
    if (ph.size() != P * d) {
      throw std::logic_error(
          "frequency_branch: phase freeze requires a prior unfrozen forward");
    }
  } else {
    ph.assign(P * d, 0.0);
    std::vector<double> signal(P), a, p;
    for (std::size_t c = 0; c < d; ++c) {
      for (std::size_t t = 0; t < P; ++t) signal[t] = pre.at(t, c);
      auto spec = spectral::dft_forward(signal);
      spectral::amplitude_phase(spec, a, p);
      for (std::size_t k = 0; k < P; ++k) ph[k * d + c] = p[k];
    }
  }
  std::vector<double> cph(P * d), sph(P * d);
  for (std::size_t i = 0; i < P * d; ++i) {
    cph[i] = std::cos(ph[i]);
    sph[i] = std::sin(ph[i]);
  }
  Tensor cos_ph = Tensor::from_data({P, d}, std::move(cph));
  Tensor sin_ph = Tensor::from_data({P, d}, std::move(sph));

  // Learned filter on the amplitude spectrum, per channel.
  Tensor filtered = transpose(relu(add(
      matmul(transpose(amp), transpose(lp.freq_filter_w)), lp.freq_filter_b)));

  // Inverse transform with the original phase; real part only.
  Tensor recon = scale(add(matmul(transpose(dft_cos_), mul(filtered, cos_ph)),
                           matmul(transpose(dft_msin_), mul(filtered, sin_ph))),
                       1.0 / static_cast<double>(P));

  Tensor post = matmul(recon, lp.freq_post);
  return concat(slice(z, 0, 0, 1), post, 0);  // global token passes through
}

Tensor FTimeXerModel::fuse(const Tensor& z_time, const Tensor& z_freq,
                           std::size_t layer) {
  if (!cfg_.freq_branch_on) return z_time;
  const LayerParams& lp = layers_.at(layer);
  Tensor cat = concat(z_time, z_freq, 1);  // tokens x 2d
  if (cfg_.fusion == Fusion::kConcatMlp) {
    Tensor h = gelu(add(matmul(cat, lp.fuse_w1), lp.fuse_b1));
    return add(matmul(h, lp.fuse_w2), lp.fuse_b2);
  }
  Tensor g = sigmoid(add(matmul(cat, lp.gate_w), lp.gate_b));
  Tensor ones = Tensor::full(g.shape(), 1.0);
  return add(mul(g, z_time), mul(sub(ones, g), z_freq));
}

Tensor FTimeXerModel::ffn_block(const Tensor& z, std::size_t layer) {
  const LayerParams& lp = layers_.at(layer);
  Tensor h = layernorm(z, lp.ln_gain, lp.ln_bias, kLayerNormEps);
  Tensor f = add(matmul(gelu(add(matmul(h, lp.ffn_w1), lp.ffn_b1)), lp.ffn_w2),
                 lp.ffn_b2);
  return add(z, f);
}

Tensor FTimeXerModel::forward(const Tensor& x_endo, const Tensor& x_exo) {
  check_input("x_endo", x_endo, cfg_.lookback, cfg_.d_endo);
  if (cfg_.d_exo > 0) {
    check_input("x_exo", x_exo, cfg_.lookback, cfg_.d_exo);
  } else if (x_exo.defined() && x_exo.size() > 0) {
    throw ShapeError("x_exo: model takes no exogenous inputs, got " +
                     shape_str(x_exo.shape()));
  }
  ++forward_count_;

  Tensor z = embed_endogenous(x_endo);
  Tensor exo_tokens;
  if (cfg_.d_exo > 0) exo_tokens = embed_exogenous(x_exo);

  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    z = temporal_self_attention(z, l);
    z = cross_attention(z, exo_tokens, l);
    if (cfg_.freq_branch_on) {
      Tensor z_freq = frequency_branch(z, l);
      z = fuse(z, z_freq, l);
    }
    z = ffn_block(z, l);
  }

  Tensor flat = reshape(z, {1, cfg_.token_count() * cfg_.hidden});
  Tensor y = add(matmul(flat, head_w_), head_b_);
  return reshape(y, {cfg_.d_endo});
}

// --- checkpoint --------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'F', 'T', 'X', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

void save_checkpoint(const FTimeXerModel& model, const std::string& path) {
  nlohmann::json meta;
  meta["model"] = to_json(model.config());
  meta["seed"] = model.init_seed();
  nlohmann::json plist = nlohmann::json::array();
  for (const auto& [name, t] : model.parameters()) {
    plist.push_back({{"name", name}, {"size", t.size()}});
  }
  meta["params"] = plist;
  const std::string header = meta.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("save_checkpoint: cannot open '" + path + "'");
  out.write(kMagic, sizeof(kMagic));
  const std::uint32_t version = kVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  const std::uint64_t hlen = header.size();
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(header.data(), static_cast<std::streamsize>(hlen));
  for (const auto& [name, t] : model.parameters()) {
    out.write(reinterpret_cast<const char*>(t.data().data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!out) throw DataError("save_checkpoint: write failed for '" + path + "'");
}

FTimeXerModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("load_checkpoint: cannot open '" + path + "'");
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw DataError("load_checkpoint: '" + path + "' is not a checkpoint");
  }
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (!in || version != kVersion) {
    throw DataError("load_checkpoint: unsupported format version " +
                    std::to_string(version));
  }
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  if (!in || hlen > (1ull << 24)) {
    throw DataError("load_checkpoint: corrupt header length");
  }
  std::string header(hlen, '\0');
  in.read(header.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw DataError("load_checkpoint: truncated header");

  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("load_checkpoint: bad header JSON: ") +
                    e.what());
  }
  ModelConfig cfg = model_config_from_json(meta.at("model"));
  const std::uint64_t seed = meta.at("seed").get<std::uint64_t>();

  FTimeXerModel model(cfg, seed);
  const auto& plist = meta.at("params");
  const auto& params = model.parameters();
  if (plist.size() != params.size()) {
    throw DataError("load_checkpoint: parameter count mismatch");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string name = plist[i].at("name").get<std::string>();
    const std::size_t size = plist[i].at("size").get<std::size_t>();
    if (name != params[i].first || size != params[i].second.size()) {
      throw DataError("load_checkpoint: parameter layout mismatch at '" +
                      name + "'");
    }
    Tensor t = params[i].second;
    in.read(reinterpret_cast<char*>(t.data().data()),
            static_cast<std::streamsize>(size * sizeof(double)));
    if (!in) throw DataError("load_checkpoint: truncated data at '" + name +
                             "'");
  }
  return model;
}

}  // namespace ftx
