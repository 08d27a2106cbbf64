#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ftx/config.hpp"
#include "ftx/tensor.hpp"

namespace ftx {

// Patch-attention forecaster with exogenous variable tokens, an optional
// per-layer frequency-filtering branch, and a linear head over the flattened
// final token matrix. One instance owns one parameter set; all stage methods
// run on the calling thread's tape.
class FTimeXerModel {
 public:
  FTimeXerModel(ModelConfig cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  std::uint64_t init_seed() const { return seed_; }

  // Full pipeline; returns the next-step prediction, shape (d_endo).
  Tensor forward(const Tensor& x_endo, const Tensor& x_exo);

  // Pipeline stages, exposed for direct testing.
  Tensor embed_endogenous(const Tensor& x_endo);
  // Returns an undefined tensor when d_exo == 0.
  Tensor embed_exogenous(const Tensor& x_exo);
  Tensor temporal_self_attention(const Tensor& z, std::size_t layer);
  Tensor cross_attention(const Tensor& z, const Tensor& exo_tokens,
                         std::size_t layer);
  Tensor frequency_branch(const Tensor& z, std::size_t layer);
  Tensor fuse(const Tensor& z_time, const Tensor& z_freq, std::size_t layer);
  Tensor ffn_block(const Tensor& z, std::size_t layer);

  // Name/tensor pairs in fixed construction order.
  const std::vector<std::pair<std::string, Tensor>>& parameters() const {
    return params_;
  }
  Tensor parameter(const std::string& name) const;

  void zero_grad();
  std::size_t forward_count() const { return forward_count_; }

  // When frozen, the frequency branch reuses the phase spectra captured on
  // the most recent unfrozen forward instead of recomputing them. Backward
  // treats the phase as constant, so finite-difference oracles must
  // difference this frozen function to probe the same map the tape
  // differentiates.
  void set_phase_frozen(bool frozen);
  bool phase_frozen() const { return phase_frozen_; }

 private:
  struct LayerParams {
    Tensor attn_wq, attn_wk, attn_wv, attn_wo;
    Tensor cross_wq, cross_wk, cross_wv, cross_wo;  // only when d_exo > 0
    Tensor freq_pre, freq_filter_w, freq_filter_b, freq_post;  // freq branch
    Tensor fuse_w1, fuse_b1, fuse_w2, fuse_b2;  // concat-mlp fusion
    Tensor gate_w, gate_b;                      // sigmoid-gate fusion
    Tensor ln_gain, ln_bias;
    Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;
  };

  Tensor multi_head_attention(const Tensor& q_src, const Tensor& kv_src,
                              const Tensor& wq, const Tensor& wk,
                              const Tensor& wv, const Tensor& wo) const;

  ModelConfig cfg_;
  std::uint64_t seed_;

  Tensor patch_w_, patch_b_, global_token_;
  Tensor exo_theta_, exo_b_, exo_score_;
  std::vector<LayerParams> layers_;
  Tensor head_w_, head_b_;

  // Constant DFT bases along the patch-token axis (row k: frequency k).
  Tensor dft_cos_, dft_msin_;

  std::vector<std::pair<std::string, Tensor>> params_;
  std::size_t forward_count_ = 0;
  bool phase_frozen_ = false;
  // Per layer: P x d phases (row-major) captured on the last unfrozen pass.
  std::vector<std::vector<double>> cached_phase_;
};

// Checkpoint container: magic, format version, JSON header (config, seed,
// parameter manifest), then raw little-endian 64-bit parameter data.
// Round-trips bit-exactly.
void save_checkpoint(const FTimeXerModel& model, const std::string& path);
FTimeXerModel load_checkpoint(const std::string& path);

}  // namespace ftx
