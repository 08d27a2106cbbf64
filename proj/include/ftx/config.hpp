#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"

namespace ftx {

enum class ExoAgg { kMean, kAttentionPool };
enum class Fusion { kConcatMlp, kSigmoidGate };
enum class LossKind { kMse, kMae };
enum class MaskGranularity { kEntry, kVariable, kTimestep };

std::string to_string(ExoAgg v);
std::string to_string(Fusion v);
std::string to_string(LossKind v);
std::string to_string(MaskGranularity v);

ExoAgg exo_agg_from_string(const std::string& s);
Fusion fusion_from_string(const std::string& s);
LossKind loss_kind_from_string(const std::string& s);
MaskGranularity mask_granularity_from_string(const std::string& s);

// Architecture plus the robustness-scheme switches swept by ablations.
struct ModelConfig {
  std::size_t lookback = 12;   // input steps per window
  std::size_t d_endo = 1;      // target feature count
  std::size_t d_exo = 0;       // covariate feature count
  std::size_t hidden = 32;     // token width
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t patch_len = 4;   // steps per patch token
  double lambda = 0.1;         // consistency penalty weight
  double mask_p = 0.3;         // covariate drop probability during training
  bool freq_branch_on = true;
  bool robust_training_on = true;
  // With robust training on: when false, the prediction loss is taken on the
  // masked forward alone (augmentation mode); when true, a clean and a masked
  // forward are combined through the consistency penalty.
  bool consistency_on = true;
  ExoAgg exo_agg = ExoAgg::kMean;
  Fusion fusion = Fusion::kConcatMlp;

  std::size_t patch_count() const { return lookback / patch_len; }
  std::size_t token_count() const { return 1 + patch_count(); }

  void validate() const;  // throws ConfigError naming the offending field
};

struct TrainingConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 1.0;  // global gradient-norm ceiling
  std::size_t epochs = 50;
  std::size_t batch_size = 64;
  std::size_t patience = 10;   // early-stopping epochs without improvement
  double val_frac = 0.1;       // tail share of the training split held out
  LossKind loss = LossKind::kMse;
  MaskGranularity mask_granularity = MaskGranularity::kEntry;
  std::uint64_t seed = 1;

  void validate() const;
};

nlohmann::json to_json(const ModelConfig& c);
nlohmann::json to_json(const TrainingConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);
TrainingConfig training_config_from_json(const nlohmann::json& j);

// FNV-1a over the canonical serialized form; stable run fingerprint.
std::uint64_t fnv1a(const std::string& s);
std::uint64_t config_fingerprint(const nlohmann::json& j);

}  // namespace ftx
