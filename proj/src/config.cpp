#include "ftx/config.hpp"

#include <set>

#include "ftx/errors.hpp"

namespace ftx {

std::string to_string(ExoAgg v) {
  return v == ExoAgg::kMean ? "mean" : "attention-pool";
}

std::string to_string(Fusion v) {
  return v == Fusion::kConcatMlp ? "concat-mlp" : "sigmoid-gate";
}

std::string to_string(LossKind v) {
  return v == LossKind::kMse ? "mse" : "mae";
}

std::string to_string(MaskGranularity v) {
  switch (v) {
    case MaskGranularity::kEntry: return "entry";
    case MaskGranularity::kVariable: return "variable";
    default: return "timestep";
  }
}

ExoAgg exo_agg_from_string(const std::string& s) {
  if (s == "mean") return ExoAgg::kMean;
  if (s == "attention-pool") return ExoAgg::kAttentionPool;
  throw ConfigError("exo_agg: expected 'mean' or 'attention-pool', got '" + s +
                    "'");
}

Fusion fusion_from_string(const std::string& s) {
  if (s == "concat-mlp") return Fusion::kConcatMlp;
  if (s == "sigmoid-gate") return Fusion::kSigmoidGate;
  throw ConfigError("fusion: expected 'concat-mlp' or 'sigmoid-gate', got '" +
                    s + "'");
}

LossKind loss_kind_from_string(const std::string& s) {
  if (s == "mse") return LossKind::kMse;
  if (s == "mae") return LossKind::kMae;
  throw ConfigError("loss: expected 'mse' or 'mae', got '" + s + "'");
}

MaskGranularity mask_granularity_from_string(const std::string& s) {
  if (s == "entry") return MaskGranularity::kEntry;
  if (s == "variable") return MaskGranularity::kVariable;
  if (s == "timestep") return MaskGranularity::kTimestep;
  throw ConfigError(
      "mask_granularity: expected 'entry', 'variable' or 'timestep', got '" +
      s + "'");
}

void ModelConfig::validate() const {
  if (lookback == 0) throw ConfigError("lookback: must be positive");
  if (patch_len == 0) throw ConfigError("patch_len: must be positive");
  if (lookback % patch_len != 0) {
    throw ConfigError("patch_len: " + std::to_string(patch_len) +
                      " does not divide lookback " + std::to_string(lookback));
  }
  if (d_endo == 0) throw ConfigError("d_endo: must be at least 1");
  if (hidden == 0) throw ConfigError("hidden: must be positive");
  if (heads == 0) throw ConfigError("heads: must be positive");
  if (hidden % heads != 0) {
    throw ConfigError("heads: " + std::to_string(heads) +
                      " does not divide hidden " + std::to_string(hidden));
  }
  if (layers == 0) throw ConfigError("layers: must be positive");
  if (mask_p < 0.0 || mask_p > 1.0) {
    throw ConfigError("mask_p: " + std::to_string(mask_p) +
                      " outside [0, 1]");
  }
  if (lambda < 0.0) {
    throw ConfigError("lambda: " + std::to_string(lambda) + " is negative");
  }
}

void TrainingConfig::validate() const {
  if (lr <= 0.0) throw ConfigError("lr: must be positive");
  if (beta1 < 0.0 || beta1 >= 1.0) throw ConfigError("beta1: outside [0, 1)");
  if (beta2 < 0.0 || beta2 >= 1.0) throw ConfigError("beta2: outside [0, 1)");
  if (eps <= 0.0) throw ConfigError("eps: must be positive");
  if (clip_norm <= 0.0) throw ConfigError("clip_norm: must be positive");
  if (epochs == 0) throw ConfigError("epochs: must be at least 1");
  if (batch_size == 0) throw ConfigError("batch_size: must be at least 1");
  if (val_frac < 0.0 || val_frac >= 0.5) {
    throw ConfigError("val_frac: " + std::to_string(val_frac) +
                      " outside [0, 0.5)");
  }
}

namespace {

// Field accessors with type checks that name the field on failure.

void check_known_keys(const nlohmann::json& j, const std::set<std::string>& ok,
                      const char* where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!ok.count(it.key())) {
      throw ConfigError(std::string(where) + ": unknown field '" + it.key() +
                        "'");
    }
  }
}

template <typename T>
void read_uint(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if (!v.is_number_unsigned() && !(v.is_number_integer() &&
                                   v.get<long long>() >= 0)) {
    throw ConfigError(std::string(key) + ": expected a non-negative integer");
  }
  out = v.get<T>();
}

void read_double(const nlohmann::json& j, const char* key, double& out) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if (!v.is_number()) {
    throw ConfigError(std::string(key) + ": expected a number");
  }
  out = v.get<double>();
}

void read_bool(const nlohmann::json& j, const char* key, bool& out) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if (!v.is_boolean()) {
    throw ConfigError(std::string(key) + ": expected true or false");
  }
  out = v.get<bool>();
}

std::string read_string(const nlohmann::json& j, const char* key,
                        const std::string& fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_string()) {
    throw ConfigError(std::string(key) + ": expected a string");
  }
  return v.get<std::string>();
}

}  // namespace

nlohmann::json to_json(const ModelConfig& c) {
  return nlohmann::json{{"lookback", c.lookback},
                        {"d_endo", c.d_endo},
                        {"d_exo", c.d_exo},
                        {"hidden", c.hidden},
                        {"layers", c.layers},
                        {"heads", c.heads},
                        {"patch_len", c.patch_len},
                        {"lambda", c.lambda},
                        {"mask_p", c.mask_p},
                        {"freq_branch_on", c.freq_branch_on},
                        {"robust_training_on", c.robust_training_on},
                        {"consistency_on", c.consistency_on},
                        {"exo_agg", to_string(c.exo_agg)},
                        {"fusion", to_string(c.fusion)}};
}

nlohmann::json to_json(const TrainingConfig& c) {
  return nlohmann::json{{"lr", c.lr},
                        {"beta1", c.beta1},
                        {"beta2", c.beta2},
                        {"eps", c.eps},
                        {"clip_norm", c.clip_norm},
                        {"epochs", c.epochs},
                        {"batch_size", c.batch_size},
                        {"patience", c.patience},
                        {"val_frac", c.val_frac},
                        {"loss", to_string(c.loss)},
                        {"mask_granularity", to_string(c.mask_granularity)},
                        {"seed", c.seed}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("model: expected a JSON object");
  check_known_keys(j,
                   {"lookback", "d_endo", "d_exo", "hidden", "layers", "heads",
                    "patch_len", "lambda", "mask_p", "freq_branch_on",
                    "robust_training_on", "consistency_on", "exo_agg",
                    "fusion"},
                   "model");
  ModelConfig c;
  read_uint(j, "lookback", c.lookback);
  read_uint(j, "d_endo", c.d_endo);
  read_uint(j, "d_exo", c.d_exo);
  read_uint(j, "hidden", c.hidden);
  read_uint(j, "layers", c.layers);
  read_uint(j, "heads", c.heads);
  read_uint(j, "patch_len", c.patch_len);
  read_double(j, "lambda", c.lambda);
  read_double(j, "mask_p", c.mask_p);
  read_bool(j, "freq_branch_on", c.freq_branch_on);
  read_bool(j, "robust_training_on", c.robust_training_on);
  read_bool(j, "consistency_on", c.consistency_on);
  c.exo_agg = exo_agg_from_string(
      read_string(j, "exo_agg", to_string(c.exo_agg)));
  c.fusion = fusion_from_string(read_string(j, "fusion", to_string(c.fusion)));
  return c;
}

TrainingConfig training_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("training: expected a JSON object");
  check_known_keys(j,
                   {"lr", "beta1", "beta2", "eps", "clip_norm", "epochs",
                    "batch_size", "patience", "val_frac", "loss",
                    "mask_granularity", "seed"},
                   "training");
  TrainingConfig c;
  read_double(j, "lr", c.lr);
  read_double(j, "beta1", c.beta1);
  read_double(j, "beta2", c.beta2);
  read_double(j, "eps", c.eps);
  read_double(j, "clip_norm", c.clip_norm);
  read_uint(j, "epochs", c.epochs);
  read_uint(j, "batch_size", c.batch_size);
  read_uint(j, "patience", c.patience);
  read_double(j, "val_frac", c.val_frac);
  c.loss = loss_kind_from_string(read_string(j, "loss", to_string(c.loss)));
  c.mask_granularity = mask_granularity_from_string(
      read_string(j, "mask_granularity", to_string(c.mask_granularity)));
  read_uint(j, "seed", c.seed);
  return c;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t config_fingerprint(const nlohmann::json& j) {
  return fnv1a(j.dump());
}

}  // namespace ftx
