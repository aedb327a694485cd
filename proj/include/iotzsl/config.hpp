#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "iotzsl/contrastive.hpp"
#include "iotzsl/dataset.hpp"
#include "iotzsl/gan.hpp"
#include "iotzsl/iot_branch.hpp"
#include "iotzsl/llm_client.hpp"
#include "iotzsl/loaders.hpp"

namespace iotzsl {

// Resolved run configuration: defaults, then the config file, then dotted
// CLI overrides. Unknown keys anywhere are a hard error.
class RunConfig {
 public:
  static nlohmann::json defaults();
  static RunConfig load(const std::string& path, const std::vector<std::string>& overrides = {});
  static RunConfig from_json(nlohmann::json j);

  const nlohmann::json& raw() const { return raw_; }

  uint64_t seed() const;
  std::string out_root() const;
  int workers() const;
  // runs/<config-hash>_s<seed>
  std::string run_dir() const;
  uint64_t config_hash() const;

  DatasetSpec dataset_spec() const;
  SyntheticConfig synthetic_config() const;
  int n_unseen() const;
  int n_folds() const;
  bool subject_wise() const;

  std::shared_ptr<TextEncoder> make_text_encoder() const;
  std::string prompt_file() const;
  int soft_prompt_len() const;
  LlmConfig llm_config() const;

  IotEncoderConfig iot_encoder_config() const;

  TrainConfig train_config() const;
  TrainConfig finetune_config() const;
  GanConfig gan_config() const;

  double detector_k_fraction() const;
  double detector_retention() const;

  int specialist_epochs() const;
  double specialist_lr() const;

  double knn_noise_std() const;
  int knn_epochs() const;
  double mcm_temperature() const;

  // Writes the resolved snapshot into the run directory.
  void write_snapshot() const;

 private:
  nlohmann::json raw_;
};

// Merge patch semantics: `over` wins; objects merge recursively, everything
// else replaces.
nlohmann::json deep_merge(nlohmann::json base, const nlohmann::json& over);

// All key paths in `candidate` must exist in `reference`; returns the list of
// unknown dotted paths.
std::vector<std::string> unknown_keys(const nlohmann::json& reference,
                                      const nlohmann::json& candidate);

// "a.b.c=value" with JSON-parsed values (falls back to string).
void apply_dotted_override(nlohmann::json& j, const std::string& assignment);

}  // namespace iotzsl
