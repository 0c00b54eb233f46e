#pragma once

#include "lart/eval.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace lart::cli {

// Flat key/value settings. Files hold one `key = value` per line; `#` starts
// a comment. Keys are dotted by section (gen.fps, finetune.base_lr, ...).
using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(std::string_view text, const std::string& origin);
KeyValues read_config_file(const std::filesystem::path& path);  // .json manifests too
KeyValues parse_overrides(const std::vector<std::string>& assignments);

struct DatasetSpec {
  GeneratorConfig generator;
  int train_clips = 64;
  int eval_clips = 32;
};

struct AblationSpec {
  std::string suite = "pose";  // pose | appearance
  int max_n = 5;
  int train_clips = 64;
  int eval_clips = 32;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  int window = 24;
  int pose_embed = 32;
  int pretrain_epochs = 0;  // 0 skips pretraining
  std::string baseline;
};

// Every setting the commands understand, with library defaults.
struct Settings {
  std::uint64_t seed = 0;
  DatasetSpec data;
  ModelConfig model = ModelConfig::tiny();
  TokenConfig tokens = TokenConfig::pose_only(64);
  TrainConfig pretrain = TrainConfig::pretrain_defaults();
  TrainConfig finetune = TrainConfig::finetune_defaults();
  InferenceConfig inference;
  AblationSpec ablate;

  Settings();
  // Applies `kv` on top of the current values. Unknown keys and malformed
  // values raise ConfigError naming the key.
  void apply(const KeyValues& kv);
  // Canonical view of every setting (sorted, full precision).
  KeyValues resolved() const;
  void validate() const;
  AblationConfig ablation_config() const;
};

std::vector<std::string> known_keys();

}  // namespace lart::cli
