#pragma once

// Run configuration: every tunable with its default, loaded from JSON with
// namespaced keys (nested objects or dotted names). Unknown keys are errors.

#include <cstdint>
#include <string>

#include <json.hpp>

#include "relcap/data.hpp"
#include "relcap/model_config.hpp"

namespace relcap {

struct TrainConfig {
  int epochs = 20;
  int batch_size = 32;
  double lr = 0.002;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 10.0;
  double divergence_threshold = 1e6;
  int threads = 1;
  int limit = 0;  // use only the first `limit` training examples when > 0
};

struct Phase2Config {
  int epochs = 10;
  double lr_scale = 0.25;
  int captions = 5;
  int max_len = 12;
  double temperature = 1.0;
  bool vqa_only = false;
};

struct RunConfig {
  std::uint64_t seed = 0;
  data::DataConfig data;
  int min_word_count = 5;
  int min_answer_count = 1;
  int max_question_len = 14;
  ModelConfig model;  // vocab_size / num_answers / feature_dim filled from the data
  TrainConfig train;
  double xi = 0.0;
  Phase2Config phase2;
};

// Applies the keys of `j` on top of `base`. Accepts nested objects
// ({"train": {"lr": 0.001}}) and dotted keys ({"train.lr": 0.001}).
RunConfig apply_config_json(RunConfig base, const nlohmann::json& j);
// Every key with its current value, nested by namespace.
nlohmann::json config_to_json(const RunConfig& cfg);
// Range checks; throws ConfigError naming the key.
void validate_config(const RunConfig& cfg);

nlohmann::json model_config_to_json(const ModelConfig& m);
ModelConfig model_config_from_json(const nlohmann::json& j);

std::string gate_mode_name(GateMode g);
std::string pred_mode_name(PredMode p);

}  // namespace relcap
