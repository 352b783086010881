#pragma once

namespace relcap {

enum class GateMode { kVector, kScalar, kFixed };
enum class PredMode { kLogit, kLogProb };

struct ModelConfig {
  // Set from the data.
  int vocab_size = 0;
  int num_answers = 0;
  int feature_dim = 32;

  int question_embed = 32;
  int question_hidden = 64;  // also the joint hidden size (q, V^q rows, c, h)
  int word_dim = 64;         // word embedding == Word GRU hidden
  int caption_hidden = 64;   // Caption GRU
  int attention_hidden = 64; // question-visual attention scorer
  int decoder_embed = 32;
  int decoder_hidden = 64;
  int decoder_attention = 64;
  double lrelu_slope = 0.01;

  bool use_caa = true;
  bool use_captions = true;  // false: c is the zero vector and no caption loss
  GateMode gate = GateMode::kVector;
  PredMode pred = PredMode::kLogit;
  bool stop_gradient_vq = false;  // captioner sees stop_gradient(V^q)
};

}  // namespace relcap
