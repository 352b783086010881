#pragma once

// Two-layer attention LSTM caption decoder over V^q (attention LSTM feeding
// a language LSTM): teacher-forced likelihood and greedy / sampled decoding.

#include <cstdint>
#include <span>
#include <vector>

#include "relcap/autodiff.hpp"
#include "relcap/layers.hpp"
#include "relcap/model_config.hpp"

namespace relcap::cap {

using ad::DTensor;

struct DecoderParams {
  nn::EmbeddingTable embed;
  nn::LstmCell attention_lstm;  // input [word; v̄^q; h_lang]
  int att_visual = -1;          // H x A
  int att_hidden = -1;          // Hd x A
  int att_out = -1;             // A x 1
  nn::LstmCell language_lstm;   // input [attended; h_att]
  nn::Affine output;

  static DecoderParams create(ParamStore& store, const ModelConfig& cfg, std::mt19937_64& rng);
};

struct CaptionLikelihood {
  DTensor nll;                          // 1 x 1
  std::vector<double> step_log_probs;   // log p of each gold next token
  std::vector<std::vector<double>> attention;  // per step, over the rows of V^q
};

// `tokens` is <start> w_1 .. w_n <end> (the trailing <end> may be absent for
// truncated sequences); at least two entries.
CaptionLikelihood caption_nll(ad::Record& rec, const DecoderParams& p, const ModelConfig& cfg,
                              std::span<const int> tokens, DTensor vq, DTensor vbar_q);

enum class DecodeMode { kGreedy, kSample };

struct GeneratedCaption {
  std::vector<int> tokens;  // generated words, ending in <end> unless truncated
  std::vector<double> step_log_probs;
  double log_prob = 0.0;
};

struct GenerateOptions {
  DecodeMode mode = DecodeMode::kGreedy;
  int count = 1;
  int max_len = 12;  // tokens emitted, <end> included
  double temperature = 1.0;
  std::uint64_t seed = 0;
};

// Log-probabilities are always those of the unscaled model distribution, so
// caption_nll on <start> + tokens reproduces -log_prob.
std::vector<GeneratedCaption> generate(const ParamStore& store, const DecoderParams& p, const ModelConfig& cfg,
                                       std::span<const double> vq_values, int rows, const GenerateOptions& opts);

}  // namespace relcap::cap
