#pragma once

// Question GRU, question-guided visual attention (V^q) and the word-gated
// two-level caption encoder.

#include <span>
#include <vector>

#include "relcap/autodiff.hpp"
#include "relcap/layers.hpp"
#include "relcap/model_config.hpp"

namespace relcap::enc {

using ad::DTensor;

struct EncoderParams {
  nn::EmbeddingTable question_embed;
  nn::GruCell question_gru;

  nn::FcLayer visual;       // f(v_k)
  nn::FcLayer visual_query; // f(q) inside the attention scorer
  nn::FcLayer attn_hidden;  // LReLU-affine over [f(v_k); f(q)]
  int attn_out = -1;        // w, attention_hidden x 1

  nn::EmbeddingTable word_embed;  // W_e
  nn::GruCell word_gru;
  nn::FcLayer gate_visual;    // f(v̄^q)
  nn::FcLayer gate_question;  // f(q)
  nn::GruCell caption_gru;
  nn::FcLayer caption_out;    // c_i = f(h²_{T_i})

  static EncoderParams create(ParamStore& store, const ModelConfig& cfg, std::mt19937_64& rng);
};

struct QuestionAttended {
  DTensor fv;     // n x H, f(v_k)
  DTensor alpha;  // 1 x n
  DTensor vq;     // n x H
  DTensor vbar;   // 1 x H
};

struct CaptionEncoding {
  std::vector<std::vector<DTensor>> gates;  // [caption][word] 1 x E (1 x 1 for the scalar gate)
  std::vector<DTensor> caption_states;      // per caption, final h²
  std::vector<DTensor> vectors;             // c_i
  DTensor pooled;                           // c
};

// `tokens` holds the question word indices without padding. Empty -> error.
DTensor embed_question(ad::Record& rec, const EncoderParams& p, const ModelConfig& cfg, std::span<const int> tokens);

// `v` holds only the valid object rows (n x D).
QuestionAttended attend_question_visual(ad::Record& rec, const EncoderParams& p, const ModelConfig& cfg, DTensor v,
                                        DTensor q);

// Each caption is its word indices without <start>/<end>.
CaptionEncoding embed_captions(ad::Record& rec, const EncoderParams& p, const ModelConfig& cfg,
                               const std::vector<std::vector<int>>& captions, DTensor vbar_q, DTensor q);

}  // namespace relcap::enc
