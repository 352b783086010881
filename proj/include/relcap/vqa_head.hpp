#pragma once

// Caption-adjusted attention over V^q, the joint representation and answer
// scores, the soft-target binary cross-entropy loss and soft accuracy.

#include <map>
#include <span>
#include <string>
#include <vector>

#include "relcap/autodiff.hpp"
#include "relcap/layers.hpp"
#include "relcap/model_config.hpp"

namespace relcap::vqa {

using ad::DTensor;

struct HeadParams {
  nn::FcLayer caa_caption;  // f(c)
  nn::FcLayer caa_object;   // f(v^q_k)
  nn::FcLayer caa_score;    // outer f, H -> 1
  nn::FcLayer joint_visual; // f(v̄^qc)
  nn::FcLayer joint_caption;// f(c)
  nn::Affine classifier;

  static HeadParams create(ParamStore& store, const ModelConfig& cfg, std::mt19937_64& rng);
};

struct AdjustedAttention {
  DTensor scores;  // 1 x n (invalid when CAA is off)
  DTensor alpha;   // 1 x n (invalid when CAA is off)
  DTensor vbar;    // v̄^qc, 1 x H
};

struct AnswerPrediction {
  DTensor h;
  DTensor logits;  // 1 x N
  DTensor probs;   // sigmoid(logits)
  int predicted = -1;
};

AdjustedAttention adjust_attention(ad::Record& rec, const HeadParams& p, const ModelConfig& cfg, DTensor vq,
                                   DTensor c, bool use_caa);

AnswerPrediction predict(ad::Record& rec, const HeadParams& p, const ModelConfig& cfg, DTensor q, DTensor vbar_qc,
                         DTensor c);

// Sum over candidates of softplus(z) - s z, i.e. binary cross-entropy of
// sigmoid(z) against soft targets s.
DTensor vqa_loss(ad::Record& rec, DTensor logits, std::span<const double> scores);

// Index of the largest entry; ties go to the lowest index.
int argmax(std::span<const double> values);

// Soft score of the predicted answer; 0 when it has none.
double soft_accuracy(const std::string& predicted_answer, const std::map<std::string, double>& answer_scores);

}  // namespace relcap::vqa
