#pragma once

// Full joint model: parameters of every module and the per-example forward
// pass that produces a ForwardTrace.

#include <cstdint>
#include <vector>

#include "relcap/captioner.hpp"
#include "relcap/data.hpp"
#include "relcap/encoders.hpp"
#include "relcap/params.hpp"
#include "relcap/vqa_head.hpp"

namespace relcap {

struct Model {
  ModelConfig cfg;
  ParamStore store;
  enc::EncoderParams enc;
  vqa::HeadParams head;
  cap::DecoderParams dec;

  // Parameters are drawn in registration order from one seeded stream.
  static Model create(const ModelConfig& cfg, std::uint64_t seed);
};

// Model-ready view of one example. Captions can be swapped (phase 2) by
// replacing caption_tokens.
struct ExampleInput {
  std::int64_t id = 0;
  int cols = 0;
  std::vector<double> features;  // valid rows only, row-major
  std::vector<int> valid_rows;   // original row index of each kept row
  std::vector<int> question;     // unpadded
  std::vector<std::vector<int>> caption_tokens;  // <start> ... <end>
  std::vector<double> answer_scores;             // one per candidate
  int relevant_caption = -1;
  int question_type = 0;

  [[nodiscard]] int rows() const { return static_cast<int>(valid_rows.size()); }
};

ExampleInput make_input(const data::ExampleRecord& record, const data::EncodedExample& encoded, std::int64_t id);

// Words of a decoder token sequence without <start> and <end>.
std::vector<int> caption_words(const std::vector<int>& tokens);

struct ForwardTrace {
  ad::DTensor v;
  ad::DTensor q;
  enc::QuestionAttended qa;
  ad::DTensor vq_caption;  // what the captioner consumes (V^q or its stop-gradient)
  enc::CaptionEncoding captions;
  ad::DTensor c;
  vqa::AdjustedAttention adjusted;
  vqa::AnswerPrediction prediction;
  ad::DTensor s_pred;  // logit (or log ŝ) of the predicted answer
  ad::DTensor loss_vqa;
  std::vector<cap::CaptionLikelihood> caption_losses;
};

struct ForwardOptions {
  bool caption_losses = true;  // teacher-forced nll of every caption
};

ForwardTrace forward(ad::Record& rec, const Model& model, const ExampleInput& in, const ForwardOptions& opts = {});

// Everything downstream of V^q, reading trace.q, trace.qa.vq and
// trace.qa.vbar; lets callers substitute their own V^q node.
void forward_from_vq(ad::Record& rec, const Model& model, const ExampleInput& in, ForwardTrace& trace,
                     const ForwardOptions& opts = {});

}  // namespace relcap
