#include "relcap/vqa_head.hpp"

#include "relcap/error.hpp"

namespace relcap::vqa {

HeadParams HeadParams::create(ParamStore& store, const ModelConfig& cfg, std::mt19937_64& rng) {
  const int H = cfg.question_hidden;
  if (cfg.num_answers <= 0) throw ConfigError("model: answer candidate count must be positive");
  HeadParams p;
  p.caa_caption = nn::FcLayer::create(store, "vqa.caa_caption", H, H, rng);
  p.caa_object = nn::FcLayer::create(store, "vqa.caa_object", H, H, rng);
  p.caa_score = nn::FcLayer::create(store, "vqa.caa_score", H, 1, rng);
  p.joint_visual = nn::FcLayer::create(store, "vqa.joint_visual", H, H, rng);
  p.joint_caption = nn::FcLayer::create(store, "vqa.joint_caption", H, H, rng);
  p.classifier = nn::Affine::create(store, "vqa.classifier", H, cfg.num_answers, rng);
  return p;
}

AdjustedAttention adjust_attention(ad::Record& rec, const HeadParams& p, const ModelConfig& cfg, DTensor vq,
                                   DTensor c, bool use_caa) {
  AdjustedAttention out;
  if (!use_caa) {
    out.vbar = ad::sum(vq, ad::Axis::kRows);
    return out;
  }
  if (!c.valid()) throw Error("adjust_attention: caption embedding required when CAA is on");
  const DTensor fc = nn::fc(rec, p.caa_caption, c, cfg.lrelu_slope);
  const DTensor fv = nn::fc(rec, p.caa_object, vq, cfg.lrelu_slope);
  const DTensor scores = nn::fc(rec, p.caa_score, ad::mul(fv, fc), cfg.lrelu_slope);  // n x 1
  out.scores = ad::transpose(scores);
  out.alpha = ad::softmax(out.scores);
  out.vbar = ad::matmul(out.alpha, vq);
  return out;
}

AnswerPrediction predict(ad::Record& rec, const HeadParams& p, const ModelConfig& cfg, DTensor q, DTensor vbar_qc,
                         DTensor c) {
  AnswerPrediction out;
  const DTensor joint =
      ad::add(nn::fc(rec, p.joint_visual, vbar_qc, cfg.lrelu_slope), nn::fc(rec, p.joint_caption, c, cfg.lrelu_slope));
  out.h = ad::mul(q, joint);
  out.logits = nn::affine(rec, p.classifier, out.h);
  out.probs = ad::sigmoid(out.logits);
  out.predicted = argmax(out.logits.values());
  return out;
}

DTensor vqa_loss(ad::Record& rec, DTensor logits, std::span<const double> scores) {
  if (logits.rows() != 1 || static_cast<std::size_t>(logits.cols()) != scores.size()) {
    throw ShapeError("vqa_loss: logits " + logits.shape().str() + " vs " + std::to_string(scores.size()) +
                     " soft scores");
  }
  const DTensor s = rec.constant(logits.shape(), {scores.begin(), scores.end()});
  return ad::sum(ad::sub(ad::softplus(logits), ad::mul(s, logits)));
}

int argmax(std::span<const double> values) {
  if (values.empty()) throw Error("argmax: empty input");
  int best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

double soft_accuracy(const std::string& predicted_answer, const std::map<std::string, double>& answer_scores) {
  const auto it = answer_scores.find(predicted_answer);
  return it == answer_scores.end() ? 0.0 : it->second;
}

}  // namespace relcap::vqa
