#include "relcap/model.hpp"

#include <random>

#include "relcap/error.hpp"

namespace relcap {

Model Model::create(const ModelConfig& cfg, std::uint64_t seed) {
  if (cfg.vocab_size <= data::Vocab::kNumSpecial) throw ConfigError("model: vocabulary is empty");
  Model m;
  m.cfg = cfg;
  std::mt19937_64 rng(seed);
  m.enc = enc::EncoderParams::create(m.store, cfg, rng);
  m.head = vqa::HeadParams::create(m.store, cfg, rng);
  m.dec = cap::DecoderParams::create(m.store, cfg, rng);
  return m;
}

ExampleInput make_input(const data::ExampleRecord& record, const data::EncodedExample& encoded, std::int64_t id) {
  ExampleInput in;
  in.id = id;
  in.cols = record.cols;
  for (int k = 0; k < record.rows; ++k) {
    if (!record.valid[static_cast<std::size_t>(k)]) continue;
    in.valid_rows.push_back(k);
    const auto* row = record.features.data() + static_cast<std::size_t>(k) * record.cols;
    in.features.insert(in.features.end(), row, row + record.cols);
  }
  in.question.assign(encoded.question.begin(), encoded.question.begin() + encoded.question_length);
  in.caption_tokens = encoded.captions;
  in.answer_scores = encoded.answer_scores;
  in.relevant_caption = record.relevant_caption_index;
  in.question_type = static_cast<int>(record.question_type);
  return in;
}

std::vector<int> caption_words(const std::vector<int>& tokens) {
  std::vector<int> words;
  for (int t : tokens) {
    if (t == data::Vocab::kStart || t == data::Vocab::kEnd || t == data::Vocab::kPad) continue;
    words.push_back(t);
  }
  return words;
}

ForwardTrace forward(ad::Record& rec, const Model& model, const ExampleInput& in, const ForwardOptions& opts) {
  if (in.rows() == 0) throw DataError("example " + std::to_string(in.id) + ": every object is masked");
  ForwardTrace t;
  t.v = rec.constant({in.rows(), in.cols}, in.features);
  t.q = enc::embed_question(rec, model.enc, model.cfg, in.question);
  t.qa = enc::attend_question_visual(rec, model.enc, model.cfg, t.v, t.q);
  forward_from_vq(rec, model, in, t, opts);
  return t;
}

void forward_from_vq(ad::Record& rec, const Model& model, const ExampleInput& in, ForwardTrace& t,
                     const ForwardOptions& opts) {
  const auto& cfg = model.cfg;
  if (cfg.use_captions) {
    std::vector<std::vector<int>> words;
    words.reserve(in.caption_tokens.size());
    for (const auto& c : in.caption_tokens) words.push_back(caption_words(c));
    t.captions = enc::embed_captions(rec, model.enc, cfg, words, t.qa.vbar, t.q);
    t.c = t.captions.pooled;
  } else {
    t.c = rec.zeros({1, cfg.question_hidden});
  }
  t.adjusted = vqa::adjust_attention(rec, model.head, cfg, t.qa.vq, t.c, cfg.use_caa);
  t.prediction = vqa::predict(rec, model.head, cfg, t.q, t.adjusted.vbar, t.c);
  const int k = t.prediction.predicted;
  const ad::DTensor z = ad::slice_cols(t.prediction.logits, k, k + 1);
  // log σ(z) = -softplus(-z)
  t.s_pred = cfg.pred == PredMode::kLogit ? z : ad::scale(ad::softplus(ad::scale(z, -1.0)), -1.0);
  t.loss_vqa = vqa::vqa_loss(rec, t.prediction.logits, in.answer_scores);

  t.caption_losses.clear();
  if (cfg.use_captions && opts.caption_losses) {
    t.vq_caption = cfg.stop_gradient_vq ? ad::stop_gradient(t.qa.vq) : t.qa.vq;
    const ad::DTensor vbar = cfg.stop_gradient_vq ? ad::stop_gradient(t.qa.vbar) : t.qa.vbar;
    for (const auto& tokens : in.caption_tokens) {
      t.caption_losses.push_back(cap::caption_nll(rec, model.dec, cfg, tokens, t.vq_caption, vbar));
    }
  }
}

}  // namespace relcap
