#include "relcap/encoders.hpp"

#include "relcap/error.hpp"

namespace relcap::enc {

EncoderParams EncoderParams::create(ParamStore& store, const ModelConfig& cfg, std::mt19937_64& rng) {
  const int H = cfg.question_hidden;
  const int E = cfg.word_dim;
  EncoderParams p;
  p.question_embed = nn::EmbeddingTable::create(store, "enc.question_embed", cfg.vocab_size, cfg.question_embed, rng);
  p.question_gru = nn::GruCell::create(store, "enc.question_gru", cfg.question_embed, H, rng);
  p.visual = nn::FcLayer::create(store, "enc.visual", cfg.feature_dim, H, rng);
  p.visual_query = nn::FcLayer::create(store, "enc.visual_query", H, H, rng);
  p.attn_hidden = nn::FcLayer::create(store, "enc.attn_hidden", 2 * H, cfg.attention_hidden, rng);
  p.attn_out = store.add("enc.attn_out.w", {cfg.attention_hidden, 1}, ParamStore::Init::kGlorotUniform, rng);
  p.word_embed = nn::EmbeddingTable::create(store, "enc.word_embed", cfg.vocab_size, E, rng);
  p.word_gru = nn::GruCell::create(store, "enc.word_gru", E, E, rng);
  p.gate_visual = nn::FcLayer::create(store, "enc.gate_visual", H, E, rng);
  p.gate_question = nn::FcLayer::create(store, "enc.gate_question", H, E, rng);
  p.caption_gru = nn::GruCell::create(store, "enc.caption_gru", E, cfg.caption_hidden, rng);
  p.caption_out = nn::FcLayer::create(store, "enc.caption_out", cfg.caption_hidden, H, rng);
  return p;
}

DTensor embed_question(ad::Record& rec, const EncoderParams& p, const ModelConfig& /*cfg*/,
                       std::span<const int> tokens) {
  if (tokens.empty()) throw DataError("embed_question: empty question");
  const DTensor xs = nn::embed(rec, p.question_embed, tokens);
  const auto states = nn::gru_sequence(rec, p.question_gru, xs, rec.zeros({1, p.question_gru.hidden}));
  return states.back();
}

QuestionAttended attend_question_visual(ad::Record& rec, const EncoderParams& p, const ModelConfig& cfg, DTensor v,
                                        DTensor q) {
  if (v.rows() == 0) throw DataError("attend_question_visual: every object is masked");
  const int n = v.rows();
  QuestionAttended out;
  out.fv = nn::fc(rec, p.visual, v, cfg.lrelu_slope);
  const DTensor fq = nn::fc(rec, p.visual_query, q, cfg.lrelu_slope);
  // [f(v_k); f(q)] W = f(v_k) W_top + f(q) W_bottom, with the q half broadcast over rows.
  const DTensor W = rec.param(p.attn_hidden.weight);
  const int H = cfg.question_hidden;
  const DTensor pre = ad::add(ad::add(ad::matmul(out.fv, ad::slice_rows(W, 0, H)),
                                      ad::matmul(fq, ad::slice_rows(W, H, 2 * H))),
                              rec.param(p.attn_hidden.bias));
  const DTensor scores = ad::matmul(ad::leaky_relu(pre, cfg.lrelu_slope), rec.param(p.attn_out));  // n x 1
  out.alpha = ad::softmax(ad::transpose(scores));                                                   // 1 x n
  out.vq = ad::scale(ad::mul(out.fv, ad::transpose(out.alpha)), static_cast<double>(n));
  out.vbar = ad::sum(out.vq, ad::Axis::kRows);
  return out;
}

CaptionEncoding embed_captions(ad::Record& rec, const EncoderParams& p, const ModelConfig& cfg,
                               const std::vector<std::vector<int>>& captions, DTensor vbar_q, DTensor q) {
  if (captions.empty()) throw DataError("embed_captions: no captions");
  CaptionEncoding out;
  const int E = cfg.word_dim;
  DTensor gv;
  DTensor gq;
  if (cfg.gate != GateMode::kFixed) {
    gv = nn::fc(rec, p.gate_visual, vbar_q, cfg.lrelu_slope);
    gq = nn::fc(rec, p.gate_question, q, cfg.lrelu_slope);
  }
  const DTensor h1_0 = rec.zeros({1, E});
  const DTensor h2_0 = rec.zeros({1, cfg.caption_hidden});
  for (std::size_t i = 0; i < captions.size(); ++i) {
    const auto& words = captions[i];
    if (words.empty()) throw DataError("embed_captions: caption " + std::to_string(i) + " is empty");
    const DTensor emb = nn::embed(rec, p.word_embed, words);  // T_i x E

    std::vector<DTensor> gates;
    DTensor h2;
    if (cfg.gate == GateMode::kFixed) {
      h2 = nn::gru_sequence(rec, p.caption_gru, emb, h2_0).back();
    } else {
      const auto h1 = nn::gru_sequence(rec, p.word_gru, emb, h1_0);
      h2 = h2_0;
      for (std::size_t t = 0; t < h1.size(); ++t) {
        DTensor a = ad::add(ad::mul(h1[t], gv), ad::mul(h1[t], gq));
        if (cfg.gate == GateMode::kScalar) a = ad::sum(a);
        const DTensor alpha = ad::sigmoid(a);
        gates.push_back(alpha);
        const DTensor x = ad::slice_rows(emb, static_cast<int>(t), static_cast<int>(t) + 1);
        h2 = nn::gru_step(rec, p.caption_gru, ad::mul(x, alpha), h2);
      }
    }
    out.gates.push_back(std::move(gates));
    out.caption_states.push_back(h2);
    out.vectors.push_back(nn::fc(rec, p.caption_out, h2, cfg.lrelu_slope));
  }
  out.pooled = out.vectors.size() == 1 ? out.vectors[0] : ad::max_of(out.vectors);
  return out;
}

}  // namespace relcap::enc
