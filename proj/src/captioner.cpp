#include "relcap/captioner.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>

#include "relcap/error.hpp"
#include "relcap/params.hpp"
#include "relcap/vocab.hpp"

namespace relcap::cap {

namespace {

constexpr double kMinTemperature = 1e-6;

struct Step {
  nn::LstmState att;
  nn::LstmState lang;
};

// Shared per-sequence state: V^q projected once for the additive attention.
struct Context {
  DTensor vq;
  DTensor vbar;
  DTensor vq_proj;  // n x A
};

Context make_context(ad::Record& rec, const DecoderParams& p, DTensor vq, DTensor vbar) {
  return {vq, vbar, ad::matmul(vq, rec.param(p.att_visual))};
}

// One decoder step from the embedded previous word; returns log-softmax over
// the vocabulary and updates `s`. Attention weights go to `attn` when given.
DTensor decode_step(ad::Record& rec, const DecoderParams& p, const Context& ctx, DTensor word, Step& s,
                    std::vector<double>* attn) {
  s.att = nn::lstm_step(rec, p.attention_lstm, ad::concat({word, ctx.vbar, s.lang.h}), s.att);
  const DTensor e = ad::matmul(ad::tanh(ad::add(ctx.vq_proj, ad::matmul(s.att.h, rec.param(p.att_hidden)))),
                               rec.param(p.att_out));  // n x 1
  const DTensor alpha = ad::softmax(ad::transpose(e));
  if (attn) attn->assign(alpha.values().begin(), alpha.values().end());
  const DTensor attended = ad::matmul(alpha, ctx.vq);
  s.lang = nn::lstm_step(rec, p.language_lstm, ad::concat({attended, s.att.h}), s.lang);
  return ad::log_softmax(nn::affine(rec, p.output, s.lang.h));
}

Step initial_step(ad::Record& rec, const DecoderParams& p) {
  return {nn::lstm_zero_state(rec, p.attention_lstm), nn::lstm_zero_state(rec, p.language_lstm)};
}

}  // namespace

DecoderParams DecoderParams::create(ParamStore& store, const ModelConfig& cfg, std::mt19937_64& rng) {
  const int H = cfg.question_hidden;
  const int Hd = cfg.decoder_hidden;
  DecoderParams p;
  p.embed = nn::EmbeddingTable::create(store, "cap.embed", cfg.vocab_size, cfg.decoder_embed, rng);
  p.attention_lstm = nn::LstmCell::create(store, "cap.attention_lstm", cfg.decoder_embed + H + Hd, Hd, rng);
  p.att_visual = store.add("cap.att_visual", {H, cfg.decoder_attention}, ParamStore::Init::kGlorotUniform, rng);
  p.att_hidden = store.add("cap.att_hidden", {Hd, cfg.decoder_attention}, ParamStore::Init::kGlorotUniform, rng);
  p.att_out = store.add("cap.att_out", {cfg.decoder_attention, 1}, ParamStore::Init::kGlorotUniform, rng);
  p.language_lstm = nn::LstmCell::create(store, "cap.language_lstm", H + Hd, Hd, rng);
  p.output = nn::Affine::create(store, "cap.output", Hd, cfg.vocab_size, rng);
  return p;
}

CaptionLikelihood caption_nll(ad::Record& rec, const DecoderParams& p, const ModelConfig& /*cfg*/,
                              std::span<const int> tokens, DTensor vq, DTensor vbar_q) {
  if (tokens.size() < 2) throw DataError("caption_nll: caption needs <start> and at least one more token");
  if (tokens[0] != data::Vocab::kStart) throw DataError("caption_nll: caption must begin with <start>");
  for (int t : tokens) {
    if (t < 0 || t >= p.embed.vocab) throw DataError("caption_nll: token " + std::to_string(t) + " outside vocabulary");
  }
  CaptionLikelihood out;
  const Context ctx = make_context(rec, p, vq, vbar_q);
  const DTensor words = nn::embed(rec, p.embed, tokens.first(tokens.size() - 1));
  Step s = initial_step(rec, p);
  std::vector<DTensor> picked;
  for (std::size_t t = 0; t + 1 < tokens.size(); ++t) {
    out.attention.emplace_back();
    const DTensor logp = decode_step(rec, p, ctx, ad::slice_rows(words, static_cast<int>(t), static_cast<int>(t) + 1),
                                     s, &out.attention.back());
    const int target = tokens[t + 1];
    const DTensor lp = ad::slice_cols(logp, target, target + 1);
    out.step_log_probs.push_back(lp.item());
    picked.push_back(lp);
  }
  out.nll = ad::scale(ad::sum(picked.size() == 1 ? picked[0] : ad::concat(picked)), -1.0);
  return out;
}

std::vector<GeneratedCaption> generate(const ParamStore& store, const DecoderParams& p, const ModelConfig& cfg,
                                       std::span<const double> vq_values, int rows, const GenerateOptions& opts) {
  if (opts.count < 1) throw Error("generate: count must be >= 1");
  if (opts.max_len < 1) throw Error("generate: max_len must be >= 1");
  if (!(opts.temperature > 0.0)) throw Error("generate: temperature must be positive");
  const int H = cfg.question_hidden;
  if (rows < 1 || vq_values.size() != static_cast<std::size_t>(rows) * H) {
    throw ShapeError("generate: V^q values do not form " + std::to_string(rows) + " x " + std::to_string(H));
  }
  const double temperature = std::max(opts.temperature, kMinTemperature);
  std::mt19937_64 rng(opts.seed);
  std::vector<GeneratedCaption> out;
  out.reserve(static_cast<std::size_t>(opts.count));
  const int V = p.embed.vocab;

  for (int n = 0; n < opts.count; ++n) {
    ad::Record rec(&store);
    rec.set_check_finite(false);
    const DTensor vq = rec.constant({rows, H}, {vq_values.begin(), vq_values.end()});
    const Context ctx = make_context(rec, p, vq, ad::sum(vq, ad::Axis::kRows));
    Step s = initial_step(rec, p);
    GeneratedCaption g;
    int prev = data::Vocab::kStart;
    for (int t = 0; t < opts.max_len; ++t) {
      const std::array<int, 1> idx{prev};
      const DTensor logp = decode_step(rec, p, ctx, nn::embed(rec, p.embed, idx), s, nullptr);
      const auto lp = logp.values();
      std::vector<char> allowed(static_cast<std::size_t>(V), 1);
      allowed[data::Vocab::kPad] = 0;
      allowed[data::Vocab::kStart] = 0;
      if (t == 0) allowed[data::Vocab::kEnd] = 0;
      int choice = -1;
      if (opts.mode == DecodeMode::kGreedy) {
        for (int v = 0; v < V; ++v) {
          if (allowed[static_cast<std::size_t>(v)] && (choice < 0 || lp[static_cast<std::size_t>(v)] > lp[static_cast<std::size_t>(choice)])) choice = v;
        }
      } else {
        double top = -std::numeric_limits<double>::infinity();
        for (int v = 0; v < V; ++v) {
          if (allowed[static_cast<std::size_t>(v)]) top = std::max(top, lp[static_cast<std::size_t>(v)]);
        }
        std::vector<double> w(static_cast<std::size_t>(V), 0.0);
        double total = 0.0;
        for (int v = 0; v < V; ++v) {
          if (!allowed[static_cast<std::size_t>(v)]) continue;
          w[static_cast<std::size_t>(v)] = std::exp((lp[static_cast<std::size_t>(v)] - top) / temperature);
          total += w[static_cast<std::size_t>(v)];
        }
        double u = unit_uniform(rng) * total;
        for (int v = 0; v < V; ++v) {
          if (!allowed[static_cast<std::size_t>(v)]) continue;
          choice = v;
          u -= w[static_cast<std::size_t>(v)];
          if (u < 0.0) break;
        }
        // Rounding can leave u >= 0 past the end; fall back to the last allowed token with mass.
        if (u >= 0.0) {
          for (int v = V - 1; v >= 0; --v) {
            if (w[static_cast<std::size_t>(v)] > 0.0) {
              choice = v;
              break;
            }
          }
        }
      }
      g.tokens.push_back(choice);
      g.step_log_probs.push_back(lp[static_cast<std::size_t>(choice)]);
      g.log_prob += lp[static_cast<std::size_t>(choice)];
      if (choice == data::Vocab::kEnd) break;
      prev = choice;
    }
    out.push_back(std::move(g));
  }
  return out;
}

}  // namespace relcap::cap
