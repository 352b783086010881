#include <doctest.h>

#include "helpers.hpp"
#include "relcap/encoders.hpp"
#include "relcap/error.hpp"
#include "relcap/gradcheck.hpp"

using namespace relcap;
using namespace relcap::test;
using ad::DTensor;
using ad::Record;

namespace {

struct Rig {
  ModelConfig cfg = tiny_config();
  ParamStore store;
  enc::EncoderParams p;
  explicit Rig(std::uint64_t seed = 1, GateMode gate = GateMode::kVector) {
    cfg.gate = gate;
    std::mt19937_64 rng(seed);
    p = enc::EncoderParams::create(store, cfg, rng);
    // Scale up so the small layers see non-trivial activations.
    for (int i = 0; i < store.size(); ++i) {
      for (auto& x : store[i].value) x = 2.0 * unit_uniform(rng) - 1.0;
    }
  }
};

const std::vector<int> kQuestion{4, 7, 5};
const std::vector<std::vector<int>> kCaptions{{4, 5, 6}, {8, 9}, {10, 4, 11, 6}};

}  // namespace

TEST_CASE("question encoding is deterministic") {
  Rig rig;
  Record a(&rig.store);
  Record b(&rig.store);
  CHECK(to_vec(enc::embed_question(a, rig.p, rig.cfg, kQuestion)) == to_vec(enc::embed_question(b, rig.p, rig.cfg, kQuestion)));
  CHECK_THROWS_AS(enc::embed_question(a, rig.p, rig.cfg, std::vector<int>{}), DataError);
}

TEST_CASE("zero GRU weights give the zero question vector") {
  Rig rig;
  for (int i : {rig.p.question_gru.w, rig.p.question_gru.u_zr, rig.p.question_gru.u_h, rig.p.question_gru.b}) {
    fill_param(rig.store, i, 0.0);
  }
  Record rec(&rig.store);
  // h_t = h_{t-1} / 2 from h_0 = 0 stays 0 for every step.
  for (double v : enc::embed_question(rec, rig.p, rig.cfg, kQuestion).values()) CHECK(v == 0.0);
}

TEST_CASE("embedding gradients match finite differences") {
  Rig rig;
  const auto r = gc::check_params("question", rig.store, [&](Record& rec) {
    const DTensor q = enc::embed_question(rec, rig.p, rig.cfg, kQuestion);
    return ad::sum(ad::mul(q, q));
  });
  CHECK(r.passed);
}

TEST_CASE("question-visual attention") {
  Rig rig;
  std::mt19937_64 rng(3);
  const int D = rig.cfg.feature_dim;
  const auto vv = random_values(rng, 3 * static_cast<std::size_t>(D));
  const auto qv = random_values(rng, 6);

  SUBCASE("weights sum to one, vbar is the row sum") {
    Record rec(&rig.store);
    const auto qa = enc::attend_question_visual(rec, rig.p, rig.cfg, rec.constant({3, D}, vv), rec.constant({1, 6}, qv));
    double total = 0.0;
    for (double a : qa.alpha.values()) {
      CHECK(a >= 0.0);
      total += a;
    }
    CHECK(std::abs(total - 1.0) < 1e-9);
    CHECK(to_vec(qa.vbar) == to_vec(ad::sum(qa.vq, ad::Axis::kRows)));
  }
  SUBCASE("identical scores give uniform weights") {
    fill_param(rig.store, rig.p.attn_out, 0.0);
    Record rec(&rig.store);
    const auto qa = enc::attend_question_visual(rec, rig.p, rig.cfg, rec.constant({3, D}, vv), rec.constant({1, 6}, qv));
    for (double a : qa.alpha.values()) CHECK(a == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  }
  SUBCASE("a single object gets all the weight and v^q = f(v)") {
    Record rec(&rig.store);
    const std::vector<double> one(vv.begin(), vv.begin() + D);
    const auto qa = enc::attend_question_visual(rec, rig.p, rig.cfg, rec.constant({1, D}, one), rec.constant({1, 6}, qv));
    CHECK(qa.alpha.item() == 1.0);
    CHECK(to_vec(qa.vq) == to_vec(qa.fv));
  }
  SUBCASE("masking an object renormalizes the rest") {
    Record rec(&rig.store);
    const auto full = to_vec(
        enc::attend_question_visual(rec, rig.p, rig.cfg, rec.constant({3, D}, vv), rec.constant({1, 6}, qv)).alpha);
    // Drop object 1: the survivors' weights are the full softmax restricted and renormalized.
    std::vector<double> kept(vv.begin(), vv.begin() + D);
    kept.insert(kept.end(), vv.begin() + 2 * D, vv.end());
    const auto reduced = to_vec(
        enc::attend_question_visual(rec, rig.p, rig.cfg, rec.constant({2, D}, kept), rec.constant({1, 6}, qv)).alpha);
    const double z = full[0] + full[2];
    CHECK(reduced[0] == doctest::Approx(full[0] / z).epsilon(1e-12));
    CHECK(reduced[1] == doctest::Approx(full[2] / z).epsilon(1e-12));
  }
  SUBCASE("every object masked is an error") {
    Record rec(&rig.store);
    CHECK_THROWS(enc::attend_question_visual(rec, rig.p, rig.cfg, DTensor{}, rec.constant({1, 6}, qv)));
  }
}

TEST_CASE("caption encoding properties") {
  Rig rig;
  std::mt19937_64 rng(5);
  const auto vbar = random_values(rng, 6);
  const auto qv = random_values(rng, 6);
  auto encode = [&](Record& rec, const std::vector<std::vector<int>>& caps) {
    return enc::embed_captions(rec, rig.p, rig.cfg, caps, rec.constant({1, 6}, vbar), rec.constant({1, 6}, qv));
  };
  Record rec(&rig.store);
  const auto all = encode(rec, kCaptions);

  SUBCASE("c is the elementwise max of the c_i") {
    const auto c = to_vec(all.pooled);
    for (std::size_t j = 0; j < c.size(); ++j) {
      double m = -1e300;
      for (const auto& ci : all.vectors) m = std::max(m, ci.values()[j]);
      CHECK(c[j] == m);
    }
  }
  SUBCASE("one caption: c == c_1") {
    const auto one = encode(rec, {kCaptions[1]});
    CHECK(to_vec(one.pooled) == to_vec(one.vectors[0]));
    CHECK(to_vec(one.pooled) == to_vec(all.vectors[1]));
  }
  SUBCASE("duplicates and permutations leave c unchanged") {
    CHECK(to_vec(encode(rec, {kCaptions[0], kCaptions[0]}).pooled) == to_vec(encode(rec, {kCaptions[0]}).pooled));
    CHECK(to_vec(encode(rec, {kCaptions[2], kCaptions[0], kCaptions[1]}).pooled) == to_vec(all.pooled));
  }
  SUBCASE("gates lie strictly inside (0, 1)") {
    for (const auto& per_caption : all.gates) {
      for (const auto& g : per_caption) {
        for (double v : g.values()) {
          CHECK(v > 0.0);
          CHECK(v < 1.0);
        }
      }
    }
  }
  SUBCASE("deterministic across records") {
    Record other(&rig.store);
    CHECK(to_vec(encode(other, kCaptions).pooled) == to_vec(all.pooled));
  }
  SUBCASE("bad captions") {
    CHECK_THROWS(encode(rec, {{4, 99}}));
    CHECK_THROWS(encode(rec, {{}}));
    CHECK_THROWS(encode(rec, {}));
  }
}

TEST_CASE("closed gates feed the caption GRU zero input") {
  Rig rig;
  // Word GRU pinned to h1 = tanh(50) ~ 1 on every step; both gate projections
  // pinned to LReLU(-5000) = -50, so a^c = -100 and sigma(a^c) ~ 4e-44.
  for (int i : {rig.p.word_gru.w, rig.p.word_gru.u_zr, rig.p.word_gru.u_h}) fill_param(rig.store, i, 0.0);
  auto& wb = rig.store[rig.p.word_gru.b].value;
  const int E = rig.cfg.word_dim;
  for (int j = 0; j < 3 * E; ++j) wb[static_cast<std::size_t>(j)] = j < E ? 50.0 : (j < 2 * E ? 0.0 : 50.0);
  for (const auto* layer : {&rig.p.gate_visual, &rig.p.gate_question}) {
    fill_param(rig.store, layer->weight, 0.0);
    fill_param(rig.store, layer->bias, -5000.0);
  }
  Record rec(&rig.store);
  const auto e = enc::embed_captions(rec, rig.p, rig.cfg, {kCaptions[2]}, rec.zeros({1, 6}), rec.zeros({1, 6}));
  for (const auto& g : e.gates[0]) {
    for (double v : g.values()) CHECK(v < 1e-40);
  }
  DTensor h = rec.zeros({1, rig.cfg.caption_hidden});
  for (std::size_t t = 0; t < kCaptions[2].size(); ++t) h = nn::gru_step(rec, rig.p.caption_gru, rec.zeros({1, E}), h);
  CHECK(max_abs_diff(to_vec(e.caption_states[0]), to_vec(h)) < 1e-12);
}

TEST_CASE("fixed gate equals a plain GRU over the embeddings") {
  Rig rig(7, GateMode::kFixed);
  Record rec(&rig.store);
  const auto e = enc::embed_captions(rec, rig.p, rig.cfg, {kCaptions[0]}, rec.zeros({1, 6}), rec.zeros({1, 6}));
  const DTensor emb = nn::embed(rec, rig.p.word_embed, kCaptions[0]);
  const auto states = nn::gru_sequence(rec, rig.p.caption_gru, emb, rec.zeros({1, rig.cfg.caption_hidden}));
  CHECK(to_vec(e.caption_states[0]) == to_vec(states.back()));
  CHECK(e.gates[0].empty());
}

TEST_CASE("gate path gradients match finite differences") {
  for (GateMode mode : {GateMode::kVector, GateMode::kScalar}) {
    Rig rig(11, mode);
    std::mt19937_64 rng(13);
    const auto r = gc::check_leaves(
        "gate", {random_values(rng, 6), random_values(rng, 6)}, {{1, 6}, {1, 6}},
        [&](Record& rec, const std::vector<DTensor>& x) {
          const auto e = enc::embed_captions(rec, rig.p, rig.cfg, kCaptions, x[0], x[1]);
          return ad::sum(ad::mul(e.pooled, e.pooled));
        },
        {}, &rig.store);
    CHECK(r.passed);
    const auto rp = gc::check_params("gate params", rig.store, [&](Record& rec) {
      const auto e = enc::embed_captions(rec, rig.p, rig.cfg, kCaptions, rec.constant({1, 6}, std::vector<double>(6, 0.3)),
                                         rec.constant({1, 6}, std::vector<double>(6, -0.2)));
      return ad::sum(e.pooled);
    });
    CHECK(rp.passed);
  }
}
