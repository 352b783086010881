#include <doctest.h>

#include <chrono>

#include "helpers.hpp"
#include "relcap/error.hpp"
#include "relcap/gradcheck.hpp"
#include "relcap/selection.hpp"

using namespace relcap;
using namespace relcap::test;
using ad::DTensor;
using ad::Record;

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Independent oracle: a fresh graph per backward pass, full sweeps only.
std::vector<double> oracle_inner_products(const Model& model, const ExampleInput& in) {
  std::vector<double> ga;
  int captions = 0;
  {
    Record rec(&model.store);
    const auto t = forward(rec, model, in);
    rec.backward(t.s_pred);
    ga = rec.grad(t.qa.vq);
    captions = static_cast<int>(t.caption_losses.size());
  }
  std::vector<double> g;
  for (int i = 0; i < captions; ++i) {
    Record rec(&model.store);
    const auto t = forward(rec, model, in);
    rec.backward(t.caption_losses[static_cast<std::size_t>(i)].nll);
    g.push_back(-dot(ga, rec.grad(t.qa.vq)));
  }
  return g;
}

// s_pred for answer `k` and caption i's nll as functions of a free V^q leaf.
struct FreeVq {
  DTensor leaf;
  DTensor logit;
  std::vector<DTensor> nlls;
};

FreeVq free_vq(Record& rec, const Model& model, const ExampleInput& in, const std::vector<double>& vq, int k) {
  ForwardTrace t;
  t.q = enc::embed_question(rec, model.enc, model.cfg, in.question);
  FreeVq f;
  f.leaf = rec.leaf({in.rows(), model.cfg.question_hidden}, vq);
  t.qa.vq = f.leaf;
  t.qa.vbar = ad::sum(f.leaf, ad::Axis::kRows);
  forward_from_vq(rec, model, in, t);
  f.logit = ad::slice_cols(t.prediction.logits, k, k + 1);
  for (const auto& c : t.caption_losses) f.nlls.push_back(c.nll);
  return f;
}

}  // namespace

TEST_CASE("aligned and anti-aligned gradient fields") {
  std::mt19937_64 rng(1);
  const auto G = random_values(rng, 3 * 4);
  const double norm2 = dot(G, G);
  Record rec;
  const DTensor vq = rec.leaf({3, 4}, random_values(rng, 12));
  const DTensor Gc = rec.constant({3, 4}, G);
  const DTensor s = ad::sum(ad::mul(vq, Gc));
  // d log p / d vq = G  <=>  nll = -<vq, G>
  const std::vector<DTensor> nlls{ad::scale(s, -1.0), s};
  const auto g = sel::grad_inner_products(rec, s, vq, vq, nlls);
  CHECK(g[0] == doctest::Approx(norm2).epsilon(1e-14));
  CHECK(g[1] == doctest::Approx(-norm2).epsilon(1e-14));
  CHECK(g[0] > 0.0);
  CHECK_FALSE(sel::select(std::vector<double>{g[1]}, 0.01).has_value());
}

TEST_CASE("scaling both fields keeps the order") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto Ga = random_values(rng, 8);
    std::vector<std::vector<double>> Gc;
    for (int i = 0; i < 4; ++i) Gc.push_back(random_values(rng, 8));
    auto run = [&](double scale) {
      Record rec;
      const DTensor vq = rec.leaf({2, 4}, std::vector<double>(8, 0.1));
      const DTensor s = ad::scale(ad::sum(ad::mul(vq, rec.constant({2, 4}, Ga))), scale);
      std::vector<DTensor> nlls;
      for (const auto& G : Gc) nlls.push_back(ad::scale(ad::sum(ad::mul(vq, rec.constant({2, 4}, G))), -scale));
      return sel::grad_inner_products(rec, s, vq, vq, nlls);
    };
    const auto g1 = run(1.0);
    const auto g2 = run(3.7);
    CHECK(sel::select(g1, 0.0) == sel::select(g2, 0.0));
    for (std::size_t i = 0; i < g1.size(); ++i) CHECK(g2[i] == doctest::Approx(3.7 * 3.7 * g1[i]).epsilon(1e-12));
  }
}

TEST_CASE("select") {
  CHECK(sel::select(std::vector<double>{0.2, 0.7, 0.1}, 0.05) == 1);
  CHECK_FALSE(sel::select(std::vector<double>{-0.3, -0.1}, 0.0).has_value());
  CHECK(sel::select(std::vector<double>{0.5, 0.5}, 0.0) == 0);
  CHECK_FALSE(sel::select(std::vector<double>{0.0, 0.0}, 0.0).has_value());  // strict inequality
  CHECK_THROWS(sel::select(std::vector<double>{}, 0.0));
}

TEST_CASE("joint loss") {
  Record rec;
  const DTensor x = rec.leaf({1, 2}, {0.3, -0.8});
  const DTensor lv = ad::sum(ad::mul(x, x));
  const DTensor lc0 = ad::sum(ad::exp(x));
  const DTensor lc1 = ad::sum(ad::sigmoid(x));
  const std::vector<DTensor> caps{lc0, lc1};
  CHECK(sel::joint_loss(lv, caps, std::nullopt).id() == lv.id());
  CHECK(sel::joint_loss(lv, caps, 1).item() == lv.item() + lc1.item());
  CHECK_THROWS(sel::joint_loss(lv, caps, 2));
  CHECK_THROWS(sel::joint_loss(lv, caps, -1));
  {
    Record r2;
    const DTensor a = r2.constant({1, 1}, {0.4});
    const DTensor b = r2.constant({1, 1}, {1.1});
    const std::vector<DTensor> one{b};
    CHECK(sel::joint_loss(a, one, 0).item() == doctest::Approx(1.5).epsilon(1e-15));
  }
  // gradient of the sum == sum of the gradients
  rec.backward(lv);
  const auto gv = rec.grad(x);
  rec.backward(lc1);
  const auto gc1 = rec.grad(x);
  rec.backward(sel::joint_loss(lv, caps, 1));
  const auto gj = rec.grad(x);
  for (std::size_t i = 0; i < gj.size(); ++i) CHECK(std::abs(gj[i] - (gv[i] + gc1[i])) < 1e-10);
}

TEST_CASE("missing V^q is an error") {
  Record rec;
  ForwardTrace empty;
  CHECK_THROWS(sel::grad_inner_products(rec, empty));
}

TEST_CASE("inner products match the per-caption oracle on 100 random rigs") {
  const auto t0 = std::chrono::steady_clock::now();
  int feasible = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto rig = gc::make_tiny_rig(1000 + seed, 3 + static_cast<int>(seed % 3), 4, 5, 2 + static_cast<int>(seed % 4));
    Record rec(&rig.model.store);
    const auto t = forward(rec, rig.model, rig.input);
    const auto report = sel::run_selection(rec, t, 0.0);
    const auto oracle = oracle_inner_products(rig.model, rig.input);
    REQUIRE(report.g.size() == oracle.size());
    for (std::size_t i = 0; i < oracle.size(); ++i) CHECK(std::abs(report.g[i] - oracle[i]) < 1e-6);
    CHECK(report.selected == sel::select(oracle, 0.0));
    if (report.selected) {
      ++feasible;
      CHECK(std::find(report.feasible.begin(), report.feasible.end(), *report.selected) != report.feasible.end());
      for (int i : report.feasible) CHECK(report.g[static_cast<std::size_t>(*report.selected)] >= report.g[static_cast<std::size_t>(i)]);
    }
    for (std::size_t i = 0; i < report.g.size(); ++i) {
      const bool in = std::find(report.feasible.begin(), report.feasible.end(), static_cast<int>(i)) != report.feasible.end();
      CHECK(in == (report.g[i] > 0.0));
    }
  }
  CHECK(feasible > 0);
  CHECK(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() < 60.0);
}

TEST_CASE("selection is pure and deterministic") {
  auto rig = gc::make_tiny_rig(77);
  const auto before = rig.model.store.hash();
  Record rec(&rig.model.store);
  const auto t = forward(rec, rig.model, rig.input);
  const auto a = sel::run_selection(rec, t, 0.0);
  const auto b = sel::run_selection(rec, t, 0.0);
  CHECK(a.g == b.g);
  CHECK(a.selected == b.selected);
  CHECK(rig.model.store.hash() == before);
}

TEST_CASE("shared descent: stepping down the selected caption loss raises s_pred") {
  const double delta = 1e-4;
  int tested = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto rig = gc::make_tiny_rig(500 + seed);
    Record rec(&rig.model.store);
    const auto t = forward(rec, rig.model, rig.input);
    const auto report = sel::run_selection(rec, t, 0.0);
    if (!report.selected) continue;
    const int i = *report.selected;
    const int k = t.prediction.predicted;
    const std::vector<double> vq = to_vec(t.qa.vq);

    Record r0(&rig.model.store);
    const auto f0 = free_vq(r0, rig.model, rig.input, vq, k);
    r0.backward(f0.nlls[static_cast<std::size_t>(i)]);
    const auto grad = r0.grad(f0.leaf);
    auto stepped = vq;
    for (std::size_t j = 0; j < vq.size(); ++j) stepped[j] -= delta * grad[j];
    Record r1(&rig.model.store);
    const auto f1 = free_vq(r1, rig.model, rig.input, stepped, k);

    const double change = f1.logit.item() - f0.logit.item();
    const double first_order = delta * report.g[static_cast<std::size_t>(i)];
    CHECK(change > 0.0);
    CHECK(std::abs(change - first_order) < 0.05 * first_order + 1e-12);
    ++tested;
  }
  CHECK(tested > 10);
}
