#include "relcap/gradcheck.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <sstream>

#include "relcap/error.hpp"
#include "relcap/selection.hpp"

namespace relcap::gc {

namespace {

std::vector<double> uniform_values(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (auto& x : v) x = lo + (hi - lo) * unit_uniform(rng);
  return v;
}

// Values bounded away from zero, for ops with a kink there.
std::vector<double> off_zero_values(std::mt19937_64& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) {
    const double mag = 0.1 + 0.9 * unit_uniform(rng);
    x = unit_uniform(rng) < 0.5 ? -mag : mag;
  }
  return v;
}

// Scalar probe sum(y * R) with a fixed random R.
ad::DTensor probe(ad::Record& rec, ad::DTensor y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return ad::sum(ad::mul(y, rec.constant(y.shape(), uniform_values(rng, y.shape().size(), -1.0, 1.0))));
}

void note(CheckResult& r, double err, const std::string& where) {
  ++r.checked;
  if (err > r.max_rel_error || std::isnan(err)) {
    r.max_rel_error = err;
    r.worst = where;
  }
}

}  // namespace

double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

CheckResult check_leaves(const std::string& name, std::vector<std::vector<double>> values,
                         const std::vector<ad::Shape>& shapes, const LeafLoss& build, const Tolerance& tol,
                         const ParamStore* params) {
  CheckResult r;
  r.name = name;
  auto eval = [&](std::vector<std::vector<double>>* grads) {
    ad::Record rec(params);
    std::vector<ad::DTensor> leaves;
    for (std::size_t i = 0; i < values.size(); ++i) leaves.push_back(rec.leaf(shapes[i], values[i]));
    const ad::DTensor loss = build(rec, leaves);
    if (grads) {
      rec.backward(loss);
      for (const auto& l : leaves) grads->push_back(rec.grad(l));
    }
    return loss.item();
  };
  std::vector<std::vector<double>> analytic;
  eval(&analytic);
  for (std::size_t i = 0; i < values.size(); ++i) {
    for (std::size_t j = 0; j < values[i].size(); ++j) {
      const double x = values[i][j];
      values[i][j] = x + tol.step;
      const double up = eval(nullptr);
      values[i][j] = x - tol.step;
      const double down = eval(nullptr);
      values[i][j] = x;
      const double numeric = (up - down) / (2.0 * tol.step);
      note(r, relative_error(analytic[i][j], numeric, tol.floor),
           "input " + std::to_string(i) + "[" + std::to_string(j) + "]");
    }
  }
  r.passed = r.max_rel_error < tol.rel;
  return r;
}

CheckResult check_params(const std::string& name, ParamStore& store, const ParamLoss& build, const Tolerance& tol) {
  CheckResult r;
  r.name = name;
  ParamGrads analytic(store);
  {
    ad::Record rec(&store);
    const ad::DTensor loss = build(rec);
    rec.backward(loss);
    analytic.accumulate(rec);
  }
  auto eval = [&] {
    ad::Record rec(&store);
    return build(rec).item();
  };
  for (int p = 0; p < store.size(); ++p) {
    auto& value = store[p].value;
    for (std::size_t j = 0; j < value.size(); ++j) {
      const double x = value[j];
      value[j] = x + tol.step;
      const double up = eval();
      value[j] = x - tol.step;
      const double down = eval();
      value[j] = x;
      const double numeric = (up - down) / (2.0 * tol.step);
      note(r, relative_error(analytic[p][j], numeric, tol.floor), store[p].name + "[" + std::to_string(j) + "]");
    }
  }
  r.passed = r.max_rel_error < tol.rel;
  return r;
}

TinyRig make_tiny_rig(std::uint64_t seed, int K, int D, int hidden, int C, int T, int N) {
  std::mt19937_64 rng(seed);
  ModelConfig cfg;
  const int words = 6;
  cfg.vocab_size = data::Vocab::kNumSpecial + words;
  cfg.num_answers = N;
  cfg.feature_dim = D;
  cfg.question_embed = cfg.question_hidden = cfg.word_dim = cfg.caption_hidden = hidden;
  cfg.attention_hidden = cfg.decoder_embed = cfg.decoder_hidden = cfg.decoder_attention = hidden;
  TinyRig rig{Model::create(cfg, seed), {}};
  // Random biases too, so no unit sits exactly at a rectifier kink.
  for (int i = 0; i < rig.model.store.size(); ++i) {
    for (auto& v : rig.model.store[i].value) v = -0.6 + 1.2 * unit_uniform(rng);
  }
  auto word = [&] { return data::Vocab::kNumSpecial + static_cast<int>(unit_uniform(rng) * words); };
  ExampleInput& in = rig.input;
  in.cols = D;
  for (int k = 0; k < K; ++k) in.valid_rows.push_back(k);
  in.features = uniform_values(rng, static_cast<std::size_t>(K * D), -1.0, 1.0);
  for (int i = 0; i < 3; ++i) in.question.push_back(word());
  for (int c = 0; c < C; ++c) {
    std::vector<int> tokens{data::Vocab::kStart};
    const int len = 1 + static_cast<int>(unit_uniform(rng) * T);
    for (int t = 0; t < len; ++t) tokens.push_back(word());
    tokens.push_back(data::Vocab::kEnd);
    in.caption_tokens.push_back(tokens);
  }
  in.answer_scores = uniform_values(rng, static_cast<std::size_t>(N), 0.0, 1.0);
  in.relevant_caption = 0;
  return rig;
}

ad::DTensor joint_loss_fixed(ad::Record& rec, const Model& model, const ExampleInput& in, int selected,
                             ad::DTensor* vq_leaf, const std::vector<double>* vq_values) {
  ForwardTrace t;
  if (vq_leaf != nullptr) {
    t.q = enc::embed_question(rec, model.enc, model.cfg, in.question);
    *vq_leaf = rec.leaf({in.rows(), model.cfg.question_hidden}, *vq_values);
    t.qa.vq = *vq_leaf;
    t.qa.vbar = ad::sum(*vq_leaf, ad::Axis::kRows);
    forward_from_vq(rec, model, in, t);
  } else {
    t = forward(rec, model, in);
  }
  std::vector<ad::DTensor> nlls;
  for (const auto& c : t.caption_losses) nlls.push_back(c.nll);
  return sel::joint_loss(t.loss_vqa, nlls, selected < 0 ? std::nullopt : std::optional<int>(selected));
}

std::vector<CheckResult> check_joint_loss(TinyRig& rig, const Tolerance& tol) {
  std::vector<CheckResult> out;
  int selected = 0;
  std::vector<double> vq_values;
  {
    ad::Record rec(&rig.model.store);
    const ForwardTrace t = forward(rec, rig.model, rig.input);
    selected = sel::run_selection(rec, t, 0.0).selected.value_or(-1);
    vq_values.assign(t.qa.vq.values().begin(), t.qa.vq.values().end());
  }
  out.push_back(check_params("joint loss / parameters", rig.model.store,
                             [&](ad::Record& rec) { return joint_loss_fixed(rec, rig.model, rig.input, selected); },
                             tol));
  {
    CheckResult r;
    r.name = "joint loss / V^q";
    auto eval = [&](std::vector<double>* grad) {
      ad::Record rec(&rig.model.store);
      ad::DTensor leaf;
      const ad::DTensor loss = joint_loss_fixed(rec, rig.model, rig.input, selected, &leaf, &vq_values);
      if (grad) {
        rec.backward(loss);
        *grad = rec.grad(leaf);
      }
      return loss.item();
    };
    std::vector<double> analytic;
    eval(&analytic);
    for (std::size_t j = 0; j < vq_values.size(); ++j) {
      const double x = vq_values[j];
      vq_values[j] = x + tol.step;
      const double up = eval(nullptr);
      vq_values[j] = x - tol.step;
      const double down = eval(nullptr);
      vq_values[j] = x;
      note(r, relative_error(analytic[j], (up - down) / (2.0 * tol.step), tol.floor), "v^q[" + std::to_string(j) + "]");
    }
    r.passed = r.max_rel_error < tol.rel;
    out.push_back(r);
  }
  return out;
}

std::vector<CheckResult> run_suite(std::uint64_t seed, const Tolerance& tol) {
  std::vector<CheckResult> out;
  std::mt19937_64 rng(seed);
  const ad::Shape m34{3, 4};
  auto unary = [&](const std::string& name, auto op, std::vector<double> x, ad::Shape s) {
    const std::uint64_t ps = rng();
    out.push_back(check_leaves(name, {std::move(x)}, {s},
                               [&, ps](ad::Record& rec, const std::vector<ad::DTensor>& l) { return probe(rec, op(l[0]), ps); },
                               tol));
  };
  auto binary = [&](const std::string& name, auto op, ad::Shape sa, ad::Shape sb) {
    const std::uint64_t ps = rng();
    out.push_back(check_leaves(
        name, {uniform_values(rng, sa.size(), -1, 1), uniform_values(rng, sb.size(), -1, 1)}, {sa, sb},
        [&, ps](ad::Record& rec, const std::vector<ad::DTensor>& l) { return probe(rec, op(l[0], l[1]), ps); }, tol));
  };

  binary("matmul", [](auto a, auto b) { return ad::matmul(a, b); }, m34, {4, 2});
  for (ad::Shape sb : {m34, ad::Shape{1, 4}, ad::Shape{3, 1}, ad::Shape{1, 1}}) {
    const std::string suffix = " " + sb.str();
    binary("add" + suffix, [](auto a, auto b) { return ad::add(a, b); }, m34, sb);
    binary("sub" + suffix, [](auto a, auto b) { return ad::sub(a, b); }, m34, sb);
    binary("mul" + suffix, [](auto a, auto b) { return ad::mul(a, b); }, m34, sb);
  }
  unary("scale", [](auto a) { return ad::scale(a, -1.7); }, uniform_values(rng, 12, -1, 1), m34);
  binary("concat", [](auto a, auto b) { return ad::concat({a, b, a}); }, m34, {3, 2});
  unary("slice", [](auto a) { return ad::slice(a, 1, 3, 1, 4); }, uniform_values(rng, 12, -1, 1), m34);
  unary("sum rows", [](auto a) { return ad::sum(a, ad::Axis::kRows); }, uniform_values(rng, 12, -1, 1), m34);
  unary("sum cols", [](auto a) { return ad::sum(a, ad::Axis::kCols); }, uniform_values(rng, 12, -1, 1), m34);
  unary("sum all", [](auto a) { return ad::sum(a); }, uniform_values(rng, 12, -1, 1), m34);
  binary("max_of", [](auto a, auto b) { return ad::max_of(std::array{a, b}); }, m34, m34);
  unary("sigmoid", [](auto a) { return ad::sigmoid(a); }, uniform_values(rng, 12, -3, 3), m34);
  unary("tanh", [](auto a) { return ad::tanh(a); }, uniform_values(rng, 12, -2, 2), m34);
  unary("log", [](auto a) { return ad::log(a); }, uniform_values(rng, 12, 0.5, 2), m34);
  unary("exp", [](auto a) { return ad::exp(a); }, uniform_values(rng, 12, -1, 1), m34);
  unary("softmax", [](auto a) { return ad::softmax(a); }, uniform_values(rng, 12, -2, 2), m34);
  unary("log_softmax", [](auto a) { return ad::log_softmax(a); }, uniform_values(rng, 12, -2, 2), m34);
  unary("leaky_relu", [](auto a) { return ad::leaky_relu(a, 0.01); }, off_zero_values(rng, 12), m34);
  unary("softplus", [](auto a) { return ad::softplus(a); }, uniform_values(rng, 12, -3, 3), m34);
  unary("transpose", [](auto a) { return ad::transpose(a); }, uniform_values(rng, 12, -1, 1), m34);
  {
    const std::array<int, 4> idx{2, 0, 2, 1};
    unary("embedding", [&idx](auto a) { return ad::embedding(a, idx); }, uniform_values(rng, 12, -1, 1), m34);
  }

  // Composed blocks with their own parameters.
  auto block = [&](const std::string& name, auto make, auto run) {
    ParamStore store;
    std::mt19937_64 init(rng());
    const auto layer = make(store, init);
    for (int i = 0; i < store.size(); ++i) {
      for (auto& v : store[i].value) v = -0.8 + 1.6 * unit_uniform(init);
    }
    const auto x = uniform_values(init, 2 * 4, -1, 1);
    const auto h = uniform_values(init, 2 * 5, -1, 1);
    const std::uint64_t ps = init();
    out.push_back(check_params(name, store,
                               [&](ad::Record& rec) {
                                 return probe(rec, run(rec, layer, rec.constant({2, 4}, x), rec.constant({2, 5}, h)), ps);
                               },
                               tol));
  };
  block("fc", [](ParamStore& s, std::mt19937_64& r) { return nn::FcLayer::create(s, "fc", 4, 5, r); },
        [](ad::Record& rec, const nn::FcLayer& l, ad::DTensor x, ad::DTensor) { return nn::fc(rec, l, x, 0.01); });
  block("gru_step", [](ParamStore& s, std::mt19937_64& r) { return nn::GruCell::create(s, "gru", 4, 5, r); },
        [](ad::Record& rec, const nn::GruCell& c, ad::DTensor x, ad::DTensor h) {
          const auto h1 = nn::gru_step(rec, c, ad::slice_rows(x, 0, 1), ad::slice_rows(h, 0, 1));
          return nn::gru_step(rec, c, ad::slice_rows(x, 1, 2), h1);
        });
  block("lstm_step", [](ParamStore& s, std::mt19937_64& r) { return nn::LstmCell::create(s, "lstm", 4, 5, r); },
        [](ad::Record& rec, const nn::LstmCell& c, ad::DTensor x, ad::DTensor h) {
          nn::LstmState st{ad::slice_rows(h, 0, 1), ad::slice_rows(h, 1, 2)};
          st = nn::lstm_step(rec, c, ad::slice_rows(x, 0, 1), st);
          st = nn::lstm_step(rec, c, ad::slice_rows(x, 1, 2), st);
          return ad::concat({st.h, st.c});
        });

  TinyRig rig = make_tiny_rig(rng());
  for (auto& r : check_joint_loss(rig, tol)) out.push_back(std::move(r));
  return out;
}

}  // namespace relcap::gc
