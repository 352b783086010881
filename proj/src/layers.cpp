#include "relcap/layers.hpp"

#include <sstream>

#include "relcap/error.hpp"

namespace relcap::nn {

namespace {

using Init = ParamStore::Init;

void expect_cols(const char* what, DTensor x, int cols) {
  if (x.cols() != cols) {
    std::ostringstream os;
    os << what << ": input width " << x.cols() << " does not match configured " << cols << " (shape "
       << x.shape().str() << ")";
    throw ShapeError(os.str());
  }
}

}  // namespace

FcLayer FcLayer::create(ParamStore& store, const std::string& name, int in, int out, std::mt19937_64& rng) {
  FcLayer l;
  l.in = in;
  l.out = out;
  l.weight = store.add(name + ".W", {in, out}, Init::kGlorotUniform, rng);
  l.bias = store.add(name + ".b", {1, out}, Init::kZero, rng);
  return l;
}

Affine Affine::create(ParamStore& store, const std::string& name, int in, int out, std::mt19937_64& rng) {
  Affine l;
  l.in = in;
  l.out = out;
  l.weight = store.add(name + ".W", {in, out}, Init::kGlorotUniform, rng);
  l.bias = store.add(name + ".b", {1, out}, Init::kZero, rng);
  return l;
}

GruCell GruCell::create(ParamStore& store, const std::string& name, int in, int hidden, std::mt19937_64& rng) {
  GruCell c;
  c.in = in;
  c.hidden = hidden;
  c.w = store.add(name + ".W", {in, 3 * hidden}, Init::kGlorotUniform, rng);
  c.u_zr = store.add(name + ".U_zr", {hidden, 2 * hidden}, Init::kGlorotUniform, rng);
  c.u_h = store.add(name + ".U_h", {hidden, hidden}, Init::kGlorotUniform, rng);
  c.b = store.add(name + ".b", {1, 3 * hidden}, Init::kZero, rng);
  return c;
}

LstmCell LstmCell::create(ParamStore& store, const std::string& name, int in, int hidden, std::mt19937_64& rng) {
  LstmCell c;
  c.in = in;
  c.hidden = hidden;
  c.w = store.add(name + ".W", {in, 4 * hidden}, Init::kGlorotUniform, rng);
  c.u = store.add(name + ".U", {hidden, 4 * hidden}, Init::kGlorotUniform, rng);
  c.b = store.add(name + ".b", {1, 4 * hidden}, Init::kZero, rng);
  return c;
}

EmbeddingTable EmbeddingTable::create(ParamStore& store, const std::string& name, int vocab, int dim,
                                      std::mt19937_64& rng) {
  EmbeddingTable e;
  e.vocab = vocab;
  e.dim = dim;
  e.table = store.add(name + ".table", {vocab, dim}, Init::kGlorotUniform, rng);
  return e;
}

DTensor fc(ad::Record& rec, const FcLayer& layer, DTensor x, double slope) {
  expect_cols("fc", x, layer.in);
  const DTensor y = ad::add(ad::matmul(x, rec.param(layer.weight)), rec.param(layer.bias));
  return ad::leaky_relu(y, slope);
}

DTensor affine(ad::Record& rec, const Affine& layer, DTensor x) {
  expect_cols("affine", x, layer.in);
  return ad::add(ad::matmul(x, rec.param(layer.weight)), rec.param(layer.bias));
}

DTensor gru_step_projected(ad::Record& rec, const GruCell& cell, DTensor xw, DTensor h_prev) {
  const int H = cell.hidden;
  expect_cols("gru_step hidden", h_prev, H);
  const DTensor hu = ad::matmul(h_prev, rec.param(cell.u_zr));
  const DTensor z = ad::sigmoid(ad::add(ad::slice_cols(xw, 0, H), ad::slice_cols(hu, 0, H)));
  const DTensor r = ad::sigmoid(ad::add(ad::slice_cols(xw, H, 2 * H), ad::slice_cols(hu, H, 2 * H)));
  const DTensor n =
      ad::tanh(ad::add(ad::slice_cols(xw, 2 * H, 3 * H), ad::matmul(ad::mul(r, h_prev), rec.param(cell.u_h))));
  // h' = h + z * (n - h)
  return ad::add(h_prev, ad::mul(z, ad::sub(n, h_prev)));
}

DTensor gru_step(ad::Record& rec, const GruCell& cell, DTensor x, DTensor h_prev) {
  expect_cols("gru_step input", x, cell.in);
  const DTensor xw = ad::add(ad::matmul(x, rec.param(cell.w)), rec.param(cell.b));
  return gru_step_projected(rec, cell, xw, h_prev);
}

std::vector<DTensor> gru_sequence(ad::Record& rec, const GruCell& cell, DTensor xs, DTensor h0) {
  std::vector<DTensor> states;
  if (!xs.valid()) return states;
  expect_cols("gru_sequence input", xs, cell.in);
  const DTensor xw_all = ad::add(ad::matmul(xs, rec.param(cell.w)), rec.param(cell.b));
  DTensor h = h0;
  states.reserve(static_cast<std::size_t>(xs.rows()));
  for (int t = 0; t < xs.rows(); ++t) {
    h = gru_step_projected(rec, cell, ad::slice_rows(xw_all, t, t + 1), h);
    states.push_back(h);
  }
  return states;
}

LstmState lstm_step(ad::Record& rec, const LstmCell& cell, DTensor x, const LstmState& prev) {
  const int H = cell.hidden;
  expect_cols("lstm_step input", x, cell.in);
  expect_cols("lstm_step hidden", prev.h, H);
  const DTensor pre = ad::add(ad::add(ad::matmul(x, rec.param(cell.w)), ad::matmul(prev.h, rec.param(cell.u))),
                              rec.param(cell.b));
  const DTensor i = ad::sigmoid(ad::slice_cols(pre, 0, H));
  const DTensor f = ad::sigmoid(ad::slice_cols(pre, H, 2 * H));
  const DTensor g = ad::tanh(ad::slice_cols(pre, 2 * H, 3 * H));
  const DTensor o = ad::sigmoid(ad::slice_cols(pre, 3 * H, 4 * H));
  const DTensor c = ad::add(ad::mul(f, prev.c), ad::mul(i, g));
  const DTensor h = ad::mul(o, ad::tanh(c));
  return {h, c};
}

LstmState lstm_zero_state(ad::Record& rec, const LstmCell& cell) {
  return {rec.zeros({1, cell.hidden}), rec.zeros({1, cell.hidden})};
}

DTensor embed(ad::Record& rec, const EmbeddingTable& table, std::span<const int> indices) {
  return ad::embedding(rec.param(table.table), indices);
}

}  // namespace relcap::nn
