#include <doctest.h>

#include <cmath>
#include <random>

#include "relcap/layers.hpp"

using namespace relcap;
using ad::Record;

namespace {

void fill(ParamStore& store, double v) {
  for (int i = 0; i < store.size(); ++i) std::fill(store[i].value.begin(), store[i].value.end(), v);
}

}  // namespace

TEST_CASE("fc examples") {
  std::mt19937_64 rng(1);
  ParamStore store;
  const auto layer = nn::FcLayer::create(store, "fc", 2, 2, rng);
  fill(store, 0.0);
  {
    Record rec(&store);
    const auto y = nn::fc(rec, layer, rec.constant({1, 2}, {3.0, -4.0}), 0.01).values();
    CHECK(y[0] == 0.0);
    CHECK(y[1] == 0.0);
  }
  store[layer.weight].value = {1, 0, 0, 1};
  Record rec(&store);
  const auto y = nn::fc(rec, layer, rec.constant({1, 2}, {-1.0, 2.0}), 0.01).values();
  CHECK(y[0] == doctest::Approx(-0.01).epsilon(1e-15));
  CHECK(y[1] == 2.0);
  CHECK_THROWS(nn::fc(rec, layer, rec.constant({1, 3}, {1, 2, 3}), 0.01));
}

TEST_CASE("gru with zero weights halves the state") {
  std::mt19937_64 rng(2);
  ParamStore store;
  const auto cell = nn::GruCell::create(store, "gru", 3, 4, rng);
  fill(store, 0.0);
  Record rec(&store);
  const auto h = rec.constant({1, 4}, {1.0, -2.0, 0.5, 4.0});
  const auto next = nn::gru_step(rec, cell, rec.constant({1, 3}, {0.3, 0.1, -0.7}), h).values();
  CHECK(next[0] == 0.5);
  CHECK(next[1] == -1.0);
  CHECK(next[2] == 0.25);
  CHECK(next[3] == 2.0);
  CHECK(nn::gru_sequence(rec, cell, ad::DTensor{}, h).empty());
  CHECK_THROWS(nn::gru_step(rec, cell, rec.constant({1, 2}, {0, 0}), h));
}

TEST_CASE("lstm examples") {
  std::mt19937_64 rng(3);
  ParamStore store;
  const auto cell = nn::LstmCell::create(store, "lstm", 2, 3, rng);
  fill(store, 0.0);
  {
    Record rec(&store);
    const auto s = nn::lstm_step(rec, cell, rec.constant({1, 2}, {1.0, -1.0}), nn::lstm_zero_state(rec, cell));
    for (double v : s.h.values()) CHECK(v == 0.0);
  }
  // Forget gate saturated open, input gate shut: the cell state carries over.
  auto& b = store[cell.b].value;
  for (int j = 0; j < 3; ++j) {
    b[static_cast<std::size_t>(j)] = -1000.0;     // input
    b[static_cast<std::size_t>(3 + j)] = 1000.0;  // forget
  }
  Record rec(&store);
  const nn::LstmState prev{rec.constant({1, 3}, {0.1, 0.2, 0.3}), rec.constant({1, 3}, {0.5, -0.25, 2.0})};
  const auto s = nn::lstm_step(rec, cell, rec.constant({1, 2}, {0.4, 0.9}), prev);
  const auto c = s.c.values();
  CHECK(c[0] == 0.5);
  CHECK(c[1] == -0.25);
  CHECK(c[2] == 2.0);
}
