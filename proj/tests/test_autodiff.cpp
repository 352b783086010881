#include <doctest.h>

#include <array>
#include <cmath>
#include <random>

#include "relcap/autodiff.hpp"
#include "relcap/error.hpp"
#include "relcap/gradcheck.hpp"
#include "relcap/params.hpp"

using namespace relcap;
using ad::DTensor;
using ad::Record;

namespace {

std::vector<double> random_values(std::mt19937_64& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = 2.0 * unit_uniform(rng) - 1.0;
  return v;
}

}  // namespace

TEST_CASE("primitive examples") {
  Record rec;
  CHECK(ad::sigmoid(rec.leaf({1, 1}, {0.0})).item() == 0.5);
  const auto sm = ad::softmax(rec.leaf({1, 2}, {0.0, 0.0})).values();
  CHECK(sm[0] == 0.5);
  CHECK(sm[1] == 0.5);

  std::mt19937_64 rng(3);
  const auto x = random_values(rng, 3 * 5);
  const DTensor I = rec.constant({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  const auto y = ad::matmul(I, rec.leaf({3, 5}, x)).values();
  CHECK(std::vector<double>(y.begin(), y.end()) == x);
}

TEST_CASE("backward examples") {
  {
    Record rec;
    const DTensor x = rec.leaf({1, 2}, {1.0, 2.0});
    rec.backward(ad::sum(ad::mul(x, x)));
    CHECK(rec.grad(x) == std::vector<double>{2.0, 4.0});
  }
  {
    Record rec;
    const DTensor a = rec.leaf({1, 1}, {0.0});
    rec.backward(ad::sigmoid(a));
    CHECK(rec.grad(a)[0] == doctest::Approx(0.25).epsilon(1e-15));
  }
}

TEST_CASE("backward errors") {
  Record rec;
  const DTensor x = rec.leaf({1, 2}, {1.0, 2.0});
  CHECK_THROWS_AS(rec.backward(x), ShapeError);
  Record empty;
  CHECK_THROWS_AS(empty.backward(DTensor{}), Error);
}

TEST_CASE("shape errors name the op and both shapes") {
  Record rec;
  const DTensor a = rec.leaf({2, 3}, std::vector<double>(6, 1.0));
  const DTensor b = rec.leaf({2, 3}, std::vector<double>(6, 1.0));
  try {
    ad::matmul(a, b);
    FAIL("expected a shape error");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("[2,3]") != std::string::npos);
  }
  CHECK_THROWS_AS(ad::add(a, rec.leaf({3, 2}, std::vector<double>(6, 1.0))), ShapeError);
  const std::array<int, 1> bad{5};
  CHECK_THROWS_AS(ad::embedding(a, bad), Error);
}

TEST_CASE("unreached nodes get zero gradient") {
  Record rec;
  const DTensor x = rec.leaf({1, 2}, {1.0, 2.0});
  const DTensor unused = rec.leaf({1, 2}, {3.0, 4.0});
  const DTensor side = ad::exp(unused);
  rec.backward(ad::sum(x));
  CHECK(rec.grad(unused) == std::vector<double>{0.0, 0.0});
  CHECK(rec.grad(side) == std::vector<double>{0.0, 0.0});
}

TEST_CASE("restricted backward matches the full sweep on the target") {
  std::mt19937_64 rng(11);
  Record rec;
  const DTensor w = rec.leaf({3, 3}, random_values(rng, 9));
  const DTensor x = rec.leaf({1, 3}, random_values(rng, 3));
  const DTensor h = ad::tanh(ad::matmul(x, w));
  const DTensor loss = ad::sum(ad::mul(ad::sigmoid(ad::matmul(h, w)), h));
  rec.backward(loss);
  const auto full = rec.grad(x);
  const std::array<DTensor, 1> wrt{x};
  rec.backward(loss, wrt);
  CHECK(rec.grad(x) == full);
}

TEST_CASE("every primitive and block matches finite differences") {
  for (const auto& r : gc::run_suite(1234)) {
    INFO(r.name << " worst " << r.worst << " err " << r.max_rel_error);
    CHECK(r.passed);
  }
}

TEST_CASE("backward is linear") {
  std::mt19937_64 rng(5);
  const auto xv = random_values(rng, 6);
  const auto wv = random_values(rng, 6);
  const double a = 0.7;
  const double b = -1.3;
  auto grads = [&](double ca, double cb) {
    Record rec;
    const DTensor x = rec.leaf({2, 3}, xv);
    const DTensor w = rec.constant({2, 3}, wv);
    const DTensor l1 = ad::sum(ad::mul(ad::tanh(x), w));
    const DTensor l2 = ad::sum(ad::exp(ad::mul(x, x)));
    rec.backward(ad::add(ad::scale(l1, ca), ad::scale(l2, cb)));
    return rec.grad(x);
  };
  const auto g1 = grads(1.0, 0.0);
  const auto g2 = grads(0.0, 1.0);
  const auto g = grads(a, b);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(std::abs(g[i] - (a * g1[i] + b * g2[i])) < 1e-10);
}

TEST_CASE("replay is bit-identical") {
  std::mt19937_64 rng(9);
  const auto xv = random_values(rng, 12);
  auto run = [&] {
    Record rec;
    const DTensor x = rec.leaf({3, 4}, xv);
    const DTensor y = ad::log_softmax(ad::matmul(ad::tanh(x), ad::transpose(x)));
    const DTensor loss = ad::sum(ad::mul(y, y));
    rec.backward(loss);
    auto out = rec.grad(x);
    out.push_back(loss.item());
    return out;
  };
  CHECK(run() == run());
}

TEST_CASE("softmax normalization and shift invariance") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    auto v = random_values(rng, 7);
    for (auto& x : v) x *= 20.0;
    Record rec;
    const auto p = ad::softmax(rec.leaf({1, 7}, v)).values();
    double total = 0.0;
    for (double x : p) total += x;
    CHECK(std::abs(total - 1.0) < 1e-12);
    auto shifted = v;
    for (auto& x : shifted) x += 123.456;
    const auto q = ad::softmax(rec.leaf({1, 7}, shifted)).values();
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(std::abs(p[i] - q[i]) < 1e-9);
  }
}

TEST_CASE("log_softmax is computed directly and stays finite") {
  Record rec;
  const auto lp = ad::log_softmax(rec.leaf({1, 2}, {0.0, -1000.0})).values();
  CHECK(lp[0] == doctest::Approx(0.0));
  CHECK(lp[1] == doctest::Approx(-1000.0));
}

TEST_CASE("stop_gradient blocks flow") {
  Record rec;
  const DTensor x = rec.leaf({1, 2}, {1.0, 2.0});
  rec.backward(ad::sum(ad::add(ad::stop_gradient(ad::mul(x, x)), x)));
  CHECK(rec.grad(x) == std::vector<double>{1.0, 1.0});
}

TEST_CASE("max_of routes ties to the earliest argument") {
  Record rec;
  const DTensor a = rec.leaf({1, 2}, {1.0, 5.0});
  const DTensor b = rec.leaf({1, 2}, {1.0, 2.0});
  const std::array<DTensor, 2> parts{a, b};
  rec.backward(ad::sum(ad::max_of(parts)));
  CHECK(rec.grad(a) == std::vector<double>{1.0, 1.0});
  CHECK(rec.grad(b) == std::vector<double>{0.0, 0.0});
}

TEST_CASE("embedding returns rows unchanged and rejects bad indices") {
  Record rec;
  const DTensor table = rec.leaf({3, 2}, {1, 2, 3, 4, 5, 6});
  const std::array<int, 2> idx{2, 0};
  const auto rows = ad::embedding(table, idx).values();
  CHECK(std::vector<double>(rows.begin(), rows.end()) == std::vector<double>{5, 6, 1, 2});
  const std::array<int, 1> neg{-1};
  CHECK_THROWS(ad::embedding(table, neg));
}

TEST_CASE("finite checking catches NaN when enabled") {
  Record rec;
  rec.set_check_finite(true);
  const DTensor x = rec.leaf({1, 1}, {-1.0});
  CHECK_THROWS_AS(ad::log(x), NumericError);
}
