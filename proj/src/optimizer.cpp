#include "relcap/optimizer.hpp"

#include <algorithm>
#include <cmath>

#include "relcap/error.hpp"

namespace relcap {

AdaMax::AdaMax(const ParamStore& store, double lr_, double beta1_, double beta2_, double eps_)
    : lr(lr_), beta1(beta1_), beta2(beta2_), eps(eps_) {
  for (const auto& p : store) {
    m.emplace_back(p.value.size(), 0.0);
    u.emplace_back(p.value.size(), 0.0);
  }
}

void AdaMax::step(ParamStore& store, const ParamGrads& grads) {
  if (grads.size() != store.size() || static_cast<int>(m.size()) != store.size()) {
    throw Error("adamax: gradient / state layout does not match the parameters");
  }
  for (int i = 0; i < store.size(); ++i) {
    for (double g : grads[i]) {
      if (!std::isfinite(g)) throw NumericError("adamax: non-finite gradient in parameter " + store[i].name);
    }
  }
  ++step_count;
  const double step_size = lr / (1.0 - std::pow(beta1, static_cast<double>(step_count)));
  for (int i = 0; i < store.size(); ++i) {
    auto& theta = store[i].value;
    const auto& g = grads[i];
    auto& mi = m[static_cast<std::size_t>(i)];
    auto& ui = u[static_cast<std::size_t>(i)];
    for (std::size_t j = 0; j < theta.size(); ++j) {
      mi[j] = beta1 * mi[j] + (1.0 - beta1) * g[j];
      ui[j] = std::max(beta2 * ui[j], std::abs(g[j]));
      theta[j] -= step_size * mi[j] / (ui[j] + eps);
    }
  }
}

}  // namespace relcap
