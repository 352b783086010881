#pragma once

#include <cstdint>
#include <vector>

#include "relcap/params.hpp"

namespace relcap {

// m <- b1 m + (1 - b1) g;  u <- max(b2 u, |g|);  theta <- theta - lr / (1 - b1^t) * m / (u + eps)
struct AdaMax {
  double lr = 0.002;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step_count = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> u;

  AdaMax() = default;
  AdaMax(const ParamStore& store, double lr, double beta1, double beta2, double eps);

  // Throws NumericError naming the parameter if a gradient is not finite;
  // nothing is modified in that case.
  void step(ParamStore& store, const ParamGrads& grads);
};

}  // namespace relcap
