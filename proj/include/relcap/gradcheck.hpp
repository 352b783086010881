#pragma once

// Central finite-difference checks of recorded gradients, shared by the
// test suite and the `gradcheck` command.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "relcap/autodiff.hpp"
#include "relcap/model.hpp"

namespace relcap::gc {

struct CheckResult {
  std::string name;
  int checked = 0;
  double max_rel_error = 0.0;
  std::string worst;  // where max_rel_error occurred
  bool passed = true;
};

struct Tolerance {
  double step = 1e-5;
  double rel = 1e-4;
  // Relative error is |a - n| / max(|a|, |n|, floor); the floor keeps
  // entries whose true gradient is ~0 from comparing round-off to round-off.
  double floor = 1e-6;
};

double relative_error(double analytic, double numeric, double floor);

// `build` creates the loss on a fresh record (bound to `params`, if given)
// whose inputs are the given leaf values; checks d loss / d inputs.
using LeafLoss = std::function<ad::DTensor(ad::Record&, const std::vector<ad::DTensor>&)>;
CheckResult check_leaves(const std::string& name, std::vector<std::vector<double>> values,
                         const std::vector<ad::Shape>& shapes, const LeafLoss& build, const Tolerance& tol = {},
                         const ParamStore* params = nullptr);

// Checks d loss / d every entry of every parameter in `store`.
using ParamLoss = std::function<ad::DTensor(ad::Record&)>;
CheckResult check_params(const std::string& name, ParamStore& store, const ParamLoss& build,
                         const Tolerance& tol = {});

// Small joint-model rig: tiny vocabulary, K objects of dimension D, C
// captions of at most T words, N answers, all hidden sizes `hidden`.
struct TinyRig {
  Model model;
  ExampleInput input;
};
TinyRig make_tiny_rig(std::uint64_t seed, int K = 3, int D = 4, int hidden = 5, int C = 2, int T = 4, int N = 3);

// Joint loss L^vqa + L^c_{i*} for the rig, with i* chosen at the current
// parameters (so the finite-difference probes see a fixed selection).
ad::DTensor joint_loss_fixed(ad::Record& rec, const Model& model, const ExampleInput& in, int selected,
                             ad::DTensor* vq_leaf = nullptr, const std::vector<double>* vq_values = nullptr);

// Joint loss of the rig w.r.t. every parameter, then every v^q_k.
std::vector<CheckResult> check_joint_loss(TinyRig& rig, const Tolerance& tol = {});

// Every primitive, the fc / GRU / LSTM blocks and the full joint loss
// (parameters and V^q) on randomized small inputs.
std::vector<CheckResult> run_suite(std::uint64_t seed, const Tolerance& tol = {});

}  // namespace relcap::gc
