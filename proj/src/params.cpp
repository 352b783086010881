#include "relcap/params.hpp"

#include <cmath>
#include <cstring>
#include <numbers>

#include "relcap/error.hpp"

namespace relcap {

int ParamStore::add(const std::string& name, ad::Shape shape, Init init, std::mt19937_64& rng) {
  if (index_.contains(name)) throw Error("ParamStore: duplicate parameter " + name);
  Parameter p{name, shape, std::vector<double>(shape.size(), 0.0)};
  if (init == Init::kGlorotUniform) {
    const double limit = std::sqrt(6.0 / static_cast<double>(shape.rows + shape.cols));
    for (double& v : p.value) v = (2.0 * unit_uniform(rng) - 1.0) * limit;
  }
  params_.push_back(std::move(p));
  const int id = static_cast<int>(params_.size()) - 1;
  index_.emplace(name, id);
  return id;
}

int ParamStore::find(const std::string& name) const {
  const auto it = index_.find(name);
  return it == index_.end() ? -1 : it->second;
}

const Parameter& ParamStore::at(const std::string& name) const {
  const int i = find(name);
  if (i < 0) throw Error("ParamStore: no parameter named " + name);
  return params_[static_cast<std::size_t>(i)];
}

Parameter& ParamStore::at(const std::string& name) {
  const int i = find(name);
  if (i < 0) throw Error("ParamStore: no parameter named " + name);
  return params_[static_cast<std::size_t>(i)];
}

std::size_t ParamStore::total_size() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

std::uint64_t ParamStore::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* data, std::size_t len) {
    const auto* b = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& p : params_) {
    mix(p.name.data(), p.name.size());
    mix(&p.shape.rows, sizeof(int));
    mix(&p.shape.cols, sizeof(int));
    mix(p.value.data(), p.value.size() * sizeof(double));
  }
  return h;
}

ParamGrads::ParamGrads(const ParamStore& store) {
  grads_.reserve(static_cast<std::size_t>(store.size()));
  for (const auto& p : store) grads_.emplace_back(p.value.size(), 0.0);
}

void ParamGrads::zero() {
  for (auto& g : grads_) std::fill(g.begin(), g.end(), 0.0);
}

void ParamGrads::accumulate(const ad::Record& rec, double weight) {
  for (const auto& [index, node_id] : rec.param_nodes()) {
    const auto& node = rec.node(node_id);
    if (node.grad.empty()) continue;
    auto& dst = grads_.at(static_cast<std::size_t>(index));
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += weight * node.grad[i];
  }
}

void ParamGrads::add(const ParamGrads& other, double weight) {
  for (std::size_t p = 0; p < grads_.size(); ++p) {
    for (std::size_t i = 0; i < grads_[p].size(); ++i) grads_[p][i] += weight * other.grads_[p][i];
  }
}

void ParamGrads::scale(double s) {
  for (auto& g : grads_) {
    for (double& v : g) v *= s;
  }
}

double ParamGrads::norm() const {
  double total = 0.0;
  for (const auto& g : grads_) {
    for (double v : g) total += v * v;
  }
  return std::sqrt(total);
}

double standard_normal(std::mt19937_64& rng) {
  double u1 = unit_uniform(rng);
  while (u1 <= 0.0) u1 = unit_uniform(rng);
  const double u2 = unit_uniform(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace relcap
