#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "relcap/autodiff.hpp"

namespace relcap {

struct Parameter {
  std::string name;
  ad::Shape shape;
  std::vector<double> value;
};

// All learnable weights of a model, addressed by index or by dotted name
// ("vqa.attn_caption.W"). Registration order is stable and defines both
// initialization order and checkpoint layout.
class ParamStore {
 public:
  enum class Init { kZero, kGlorotUniform };

  int add(const std::string& name, ad::Shape shape, Init init, std::mt19937_64& rng);

  [[nodiscard]] int size() const { return static_cast<int>(params_.size()); }
  [[nodiscard]] const Parameter& operator[](int i) const { return params_[static_cast<std::size_t>(i)]; }
  [[nodiscard]] Parameter& operator[](int i) { return params_[static_cast<std::size_t>(i)]; }
  [[nodiscard]] int find(const std::string& name) const;  // -1 when absent
  [[nodiscard]] const Parameter& at(const std::string& name) const;
  [[nodiscard]] Parameter& at(const std::string& name);
  [[nodiscard]] std::size_t total_size() const;

  // FNV-1a over names, shapes and value bytes.
  [[nodiscard]] std::uint64_t hash() const;

  [[nodiscard]] auto begin() const { return params_.begin(); }
  [[nodiscard]] auto end() const { return params_.end(); }

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, int> index_;
};

// Gradient buffers aligned with a ParamStore.
class ParamGrads {
 public:
  ParamGrads() = default;
  explicit ParamGrads(const ParamStore& store);

  void zero();
  // Adds the parameter gradients left in `rec` by its last backward sweep.
  void accumulate(const ad::Record& rec, double weight = 1.0);
  void add(const ParamGrads& other, double weight = 1.0);
  void scale(double s);
  [[nodiscard]] double norm() const;

  [[nodiscard]] int size() const { return static_cast<int>(grads_.size()); }
  [[nodiscard]] std::vector<double>& operator[](int i) { return grads_[static_cast<std::size_t>(i)]; }
  [[nodiscard]] const std::vector<double>& operator[](int i) const { return grads_[static_cast<std::size_t>(i)]; }

 private:
  std::vector<std::vector<double>> grads_;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent stream seeds for each purpose (init, shuffling, sampling, ...).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0) {
  return splitmix64(splitmix64(seed ^ splitmix64(stream)) ^ index);
}

// Uniform double in [0, 1) built from the top 53 bits of one draw; unlike
// std::uniform_real_distribution this is identical across standard libraries.
inline double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Standard normal via Box-Muller on unit_uniform draws.
double standard_normal(std::mt19937_64& rng);

// Fisher-Yates shuffle driven by unit_uniform.
template <typename T>
void shuffle_in_place(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(unit_uniform(rng) * static_cast<double>(i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace relcap
