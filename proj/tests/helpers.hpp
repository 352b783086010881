#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "relcap/model.hpp"
#include "relcap/params.hpp"

namespace relcap::test {

inline ModelConfig tiny_config(int vocab = 12, int answers = 4) {
  ModelConfig c;
  c.vocab_size = vocab;
  c.num_answers = answers;
  c.feature_dim = 4;
  c.question_embed = 5;
  c.question_hidden = 6;
  c.word_dim = 5;
  c.caption_hidden = 6;
  c.attention_hidden = 5;
  c.decoder_embed = 5;
  c.decoder_hidden = 6;
  c.decoder_attention = 5;
  return c;
}

inline std::vector<double> random_values(std::mt19937_64& rng, std::size_t n, double scale = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = scale * (2.0 * unit_uniform(rng) - 1.0);
  return v;
}

inline void fill_param(ParamStore& store, int index, double value) {
  auto& v = store[index].value;
  std::fill(v.begin(), v.end(), value);
}

inline std::vector<double> to_vec(ad::DTensor t) {
  const auto v = t.values();
  return {v.begin(), v.end()};
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace relcap::test
