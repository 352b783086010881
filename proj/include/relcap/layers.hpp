#pragma once

#include <random>
#include <span>
#include <string>
#include <vector>

#include "relcap/autodiff.hpp"
#include "relcap/params.hpp"

namespace relcap::nn {

using ad::DTensor;

// f(x) = LReLU(x W + b). Each call site owns its own instance.
struct FcLayer {
  int in = 0;
  int out = 0;
  int weight = -1;
  int bias = -1;

  static FcLayer create(ParamStore& store, const std::string& name, int in, int out, std::mt19937_64& rng);
};

// Plain affine map x W + b (no rectifier).
struct Affine {
  int in = 0;
  int out = 0;
  int weight = -1;
  int bias = -1;

  static Affine create(ParamStore& store, const std::string& name, int in, int out, std::mt19937_64& rng);
};

// z = sigmoid(x W_z + h U_z + b_z), r = sigmoid(x W_r + h U_r + b_r),
// n = tanh(x W_h + (r * h) U_h + b_h), h' = (1 - z) * h + z * n.
// W packs [z | r | h] blocks; U_zr packs [z | r].
struct GruCell {
  int in = 0;
  int hidden = 0;
  int w = -1;     // in x 3H
  int u_zr = -1;  // H x 2H
  int u_h = -1;   // H x H
  int b = -1;     // 1 x 3H

  static GruCell create(ParamStore& store, const std::string& name, int in, int hidden, std::mt19937_64& rng);
};

// Gates packed [input | forget | cell | output] in W (in x 4H) and U (H x 4H).
struct LstmCell {
  int in = 0;
  int hidden = 0;
  int w = -1;
  int u = -1;
  int b = -1;

  static LstmCell create(ParamStore& store, const std::string& name, int in, int hidden, std::mt19937_64& rng);
};

struct LstmState {
  DTensor h;
  DTensor c;
};

struct EmbeddingTable {
  int vocab = 0;
  int dim = 0;
  int table = -1;

  static EmbeddingTable create(ParamStore& store, const std::string& name, int vocab, int dim, std::mt19937_64& rng);
};

DTensor fc(ad::Record& rec, const FcLayer& layer, DTensor x, double slope);
DTensor affine(ad::Record& rec, const Affine& layer, DTensor x);

DTensor gru_step(ad::Record& rec, const GruCell& cell, DTensor x, DTensor h_prev);
// Precomputed input projection variant: `xw` is x W + b (1 x 3H).
DTensor gru_step_projected(ad::Record& rec, const GruCell& cell, DTensor xw, DTensor h_prev);
// Folds gru_step over the rows of `xs` (T x in) starting at h0 and returns
// every hidden state. An empty sequence (xs invalid) returns {}.
std::vector<DTensor> gru_sequence(ad::Record& rec, const GruCell& cell, DTensor xs, DTensor h0);

LstmState lstm_step(ad::Record& rec, const LstmCell& cell, DTensor x, const LstmState& prev);
LstmState lstm_zero_state(ad::Record& rec, const LstmCell& cell);

DTensor embed(ad::Record& rec, const EmbeddingTable& table, std::span<const int> indices);

}  // namespace relcap::nn
