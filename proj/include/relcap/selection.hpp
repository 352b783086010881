#pragma once

// Per-example choice of the gold caption whose likelihood gradient at V^q
// best agrees with the gradient of the predicted answer's score, and the
// joint loss built from it.

#include <optional>
#include <span>
#include <vector>

#include "relcap/autodiff.hpp"

namespace relcap {
struct ForwardTrace;
}

namespace relcap::sel {

struct SelectionReport {
  std::vector<double> g;
  double xi = 0.0;
  std::optional<int> selected;
  std::vector<int> feasible;
};

// g_i = sum_k <d s_pred / d v^q_k, d log p(caption_i) / d v^q_k>. `vq` is the
// node s_pred is differentiated against and `vq_caption` the one the caption
// losses are (the same node unless the captioner sees a stop-gradient copy).
// Only sweeps restricted to the descendants of those nodes are run.
std::vector<double> grad_inner_products(ad::Record& rec, ad::DTensor s_pred, ad::DTensor vq, ad::DTensor vq_caption,
                                        std::span<const ad::DTensor> caption_nlls);
std::vector<double> grad_inner_products(ad::Record& rec, const ForwardTrace& trace);

// Smallest index attaining the maximum over {i : g_i > xi}.
std::optional<int> select(std::span<const double> g, double xi);

SelectionReport run_selection(ad::Record& rec, const ForwardTrace& trace, double xi);

// L^vqa, plus the selected caption's loss when there is one.
ad::DTensor joint_loss(ad::DTensor vqa_loss, std::span<const ad::DTensor> caption_nlls, std::optional<int> selected);

}  // namespace relcap::sel
