#include "relcap/selection.hpp"

#include <array>

#include "relcap/error.hpp"
#include "relcap/model.hpp"

namespace relcap::sel {

std::vector<double> grad_inner_products(ad::Record& rec, ad::DTensor s_pred, ad::DTensor vq, ad::DTensor vq_caption,
                                        std::span<const ad::DTensor> caption_nlls) {
  if (!vq.valid() || !vq_caption.valid()) throw Error("grad_inner_products: trace has no V^q node");
  const std::array<ad::DTensor, 1> wrt_answer{vq};
  rec.backward(s_pred, wrt_answer);
  const std::vector<double> ga = rec.grad(vq);

  std::vector<double> g;
  g.reserve(caption_nlls.size());
  const std::array<ad::DTensor, 1> wrt_caption{vq_caption};
  for (const auto& nll : caption_nlls) {
    rec.backward(nll, wrt_caption);
    const std::vector<double> gc = rec.grad(vq_caption);
    // d log p / d v = -d nll / d v
    double dot = 0.0;
    for (std::size_t j = 0; j < ga.size(); ++j) dot -= ga[j] * gc[j];
    g.push_back(dot);
  }
  return g;
}

std::vector<double> grad_inner_products(ad::Record& rec, const ForwardTrace& trace) {
  std::vector<ad::DTensor> nlls;
  nlls.reserve(trace.caption_losses.size());
  for (const auto& c : trace.caption_losses) nlls.push_back(c.nll);
  return grad_inner_products(rec, trace.s_pred, trace.qa.vq, trace.vq_caption, nlls);
}

std::optional<int> select(std::span<const double> g, double xi) {
  if (g.empty()) throw Error("select: no inner products");
  std::optional<int> best;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(g[i] > xi)) continue;
    if (!best || g[i] > g[static_cast<std::size_t>(*best)]) best = static_cast<int>(i);
  }
  return best;
}

SelectionReport run_selection(ad::Record& rec, const ForwardTrace& trace, double xi) {
  SelectionReport r;
  r.xi = xi;
  r.g = grad_inner_products(rec, trace);
  for (std::size_t i = 0; i < r.g.size(); ++i) {
    if (r.g[i] > xi) r.feasible.push_back(static_cast<int>(i));
  }
  r.selected = select(r.g, xi);
  return r;
}

ad::DTensor joint_loss(ad::DTensor vqa_loss, std::span<const ad::DTensor> caption_nlls, std::optional<int> selected) {
  if (!selected) return vqa_loss;
  if (*selected < 0 || static_cast<std::size_t>(*selected) >= caption_nlls.size()) {
    throw Error("joint_loss: selected caption " + std::to_string(*selected) + " out of range");
  }
  return ad::add(vqa_loss, caption_nlls[static_cast<std::size_t>(*selected)]);
}

}  // namespace relcap::sel
