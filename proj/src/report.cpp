#include "relcap/report.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "relcap/error.hpp"

namespace relcap::report {

namespace {

constexpr double kWidth = 640, kHeight = 400, kLeft = 70, kRight = 160, kTop = 40, kBottom = 50;
const char* const kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

const char* color(std::size_t i) { return kColors[i % std::size(kColors)]; }

std::string header(const std::string& title) {
  return fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\" "
      "font-family=\"sans-serif\" font-size=\"12\">\n"
      "<rect width=\"{0}\" height=\"{1}\" fill=\"white\"/>\n"
      "<text x=\"{2}\" y=\"24\" font-size=\"15\" text-anchor=\"middle\">{3}</text>\n",
      kWidth, kHeight, (kLeft + kWidth - kRight) / 2, escape(title));
}

// Axes with five y ticks between lo and hi.
std::string axes(double lo, double hi, const std::string& y_label, const std::string& x_label) {
  const double x1 = kWidth - kRight, y1 = kHeight - kBottom;
  std::string s = fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\"/>\n", kLeft, kTop, y1);
  s += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"black\"/>\n", kLeft, y1, x1);
  for (int i = 0; i <= 4; ++i) {
    const double v = lo + (hi - lo) * i / 4.0;
    const double y = y1 - (y1 - kTop) * i / 4.0;
    s += fmt::format("<line x1=\"{0:.1f}\" y1=\"{1:.1f}\" x2=\"{2:.1f}\" y2=\"{1:.1f}\" stroke=\"#ddd\"/>\n", kLeft, y, x1);
    s += fmt::format("<text x=\"{0:.1f}\" y=\"{1:.1f}\" text-anchor=\"end\">{2:.3g}</text>\n", kLeft - 6, y + 4, v);
  }
  s += fmt::format("<text x=\"16\" y=\"{0:.1f}\" transform=\"rotate(-90 16 {0:.1f})\" text-anchor=\"middle\">{1}</text>\n",
                   (kTop + y1) / 2, escape(y_label));
  s += fmt::format("<text x=\"{0:.1f}\" y=\"{1:.1f}\" text-anchor=\"middle\">{2}</text>\n", (kLeft + x1) / 2,
                   kHeight - 12, escape(x_label));
  return s;
}

std::string legend(const std::vector<std::string>& names) {
  std::string s;
  for (std::size_t i = 0; i < names.size(); ++i) {
    const double y = kTop + 10 + 20.0 * static_cast<double>(i);
    s += fmt::format("<rect x=\"{0}\" y=\"{1:.1f}\" width=\"14\" height=\"4\" fill=\"{2}\"/>\n", kWidth - kRight + 14,
                     y - 4, color(i));
    s += fmt::format("<text x=\"{0}\" y=\"{1:.1f}\">{2}</text>\n", kWidth - kRight + 34, y, escape(names[i]));
  }
  return s;
}

std::string cell(double v) { return std::isnan(v) ? "n/a" : fmt::format("{:.4f}", v); }

}  // namespace

std::string line_chart(const std::string& title, const std::string& y_label, const std::vector<Run>& runs,
                       const std::function<double(const EpochMetrics&)>& value) {
  if (runs.empty()) throw DataError("report: no runs to plot");
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  std::size_t longest = 1;
  for (const auto& r : runs) {
    if (r.rows.empty()) throw DataError("report: run " + r.id + " has no metrics rows");
    longest = std::max(longest, r.rows.size());
    for (const auto& m : r.rows) {
      const double v = value(m);
      if (std::isfinite(v)) lo = std::min(lo, v), hi = std::max(hi, v);
    }
  }
  if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
  if (hi - lo < 1e-12) lo -= 0.5, hi += 0.5;
  const double x1 = kWidth - kRight, y1 = kHeight - kBottom;
  const auto px = [&](std::size_t i) {
    return longest == 1 ? kLeft : kLeft + (x1 - kLeft) * static_cast<double>(i) / static_cast<double>(longest - 1);
  };
  const auto py = [&](double v) { return y1 - (y1 - kTop) * (v - lo) / (hi - lo); };

  std::string s = header(title) + axes(lo, hi, y_label, "epoch");
  std::vector<std::string> names;
  for (std::size_t k = 0; k < runs.size(); ++k) {
    names.push_back(runs[k].id);
    std::string pts;
    auto flush = [&] {
      if (!pts.empty()) {
        s += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"2\" points=\"{}\"/>\n", color(k), pts);
      }
      pts.clear();
    };
    for (std::size_t i = 0; i < runs[k].rows.size(); ++i) {
      const double v = value(runs[k].rows[i]);
      if (!std::isfinite(v)) {
        flush();
        continue;
      }
      if (!pts.empty()) pts += ' ';
      pts += fmt::format("{:.2f},{:.2f}", px(i), py(v));
    }
    flush();
  }
  return s + legend(names) + "</svg>\n";
}

std::string emd_bars(const std::vector<EmdSummary>& emds) {
  if (emds.empty()) throw DataError("report: no EMD summaries");
  double hi = 0.0;
  for (const auto& e : emds) {
    for (double v : {e.caa, e.no_caa}) {
      if (std::isfinite(v)) hi = std::max(hi, v);
    }
  }
  if (hi <= 0.0) hi = 1.0;
  const double x1 = kWidth - kRight, y1 = kHeight - kBottom;
  const double group = (x1 - kLeft) / static_cast<double>(emds.size());
  const double bar = group * 0.35;
  std::string s = header("Mean EMD to attention truth") + axes(0.0, hi, "mean EMD (cells)", "run");
  for (std::size_t i = 0; i < emds.size(); ++i) {
    const double gx = kLeft + group * static_cast<double>(i);
    const double vals[2] = {emds[i].no_caa, emds[i].caa};
    for (int b = 0; b < 2; ++b) {
      if (!std::isfinite(vals[b])) continue;
      const double h = (y1 - kTop) * vals[b] / hi;
      s += fmt::format("<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" fill=\"{}\"/>\n",
                       gx + group * 0.15 + bar * b, y1 - h, bar, h, color(static_cast<std::size_t>(b)));
    }
    s += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"middle\">{}</text>\n", gx + group / 2, y1 + 16,
                     escape(emds[i].id));
  }
  return s + legend({"w/o CAA", "w CAA"}) + "</svg>\n";
}

std::string summary_markdown(const std::vector<Run>& runs, const std::vector<EmdSummary>& emds) {
  std::string s = "# Run summary\n\n";
  if (!runs.empty()) {
    s += "| run | epochs | final train loss | final val soft acc | best val soft acc | final planted recovery |\n";
    s += "|---|---|---|---|---|---|\n";
    for (const auto& r : runs) {
      double best = std::numeric_limits<double>::quiet_NaN();
      for (const auto& m : r.rows) {
        if (std::isfinite(m.val_soft_acc) && !(best >= m.val_soft_acc)) best = m.val_soft_acc;
      }
      const auto& last = r.rows.back();
      s += fmt::format("| {} | {} | {} | {} | {} | {} |\n", r.id, r.rows.size(), cell(last.train_loss),
                       cell(last.val_soft_acc), cell(best), cell(last.planted_recovery));
    }
    s += "\n";
  }
  if (!emds.empty()) {
    s += "| run | w/o CAA mean EMD | w CAA mean EMD |\n|---|---|---|\n";
    for (const auto& e : emds) s += fmt::format("| {} | {} | {} |\n", e.id, cell(e.no_caa), cell(e.caa));
    s += "\n";
  }
  return s;
}

}  // namespace relcap::report
