#include "relcap/attn_eval.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "relcap/error.hpp"
#include "relcap/io.hpp"
#include "relcap/parallel.hpp"

namespace relcap::attn {

std::vector<double> object_attention(const Model& model, const ExampleInput& in, bool caa) {
  if (caa && !model.cfg.use_caa) throw ConfigError("model was trained without caption attention adjustment");
  if (caa && in.caption_tokens.empty()) throw DataError("example " + std::to_string(in.id) + " has no captions");
  ad::Record rec(&model.store);
  ForwardOptions opts;
  opts.caption_losses = false;
  const ForwardTrace tr = forward(rec, model, in, opts);
  const auto qa = tr.qa.alpha.values();
  std::vector<double> w(qa.begin(), qa.end());
  if (caa) {
    const auto& a = tr.adjusted.alpha.values();
    for (std::size_t k = 0; k < w.size(); ++k) w[k] *= a[k];
  }
  double total = 0.0;
  for (double x : w) total += x;
  if (!(total > 0.0)) throw NumericError("example " + std::to_string(in.id) + " has zero attention mass");
  for (double& x : w) x /= total;
  return w;
}

AttentionReport evaluate_attention(const Model& model, std::span<const data::ExampleRecord> records,
                                   std::span<const ExampleInput> inputs, bool caa, int threads) {
  if (records.size() != inputs.size()) {
    throw DataError("attention evaluation needs one input per record (" + std::to_string(records.size()) + " vs " +
                    std::to_string(inputs.size()) + ")");
  }
  const int n = static_cast<int>(records.size());
  std::vector<double> emds(records.size(), std::numeric_limits<double>::quiet_NaN());
  parallel_for(n, threads, [&](int i) {
    const auto& r = records[static_cast<std::size_t>(i)];
    const auto& in = inputs[static_cast<std::size_t>(i)];
    if (!r.attention_truth || r.boxes.size() != static_cast<std::size_t>(in.rows())) return;
    AttentionGrid truth;
    if (r.attention_truth->size() != truth.cells.size()) {
      throw DataError("record " + std::to_string(i) + ": attention truth needs " + std::to_string(truth.cells.size()) + " cells");
    }
    truth.cells = *r.attention_truth;
    truth.normalize();
    const auto w = object_attention(model, in, caa);
    emds[static_cast<std::size_t>(i)] = emd(rasterize(r.boxes, w), truth);
  });

  AttentionReport rep;
  rep.caa = caa;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double e = emds[static_cast<std::size_t>(i)];
    if (std::isnan(e)) {
      ++rep.skipped;
      continue;
    }
    rep.rows.push_back({inputs[static_cast<std::size_t>(i)].id, e});
    sum += e;
  }
  rep.mean = rep.rows.empty() ? std::numeric_limits<double>::quiet_NaN() : sum / static_cast<double>(rep.rows.size());
  return rep;
}

void write_attention_csv(const std::filesystem::path& path, const AttentionReport& report) {
  std::ostringstream os;
  os << "example_id,emd,caa_flag\n" << std::setprecision(17);
  for (const auto& r : report.rows) os << r.example << ',' << r.emd << ',' << (report.caa ? 1 : 0) << '\n';
  io::write_file_atomic(path, os.str());
}

nlohmann::json attention_summary(const AttentionReport& report) {
  return {{"mean", std::isnan(report.mean) ? nlohmann::json(nullptr) : nlohmann::json(report.mean)},
          {"count", report.rows.size()},
          {"skipped", report.skipped},
          {"caa", report.caa}};
}

}  // namespace relcap::attn
