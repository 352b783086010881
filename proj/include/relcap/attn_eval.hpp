#pragma once

// Attention faithfulness: per-object attention of a trained model
// rasterized onto the record's boxes and compared to attention truth.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

#include "relcap/attention_grid.hpp"
#include "relcap/model.hpp"

namespace relcap::attn {

// Attention over the example's valid objects, normalized to sum to 1.
// With caa the question attention is reweighted by the caption-conditioned
// weights; without it those weights are all 1.0.
std::vector<double> object_attention(const Model& model, const ExampleInput& in, bool caa);

struct AttentionRow {
  std::int64_t example = 0;
  double emd = 0.0;
};

struct AttentionReport {
  bool caa = true;
  std::vector<AttentionRow> rows;
  double mean = 0.0;  // NaN when no record was usable
  int skipped = 0;    // records without attention truth or boxes
};

// records[i] and inputs[i] describe the same example.
AttentionReport evaluate_attention(const Model& model, std::span<const data::ExampleRecord> records,
                                   std::span<const ExampleInput> inputs, bool caa, int threads);

void write_attention_csv(const std::filesystem::path& path, const AttentionReport& report);
nlohmann::json attention_summary(const AttentionReport& report);

}  // namespace relcap::attn
