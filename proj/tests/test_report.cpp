#include <doctest.h>

#include <cmath>

#include "relcap/config.hpp"
#include "relcap/error.hpp"
#include "relcap/report.hpp"

using namespace relcap;
using nlohmann::json;

namespace {

std::vector<EpochMetrics> rows(int n, double offset) {
  std::vector<EpochMetrics> out;
  for (int i = 0; i < n; ++i) {
    EpochMetrics m;
    m.epoch = i + 1;
    m.train_loss = 5.0 - i + offset;
    m.val_soft_acc = 0.3 + 0.05 * i;
    m.planted_recovery = i == 1 ? std::nan("") : 0.2 + 0.1 * i;
    out.push_back(m);
  }
  return out;
}

}  // namespace

TEST_CASE("report charts") {
  const std::vector<report::Run> runs{{"with-captions", rows(4, 0.0)}, {"ablated", rows(3, 1.0)}};
  const auto loss = [](const EpochMetrics& m) { return m.train_loss; };
  const auto svg = report::line_chart("Training loss", "loss", runs, loss);
  CHECK(svg == report::line_chart("Training loss", "loss", runs, loss));
  CHECK(svg.find(">with-captions</text>") != std::string::npos);
  CHECK(svg.find(">ablated</text>") != std::string::npos);
  CHECK(svg.rfind("<svg", 0) == 0);

  // the NaN epoch splits the planted curve of each run into two polylines
  const auto planted = report::line_chart("p", "rate", runs, [](const EpochMetrics& m) { return m.planted_recovery; });
  std::size_t lines = 0;
  for (auto at = planted.find("<polyline"); at != std::string::npos; at = planted.find("<polyline", at + 1)) ++lines;
  CHECK(lines == 4);

  CHECK_THROWS_AS(report::line_chart("x", "y", {}, loss), DataError);
  CHECK_THROWS_AS(report::line_chart("x", "y", {{"empty", {}}}, loss), DataError);
  const std::vector<report::Run> odd{{"a<b", rows(2, 0.0)}};
  CHECK(report::line_chart("x", "y", odd, loss).find("a&lt;b") != std::string::npos);
}

TEST_CASE("report summary lists both EMD arms") {
  const std::vector<report::EmdSummary> emds{{"synthetic", 2.25, 2.5}, {"plain", std::nan(""), 2.75}};
  const auto md = report::summary_markdown({{"r", rows(3, 0.0)}}, emds);
  CHECK(md.find("| run | w/o CAA mean EMD | w CAA mean EMD |") != std::string::npos);
  CHECK(md.find("| synthetic | 2.5000 | 2.2500 |") != std::string::npos);
  CHECK(md.find("| plain | 2.7500 | n/a |") != std::string::npos);
  CHECK(md.find("| r | 3 | 3.0000 | 0.4000 | 0.4000 | 0.4000 |") != std::string::npos);
  const auto bars = report::emd_bars(emds);
  CHECK(bars == report::emd_bars(emds));
  CHECK(bars.find(">w/o CAA</text>") != std::string::npos);
  CHECK_THROWS_AS(report::emd_bars({}), DataError);
}

TEST_CASE("config keys") {
  const RunConfig dotted = apply_config_json({}, json{{"train.lr", 0.01}, {"data.num_captions", 3}});
  const RunConfig nested = apply_config_json({}, json{{"train", {{"lr", 0.01}}}, {"data", {{"num_captions", 3}}}});
  CHECK(dotted.train.lr == 0.01);
  CHECK(dotted.data.num_captions == 3);
  CHECK(config_to_json(dotted) == config_to_json(nested));

  CHECK_THROWS_AS(apply_config_json({}, json{{"train.learning_rate", 0.1}}), ConfigError);
  CHECK_THROWS_AS(apply_config_json({}, json{{"train.lr", 0.1}, {"train", {{"lr", 0.2}}}}), ConfigError);
  CHECK_THROWS_AS(apply_config_json({}, json{{"train.lr", "fast"}}), ConfigError);
  CHECK_THROWS_AS(apply_config_json({}, json{{"model.gate", "diagonal"}}), ConfigError);
  CHECK_THROWS_AS(apply_config_json({}, json::array()), ConfigError);

  // every default appears in the expansion and reads back unchanged
  const RunConfig defaults;
  const json all = config_to_json(defaults);
  CHECK(all.at("train").at("batch_size") == 32);
  CHECK(all.at("select").at("xi") == 0.0);
  CHECK(all.at("phase2").at("lr_scale") == 0.25);
  CHECK(config_to_json(apply_config_json({}, all)) == all);

  RunConfig bad;
  bad.data.num_captions = 1;
  CHECK_THROWS_AS(validate_config(bad), ConfigError);
  CHECK_NOTHROW(validate_config(defaults));
}
