#pragma once

// AdaMax training with online caption selection, the two-phase schedule
// (gold captions, then generated ones at a reduced learning rate),
// validation metrics and resumable checkpoints.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "relcap/config.hpp"
#include "relcap/model.hpp"
#include "relcap/optimizer.hpp"

namespace relcap {

// Encoded model inputs for a split.
std::vector<ExampleInput> encode_inputs(std::span<const data::ExampleRecord> records, const data::Vocabs& vocabs,
                                        const RunConfig& cfg);

struct PreparedData {
  data::Vocabs vocabs;
  std::vector<ExampleInput> train;  // first train.limit examples when the limit is set
  std::vector<ExampleInput> val;
  ModelConfig model;  // cfg.model with vocabulary, answer and feature sizes filled in
};
// Vocabularies come from the training split unless given.
PreparedData prepare_data(const RunConfig& cfg, const data::SplitDataset& ds, const data::Vocabs* vocabs = nullptr);

struct EpochMetrics {
  int epoch = 0;  // 1-based within the phase
  int phase = 1;
  double train_loss = 0.0;
  double val_soft_acc = 0.0;
  double feasible_rate = 0.0;
  double planted_recovery = 0.0;  // NaN when no feasible example has a planted caption
  double mean_inner_product = 0.0;
  friend bool operator==(const EpochMetrics&, const EpochMetrics&) = default;
};

struct EvalResult {
  double soft_acc = 0.0;
  int count = 0;
  std::map<std::string, double> type_acc;  // by question type name
  std::map<std::string, int> type_count;
  // Selection over each example's captions; only when captions are used.
  int feasible = 0;
  int planted_known = 0;  // feasible examples with a planted caption
  int planted_hits = 0;
  double feasible_rate = 0.0;
  double planted_recovery = 0.0;
  double mean_inner_product = 0.0;  // mean selected g over feasible examples
  std::vector<int> predictions;
  std::vector<int> selected;  // -1 when infeasible
};

EvalResult evaluate(const Model& model, std::span<const ExampleInput> examples, double xi, bool with_selection,
                    int threads);

struct TrainerState {
  int phase = 1;
  int epoch = 0;  // completed epochs in the current phase
  int batch = 0;  // next batch index within the running epoch
  double loss_sum = 0.0;
  std::int64_t loss_count = 0;
  std::int64_t clipped_steps = 0;
  double phase1_lr = 0.0;
  std::vector<EpochMetrics> history;
};

struct StepResult {
  double loss = 0.0;  // mean joint loss over the batch
  int feasible = 0;
  bool clipped = false;
};

class Trainer {
 public:
  Trainer(Model& model, RunConfig cfg, std::vector<ExampleInput> train, std::vector<ExampleInput> val);

  // One update on the given training examples (indices into the train set).
  StepResult step_on(std::span<const int> batch);
  // Next batch of the current epoch's shuffled order.
  StepResult train_step();
  [[nodiscard]] bool epoch_complete() const;
  [[nodiscard]] int batches_per_epoch() const;
  // Validation pass, metrics row appended to the history, counters reset.
  EpochMetrics end_epoch();
  EpochMetrics run_epoch();

  // Phase 2: learning rate scaled by phase2.lr_scale, epoch counters reset.
  void begin_phase2();
  void set_examples(std::vector<ExampleInput> train, std::vector<ExampleInput> val);

  [[nodiscard]] const TrainerState& state() const { return state_; }
  [[nodiscard]] const AdaMax& optimizer() const { return opt_; }
  [[nodiscard]] const RunConfig& config() const { return cfg_; }
  [[nodiscard]] Model& model() { return model_; }
  [[nodiscard]] const std::vector<ExampleInput>& train_examples() const { return train_; }
  [[nodiscard]] const std::vector<ExampleInput>& val_examples() const { return val_; }
  [[nodiscard]] std::vector<int> epoch_order(int phase, int epoch) const;

  // Binary checkpoint: "RCAP", u32 version, u64 manifest length, manifest
  // JSON, then for each array u32 name length, name, u64 count and
  // little-endian doubles.
  [[nodiscard]] std::string checkpoint_bytes(std::uint64_t vocab_hash) const;
  void save_checkpoint(const std::filesystem::path& path, std::uint64_t vocab_hash) const;
  // Restores parameters, optimizer and schedule state. The model must have
  // been built with the checkpoint's model config.
  void restore(const std::string& bytes, std::uint64_t vocab_hash);

 private:
  [[nodiscard]] bool caption_loss_on() const;

  Model& model_;
  RunConfig cfg_;
  std::vector<ExampleInput> train_;
  std::vector<ExampleInput> val_;
  AdaMax opt_;
  TrainerState state_;
  std::vector<ParamGrads> scratch_;
  std::vector<int> order_;
  int order_epoch_ = -1;
  int order_phase_ = -1;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointContents {
  nlohmann::json manifest;
  std::map<std::string, std::vector<double>> arrays;
};
CheckpointContents parse_checkpoint(const std::string& bytes);
// Model rebuilt from a checkpoint's model config and parameter arrays.
Model model_from_checkpoint(const CheckpointContents& ck);

void write_metrics_csv(const std::filesystem::path& path, std::span<const EpochMetrics> rows);
std::vector<EpochMetrics> read_metrics_csv(const std::filesystem::path& path);

// --- phase 2 caption generation ---------------------------------------------

struct CaptionDumpEntry {
  std::string split;
  std::int64_t example = 0;  // index within the split
  std::int64_t image_id = 0;
  std::string question;
  std::vector<std::string> captions;
  std::vector<double> log_probs;
};

std::vector<CaptionDumpEntry> generate_caption_dump(const Model& model, const std::string& split,
                                                    std::span<const data::ExampleRecord> records,
                                                    std::span<const ExampleInput> inputs, const data::Vocabs& vocabs,
                                                    const Phase2Config& p2, std::uint64_t seed, int threads);
void write_caption_dump(const std::filesystem::path& path, std::span<const CaptionDumpEntry> entries);
std::vector<CaptionDumpEntry> read_caption_dump(const std::filesystem::path& path);
// Replaces each input's captions with the dump's entries for `split`. Every
// example must have exactly `expected` captions in the dump.
std::vector<ExampleInput> swap_captions(std::vector<ExampleInput> inputs, std::span<const CaptionDumpEntry> dump,
                                        const std::string& split, const data::Vocabs& vocabs, int expected,
                                        int max_caption_len);

}  // namespace relcap
