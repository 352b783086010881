#pragma once

// Synthetic micro-world VQA corpus: scenes of attributed objects, templated
// questions, soft answer scores, several gold captions per question (one of
// them planted to describe the question's target objects) and ground-truth
// attention grids. Also the on-disk dataset format shared with externally
// produced features.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "relcap/attention_grid.hpp"
#include "relcap/vocab.hpp"

namespace relcap::data {

inline constexpr int kNumCategories = 8;
inline constexpr int kNumColors = 6;
inline constexpr int kNumSizes = 2;
// one-hot category, color, size + box center (x, y) and extent (w, h)
inline constexpr int kAttributeDim = kNumCategories + kNumColors + kNumSizes + 4;

const std::vector<std::string>& category_names();
const std::vector<std::string>& color_names();
const std::vector<std::string>& size_names();

struct SceneObject {
  int category = 0;
  int color = 0;
  int size = 0;  // 0 small, 1 large
  attn::Box box;
  friend bool operator==(const SceneObject&, const SceneObject&) = default;
};

struct SceneSpec {
  std::vector<SceneObject> objects;
  std::uint64_t seed = 0;
};

enum class QuestionType { kColor, kCount, kExist, kUnknown };

std::string question_type_name(QuestionType t);
QuestionType question_type_from_name(const std::string& name);

struct ExampleRecord {
  std::int64_t image_id = 0;
  int rows = 0;  // K
  int cols = 0;  // D
  std::vector<double> features;  // rows x cols, row-major; padded rows are zero
  std::vector<char> valid;       // per row
  std::string question;
  std::vector<std::string> captions;
  std::map<std::string, double> answer_scores;
  int relevant_caption_index = -1;  // generator metadata; -1 when unknown
  std::optional<std::vector<double>> attention_truth;  // 14 x 14 row-major

  // Generator metadata (absent for externally ingested records).
  QuestionType question_type = QuestionType::kUnknown;
  std::vector<attn::Box> boxes;  // one per valid row, in row order
  std::vector<SceneObject> objects;

  [[nodiscard]] int num_valid() const;
  friend bool operator==(const ExampleRecord&, const ExampleRecord&) = default;
};

struct DataConfig {
  int train_examples = 2000;
  int val_examples = 400;
  int questions_per_image = 2;
  int num_slots = 8;        // K, rows of every feature matrix
  int min_objects = 4;
  int max_objects = 8;
  int feature_dim = 32;     // D
  int num_captions = 5;     // C
  int max_caption_len = 12; // T, words per caption
  double noise = 0.8;
  double adjacent_count_score = 0.0;
  std::uint64_t projection_seed = 20190722;
};

struct SplitDataset {
  std::vector<ExampleRecord> train;
  std::vector<ExampleRecord> val;
};

// Deterministic in (config, seed). Each image draws from its own RNG stream
// derived from (seed, image id), so generation can be sharded by image range.
SplitDataset generate_dataset(const DataConfig& config, std::uint64_t seed);

// Fixed feature projection (D x kAttributeDim, row-major) used by the
// generator; a function of config.feature_dim and config.projection_seed.
std::vector<double> feature_projection(const DataConfig& config);
std::vector<double> attribute_vector(const SceneObject& obj);

// Lower-case, whitespace tokenization.
std::vector<std::string> tokenize(const std::string& text);

struct Vocabs {
  Vocab words;
  std::vector<std::string> answers;

  [[nodiscard]] std::uint64_t hash() const;
  [[nodiscard]] int answer_index(const std::string& a) const;  // -1 when absent
};

// Word vocabulary over questions and captions (words seen fewer than
// `min_word_count` times become <unk>) and the answer candidates seen at
// least `min_answer_count` times with positive score. Both ordered by
// descending count, ties alphabetical.
Vocabs build_vocabs(const std::vector<ExampleRecord>& records, int min_word_count, int min_answer_count);

struct EncodedExample {
  std::vector<int> question;  // max_question_len entries, <pad> after question_length
  int question_length = 0;
  std::vector<std::vector<int>> captions;  // <start> w1 .. wn <end>
  std::vector<double> answer_scores;       // one per candidate
  int dropped_answers = 0;                 // answers absent from the candidate list
};

EncodedExample encode_example(const ExampleRecord& record, const Vocabs& vocabs, int max_question_len = 14,
                              int max_caption_len = 12);
std::vector<int> encode_caption(const std::string& caption, const Vocab& vocab, int max_len);

// Inverse of encode_example for text fields: question and captions as
// space-joined token strings (<unk> kept literally).
struct DecodedText {
  std::string question;
  std::vector<std::string> captions;
  friend bool operator==(const DecodedText&, const DecodedText&) = default;
};
DecodedText decode_example(const EncodedExample& ex, const Vocabs& vocabs);
// What decode_example(encode_example(r)) is expected to produce.
DecodedText normalize_text(const ExampleRecord& record, const Vocabs& vocabs, int max_question_len = 14,
                           int max_caption_len = 12);

// --- file format -------------------------------------------------------------
//
// A split directory holds:
//   manifest.jsonl  one JSON object per record: image_id, question, captions,
//                   answer_scores, relevant_caption_index, feature_offset,
//                   feature_shape, attention_truth (optional)
//   features.bin    "RCFB", u32 version, u64 count of reals, then
//                   little-endian doubles; feature_offset is a byte offset
//   meta.jsonl      optional generator metadata per record (validity mask,
//                   boxes, question type, scene objects)

inline constexpr std::uint32_t kDatasetVersion = 1;

void save_records(const std::filesystem::path& dir, const std::vector<ExampleRecord>& records);
std::vector<ExampleRecord> load_records(const std::filesystem::path& dir);

void save_vocabs(const std::filesystem::path& file, const Vocabs& vocabs);
Vocabs load_vocabs(const std::filesystem::path& file);

}  // namespace relcap::data
