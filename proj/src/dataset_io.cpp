#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "relcap/data.hpp"
#include "relcap/error.hpp"
#include "relcap/io.hpp"

namespace relcap::data {

namespace {

using nlohmann::json;

constexpr char kBlobMagic[4] = {'R', 'C', 'F', 'B'};
constexpr std::size_t kBlobHeader = 16;

[[noreturn]] void record_error(std::size_t index, const std::string& what) {
  throw DataError("record " + std::to_string(index) + ": " + what);
}

json meta_json(const ExampleRecord& r) {
  json boxes = json::array();
  for (const auto& b : r.boxes) boxes.push_back({b.x, b.y, b.w, b.h});
  json objects = json::array();
  for (const auto& o : r.objects) {
    objects.push_back({{"category", o.category}, {"color", o.color}, {"size", o.size}, {"box", {o.box.x, o.box.y, o.box.w, o.box.h}}});
  }
  json valid = json::array();
  for (char v : r.valid) valid.push_back(v ? 1 : 0);
  return {{"question_type", question_type_name(r.question_type)}, {"valid", valid}, {"boxes", boxes}, {"objects", objects}};
}

attn::Box box_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>(), j.at(3).get<double>()}; }

}  // namespace

void save_records(const std::filesystem::path& dir, const std::vector<ExampleRecord>& records) {
  std::filesystem::create_directories(dir);
  std::string blob(kBlobHeader, '\0');
  std::string manifest;
  std::string meta;
  std::uint64_t count = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.features.size() != static_cast<std::size_t>(r.rows) * r.cols) record_error(i, "feature length does not match shape");
    json m;
    m["image_id"] = r.image_id;
    m["question"] = r.question;
    m["captions"] = r.captions;
    m["answer_scores"] = r.answer_scores;
    m["relevant_caption_index"] = r.relevant_caption_index;
    m["feature_offset"] = blob.size();
    m["feature_shape"] = {r.rows, r.cols};
    if (r.attention_truth) m["attention_truth"] = *r.attention_truth;
    manifest += m.dump() + "\n";
    meta += meta_json(r).dump() + "\n";
    io::append_le_doubles(blob, r.features);
    count += r.features.size();
  }
  std::memcpy(blob.data(), kBlobMagic, 4);
  io::store_le<std::uint32_t>(blob.data() + 4, kDatasetVersion);
  io::store_le<std::uint64_t>(blob.data() + 8, count);
  io::write_file_atomic(dir / "features.bin", blob);
  io::write_file_atomic(dir / "meta.jsonl", meta);
  io::write_file_atomic(dir / "manifest.jsonl", manifest);
}

std::vector<ExampleRecord> load_records(const std::filesystem::path& dir) {
  const std::string blob = io::read_file(dir / "features.bin");
  if (blob.size() < kBlobHeader || std::memcmp(blob.data(), kBlobMagic, 4) != 0) {
    throw DataError("features.bin: bad magic in " + dir.string());
  }
  const auto version = io::load_le<std::uint32_t>(blob.data() + 4);
  if (version != kDatasetVersion) {
    throw DataError("features.bin: schema version " + std::to_string(version) + " (expected " +
                    std::to_string(kDatasetVersion) + ")");
  }
  const auto count = io::load_le<std::uint64_t>(blob.data() + 8);
  if (count > (blob.size() - kBlobHeader) / 8 || kBlobHeader + count * 8 != blob.size()) {
    throw DataError("features.bin: length header says " + std::to_string(count) + " reals but file holds " +
                    std::to_string((blob.size() - kBlobHeader) / 8));
  }

  std::vector<ExampleRecord> out;
  std::istringstream manifest(io::read_file(dir / "manifest.jsonl"));
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    const std::size_t i = out.size();
    ExampleRecord r;
    try {
      const json m = json::parse(line);
      r.image_id = m.at("image_id").get<std::int64_t>();
      r.question = m.at("question").get<std::string>();
      r.captions = m.at("captions").get<std::vector<std::string>>();
      r.answer_scores = m.at("answer_scores").get<std::map<std::string, double>>();
      r.relevant_caption_index = m.at("relevant_caption_index").get<int>();
      const auto offset = m.at("feature_offset").get<std::uint64_t>();
      const auto shape = m.at("feature_shape").get<std::vector<int>>();
      if (shape.size() != 2 || shape[0] <= 0 || shape[1] <= 0) record_error(i, "feature_shape must be [K, D]");
      r.rows = shape[0];
      r.cols = shape[1];
      if (!out.empty() && (r.rows != out.front().rows || r.cols != out.front().cols)) {
        record_error(i, "feature_shape [" + std::to_string(r.rows) + "," + std::to_string(r.cols) +
                            "] disagrees with record 0 [" + std::to_string(out.front().rows) + "," +
                            std::to_string(out.front().cols) + "]");
      }
      const std::uint64_t n = static_cast<std::uint64_t>(r.rows) * static_cast<std::uint64_t>(r.cols);
      if (offset < kBlobHeader || (offset - kBlobHeader) % 8 != 0 || offset + n * 8 > blob.size()) {
        record_error(i, "feature blob range out of bounds (truncated or shape disagreement)");
      }
      r.features = io::read_le_doubles(blob.data() + offset, n);
      if (m.contains("attention_truth")) {
        auto truth = m.at("attention_truth").get<std::vector<double>>();
        if (truth.size() != static_cast<std::size_t>(attn::kGridSize * attn::kGridSize)) {
          record_error(i, "attention_truth must hold 196 reals");
        }
        r.attention_truth = std::move(truth);
      }
    } catch (const json::exception& e) {
      record_error(i, std::string("manifest parse error: ") + e.what());
    }
    // Without metadata, rows that are entirely zero count as padding.
    r.valid.assign(static_cast<std::size_t>(r.rows), 0);
    for (int k = 0; k < r.rows; ++k) {
      for (int d = 0; d < r.cols; ++d) {
        if (r.features[static_cast<std::size_t>(k) * r.cols + d] != 0.0) {
          r.valid[static_cast<std::size_t>(k)] = 1;
          break;
        }
      }
    }
    out.push_back(std::move(r));
  }

  const auto meta_path = dir / "meta.jsonl";
  if (std::filesystem::exists(meta_path)) {
    std::istringstream meta(io::read_file(meta_path));
    std::size_t i = 0;
    while (std::getline(meta, line)) {
      if (line.empty()) continue;
      if (i >= out.size()) throw DataError("meta.jsonl: more lines than manifest records");
      auto& r = out[i];
      try {
        const json m = json::parse(line);
        r.question_type = question_type_from_name(m.at("question_type").get<std::string>());
        const auto valid = m.at("valid").get<std::vector<int>>();
        if (static_cast<int>(valid.size()) != r.rows) record_error(i, "validity mask length disagrees with feature_shape");
        for (std::size_t k = 0; k < valid.size(); ++k) r.valid[k] = valid[k] ? 1 : 0;
        for (const auto& b : m.at("boxes")) r.boxes.push_back(box_from(b));
        for (const auto& o : m.at("objects")) {
          SceneObject so;
          so.category = o.at("category").get<int>();
          so.color = o.at("color").get<int>();
          so.size = o.at("size").get<int>();
          so.box = box_from(o.at("box"));
          r.objects.push_back(so);
        }
      } catch (const json::exception& e) {
        record_error(i, std::string("meta parse error: ") + e.what());
      }
      ++i;
    }
    if (i != out.size()) throw DataError("meta.jsonl: fewer lines than manifest records");
  }
  return out;
}

void save_vocabs(const std::filesystem::path& file, const Vocabs& vocabs) {
  json j;
  j["version"] = kDatasetVersion;
  j["words"] = vocabs.words.tokens();
  j["answers"] = vocabs.answers;
  io::write_file_atomic(file, j.dump(1) + "\n");
}

Vocabs load_vocabs(const std::filesystem::path& file) {
  try {
    const json j = json::parse(io::read_file(file));
    if (j.at("version").get<std::uint32_t>() != kDatasetVersion) throw DataError("vocab file version mismatch");
    Vocabs v;
    v.words = Vocab::from_tokens(j.at("words").get<std::vector<std::string>>());
    v.answers = j.at("answers").get<std::vector<std::string>>();
    return v;
  } catch (const json::exception& e) {
    throw DataError("vocab file " + file.string() + ": " + e.what());
  }
}

}  // namespace relcap::data
