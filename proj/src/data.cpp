#include "relcap/data.hpp"

#include <algorithm>
#include <cctype>
#include <random>
#include <sstream>

#include <spdlog/spdlog.h>

#include "relcap/error.hpp"
#include "relcap/params.hpp"

namespace relcap::data {

namespace {

int uniform_int(std::mt19937_64& rng, int lo, int hi) {  // inclusive
  const int span = hi - lo + 1;
  return lo + std::min(span - 1, static_cast<int>(unit_uniform(rng) * span));
}

double uniform_real(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * unit_uniform(rng); }

double iou(const attn::Box& a, const attn::Box& b) {
  const double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  const double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  const double inter = ix * iy;
  return inter / (a.w * a.h + b.w * b.h - inter);
}

attn::Box place_box(std::mt19937_64& rng, int size, const std::vector<SceneObject>& placed) {
  const double lo = size == 0 ? 0.08 : 0.18;
  const double hi = size == 0 ? 0.16 : 0.30;
  attn::Box best;
  for (int attempt = 0; attempt < 50; ++attempt) {
    attn::Box b;
    b.w = uniform_real(rng, lo, hi);
    b.h = uniform_real(rng, lo, hi);
    b.x = uniform_real(rng, 0.0, 1.0 - b.w);
    b.y = uniform_real(rng, 0.0, 1.0 - b.h);
    best = b;
    const bool clear = std::none_of(placed.begin(), placed.end(), [&](const SceneObject& o) { return iou(o.box, b) > 0.1; });
    if (clear) break;
  }
  return best;
}

std::string plural(const std::string& noun) { return noun + "s"; }

std::string describe(const SceneObject& o) {
  return "a " + size_names()[static_cast<std::size_t>(o.size)] + " " + color_names()[static_cast<std::size_t>(o.color)] +
         " " + category_names()[static_cast<std::size_t>(o.category)];
}

struct Scene {
  std::vector<SceneObject> objects;
  int count_category = 0;
  std::vector<double> features;  // K x D
};

// Attribute vector through the fixed projection, plus noise; rows past the
// object count stay zero.
std::vector<double> scene_features(const DataConfig& cfg, const std::vector<SceneObject>& objects,
                                   const std::vector<double>& projection, std::mt19937_64& rng) {
  std::vector<double> f(static_cast<std::size_t>(cfg.num_slots) * cfg.feature_dim, 0.0);
  for (std::size_t k = 0; k < objects.size(); ++k) {
    const auto attrs = attribute_vector(objects[k]);
    for (int d = 0; d < cfg.feature_dim; ++d) {
      double v = 0.0;
      for (int a = 0; a < kAttributeDim; ++a) {
        v += projection[static_cast<std::size_t>(d) * kAttributeDim + a] * attrs[static_cast<std::size_t>(a)];
      }
      f[k * cfg.feature_dim + d] = v + cfg.noise * standard_normal(rng);
    }
  }
  return f;
}

Scene make_scene(const DataConfig& cfg, const std::vector<double>& projection, std::mt19937_64& rng) {
  Scene scene;
  const int n = uniform_int(rng, cfg.min_objects, cfg.max_objects);
  const int m = uniform_int(rng, 1, std::min(4, n - 1));
  scene.count_category = uniform_int(rng, 0, kNumCategories - 1);
  std::vector<int> others;
  for (int c = 0; c < kNumCategories; ++c) {
    if (c != scene.count_category) others.push_back(c);
  }
  shuffle_in_place(others, rng);
  std::vector<int> cats(static_cast<std::size_t>(m), scene.count_category);
  for (int i = 0; i < n - m; ++i) cats.push_back(others[static_cast<std::size_t>(i)]);
  shuffle_in_place(cats, rng);
  for (int cat : cats) {
    SceneObject o;
    o.category = cat;
    o.color = uniform_int(rng, 0, kNumColors - 1);
    o.size = uniform_int(rng, 0, kNumSizes - 1);
    o.box = place_box(rng, o.size, scene.objects);
    scene.objects.push_back(o);
  }
  scene.features = scene_features(cfg, scene.objects, projection, rng);
  return scene;
}

ExampleRecord make_question(const DataConfig& cfg, const Scene& scene, std::int64_t image_id, std::mt19937_64& rng) {
  const auto& cats = category_names();
  const auto& colors = color_names();
  const int n = static_cast<int>(scene.objects.size());

  ExampleRecord r;
  r.image_id = image_id;
  r.rows = cfg.num_slots;
  r.cols = cfg.feature_dim;
  r.objects = scene.objects;

  std::vector<int> unique_objects;
  std::vector<int> count_targets;
  for (int i = 0; i < n; ++i) {
    const int cat = scene.objects[static_cast<std::size_t>(i)].category;
    const auto same = std::count_if(scene.objects.begin(), scene.objects.end(),
                                    [cat](const SceneObject& o) { return o.category == cat; });
    if (same == 1) unique_objects.push_back(i);
    if (cat == scene.count_category) count_targets.push_back(i);
  }

  std::vector<int> targets;
  std::string relevant;
  const int type = uniform_int(rng, 0, 2);
  if (type == 1) {
    r.question_type = QuestionType::kCount;
    const std::string& noun = cats[static_cast<std::size_t>(scene.count_category)];
    const int m = static_cast<int>(count_targets.size());
    r.question = "how many " + plural(noun) + " are there";
    r.answer_scores[std::to_string(m)] = 1.0;
    if (cfg.adjacent_count_score > 0.0) {
      r.answer_scores[std::to_string(m + 1)] = cfg.adjacent_count_score;
      if (m > 1) r.answer_scores[std::to_string(m - 1)] = cfg.adjacent_count_score;
    }
    targets = count_targets;
    relevant = m == 1 ? "there is 1 " + noun : "there are " + std::to_string(m) + " " + plural(noun);
  } else {
    const int t = unique_objects[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(unique_objects.size()) - 1))];
    const SceneObject& o = scene.objects[static_cast<std::size_t>(t)];
    const std::string& noun = cats[static_cast<std::size_t>(o.category)];
    targets = {t};
    relevant = describe(o);
    if (type == 0) {
      r.question_type = QuestionType::kColor;
      r.question = "what color is the " + noun;
      r.answer_scores[colors[static_cast<std::size_t>(o.color)]] = 1.0;
    } else {
      r.question_type = QuestionType::kExist;
      int asked = o.color;
      const bool yes = unit_uniform(rng) < 0.5;
      if (!yes) asked = (o.color + uniform_int(rng, 1, kNumColors - 1)) % kNumColors;
      r.question = "is there a " + colors[static_cast<std::size_t>(asked)] + " " + noun;
      r.answer_scores[yes ? "yes" : "no"] = 1.0;
    }
  }

  std::vector<int> distractors;
  for (int i = 0; i < n; ++i) {
    if (std::find(targets.begin(), targets.end(), i) == targets.end()) distractors.push_back(i);
  }
  shuffle_in_place(distractors, rng);
  r.relevant_caption_index = uniform_int(rng, 0, cfg.num_captions - 1);
  int next = 0;
  for (int c = 0; c < cfg.num_captions; ++c) {
    if (c == r.relevant_caption_index) {
      r.captions.push_back(relevant);
    } else {
      const int d = distractors[static_cast<std::size_t>(next++ % static_cast<int>(distractors.size()))];
      r.captions.push_back(describe(scene.objects[static_cast<std::size_t>(d)]));
    }
  }

  r.features = scene.features;
  r.valid.assign(static_cast<std::size_t>(r.rows), 0);
  for (int k = 0; k < n; ++k) {
    r.valid[static_cast<std::size_t>(k)] = 1;
    r.boxes.push_back(scene.objects[static_cast<std::size_t>(k)].box);
  }

  std::vector<attn::Box> target_boxes;
  for (int t : targets) target_boxes.push_back(scene.objects[static_cast<std::size_t>(t)].box);
  const std::vector<double> ones(target_boxes.size(), 1.0);
  r.attention_truth = attn::rasterize(target_boxes, ones).cells;
  return r;
}

}  // namespace

const std::vector<std::string>& category_names() {
  static const std::vector<std::string> names = {"cube", "ball", "cone", "cylinder", "ring", "star", "block", "disk"};
  return names;
}

const std::vector<std::string>& color_names() {
  static const std::vector<std::string> names = {"red", "green", "blue", "yellow", "purple", "gray"};
  return names;
}

const std::vector<std::string>& size_names() {
  static const std::vector<std::string> names = {"small", "large"};
  return names;
}

std::string question_type_name(QuestionType t) {
  switch (t) {
    case QuestionType::kColor: return "color";
    case QuestionType::kCount: return "count";
    case QuestionType::kExist: return "yes/no";
    case QuestionType::kUnknown: return "unknown";
  }
  return "unknown";
}

QuestionType question_type_from_name(const std::string& name) {
  if (name == "color") return QuestionType::kColor;
  if (name == "count") return QuestionType::kCount;
  if (name == "yes/no") return QuestionType::kExist;
  return QuestionType::kUnknown;
}

int ExampleRecord::num_valid() const {
  return static_cast<int>(std::count(valid.begin(), valid.end(), 1));
}

std::vector<double> attribute_vector(const SceneObject& obj) {
  std::vector<double> a(kAttributeDim, 0.0);
  a[static_cast<std::size_t>(obj.category)] = 1.0;
  a[static_cast<std::size_t>(kNumCategories + obj.color)] = 1.0;
  a[static_cast<std::size_t>(kNumCategories + kNumColors + obj.size)] = 1.0;
  const std::size_t g = kNumCategories + kNumColors + kNumSizes;
  a[g] = obj.box.x + obj.box.w / 2;
  a[g + 1] = obj.box.y + obj.box.h / 2;
  a[g + 2] = obj.box.w;
  a[g + 3] = obj.box.h;
  return a;
}

std::vector<double> feature_projection(const DataConfig& config) {
  std::mt19937_64 rng(config.projection_seed);
  std::vector<double> p(static_cast<std::size_t>(config.feature_dim) * kAttributeDim);
  for (double& v : p) v = standard_normal(rng);
  return p;
}

SplitDataset generate_dataset(const DataConfig& cfg, std::uint64_t seed) {
  if (cfg.num_captions < 2) throw ConfigError("data.num_captions must be >= 2 (selection needs alternatives)");
  if (cfg.num_slots < cfg.max_objects) {
    throw ConfigError("data.num_slots (K=" + std::to_string(cfg.num_slots) + ") is smaller than data.max_objects (" +
                      std::to_string(cfg.max_objects) + ")");
  }
  if (cfg.min_objects < 2 || cfg.min_objects > cfg.max_objects) throw ConfigError("data.min_objects must be in [2, max_objects]");
  if (cfg.max_objects > kNumCategories) throw ConfigError("data.max_objects exceeds the number of categories");
  if (cfg.questions_per_image < 1) throw ConfigError("data.questions_per_image must be >= 1");
  if (cfg.train_examples < 0 || cfg.val_examples < 0) throw ConfigError("example counts must be >= 0");
  if (cfg.feature_dim < 1) throw ConfigError("data.feature_dim must be >= 1");
  if (cfg.max_caption_len < 5) throw ConfigError("data.max_caption_len must be >= 5");
  if (cfg.noise < 0.0) throw ConfigError("data.noise must be >= 0");

  const auto projection = feature_projection(cfg);
  SplitDataset out;
  std::int64_t image_id = 0;
  for (auto* split : {&out.train, &out.val}) {
    const int wanted = split == &out.train ? cfg.train_examples : cfg.val_examples;
    while (static_cast<int>(split->size()) < wanted) {
      std::mt19937_64 rng(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(image_id))));
      const Scene scene = make_scene(cfg, projection, rng);
      for (int q = 0; q < cfg.questions_per_image && static_cast<int>(split->size()) < wanted; ++q) {
        split->push_back(make_question(cfg, scene, image_id, rng));
      }
      ++image_id;
    }
  }
  return out;
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  std::string tok;
  while (is >> tok) {
    std::transform(tok.begin(), tok.end(), tok.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    out.push_back(tok);
  }
  return out;
}

std::uint64_t Vocabs::hash() const {
  std::uint64_t h = words.hash();
  for (const auto& a : answers) h = fnv1a(a + '\n', h);
  return h;
}

int Vocabs::answer_index(const std::string& a) const {
  const auto it = std::find(answers.begin(), answers.end(), a);
  return it == answers.end() ? -1 : static_cast<int>(it - answers.begin());
}

Vocabs build_vocabs(const std::vector<ExampleRecord>& records, int min_word_count, int min_answer_count) {
  if (records.empty()) throw DataError("build_vocabs: empty corpus");
  std::map<std::string, int> words;
  std::map<std::string, int> answers;
  for (const auto& r : records) {
    for (const auto& t : tokenize(r.question)) ++words[t];
    for (const auto& c : r.captions) {
      for (const auto& t : tokenize(c)) ++words[t];
    }
    for (const auto& [a, s] : r.answer_scores) {
      if (s > 0.0) ++answers[a];
    }
  }
  Vocabs v;
  v.words = Vocab::from_counts(words, min_word_count);
  std::vector<std::pair<std::string, int>> kept;
  for (const auto& [a, n] : answers) {
    if (n >= min_answer_count) kept.emplace_back(a, n);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  for (const auto& [a, n] : kept) v.answers.push_back(a);
  if (v.answers.empty()) throw DataError("build_vocabs: no answer reaches the minimum count");
  return v;
}

std::vector<int> encode_caption(const std::string& caption, const Vocab& vocab, int max_len) {
  const auto toks = tokenize(caption);
  if (toks.empty()) throw DataError("encode: empty caption");
  std::vector<int> ids = {Vocab::kStart};
  for (std::size_t i = 0; i < toks.size() && static_cast<int>(i) < max_len; ++i) ids.push_back(vocab.index(toks[i]));
  ids.push_back(Vocab::kEnd);
  return ids;
}

EncodedExample encode_example(const ExampleRecord& record, const Vocabs& vocabs, int max_question_len,
                              int max_caption_len) {
  EncodedExample ex;
  const auto q = tokenize(record.question);
  ex.question.assign(static_cast<std::size_t>(max_question_len), Vocab::kPad);
  ex.question_length = std::min(static_cast<int>(q.size()), max_question_len);
  for (int i = 0; i < ex.question_length; ++i) ex.question[static_cast<std::size_t>(i)] = vocabs.words.index(q[static_cast<std::size_t>(i)]);
  for (const auto& c : record.captions) ex.captions.push_back(encode_caption(c, vocabs.words, max_caption_len));
  ex.answer_scores.assign(vocabs.answers.size(), 0.0);
  for (const auto& [a, s] : record.answer_scores) {
    const int idx = vocabs.answer_index(a);
    if (idx < 0) {
      ++ex.dropped_answers;
      spdlog::debug("image {}: answer '{}' not among candidates; score dropped", record.image_id, a);
      continue;
    }
    ex.answer_scores[static_cast<std::size_t>(idx)] = s;
  }
  return ex;
}

namespace {

std::string join(const std::vector<std::string>& toks) {
  std::string out;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (i) out += ' ';
    out += toks[i];
  }
  return out;
}

}  // namespace

DecodedText decode_example(const EncodedExample& ex, const Vocabs& vocabs) {
  DecodedText d;
  std::vector<std::string> q;
  for (int i = 0; i < ex.question_length; ++i) q.push_back(vocabs.words.token(ex.question[static_cast<std::size_t>(i)]));
  d.question = join(q);
  for (const auto& c : ex.captions) {
    std::vector<std::string> toks;
    for (int id : c) {
      if (id == Vocab::kStart || id == Vocab::kEnd) continue;
      toks.push_back(vocabs.words.token(id));
    }
    d.captions.push_back(join(toks));
  }
  return d;
}

DecodedText normalize_text(const ExampleRecord& record, const Vocabs& vocabs, int max_question_len, int max_caption_len) {
  auto norm = [&](const std::string& s, int limit) {
    auto toks = tokenize(s);
    if (static_cast<int>(toks.size()) > limit) toks.resize(static_cast<std::size_t>(limit));
    for (auto& t : toks) {
      if (!vocabs.words.contains(t)) t = "<unk>";
    }
    return join(toks);
  };
  DecodedText d;
  d.question = norm(record.question, max_question_len);
  for (const auto& c : record.captions) d.captions.push_back(norm(c, max_caption_len));
  return d;
}

}  // namespace relcap::data
