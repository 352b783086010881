#include "relcap/config.hpp"

#include <functional>
#include <map>

#include "relcap/error.hpp"

namespace relcap {

namespace {

using nlohmann::json;

// One accessor per key: read into the config or write out of it.
struct Field {
  std::function<void(RunConfig&, const json&)> read;
  std::function<json(const RunConfig&)> write;
};

template <typename T, typename Get>
Field field(Get get) {
  return {[get](RunConfig& c, const json& v) { get(c) = v.get<T>(); },
          [get](const RunConfig& c) { return json(get(const_cast<RunConfig&>(c))); }};
}

#define RELCAP_FIELD(T, expr) field<T>([](RunConfig& c) -> T& { return c.expr; })

GateMode gate_from_name(const std::string& s) {
  if (s == "vector") return GateMode::kVector;
  if (s == "scalar") return GateMode::kScalar;
  if (s == "fixed") return GateMode::kFixed;
  throw ConfigError("model.gate must be vector, scalar or fixed (got " + s + ")");
}

PredMode pred_from_name(const std::string& s) {
  if (s == "logit") return PredMode::kLogit;
  if (s == "log_prob") return PredMode::kLogProb;
  throw ConfigError("model.pred must be logit or log_prob (got " + s + ")");
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> t;
    t["seed"] = RELCAP_FIELD(std::uint64_t, seed);
    t["data.train_examples"] = RELCAP_FIELD(int, data.train_examples);
    t["data.val_examples"] = RELCAP_FIELD(int, data.val_examples);
    t["data.questions_per_image"] = RELCAP_FIELD(int, data.questions_per_image);
    t["data.num_slots"] = RELCAP_FIELD(int, data.num_slots);
    t["data.min_objects"] = RELCAP_FIELD(int, data.min_objects);
    t["data.max_objects"] = RELCAP_FIELD(int, data.max_objects);
    t["data.feature_dim"] = RELCAP_FIELD(int, data.feature_dim);
    t["data.num_captions"] = RELCAP_FIELD(int, data.num_captions);
    t["data.max_caption_len"] = RELCAP_FIELD(int, data.max_caption_len);
    t["data.noise"] = RELCAP_FIELD(double, data.noise);
    t["data.adjacent_count_score"] = RELCAP_FIELD(double, data.adjacent_count_score);
    t["data.projection_seed"] = RELCAP_FIELD(std::uint64_t, data.projection_seed);
    t["data.min_word_count"] = RELCAP_FIELD(int, min_word_count);
    t["data.min_answer_count"] = RELCAP_FIELD(int, min_answer_count);
    t["data.max_question_len"] = RELCAP_FIELD(int, max_question_len);
    t["model.question_embed"] = RELCAP_FIELD(int, model.question_embed);
    t["model.question_hidden"] = RELCAP_FIELD(int, model.question_hidden);
    t["model.word_dim"] = RELCAP_FIELD(int, model.word_dim);
    t["model.caption_hidden"] = RELCAP_FIELD(int, model.caption_hidden);
    t["model.attention_hidden"] = RELCAP_FIELD(int, model.attention_hidden);
    t["model.decoder_embed"] = RELCAP_FIELD(int, model.decoder_embed);
    t["model.decoder_hidden"] = RELCAP_FIELD(int, model.decoder_hidden);
    t["model.decoder_attention"] = RELCAP_FIELD(int, model.decoder_attention);
    t["model.lrelu_slope"] = RELCAP_FIELD(double, model.lrelu_slope);
    t["model.use_caa"] = RELCAP_FIELD(bool, model.use_caa);
    t["model.use_captions"] = RELCAP_FIELD(bool, model.use_captions);
    t["model.stop_gradient_vq"] = RELCAP_FIELD(bool, model.stop_gradient_vq);
    t["model.gate"] = {[](RunConfig& c, const json& v) { c.model.gate = gate_from_name(v.get<std::string>()); },
                       [](const RunConfig& c) { return json(gate_mode_name(c.model.gate)); }};
    t["model.pred"] = {[](RunConfig& c, const json& v) { c.model.pred = pred_from_name(v.get<std::string>()); },
                       [](const RunConfig& c) { return json(pred_mode_name(c.model.pred)); }};
    t["train.epochs"] = RELCAP_FIELD(int, train.epochs);
    t["train.batch_size"] = RELCAP_FIELD(int, train.batch_size);
    t["train.lr"] = RELCAP_FIELD(double, train.lr);
    t["train.beta1"] = RELCAP_FIELD(double, train.beta1);
    t["train.beta2"] = RELCAP_FIELD(double, train.beta2);
    t["train.eps"] = RELCAP_FIELD(double, train.eps);
    t["train.clip_norm"] = RELCAP_FIELD(double, train.clip_norm);
    t["train.divergence_threshold"] = RELCAP_FIELD(double, train.divergence_threshold);
    t["train.threads"] = RELCAP_FIELD(int, train.threads);
    t["train.limit"] = RELCAP_FIELD(int, train.limit);
    t["select.xi"] = RELCAP_FIELD(double, xi);
    t["phase2.epochs"] = RELCAP_FIELD(int, phase2.epochs);
    t["phase2.lr_scale"] = RELCAP_FIELD(double, phase2.lr_scale);
    t["phase2.captions"] = RELCAP_FIELD(int, phase2.captions);
    t["phase2.max_len"] = RELCAP_FIELD(int, phase2.max_len);
    t["phase2.temperature"] = RELCAP_FIELD(double, phase2.temperature);
    t["phase2.vqa_only"] = RELCAP_FIELD(bool, phase2.vqa_only);
    return t;
  }();
  return table;
}

#undef RELCAP_FIELD

void flatten(const json& j, const std::string& prefix, std::map<std::string, json>& out) {
  for (const auto& [key, value] : j.items()) {
    const std::string name = prefix.empty() ? key : prefix + "." + key;
    if (value.is_object()) {
      flatten(value, name, out);
    } else {
      if (out.contains(name)) throw ConfigError("config key given twice: " + name);
      out[name] = value;
    }
  }
}

}  // namespace

std::string gate_mode_name(GateMode g) {
  switch (g) {
    case GateMode::kVector: return "vector";
    case GateMode::kScalar: return "scalar";
    case GateMode::kFixed: return "fixed";
  }
  return "vector";
}

std::string pred_mode_name(PredMode p) { return p == PredMode::kLogit ? "logit" : "log_prob"; }

RunConfig apply_config_json(RunConfig base, const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  std::map<std::string, json> flat;
  flatten(j, "", flat);
  const auto& table = fields();
  for (const auto& [key, value] : flat) {
    const auto it = table.find(key);
    if (it == table.end()) throw ConfigError("unknown config key: " + key);
    try {
      it->second.read(base, value);
    } catch (const json::exception& e) {
      throw ConfigError("config key " + key + ": " + e.what());
    }
  }
  return base;
}

json config_to_json(const RunConfig& cfg) {
  json out = json::object();
  for (const auto& [key, f] : fields()) {
    const auto dot = key.find('.');
    if (dot == std::string::npos) {
      out[key] = f.write(cfg);
    } else {
      out[key.substr(0, dot)][key.substr(dot + 1)] = f.write(cfg);
    }
  }
  return out;
}

void validate_config(const RunConfig& c) {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  require(c.data.num_captions >= 2, "data.num_captions must be >= 2 (selection needs alternatives)");
  require(c.data.num_slots >= c.data.max_objects, "data.num_slots must be >= data.max_objects");
  require(c.data.min_objects >= 2 && c.data.min_objects <= c.data.max_objects,
          "data.min_objects must be in [2, data.max_objects]");
  require(c.data.max_objects <= data::kNumCategories, "data.max_objects exceeds the number of categories");
  require(c.data.feature_dim > 0, "data.feature_dim must be positive");
  require(c.data.train_examples > 0 && c.data.val_examples > 0, "data.train_examples and data.val_examples must be positive");
  require(c.data.questions_per_image >= 1, "data.questions_per_image must be >= 1");
  require(c.data.noise >= 0.0, "data.noise must be >= 0");
  require(c.data.adjacent_count_score >= 0.0 && c.data.adjacent_count_score <= 1.0,
          "data.adjacent_count_score must be in [0, 1]");
  require(c.data.max_caption_len >= 5, "data.max_caption_len must be >= 5");
  require(c.min_word_count >= 1, "data.min_word_count must be >= 1");
  require(c.min_answer_count >= 1, "data.min_answer_count must be >= 1");
  require(c.max_question_len >= 1, "data.max_question_len must be >= 1");
  const auto& m = c.model;
  require(m.question_embed > 0 && m.question_hidden > 0 && m.word_dim > 0 && m.caption_hidden > 0 &&
              m.attention_hidden > 0 && m.decoder_embed > 0 && m.decoder_hidden > 0 && m.decoder_attention > 0,
          "model dimensions must be positive");
  require(m.lrelu_slope >= 0.0 && m.lrelu_slope < 1.0, "model.lrelu_slope must be in [0, 1)");
  require(c.train.epochs >= 0, "train.epochs must be >= 0");
  require(c.train.batch_size >= 1, "train.batch_size must be >= 1");
  require(c.train.lr > 0.0, "train.lr must be positive");
  require(c.train.beta1 >= 0.0 && c.train.beta1 < 1.0, "train.beta1 must be in [0, 1)");
  require(c.train.beta2 >= 0.0 && c.train.beta2 < 1.0, "train.beta2 must be in [0, 1)");
  require(c.train.eps > 0.0, "train.eps must be positive");
  require(c.train.clip_norm > 0.0, "train.clip_norm must be positive");
  require(c.train.divergence_threshold > 0.0, "train.divergence_threshold must be positive");
  require(c.train.threads >= 1, "train.threads must be >= 1");
  require(c.train.limit >= 0, "train.limit must be >= 0");
  require(c.xi >= 0.0, "select.xi must be >= 0");
  require(c.phase2.epochs >= 0, "phase2.epochs must be >= 0");
  require(c.phase2.lr_scale > 0.0, "phase2.lr_scale must be positive");
  require(c.phase2.captions >= 1, "phase2.captions must be >= 1");
  require(c.phase2.max_len >= 2, "phase2.max_len must be >= 2");
  require(c.phase2.temperature > 0.0, "phase2.temperature must be positive");
}

json model_config_to_json(const ModelConfig& m) {
  return {{"vocab_size", m.vocab_size},
          {"num_answers", m.num_answers},
          {"feature_dim", m.feature_dim},
          {"question_embed", m.question_embed},
          {"question_hidden", m.question_hidden},
          {"word_dim", m.word_dim},
          {"caption_hidden", m.caption_hidden},
          {"attention_hidden", m.attention_hidden},
          {"decoder_embed", m.decoder_embed},
          {"decoder_hidden", m.decoder_hidden},
          {"decoder_attention", m.decoder_attention},
          {"lrelu_slope", m.lrelu_slope},
          {"use_caa", m.use_caa},
          {"use_captions", m.use_captions},
          {"gate", gate_mode_name(m.gate)},
          {"pred", pred_mode_name(m.pred)},
          {"stop_gradient_vq", m.stop_gradient_vq}};
}

ModelConfig model_config_from_json(const json& j) {
  try {
    ModelConfig m;
    m.vocab_size = j.at("vocab_size").get<int>();
    m.num_answers = j.at("num_answers").get<int>();
    m.feature_dim = j.at("feature_dim").get<int>();
    m.question_embed = j.at("question_embed").get<int>();
    m.question_hidden = j.at("question_hidden").get<int>();
    m.word_dim = j.at("word_dim").get<int>();
    m.caption_hidden = j.at("caption_hidden").get<int>();
    m.attention_hidden = j.at("attention_hidden").get<int>();
    m.decoder_embed = j.at("decoder_embed").get<int>();
    m.decoder_hidden = j.at("decoder_hidden").get<int>();
    m.decoder_attention = j.at("decoder_attention").get<int>();
    m.lrelu_slope = j.at("lrelu_slope").get<double>();
    m.use_caa = j.at("use_caa").get<bool>();
    m.use_captions = j.at("use_captions").get<bool>();
    m.gate = gate_from_name(j.at("gate").get<std::string>());
    m.pred = pred_from_name(j.at("pred").get<std::string>());
    m.stop_gradient_vq = j.at("stop_gradient_vq").get<bool>();
    return m;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
}

}  // namespace relcap
