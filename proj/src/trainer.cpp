#include "relcap/trainer.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include <spdlog/spdlog.h>

#include "relcap/error.hpp"
#include "relcap/io.hpp"
#include "relcap/parallel.hpp"
#include "relcap/selection.hpp"

namespace relcap {

namespace {

using nlohmann::json;

constexpr std::uint64_t kShuffleStream = 2;
constexpr std::uint64_t kSampleStream = 3;
constexpr char kMagic[4] = {'R', 'C', 'A', 'P'};

json real_or_null(double v) { return std::isnan(v) ? json(nullptr) : json(v); }
double real_from(const json& j) { return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>(); }

json metrics_json(const EpochMetrics& m) {
  return {{"epoch", m.epoch},
          {"phase", m.phase},
          {"train_loss", real_or_null(m.train_loss)},
          {"val_soft_acc", real_or_null(m.val_soft_acc)},
          {"feasible_rate", real_or_null(m.feasible_rate)},
          {"planted_recovery", real_or_null(m.planted_recovery)},
          {"mean_inner_product", real_or_null(m.mean_inner_product)}};
}

EpochMetrics metrics_from(const json& j) {
  EpochMetrics m;
  m.epoch = j.at("epoch").get<int>();
  m.phase = j.at("phase").get<int>();
  m.train_loss = real_from(j.at("train_loss"));
  m.val_soft_acc = real_from(j.at("val_soft_acc"));
  m.feasible_rate = real_from(j.at("feasible_rate"));
  m.planted_recovery = real_from(j.at("planted_recovery"));
  m.mean_inner_product = real_from(j.at("mean_inner_product"));
  return m;
}

void append_array(std::string& out, const std::string& name, std::span<const double> values) {
  const std::size_t at = out.size();
  out.resize(at + 4 + name.size() + 8);
  io::store_le<std::uint32_t>(out.data() + at, static_cast<std::uint32_t>(name.size()));
  std::memcpy(out.data() + at + 4, name.data(), name.size());
  io::store_le<std::uint64_t>(out.data() + at + 4 + name.size(), values.size());
  io::append_le_doubles(out, values);
}

}  // namespace

std::vector<ExampleInput> encode_inputs(std::span<const data::ExampleRecord> records, const data::Vocabs& vocabs,
                                        const RunConfig& cfg) {
  std::vector<ExampleInput> out;
  out.reserve(records.size());
  int dropped = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto enc = data::encode_example(records[i], vocabs, cfg.max_question_len, cfg.data.max_caption_len);
    dropped += enc.dropped_answers;
    out.push_back(make_input(records[i], enc, static_cast<std::int64_t>(i)));
  }
  if (dropped > 0) spdlog::warn("{} answer(s) outside the candidate list; their score mass was dropped", dropped);
  return out;
}

PreparedData prepare_data(const RunConfig& cfg, const data::SplitDataset& ds, const data::Vocabs* vocabs) {
  if (ds.train.empty()) throw DataError("no training records");
  PreparedData p;
  p.vocabs = vocabs ? *vocabs : data::build_vocabs(ds.train, cfg.min_word_count, cfg.min_answer_count);
  std::span<const data::ExampleRecord> train(ds.train);
  if (cfg.train.limit > 0 && static_cast<std::size_t>(cfg.train.limit) < train.size()) {
    train = train.first(static_cast<std::size_t>(cfg.train.limit));
  }
  p.train = encode_inputs(train, p.vocabs, cfg);
  p.val = encode_inputs(ds.val, p.vocabs, cfg);
  p.model = cfg.model;
  p.model.vocab_size = p.vocabs.words.size();
  p.model.num_answers = static_cast<int>(p.vocabs.answers.size());
  p.model.feature_dim = ds.train.front().cols;
  return p;
}

EvalResult evaluate(const Model& model, std::span<const ExampleInput> examples, double xi, bool with_selection,
                    int threads) {
  const int n = static_cast<int>(examples.size());
  EvalResult r;
  r.count = n;
  r.predictions.assign(static_cast<std::size_t>(n), -1);
  r.selected.assign(static_cast<std::size_t>(n), -1);
  std::vector<double> acc(static_cast<std::size_t>(n), 0.0);
  std::vector<double> best_g(static_cast<std::size_t>(n), 0.0);
  const bool select = with_selection && model.cfg.use_captions;
  parallel_for(n, threads, [&](int i) {
    const auto& in = examples[static_cast<std::size_t>(i)];
    ad::Record rec(&model.store);
    ForwardOptions opts;
    opts.caption_losses = select;
    const ForwardTrace t = forward(rec, model, in, opts);
    const int pred = t.prediction.predicted;
    r.predictions[static_cast<std::size_t>(i)] = pred;
    acc[static_cast<std::size_t>(i)] = in.answer_scores[static_cast<std::size_t>(pred)];
    if (select) {
      const auto rep = sel::run_selection(rec, t, xi);
      if (rep.selected) {
        r.selected[static_cast<std::size_t>(i)] = *rep.selected;
        best_g[static_cast<std::size_t>(i)] = rep.g[static_cast<std::size_t>(*rep.selected)];
      }
    }
  });
  double total = 0.0;
  double g_total = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto& in = examples[static_cast<std::size_t>(i)];
    const double a = acc[static_cast<std::size_t>(i)];
    total += a;
    const auto type = data::question_type_name(static_cast<data::QuestionType>(in.question_type));
    r.type_acc[type] += a;
    r.type_count[type] += 1;
    const int s = r.selected[static_cast<std::size_t>(i)];
    if (s >= 0) {
      ++r.feasible;
      g_total += best_g[static_cast<std::size_t>(i)];
      if (in.relevant_caption >= 0) {
        ++r.planted_known;
        if (s == in.relevant_caption) ++r.planted_hits;
      }
    }
  }
  for (auto& [type, a] : r.type_acc) a /= r.type_count[type];
  const double nan = std::numeric_limits<double>::quiet_NaN();
  r.soft_acc = n > 0 ? total / n : nan;
  if (select) {
    r.feasible_rate = n > 0 ? static_cast<double>(r.feasible) / n : nan;
    r.planted_recovery = r.planted_known > 0 ? static_cast<double>(r.planted_hits) / r.planted_known : nan;
    r.mean_inner_product = r.feasible > 0 ? g_total / r.feasible : nan;
  } else {
    r.feasible_rate = nan;
    r.planted_recovery = nan;
    r.mean_inner_product = nan;
  }
  return r;
}

Trainer::Trainer(Model& model, RunConfig cfg, std::vector<ExampleInput> train, std::vector<ExampleInput> val)
    : model_(model),
      cfg_(std::move(cfg)),
      train_(std::move(train)),
      val_(std::move(val)),
      opt_(model.store, cfg_.train.lr, cfg_.train.beta1, cfg_.train.beta2, cfg_.train.eps) {
  if (train_.empty()) throw DataError("trainer: no training examples");
  state_.phase1_lr = cfg_.train.lr;
}

bool Trainer::caption_loss_on() const {
  return model_.cfg.use_captions && !(state_.phase == 2 && cfg_.phase2.vqa_only);
}

void Trainer::set_examples(std::vector<ExampleInput> train, std::vector<ExampleInput> val) {
  if (train.empty()) throw DataError("trainer: no training examples");
  train_ = std::move(train);
  val_ = std::move(val);
  order_epoch_ = -1;
}

std::vector<int> Trainer::epoch_order(int phase, int epoch) const {
  std::vector<int> order(train_.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(derive_seed(cfg_.seed, kShuffleStream, static_cast<std::uint64_t>(phase) * 1000003ULL +
                                                                  static_cast<std::uint64_t>(epoch)));
  shuffle_in_place(order, rng);
  return order;
}

int Trainer::batches_per_epoch() const {
  const int n = static_cast<int>(train_.size());
  return (n + cfg_.train.batch_size - 1) / cfg_.train.batch_size;
}

bool Trainer::epoch_complete() const { return state_.batch >= batches_per_epoch(); }

StepResult Trainer::step_on(std::span<const int> batch) {
  const int B = static_cast<int>(batch.size());
  if (B == 0) throw Error("trainer: empty batch");
  const double w = 1.0 / B;
  const bool captions = caption_loss_on();
  std::vector<double> losses(static_cast<std::size_t>(B), 0.0);
  std::vector<char> feasible(static_cast<std::size_t>(B), 0);

  auto run_one = [&](int i, ParamGrads& into) {
    const int idx = batch[static_cast<std::size_t>(i)];
    if (idx < 0 || idx >= static_cast<int>(train_.size())) throw Error("trainer: batch index out of range");
    ad::Record rec(&model_.store);
    ForwardOptions opts;
    opts.caption_losses = captions;
    const ForwardTrace t = forward(rec, model_, train_[static_cast<std::size_t>(idx)], opts);
    ad::DTensor loss = t.loss_vqa;
    if (!t.caption_losses.empty()) {
      const auto rep = sel::run_selection(rec, t, cfg_.xi);
      std::vector<ad::DTensor> nlls;
      for (const auto& c : t.caption_losses) nlls.push_back(c.nll);
      loss = sel::joint_loss(t.loss_vqa, nlls, rep.selected);
      feasible[static_cast<std::size_t>(i)] = rep.selected.has_value();
    }
    rec.backward(loss);
    into.accumulate(rec, w);
    losses[static_cast<std::size_t>(i)] = loss.item();
  };

  ParamGrads total(model_.store);
  const int threads = cfg_.train.threads;
  if (threads <= 1) {
    for (int i = 0; i < B; ++i) run_one(i, total);
  } else {
    // Per-example buffers summed in batch order: identical bits for any thread count.
    while (static_cast<int>(scratch_.size()) < B) scratch_.emplace_back(model_.store);
    parallel_for(B, threads, [&](int i) {
      scratch_[static_cast<std::size_t>(i)].zero();
      run_one(i, scratch_[static_cast<std::size_t>(i)]);
    });
    for (int i = 0; i < B; ++i) total.add(scratch_[static_cast<std::size_t>(i)]);
  }

  StepResult res;
  double sum = 0.0;
  for (int i = 0; i < B; ++i) {
    sum += losses[static_cast<std::size_t>(i)];
    res.feasible += feasible[static_cast<std::size_t>(i)];
  }
  res.loss = sum / B;
  if (!std::isfinite(res.loss) || res.loss > cfg_.train.divergence_threshold) {
    std::ostringstream os;
    os << "divergence guard: batch loss " << res.loss << " (threshold " << cfg_.train.divergence_threshold
       << ") at phase " << state_.phase << ", epoch " << state_.epoch + 1 << ", batch " << state_.batch
       << ", optimizer step " << opt_.step_count;
    throw NumericError(os.str());
  }
  const double norm = total.norm();
  if (norm > cfg_.train.clip_norm) {
    total.scale(cfg_.train.clip_norm / norm);
    res.clipped = true;
    ++state_.clipped_steps;
    spdlog::debug("gradient norm {:.4g} clipped to {}", norm, cfg_.train.clip_norm);
  }
  opt_.step(model_.store, total);
  return res;
}

StepResult Trainer::train_step() {
  if (epoch_complete()) throw Error("trainer: epoch already complete; call end_epoch");
  if (order_epoch_ != state_.epoch || order_phase_ != state_.phase) {
    order_ = epoch_order(state_.phase, state_.epoch);
    order_epoch_ = state_.epoch;
    order_phase_ = state_.phase;
  }
  const int B = cfg_.train.batch_size;
  const int begin = state_.batch * B;
  const int end = std::min(begin + B, static_cast<int>(order_.size()));
  const std::span<const int> batch(order_.data() + begin, static_cast<std::size_t>(end - begin));
  const StepResult r = step_on(batch);
  state_.loss_sum += r.loss * (end - begin);
  state_.loss_count += end - begin;
  ++state_.batch;
  return r;
}

EpochMetrics Trainer::end_epoch() {
  if (!epoch_complete()) throw Error("trainer: end_epoch before the epoch's batches ran");
  EpochMetrics m;
  m.epoch = state_.epoch + 1;
  m.phase = state_.phase;
  m.train_loss = state_.loss_count > 0 ? state_.loss_sum / static_cast<double>(state_.loss_count) : 0.0;
  const EvalResult ev = evaluate(model_, val_, cfg_.xi, model_.cfg.use_captions, cfg_.train.threads);
  m.val_soft_acc = ev.soft_acc;
  m.feasible_rate = ev.feasible_rate;
  m.planted_recovery = ev.planted_recovery;
  m.mean_inner_product = ev.mean_inner_product;
  state_.history.push_back(m);
  spdlog::info("phase {} epoch {}: train_loss {:.4f} val_soft_acc {:.4f} feasible {:.3f} planted {:.3f} clipped {}",
               m.phase, m.epoch, m.train_loss, m.val_soft_acc, m.feasible_rate, m.planted_recovery,
               state_.clipped_steps);
  ++state_.epoch;
  state_.batch = 0;
  state_.loss_sum = 0.0;
  state_.loss_count = 0;
  return m;
}

EpochMetrics Trainer::run_epoch() {
  while (!epoch_complete()) train_step();
  return end_epoch();
}

void Trainer::begin_phase2() {
  if (state_.phase == 2) throw Error("trainer: already in phase 2");
  if (state_.batch != 0) throw Error("trainer: phase 2 must start at an epoch boundary");
  state_.phase = 2;
  state_.epoch = 0;
  opt_.lr = state_.phase1_lr * cfg_.phase2.lr_scale;
}

std::string Trainer::checkpoint_bytes(std::uint64_t vocab_hash) const {
  json manifest;
  manifest["format"] = "relcap-checkpoint";
  manifest["version"] = kCheckpointVersion;
  manifest["model"] = model_config_to_json(model_.cfg);
  manifest["config"] = config_to_json(cfg_);
  manifest["vocab_hash"] = vocab_hash;
  manifest["state"] = {{"phase", state_.phase},
                       {"epoch", state_.epoch},
                       {"batch", state_.batch},
                       {"loss_count", state_.loss_count},
                       {"clipped_steps", state_.clipped_steps},
                       {"step_count", opt_.step_count},
                       {"seed", cfg_.seed}};
  json history = json::array();
  for (const auto& m : state_.history) history.push_back(metrics_json(m));
  manifest["history"] = history;
  json params = json::array();
  for (const auto& p : model_.store) params.push_back({{"name", p.name}, {"shape", {p.shape.rows, p.shape.cols}}});
  manifest["params"] = params;

  const std::string text = manifest.dump();
  std::string out(16, '\0');
  std::memcpy(out.data(), kMagic, 4);
  io::store_le<std::uint32_t>(out.data() + 4, kCheckpointVersion);
  io::store_le<std::uint64_t>(out.data() + 8, text.size());
  out += text;
  const std::vector<double> reals{state_.loss_sum, state_.phase1_lr, opt_.lr, opt_.beta1, opt_.beta2, opt_.eps};
  append_array(out, "state", reals);
  for (int i = 0; i < model_.store.size(); ++i) {
    const auto& p = model_.store[i];
    append_array(out, "param:" + p.name, p.value);
    append_array(out, "m:" + p.name, opt_.m[static_cast<std::size_t>(i)]);
    append_array(out, "u:" + p.name, opt_.u[static_cast<std::size_t>(i)]);
  }
  return out;
}

void Trainer::save_checkpoint(const std::filesystem::path& path, std::uint64_t vocab_hash) const {
  io::write_file_atomic(path, checkpoint_bytes(vocab_hash));
}

CheckpointContents parse_checkpoint(const std::string& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw CheckpointError("checkpoint: bad magic");
  const auto version = io::load_le<std::uint32_t>(bytes.data() + 4);
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint: version " + std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  const auto len = io::load_le<std::uint64_t>(bytes.data() + 8);
  if (len > bytes.size() - 16) throw CheckpointError("checkpoint: truncated manifest");
  CheckpointContents ck;
  try {
    ck.manifest = json::parse(bytes.substr(16, len));
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("checkpoint: manifest parse error: ") + e.what());
  }
  std::size_t at = 16 + len;
  while (at < bytes.size()) {
    if (bytes.size() - at < 4) throw CheckpointError("checkpoint: truncated array header");
    const auto name_len = io::load_le<std::uint32_t>(bytes.data() + at);
    if (bytes.size() - at - 4 < static_cast<std::size_t>(name_len) + 8) throw CheckpointError("checkpoint: truncated array header");
    std::string name(bytes.data() + at + 4, name_len);
    const auto count = io::load_le<std::uint64_t>(bytes.data() + at + 4 + name_len);
    at += 4 + name_len + 8;
    if (count > (bytes.size() - at) / 8) throw CheckpointError("checkpoint: array " + name + " is truncated");
    ck.arrays[name] = io::read_le_doubles(bytes.data() + at, count);
    at += count * 8;
  }
  if (!ck.arrays.contains("state")) throw CheckpointError("checkpoint: missing state array");
  return ck;
}

void Trainer::restore(const std::string& bytes, std::uint64_t vocab_hash) {
  const CheckpointContents ck = parse_checkpoint(bytes);
  const auto& man = ck.manifest;
  try {
    if (man.at("vocab_hash").get<std::uint64_t>() != vocab_hash) {
      throw CheckpointError("checkpoint: vocabulary hash does not match the dataset");
    }
    if (man.at("model") != model_config_to_json(model_.cfg)) {
      throw CheckpointError("checkpoint: model config differs from the model being restored");
    }
    const auto& params = man.at("params");
    if (static_cast<int>(params.size()) != model_.store.size()) throw CheckpointError("checkpoint: parameter count mismatch");
    for (int i = 0; i < model_.store.size(); ++i) {
      auto& p = model_.store[i];
      if (params[static_cast<std::size_t>(i)].at("name").get<std::string>() != p.name) {
        throw CheckpointError("checkpoint: parameter " + std::to_string(i) + " is not " + p.name);
      }
      for (const char* prefix : {"param:", "m:", "u:"}) {
        const auto it = ck.arrays.find(prefix + p.name);
        if (it == ck.arrays.end() || it->second.size() != p.value.size()) {
          throw CheckpointError(std::string("checkpoint: array ") + prefix + p.name + " missing or mis-sized");
        }
      }
      p.value = ck.arrays.at("param:" + p.name);
      opt_.m[static_cast<std::size_t>(i)] = ck.arrays.at("m:" + p.name);
      opt_.u[static_cast<std::size_t>(i)] = ck.arrays.at("u:" + p.name);
    }
    const auto& st = man.at("state");
    state_.phase = st.at("phase").get<int>();
    state_.epoch = st.at("epoch").get<int>();
    state_.batch = st.at("batch").get<int>();
    state_.loss_count = st.at("loss_count").get<std::int64_t>();
    state_.clipped_steps = st.at("clipped_steps").get<std::int64_t>();
    opt_.step_count = st.at("step_count").get<std::int64_t>();
    state_.history.clear();
    for (const auto& m : man.at("history")) state_.history.push_back(metrics_from(m));
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("checkpoint: ") + e.what());
  }
  const auto& reals = ck.arrays.at("state");
  if (reals.size() != 6) throw CheckpointError("checkpoint: state array has the wrong length");
  state_.loss_sum = reals[0];
  state_.phase1_lr = reals[1];
  opt_.lr = reals[2];
  opt_.beta1 = reals[3];
  opt_.beta2 = reals[4];
  opt_.eps = reals[5];
  order_epoch_ = -1;
}

Model model_from_checkpoint(const CheckpointContents& ck) {
  Model m = Model::create(model_config_from_json(ck.manifest.at("model")), 0);
  for (int i = 0; i < m.store.size(); ++i) {
    auto& p = m.store[i];
    const auto it = ck.arrays.find("param:" + p.name);
    if (it == ck.arrays.end() || it->second.size() != p.value.size()) {
      throw CheckpointError("checkpoint: parameter " + p.name + " missing or mis-sized");
    }
    p.value = it->second;
  }
  return m;
}

void write_metrics_csv(const std::filesystem::path& path, std::span<const EpochMetrics> rows) {
  std::ostringstream os;
  os << "epoch,phase,train_loss,val_soft_acc,feasible_rate,planted_recovery,mean_inner_product\n";
  os << std::setprecision(17);
  for (const auto& m : rows) {
    os << m.epoch << ',' << m.phase << ',' << m.train_loss << ',' << m.val_soft_acc << ',' << m.feasible_rate << ','
       << m.planted_recovery << ',' << m.mean_inner_product << '\n';
  }
  io::write_file_atomic(path, os.str());
}

std::vector<EpochMetrics> read_metrics_csv(const std::filesystem::path& path) {
  std::istringstream in(io::read_file(path));
  std::string line;
  if (!std::getline(in, line) || line.rfind("epoch,phase,", 0) != 0) {
    throw DataError("metrics file " + path.string() + " has no header");
  }
  std::vector<EpochMetrics> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 7) throw DataError("metrics file " + path.string() + ": line " + std::to_string(lineno) + " needs 7 fields");
    try {
      EpochMetrics m;
      m.epoch = std::stoi(cells[0]);
      m.phase = std::stoi(cells[1]);
      m.train_loss = std::stod(cells[2]);
      m.val_soft_acc = std::stod(cells[3]);
      m.feasible_rate = std::stod(cells[4]);
      m.planted_recovery = std::stod(cells[5]);
      m.mean_inner_product = std::stod(cells[6]);
      rows.push_back(m);
    } catch (const std::exception&) {
      throw DataError("metrics file " + path.string() + ": bad number on line " + std::to_string(lineno));
    }
  }
  if (rows.empty()) throw DataError("metrics file " + path.string() + " has no rows");
  return rows;
}

std::vector<CaptionDumpEntry> generate_caption_dump(const Model& model, const std::string& split,
                                                    std::span<const data::ExampleRecord> records,
                                                    std::span<const ExampleInput> inputs, const data::Vocabs& vocabs,
                                                    const Phase2Config& p2, std::uint64_t seed, int threads) {
  if (records.size() != inputs.size()) throw Error("generate_caption_dump: records and inputs differ in length");
  std::vector<CaptionDumpEntry> out(inputs.size());
  const std::uint64_t split_seed = derive_seed(seed, kSampleStream, data::fnv1a(split));
  parallel_for(static_cast<int>(inputs.size()), threads, [&](int i) {
    const auto& in = inputs[static_cast<std::size_t>(i)];
    ad::Record rec(&model.store);
    const ad::DTensor v = rec.constant({in.rows(), in.cols}, in.features);
    const ad::DTensor q = enc::embed_question(rec, model.enc, model.cfg, in.question);
    const auto qa = enc::attend_question_visual(rec, model.enc, model.cfg, v, q);
    cap::GenerateOptions opts;
    opts.mode = cap::DecodeMode::kSample;
    opts.count = p2.captions;
    opts.max_len = p2.max_len;
    opts.temperature = p2.temperature;
    opts.seed = derive_seed(split_seed, static_cast<std::uint64_t>(i));
    const auto caps = cap::generate(model.store, model.dec, model.cfg, qa.vq.values(), in.rows(), opts);
    auto& e = out[static_cast<std::size_t>(i)];
    e.split = split;
    e.example = i;
    e.image_id = records[static_cast<std::size_t>(i)].image_id;
    e.question = records[static_cast<std::size_t>(i)].question;
    for (const auto& c : caps) {
      std::string text;
      for (int tok : c.tokens) {
        if (tok == data::Vocab::kEnd) break;
        if (!text.empty()) text += ' ';
        text += vocabs.words.token(tok);
      }
      e.captions.push_back(text);
      e.log_probs.push_back(c.log_prob);
    }
  });
  return out;
}

void write_caption_dump(const std::filesystem::path& path, std::span<const CaptionDumpEntry> entries) {
  std::string text;
  for (const auto& e : entries) {
    json caps = json::array();
    for (std::size_t i = 0; i < e.captions.size(); ++i) {
      caps.push_back({{"text", e.captions[i]}, {"log_prob", e.log_probs[i]}});
    }
    text += json{{"split", e.split}, {"example", e.example}, {"image_id", e.image_id}, {"question", e.question},
                 {"captions", caps}}
                .dump() +
            "\n";
  }
  io::write_file_atomic(path, text);
}

std::vector<CaptionDumpEntry> read_caption_dump(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError("caption dump " + path.string() + " is missing");
  std::istringstream in(io::read_file(path));
  std::vector<CaptionDumpEntry> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      CaptionDumpEntry e;
      e.split = j.at("split").get<std::string>();
      e.example = j.at("example").get<std::int64_t>();
      e.image_id = j.at("image_id").get<std::int64_t>();
      e.question = j.at("question").get<std::string>();
      for (const auto& c : j.at("captions")) {
        e.captions.push_back(c.at("text").get<std::string>());
        e.log_probs.push_back(c.at("log_prob").get<double>());
      }
      out.push_back(std::move(e));
    } catch (const json::exception& ex) {
      throw DataError("caption dump line " + std::to_string(out.size() + 1) + ": " + ex.what());
    }
  }
  return out;
}

std::vector<ExampleInput> swap_captions(std::vector<ExampleInput> inputs, std::span<const CaptionDumpEntry> dump,
                                        const std::string& split, const data::Vocabs& vocabs, int expected,
                                        int max_caption_len) {
  std::map<std::int64_t, const CaptionDumpEntry*> by_example;
  for (const auto& e : dump) {
    if (e.split == split) by_example[e.example] = &e;
  }
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto it = by_example.find(static_cast<std::int64_t>(i));
    if (it == by_example.end()) throw DataError("caption dump has no entry for " + split + " example " + std::to_string(i));
    const auto& e = *it->second;
    if (static_cast<int>(e.captions.size()) != expected) {
      throw DataError("caption dump entry for " + split + " example " + std::to_string(i) + " has " +
                      std::to_string(e.captions.size()) + " captions (expected " + std::to_string(expected) + ")");
    }
    inputs[i].caption_tokens.clear();
    for (const auto& c : e.captions) inputs[i].caption_tokens.push_back(data::encode_caption(c, vocabs.words, max_caption_len));
    inputs[i].relevant_caption = -1;
  }
  return inputs;
}

}  // namespace relcap
