// relcap command-line entry point.

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "relcap/attn_eval.hpp"
#include "relcap/config.hpp"
#include "relcap/error.hpp"
#include "relcap/gradcheck.hpp"
#include "relcap/io.hpp"
#include "relcap/log.hpp"
#include "relcap/report.hpp"
#include "relcap/trainer.hpp"

using namespace relcap;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

class UsageError : public Error {
 public:
  using Error::Error;
};

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  bool force = false;
  std::optional<int> threads;
};

struct Options {
  std::string data;
  std::string checkpoint;
  std::string captions_dump;
  std::optional<int> epochs;
  std::optional<int> limit;
  std::optional<int> captions;
  bool ablate_captions = false;
  bool no_caa = false;
  bool vqa_only = false;
  std::string split = "val";
  std::vector<std::string> metrics;
  std::vector<std::string> emd;
};

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// defaults < config file < flags. A run manifest is accepted as a config
// file; its resolved config is replayed.
RunConfig resolve_config(const Globals& g, const Options& o) {
  RunConfig rc;
  if (!g.config.empty()) {
    json j;
    try {
      j = json::parse(io::read_file(g.config));
    } catch (const json::exception& e) {
      throw ConfigError("config " + g.config + ": " + e.what());
    }
    if (j.contains("command") && j.contains("config")) j = j.at("config");
    rc = apply_config_json(rc, j);
  }
  if (g.seed) rc.seed = *g.seed;
  if (g.threads) rc.train.threads = *g.threads;
  if (o.captions) rc.data.num_captions = *o.captions;
  if (o.limit) rc.train.limit = *o.limit;
  if (o.ablate_captions) rc.model.use_captions = false;
  if (o.no_caa) rc.model.use_caa = false;
  if (o.vqa_only) rc.phase2.vqa_only = true;
  validate_config(rc);
  return rc;
}

class Manifest {
 public:
  Manifest(std::string command, const fs::path& out) : path_(out / (command + ".manifest.json")) {
    doc_["command"] = std::move(command);
    doc_["git_describe"] = build_describe();
    doc_["started"] = utc_now();
    doc_["finished"] = nullptr;
    doc_["status"] = "running";
    doc_["inputs"] = json::object();
    doc_["outputs"] = json::array();
  }
  void set_config(const RunConfig& rc) {
    doc_["config"] = config_to_json(rc);
    doc_["seeds"] = {{"seed", rc.seed},
                     {"init", derive_seed(rc.seed, 1)},
                     {"shuffle_stream", 2},
                     {"sample_stream", 3}};
  }
  void input(const std::string& key, const fs::path& p) { doc_["inputs"][key] = p.string(); }
  void output(const fs::path& p) { doc_["outputs"].push_back(p.string()); }
  void note(const std::string& key, json value) { doc_[key] = std::move(value); }
  void write() const { io::write_file_atomic(path_, doc_.dump(2) + "\n"); }
  void finish(const std::string& status) {
    doc_["status"] = status;
    doc_["finished"] = utc_now();
    write();
  }

 private:
  fs::path path_;
  json doc_;
};

void prepare_out(const fs::path& out, const std::vector<fs::path>& products, bool force) {
  for (const auto& p : products) {
    if (fs::exists(out / p) && !force) {
      throw UsageError((out / p).string() + " exists (use --force to overwrite)");
    }
  }
  fs::create_directories(out);
}

struct Dataset {
  data::SplitDataset ds;
  data::Vocabs vocabs;
};

Dataset load_dataset(const std::string& dir) {
  if (dir.empty()) throw UsageError("--data DIR is required");
  const fs::path d(dir);
  if (!fs::exists(d / "vocab.json")) throw UsageError("no dataset at " + dir + " (expected vocab.json, train/, val/)");
  Dataset out;
  out.ds.train = data::load_records(d / "train");
  out.ds.val = data::load_records(d / "val");
  out.vocabs = data::load_vocabs(d / "vocab.json");
  return out;
}

CheckpointContents load_checkpoint(const std::string& path) {
  if (path.empty()) throw UsageError("--checkpoint PATH is required");
  if (!fs::exists(path)) throw UsageError("checkpoint " + path + " does not exist");
  return parse_checkpoint(io::read_file(path));
}

void check_vocab(const CheckpointContents& ck, const data::Vocabs& vocabs) {
  if (ck.manifest.at("vocab_hash").get<std::uint64_t>() != vocabs.hash()) {
    throw CheckpointError("checkpoint vocabulary hash does not match the dataset's vocab.json");
  }
}

// Trains until the current phase reaches `epochs`, checkpointing and
// rewriting the metrics file after every epoch.
void run_phase(Trainer& tr, int epochs, const fs::path& ckpt, const fs::path& metrics, std::uint64_t vocab_hash) {
  while (tr.state().epoch < epochs) {
    tr.run_epoch();
    tr.save_checkpoint(ckpt, vocab_hash);
    write_metrics_csv(metrics, tr.state().history);
  }
}

int cmd_gen_data(const Globals& g, const Options& o) {
  RunConfig rc = resolve_config(g, o);
  const fs::path out(g.out);
  prepare_out(out, {"train", "val", "vocab.json"}, g.force);
  Manifest man("gen-data", out);
  man.set_config(rc);
  man.write();
  const auto ds = data::generate_dataset(rc.data, rc.seed);
  const auto vocabs = data::build_vocabs(ds.train, rc.min_word_count, rc.min_answer_count);
  data::save_records(out / "train", ds.train);
  data::save_records(out / "val", ds.val);
  data::save_vocabs(out / "vocab.json", vocabs);
  for (const char* p : {"train", "val", "vocab.json"}) man.output(out / p);
  std::cout << "records: train " << ds.train.size() << ", val " << ds.val.size() << "\n"
            << "word vocab: " << vocabs.words.size() << "\n"
            << "answer candidates: " << vocabs.answers.size() << "\n";
  man.finish("ok");
  return 0;
}

int cmd_train(const Globals& g, const Options& o) {
  RunConfig rc = resolve_config(g, o);
  if (o.epochs) rc.train.epochs = *o.epochs;
  validate_config(rc);
  const fs::path out(g.out);
  Dataset d;
  if (o.data.empty()) {
    spdlog::info("no --data given; generating the dataset in memory from data.* and the seed");
    d.ds = data::generate_dataset(rc.data, rc.seed);
    d.vocabs = data::build_vocabs(d.ds.train, rc.min_word_count, rc.min_answer_count);
  } else {
    d = load_dataset(o.data);
  }
  prepare_out(out, {"phase1.ckpt", "metrics.csv"}, g.force);
  auto prep = prepare_data(rc, d.ds, &d.vocabs);
  rc.model = prep.model;
  Manifest man("train", out);
  man.set_config(rc);
  if (!o.data.empty()) man.input("data", o.data);
  man.output(out / "phase1.ckpt");
  man.output(out / "metrics.csv");
  man.write();

  Model model = Model::create(rc.model, derive_seed(rc.seed, 1));
  Trainer tr(model, rc, std::move(prep.train), std::move(prep.val));
  try {
    run_phase(tr, rc.train.epochs, out / "phase1.ckpt", out / "metrics.csv", d.vocabs.hash());
  } catch (const NumericError& e) {
    man.finish("diverged");
    throw;
  }
  man.finish("ok");
  return 0;
}

// Rebuilds the trainer of a checkpoint against the dataset it was trained on.
struct Resumed {
  Dataset d;
  RunConfig rc;
  PreparedData prep;
  Model model;
  std::unique_ptr<Trainer> trainer;
};

std::unique_ptr<Resumed> resume(const Globals& g, const Options& o) {
  const auto ck = load_checkpoint(o.checkpoint);
  auto r = std::make_unique<Resumed>();
  r->d = load_dataset(o.data);
  check_vocab(ck, r->d.vocabs);
  RunConfig rc = apply_config_json(RunConfig{}, ck.manifest.at("config"));
  if (!g.config.empty()) {
    rc = apply_config_json(rc, json::parse(io::read_file(g.config)));
  }
  if (g.threads) rc.train.threads = *g.threads;
  if (o.vqa_only) rc.phase2.vqa_only = true;
  if (o.epochs) rc.phase2.epochs = *o.epochs;
  validate_config(rc);
  r->prep = prepare_data(rc, r->d.ds, &r->d.vocabs);
  rc.model = model_config_from_json(ck.manifest.at("model"));
  r->rc = rc;
  r->model = Model::create(rc.model, 0);
  r->trainer = std::make_unique<Trainer>(r->model, rc, r->prep.train, r->prep.val);
  r->trainer->restore(io::read_file(o.checkpoint), r->d.vocabs.hash());
  return r;
}

std::span<const data::ExampleRecord> limited(const std::vector<data::ExampleRecord>& recs, std::size_t n) {
  return std::span(recs).first(std::min(n, recs.size()));
}

std::vector<CaptionDumpEntry> make_dump(const Resumed& r) {
  const auto& p2 = r.rc.phase2;
  auto dump = generate_caption_dump(r.model, "train", limited(r.d.ds.train, r.prep.train.size()), r.prep.train,
                                    r.d.vocabs, p2, r.rc.seed, r.rc.train.threads);
  auto val = generate_caption_dump(r.model, "val", r.d.ds.val, r.prep.val, r.d.vocabs, p2, r.rc.seed,
                                   r.rc.train.threads);
  dump.insert(dump.end(), val.begin(), val.end());
  return dump;
}

int cmd_generate_captions(const Globals& g, const Options& o) {
  auto r = resume(g, o);
  const fs::path out(g.out);
  prepare_out(out, {"captions.jsonl"}, g.force);
  Manifest man("generate-captions", out);
  man.set_config(r->rc);
  man.input("checkpoint", o.checkpoint);
  man.input("data", o.data);
  man.output(out / "captions.jsonl");
  man.write();
  write_caption_dump(out / "captions.jsonl", make_dump(*r));
  man.finish("ok");
  return 0;
}

int cmd_finetune(const Globals& g, const Options& o) {
  if (o.checkpoint.empty()) throw UsageError("finetune needs --checkpoint (a phase-1 checkpoint from `train`)");
  auto r = resume(g, o);
  Trainer& tr = *r->trainer;
  const fs::path out(g.out);
  prepare_out(out, {"phase2.ckpt", "metrics.csv"}, g.force);
  Manifest man("finetune", out);
  man.set_config(r->rc);
  man.input("checkpoint", o.checkpoint);
  man.input("data", o.data);
  man.output(out / "phase2.ckpt");
  man.output(out / "metrics.csv");

  if (tr.state().phase == 1) {
    if (tr.state().batch != 0) throw UsageError("checkpoint is mid-epoch; finish phase 1 first");
    std::vector<CaptionDumpEntry> dump;
    if (!o.captions_dump.empty()) {
      man.input("captions_dump", o.captions_dump);
      dump = read_caption_dump(o.captions_dump);
    } else {
      dump = make_dump(*r);
      write_caption_dump(out / "captions.jsonl", dump);
      man.output(out / "captions.jsonl");
    }
    const int n = r->rc.phase2.captions;
    const int len = r->rc.data.max_caption_len;
    tr.set_examples(swap_captions(tr.train_examples(), dump, "train", r->d.vocabs, n, len),
                    swap_captions(tr.val_examples(), dump, "val", r->d.vocabs, n, len));
    tr.begin_phase2();
  }
  man.note("schedule", {{"phase1_lr", tr.state().phase1_lr}, {"phase2_lr", tr.optimizer().lr}});
  man.write();
  spdlog::info("phase 2: lr {} ({} x phase 1)", tr.optimizer().lr, r->rc.phase2.lr_scale);
  try {
    run_phase(tr, r->rc.phase2.epochs, out / "phase2.ckpt", out / "metrics.csv", r->d.vocabs.hash());
  } catch (const NumericError&) {
    man.finish("diverged");
    throw;
  }
  man.finish("ok");
  return 0;
}

struct Evaluated {
  Dataset d;
  RunConfig rc;
  Model model;
  std::vector<ExampleInput> inputs;
  std::span<const data::ExampleRecord> records;
};

Evaluated load_for_eval(const Globals& g, const Options& o) {
  const auto ck = load_checkpoint(o.checkpoint);
  Evaluated e;
  e.d = load_dataset(o.data);
  check_vocab(ck, e.d.vocabs);
  e.rc = apply_config_json(RunConfig{}, ck.manifest.at("config"));
  if (g.threads) e.rc.train.threads = *g.threads;
  e.model = model_from_checkpoint(ck);
  if (o.split != "train" && o.split != "val") throw UsageError("--split must be train or val");
  const auto& recs = o.split == "train" ? e.d.ds.train : e.d.ds.val;
  e.records = recs;
  e.inputs = encode_inputs(recs, e.d.vocabs, e.rc);
  return e;
}

int cmd_eval(const Globals& g, const Options& o) {
  auto e = load_for_eval(g, o);
  const fs::path out(g.out);
  prepare_out(out, {"eval.json"}, g.force);
  Manifest man("eval", out);
  man.set_config(e.rc);
  man.input("checkpoint", o.checkpoint);
  man.input("data", o.data);
  man.output(out / "eval.json");
  man.write();
  const auto ev = evaluate(e.model, e.inputs, e.rc.xi, e.model.cfg.use_captions, e.rc.train.threads);
  json j = {{"split", o.split}, {"soft_accuracy", ev.soft_acc}, {"count", ev.count}, {"by_type", json::object()}};
  std::cout << "soft accuracy (" << o.split << ", " << ev.count << " questions): " << ev.soft_acc << "\n";
  for (const auto& [type, acc] : ev.type_acc) {
    std::cout << "  " << type << ": " << acc << " (" << ev.type_count.at(type) << ")\n";
    j["by_type"][type] = {{"soft_accuracy", acc}, {"count", ev.type_count.at(type)}};
  }
  if (e.model.cfg.use_captions) {
    j["feasible_rate"] = ev.feasible_rate;
    j["planted_recovery"] = std::isnan(ev.planted_recovery) ? json(nullptr) : json(ev.planted_recovery);
    std::cout << "feasible rate: " << ev.feasible_rate << ", planted recovery: " << ev.planted_recovery << "\n";
  }
  io::write_file_atomic(out / "eval.json", j.dump(2) + "\n");
  man.finish("ok");
  return 0;
}

int cmd_emd(const Globals& g, const Options& o) {
  auto e = load_for_eval(g, o);
  const fs::path out(g.out);
  prepare_out(out, {"emd.json", "emd_caa.csv", "emd_no_caa.csv"}, g.force);
  Manifest man("emd", out);
  man.set_config(e.rc);
  man.input("checkpoint", o.checkpoint);
  man.input("data", o.data);
  man.write();
  json summary = json::object();
  for (const bool caa : {false, true}) {
    if (caa && !e.model.cfg.use_caa) {
      spdlog::info("model trained without CAA; only the w/o-CAA weights are evaluated");
      summary["caa"] = nullptr;
      continue;
    }
    const auto rep = attn::evaluate_attention(e.model, e.records, e.inputs, caa, e.rc.train.threads);
    const fs::path csv = out / (caa ? "emd_caa.csv" : "emd_no_caa.csv");
    attn::write_attention_csv(csv, rep);
    man.output(csv);
    summary[caa ? "caa" : "no_caa"] = attn::attention_summary(rep);
    std::cout << (caa ? "w CAA" : "w/o CAA") << ": mean EMD " << rep.mean << " over " << rep.rows.size()
              << " records (" << rep.skipped << " skipped)\n";
  }
  io::write_file_atomic(out / "emd.json", summary.dump(2) + "\n");
  man.output(out / "emd.json");
  man.finish("ok");
  return 0;
}

int cmd_gradcheck(const Globals& g, const Options&) {
  const auto results = gc::run_suite(g.seed.value_or(0));
  bool ok = true;
  for (const auto& r : results) {
    std::cout << (r.passed ? "ok   " : "FAIL ") << r.name << ": " << r.checked << " entries, max rel error "
              << r.max_rel_error;
    if (!r.passed) std::cout << " at " << r.worst;
    std::cout << "\n";
    ok = ok && r.passed;
  }
  std::cout << (ok ? "all gradient checks passed\n" : "gradient check FAILED\n");
  return ok ? 0 : 1;
}

std::string run_id(const fs::path& p) {
  const auto parent = p.parent_path().filename().string();
  return parent.empty() || parent == "." ? p.stem().string() : parent;
}

int cmd_report(const Globals& g, const Options& o) {
  if (o.metrics.empty() && o.emd.empty()) throw UsageError("report needs --metrics and/or --emd files");
  std::vector<report::Run> runs;
  for (const auto& m : o.metrics) {
    auto rows = read_metrics_csv(m);
    if (rows.empty()) throw DataError("metrics file " + m + " is empty");
    runs.push_back({run_id(m), std::move(rows)});
  }
  std::vector<report::EmdSummary> emds;
  const auto mean_of = [](const json& j) {
    return j.is_null() || j.at("mean").is_null() ? std::nan("") : j.at("mean").get<double>();
  };
  for (const auto& f : o.emd) {
    const json j = json::parse(io::read_file(f));
    emds.push_back({run_id(f), mean_of(j.value("caa", json())), mean_of(j.value("no_caa", json()))});
  }
  const fs::path out(g.out);
  std::vector<fs::path> products{"summary.md"};
  if (!runs.empty()) products.insert(products.end(), {"loss.svg", "accuracy.svg", "planted.svg"});
  if (!emds.empty()) products.emplace_back("emd.svg");
  prepare_out(out, products, g.force);
  if (!runs.empty()) {
    io::write_file_atomic(out / "loss.svg", report::line_chart("Training loss", "mean joint loss", runs,
                                                               [](const EpochMetrics& m) { return m.train_loss; }));
    io::write_file_atomic(out / "accuracy.svg",
                          report::line_chart("Validation soft accuracy", "soft accuracy", runs,
                                             [](const EpochMetrics& m) { return m.val_soft_acc; }));
    io::write_file_atomic(out / "planted.svg",
                          report::line_chart("Planted caption recovery", "recovery rate", runs,
                                             [](const EpochMetrics& m) { return m.planted_recovery; }));
  }
  if (!emds.empty()) io::write_file_atomic(out / "emd.svg", report::emd_bars(emds));
  io::write_file_atomic(out / "summary.md", report::summary_markdown(runs, emds));
  for (const auto& p : products) std::cout << (out / p).string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  init_logging_from_env();
  CLI::App app{"relcap: VQA with gradient-selected question-relevant captions"};
  app.require_subcommand(1);
  Globals g;
  Options o;
  app.add_option("--config", g.config, "JSON config file (or a run manifest to replay)");
  app.add_option("--seed", g.seed, "master seed");
  app.add_option("--out", g.out, "output directory");
  app.add_flag("--force", g.force, "overwrite existing outputs");
  app.add_option("--threads", g.threads, "worker threads")->check(CLI::PositiveNumber);

  auto* gen = app.add_subcommand("gen-data", "generate the synthetic dataset");
  gen->add_option("--captions", o.captions, "captions per question (data.num_captions)");

  auto* train = app.add_subcommand("train", "phase 1: train on gold captions");
  train->add_option("--data", o.data, "dataset directory from gen-data");
  train->add_option("--epochs", o.epochs, "phase-1 epochs");
  train->add_option("--limit", o.limit, "use only the first N training examples");
  train->add_flag("--ablate-captions", o.ablate_captions, "train without captions");
  train->add_flag("--no-caa", o.no_caa, "fix the caption attention weights to 1.0");

  auto* gencap = app.add_subcommand("generate-captions", "sample captions from a checkpoint");
  gencap->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();
  gencap->add_option("--data", o.data, "dataset directory")->required();

  auto* fine = app.add_subcommand("finetune", "phase 2: fine-tune on generated captions");
  fine->add_option("--checkpoint", o.checkpoint, "phase-1 checkpoint");
  fine->add_option("--data", o.data, "dataset directory");
  fine->add_option("--captions-dump", o.captions_dump, "captions from generate-captions (sampled when absent)");
  fine->add_option("--epochs", o.epochs, "phase-2 epochs");
  fine->add_flag("--phase2-vqa-only", o.vqa_only, "phase 2 without the caption loss");

  auto* eval = app.add_subcommand("eval", "soft accuracy by question type");
  auto* emd = app.add_subcommand("emd", "attention EMD with and without CAA");
  for (auto* sub : {eval, emd}) {
    sub->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();
    sub->add_option("--data", o.data, "dataset directory")->required();
    sub->add_option("--split", o.split, "train or val");
  }

  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of every gradient");

  auto* rep = app.add_subcommand("report", "SVG charts and a markdown summary");
  rep->add_option("--metrics", o.metrics, "metrics.csv files (run id = parent directory)");
  rep->add_option("--emd", o.emd, "emd.json files");

  for (auto* sub : {gen, train, gencap, fine, eval, emd, grad, rep}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*gen) return cmd_gen_data(g, o);
    if (*train) return cmd_train(g, o);
    if (*gencap) return cmd_generate_captions(g, o);
    if (*fine) return cmd_finetune(g, o);
    if (*eval) return cmd_eval(g, o);
    if (*emd) return cmd_emd(g, o);
    if (*grad) return cmd_gradcheck(g, o);
    if (*rep) return cmd_report(g, o);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
