// Acceptance suite: one PASS/FAIL line per criterion. Run with criterion
// numbers as arguments to select a subset.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "relcap/attn_eval.hpp"
#include "relcap/gradcheck.hpp"
#include "relcap/io.hpp"
#include "relcap/selection.hpp"
#include "relcap/trainer.hpp"

using namespace relcap;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

fs::path work_dir() {
  const fs::path d = fs::temp_directory_path() / "relcap_acceptance";
  fs::create_directories(d);
  return d;
}

// --- shared trained models ---------------------------------------------------

// Phase-1 training on the default synthetic set.
RunConfig benchmark_config(std::uint64_t seed, bool captions) {
  RunConfig rc;
  rc.seed = seed;
  rc.model.use_captions = captions;
  rc.train.lr = 0.01;
  return rc;
}

struct TrainedRun {
  RunConfig rc;
  data::SplitDataset ds;
  PreparedData prep;
  Model model;
  EpochMetrics last;
  double seconds = 0.0;
};

TrainedRun train_phase1(const RunConfig& cfg) {
  const auto t0 = Clock::now();
  TrainedRun r;
  r.rc = cfg;
  r.ds = data::generate_dataset(cfg.data, cfg.seed);
  r.prep = prepare_data(cfg, r.ds);
  r.rc.model = r.prep.model;
  r.model = Model::create(r.rc.model, derive_seed(cfg.seed, 1));
  Trainer tr(r.model, r.rc, r.prep.train, r.prep.val);
  for (int e = 0; e < cfg.train.epochs; ++e) r.last = tr.run_epoch();
  r.seconds = seconds_since(t0);
  return r;
}

std::map<std::pair<std::uint64_t, bool>, TrainedRun>& run_cache() {
  static std::map<std::pair<std::uint64_t, bool>, TrainedRun> cache;
  return cache;
}

const TrainedRun& benchmark_run(std::uint64_t seed, bool captions) {
  auto& cache = run_cache();
  const auto key = std::make_pair(seed, captions);
  if (!cache.contains(key)) {
    spdlog::info("training seed {} ({})", seed, captions ? "gold captions" : "captions ablated");
    cache.emplace(key, train_phase1(benchmark_config(seed, captions)));
  }
  return cache.at(key);
}

// --- 1 -------------------------------------------------------------------

Outcome gradient_correctness() {
  const auto t0 = Clock::now();
  // K=3, D=4, hidden=5, C=2, T=4, N=3
  auto rig = gc::make_tiny_rig(20240601, 3, 4, 5, 2, 4, 3);
  gc::Tolerance tol;
  tol.rel = 1e-4;
  const auto results = gc::check_joint_loss(rig, tol);
  const double secs = seconds_since(t0);
  bool ok = secs < 60.0;
  std::string detail;
  for (const auto& r : results) {
    ok = ok && r.passed && r.checked > 0;
    detail += fmt::format("{}: {} entries, max rel err {:.2e}; ", r.name, r.checked, r.max_rel_error);
  }
  return {ok, detail + fmt::format("{:.1f} s", secs)};
}

// --- 2 -------------------------------------------------------------------

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

// Each caption's gradient from its own freshly built graph and full sweep.
std::vector<double> oracle_inner_products(const Model& model, const ExampleInput& in) {
  std::vector<double> ga;
  std::size_t captions = 0;
  {
    ad::Record rec(&model.store);
    const auto t = forward(rec, model, in);
    rec.backward(t.s_pred);
    ga = rec.grad(t.qa.vq);
    captions = t.caption_losses.size();
  }
  std::vector<double> g;
  for (std::size_t i = 0; i < captions; ++i) {
    ad::Record rec(&model.store);
    const auto t = forward(rec, model, in);
    rec.backward(t.caption_losses[i].nll);
    g.push_back(-dot(ga, rec.grad(t.qa.vq)));
  }
  return g;
}

Outcome selection_oracle() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  int argmax_agree = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto rig = gc::make_tiny_rig(77000 + s, 2 + static_cast<int>(s % 4), 4, 5, 2 + static_cast<int>(s % 4));
    ad::Record rec(&rig.model.store);
    const auto t = forward(rec, rig.model, rig.input);
    const auto g = sel::grad_inner_products(rec, t);
    const auto oracle = oracle_inner_products(rig.model, rig.input);
    for (std::size_t i = 0; i < g.size(); ++i) worst = std::max(worst, std::abs(g[i] - oracle[i]));
    if (sel::select(g, 0.0) == sel::select(oracle, 0.0)) ++argmax_agree;
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-6 && argmax_agree == 100 && secs < 60.0,
          fmt::format("max |g - oracle| {:.2e}, argmax agreement {}/100, {:.1f} s", worst, argmax_agree, secs)};
}

// --- 3 -------------------------------------------------------------------

Outcome planted_recovery() {
  const auto& run = benchmark_run(1, true);
  const auto ev = evaluate(run.model, run.prep.val, run.rc.xi, true, run.rc.train.threads);
  const bool ok = ev.planted_recovery > 0.60 && run.seconds < 15 * 60;
  std::string by_type;
  {
    std::map<int, std::pair<int, int>> t;
    for (std::size_t i = 0; i < run.prep.val.size(); ++i) {
      const int s = ev.selected[i];
      if (s < 0 || run.prep.val[i].relevant_caption < 0) continue;
      auto& c = t[run.prep.val[i].question_type];
      c.second++;
      if (s == run.prep.val[i].relevant_caption) c.first++;
    }
    for (const auto& [type, c] : t) {
      by_type += fmt::format(", {} {}/{}", data::question_type_name(static_cast<data::QuestionType>(type)), c.first,
                             c.second);
    }
  }
  return {ok, fmt::format("recovery {:.3f} on {} feasible of {} (chance 0.20{}), val soft acc {:.3f}, train {:.0f} s",
                          ev.planted_recovery, ev.planted_known, ev.count, by_type, ev.soft_acc, run.seconds)};
}

// --- 4 -------------------------------------------------------------------

Outcome captions_help() {
  const auto t0 = Clock::now();
  double with = 0.0, without = 0.0;
  std::string per_seed;
  for (std::uint64_t seed : {1, 2, 3}) {
    const double a = benchmark_run(seed, true).last.val_soft_acc;
    const double b = benchmark_run(seed, false).last.val_soft_acc;
    with += a / 3.0;
    without += b / 3.0;
    per_seed += fmt::format("seed {}: {:.3f} vs {:.3f}; ", seed, a, b);
  }
  double secs = 0.0;
  for (const auto& [key, run] : run_cache()) secs += run.seconds;
  (void)t0;
  const double gain = 100.0 * (with - without);
  return {gain >= 5.0 && secs < 45 * 60,
          fmt::format("{}mean {:.3f} vs {:.3f} ({:+.1f} points), training {:.0f} s", per_seed, with, without, gain,
                      secs)};
}

// --- 5 -------------------------------------------------------------------

attn::AttentionGrid random_grid(std::mt19937_64& rng, int n) {
  attn::AttentionGrid g(n);
  for (auto& c : g.cells) c = unit_uniform(rng) < 0.5 ? 0.0 : unit_uniform(rng);
  if (g.total() == 0.0) g.cells[0] = 1.0;
  g.normalize();
  return g;
}

// Cheapest integer transport plan by enumeration (integral vertices make it
// exact for masses in units of 1/units).
double enumerate_emd(const std::vector<int>& su, const std::vector<int>& du, int units) {
  std::vector<int> left = du;
  double best = std::numeric_limits<double>::infinity();
  std::function<void(int, int, int, double)> go = [&](int i, int j, int rem, double cost) {
    if (i == 9) {
      best = std::min(best, cost);
      return;
    }
    if (j == 9) {
      if (rem == 0) go(i + 1, 0, i + 1 < 9 ? su[static_cast<std::size_t>(i + 1)] : 0, cost);
      return;
    }
    for (int f = 0; f <= std::min(rem, left[static_cast<std::size_t>(j)]); ++f) {
      left[static_cast<std::size_t>(j)] -= f;
      go(i, j + 1, rem - f, cost + f * attn::ground_distance(3, i, j) / units);
      left[static_cast<std::size_t>(j)] += f;
    }
  };
  go(0, 0, su[0], 0.0);
  return best;
}

std::string emd_property_checks(bool& ok) {
  std::mt19937_64 rng(555);
  double sym = 0.0, ident = 0.0, tri = 0.0;
  for (int trial = 0; trial < 30; ++trial) {
    const int n = trial % 3 == 0 ? attn::kGridSize : 4;
    const auto a = random_grid(rng, n), b = random_grid(rng, n), c = random_grid(rng, n);
    sym = std::max(sym, std::abs(attn::emd(a, b) - attn::emd(b, a)));
    ident = std::max(ident, attn::emd(a, a));
    tri = std::max(tri, attn::emd(a, c) - attn::emd(a, b) - attn::emd(b, c));
  }
  double oracle_err = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int units = 4 + static_cast<int>(rng() % 3);
    auto draw = [&] {
      std::vector<int> u(9, 0);
      const int support = 1 + static_cast<int>(rng() % 3);
      std::vector<int> cells(9);
      std::iota(cells.begin(), cells.end(), 0);
      std::shuffle(cells.begin(), cells.end(), rng);
      for (int k = 0; k < units; ++k) u[static_cast<std::size_t>(cells[rng() % static_cast<std::uint64_t>(support)])]++;
      return u;
    };
    const auto su = draw(), du = draw();
    attn::AttentionGrid p(3), q(3);
    for (int i = 0; i < 9; ++i) {
      p.cells[static_cast<std::size_t>(i)] = static_cast<double>(su[static_cast<std::size_t>(i)]) / units;
      q.cells[static_cast<std::size_t>(i)] = static_cast<double>(du[static_cast<std::size_t>(i)]) / units;
    }
    oracle_err = std::max(oracle_err, std::abs(attn::emd(p, q) - enumerate_emd(su, du, units)));
  }
  ok = sym <= 1e-9 && ident <= 1e-9 && tri <= 1e-9 && oracle_err <= 1e-6;
  return fmt::format("symmetry {:.1e}, identity {:.1e}, triangle excess {:.1e}, 3x3 oracle {:.1e}", sym, ident,
                     std::max(tri, 0.0), oracle_err);
}

Outcome caa_helps_attention() {
  bool props = false;
  const std::string prop_detail = emd_property_checks(props);
  const auto& run = benchmark_run(1, true);
  const auto with = attn::evaluate_attention(run.model, run.ds.val, run.prep.val, true, run.rc.train.threads);
  const auto without = attn::evaluate_attention(run.model, run.ds.val, run.prep.val, false, run.rc.train.threads);
  const bool ok = props && with.mean < without.mean && with.rows.size() == without.rows.size() && !with.rows.empty();
  return {ok, fmt::format("mean EMD w CAA {:.4f} vs w/o {:.4f} over {} records; {}", with.mean, without.mean,
                          with.rows.size(), prop_detail)};
}

// --- 6 -------------------------------------------------------------------

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(RELCAP_CLI) + " " + args + " > " + log.string() + " 2>&1";
  return std::system(cmd.c_str());
}

Outcome schedule_fidelity() {
  const fs::path dir = work_dir() / "schedule";
  fs::remove_all(dir);
  fs::create_directories(dir);
  io::write_file_atomic(dir / "small.json", R"({"data": {"train_examples": 60, "val_examples": 20},
    "model": {"question_hidden": 16, "caption_hidden": 16, "word_dim": 16, "decoder_hidden": 16,
              "attention_hidden": 16, "decoder_attention": 16},
    "train": {"batch_size": 16, "lr": 0.004}})");
  const std::string cfg = "--config " + (dir / "small.json").string() + " --seed 3 --force";
  const std::string d = (dir / "data").string();
  if (run_cli("gen-data " + cfg + " --out " + d, dir / "gen.log") != 0 ||
      run_cli("train " + cfg + " --data " + d + " --epochs 1 --out " + (dir / "p1").string(), dir / "train.log") != 0 ||
      run_cli("finetune --threads 1 --force --data " + d + " --checkpoint " + (dir / "p1" / "phase1.ckpt").string() +
                  " --epochs 1 --out " + (dir / "p2").string(),
              dir / "finetune.log") != 0) {
    return {false, "CLI pipeline failed; logs in " + dir.string()};
  }
  const auto man = nlohmann::json::parse(io::read_file(dir / "p2" / "finetune.manifest.json"));
  const double lr1 = man.at("schedule").at("phase1_lr").get<double>();
  const double lr2 = man.at("schedule").at("phase2_lr").get<double>();
  const auto ck = parse_checkpoint(io::read_file(dir / "p2" / "phase2.ckpt"));
  const double ck_lr = ck.arrays.at("state")[2];
  const auto dump = read_caption_dump(dir / "p2" / "captions.jsonl");
  std::size_t pairs = 0, five = 0;
  for (const auto& e : dump) {
    ++pairs;
    if (e.captions.size() == 5 && e.log_probs.size() == 5) ++five;
  }
  const bool ok = lr2 == 0.25 * lr1 && ck_lr == lr2 && pairs == 80 && five == pairs &&
                  man.at("status").get<std::string>() == "ok";
  return {ok, fmt::format("phase-1 lr {}, phase-2 lr {} (ratio {}), checkpoint lr {}; {}/{} pairs with 5 captions",
                          lr1, lr2, lr2 / lr1, ck_lr, five, pairs)};
}

// --- 7 -------------------------------------------------------------------

Outcome overfit() {
  const auto t0 = Clock::now();
  RunConfig rc;
  rc.seed = 9;
  rc.data.train_examples = 8;
  rc.data.val_examples = 8;
  rc.train.batch_size = 8;
  rc.train.lr = 0.01;
  rc.min_word_count = 1;
  const auto ds = data::generate_dataset(rc.data, rc.seed);
  const auto prep = prepare_data(rc, ds);
  rc.model = prep.model;
  Model model = Model::create(rc.model, derive_seed(rc.seed, 1));
  Trainer tr(model, rc, prep.train, prep.val);
  std::vector<int> batch(prep.train.size());
  std::iota(batch.begin(), batch.end(), 0);
  const double first = tr.step_on(batch).loss;
  double last = first;
  for (int s = 1; s < 500; ++s) last = tr.step_on(batch).loss;
  const double secs = seconds_since(t0);
  const double drop = 1.0 - last / first;
  return {drop >= 0.90 && secs < 300.0,
          fmt::format("joint loss {:.4f} -> {:.4f} ({:.1f}% reduction), {:.1f} s", first, last, 100 * drop, secs)};
}

// --- 8 -------------------------------------------------------------------

RunConfig repro_config() {
  RunConfig rc;
  rc.seed = 12;
  rc.data.train_examples = 48;
  rc.data.val_examples = 16;
  rc.min_word_count = 1;
  rc.model.question_hidden = rc.model.caption_hidden = rc.model.word_dim = 12;
  rc.model.decoder_hidden = rc.model.attention_hidden = rc.model.decoder_attention = 12;
  rc.train.batch_size = 8;
  rc.train.epochs = 3;
  return rc;
}

Outcome reproducibility() {
  const fs::path dir = work_dir() / "repro";
  fs::create_directories(dir);
  const RunConfig rc0 = repro_config();
  const auto ds = data::generate_dataset(rc0.data, rc0.seed);
  const auto prep = prepare_data(rc0, ds);
  RunConfig rc = rc0;
  rc.model = prep.model;

  auto full_run = [&](const fs::path& csv) {
    Model m = Model::create(rc.model, derive_seed(rc.seed, 1));
    Trainer tr(m, rc, prep.train, prep.val);
    for (int e = 0; e < rc.train.epochs; ++e) tr.run_epoch();
    write_metrics_csv(csv, tr.state().history);
    return m.store.hash();
  };
  const auto h1 = full_run(dir / "a.csv");
  const auto h2 = full_run(dir / "b.csv");
  const bool csv_same = io::read_file(dir / "a.csv") == io::read_file(dir / "b.csv") && h1 == h2;

  // Interrupted run: checkpoint mid-epoch, restore into a fresh trainer.
  Model m1 = Model::create(rc.model, derive_seed(rc.seed, 1));
  Trainer t1(m1, rc, prep.train, prep.val);
  const int stop = t1.batches_per_epoch() + 2;
  for (int s = 0; s < stop; ++s) {
    if (t1.epoch_complete()) t1.end_epoch();
    t1.train_step();
  }
  t1.save_checkpoint(dir / "mid.ckpt", prep.vocabs.hash());
  Model m2 = Model::create(rc.model, 0);
  Trainer t2(m2, rc, prep.train, prep.val);
  t2.restore(io::read_file(dir / "mid.ckpt"), prep.vocabs.hash());
  for (auto* t : {&t1, &t2}) {
    while (t->state().epoch < rc.train.epochs) t->run_epoch();
  }
  write_metrics_csv(dir / "c.csv", t2.state().history);
  const bool resume_same = m1.store.hash() == m2.store.hash() && m2.store.hash() == h1 &&
                           t1.state().history == t2.state().history &&
                           io::read_file(dir / "c.csv") == io::read_file(dir / "a.csv") &&
                           t1.checkpoint_bytes(1) == t2.checkpoint_bytes(1);
  return {csv_same && resume_same,
          fmt::format("identical-seed metrics CSVs {}; resume after step {} {}", csv_same ? "byte-identical" : "DIFFER",
                      stop, resume_same ? "bit-identical to the uninterrupted run" : "DIVERGES")};
}

// --- 9 -------------------------------------------------------------------

Outcome infeasibility() {
  // s_pred = <V, G>, nll_i = <V, G> for every caption: d log p_i / dV = -G,
  // so every g_i = -||G||^2.
  std::mt19937_64 rng(4);
  ad::Record rec;
  std::vector<double> gv(12), vv(12);
  for (auto& x : gv) x = 2.0 * unit_uniform(rng) - 1.0;
  for (auto& x : vv) x = 2.0 * unit_uniform(rng) - 1.0;
  const ad::DTensor v = rec.leaf({3, 4}, vv);
  const ad::DTensor s = ad::sum(ad::mul(v, rec.constant({3, 4}, gv)));
  const std::vector<ad::DTensor> nlls{s, ad::add(s, rec.constant({1, 1}, {0.0}))};
  const auto g = sel::grad_inner_products(rec, s, v, v, nlls);
  const auto picked = sel::select(g, 0.0);
  const ad::DTensor l_vqa = ad::sum(ad::mul(v, v));
  const ad::DTensor l = sel::joint_loss(l_vqa, nlls, picked);
  const bool ok = !picked.has_value() && g[0] < 0.0 && g[1] < 0.0 && l.item() == l_vqa.item();
  return {ok, fmt::format("g = [{:.4f}, {:.4f}], feasible set {}, L = {} vs L^vqa = {}", g[0], g[1],
                          picked ? "non-empty" : "empty", l.item(), l_vqa.item())};
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("RELCAP_LOG"); env && std::string(env) == "info") spdlog::set_level(spdlog::level::info);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient correctness", gradient_correctness},
      {"selection oracle equivalence", selection_oracle},
      {"planted-relevance recovery", planted_recovery},
      {"captions help", captions_help},
      {"CAA helps attention", caa_helps_attention},
      {"schedule fidelity", schedule_fidelity},
      {"overfit smoke test", overfit},
      {"reproducibility", reproducibility},
      {"infeasibility path", infeasibility},
  };
  std::set<int> chosen;
  for (int i = 1; i < argc; ++i) chosen.insert(std::atoi(argv[i]));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i) + 1;
    if (!chosen.empty() && !chosen.contains(n)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << n << " (" << criteria[i].first << "): " << o.detail
              << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
