// Copyright 2026 The Keylock Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Acceptance runner: one PASS/FAIL line per criterion.
//
// Criteria 4, 6 and 7 need the CIFAR-10 binary files (--data or
// KEYLOCK_DATA_DIR). Without them they report FAIL with the reason.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "keylock/attack/attacks.hpp"
#include "keylock/data/dataset.hpp"
#include "keylock/harness/config.hpp"
#include "keylock/harness/experiment.hpp"
#include "keylock/harness/model_io.hpp"
#include "keylock/nn/gradcheck.hpp"
#include "keylock/shuffle/block_shuffle.hpp"
#include "keylock/shuffle/key_space.hpp"
#include "keylock/shuffle/permutation.hpp"
#include "keylock/shuffle/secret_key.hpp"
#include "support/factorial_oracle.hpp"
#include "support/tiny_models.hpp"
#include "support/toy_key_model.hpp"

namespace {

using namespace keylock;
namespace fs = std::filesystem;
using nlohmann::json;

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Clock {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string timing(double s, double limit) {
  return fmt("%.2f s", s) + " (limit " + fmt("%.0f s", limit) + ")";
}

// ------------------------------------------------------------------ 1

Outcome shuffle_exactness() {
  const Clock clock;
  std::mt19937_64 rng(20260101);
  std::normal_distribution<double> normal;
  double worst_linearity = 0.0;
  std::size_t roundtrip_failures = 0, multiset_failures = 0;
  const std::array<std::size_t, 3> block_sizes = {1, 2, 4};

  for (int t = 0; t < 1000; ++t) {
    const std::size_t m = block_sizes[rng() % 3];
    const std::size_t c = 1 + rng() % 16;
    const std::size_t h = m * (1 + rng() % (16 / m));
    const std::size_t w = m * (1 + rng() % (16 / m));
    const std::size_t batch = 1 + rng() % 2;
    const shuffle::BlockSpec spec{m, c};
    const auto key = shuffle::SecretKey::random(rng);
    const auto v = shuffle::derive_permutation(key, spec.vector_length());

    nn::Tensor<double> x({batch, c, h, w}), y({batch, c, h, w});
    for (auto& e : x.values()) e = normal(rng);
    for (auto& e : y.values()) e = normal(rng);
    const double a = normal(rng), b = normal(rng);

    const auto sx = shuffle::apply_block_shuffle(x, v, spec);
    if (shuffle::apply_block_shuffle(sx, v.inverse(), spec) != x) ++roundtrip_failures;

    for (std::size_t n = 0; n < batch; ++n) {
      for (std::size_t bi = 0; bi < h / m; ++bi) {
        for (std::size_t bj = 0; bj < w / m; ++bj) {
          std::multiset<double> in, out;
          for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t r = 0; r < m; ++r)
              for (std::size_t col = 0; col < m; ++col) {
                const std::size_t idx = ((n * c + ch) * h + bi * m + r) * w + bj * m + col;
                in.insert(x[idx]);
                out.insert(sx[idx]);
              }
          if (in != out) ++multiset_failures;
        }
      }
    }

    nn::Tensor<double> combo(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) combo[i] = a * x[i] + b * y[i];
    const auto s_combo = shuffle::apply_block_shuffle(combo, v, spec);
    const auto sy = shuffle::apply_block_shuffle(y, v, spec);
    for (std::size_t i = 0; i < x.size(); ++i)
      worst_linearity = std::max(worst_linearity, std::abs(s_combo[i] - (a * sx[i] + b * sy[i])));
  }
  const double s = clock.seconds();
  return {roundtrip_failures == 0 && multiset_failures == 0 && worst_linearity <= 1e-12 && s < 10.0,
          "1000 cases, round-trip failures " + std::to_string(roundtrip_failures) +
              ", block multiset failures " + std::to_string(multiset_failures) +
              ", linearity error " + fmt("%.1e", worst_linearity) + " (tol 1e-12), " + timing(s, 10)};
}

// ------------------------------------------------------------------ 2

Outcome key_space_oracle() {
  const Clock clock;
  std::size_t checked = 0, mismatches = 0;
  for (std::size_t c = 1; c <= 64; ++c) {
    for (std::size_t m = 1; c * m * m <= 64; ++m) {
      ++checked;
      const shuffle::BlockSpec spec{m, c};
      if (shuffle::key_space(spec).str() !=
          test_support::factorial_decimal(static_cast<unsigned>(c * m * m)))
        ++mismatches;
    }
  }
  // Image-level M = 2 and M = 4, then the ResNet-18 stem and stages at M = 2.
  const std::vector<std::pair<shuffle::BlockSpec, std::string>> table = {
      {{2, 3}, "12!"},    {{4, 3}, "48!"},     {{2, 64}, "256!"},
      {{2, 128}, "512!"}, {{2, 256}, "1024!"}, {{2, 512}, "2048!"}};
  std::string printed;
  for (const auto& [spec, want] : table) {
    const auto symbol = shuffle::key_space_symbol(spec);
    if (symbol != want) ++mismatches;
    if (shuffle::key_space(spec).str() !=
        test_support::factorial_decimal(static_cast<unsigned>(spec.vector_length())))
      ++mismatches;
    printed += (printed.empty() ? "" : " ") + symbol;
  }
  const double s = clock.seconds();
  return {mismatches == 0 && s < 1.0,
          std::to_string(checked) + " (c, M) pairs with n <= 64, printed " + printed + ", " +
              std::to_string(mismatches) + " mismatches, " + timing(s, 1)};
}

// ------------------------------------------------------------------ 3

Outcome gradient_suite() {
  const Clock clock;
  double worst_model = 0.0, worst_shuffle = 0.0;
  std::string worst_where;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    for (bool with_shuffle : {false, true}) {
      auto m = test_support::make_tiny_model(seed, with_shuffle);
      const auto r = nn::finite_diff_check(m.net, m.batch, m.labels, 1e-5, m.bindings);
      if (r.max_relative_error > worst_model) {
        worst_model = r.max_relative_error;
        worst_where = r.worst_parameter;
      }
    }
    worst_shuffle = std::max(worst_shuffle, test_support::shuffle_layer_fd_error(seed, 1e-5));
  }
  const double s = clock.seconds();
  return {worst_model <= 1e-4 && worst_shuffle <= 1e-6 && s < 120.0,
          "40 models, max rel error " + fmt("%.1e", worst_model) + " at " + worst_where +
              " (tol 1e-4), shuffle alone " + fmt("%.1e", worst_shuffle) + " (tol 1e-6), " +
              timing(s, 120)};
}

// ------------------------------------------------------------------ 5

Outcome greedy_exactness() {
  const Clock clock;
  const auto p = test_support::make_toy_key_problem();
  // Oracle first: the best accuracy over all 24 permutations.
  double optimum = 0.0;
  std::array<std::size_t, 4> v = {0, 1, 2, 3};
  do optimum = std::max(optimum, test_support::toy_accuracy_oracle(p, v));
  while (std::next_permutation(v.begin(), v.end()));

  bool ok = true;
  std::string trail;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const attack::AttackerView view(p.model, "toy", p.data);
    attack::KeyEstimationOptions opts;
    opts.block_size = 2;
    opts.seed = seed;
    const auto trace = attack::estimate_key(view, opts);
    ok = ok && trace.steps.size() == 6;
    double incumbent = trace.initial_accuracy;
    for (const auto& step : trace.steps) {
      ok = ok && step.accuracy >= incumbent;
      incumbent = step.accuracy;
    }
    ok = ok && trace.final_accuracy <= optimum;
    if (seed == 0) {
      trail = "seed 0: trace length " + std::to_string(trace.steps.size()) + ", " +
              fmt("%.1f", trace.initial_accuracy) + " -> " + fmt("%.1f", trace.final_accuracy);
    }
  }
  const double s = clock.seconds();
  return {ok && s < 60.0, "10 seeds; " + trail + ", exhaustive optimum " + fmt("%.1f", optimum) +
                              ", " + timing(s, 60)};
}

// ---------------------------------------------------- desk-scale runs

struct DeskScale {
  fs::path workdir;
  std::string data_dir;
  std::string source = "cifar10";
  std::size_t seeds = 3;
  std::size_t eval_size = 100;
  std::ostream* log = nullptr;

  harness::ExperimentConfig base(const std::string& name) const {
    harness::ExperimentConfig c;
    c.data.source = source;
    c.data.dir = data_dir;
    c.data.train_size = 5000;
    c.data.test_size = 1000;
    c.train.hyper.epochs = 30;
    c.eval.wrong_keys = 20;
    c.protection.key_file = (workdir / "key.txt").string();
    c.protection.placements.clear();
    c.out = (workdir / name).string();
    return c;
  }

  harness::ExperimentConfig protected_at(const std::string& placement) const {
    auto c = base(placement);
    c.protection.placements = {placement};
    return c;
  }

  /// Trains the model unless a run with the same config hash already left
  /// its artifacts in c.out. Returns the correct-key test accuracy.
  double ensure(const harness::ExperimentConfig& c) const {
    const fs::path report = fs::path(c.out) / "eval_report.json";
    if (fs::exists(report) && fs::exists(fs::path(c.out) / "model.ckpt")) {
      std::ifstream in(report);
      const auto j = json::parse(in);
      if (j.at("config_hash") == harness::config_hash(c)) return j.at("accuracy").at("correct");
    }
    return harness::run_experiment(c, {log}).eval.correct;
  }

  harness::LoadedModel load(const harness::ExperimentConfig& c) const {
    auto loaded = harness::load_model(fs::path(c.out) / "model.ckpt");
    harness::bind_checked(loaded, shuffle::load_key_file(c.protection.key_file));
    return loaded;
  }
};

std::optional<std::string> missing_dataset(const std::string& dir) {
  fs::path path = dir;
  if (path.empty()) {
    const auto env = data::default_data_dir();
    if (!env) return "CIFAR-10 not found: pass --data or set KEYLOCK_DATA_DIR";
    path = *env;
  }
  for (const char* f : {"data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin",
                        "data_batch_4.bin", "data_batch_5.bin", "test_batch.bin"}) {
    if (!fs::exists(path / f)) return "CIFAR-10 not found: " + (path / f).string() + " is missing";
  }
  return std::nullopt;
}

Outcome protection_replication(const DeskScale& d) {
  const Clock clock;
  const auto baseline = harness::run_experiment(d.base("baseline"), {d.log});
  const auto prot = harness::run_experiment(d.protected_at("initial_conv"), {d.log});
  const double s = clock.seconds();
  const double gap = std::abs(prot.eval.correct - baseline.eval.correct);
  const double wrong = prot.eval.wrong->mean;
  return {gap <= 3.0 && wrong <= 20.0 && prot.eval.none <= 20.0 && s <= 1800.0,
          "(a) correct " + fmt("%.2f", prot.eval.correct) + " vs baseline " +
              fmt("%.2f", baseline.eval.correct) + ", gap " + fmt("%.2f", gap) +
              " (tol 3.0); (b) wrong-key mean " + fmt("%.2f", wrong) + " over 20 keys (tol 20); (c) none " +
              fmt("%.2f", prot.eval.none) + " (tol 20); " + timing(s, 1800)};
}

Outcome key_estimation_direction(const DeskScale& d) {
  const Clock clock;
  auto ic_cfg = d.protected_at("initial_conv");
  auto l4_cfg = d.protected_at("layer4");
  d.ensure(ic_cfg);
  d.ensure(l4_cfg);
  const auto ic = d.load(ic_cfg);
  const auto l4 = d.load(l4_cfg);
  for (auto* c : {&ic_cfg, &l4_cfg}) {
    c->key_estimation.enabled = true;
    c->key_estimation.attacker_size = 1000;
    c->key_estimation.eval_size = d.eval_size;
    c->key_estimation.full_trace = false;
  }
  const auto data = harness::prepare_data(ic_cfg.data, ic_cfg.seeds, 1000, ic.manifest.normalization);
  const auto data_l4 = harness::prepare_data(l4_cfg.data, l4_cfg.seeds, 1000, l4.manifest.normalization);

  bool ok = true;
  std::string detail;
  for (std::size_t s = 1; s <= d.seeds; ++s) {
    ic_cfg.seeds.attacker = l4_cfg.seeds.attacker = 100 + s;
    if (d.log) *d.log << "key estimation seed " << s << std::endl;
    const auto a = harness::run_key_estimation(ic_cfg, ic.model, data, "initial_conv");
    const auto b = harness::run_key_estimation(l4_cfg, l4.model, data_l4, "layer4");
    const double gap_ic = a.correct_accuracy - a.estimated_accuracy;
    const double gap_l4 = b.correct_accuracy - b.estimated_accuracy;
    ok = ok && gap_ic >= 15.0 && gap_l4 < gap_ic;
    detail += "seed " + std::to_string(s) + ": initial_conv " + fmt("%.2f", a.estimated_accuracy) +
              "/" + fmt("%.2f", a.correct_accuracy) + " (gap " + fmt("%.2f", gap_ic) + "), layer4 " +
              fmt("%.2f", b.estimated_accuracy) + "/" + fmt("%.2f", b.correct_accuracy) + " (gap " +
              fmt("%.2f", gap_l4) + "); ";
  }
  return {ok, detail + "eval_size " + std::to_string(d.eval_size) + ", " + fmt("%.0f s", clock.seconds())};
}

Outcome finetune_direction(const DeskScale& d) {
  const Clock clock;
  auto cfg = d.protected_at("initial_conv");
  const double correct_accuracy = d.ensure(cfg);
  cfg.finetune.enabled = true;
  cfg.finetune.sizes = {100, 500, 1000};
  cfg.finetune.epochs = 30;
  cfg.finetune.trajectory = false;
  const auto model = d.load(cfg);
  const auto data = harness::prepare_data(cfg.data, cfg.seeds, 1000, model.manifest.normalization);

  std::array<std::vector<double>, 3> per_size;
  for (std::size_t s = 1; s <= d.seeds; ++s) {
    cfg.seeds.attacker = 200 + s;
    if (d.log) *d.log << "fine-tune seed " << s << std::endl;
    const auto outcomes = harness::run_finetune(cfg, model.model, data);
    for (std::size_t i = 0; i < 3; ++i) per_size[i].push_back(outcomes[i].result.final_accuracy);
  }
  std::array<double, 3> median{};
  for (std::size_t i = 0; i < 3; ++i) {
    auto v = per_size[i];
    std::sort(v.begin(), v.end());
    median[i] = v[v.size() / 2];
  }
  const double s = clock.seconds();
  const bool monotone = median[0] <= median[1] && median[1] <= median[2];
  const bool below = *std::max_element(median.begin(), median.end()) < correct_accuracy;
  return {monotone && below && s <= 1800.0,
          "median over " + std::to_string(d.seeds) + " seeds: |D'|=100 " + fmt("%.2f", median[0]) +
              ", 500 " + fmt("%.2f", median[1]) + ", 1000 " + fmt("%.2f", median[2]) +
              "; correct-key " + fmt("%.2f", correct_accuracy) + "; " + timing(s, 1800)};
}

// ------------------------------------------------------------------ 8

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome reproducibility(const DeskScale& d, bool have_data) {
  const Clock clock;
  auto cfg = d.protected_at("initial_conv");
  if (!have_data) cfg.data.source = "synthetic";
  cfg.data.train_size = 1000;
  cfg.data.test_size = 200;
  cfg.train.hyper.epochs = 2;
  cfg.eval.wrong_keys = 5;
  cfg.key_estimation.enabled = true;
  cfg.key_estimation.attacker_size = 100;
  cfg.key_estimation.eval_size = 8;
  cfg.finetune.enabled = true;
  cfg.finetune.sizes = {50};
  cfg.finetune.epochs = 1;

  std::vector<std::string> differing;
  const std::array<fs::path, 2> dirs = {d.workdir / "repro_a", d.workdir / "repro_b"};
  for (const auto& dir : dirs) {
    cfg.out = dir.string();
    harness::run_experiment(cfg, {d.log});
  }
  for (const char* f : {"eval_report.json", "attack_key_estimation.json", "attack_finetune.json",
                        "training_log.json", "model.json"}) {
    const auto a = harness::strip_timing(json::parse(read_file(dirs[0] / f))).dump(2);
    const auto b = harness::strip_timing(json::parse(read_file(dirs[1] / f))).dump(2);
    if (a != b) differing.push_back(f);
  }
  for (const char* f : {"model.ckpt", "protection.csv", "key_estimation.csv", "finetune.csv"}) {
    if (read_file(dirs[0] / f) != read_file(dirs[1] / f)) differing.push_back(f);
  }
  std::string detail = differing.empty() ? "all reports identical modulo timing"
                                         : "differing: ";
  for (const auto& f : differing) detail += f + " ";
  detail += have_data ? " (CIFAR-10, reduced run)" : " (synthetic data; CIFAR-10 not found)";
  return {differing.empty(), detail + ", " + fmt("%.0f s", clock.seconds())};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app("keylock acceptance runner");
  std::string data_dir, workdir = "acceptance_runs";
  std::vector<int> only;
  DeskScale desk;
  bool verbose = false, stand_in = false;
  app.add_option("--data", data_dir, "CIFAR-10 directory (default: $KEYLOCK_DATA_DIR)");
  app.add_option("--workdir", workdir, "Where desk-scale runs write their artifacts");
  app.add_option("--only", only, "Criteria to run (default: all)")->delimiter(',');
  app.add_option("--seeds", desk.seeds, "Seeds for criteria 6 and 7");
  app.add_option("--eval-size", desk.eval_size, "Scoring rows for criterion 6");
  app.add_flag("-v,--verbose", verbose, "Progress on stderr");
  app.add_flag("--stand-in", stand_in,
               "Without CIFAR-10, still run 4, 6 and 7 on synthetic data; they stay FAIL");
  CLI11_PARSE(app, argc, argv);

  desk.workdir = fs::absolute(workdir);
  desk.data_dir = data_dir;
  desk.log = verbose ? &std::cerr : nullptr;
  fs::create_directories(desk.workdir);
  const auto key_path = desk.workdir / "key.txt";
  if (!fs::exists(key_path)) {
    std::mt19937_64 rng(7);
    shuffle::save_key_file(key_path, shuffle::SecretKey::random(rng, "acceptance"));
  }

  auto wanted = [&](int id) { return only.empty() || std::count(only.begin(), only.end(), id) > 0; };
  const auto missing = missing_dataset(data_dir);
  int failures = 0;

  auto report = [&](int id, const char* name, const std::function<Outcome()>& body) {
    if (!wanted(id)) return;
    Outcome o;
    try {
      o = body();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS " : "FAIL ") << id << " " << name << ": " << o.detail << std::endl;
  };
  auto needs_data = [&](auto body) -> std::function<Outcome()> {
    return [&, body] {
      if (!missing) return body();
      if (!stand_in) return Outcome{false, *missing};
      desk.source = "synthetic";
      const Outcome o = body();
      desk.source = "cifar10";
      return Outcome{false, *missing + "; synthetic stand-in, not counted (" +
                                (o.pass ? "would pass" : "would fail") + "): " + o.detail};
    };
  };

  report(1, "shuffle exactness", shuffle_exactness);
  report(2, "key-space oracle", key_space_oracle);
  report(3, "gradient suite", gradient_suite);
  report(4, "desk-scale protection", needs_data([&] { return protection_replication(desk); }));
  report(5, "greedy search exactness", greedy_exactness);
  report(6, "key estimation direction", needs_data([&] { return key_estimation_direction(desk); }));
  report(7, "fine-tuning direction", needs_data([&] { return finetune_direction(desk); }));
  report(8, "reproducibility", [&] { return reproducibility(desk, !missing); });
  return failures == 0 ? 0 : 1;
}
