// Acceptance suite: one PASS/FAIL line per criterion. Presets live in
// configs/; every tolerance and runtime budget is pinned below.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>

#include "bfel/experiment.h"
#include "bfel/rng.h"

namespace fs = std::filesystem;
using namespace bfel;

namespace {

const fs::path kConfigs = BFEL_CONFIG_DIR;

constexpr double kDenseTol = 1e-12;
constexpr double kRatioFloor = 300.0;
constexpr double kExposureTol = 1e-12;
constexpr double kTrendNoise = 0.01;
constexpr double kSparseGap = 0.03;
constexpr double kReduction = 0.50;
constexpr std::int64_t kConsensusMs = 500;
constexpr int kPoisonSeeds = 20;
constexpr double kDefenseGap = 0.02;
constexpr double kBaselineDrop = 0.10;
constexpr std::uint32_t kSlashWithin = 10;
constexpr int kByzantineSeeds = 3;
constexpr int kTamperCases = 1000;

constexpr double kBudgetC1 = 10, kBudgetC2 = 120, kBudgetC3 = 900, kBudgetC4 = 300,
                 kBudgetC6 = 1200, kBudgetC7 = 300, kBudgetC8 = 60;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

int failures = 0;

void report(const char* id, const char* name, bool ok, const std::string& detail) {
  std::printf("%s %s %s: %s\n", ok ? "PASS" : "FAIL", id, name, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

// Wraps one criterion so an exception becomes a FAIL line, not an abort.
void criterion(const char* id, const char* name, const std::function<std::pair<bool, std::string>()>& body) {
  try {
    auto [ok, detail] = body();
    report(id, name, ok, detail);
  } catch (const std::exception& e) {
    report(id, name, false, std::string("exception: ") + e.what());
  }
}

std::string budget(double used, double limit) {
  return fmt("%.1f s", used) + " of " + fmt("%.0f s", limit);
}

// Plain synchronous SGD with the federation's data, init and batch streams.
std::pair<bool, std::string> c1() {
  const auto t0 = Clock::now();
  const auto cfg = load_config(kConfigs / "dense.json");
  RunOptions opt;
  opt.keep_round_logs = true;
  const auto run = run_experiment(cfg, opt);

  const auto td = build_task_data(cfg, 1);
  const ReferenceModel model(td.spec);
  std::vector<BatchSampler> samplers;
  for (std::size_t w = 0; w < td.shards.size(); ++w) {
    samplers.emplace_back(td.shards[w].size(), cfg.training.batch_size, td.batch_seeds[w]);
  }
  ModelParameters params = td.initial;
  double worst = 0.0;
  auto compare = [&](const ModelParameters& got) {
    for (std::size_t i = 0; i < params.dim(); ++i) worst = std::max(worst, std::abs(got[i] - params[i]));
  };
  std::size_t checked = 0;
  for (std::uint32_t r = 0; r < cfg.training.epochs; ++r) {
    compare(run.rounds.at(r).global_before);
    std::vector<double> sum(params.dim(), 0.0);
    for (std::size_t w = 0; w < td.shards.size(); ++w) {
      const auto g = model.gradient(params, td.shards[w], samplers[w].next());
      for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += g[i];
    }
    for (std::size_t i = 0; i < sum.size(); ++i) {
      params[i] -= cfg.training.learning_rate * (sum[i] / static_cast<double>(td.shards.size()));
    }
    ++checked;
  }
  compare(run.tasks[0].final_params);
  const double secs = seconds_since(t0);
  const bool ok = worst <= kDenseTol && checked == 50 && td.shards.size() == 10 && secs < kBudgetC1;
  return {ok, std::to_string(checked) + " rounds, " + std::to_string(td.shards.size()) +
                  " workers, max |bfel - sgd| = " + fmt("%.3g", worst) + ", " + budget(secs, kBudgetC1)};
}

std::pair<bool, std::string> c2() {
  const auto t0 = Clock::now();
  const auto cfg = load_config(kConfigs / "desk.json");
  const auto run = run_experiment(cfg);
  const auto dim = build_task_data(cfg, 1).initial.dim();
  const double secs = seconds_since(t0);
  const double gap = std::abs(run.exposure_ratio - 1.0 / run.compression_ratio);
  const bool ok = cfg.compression.rho_percent == 0.3 && dim >= 10000 &&
                  run.compression_ratio >= kRatioFloor && gap <= kExposureTol && secs < kBudgetC2;
  return {ok, "params " + std::to_string(dim) + ", ratio " + fmt("%.2f", run.compression_ratio) +
                  ", |exposure - 1/ratio| = " + fmt("%.3g", gap) + ", " + budget(secs, kBudgetC2)};
}

std::pair<bool, std::string> c3() {
  const auto t0 = Clock::now();
  const auto base = load_config(kConfigs / "desk.json");
  const std::vector<double> rhos = {0.1, 0.3, 1, 100};
  std::vector<double> acc;
  for (double rho : rhos) {
    auto c = base;
    c.compression.rho_percent = rho;
    acc.push_back(run_experiment(c).final_accuracy);
  }
  bool trend = true;
  for (std::size_t i = 0; i < acc.size(); ++i) {
    for (std::size_t j = i + 1; j < acc.size(); ++j) trend &= acc[j] >= acc[i] - kTrendNoise;
  }
  const double gap = acc[3] - acc[1];
  const double secs = seconds_since(t0);
  std::string detail = "E=" + std::to_string(base.training.epochs) + " acc";
  for (std::size_t i = 0; i < rhos.size(); ++i) {
    detail += " rho" + fmt("%g", rhos[i]) + "=" + fmt("%.4f", acc[i]);
  }
  detail += ", gap(100 vs 0.3) " + fmt("%.2f pp", 100 * gap) + ", " + budget(secs, kBudgetC3);
  return {trend && gap <= kSparseGap && base.training.epochs == 100 && secs < kBudgetC3, detail};
}

std::pair<bool, std::string> c4() {
  const auto t0 = Clock::now();
  auto fel = load_config(kConfigs / "desk.json");
  fel.scenario = Scenario::kFel;
  auto gcs = fel;
  gcs.scenario = Scenario::kFelGcs;
  const auto a = run_experiment(fel), b = run_experiment(gcs);
  const double bytes_cut = 1.0 - double(b.total_bytes) / double(a.total_bytes);
  const double time_cut = 1.0 - double(b.simulated_time_ms) / double(a.simulated_time_ms);
  const double secs = seconds_since(t0);
  const bool ok = gcs.compression.rho_percent == 0.3 && bytes_cut >= kReduction &&
                  time_cut >= kReduction && secs < kBudgetC4;
  return {ok, "bytes " + std::to_string(a.total_bytes) + " -> " + std::to_string(b.total_bytes) + " (" +
                  fmt("%.1f%%", 100 * bytes_cut) + " less), time " + std::to_string(a.simulated_time_ms) +
                  " -> " + std::to_string(b.simulated_time_ms) + " ms (" + fmt("%.1f%%", 100 * time_cut) +
                  " less), " + budget(secs, kBudgetC4)};
}

std::pair<bool, std::string> c5() {
  auto fel = load_config(kConfigs / "timing.json");
  fel.scenario = Scenario::kFelGcs;
  auto bfel = fel;
  bfel.scenario = Scenario::kBfelGcs;
  const auto a = run_experiment(fel), b = run_experiment(bfel);
  const auto rounds = static_cast<std::int64_t>(fel.training.epochs);
  std::uint64_t qualified = 0;
  for (const auto& m : b.metrics) qualified += m.qualified_count;
  const auto expected = a.simulated_time_ms + rounds * kConsensusMs;
  const bool ok = b.simulated_time_ms == expected && fel.cost.consensus_delay_ms == kConsensusMs;
  return {ok, "fel-gcs " + std::to_string(a.simulated_time_ms) + " ms + " + std::to_string(rounds) +
                  " x 500 = " + std::to_string(expected) + ", bfel-gcs " +
                  std::to_string(b.simulated_time_ms) + " ms; qualified " + std::to_string(qualified) +
                  "/" + std::to_string(rounds * fel.federation.workers_per_task)};
}

std::pair<bool, std::string> c6() {
  const auto t0 = Clock::now();
  const auto base = load_config(kConfigs / "poisoning.json");
  RunOptions opt;
  opt.keep_round_logs = true;
  std::size_t leaks = 0, gap_misses = 0, weak_baselines = 0;
  double worst_gap = 0.0, weakest_drop = 1.0;
  for (int s = 1; s <= kPoisonSeeds; ++s) {
    auto attacked = base;
    attacked.seed = static_cast<std::uint64_t>(s);
    auto clean = attacked;
    clean.attack.poison_fraction = 0.0;
    const auto r = run_experiment(attacked, opt);
    const auto& bad = r.tasks[0].poisoned_workers;
    for (const auto& log : r.rounds) {
      for (const auto& q : log.qualified) leaks += std::count(bad.begin(), bad.end(), q);
    }
    leaks += r.tasks[0].poisoned_committed;
    const double gap = std::abs(run_experiment(clean).final_accuracy - r.final_accuracy);
    worst_gap = std::max(worst_gap, gap);
    gap_misses += gap > kDefenseGap;

    auto fel_att = attacked, fel_clean = clean;
    fel_att.scenario = fel_clean.scenario = Scenario::kFelGcs;
    const double drop = run_experiment(fel_clean).final_accuracy - run_experiment(fel_att).final_accuracy;
    weakest_drop = std::min(weakest_drop, drop);
    weak_baselines += drop <= kBaselineDrop;
  }
  const double secs = seconds_since(t0);
  const bool ok = leaks == 0 && gap_misses == 0 && weak_baselines == 0 &&
                  base.attack.poison_fraction == 0.3 && base.theta == 0.05 && secs < kBudgetC6;
  return {ok, std::to_string(kPoisonSeeds) + " seeds: poisoned commits " + std::to_string(leaks) +
                  ", worst bfel gap " + fmt("%.2f pp", 100 * worst_gap) + ", weakest fel drop " +
                  fmt("%.2f pp", 100 * weakest_drop) + ", " + budget(secs, kBudgetC6)};
}

std::pair<bool, std::string> c7() {
  const auto t0 = Clock::now();
  const auto base = load_config(kConfigs / "byzantine.json");
  RunOptions opt;
  opt.keep_round_logs = true;
  std::size_t mismatches = 0, committed = 0, rounds = 0, late = 0, byzantine = 0, wrong_slash = 0;
  std::uint32_t last_slash = 0;
  for (int s = 1; s <= kByzantineSeeds; ++s) {
    auto cfg = base;
    cfg.seed = static_cast<std::uint64_t>(s);
    const auto run = run_experiment(cfg, opt);
    const auto td = build_task_data(cfg, 1);
    const ReferenceModel model(td.spec);
    const auto& byz = run.tasks[0].byzantine_miners;
    byzantine += byz.size();
    std::map<std::string, std::uint32_t> slashed_at;
    for (const auto& log : run.rounds) {
      ++rounds;
      for (const auto& m : log.slashed) slashed_at.emplace(m, log.round);
      if (!log.committed) continue;
      ++committed;
      const double base_acc = model.accuracy(log.global_before, td.verification);
      std::vector<std::string> honest;
      for (const auto& u : log.updates) {
        const auto cand = sgd_step(log.global_before, u.gradient.densify(), cfg.training.learning_rate);
        if (model.accuracy(cand, td.verification) >= base_acc - cfg.theta) honest.push_back(u.worker_id);
      }
      auto got = log.qualified;
      std::sort(got.begin(), got.end());
      mismatches += got != honest;
    }
    for (const auto& b : byz) {
      auto it = slashed_at.find(b);
      if (it == slashed_at.end() || it->second >= kSlashWithin) {
        ++late;
      } else {
        last_slash = std::max(last_slash, it->second);
      }
    }
    for (const auto& [m, r] : slashed_at) wrong_slash += !std::binary_search(byz.begin(), byz.end(), m);
  }
  const double secs = seconds_since(t0);
  const bool ok = mismatches == 0 && late == 0 && byzantine == 3u * kByzantineSeeds &&
                  base.training.epochs == 100 && secs < kBudgetC7;
  return {ok, std::to_string(kByzantineSeeds) + " seeds x " + std::to_string(base.training.epochs) +
                  " rounds: committed " + std::to_string(committed) + "/" + std::to_string(rounds) +
                  ", oracle mismatches " + std::to_string(mismatches) + ", byzantine " +
                  std::to_string(byzantine) + ", slashed late/never " + std::to_string(late) +
                  " (latest slash round " + std::to_string(last_slash) + "), honest slashed " +
                  std::to_string(wrong_slash) + ", " + budget(secs, kBudgetC7)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& s) {
  std::ofstream(p, std::ios::binary | std::ios::trunc) << s;
}

std::pair<bool, std::string> c8() {
  const auto t0 = Clock::now();
  const auto dir = fs::temp_directory_path() / "bfel_acceptance_c8";
  fs::remove_all(dir);
  write_artifacts(run_experiment(load_config(kConfigs / "smoke.json")), dir);
  const auto clean = verify_artifacts(dir);
  bool anchors = false;
  for (const auto& c : clean.checks) anchors |= c.name == "anchors" && c.ok;

  std::vector<fs::path> files;
  std::vector<std::string> originals;
  std::size_t total = 0;
  for (const auto& e : fs::directory_iterator(dir / "chains")) {
    if (e.path().extension() == ".chain") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    originals.push_back(slurp(f));
    total += originals.back().size();
  }

  Rng rng(derive_seed(8, {kTamperCases}));
  std::size_t detected = 0;
  for (int i = 0; i < kTamperCases; ++i) {
    // Uniform over every committed byte across all chain files.
    auto pos = rng.below(total);
    std::size_t f = 0;
    while (pos >= originals[f].size()) pos -= originals[f++].size();
    auto bytes = originals[f];
    bytes[pos] = static_cast<char>(bytes[pos] ^ (1u << rng.below(8)));
    spit(files[f], bytes);
    VerifyOptions fast;
    fast.fast = true;
    detected += !verify_artifacts(dir, fast).ok();
    spit(files[f], originals[f]);
  }
  const bool still_clean = verify_artifacts(dir, {true}).ok();
  fs::remove_all(dir);
  const double secs = seconds_since(t0);
  const bool ok = clean.ok() && anchors && still_clean && detected == kTamperCases && secs < kBudgetC8;
  return {ok, "clean run " + std::string(clean.ok() ? "verifies" : "FAILS") + ", anchors " +
                  (anchors ? "verify" : "FAIL") + ", tampers detected " + std::to_string(detected) +
                  "/" + std::to_string(kTamperCases) + " over " + std::to_string(files.size()) +
                  " chain files (" + std::to_string(total) + " bytes), " + budget(secs, kBudgetC8)};
}

std::pair<bool, std::string> c9() {
  const auto t0 = Clock::now();
  const std::string cmd = std::string("\"") + BFEL_PROPERTIES_BIN + "\" --gtest_brief=1 > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return {rc == 0, std::string("bfel_properties ") + (rc == 0 ? "passed" : "failed") + " in " +
                       fmt("%.1f s", seconds_since(t0))};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<std::string> only;
  for (int i = 1; i < argc; ++i) only.insert(argv[i]);
  auto want = [&](const char* id) { return only.empty() || only.count(id); };

  if (want("C1")) criterion("C1", "dense equivalence", c1);
  if (want("C2")) criterion("C2", "compression ratio", c2);
  if (want("C3")) criterion("C3", "accuracy trend", c3);
  if (want("C4")) criterion("C4", "communication reduction", c4);
  if (want("C5")) criterion("C5", "consensus overhead", c5);
  if (want("C6")) criterion("C6", "poisoning defense", c6);
  if (want("C7")) criterion("C7", "byzantine safety", c7);
  if (want("C8")) criterion("C8", "ledger integrity", c8);
  if (want("C9")) criterion("C9", "property suites", c9);
  return failures == 0 ? 0 : 1;
}
