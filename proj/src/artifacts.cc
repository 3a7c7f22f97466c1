#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "bfel/errors.h"
#include "bfel/experiment.h"

namespace bfel {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  std::size_t pos = 0;
  const double v = std::stod(s, &pos);
  if (pos != s.size()) throw std::invalid_argument(s);
  return v;
}

json ratio_json(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double ratio_from_json(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
}

constexpr char kMetricsHeader[] =
    "task,round,global_test_accuracy,bytes_this_round,cumulative_bytes,compression_ratio,"
    "exposure_ratio,qualified_count,slashed_count,simulated_time_ms";

bool close_rel(double a, double b, double tol) {
  if (std::isinf(a) || std::isinf(b)) return a == b;
  return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace

std::string metrics_to_csv(const std::vector<MetricsRow>& rows) {
  std::string out = kMetricsHeader;
  out += '\n';
  for (const auto& r : rows) {
    out += std::to_string(r.task) + ',' + std::to_string(r.round) + ',' +
           fmt(r.global_test_accuracy) + ',' + std::to_string(r.bytes_this_round) + ',' +
           std::to_string(r.cumulative_bytes) + ',' + fmt(r.compression_ratio) + ',' +
           fmt(r.exposure_ratio) + ',' + std::to_string(r.qualified_count) + ',' +
           std::to_string(r.slashed_count) + ',' + std::to_string(r.simulated_time_ms) + '\n';
  }
  return out;
}

std::vector<MetricsRow> metrics_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) throw InputError("bad metrics header");
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> c;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) c.push_back(cell);
    if (c.size() != 10) throw InputError("metrics row needs 10 columns: " + line);
    try {
      MetricsRow r;
      r.task = static_cast<std::uint32_t>(std::stoul(c[0]));
      r.round = static_cast<std::uint32_t>(std::stoul(c[1]));
      r.global_test_accuracy = parse_double(c[2]);
      r.bytes_this_round = std::stoull(c[3]);
      r.cumulative_bytes = std::stoull(c[4]);
      r.compression_ratio = parse_double(c[5]);
      r.exposure_ratio = parse_double(c[6]);
      r.qualified_count = static_cast<std::uint32_t>(std::stoul(c[7]));
      r.slashed_count = static_cast<std::uint32_t>(std::stoul(c[8]));
      r.simulated_time_ms = std::stoll(c[9]);
      rows.push_back(r);
    } catch (const std::logic_error&) {
      throw InputError("bad metrics row: " + line);
    }
  }
  return rows;
}

std::string RunResult::summary_line() const {
  std::uint32_t committed = 0;
  std::size_t slashed = 0, poisoned = 0;
  for (const auto& t : tasks) {
    committed += t.committed_rounds;
    slashed += t.slashed_miners.size();
    poisoned += t.poisoned_committed;
  }
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "scenario=%s seed=%llu rounds=%u final_accuracy=%.4f total_bytes=%llu "
                "simulated_time_ms=%lld compression_ratio=%.2f exposure_ratio=%.6f "
                "committed_rounds=%u slashed=%zu poisoned_in_model=%zu",
                to_string(config.scenario).c_str(),
                static_cast<unsigned long long>(config.seed), config.training.epochs,
                final_accuracy, static_cast<unsigned long long>(total_bytes),
                static_cast<long long>(simulated_time_ms), compression_ratio, exposure_ratio,
                committed, slashed, poisoned);
  return buf;
}

std::string RunResult::summary_json() const {
  json j;
  j["scenario"] = to_string(config.scenario);
  j["seed"] = config.seed;
  j["rounds"] = config.training.epochs;
  j["final_accuracy"] = final_accuracy;
  j["total_bytes"] = total_bytes;
  j["settlement_bytes"] = settlement_bytes;
  j["simulated_time_ms"] = simulated_time_ms;
  j["compression_ratio"] = ratio_json(compression_ratio);
  j["exposure_ratio"] = exposure_ratio;
  j["trace_digest"] = to_hex(trace_digest);
  j["time_model"] = "simulated communication and consensus delay only; computation is not modelled";
  j["exposure_note"] =
      "exposure_ratio is the fraction of gradient coordinates transmitted, a proxy for "
      "inference-attack surface";
  json tasks_json = json::array();
  for (const auto& t : tasks) {
    tasks_json.push_back({{"task", t.task},
                          {"final_accuracy", t.final_accuracy},
                          {"final_model", to_hex(t.final_model)},
                          {"simulated_time_ms", t.simulated_time_ms},
                          {"transmitted_entries", t.transmitted_entries},
                          {"worker_rounds", t.worker_rounds},
                          {"committed_rounds", t.committed_rounds},
                          {"poisoned_workers", t.poisoned_workers},
                          {"byzantine_miners", t.byzantine_miners},
                          {"slashed_miners", t.slashed_miners},
                          {"poisoned_committed", t.poisoned_committed}});
  }
  j["tasks"] = tasks_json;
  return j.dump(2) + "\n";
}

void write_artifacts(const RunResult& result, const fs::path& run_dir) {
  fs::create_directories(run_dir);
  write_text(run_dir / "config.json", config_to_json(result.config));
  write_text(run_dir / "metrics.csv", metrics_to_csv(result.metrics));
  write_trace_csv(run_dir / "trace.csv", result.trace);
  write_text(run_dir / "summary.json", result.summary_json());
  if (!result.chains.empty()) {
    fs::create_directories(run_dir / "chains");
    for (const auto& c : result.chains) {
      write_chain_file(run_dir / "chains" / (c.id() + ".chain"), c);
      write_text(run_dir / "chains" / (c.id() + ".json"), chain_to_json(c) + "\n");
    }
    write_text(run_dir / "authority.json", result.authority_json);
  }
}

std::vector<SweepRow> sweep(const ExperimentConfig& base, const std::string& parameter,
                            const std::vector<std::string>& values, const fs::path& out_dir) {
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  std::vector<ExperimentConfig> configs;
  for (const auto& v : values) configs.push_back(with_override(base, parameter, v));
  std::vector<SweepRow> rows;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto result = run_experiment(configs[i]);
    std::string leaf = parameter + "-" + values[i];
    for (auto& ch : leaf) {
      if (ch == '/' || ch == ' ') ch = '_';
    }
    write_artifacts(result, out_dir / leaf);
    rows.push_back({values[i], result.final_accuracy, result.compression_ratio,
                    result.exposure_ratio, result.total_bytes, result.simulated_time_ms});
  }
  write_text(out_dir / "comparison.csv", sweep_to_csv(parameter, rows));
  return rows;
}

std::string sweep_to_csv(const std::string& parameter, const std::vector<SweepRow>& rows) {
  std::string out = parameter +
                    ",final_accuracy,compression_ratio,exposure_ratio,total_bytes,simulated_time_ms\n";
  for (const auto& r : rows) {
    out += r.value + ',' + fmt(r.final_accuracy) + ',' + fmt(r.compression_ratio) + ',' +
           fmt(r.exposure_ratio) + ',' + std::to_string(r.total_bytes) + ',' +
           std::to_string(r.simulated_time_ms) + '\n';
  }
  return out;
}

bool VerifyReport::ok() const {
  for (const auto& c : checks) {
    if (!c.ok) return false;
  }
  return !checks.empty();
}

std::string VerifyReport::to_text() const {
  std::string out;
  for (const auto& c : checks) {
    out += std::string(c.ok ? "ok   " : "FAIL ") + c.name;
    if (!c.detail.empty()) out += ": " + c.detail;
    out += '\n';
  }
  out += ok() ? "verify: all checks passed\n" : "verify: FAILED\n";
  return out;
}

VerifyReport verify_artifacts(const fs::path& run_dir, const VerifyOptions& options) {
  VerifyReport report;
  auto add = [&](std::string name, bool ok, std::string detail = {}) {
    report.checks.push_back({std::move(name), ok, std::move(detail)});
    return ok;
  };

  for (const char* f : {"config.json", "metrics.csv", "trace.csv", "summary.json"}) {
    if (!fs::exists(run_dir / f)) {
      add("files", false, std::string("missing ") + f);
      return report;
    }
  }
  ExperimentConfig cfg;
  json summary;
  std::vector<MetricsRow> metrics;
  std::vector<TraceRecord> trace;
  try {
    cfg = load_config(run_dir / "config.json");
    summary = json::parse(read_text(run_dir / "summary.json"));
    metrics = metrics_from_csv(read_text(run_dir / "metrics.csv"));
    trace = read_trace_csv(run_dir / "trace.csv");
  } catch (const std::exception& e) {
    add("files", false, e.what());
    return report;
  }
  add("files", true);
  const bool ledger = cfg.scenario == Scenario::kBfelGcs;
  const auto tasks = cfg.federation.tasks;
  const auto rounds = cfg.training.epochs;

  // Chains first: a tampered ledger short-circuits the expensive checks.
  std::vector<Chain> training;
  std::optional<Chain> main_chain, trading;
  std::optional<Authority> authority;
  if (ledger) {
    try {
      authority = Authority::from_json(read_text(run_dir / "authority.json"));
    } catch (const std::exception& e) {
      add("authority", false, e.what());
      return report;
    }
    auto load = [&](const std::string& id) -> std::optional<Chain> {
      const auto path = run_dir / "chains" / (id + ".chain");
      try {
        Chain c = read_chain_file(path);
        if (c.id() != id) {
          add("chain " + id, false, "file holds chain " + c.id());
          return std::nullopt;
        }
        const auto v = validate_chain(c, *authority);
        if (!v.ok) {
          add("chain " + id, false,
              "invalid at height " + std::to_string(v.first_invalid_height.value_or(0)) + ": " +
                  v.reason);
          return std::nullopt;
        }
        add("chain " + id, true, std::to_string(c.length()) + " blocks");
        return c;
      } catch (const std::exception& e) {
        add("chain " + id, false, e.what());
        return std::nullopt;
      }
    };
    bool chains_ok = true;
    for (std::uint32_t t = 1; t <= tasks; ++t) {
      auto c = load(training_chain_id(t));
      if (c) {
        training.push_back(std::move(*c));
      } else {
        chains_ok = false;
      }
    }
    main_chain = load("main");
    trading = load("trading");
    if (!chains_ok || !main_chain || !trading) return report;

    bool anchors_ok = true;
    std::string anchor_detail;
    for (const auto& c : training) {
      std::uint64_t next = 0;
      for (const auto& a : anchors_for(*main_chain, c.id())) {
        bool good = a.from_height == next;
        try {
          good = good && verify_anchor(a, c);
        } catch (const std::exception&) {
          good = false;
        }
        if (!good) {
          anchors_ok = false;
          anchor_detail = c.id() + " anchor " + a.locator + " does not verify";
        }
        next = a.to_height + 1;
      }
      if (next != c.length()) {
        anchors_ok = false;
        anchor_detail = c.id() + " has unanchored blocks from height " + std::to_string(next);
      }
    }
    add("anchors", anchors_ok, anchor_detail);
  }

  // Trace accounting.
  std::uint64_t total = 0;
  for (const auto& r : trace) total += r.size_bytes;
  add("trace bytes", total == summary.at("total_bytes").get<std::uint64_t>(),
      std::to_string(total) + " bytes in trace");
  std::uint64_t cumulative = 0;
  std::int64_t slowest = 0;
  bool time_ok = true;
  std::string time_detail;
  for (std::uint32_t t = 1; t <= tasks; ++t) {
    const MetricsRow* last = nullptr;
    std::uint32_t count = 0;
    for (const auto& m : metrics) {
      if (m.task == t) {
        last = &m;
        ++count;
      }
    }
    if (last == nullptr || count != rounds) {
      time_ok = false;
      time_detail = "task " + std::to_string(t) + " metrics row count mismatch";
      continue;
    }
    cumulative += last->cumulative_bytes;
    const auto prefix = task_prefix(t);
    auto mine = [&](const TraceRecord& r) {
      return r.src.rfind(prefix, 0) == 0 || r.dst.rfind(prefix, 0) == 0;
    };
    const auto cost = communication_cost(trace, cfg.cost, rounds, ledger, mine);
    if (cost.total_time_ms != last->simulated_time_ms || cost.rounds_observed != rounds) {
      time_ok = false;
      time_detail = "task " + std::to_string(t) + " trace time " +
                    std::to_string(cost.total_time_ms) + " vs metrics " +
                    std::to_string(last->simulated_time_ms);
    }
    slowest = std::max(slowest, cost.total_time_ms);
  }
  if (time_ok && slowest != summary.at("simulated_time_ms").get<std::int64_t>()) {
    time_ok = false;
    time_detail = "summary time differs from trace";
  }
  add("trace time", time_ok, time_detail);
  add("byte reconciliation",
      cumulative + summary.at("settlement_bytes").get<std::uint64_t>() == total,
      "metrics " + std::to_string(cumulative) + " + settlement vs trace " + std::to_string(total));

  // Compression ratio and exposure from the uplink message sizes.
  std::optional<TaskData> first;
  std::uint32_t dim = 0;
  try {
    first = build_task_data(cfg, 1);
    dim = static_cast<std::uint32_t>(first->initial.dim());
  } catch (const std::exception& e) {
    add("dataset", false, e.what());
    return report;
  }
  std::uint64_t entries = 0, updates = 0;
  bool sizes_ok = true;
  for (const auto& r : trace) {
    if (r.msg_type != "update") continue;
    LocalUpdate empty{r.src, 0, SparseGradient(dim, 0, {}), 0, Bytes(32)};
    const auto overhead = empty.encode().size();
    if (r.size_bytes < overhead || (r.size_bytes - overhead) % SparseGradient::kEntryBytes != 0) {
      sizes_ok = false;
      continue;
    }
    entries += (r.size_bytes - overhead) / SparseGradient::kEntryBytes;
    ++updates;
  }
  const double ratio = updates == 0 ? 0.0 : compression_ratio(entries, dim, updates);
  const double exposure = updates == 0 ? 0.0 : exposure_ratio(entries, dim, updates);
  const double claimed = ratio_from_json(summary.at("compression_ratio"));
  add("compression ratio",
      sizes_ok && updates == std::uint64_t{tasks} * cfg.federation.workers_per_task * rounds &&
          close_rel(ratio, claimed, 1e-12),
      "trace " + fmt(ratio) + " vs summary " + fmt(claimed));
  add("exposure", close_rel(exposure, summary.at("exposure_ratio").get<double>(), 1e-12) &&
                      (std::isinf(ratio) ? exposure == 0.0 : std::abs(exposure - 1.0 / ratio) <= 1e-12),
      "exposure " + fmt(exposure) + ", 1/ratio " + fmt(1.0 / ratio));

  if (!ledger) {
    add("model replay", true, "skipped: no ledger in this scenario");
    return report;
  }
  if (options.fast) return report;

  bool replay_ok = true, trade_ok = true;
  std::string replay_detail;
  for (std::uint32_t t = 1; t <= tasks; ++t) {
    const TaskData td = t == 1 ? *first : build_task_data(cfg, t);
    const Chain& chain = training[t - 1];
    ModelParameters params = td.initial;
    for (const auto& b : chain.blocks()) {
      const auto& p = std::get<TrainingPayload>(b.payload);
      if (b.header.height > 0) {
        params = compute_global_update(p, params, cfg.training.learning_rate);
      }
      if (model_digest(params) != p.model_digest) {
        replay_ok = false;
        replay_detail = chain.id() + " digest mismatch at height " +
                        std::to_string(b.header.height);
        break;
      }
    }
    const auto& task_summary = summary.at("tasks").at(t - 1);
    const double acc = ReferenceModel(td.spec).accuracy(params, td.test);
    if (acc != task_summary.at("final_accuracy").get<double>() ||
        to_hex(model_digest(params)) != task_summary.at("final_model").get<std::string>()) {
      replay_ok = false;
      replay_detail = chain.id() + " final model or accuracy differs from summary";
    }
    if (trades_for_model(*trading, model_digest(params)).empty() ||
        !is_model_anchored(model_digest(params), chain, *main_chain)) {
      trade_ok = false;
    }
  }
  add("model replay", replay_ok, replay_detail);
  add("trades", trade_ok, trade_ok ? "" : "final model not traded against an anchored digest");
  return report;
}

}  // namespace bfel
