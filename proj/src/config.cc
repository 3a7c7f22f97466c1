#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

#include "bfel/errors.h"
#include "bfel/experiment.h"

namespace bfel {

using nlohmann::json;

namespace {

// Reads typed fields from one JSON object and rejects keys nobody asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + " must be an object");
  }

  const json* find(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string where(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  void number(const char* key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) throw ConfigError(where(key) + " must be a number");
      out = v->get<double>();
      if (!std::isfinite(out)) throw ConfigError(where(key) + " must be finite");
    }
  }

  template <typename T>
  void integer(const char* key, T& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_unsigned()) {
        throw ConfigError(where(key) + " must be a non-negative integer");
      }
      const auto x = v->get<std::uint64_t>();
      if (x > std::numeric_limits<T>::max()) throw ConfigError(where(key) + " is too large");
      out = static_cast<T>(x);
    }
  }

  void string(const char* key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) throw ConfigError(where(key) + " must be a string");
      out = v->get<std::string>();
    }
  }

  std::optional<Section> object(const char* key) {
    if (const json* v = find(key)) return Section(*v, where(key));
    return std::nullopt;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown config key " + where(it.key().c_str()));
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") != std::string::npos) out.push_back(line);
  }
  return out;
}

}  // namespace

std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::kFel: return "fel";
    case Scenario::kFelGcs: return "fel-gcs";
    case Scenario::kBfelGcs: return "bfel-gcs";
  }
  return "unknown";
}

Scenario scenario_from_string(const std::string& s) {
  if (s == "fel") return Scenario::kFel;
  if (s == "fel-gcs") return Scenario::kFelGcs;
  if (s == "bfel-gcs") return Scenario::kBfelGcs;
  throw ConfigError("unknown scenario: " + s);
}

void ExperimentConfig::validate() const {
  const auto& f = federation;
  if (f.tasks == 0) throw ConfigError("federation.tasks must be >= 1");
  if (f.workers_per_task == 0) throw ConfigError("federation.workers_per_task must be >= 1");
  if (f.anchor_period == 0) throw ConfigError("federation.anchor_period must be >= 1");
  if (f.slash_rounds == 0) throw ConfigError("federation.slash_rounds must be >= 1");
  if (scenario == Scenario::kBfelGcs) {
    if (f.miners_per_task < 2) throw ConfigError("federation.miners_per_task must be >= 2");
    if (f.candidate_miners < std::uint64_t{f.tasks} * f.miners_per_task) {
      throw ConfigError("federation.candidate_miners cannot fill every committee");
    }
    if (f.votes_per_worker == 0) throw ConfigError("federation.votes_per_worker must be >= 1");
    if (f.buyers == 0) throw ConfigError("federation.buyers must be >= 1");
  }
  const auto& t = training;
  if (!(t.learning_rate > 0.0)) throw ConfigError("training.learning_rate must be positive");
  if (t.batch_size == 0) throw ConfigError("training.batch_size must be >= 1");
  if (t.epochs == 0) throw ConfigError("training.epochs must be >= 1");
  if (t.model == ModelKind::kMlp && t.hidden == 0) throw ConfigError("training.model.hidden must be >= 1");
  if (!(t.output_init_std >= 0.0 && std::isfinite(t.output_init_std))) {
    throw ConfigError("training.model.output_init_std must be finite and >= 0");
  }
  if (!(t.train_fraction > 0.0 && t.train_fraction < 1.0)) {
    throw ConfigError("training.train_fraction must lie in (0, 1)");
  }
  if (t.verification_samples == 0) throw ConfigError("training.verification_samples must be >= 1");
  const auto& d = t.dataset;
  if (d.source == "blobs") {
    if (d.blobs.dim == 0 || d.blobs.num_classes < 2 || d.blobs.count == 0) {
      throw ConfigError("training.dataset needs dim >= 1, classes >= 2, count >= 1");
    }
    if (!(d.blobs.separation >= 0.0) || !(d.blobs.noise > 0.0)) {
      throw ConfigError("training.dataset needs separation >= 0 and noise > 0");
    }
  } else if (d.source == "csv") {
    if (d.path.empty()) throw ConfigError("training.dataset.path is required for csv");
  } else if (d.source == "mnist") {
    if (d.images.empty() || d.labels.empty()) {
      throw ConfigError("training.dataset.images and .labels are required for mnist");
    }
  } else {
    throw ConfigError("training.dataset.source must be blobs, csv or mnist");
  }
  compression.validate();
  if (!(theta >= 0.0 && theta <= 1.0)) throw ConfigError("policy.theta must lie in [0, 1]");
  cost.validate();
  attack.validate();
  fault_script();
}

FaultScript ExperimentConfig::fault_script() const {
  std::string text;
  for (const auto& line : fault_rules) text += line + "\n";
  return FaultScript::parse(text);
}

ExperimentConfig parse_config(const std::string& json_text, const std::filesystem::path& base_dir) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  Section top(root, "");
  std::string scenario = to_string(c.scenario);
  top.string("scenario", scenario);
  c.scenario = scenario_from_string(scenario);
  top.integer("seed", c.seed);

  if (auto s = top.object("federation")) {
    auto& f = c.federation;
    s->integer("tasks", f.tasks);
    s->integer("workers_per_task", f.workers_per_task);
    s->integer("miners_per_task", f.miners_per_task);
    s->integer("candidate_miners", f.candidate_miners);
    s->integer("votes_per_worker", f.votes_per_worker);
    s->integer("buyers", f.buyers);
    s->integer("deposit", f.deposit);
    s->integer("min_deposit", f.min_deposit);
    s->integer("model_price", f.model_price);
    s->integer("anchor_period", f.anchor_period);
    s->integer("slash_rounds", f.slash_rounds);
    s->finish();
  }
  if (auto s = top.object("training")) {
    auto& t = c.training;
    s->number("learning_rate", t.learning_rate);
    s->integer("batch_size", t.batch_size);
    s->integer("epochs", t.epochs);
    s->number("train_fraction", t.train_fraction);
    s->integer("verification_samples", t.verification_samples);
    if (auto m = s->object("model")) {
      std::string kind = to_string(t.model);
      m->string("kind", kind);
      t.model = model_kind_from_string(kind);
      m->integer("hidden", t.hidden);
      m->number("output_init_std", t.output_init_std);
      m->finish();
    }
    if (auto d = s->object("dataset")) {
      auto& ds = t.dataset;
      d->string("source", ds.source);
      d->integer("dim", ds.blobs.dim);
      d->integer("classes", ds.blobs.num_classes);
      d->integer("count", ds.blobs.count);
      d->number("separation", ds.blobs.separation);
      d->number("noise", ds.blobs.noise);
      d->string("path", ds.path);
      d->string("images", ds.images);
      d->string("labels", ds.labels);
      d->integer("limit", ds.limit);
      d->finish();
      for (auto* p : {&ds.path, &ds.images, &ds.labels}) {
        if (!p->empty() && std::filesystem::path(*p).is_relative() && !base_dir.empty()) {
          *p = (base_dir / *p).lexically_normal().string();
        }
      }
    }
    s->finish();
  }
  if (auto s = top.object("compression")) {
    auto& cc = c.compression;
    s->number("rho", cc.rho_percent);
    s->number("momentum", cc.momentum);
    if (const json* v = s->find("clip_norm")) {
      if (v->is_null()) {
        cc.clip_norm.reset();
      } else if (v->is_number()) {
        cc.clip_norm = v->get<double>();
      } else {
        throw ConfigError("compression.clip_norm must be a number or null");
      }
    }
    s->finish();
  }
  if (auto s = top.object("policy")) {
    s->number("theta", c.theta);
    s->finish();
  }
  if (auto s = top.object("cost_model")) {
    s->number("bytes_per_ms", c.cost.bytes_per_ms);
    s->number("base_latency_ms", c.cost.base_latency_ms);
    s->number("consensus_delay_ms", c.cost.consensus_delay_ms);
    s->number("jitter_ms", c.cost.jitter_ms);
    s->finish();
  }
  if (auto s = top.object("attack")) {
    auto& a = c.attack;
    s->number("poison_fraction", a.poison_fraction);
    std::string mode = to_string(a.poison_mode);
    s->string("poison_mode", mode);
    a.poison_mode = poison_mode_from_string(mode);
    s->number("poison_scale", a.poison_scale);
    s->number("noise_sigma", a.noise_sigma);
    s->number("byzantine_fraction", a.byzantine_fraction);
    std::string directive = to_string(a.byzantine_directive);
    s->string("byzantine_directive", directive);
    a.byzantine_directive = directive_from_string(directive);
    if (const json* v = s->find("fault_script")) {
      if (!v->is_null()) {
        if (!v->is_string()) throw ConfigError("attack.fault_script must be a path or null");
        std::filesystem::path p = v->get<std::string>();
        if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
        std::ifstream in(p);
        if (!in) throw ConfigError("cannot open fault script " + p.string());
        std::stringstream ss;
        ss << in.rdbuf();
        for (auto& line : split_lines(ss.str())) c.fault_rules.push_back(line);
      }
    }
    if (const json* v = s->find("fault_rules")) {
      if (!v->is_array()) throw ConfigError("attack.fault_rules must be an array of strings");
      for (const auto& line : *v) {
        if (!line.is_string()) throw ConfigError("attack.fault_rules must be an array of strings");
        c.fault_rules.push_back(line.get<std::string>());
      }
    }
    s->finish();
  }
  top.finish();
  c.cost.jitter_seed = c.seed;
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

namespace {

json config_json(const ExperimentConfig& c) {
  const auto& f = c.federation;
  const auto& t = c.training;
  const auto& d = t.dataset;
  json j;
  j["scenario"] = to_string(c.scenario);
  j["seed"] = c.seed;
  j["federation"] = {{"tasks", f.tasks},
                     {"workers_per_task", f.workers_per_task},
                     {"miners_per_task", f.miners_per_task},
                     {"candidate_miners", f.candidate_miners},
                     {"votes_per_worker", f.votes_per_worker},
                     {"buyers", f.buyers},
                     {"deposit", f.deposit},
                     {"min_deposit", f.min_deposit},
                     {"model_price", f.model_price},
                     {"anchor_period", f.anchor_period},
                     {"slash_rounds", f.slash_rounds}};
  j["training"] = {{"learning_rate", t.learning_rate},
                   {"batch_size", t.batch_size},
                   {"epochs", t.epochs},
                   {"train_fraction", t.train_fraction},
                   {"verification_samples", t.verification_samples},
                   {"model", {{"kind", to_string(t.model)}, {"hidden", t.hidden},
                              {"output_init_std", t.output_init_std}}},
                   {"dataset",
                    {{"source", d.source},
                     {"dim", d.blobs.dim},
                     {"classes", d.blobs.num_classes},
                     {"count", d.blobs.count},
                     {"separation", d.blobs.separation},
                     {"noise", d.blobs.noise},
                     {"path", d.path},
                     {"images", d.images},
                     {"labels", d.labels},
                     {"limit", d.limit}}}};
  j["compression"] = {{"rho", c.compression.rho_percent},
                      {"momentum", c.compression.momentum},
                      {"clip_norm", c.compression.clip_norm ? json(*c.compression.clip_norm)
                                                            : json(nullptr)}};
  j["policy"] = {{"theta", c.theta}};
  j["cost_model"] = {{"bytes_per_ms", c.cost.bytes_per_ms},
                     {"base_latency_ms", c.cost.base_latency_ms},
                     {"consensus_delay_ms", c.cost.consensus_delay_ms},
                     {"jitter_ms", c.cost.jitter_ms}};
  j["attack"] = {{"poison_fraction", c.attack.poison_fraction},
                 {"poison_mode", to_string(c.attack.poison_mode)},
                 {"poison_scale", c.attack.poison_scale},
                 {"noise_sigma", c.attack.noise_sigma},
                 {"byzantine_fraction", c.attack.byzantine_fraction},
                 {"byzantine_directive", to_string(c.attack.byzantine_directive)},
                 {"fault_rules", c.fault_rules}};
  return j;
}

}  // namespace

std::string config_to_json(const ExperimentConfig& config) {
  return config_json(config).dump(2) + "\n";
}

ExperimentConfig with_override(const ExperimentConfig& config, const std::string& key,
                               const std::string& json_value) {
  std::string path = key == "rho" ? "compression.rho" : key;
  json value;
  try {
    value = json::parse(json_value);
  } catch (const json::parse_error&) {
    value = json_value;  // bare word, e.g. a scenario name
  }
  json j = config_json(config);
  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const auto part = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(part)) throw ConfigError("unknown config key " + key);
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  *node = value;
  return parse_config(j.dump());
}

}  // namespace bfel
