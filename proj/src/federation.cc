#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <memory>
#include <set>

#include <json.hpp>

#include "bfel/errors.h"
#include "bfel/experiment.h"
#include "bfel/rng.h"

namespace bfel {

namespace {

// Seed-derivation tags; each stream gets its own so that adding one never
// perturbs another.
enum SeedTag : std::uint64_t {
  kDataTag = 1,
  kSplitTag,
  kShardTag,
  kInitTag,
  kBatchTag,
  kPositionTag,
  kPoisonTag,
  kByzantineTag,
  kNoiseTag,
  kAuthorityTag,
  kRotationTag,
  kVerificationTag,
};

constexpr char kLedgerNode[] = "ledger";

std::string two_digits(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%02zu", i);
  return buf;
}

struct Point {
  double x = 0.0;
  double y = 0.0;
};

double dist2(Point a, Point b) { return (a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y); }

Point random_point(Rng& rng) {
  const double x = rng.uniform();
  return {x, rng.uniform()};
}

std::vector<std::string> update_ids(const std::vector<LocalUpdate>& updates) {
  std::vector<std::string> ids;
  for (const auto& u : updates) ids.push_back(u.worker_id);
  return ids;
}

SparseGradient sparse_nonzero(const GradientVector& g, std::uint32_t round) {
  std::vector<SparseEntry> entries;
  for (std::uint32_t i = 0; i < g.dim(); ++i) {
    if (g[i] != 0.0) entries.push_back({i, g[i]});
  }
  return SparseGradient(static_cast<std::uint32_t>(g.dim()), round, std::move(entries));
}

Bytes encode_trade(const TradeRecord& t) {
  ByteWriter w;
  t.encode_to(w);
  return std::move(w).take();
}

TradeRecord decode_trade(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  auto t = TradeRecord::decode_from(r);
  r.expect_done();
  return t;
}

struct Worker {
  std::string id;
  std::size_t index = 0;
  Dataset shard;
  BatchSampler sampler;
  std::optional<GradientCompressor> compressor;
  bool poisoned = false;
  ModelParameters model;
  Point position;
  std::uint32_t round = 0;
};

struct Miner {
  std::string id;
  Point position;
  std::uint32_t task = 0;  // 0 while unelected
  std::map<std::string, LocalUpdate> inbox;
  std::map<std::string, VerifierResponse> verdicts;
  std::vector<VerifierResponse> responses;
  std::vector<BlockVote> votes;
};

struct Task {
  std::uint32_t index = 1;
  std::string prefix;
  TaskData data;
  std::unique_ptr<ReferenceModel> model;
  QualityPolicy policy;
  std::vector<Worker> workers;
  ModelParameters global;
  std::string aggregator;
  std::string publisher;
  std::string buyer;

  // Ledger scenario only.
  std::optional<Chain> chain;
  Committee committee;
  MisbehaviorTracker tracker{3};
  std::vector<SlashRecord> queued;
  std::vector<SlashRecord> snapshot;
  std::vector<SlashRecord> pending_equivocations;
  std::set<std::string> byzantine;
  std::uint64_t rotation_seed = 0;
  std::uint64_t anchored_to = 0;
  bool anchored_any = false;

  // Per-round state.
  std::uint32_t round = 0;
  std::uint32_t attempt = 0;
  std::int64_t t1 = 0;
  std::map<std::string, LocalUpdate> received;
  std::optional<double> baseline;
  std::map<std::string, Evaluation> evaluations;
  std::optional<std::vector<std::string>> honest;
  std::vector<Block> proposals;
  std::map<Digest, bool> validity;
  std::optional<Block> committed;
  std::string last_leader;

  bool finished = false;
  bool settled = false;
  std::uint64_t round_bytes = 0;
  std::uint64_t cumulative_bytes = 0;
  RoundLog log;
  TaskResult result;
};

class Federation {
 public:
  Federation(const ExperimentConfig& config, const RunOptions& options)
      : cfg_(config),
        options_(options),
        sim_(config.cost),
        authority_(derive_seed(config.seed, {kAuthorityTag})),
        script_(config.fault_script()),
        ledger_(config.scenario == Scenario::kBfelGcs) {}

  RunResult run();

 private:
  void setup_tasks();
  void setup_ledger();
  void register_nodes();

  std::int64_t send(Task* task, const std::string& src, const std::string& dst,
                    const std::string& type, Bytes message);

  void on_worker(Task& task, Worker& w, const SimEvent& e);
  void start_round(Task& task, Worker& w);
  void on_aggregator(Task& task, const SimEvent& e);
  void on_miner(Miner& m, const SimEvent& e);
  void on_clock(Task& task, const SimEvent& e);
  void on_ledger(const SimEvent& e);
  void on_publisher(Task& task, const SimEvent& e);
  void on_buyer(const SimEvent& e);

  void uplink_arrived(Task& task, const LocalUpdate& u);
  Directive directive(const std::string& miner, std::uint32_t round) const {
    return script_.directive(miner, round);
  }
  const std::vector<std::string>& honest_verdict(Task& task);
  std::vector<std::string> complement(const Task& task, const std::vector<std::string>& ids) const;
  std::vector<LocalUpdate> received_updates(const Task& task) const;
  bool valid_pending(Task& task, const Block& block);
  VerifierResponse make_response(Task& task, const std::string& miner,
                                 std::vector<std::string> qualified, bool with_comparison);
  Block propose(Task& task, const std::string& leader, const CrossVerification& tally,
                bool invert);
  std::int64_t attempt_start(const Task& task) const {
    return task.t1 + static_cast<std::int64_t>(task.attempt) * attempt_length();
  }
  std::int64_t attempt_length() const { return sim_.cost().consensus_delay() / 2; }
  std::string clock_id(const Task& task) const { return task.prefix + "clock"; }

  void stage_verdicts(Task& task);
  void stage_responses(Task& task);
  void stage_pending(Task& task);
  void stage_decide(Task& task);
  void close_round(Task& task, const std::string& sender, std::uint64_t height,
                   const std::vector<LocalUpdate>& aggregated);
  void slash(Task& task, const std::string& miner, SlashReason reason);
  void settle(Task& task);

  bool done() const;
  RunResult collect();

  ExperimentConfig cfg_;
  RunOptions options_;
  Simulator sim_;
  Authority authority_;
  FaultScript script_;
  bool ledger_;
  std::vector<std::unique_ptr<Task>> tasks_;
  std::map<std::string, Miner> miners_;
  std::map<std::string, Task*> task_of_miner_;
  std::optional<Chain> main_;
  std::optional<Chain> trading_;
  std::vector<MetricsRow> metrics_;
  std::vector<RoundLog> logs_;
  std::uint64_t settlement_bytes_ = 0;
};

void Federation::setup_tasks() {
  const auto& f = cfg_.federation;
  for (std::uint32_t t = 1; t <= f.tasks; ++t) {
    auto task = std::make_unique<Task>();
    task->index = t;
    task->prefix = task_prefix(t);
    task->data = build_task_data(cfg_, t);
    task->model = std::make_unique<ReferenceModel>(task->data.spec);
    task->policy = {cfg_.theta, task->data.verification};
    task->global = task->data.initial;
    task->aggregator = task->prefix + "aggregator";
    task->publisher = task->prefix + "publisher";
    task->buyer = "buyer-" + std::to_string((t - 1) % std::max<std::uint32_t>(1, f.buyers) + 1);
    task->tracker = MisbehaviorTracker(f.slash_rounds);
    task->rotation_seed = derive_seed(cfg_.seed, {kRotationTag, t});
    task->result.task = t;

    const auto poisoned = select_nodes(task->data.worker_ids, cfg_.attack.poison_fraction,
                                       derive_seed(cfg_.seed, {kPoisonTag, t}));
    task->result.poisoned_workers = poisoned;
    Rng positions(derive_seed(cfg_.seed, {kPositionTag, t}));
    for (std::size_t i = 0; i < task->data.worker_ids.size(); ++i) {
      const auto& id = task->data.worker_ids[i];
      const bool bad = std::binary_search(poisoned.begin(), poisoned.end(), id);
      Dataset shard = task->data.shards[i];
      if (bad && cfg_.attack.poison_mode == PoisonMode::kLabelFlip) shard = flip_labels(shard);
      BatchSampler sampler(shard.size(), cfg_.training.batch_size, task->data.batch_seeds[i]);
      Worker w{id, i, std::move(shard), std::move(sampler), std::nullopt, bad, task->global,
               random_point(positions), 0};
      if (cfg_.scenario != Scenario::kFel) {
        w.compressor.emplace(task->global.dim(), cfg_.compression);
      }
      authority_.register_identity(id, Role::kWorker);
      task->workers.push_back(std::move(w));
    }
    tasks_.push_back(std::move(task));
  }
}

void Federation::setup_ledger() {
  const auto& f = cfg_.federation;
  authority_.register_identity(kLedgerNode, Role::kAuthority);
  for (std::uint32_t b = 1; b <= f.buyers; ++b) {
    authority_.register_identity("buyer-" + std::to_string(b), Role::kBuyer);
  }
  Rng positions(derive_seed(cfg_.seed, {kPositionTag, 0}));
  std::vector<MinerState> pool;
  for (std::uint32_t i = 1; i <= f.candidate_miners; ++i) {
    const std::string id = "miner-" + two_digits(i);
    Miner m;
    m.id = id;
    m.position = random_point(positions);
    miners_.emplace(id, m);
    pool.push_back({authority_.register_identity(id, Role::kMiner), f.deposit, 0,
                    MinerStatus::kCandidate});
  }

  std::set<std::string> publishers, buyers;
  for (auto& task : tasks_) {
    authority_.register_identity(task->publisher, Role::kPublisher);
    publishers.insert(task->publisher);
    buyers.insert(task->buyer);

    WorkerVotes votes;
    for (const auto& w : task->workers) {
      std::vector<std::pair<double, std::string>> ranked;
      for (const auto& c : pool) ranked.push_back({dist2(w.position, miners_[c.id()].position), c.id()});
      std::sort(ranked.begin(), ranked.end());
      auto& choice = votes[w.id];
      for (std::size_t k = 0; k < std::min<std::size_t>(f.votes_per_worker, ranked.size()); ++k) {
        choice.push_back(ranked[k].second);
      }
    }
    auto elected = elect_delegates(pool, votes, f.miners_per_task, f.min_deposit);
    std::set<std::string> chosen;
    for (const auto& d : elected) {
      chosen.insert(d.id());
      miners_[d.id()].task = task->index;
      task_of_miner_[d.id()] = task.get();
    }
    std::erase_if(pool, [&](const MinerState& c) { return chosen.count(c.id()) != 0; });
    task->committee = rotate_roles(Committee(elected), task->rotation_seed, 0, 0);

    std::vector<std::string> ids(chosen.begin(), chosen.end());
    task->result.byzantine_miners = select_nodes(ids, cfg_.attack.byzantine_fraction,
                                                 derive_seed(cfg_.seed, {kByzantineTag, task->index}));
    for (const auto& b : task->result.byzantine_miners) {
      script_.add(0, std::numeric_limits<std::uint32_t>::max(), b, cfg_.attack.byzantine_directive);
    }

    std::set<std::string> access(chosen.begin(), chosen.end());
    for (const auto& w : task->workers) access.insert(w.id);
    access.insert(task->publisher);
    access.insert(kLedgerNode);
    TrainingPayload genesis;
    genesis.model_digest = model_digest(task->global);
    task->chain = Chain::create(training_chain_id(task->index), ChainKind::kTraining, access,
                                genesis, authority_, task->publisher, 0);
  }
  // Script rules from the config override the blanket Byzantine assignment.
  std::string user;
  for (const auto& line : cfg_.fault_rules) user += line + "\n";
  const auto overrides = FaultScript::parse(user);
  script_ = FaultScript::parse(script_.to_text() + overrides.to_text());

  main_ = Chain::create("main", ChainKind::kMain, {kLedgerNode}, AnchorPayload{}, authority_,
                        kLedgerNode, 0);
  std::set<std::string> trading_access = publishers;
  trading_access.insert(buyers.begin(), buyers.end());
  trading_access.insert(kLedgerNode);
  trading_ = Chain::create("trading", ChainKind::kTrading, trading_access, TradePayload{},
                           authority_, kLedgerNode, 0);
}

void Federation::register_nodes() {
  for (auto& task : tasks_) {
    Task* t = task.get();
    for (auto& w : t->workers) {
      Worker* wp = &w;
      sim_.add_node(w.id, [this, t, wp](const SimEvent& e) { on_worker(*t, *wp, e); });
    }
    sim_.add_node(clock_id(*t), [this, t](const SimEvent& e) { on_clock(*t, e); });
    if (ledger_) {
      sim_.add_node(t->publisher, [this, t](const SimEvent& e) { on_publisher(*t, e); });
    } else {
      sim_.add_node(t->aggregator, [this, t](const SimEvent& e) { on_aggregator(*t, e); });
    }
  }
  if (ledger_) {
    for (auto& [id, m] : miners_) {
      Miner* mp = &m;
      sim_.add_node(id, [this, mp](const SimEvent& e) { on_miner(*mp, e); });
    }
    sim_.add_node(kLedgerNode, [this](const SimEvent& e) { on_ledger(e); });
    for (std::uint32_t b = 1; b <= cfg_.federation.buyers; ++b) {
      sim_.add_node("buyer-" + std::to_string(b), [this](const SimEvent& e) { on_buyer(e); });
    }
  }
}

std::int64_t Federation::send(Task* task, const std::string& src, const std::string& dst,
                              const std::string& type, Bytes message) {
  const auto size = message.size();
  if (task != nullptr && !task->finished) {
    task->round_bytes += size;
  } else {
    settlement_bytes_ += size;
  }
  return sim_.send(src, dst, type, std::move(message));
}

// ---------------------------------------------------------------- workers

void Federation::on_worker(Task& task, Worker& w, const SimEvent& e) {
  if (e.timer) {
    start_round(task, w);
    return;
  }
  if (e.msg_type != "global") throw ProtocolError("worker got unexpected " + e.msg_type);
  const auto g = GlobalUpdate::decode(e.message);
  if (g.qualified > 0) w.model = sgd_step(w.model, g.average.densify(), cfg_.training.learning_rate);
  w.round = g.round + 1;
  if (w.round < cfg_.training.epochs) sim_.set_timer(w.id, g.next_round_start_ms, "start");
}

void Federation::start_round(Task& task, Worker& w) {
  const auto r = w.round;
  const auto batch = w.sampler.next();
  const auto g = task.model->gradient(w.model, w.shard, batch);
  std::optional<SparseGradient> sg;
  if (w.compressor) {
    auto c = w.compressor->compress(g);
    std::vector<SparseEntry> entries(c.entries().begin(), c.entries().end());
    sg.emplace(c.dim(), r, std::move(entries));
  } else {
    sg.emplace(SparseGradient::from_dense(g, r));
  }
  if (w.poisoned) {
    sg = poison_update(*sg, cfg_.attack.poison_mode,
                       derive_seed(cfg_.seed, {kNoiseTag, task.index, w.index, r}),
                       cfg_.attack.poison_scale, cfg_.attack.noise_sigma);
  }
  task.result.transmitted_entries += sg->size();
  ++task.result.worker_rounds;

  LocalUpdate u{w.id, r, std::move(*sg), sim_.now(), {}};
  u.signature = authority_.sign(w.id, u.signing_bytes());

  std::string target = task.aggregator;
  if (ledger_) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& id : task.committee.active()) {
      const double d = dist2(w.position, miners_.at(id).position);
      if (d < best) {
        best = d;
        target = id;
      }
    }
  }
  send(&task, w.id, target, "update", u.encode());
}

// ------------------------------------------------------------- aggregator

void Federation::on_aggregator(Task& task, const SimEvent& e) {
  if (e.msg_type != "update") throw ProtocolError("aggregator got unexpected " + e.msg_type);
  auto u = LocalUpdate::decode(e.message);
  if (!authority_.verify(u.worker_id, u.signing_bytes(), u.signature) || u.round != task.round) {
    throw ProtocolError("aggregator received a forged or stale update");
  }
  if (task.received.empty()) task.log.global_before = task.global;
  task.received.emplace(u.worker_id, std::move(u));
  if (task.received.size() < task.workers.size()) return;
  const auto updates = received_updates(task);
  task.global = sgd_step(
      task.global, mean_update(updates, static_cast<std::uint32_t>(task.global.dim())),
      cfg_.training.learning_rate);
  for (const auto& u2 : updates) {
    if (std::binary_search(task.result.poisoned_workers.begin(),
                           task.result.poisoned_workers.end(), u2.worker_id)) {
      ++task.result.poisoned_committed;
    }
  }
  ++task.result.committed_rounds;
  task.log.committed = true;
  close_round(task, task.aggregator, task.round, updates);
}

// ----------------------------------------------------------------- miners

std::vector<LocalUpdate> Federation::received_updates(const Task& task) const {
  std::vector<LocalUpdate> out;
  for (const auto& [id, u] : task.received) out.push_back(u);
  return out;
}

void Federation::uplink_arrived(Task& task, const LocalUpdate& u) {
  if (task.received.empty()) task.log.global_before = task.global;
  task.received.emplace(u.worker_id, u);
  if (task.received.size() == task.workers.size()) {
    task.t1 = sim_.now();
    sim_.set_timer(clock_id(task), sim_.now(), "verdict");
  }
}

void Federation::on_miner(Miner& m, const SimEvent& e) {
  Task& task = *task_of_miner_.at(m.id);
  if (!task.committee.is_active(m.id)) return;  // slashed miners are ejected
  if (e.msg_type == "update") {
    auto u = LocalUpdate::decode(e.message);
    for (const auto& peer : task.committee.active()) {
      if (peer != m.id) send(&task, m.id, peer, "forward", e.message);
    }
    m.inbox.emplace(u.worker_id, u);
    uplink_arrived(task, u);
  } else if (e.msg_type == "forward") {
    auto u = LocalUpdate::decode(e.message);
    m.inbox.emplace(u.worker_id, std::move(u));
  } else if (e.msg_type == "verdict") {
    auto v = VerifierResponse::decode(e.message);
    if (authority_.verify(v.verifier_id, v.signing_bytes(), v.signature)) {
      m.verdicts[v.verifier_id] = std::move(v);
    }
  } else if (e.msg_type == "response") {
    m.responses.push_back(VerifierResponse::decode(e.message));
  } else if (e.msg_type == "pending") {
    auto block = Block::decode(e.message);
    const bool fresh = std::none_of(task.proposals.begin(), task.proposals.end(),
                                    [&](const Block& b) { return b == block; });
    if (fresh) task.proposals.push_back(block);
    const auto d = directive(m.id, task.round);
    if (d == Directive::kWithhold) return;
    const auto* p = std::get_if<TrainingPayload>(&block.payload);
    const bool honest_ok = valid_pending(task, block) && p != nullptr &&
                           update_ids(p->updates) == honest_verdict(task);
    BlockVote vote{m.id, task.round, task.attempt, block.header.hash(),
                   d == Directive::kInvertVerdicts ? !honest_ok : honest_ok, {}};
    vote.signature = authority_.sign(m.id, vote.signing_bytes());
    m.votes.push_back(vote);
    const auto bytes = vote.encode();
    for (const auto& peer : task.committee.active()) {
      if (peer != m.id) send(&task, m.id, peer, "vote", bytes);
    }
  } else if (e.msg_type == "vote") {
    auto v = BlockVote::decode(e.message);
    if (authority_.verify(v.voter_id, v.signing_bytes(), v.signature)) m.votes.push_back(v);
  } else {
    throw ProtocolError("miner got unexpected " + e.msg_type);
  }
}

const std::vector<std::string>& Federation::honest_verdict(Task& task) {
  if (task.honest) return *task.honest;
  if (!task.baseline) task.baseline = task.model->accuracy(task.global, task.policy.test_set);
  std::vector<std::string> out;
  for (const auto& [id, u] : task.received) {
    auto it = task.evaluations.find(id);
    if (it == task.evaluations.end()) {
      Evaluation ev;
      try {
        ev = evaluate_update(u, task.global, *task.model, task.policy, cfg_.training.learning_rate,
                             *task.baseline, authority_, task.round);
      } catch (const ProtocolError&) {
        ev = {false, 0.0, *task.baseline};
      }
      it = task.evaluations.emplace(id, ev).first;
    }
    if (it->second.qualified) out.push_back(id);
  }
  task.honest = std::move(out);
  return *task.honest;
}

std::vector<std::string> Federation::complement(const Task& task,
                                                const std::vector<std::string>& ids) const {
  std::vector<std::string> out;
  for (const auto& [id, u] : task.received) {
    if (!std::binary_search(ids.begin(), ids.end(), id)) out.push_back(id);
  }
  return out;
}

VerifierResponse Federation::make_response(Task& task, const std::string& miner,
                                           std::vector<std::string> qualified,
                                           bool with_comparison) {
  VerifierResponse r;
  r.verifier_id = miner;
  r.round = task.round;
  r.attempt = task.attempt;
  r.qualified = std::move(qualified);
  if (with_comparison) {
    for (const auto& [peer, v] : miners_.at(miner).verdicts) {
      r.comparison.push_back({peer, v.qualified == r.qualified});
    }
  }
  r.timestamp_ms = sim_.now();
  r.signature = authority_.sign(miner, r.signing_bytes());
  return r;
}

bool Federation::valid_pending(Task& task, const Block& block) {
  const auto key = block.header.hash();
  if (auto it = task.validity.find(key); it != task.validity.end()) return it->second;
  auto check = [&]() {
    const auto& h = block.header;
    const auto& chain = *task.chain;
    if (h.leader_id != task.committee.leader()) return false;
    if (!authority_.verify(h.leader_id, h.encode(), block.signature)) return false;
    if (h.chain_id != chain.id() || h.height != chain.length() ||
        h.prev_hash != chain.head().header.hash()) {
      return false;
    }
    if (merkle_root(payload_leaves(block.payload)) != h.merkle_root) return false;
    const auto* p = std::get_if<TrainingPayload>(&block.payload);
    if (p == nullptr || p->round != task.round) return false;
    const auto verifiers = task.committee.verifiers();
    std::vector<std::string> all;
    for (const auto& [id, u] : task.received) all.push_back(id);
    const auto tally =
        cross_verify(p->responses, all, verifiers, authority_, task.round, task.attempt);
    if (tally.ignored != 0 || !tally.equivocators.empty() || tally.accepted != p->responses) {
      return false;
    }
    if (update_ids(p->updates) != majority_set(tally, verifiers.size())) return false;
    for (const auto& u : p->updates) {
      if (!(task.received.at(u.worker_id) == u)) return false;
    }
    if (p->slashes != task.snapshot) return false;
    return p->model_digest ==
           model_digest(compute_global_update(*p, task.global, cfg_.training.learning_rate));
  };
  const bool ok = check();
  task.validity.emplace(key, ok);
  return ok;
}

Block Federation::propose(Task& task, const std::string& leader, const CrossVerification& tally,
                          bool invert) {
  const auto updates = received_updates(task);
  TrainingPayload p = assemble_pending(leader, task.committee, tally, updates, task.round,
                                       task.global, cfg_.training.learning_rate, task.snapshot);
  if (invert) {
    const auto flipped = complement(task, update_ids(p.updates));
    p.updates.clear();
    for (const auto& id : flipped) p.updates.push_back(task.received.at(id));
    p.model_digest =
        model_digest(compute_global_update(p, task.global, cfg_.training.learning_rate));
  }
  return make_block(*task.chain, std::move(p), leader, authority_, sim_.now());
}

// ------------------------------------------------------------ consensus

void Federation::on_clock(Task& task, const SimEvent& e) {
  if (e.msg_type == "verdict") {
    stage_verdicts(task);
  } else if (e.msg_type == "response") {
    stage_responses(task);
  } else if (e.msg_type == "pending") {
    stage_pending(task);
  } else if (e.msg_type == "decide") {
    stage_decide(task);
  } else if (e.msg_type == "close") {
    std::vector<LocalUpdate> aggregated;
    std::uint64_t height = task.chain->length() - 1;
    if (task.committed) {
      aggregated = std::get<TrainingPayload>(task.committed->payload).updates;
      height = task.committed->header.height;
    }
    std::string sender = task.committee.leader();
    if (sender.empty()) sender = task.committee.active().front();
    close_round(task, sender, height, aggregated);
  }
}

void Federation::stage_verdicts(Task& task) {
  const auto verdict = honest_verdict(task);
  for (const auto& m : task.committee.active()) {
    const auto d = directive(m, task.round);
    if (d == Directive::kWithhold) continue;
    auto r = make_response(task, m,
                           d == Directive::kInvertVerdicts ? complement(task, verdict) : verdict,
                           false);
    const auto bytes = r.encode();
    for (const auto& peer : task.committee.active()) {
      if (peer != m) send(&task, m, peer, "verdict", bytes);
    }
  }
  sim_.set_timer(clock_id(task), attempt_start(task) + attempt_length() / 4, "response");
}

void Federation::stage_responses(Task& task) {
  task.snapshot = task.queued;
  task.log.leaders.push_back(task.committee.leader());
  const auto verdict = honest_verdict(task);
  const auto leader = task.committee.leader();
  for (const auto& v : task.committee.verifiers()) {
    const auto d = directive(v, task.round);
    if (d == Directive::kWithhold) continue;
    const bool invert = d == Directive::kInvertVerdicts;
    auto r = make_response(task, v, invert ? complement(task, verdict) : verdict, true);
    send(&task, v, leader, "response", r.encode());
    if (d == Directive::kEquivocate) {
      auto twin = make_response(task, v, complement(task, verdict), true);
      send(&task, v, leader, "response", twin.encode());
    }
  }
  sim_.set_timer(clock_id(task), attempt_start(task) + attempt_length() / 2, "pending");
}

void Federation::stage_pending(Task& task) {
  const auto leader = task.committee.leader();
  const auto d = directive(leader, task.round);
  if (d != Directive::kWithhold) {
    std::vector<std::string> all;
    for (const auto& [id, u] : task.received) all.push_back(id);
    const auto verifiers = task.committee.verifiers();
    auto& inbox = miners_.at(leader).responses;
    const auto tally = cross_verify(inbox, all, verifiers, authority_, task.round, task.attempt);
    inbox.clear();
    if (d == Directive::kHonest) {
      for (const auto& id : tally.equivocators) {
        task.pending_equivocations.push_back({id, SlashReason::kEquivocation, task.round});
      }
    }
    const Block primary = propose(task, leader, tally, d == Directive::kInvertVerdicts);
    std::optional<Block> twin;
    if (d == Directive::kEquivocate) twin = propose(task, leader, tally, true);
    const Bytes primary_bytes = primary.encode();
    const Bytes twin_bytes = twin ? twin->encode() : Bytes{};
    for (std::size_t i = 0; i < verifiers.size(); ++i) {
      send(&task, leader, verifiers[i], "pending", twin && i % 2 == 1 ? twin_bytes : primary_bytes);
    }
  }
  sim_.set_timer(clock_id(task), attempt_start(task) + attempt_length(), "decide");
}

void Federation::slash(Task& task, const std::string& miner, SlashReason reason) {
  if (auto rec = task.committee.slash_member(miner, reason, task.round)) {
    task.queued.push_back(*rec);
    task.log.slashed.push_back(miner);
    task.result.slashed_miners.push_back(miner);
    task.tracker.forget(miner);
  }
}

void Federation::stage_decide(Task& task) {
  const auto leader = task.committee.leader();
  const auto verifiers = task.committee.verifiers();
  // Every vote is broadcast to the whole committee, so any honest verifier's
  // inbox is the committee's view.
  const Miner* observer = nullptr;
  for (const auto& v : verifiers) {
    if (directive(v, task.round) == Directive::kHonest) {
      observer = &miners_.at(v);
      break;
    }
  }
  if (observer == nullptr) observer = &miners_.at(verifiers.front());

  bool committed = false;
  if (task.proposals.size() > 1) {
    slash(task, leader, SlashReason::kEquivocation);
  } else if (task.proposals.size() == 1) {
    const Block& block = task.proposals.front();
    const auto hash = block.header.hash();
    std::vector<std::string> approvers;
    for (const auto& v : observer->votes) {
      if (v.approve && v.block_hash == hash && v.round == task.round &&
          v.attempt == task.attempt) {
        approvers.push_back(v.voter_id);
      }
    }
    std::sort(approvers.begin(), approvers.end());
    approvers.erase(std::unique(approvers.begin(), approvers.end()), approvers.end());
    try {
      committed = assemble_and_commit(task.committee, block, approvers, *task.chain, authority_)
                      .committed;
    } catch (const ProtocolError&) {
      committed = false;
    }
    if (committed) {
      task.committed = block;
    } else if (!valid_pending(task, block)) {
      slash(task, leader, SlashReason::kInvalidProposal);
    }
  }
  for (const auto& rec : task.pending_equivocations) slash(task, rec.miner_id, rec.reason);
  task.pending_equivocations.clear();
  task.last_leader = leader;

  for (auto& [id, m] : miners_) {
    if (m.task == task.index) {
      m.votes.clear();
      m.responses.clear();
    }
  }
  task.proposals.clear();

  const auto close_at = task.t1 + sim_.cost().consensus_delay();
  if (committed) {
    const auto& p = std::get<TrainingPayload>(task.committed->payload);
    std::erase_if(task.queued, [&](const SlashRecord& s) {
      return std::find(p.slashes.begin(), p.slashes.end(), s) != p.slashes.end();
    });
    task.global = compute_global_update(p, task.global, cfg_.training.learning_rate);
    const auto ids = update_ids(p.updates);
    for (const auto& id : ids) {
      if (std::binary_search(task.result.poisoned_workers.begin(),
                             task.result.poisoned_workers.end(), id)) {
        ++task.result.poisoned_committed;
      }
    }
    for (const auto& v : task.tracker.observe(p.responses, ids)) {
      slash(task, v, SlashReason::kFalseVerification);
    }
    ++task.result.committed_rounds;
    task.log.committed = true;
    sim_.set_timer(clock_id(task), close_at, "close");
  } else if (task.attempt == 0) {
    if (task.committee.verifiers().empty()) {
      throw FederationHalt("task " + std::to_string(task.index) +
                           " committee has fewer than two active delegates");
    }
    task.attempt = 1;
    task.committee = rotate_roles(task.committee, task.rotation_seed, task.round, 1);
    sim_.set_timer(clock_id(task), attempt_start(task) + attempt_length() / 4, "response");
  } else {
    sim_.set_timer(clock_id(task), std::max(close_at, sim_.now()), "close");
  }
}

// ------------------------------------------------------------ round close

void Federation::close_round(Task& task, const std::string& sender, std::uint64_t height,
                             const std::vector<LocalUpdate>& aggregated) {
  const auto dim = static_cast<std::uint32_t>(task.global.dim());
  GlobalUpdate g;
  g.round = task.round;
  g.height = height;
  g.qualified = static_cast<std::uint32_t>(aggregated.size());
  g.average = aggregated.empty() ? SparseGradient(dim, task.round, {})
                                 : sparse_nonzero(mean_update(aggregated, dim), task.round);
  const auto size = g.encode().size();
  std::int64_t slowest = 0;
  for (std::size_t i = 0; i < task.workers.size(); ++i) {
    slowest = std::max(slowest, sim_.latency("global", size, sim_.next_sequence() + i));
  }
  g.next_round_start_ms = sim_.now() + slowest;
  const auto bytes = g.encode();
  for (const auto& w : task.workers) send(&task, sender, w.id, "global", bytes);

  if (ledger_ && task.committed) {
    const auto head = task.chain->length() - 1;
    const auto from = task.anchored_any ? task.anchored_to + 1 : 0;
    if (head + 1 - from >= cfg_.federation.anchor_period) {
      ByteWriter w;
      w.str(task.chain->id());
      for (auto h = from; h <= head; ++h) w.blob(task.chain->blocks()[h].header.encode());
      send(&task, sender, kLedgerNode, "anchor", std::move(w).take());
      task.anchored_to = head;
      task.anchored_any = true;
    }
  }

  task.cumulative_bytes += task.round_bytes;
  MetricsRow row;
  row.task = task.index;
  row.round = task.round;
  row.global_test_accuracy = task.model->accuracy(task.global, task.data.test);
  row.bytes_this_round = task.round_bytes;
  row.cumulative_bytes = task.cumulative_bytes;
  row.compression_ratio =
      compression_ratio(task.result.transmitted_entries, dim, task.result.worker_rounds);
  row.exposure_ratio = exposure_ratio(task.result.transmitted_entries, dim, task.result.worker_rounds);
  row.qualified_count = g.qualified;
  row.slashed_count = ledger_ ? static_cast<std::uint32_t>(task.committee.slashed_count()) : 0;
  row.simulated_time_ms = g.next_round_start_ms;
  metrics_.push_back(row);
  task.result.simulated_time_ms = row.simulated_time_ms;
  task.result.final_accuracy = row.global_test_accuracy;

  task.log.task = task.index;
  task.log.round = task.round;
  task.log.updates = received_updates(task);
  task.log.qualified = update_ids(aggregated);
  if (options_.keep_round_logs) logs_.push_back(std::move(task.log));
  task.log = RoundLog{};

  task.round_bytes = 0;
  task.received.clear();
  task.baseline.reset();
  task.evaluations.clear();
  task.honest.reset();
  task.validity.clear();
  task.committed.reset();
  task.attempt = 0;
  for (auto& [id, m] : miners_) {
    if (m.task == task.index) {
      m.inbox.clear();
      m.verdicts.clear();
    }
  }

  ++task.round;
  if (task.round >= cfg_.training.epochs) {
    task.finished = true;
    task.result.final_model = model_digest(task.global);
    task.result.final_params = task.global;
    if (ledger_) settle(task);
    return;
  }
  if (ledger_) {
    if (task.committee.active().size() < 2) {
      throw FederationHalt("task " + std::to_string(task.index) +
                           " committee has fewer than two active delegates");
    }
    task.committee = rotate_roles(task.committee, task.rotation_seed, task.round, 0);
  }
}

// ------------------------------------------------------------- settlement

void Federation::settle(Task& task) {
  const auto head = task.chain->length() - 1;
  const auto from = task.anchored_any ? task.anchored_to + 1 : 0;
  std::int64_t offer_at = sim_.now();
  if (head + 1 > from) {
    ByteWriter w;
    w.str(task.chain->id());
    for (auto h = from; h <= head; ++h) w.blob(task.chain->blocks()[h].header.encode());
    std::string sender = task.last_leader.empty() ? task.committee.active().front() : task.last_leader;
    offer_at = send(&task, sender, kLedgerNode, "anchor", std::move(w).take());
    task.anchored_to = head;
    task.anchored_any = true;
  }
  sim_.set_timer(task.publisher, offer_at, "offer");
}

void Federation::on_ledger(const SimEvent& e) {
  if (e.msg_type == "anchor") {
    ByteReader r(e.message);
    const auto chain_id = r.str();
    for (auto& task : tasks_) {
      if (task->chain->id() == chain_id) {
        anchor_to_main(*task->chain, *main_, 1, authority_, kLedgerNode, sim_.now());
        return;
      }
    }
    throw ProtocolError("anchor for unknown chain " + chain_id);
  }
  if (e.msg_type == "trade") {
    const auto trade = decode_trade(e.message);
    std::vector<const Chain*> training;
    for (auto& task : tasks_) training.push_back(&*task->chain);
    record_trade(trade, *trading_, *main_, training, authority_, kLedgerNode, sim_.now());
    for (auto& task : tasks_) {
      if (task->publisher == trade.seller_id) task->settled = true;
    }
    return;
  }
  throw ProtocolError("ledger got unexpected " + e.msg_type);
}

void Federation::on_publisher(Task& task, const SimEvent& e) {
  if (e.timer) {
    ByteWriter w;
    w.str(task.publisher);
    w.raw(encode_parameters(task.global));
    send(&task, task.publisher, task.buyer, "offer", std::move(w).take());
    return;
  }
  if (e.msg_type != "trade") throw ProtocolError("publisher got unexpected " + e.msg_type);
  auto trade = decode_trade(e.message);
  if (trade.model_digest != model_digest(task.global) ||
      !authority_.verify(trade.buyer_id, trade.signing_bytes(), trade.buyer_signature)) {
    throw ProtocolError("buyer sent an invalid trade");
  }
  trade.seller_signature = authority_.sign(task.publisher, trade.signing_bytes());
  send(&task, task.publisher, kLedgerNode, "trade", encode_trade(trade));
}

void Federation::on_buyer(const SimEvent& e) {
  if (e.msg_type != "offer") throw ProtocolError("buyer got unexpected " + e.msg_type);
  ByteReader r(e.message);
  const auto seller = r.str();
  const auto params = r.raw(r.remaining());
  ByteReader pr(params);
  const auto dim = pr.u32();
  std::vector<double> values(dim);
  for (auto& v : values) v = pr.f64();
  pr.expect_done();
  TradeRecord trade;
  trade.seller_id = seller;
  trade.buyer_id = e.dst;
  trade.model_digest = model_digest(ModelParameters(std::move(values)));
  trade.price = cfg_.federation.model_price;
  trade.timestamp_ms = sim_.now();
  trade.buyer_signature = authority_.sign(e.dst, trade.signing_bytes());
  send(nullptr, e.dst, seller, "trade", encode_trade(trade));
}

// ------------------------------------------------------------------- run

bool Federation::done() const {
  for (const auto& t : tasks_) {
    if (!t->finished || (ledger_ && !t->settled)) return false;
  }
  return true;
}

RunResult Federation::run() {
  setup_tasks();
  if (ledger_) setup_ledger();
  register_nodes();
  for (auto& task : tasks_) {
    for (auto& w : task->workers) sim_.set_timer(w.id, 0, "start");
  }
  sim_.run_until([this] { return done(); });
  if (!done()) throw FederationHalt("simulation drained before every task finished");
  return collect();
}

RunResult Federation::collect() {
  RunResult out;
  out.config = cfg_;
  out.metrics = std::move(metrics_);
  out.rounds = std::move(logs_);
  out.trace = sim_.trace();
  out.trace_digest = sim_.trace_digest();
  out.settlement_bytes = settlement_bytes_;
  std::uint64_t entries = 0, worker_rounds = 0;
  std::uint32_t dim = 0;
  double acc = 0.0;
  for (auto& task : tasks_) {
    out.tasks.push_back(task->result);
    entries += task->result.transmitted_entries;
    worker_rounds += task->result.worker_rounds;
    dim = static_cast<std::uint32_t>(task->global.dim());
    acc += task->result.final_accuracy;
    out.simulated_time_ms = std::max(out.simulated_time_ms, task->result.simulated_time_ms);
    if (ledger_) out.chains.push_back(*task->chain);
  }
  out.final_accuracy = acc / static_cast<double>(tasks_.size());
  for (const auto& r : out.trace) out.total_bytes += r.size_bytes;
  out.compression_ratio = compression_ratio(entries, dim, worker_rounds);
  out.exposure_ratio = exposure_ratio(entries, dim, worker_rounds);
  if (ledger_) {
    out.chains.push_back(*main_);
    out.chains.push_back(*trading_);
    out.authority_json = authority_.to_json();
  }
  return out;
}

}  // namespace

std::string task_prefix(std::uint32_t task) { return "t" + std::to_string(task) + "-"; }

std::string training_chain_id(std::uint32_t task) { return "training-" + std::to_string(task); }

Dataset load_source_dataset(const ExperimentConfig& config, std::uint32_t task) {
  const auto& d = config.training.dataset;
  Dataset ds;
  if (d.source == "blobs") {
    ds = make_blobs(d.blobs, derive_seed(config.seed, {kDataTag, task}));
  } else if (d.source == "csv") {
    ds = read_dataset_csv(d.path);
  } else {
    ds = load_mnist_idx(d.images, d.labels, d.limit);
  }
  if (d.limit > 0 && ds.size() > d.limit) {
    std::vector<std::size_t> idx(d.limit);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    ds = ds.subset(idx);
  }
  return ds;
}

TaskData build_task_data(const ExperimentConfig& config, std::uint32_t task) {
  TaskData td;
  const auto ds = load_source_dataset(config, task);
  auto split = split_train_test(ds, config.training.train_fraction,
                                derive_seed(config.seed, {kSplitTag, task}));
  td.train = std::move(split.train);
  td.test = std::move(split.test);
  const auto perm = seeded_permutation(td.test.size(),
                                       derive_seed(config.seed, {kVerificationTag, task}));
  const auto v = std::min(config.training.verification_samples, td.test.size());
  td.verification = td.test.subset(std::span<const std::size_t>(perm).first(v));
  const auto n = config.federation.workers_per_task;
  td.shards = shard_iid(td.train, n, derive_seed(config.seed, {kShardTag, task}));
  for (std::uint32_t w = 0; w < n; ++w) {
    td.batch_seeds.push_back(derive_seed(config.seed, {kBatchTag, task, w}));
    td.worker_ids.push_back(task_prefix(task) + "worker-" + two_digits(w));
  }
  td.spec = {config.training.model, ds.dim(), config.training.hidden, ds.num_classes(),
             config.training.output_init_std};
  td.initial = ReferenceModel(td.spec).init(derive_seed(config.seed, {kInitTag, task}));
  return td;
}

RunResult run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  Federation federation(config, options);
  return federation.run();
}

}  // namespace bfel
