#include "bfel/consensus.h"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "bfel/compression.h"
#include "bfel/errors.h"
#include "bfel/rng.h"

namespace bfel {

std::string to_string(MinerStatus status) {
  switch (status) {
    case MinerStatus::kCandidate: return "candidate";
    case MinerStatus::kDelegate: return "delegate";
    case MinerStatus::kLeader: return "leader";
    case MinerStatus::kVerifier: return "verifier";
    case MinerStatus::kSlashed: return "slashed";
  }
  return "unknown";
}

std::vector<MinerState> elect_delegates(std::vector<MinerState> candidates,
                                        const WorkerVotes& worker_votes, std::size_t n,
                                        std::uint64_t min_deposit) {
  if (n == 0) throw ConfigError("committee size must be positive");
  std::map<std::string, std::size_t> slot;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (!slot.emplace(candidates[i].id(), i).second) {
      throw ConfigError("duplicate candidate " + candidates[i].id());
    }
  }
  for (const auto& [worker, choices] : worker_votes) {
    std::set<std::string> seen;
    for (const auto& c : choices) {
      auto it = slot.find(c);
      // One vote per (worker, candidate); votes for unknown ids are dropped.
      if (it != slot.end() && seen.insert(c).second) ++candidates[it->second].votes;
    }
  }
  std::vector<MinerState> eligible;
  for (auto& c : candidates) {
    if (c.status != MinerStatus::kSlashed && c.deposit >= min_deposit) eligible.push_back(c);
  }
  if (eligible.size() < n) {
    throw ConfigError("insufficient eligible candidates: " + std::to_string(eligible.size()) +
                      " < " + std::to_string(n));
  }
  std::sort(eligible.begin(), eligible.end(), [](const MinerState& a, const MinerState& b) {
    return a.votes > b.votes || (a.votes == b.votes && a.id() < b.id());
  });
  eligible.resize(n);
  for (auto& d : eligible) d.status = MinerStatus::kDelegate;
  return eligible;
}

MinerState slash(MinerState miner) {
  miner.deposit = 0;
  miner.status = MinerStatus::kSlashed;
  return miner;
}

Committee::Committee(std::vector<MinerState> delegates) : members_(std::move(delegates)) {
  std::sort(members_.begin(), members_.end(),
            [](const MinerState& a, const MinerState& b) { return a.id() < b.id(); });
  for (std::size_t i = 1; i < members_.size(); ++i) {
    if (members_[i].id() == members_[i - 1].id()) throw ConfigError("duplicate delegate");
  }
}

std::vector<std::string> Committee::active() const {
  std::vector<std::string> out;
  for (const auto& m : members_) {
    if (m.status != MinerStatus::kSlashed) out.push_back(m.id());
  }
  return out;
}

std::vector<std::string> Committee::verifiers() const {
  std::vector<std::string> out;
  for (const auto& m : members_) {
    if (m.status != MinerStatus::kSlashed && m.id() != leader_) out.push_back(m.id());
  }
  return out;
}

bool Committee::contains(const std::string& id) const {
  return std::any_of(members_.begin(), members_.end(),
                     [&](const MinerState& m) { return m.id() == id; });
}

bool Committee::is_active(const std::string& id) const {
  return contains(id) && member(id).status != MinerStatus::kSlashed;
}

const MinerState& Committee::member(const std::string& id) const {
  for (const auto& m : members_) {
    if (m.id() == id) return m;
  }
  throw ProtocolError("not a committee member: " + id);
}

std::size_t Committee::slashed_count() const {
  return static_cast<std::size_t>(std::count_if(members_.begin(), members_.end(), [](const auto& m) {
    return m.status == MinerStatus::kSlashed;
  }));
}

std::optional<SlashRecord> Committee::slash_member(const std::string& id, SlashReason reason,
                                                   std::uint32_t round) {
  for (auto& m : members_) {
    if (m.id() != id) continue;
    if (m.status == MinerStatus::kSlashed) return std::nullopt;
    m = slash(std::move(m));
    if (leader_ == id) leader_.clear();
    return SlashRecord{id, reason, round};
  }
  throw ProtocolError("cannot slash non-member " + id);
}

Committee rotate_roles(Committee committee, std::uint64_t federation_seed, std::uint32_t round,
                       std::uint32_t attempt) {
  auto active = committee.active();
  if (active.empty()) throw FederationHalt("committee has no active delegates");
  const std::size_t n = active.size();
  const auto order = seeded_permutation(n, derive_seed(federation_seed, {round / n, n}));
  committee.leader_ = active[order[(round % n + attempt) % n]];
  for (auto& m : committee.members_) {
    if (m.status == MinerStatus::kSlashed) continue;
    m.status = m.id() == committee.leader_ ? MinerStatus::kLeader : MinerStatus::kVerifier;
  }
  return committee;
}

Evaluation evaluate_update(const LocalUpdate& update, const ModelParameters& global,
                           const ReferenceModel& model, const QualityPolicy& policy, double eta,
                           double baseline, const Authority& authority,
                           std::uint32_t current_round) {
  if (!authority.verify(update.worker_id, update.signing_bytes(), update.signature)) {
    throw ProtocolError("update from " + update.worker_id + " has an invalid signature");
  }
  if (update.round != current_round || update.gradient.round() != current_round) {
    throw ProtocolError("update from " + update.worker_id + " is for round " +
                        std::to_string(update.round));
  }
  if (update.gradient.dim() != global.dim()) throw ConfigError("update dimension mismatch");
  auto candidate = sgd_step(global, update.gradient.densify(), eta);
  const double acc = model.accuracy(candidate, policy.test_set);
  return {acc >= baseline - policy.theta, acc, baseline};
}

Evaluation evaluate_update(const LocalUpdate& update, const ModelParameters& global,
                           const ReferenceModel& model, const QualityPolicy& policy, double eta,
                           const Authority& authority, std::uint32_t current_round) {
  return evaluate_update(update, global, model, policy, eta,
                         model.accuracy(global, policy.test_set), authority, current_round);
}

CrossVerification cross_verify(std::span<const VerifierResponse> responses,
                               std::span<const std::string> update_ids,
                               std::span<const std::string> verifier_ids,
                               const Authority& authority, std::uint32_t round,
                               std::uint32_t attempt) {
  CrossVerification out;
  const std::set<std::string> verifiers(verifier_ids.begin(), verifier_ids.end());
  std::map<std::string, VerifierResponse> by_verifier;
  for (const auto& r : responses) {
    const bool valid = verifiers.count(r.verifier_id) != 0 && r.round == round &&
                       r.attempt == attempt &&
                       authority.verify(r.verifier_id, r.signing_bytes(), r.signature);
    if (!valid) {
      ++out.ignored;
      continue;
    }
    auto [it, fresh] = by_verifier.emplace(r.verifier_id, r);
    if (!fresh) {
      ++out.ignored;
      if (!(it->second == r)) out.equivocators.insert(r.verifier_id);
    }
  }
  for (const auto& e : out.equivocators) by_verifier.erase(e);

  for (const auto& id : update_ids) out.approvals[id] = 0;
  std::map<std::string, std::set<std::string>> sets;
  for (auto& [id, r] : by_verifier) {
    sets[id] = std::set<std::string>(r.qualified.begin(), r.qualified.end());
    for (const auto& q : r.qualified) {
      auto it = out.approvals.find(q);
      if (it != out.approvals.end()) ++it->second;
    }
    out.accepted.push_back(r);
  }
  for (const auto& [a, sa] : sets) {
    std::size_t score = 0;
    for (const auto& [b, sb] : sets) {
      if (a == b) continue;
      for (const auto& u : update_ids) score += (sa.count(u) != 0) != (sb.count(u) != 0);
    }
    out.disagreement[a] = score;
  }
  return out;
}

bool commit_threshold_met(std::size_t approvals, std::size_t verifier_count) {
  return 3 * approvals > 2 * verifier_count;
}

bool majority_approved(std::size_t approvals, std::size_t verifier_count) {
  return 2 * approvals > verifier_count;
}

std::vector<std::string> majority_set(const CrossVerification& tally,
                                      std::size_t verifier_count) {
  std::vector<std::string> out;
  for (const auto& [id, n] : tally.approvals) {
    if (majority_approved(n, verifier_count)) out.push_back(id);
  }
  return out;
}

TrainingPayload assemble_pending(const std::string& proposer, const Committee& committee,
                                 const CrossVerification& tally,
                                 std::span<const LocalUpdate> updates, std::uint32_t round,
                                 const ModelParameters& global, double eta,
                                 std::vector<SlashRecord> slashes) {
  if (proposer != committee.leader()) {
    throw ProtocolError("pending block assembled by non-leader " + proposer);
  }
  const auto approved = majority_set(tally, committee.verifiers().size());
  TrainingPayload p;
  p.round = round;
  for (const auto& u : updates) {
    if (std::binary_search(approved.begin(), approved.end(), u.worker_id)) p.updates.push_back(u);
  }
  std::sort(p.updates.begin(), p.updates.end(),
            [](const LocalUpdate& a, const LocalUpdate& b) { return a.worker_id < b.worker_id; });
  p.responses = tally.accepted;
  p.slashes = std::move(slashes);
  p.model_digest = model_digest(compute_global_update(p, global, eta));
  return p;
}

CommitOutcome assemble_and_commit(const Committee& committee, const Block& pending,
                                  std::span<const std::string> approving_verifiers,
                                  Chain& chain, const Authority& authority) {
  if (pending.header.leader_id != committee.leader()) {
    throw ProtocolError("pending block proposed by non-leader " + pending.header.leader_id);
  }
  const auto verifiers = committee.verifiers();
  std::set<std::string> approvals;
  for (const auto& v : approving_verifiers) {
    if (std::binary_search(verifiers.begin(), verifiers.end(), v)) approvals.insert(v);
  }
  CommitOutcome out{false, approvals.size(), verifiers.size()};
  if (commit_threshold_met(out.approvals, out.verifier_count)) {
    append_block(chain, pending, committee.leader(), authority);
    out.committed = true;
  }
  return out;
}

GradientVector mean_update(std::span<const LocalUpdate> updates, std::uint32_t dim) {
  if (updates.empty()) throw InputError("mean of no updates");
  std::vector<SparseGradient> grads;
  grads.reserve(updates.size());
  for (const auto& u : updates) grads.push_back(u.gradient);
  auto sum = aggregate_sparse(grads, dim);
  const double count = static_cast<double>(grads.size());
  for (auto& v : sum.mutable_values()) v /= count;
  return sum;
}

ModelParameters compute_global_update(const TrainingPayload& block, const ModelParameters& global,
                                      double eta) {
  if (block.updates.empty()) return global;
  return sgd_step(global, mean_update(block.updates, static_cast<std::uint32_t>(global.dim())),
                  eta);
}

std::vector<std::string> MisbehaviorTracker::observe(std::span<const VerifierResponse> responses,
                                                     std::span<const std::string> committed_set) {
  std::vector<std::string> reached;
  const std::vector<std::string> committed(committed_set.begin(), committed_set.end());
  for (const auto& r : responses) {
    if (r.qualified != committed) {
      if (++streaks_[r.verifier_id] >= limit_) reached.push_back(r.verifier_id);
    } else {
      streaks_[r.verifier_id] = 0;
    }
  }
  return reached;
}

std::size_t MisbehaviorTracker::streak(const std::string& verifier) const {
  auto it = streaks_.find(verifier);
  return it == streaks_.end() ? 0 : it->second;
}

std::string to_string(Directive d) {
  switch (d) {
    case Directive::kHonest: return "honest";
    case Directive::kInvertVerdicts: return "invert-verdicts";
    case Directive::kWithhold: return "withhold";
    case Directive::kEquivocate: return "equivocate";
  }
  return "unknown";
}

Directive directive_from_string(const std::string& s) {
  if (s == "honest") return Directive::kHonest;
  if (s == "invert-verdicts") return Directive::kInvertVerdicts;
  if (s == "withhold") return Directive::kWithhold;
  if (s == "equivocate") return Directive::kEquivocate;
  throw ConfigError("unknown fault directive: " + s);
}

void FaultScript::add(std::uint32_t first_round, std::uint32_t last_round, std::string miner,
                      Directive directive) {
  if (last_round < first_round) throw ConfigError("fault rule round range is inverted");
  rules_.push_back({first_round, last_round, std::move(miner), directive});
}

Directive FaultScript::directive(const std::string& miner, std::uint32_t round) const {
  Directive d = Directive::kHonest;
  for (const auto& r : rules_) {
    if (r.miner == miner && round >= r.first && round <= r.last) d = r.directive;
  }
  return d;
}

FaultScript FaultScript::parse(const std::string& text) {
  FaultScript script;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string rounds, miner, directive, extra;
    if (!(ls >> rounds)) continue;
    if (!(ls >> miner >> directive) || (ls >> extra)) {
      throw ConfigError("fault script line " + std::to_string(lineno) +
                        ": expected '<rounds> <miner> <directive>'");
    }
    std::uint32_t first = 0, last = UINT32_MAX;
    try {
      if (rounds != "*") {
        auto dash = rounds.find('-');
        if (dash == std::string::npos) {
          first = last = static_cast<std::uint32_t>(std::stoul(rounds));
        } else {
          first = static_cast<std::uint32_t>(std::stoul(rounds.substr(0, dash)));
          last = static_cast<std::uint32_t>(std::stoul(rounds.substr(dash + 1)));
        }
      }
    } catch (const std::logic_error&) {
      throw ConfigError("fault script line " + std::to_string(lineno) + ": bad round range");
    }
    script.add(first, last, miner, directive_from_string(directive));
  }
  return script;
}

FaultScript FaultScript::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open fault script: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string FaultScript::to_text() const {
  std::ostringstream out;
  for (const auto& r : rules_) {
    if (r.first == 0 && r.last == UINT32_MAX) {
      out << '*';
    } else if (r.first == r.last) {
      out << r.first;
    } else {
      out << r.first << '-' << r.last;
    }
    out << ' ' << r.miner << ' ' << to_string(r.directive) << '\n';
  }
  return out.str();
}

}  // namespace bfel
