#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "bfel/dataset.h"
#include "bfel/identity.h"
#include "bfel/ledger.h"
#include "bfel/model.h"
#include "bfel/records.h"

namespace bfel {

enum class MinerStatus { kCandidate, kDelegate, kLeader, kVerifier, kSlashed };
std::string to_string(MinerStatus status);

struct MinerState {
  Identity identity;
  std::uint64_t deposit = 0;
  std::uint64_t votes = 0;
  MinerStatus status = MinerStatus::kCandidate;

  const std::string& id() const { return identity.entity_id; }
};

// Relative-drop quality gate: an update qualifies when the candidate model
// loses at most `theta` test accuracy against the current global model.
struct QualityPolicy {
  double theta = 0.05;
  Dataset test_set;
};

using WorkerVotes = std::map<std::string, std::vector<std::string>>;

// Tallies worker votes into the candidates and returns the top `n` eligible
// candidates (deposit >= min_deposit, not slashed) by votes, ties broken by
// ascending id. Throws ConfigError when fewer than n are eligible.
std::vector<MinerState> elect_delegates(std::vector<MinerState> candidates,
                                        const WorkerVotes& worker_votes, std::size_t n,
                                        std::uint64_t min_deposit);

// Sets status to slashed and confiscates the deposit. Idempotent.
MinerState slash(MinerState miner);

// Delegates of one subchain with their current roles.
class Committee {
 public:
  Committee() = default;
  explicit Committee(std::vector<MinerState> delegates);

  const std::vector<MinerState>& members() const { return members_; }
  const std::string& leader() const { return leader_; }
  // Active members other than the leader, ascending id.
  std::vector<std::string> verifiers() const;
  // Non-slashed members, ascending id.
  std::vector<std::string> active() const;
  bool is_active(const std::string& id) const;
  bool contains(const std::string& id) const;
  const MinerState& member(const std::string& id) const;
  std::size_t slashed_count() const;

  // Returns the record when the miner was not already slashed.
  std::optional<SlashRecord> slash_member(const std::string& id, SlashReason reason,
                                          std::uint32_t round);

 private:
  friend Committee rotate_roles(Committee, std::uint64_t, std::uint32_t, std::uint32_t);

  std::vector<MinerState> members_;
  std::string leader_;
};

// Leader for (round, attempt): within each epoch of |active| rounds the
// active delegates lead in a seeded random order, and a retry passes to the
// next delegate of that order. Deterministic in (seed, round, attempt).
// Throws FederationHalt when no active delegate remains.
Committee rotate_roles(Committee committee, std::uint64_t federation_seed, std::uint32_t round,
                       std::uint32_t attempt = 0);

struct Evaluation {
  bool qualified = false;
  double accuracy = 0.0;
  double baseline = 0.0;
};

// Applies the densified update to `global` with step `eta` and compares the
// test accuracy against `baseline` (the global model's accuracy). Throws
// ProtocolError for a bad signature or a stale round.
Evaluation evaluate_update(const LocalUpdate& update, const ModelParameters& global,
                           const ReferenceModel& model, const QualityPolicy& policy, double eta,
                           double baseline, const Authority& authority,
                           std::uint32_t current_round);
Evaluation evaluate_update(const LocalUpdate& update, const ModelParameters& global,
                           const ReferenceModel& model, const QualityPolicy& policy, double eta,
                           const Authority& authority, std::uint32_t current_round);

struct CrossVerification {
  // Update id -> number of verifiers that judged it qualified.
  std::map<std::string, std::size_t> approvals;
  // Verifier -> sum over peers of per-update verdict disagreements.
  std::map<std::string, std::size_t> disagreement;
  // Responses that were counted, one per verifier.
  std::vector<VerifierResponse> accepted;
  // Verifiers that signed two different responses for the same attempt.
  std::set<std::string> equivocators;
  std::size_t ignored = 0;
};

// Counts only responses that are signed, from a listed verifier, and for the
// given round/attempt. Identical duplicates are dropped; conflicting ones
// are both discarded and their author is reported as an equivocator.
CrossVerification cross_verify(std::span<const VerifierResponse> responses,
                               std::span<const std::string> update_ids,
                               std::span<const std::string> verifier_ids,
                               const Authority& authority, std::uint32_t round,
                               std::uint32_t attempt);

// approvals > 2/3 of verifier_count, strictly.
bool commit_threshold_met(std::size_t approvals, std::size_t verifier_count);
// approvals > verifier_count / 2, strictly.
bool majority_approved(std::size_t approvals, std::size_t verifier_count);

// Update ids approved by a strict majority of the verifier set.
std::vector<std::string> majority_set(const CrossVerification& tally,
                                      std::size_t verifier_count);

// Builds the pending block payload: the updates approved by a strict
// majority, all accepted responses, and the queued slash records. Throws
// ProtocolError when `proposer` is not the committee leader.
TrainingPayload assemble_pending(const std::string& proposer, const Committee& committee,
                                 const CrossVerification& tally,
                                 std::span<const LocalUpdate> updates, std::uint32_t round,
                                 const ModelParameters& global, double eta,
                                 std::vector<SlashRecord> slashes);

struct CommitOutcome {
  bool committed = false;
  std::size_t approvals = 0;
  std::size_t verifier_count = 0;
};

// Appends `pending` to `chain` iff approving verifiers exceed 2/3 of the
// verifier set. Throws ProtocolError when the block's proposer is not the
// current leader.
CommitOutcome assemble_and_commit(const Committee& committee, const Block& pending,
                                  std::span<const std::string> approving_verifiers,
                                  Chain& chain, const Authority& authority);

// Mean of the updates' gradients, summed in the order given.
GradientVector mean_update(std::span<const LocalUpdate> updates, std::uint32_t dim);

// Average of the block's qualified updates applied as one SGD step; the
// global model is returned unchanged when the block has no updates.
ModelParameters compute_global_update(const TrainingPayload& block, const ModelParameters& global,
                                      double eta);

// Counts consecutive committed rounds in which a verifier's qualified set
// differed from the committed set. Rounds without a response from the
// verifier leave its count unchanged.
class MisbehaviorTracker {
 public:
  explicit MisbehaviorTracker(std::size_t rounds_to_slash = 3) : limit_(rounds_to_slash) {}

  // Returns the verifiers whose streak reached the limit in this round.
  std::vector<std::string> observe(std::span<const VerifierResponse> responses,
                                   std::span<const std::string> committed_set);
  std::size_t streak(const std::string& verifier) const;
  void forget(const std::string& verifier) { streaks_.erase(verifier); }

 private:
  std::size_t limit_;
  std::map<std::string, std::size_t> streaks_;
};

enum class Directive { kHonest, kInvertVerdicts, kWithhold, kEquivocate };
std::string to_string(Directive d);
Directive directive_from_string(const std::string& s);

// Per-round, per-miner behaviour overrides. Text format, one rule per line:
//   <rounds> <miner-id> <directive>
// where <rounds> is `*`, `N`, or `A-B` (inclusive) and directive is one of
// honest | invert-verdicts | withhold | equivocate. `#` starts a comment.
// Later rules override earlier ones.
class FaultScript {
 public:
  void add(std::uint32_t first_round, std::uint32_t last_round, std::string miner,
           Directive directive);
  Directive directive(const std::string& miner, std::uint32_t round) const;
  bool empty() const { return rules_.empty(); }

  static FaultScript parse(const std::string& text);
  static FaultScript load(const std::filesystem::path& path);
  std::string to_text() const;

 private:
  struct Rule {
    std::uint32_t first;
    std::uint32_t last;
    std::string miner;
    Directive directive;
  };
  std::vector<Rule> rules_;
};

}  // namespace bfel
