#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bfel/bytes.h"
#include "bfel/compression.h"
#include "bfel/digest.h"

namespace bfel {

// Signed, compressed model update submitted by a worker. The worker id
// doubles as the update identifier within a round.
struct LocalUpdate {
  std::string worker_id;
  std::uint32_t round = 0;
  SparseGradient gradient{1, 0, {}};
  std::int64_t timestamp_ms = 0;
  Bytes signature;

  Bytes signing_bytes() const;
  void encode_to(ByteWriter& w) const;
  static LocalUpdate decode_from(ByteReader& r);
  Bytes encode() const;
  static LocalUpdate decode(std::span<const std::uint8_t> bytes);

  bool operator==(const LocalUpdate&) const = default;
};

struct PeerComparison {
  std::string peer_id;
  bool agree = false;

  bool operator==(const PeerComparison&) const = default;
};

// A verifier's signed verdict for one consensus attempt.
struct VerifierResponse {
  std::string verifier_id;
  std::uint32_t round = 0;
  std::uint32_t attempt = 0;
  // Sorted, unique update identifiers the verifier judged qualified.
  std::vector<std::string> qualified;
  std::vector<PeerComparison> comparison;
  std::int64_t timestamp_ms = 0;
  Bytes signature;

  Bytes signing_bytes() const;
  void encode_to(ByteWriter& w) const;
  static VerifierResponse decode_from(ByteReader& r);
  Bytes encode() const;
  static VerifierResponse decode(std::span<const std::uint8_t> bytes);

  bool operator==(const VerifierResponse&) const = default;
};

enum class SlashReason : std::uint8_t {
  kFalseVerification = 0,
  kInvalidProposal = 1,
  kEquivocation = 2,
};

std::string to_string(SlashReason reason);

struct SlashRecord {
  std::string miner_id;
  SlashReason reason = SlashReason::kFalseVerification;
  std::uint32_t round = 0;

  bool operator==(const SlashRecord&) const = default;
};

struct TradeRecord {
  std::string seller_id;
  std::string buyer_id;
  Digest model_digest{};
  std::uint64_t price = 0;
  std::int64_t timestamp_ms = 0;
  Bytes seller_signature;
  Bytes buyer_signature;

  // Both parties sign the same bytes.
  Bytes signing_bytes() const;
  void encode_to(ByteWriter& w) const;
  static TradeRecord decode_from(ByteReader& r);

  bool operator==(const TradeRecord&) const = default;
};

struct AnchorRecord {
  std::string subchain_id;
  std::uint64_t from_height = 0;
  std::uint64_t to_height = 0;
  // Merkle root over the encoded headers of blocks from_height..to_height.
  Digest anchored_root{};
  // Opaque address where the subchain data can be fetched.
  std::string locator;

  void encode_to(ByteWriter& w) const;
  static AnchorRecord decode_from(ByteReader& r);

  bool operator==(const AnchorRecord&) const = default;
};

// A verifier's vote on a pending block.
struct BlockVote {
  std::string voter_id;
  std::uint32_t round = 0;
  std::uint32_t attempt = 0;
  Digest block_hash{};
  bool approve = false;
  Bytes signature;

  Bytes signing_bytes() const;
  Bytes encode() const;
  static BlockVote decode(std::span<const std::uint8_t> bytes);
  bool operator==(const BlockVote&) const = default;
};

// Downlink to workers after a round closes: the averaged qualified update
// (empty when nothing qualified) and the time the next round starts.
struct GlobalUpdate {
  std::uint32_t round = 0;
  std::uint64_t height = 0;
  std::uint32_t qualified = 0;
  std::int64_t next_round_start_ms = 0;
  SparseGradient average{1, 0, {}};

  Bytes encode() const;
  static GlobalUpdate decode(std::span<const std::uint8_t> bytes);
  bool operator==(const GlobalUpdate&) const = default;
};

}  // namespace bfel
