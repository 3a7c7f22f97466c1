#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "bfel/bytes.h"
#include "bfel/digest.h"
#include "bfel/identity.h"
#include "bfel/records.h"

namespace bfel {

// Binary Merkle tree with domain-separated hashing: leaf = H(0x00 || leaf),
// interior = H(0x01 || left || right). An odd node at any level is paired
// with itself, including a lone leaf. Throws InputError on empty input.
Digest merkle_root(std::span<const Bytes> leaves);

enum class ChainKind : std::uint8_t { kTraining = 0, kTrading = 1, kMain = 2 };
std::string to_string(ChainKind kind);
ChainKind chain_kind_from_string(const std::string& s);

struct TrainingPayload {
  std::uint32_t round = 0;
  // Digest of the global model after this block is applied (genesis: the
  // initial model).
  Digest model_digest{};
  // Qualified updates, sorted by worker id.
  std::vector<LocalUpdate> updates;
  std::vector<VerifierResponse> responses;
  std::vector<SlashRecord> slashes;

  bool operator==(const TrainingPayload&) const = default;
};

struct TradePayload {
  std::vector<TradeRecord> trades;
  bool operator==(const TradePayload&) const = default;
};

struct AnchorPayload {
  std::vector<AnchorRecord> anchors;
  bool operator==(const AnchorPayload&) const = default;
};

using Payload = std::variant<TrainingPayload, TradePayload, AnchorPayload>;

// Chain kind that may carry the payload.
ChainKind payload_chain_kind(const Payload& payload);
// Canonical leaves: a metadata leaf followed by one leaf per record.
std::vector<Bytes> payload_leaves(const Payload& payload);

struct BlockHeader {
  std::string chain_id;
  std::uint64_t height = 0;
  Digest prev_hash{};
  Digest merkle_root{};
  std::int64_t timestamp_ms = 0;
  std::string leader_id;

  Bytes encode() const;
  Digest hash() const { return sha256(encode()); }

  bool operator==(const BlockHeader&) const = default;
};

struct Block {
  BlockHeader header;
  // Leader's signature over the encoded header.
  Bytes signature;
  Payload payload;

  Bytes encode() const;
  static Block decode(std::span<const std::uint8_t> bytes);

  bool operator==(const Block&) const = default;
};

// Append-only hash-chained ledger with a read access list fixed at genesis.
class Chain {
 public:
  // Builds the chain with a genesis block signed by `recorder_id`.
  static Chain create(std::string chain_id, ChainKind kind, std::set<std::string> access_list,
                      Payload genesis_payload, const Authority& authority,
                      const std::string& recorder_id, std::int64_t timestamp_ms);
  // No validation; use validate_chain.
  static Chain from_blocks(std::string chain_id, ChainKind kind,
                           std::set<std::string> access_list, std::vector<Block> blocks);

  const std::string& id() const { return id_; }
  ChainKind kind() const { return kind_; }
  const std::set<std::string>& access_list() const { return access_; }
  const std::vector<Block>& blocks() const { return blocks_; }
  const Block& head() const { return blocks_.back(); }
  std::size_t length() const { return blocks_.size(); }

 private:
  friend void append_block(Chain&, Block, const std::string&, const Authority&);

  std::string id_;
  ChainKind kind_ = ChainKind::kTraining;
  std::set<std::string> access_;
  std::vector<Block> blocks_;
};

// Builds and signs the next block for `chain` without appending it.
Block make_block(const Chain& chain, Payload payload, const std::string& leader_id,
                 const Authority& authority, std::int64_t timestamp_ms);

// Appends a pre-signed block after checking height, hash link, Merkle root,
// signature and payload kind. Throws ProtocolError when the proposer is not
// `authorized_id` or any check fails.
void append_block(Chain& chain, Block block, const std::string& authorized_id,
                  const Authority& authority);

// make_block + append_block.
void append_block(Chain& chain, Payload payload, const std::string& leader_id,
                  const std::string& authorized_id, const Authority& authority,
                  std::int64_t timestamp_ms);

struct ValidationResult {
  bool ok = true;
  std::optional<std::uint64_t> first_invalid_height;
  std::string reason;
};

ValidationResult validate_chain(const Chain& chain, const Authority& authority);

// Anchor records for `subchain_id` found on the main chain, in order.
std::vector<AnchorRecord> anchors_for(const Chain& main, const std::string& subchain_id);

// Root over the encoded headers of blocks [from, to].
Digest header_range_root(const Chain& chain, std::uint64_t from, std::uint64_t to);

// Anchors all not-yet-anchored blocks of `subchain` onto `main`. Throws
// InputError when fewer than `period` blocks are unanchored.
AnchorRecord anchor_to_main(const Chain& subchain, Chain& main, std::uint64_t period,
                            const Authority& authority, const std::string& recorder_id,
                            std::int64_t timestamp_ms);

// True iff every block in the range still matches its Merkle root and the
// header-range root equals the anchored value. Throws InputError when the
// record names another chain or a range beyond its head.
bool verify_anchor(const AnchorRecord& record, const Chain& subchain);

// True iff a block of `training` carries `model_digest` at a height already
// covered by an anchor on `main`.
bool is_model_anchored(const Digest& model_digest, const Chain& training, const Chain& main);

// Validates both signatures, access and anchoring, then appends a
// TradePayload block. Throws ProtocolError on any failed check.
void record_trade(const TradeRecord& trade, Chain& trading, const Chain& main,
                  std::span<const Chain* const> training_chains, const Authority& authority,
                  const std::string& recorder_id, std::int64_t timestamp_ms);

std::vector<TradeRecord> trades_for_model(const Chain& trading, const Digest& model_digest);

// Main chain is world-readable; other chains only to their access list.
bool check_access(const Chain& chain, const std::string& entity);

// Chain file: length-prefixed (u32) records; the first record is the chain
// metadata (magic, id, kind, access list), the rest are encoded blocks.
void write_chain_file(const std::filesystem::path& path, const Chain& chain);
Chain read_chain_file(const std::filesystem::path& path);
Chain decode_chain(std::span<const std::uint8_t> bytes);
Bytes encode_chain(const Chain& chain);

// Human-readable JSON views.
std::string block_to_json(const Block& block, int indent = 2);
std::string chain_to_json(const Chain& chain, int indent = 2);

}  // namespace bfel
