#include "bfel/ledger.h"

#include <fstream>
#include <iterator>

#include <json.hpp>

#include "bfel/errors.h"

namespace bfel {

namespace {

constexpr std::uint8_t kLeafPrefix = 0x00;
constexpr std::uint8_t kNodePrefix = 0x01;
constexpr char kChainMagic[] = "BFELCHN1";

Digest hash_pair(const Digest& left, const Digest& right) {
  ByteWriter w;
  w.u8(kNodePrefix);
  w.raw(left);
  w.raw(right);
  return sha256(w.bytes());
}

Digest read_digest(ByteReader& r) {
  auto s = r.raw(32);
  Digest d;
  std::copy(s.begin(), s.end(), d.begin());
  return d;
}

// Each element needs at least `min_bytes`; rejects counts a tampered length
// field could inflate.
std::uint32_t read_count(ByteReader& r, std::size_t min_bytes) {
  auto n = r.u32();
  if (std::size_t{n} * min_bytes > r.remaining()) throw DecodeError("record count exceeds payload");
  return n;
}

void encode_slash(ByteWriter& w, const SlashRecord& s) {
  w.str(s.miner_id);
  w.u8(static_cast<std::uint8_t>(s.reason));
  w.u32(s.round);
}

SlashRecord decode_slash(ByteReader& r) {
  SlashRecord s;
  s.miner_id = r.str();
  auto reason = r.u8();
  if (reason > static_cast<std::uint8_t>(SlashReason::kEquivocation)) {
    throw DecodeError("unknown slash reason");
  }
  s.reason = static_cast<SlashReason>(reason);
  s.round = r.u32();
  return s;
}

void encode_payload(ByteWriter& w, const Payload& payload) {
  w.u8(static_cast<std::uint8_t>(payload.index()));
  if (const auto* t = std::get_if<TrainingPayload>(&payload)) {
    w.u32(t->round);
    w.raw(t->model_digest);
    w.u32(static_cast<std::uint32_t>(t->updates.size()));
    for (const auto& u : t->updates) u.encode_to(w);
    w.u32(static_cast<std::uint32_t>(t->responses.size()));
    for (const auto& v : t->responses) v.encode_to(w);
    w.u32(static_cast<std::uint32_t>(t->slashes.size()));
    for (const auto& s : t->slashes) encode_slash(w, s);
  } else if (const auto* tr = std::get_if<TradePayload>(&payload)) {
    w.u32(static_cast<std::uint32_t>(tr->trades.size()));
    for (const auto& t : tr->trades) t.encode_to(w);
  } else {
    const auto& a = std::get<AnchorPayload>(payload);
    w.u32(static_cast<std::uint32_t>(a.anchors.size()));
    for (const auto& rec : a.anchors) rec.encode_to(w);
  }
}

Payload decode_payload(ByteReader& r) {
  auto kind = r.u8();
  switch (kind) {
    case 0: {
      TrainingPayload t;
      t.round = r.u32();
      t.model_digest = read_digest(r);
      for (auto n = read_count(r, 32); n > 0; --n) t.updates.push_back(LocalUpdate::decode_from(r));
      for (auto n = read_count(r, 32); n > 0; --n) {
        t.responses.push_back(VerifierResponse::decode_from(r));
      }
      for (auto n = read_count(r, 9); n > 0; --n) t.slashes.push_back(decode_slash(r));
      return t;
    }
    case 1: {
      TradePayload p;
      for (auto n = read_count(r, 60); n > 0; --n) p.trades.push_back(TradeRecord::decode_from(r));
      return p;
    }
    case 2: {
      AnchorPayload p;
      for (auto n = read_count(r, 56); n > 0; --n) p.anchors.push_back(AnchorRecord::decode_from(r));
      return p;
    }
    default:
      throw DecodeError("unknown payload kind");
  }
}

template <typename T>
Bytes leaf_of(std::uint8_t tag, const T& record) {
  ByteWriter w;
  w.u8(tag);
  record.encode_to(w);
  return std::move(w).take();
}

}  // namespace

Digest merkle_root(std::span<const Bytes> leaves) {
  if (leaves.empty()) throw InputError("merkle_root requires at least one leaf");
  std::vector<Digest> level;
  level.reserve(leaves.size() + 1);
  for (const auto& leaf : leaves) {
    ByteWriter w;
    w.u8(kLeafPrefix);
    w.raw(leaf);
    level.push_back(sha256(w.bytes()));
  }
  do {
    if (level.size() % 2 == 1) level.push_back(level.back());
    std::vector<Digest> next;
    next.reserve(level.size() / 2);
    for (std::size_t i = 0; i < level.size(); i += 2) next.push_back(hash_pair(level[i], level[i + 1]));
    level = std::move(next);
  } while (level.size() > 1);
  return level.front();
}

std::string to_string(ChainKind kind) {
  switch (kind) {
    case ChainKind::kTraining: return "training";
    case ChainKind::kTrading: return "trading";
    case ChainKind::kMain: return "main";
  }
  return "unknown";
}

ChainKind chain_kind_from_string(const std::string& s) {
  if (s == "training") return ChainKind::kTraining;
  if (s == "trading") return ChainKind::kTrading;
  if (s == "main") return ChainKind::kMain;
  throw ConfigError("unknown chain kind: " + s);
}

ChainKind payload_chain_kind(const Payload& payload) {
  return static_cast<ChainKind>(payload.index());
}

std::vector<Bytes> payload_leaves(const Payload& payload) {
  std::vector<Bytes> leaves;
  ByteWriter meta;
  meta.u8(0xff);
  meta.u8(static_cast<std::uint8_t>(payload.index()));
  if (const auto* t = std::get_if<TrainingPayload>(&payload)) {
    meta.u32(t->round);
    meta.raw(t->model_digest);
    meta.u32(static_cast<std::uint32_t>(t->updates.size()));
    meta.u32(static_cast<std::uint32_t>(t->responses.size()));
    meta.u32(static_cast<std::uint32_t>(t->slashes.size()));
    leaves.push_back(std::move(meta).take());
    for (const auto& u : t->updates) leaves.push_back(leaf_of(1, u));
    for (const auto& v : t->responses) leaves.push_back(leaf_of(2, v));
    for (const auto& s : t->slashes) {
      ByteWriter w;
      w.u8(3);
      encode_slash(w, s);
      leaves.push_back(std::move(w).take());
    }
  } else if (const auto* tr = std::get_if<TradePayload>(&payload)) {
    meta.u32(static_cast<std::uint32_t>(tr->trades.size()));
    leaves.push_back(std::move(meta).take());
    for (const auto& t : tr->trades) leaves.push_back(leaf_of(4, t));
  } else {
    const auto& a = std::get<AnchorPayload>(payload);
    meta.u32(static_cast<std::uint32_t>(a.anchors.size()));
    leaves.push_back(std::move(meta).take());
    for (const auto& rec : a.anchors) leaves.push_back(leaf_of(5, rec));
  }
  return leaves;
}

namespace {

void encode_header(ByteWriter& w, const BlockHeader& h) {
  w.str(h.chain_id);
  w.u64(h.height);
  w.raw(h.prev_hash);
  w.raw(h.merkle_root);
  w.i64(h.timestamp_ms);
  w.str(h.leader_id);
}

BlockHeader decode_header(ByteReader& r) {
  BlockHeader h;
  h.chain_id = r.str();
  h.height = r.u64();
  h.prev_hash = read_digest(r);
  h.merkle_root = read_digest(r);
  h.timestamp_ms = r.i64();
  h.leader_id = r.str();
  return h;
}

Bytes chain_meta_leaf(const std::string& id, ChainKind kind,
                      const std::set<std::string>& access) {
  ByteWriter w;
  w.u8(0xfe);
  w.str(id);
  w.u8(static_cast<std::uint8_t>(kind));
  w.u32(static_cast<std::uint32_t>(access.size()));
  for (const auto& a : access) w.str(a);
  return std::move(w).take();
}

// The genesis root also commits to the chain metadata so the access list
// cannot be altered after creation.
Digest block_root(const Block& b, const std::string& id, ChainKind kind,
                  const std::set<std::string>& access) {
  auto leaves = payload_leaves(b.payload);
  if (b.header.height == 0) leaves.push_back(chain_meta_leaf(id, kind, access));
  return merkle_root(leaves);
}

Digest payload_root(const Payload& payload) {
  auto leaves = payload_leaves(payload);
  return merkle_root(leaves);
}

}  // namespace

Bytes BlockHeader::encode() const {
  ByteWriter w;
  encode_header(w, *this);
  return std::move(w).take();
}

Bytes Block::encode() const {
  ByteWriter w;
  encode_header(w, header);
  w.blob(signature);
  encode_payload(w, payload);
  return std::move(w).take();
}

Block Block::decode(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  Block b;
  b.header = decode_header(r);
  b.signature = r.blob();
  b.payload = decode_payload(r);
  r.expect_done();
  return b;
}

Chain Chain::create(std::string chain_id, ChainKind kind, std::set<std::string> access_list,
                    Payload genesis_payload, const Authority& authority,
                    const std::string& recorder_id, std::int64_t timestamp_ms) {
  if (payload_chain_kind(genesis_payload) != kind) {
    throw ProtocolError("genesis payload does not match chain kind");
  }
  Chain c;
  c.id_ = std::move(chain_id);
  c.kind_ = kind;
  c.access_ = std::move(access_list);
  Block g;
  g.header.chain_id = c.id_;
  g.header.height = 0;
  g.header.prev_hash = kZeroDigest;
  g.header.timestamp_ms = timestamp_ms;
  g.header.leader_id = recorder_id;
  g.payload = std::move(genesis_payload);
  g.header.merkle_root = block_root(g, c.id_, c.kind_, c.access_);
  g.signature = authority.sign(recorder_id, g.header.encode());
  c.blocks_.push_back(std::move(g));
  return c;
}

Chain Chain::from_blocks(std::string chain_id, ChainKind kind,
                         std::set<std::string> access_list, std::vector<Block> blocks) {
  if (blocks.empty()) throw DecodeError("chain has no genesis block");
  Chain c;
  c.id_ = std::move(chain_id);
  c.kind_ = kind;
  c.access_ = std::move(access_list);
  c.blocks_ = std::move(blocks);
  return c;
}

Block make_block(const Chain& chain, Payload payload, const std::string& leader_id,
                 const Authority& authority, std::int64_t timestamp_ms) {
  const Block& prev = chain.head();
  Block b;
  b.header.chain_id = chain.id();
  b.header.height = prev.header.height + 1;
  b.header.prev_hash = prev.header.hash();
  b.header.merkle_root = payload_root(payload);
  b.header.timestamp_ms = std::max(timestamp_ms, prev.header.timestamp_ms);
  b.header.leader_id = leader_id;
  b.signature = authority.sign(leader_id, b.header.encode());
  b.payload = std::move(payload);
  return b;
}

void append_block(Chain& chain, Block block, const std::string& authorized_id,
                  const Authority& authority) {
  const auto& h = block.header;
  if (h.leader_id != authorized_id) {
    throw ProtocolError("block proposer " + h.leader_id + " is not the authorized writer " +
                        authorized_id);
  }
  if (payload_chain_kind(block.payload) != chain.kind()) {
    throw ProtocolError("payload kind not allowed on " + to_string(chain.kind()) + " chain");
  }
  const Block& prev = chain.head();
  if (h.chain_id != chain.id() || h.height != prev.header.height + 1 ||
      h.prev_hash != prev.header.hash()) {
    throw ProtocolError("block does not extend the chain head");
  }
  if (h.timestamp_ms < prev.header.timestamp_ms) throw ProtocolError("block timestamp decreased");
  if (payload_root(block.payload) != h.merkle_root) throw ProtocolError("merkle root mismatch");
  if (!authority.verify(h.leader_id, h.encode(), block.signature)) {
    throw ProtocolError("invalid leader signature");
  }
  chain.blocks_.push_back(std::move(block));
}

void append_block(Chain& chain, Payload payload, const std::string& leader_id,
                  const std::string& authorized_id, const Authority& authority,
                  std::int64_t timestamp_ms) {
  if (leader_id != authorized_id) {
    throw ProtocolError("block proposer " + leader_id + " is not the authorized writer " +
                        authorized_id);
  }
  append_block(chain, make_block(chain, std::move(payload), leader_id, authority, timestamp_ms),
               authorized_id, authority);
}

ValidationResult validate_chain(const Chain& chain, const Authority& authority) {
  auto fail = [](std::uint64_t h, std::string why) {
    return ValidationResult{false, h, std::move(why)};
  };
  const auto& blocks = chain.blocks();
  if (blocks.empty()) return fail(0, "missing genesis block");
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const Block& b = blocks[i];
    const auto& h = b.header;
    if (h.chain_id != chain.id()) return fail(i, "block belongs to another chain");
    if (h.height != i) return fail(i, "non-consecutive height");
    const Digest expected_prev = i == 0 ? kZeroDigest : blocks[i - 1].header.hash();
    if (h.prev_hash != expected_prev) return fail(i, "broken hash link");
    if (payload_chain_kind(b.payload) != chain.kind()) return fail(i, "payload kind mismatch");
    if (block_root(b, chain.id(), chain.kind(), chain.access_list()) != h.merkle_root) {
      return fail(i, "merkle root mismatch");
    }
    if (!authority.verify(h.leader_id, h.encode(), b.signature)) {
      return fail(i, "invalid leader signature");
    }
    if (i > 0 && h.timestamp_ms < blocks[i - 1].header.timestamp_ms) {
      return fail(i, "timestamp decreased");
    }
    if (const auto* t = std::get_if<TrainingPayload>(&b.payload)) {
      for (const auto& u : t->updates) {
        if (!authority.verify(u.worker_id, u.signing_bytes(), u.signature)) {
          return fail(i, "invalid update signature");
        }
      }
      for (const auto& v : t->responses) {
        if (!authority.verify(v.verifier_id, v.signing_bytes(), v.signature)) {
          return fail(i, "invalid verifier response signature");
        }
      }
    } else if (const auto* tr = std::get_if<TradePayload>(&b.payload)) {
      for (const auto& t : tr->trades) {
        auto msg = t.signing_bytes();
        if (!authority.verify(t.seller_id, msg, t.seller_signature) ||
            !authority.verify(t.buyer_id, msg, t.buyer_signature)) {
          return fail(i, "invalid trade signature");
        }
      }
    }
  }
  return {};
}

std::vector<AnchorRecord> anchors_for(const Chain& main, const std::string& subchain_id) {
  std::vector<AnchorRecord> out;
  for (const auto& b : main.blocks()) {
    if (const auto* a = std::get_if<AnchorPayload>(&b.payload)) {
      for (const auto& rec : a->anchors) {
        if (rec.subchain_id == subchain_id) out.push_back(rec);
      }
    }
  }
  return out;
}

Digest header_range_root(const Chain& chain, std::uint64_t from, std::uint64_t to) {
  if (from > to || to >= chain.length()) throw InputError("header range out of bounds");
  std::vector<Bytes> leaves;
  leaves.reserve(to - from + 1);
  for (auto h = from; h <= to; ++h) leaves.push_back(chain.blocks()[h].header.encode());
  return merkle_root(leaves);
}

AnchorRecord anchor_to_main(const Chain& subchain, Chain& main, std::uint64_t period,
                            const Authority& authority, const std::string& recorder_id,
                            std::int64_t timestamp_ms) {
  if (main.kind() != ChainKind::kMain) throw ProtocolError("anchors go on the main chain");
  if (subchain.kind() == ChainKind::kMain) throw ProtocolError("main chain is not anchored");
  auto existing = anchors_for(main, subchain.id());
  const std::uint64_t from = existing.empty() ? 0 : existing.back().to_height + 1;
  const std::uint64_t to = subchain.length() - 1;
  const std::uint64_t pending = from > to ? 0 : to - from + 1;
  if (pending == 0 || pending < period) throw InputError("nothing to anchor");
  AnchorRecord rec;
  rec.subchain_id = subchain.id();
  rec.from_height = from;
  rec.to_height = to;
  rec.anchored_root = header_range_root(subchain, from, to);
  rec.locator = "bfel://" + subchain.id() + "/blocks/" + std::to_string(from) + "-" +
                std::to_string(to);
  append_block(main, AnchorPayload{{rec}}, recorder_id, recorder_id, authority, timestamp_ms);
  return rec;
}

bool verify_anchor(const AnchorRecord& record, const Chain& subchain) {
  if (record.subchain_id != subchain.id()) throw InputError("anchor names another subchain");
  if (record.from_height > record.to_height || record.to_height >= subchain.length()) {
    throw InputError("anchor range beyond subchain head");
  }
  for (auto h = record.from_height; h <= record.to_height; ++h) {
    const auto& b = subchain.blocks()[h];
    if (block_root(b, subchain.id(), subchain.kind(), subchain.access_list()) !=
        b.header.merkle_root) {
      return false;
    }
  }
  return header_range_root(subchain, record.from_height, record.to_height) ==
         record.anchored_root;
}

bool is_model_anchored(const Digest& model_digest, const Chain& training, const Chain& main) {
  auto anchors = anchors_for(main, training.id());
  if (anchors.empty()) return false;
  const auto covered = std::min<std::uint64_t>(anchors.back().to_height, training.length() - 1);
  for (std::uint64_t h = 0; h <= covered; ++h) {
    const auto* t = std::get_if<TrainingPayload>(&training.blocks()[h].payload);
    if (t != nullptr && t->model_digest == model_digest) return true;
  }
  return false;
}

void record_trade(const TradeRecord& trade, Chain& trading, const Chain& main,
                  std::span<const Chain* const> training_chains, const Authority& authority,
                  const std::string& recorder_id, std::int64_t timestamp_ms) {
  if (trading.kind() != ChainKind::kTrading) throw ProtocolError("not a trading chain");
  const auto msg = trade.signing_bytes();
  if (!authority.verify(trade.seller_id, msg, trade.seller_signature)) {
    throw ProtocolError("trade lacks a valid seller signature");
  }
  if (!authority.verify(trade.buyer_id, msg, trade.buyer_signature)) {
    throw ProtocolError("trade lacks a valid buyer signature");
  }
  if (!check_access(trading, trade.seller_id) || !check_access(trading, trade.buyer_id)) {
    throw ProtocolError("trade party not authorized on the trading chain");
  }
  bool anchored = false;
  for (const Chain* c : training_chains) {
    if (is_model_anchored(trade.model_digest, *c, main)) anchored = true;
  }
  if (!anchored) throw ProtocolError("traded model digest is not anchored on the main chain");
  append_block(trading, TradePayload{{trade}}, recorder_id, recorder_id, authority, timestamp_ms);
}

std::vector<TradeRecord> trades_for_model(const Chain& trading, const Digest& model_digest) {
  std::vector<TradeRecord> out;
  for (const auto& b : trading.blocks()) {
    if (const auto* p = std::get_if<TradePayload>(&b.payload)) {
      for (const auto& t : p->trades) {
        if (t.model_digest == model_digest) out.push_back(t);
      }
    }
  }
  return out;
}

bool check_access(const Chain& chain, const std::string& entity) {
  return chain.kind() == ChainKind::kMain || chain.access_list().count(entity) != 0;
}

Bytes encode_chain(const Chain& chain) {
  ByteWriter meta;
  meta.raw(to_bytes(std::string_view(kChainMagic, 8)));
  meta.str(chain.id());
  meta.u8(static_cast<std::uint8_t>(chain.kind()));
  meta.u32(static_cast<std::uint32_t>(chain.access_list().size()));
  for (const auto& a : chain.access_list()) meta.str(a);

  ByteWriter out;
  out.blob(meta.bytes());
  for (const auto& b : chain.blocks()) out.blob(b.encode());
  return std::move(out).take();
}

Chain decode_chain(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  Bytes meta_bytes = r.blob();
  ByteReader meta(meta_bytes);
  auto magic = meta.raw(8);
  if (!std::equal(magic.begin(), magic.end(), kChainMagic)) throw DecodeError("bad chain magic");
  std::string id = meta.str();
  auto kind = meta.u8();
  if (kind > static_cast<std::uint8_t>(ChainKind::kMain)) throw DecodeError("unknown chain kind");
  std::set<std::string> access;
  for (auto n = read_count(meta, 4); n > 0; --n) {
    if (!access.insert(meta.str()).second) throw DecodeError("duplicate access entry");
  }
  meta.expect_done();
  std::vector<Block> blocks;
  while (!r.done()) {
    Bytes b = r.blob();
    blocks.push_back(Block::decode(b));
  }
  return Chain::from_blocks(std::move(id), static_cast<ChainKind>(kind), std::move(access),
                            std::move(blocks));
}

void write_chain_file(const std::filesystem::path& path, const Chain& chain) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write chain file: " + path.string());
  auto bytes = encode_chain(chain);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Chain read_chain_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open chain file: " + path.string());
  Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_chain(bytes);
}

namespace {

using Json = nlohmann::ordered_json;

Json sparse_json(const SparseGradient& g) {
  Json entries = Json::array();
  for (const auto& e : g.entries()) entries.push_back({e.index, e.value});
  return {{"dim", g.dim()}, {"round", g.round()}, {"count", g.size()}, {"entries", entries}};
}

Json block_json(const Block& b) {
  Json j;
  j["chain_id"] = b.header.chain_id;
  j["height"] = b.header.height;
  j["hash"] = to_hex(b.header.hash());
  j["prev_hash"] = to_hex(b.header.prev_hash);
  j["merkle_root"] = to_hex(b.header.merkle_root);
  j["timestamp_ms"] = b.header.timestamp_ms;
  j["leader_id"] = b.header.leader_id;
  j["signature"] = to_hex(b.signature);
  Json p;
  if (const auto* t = std::get_if<TrainingPayload>(&b.payload)) {
    p["kind"] = "training";
    p["round"] = t->round;
    p["model_digest"] = to_hex(t->model_digest);
    p["updates"] = Json::array();
    for (const auto& u : t->updates) {
      p["updates"].push_back({{"worker_id", u.worker_id},
                              {"round", u.round},
                              {"timestamp_ms", u.timestamp_ms},
                              {"gradient", sparse_json(u.gradient)},
                              {"signature", to_hex(u.signature)}});
    }
    p["responses"] = Json::array();
    for (const auto& v : t->responses) {
      Json cmp = Json::array();
      for (const auto& c : v.comparison) cmp.push_back({{"peer_id", c.peer_id}, {"agree", c.agree}});
      p["responses"].push_back({{"verifier_id", v.verifier_id},
                                {"round", v.round},
                                {"attempt", v.attempt},
                                {"qualified", v.qualified},
                                {"comparison", cmp},
                                {"timestamp_ms", v.timestamp_ms},
                                {"signature", to_hex(v.signature)}});
    }
    p["slashes"] = Json::array();
    for (const auto& s : t->slashes) {
      p["slashes"].push_back(
          {{"miner_id", s.miner_id}, {"reason", to_string(s.reason)}, {"round", s.round}});
    }
  } else if (const auto* tr = std::get_if<TradePayload>(&b.payload)) {
    p["kind"] = "trade";
    p["trades"] = Json::array();
    for (const auto& t : tr->trades) {
      p["trades"].push_back({{"seller_id", t.seller_id},
                             {"buyer_id", t.buyer_id},
                             {"model_digest", to_hex(t.model_digest)},
                             {"price", t.price},
                             {"timestamp_ms", t.timestamp_ms}});
    }
  } else {
    p["kind"] = "anchor";
    p["anchors"] = Json::array();
    for (const auto& a : std::get<AnchorPayload>(b.payload).anchors) {
      p["anchors"].push_back({{"subchain_id", a.subchain_id},
                              {"from_height", a.from_height},
                              {"to_height", a.to_height},
                              {"anchored_root", to_hex(a.anchored_root)},
                              {"locator", a.locator}});
    }
  }
  j["payload"] = std::move(p);
  return j;
}

}  // namespace

std::string block_to_json(const Block& block, int indent) { return block_json(block).dump(indent); }

std::string chain_to_json(const Chain& chain, int indent) {
  Json j;
  j["chain_id"] = chain.id();
  j["kind"] = to_string(chain.kind());
  j["access_list"] = chain.access_list();
  j["blocks"] = Json::array();
  for (const auto& b : chain.blocks()) j["blocks"].push_back(block_json(b));
  return j.dump(indent);
}

}  // namespace bfel
