#include <gtest/gtest.h>

#include <filesystem>

#include "bfel/errors.h"
#include "bfel/identity.h"
#include "bfel/ledger.h"
#include "bfel/rng.h"

namespace bfel {
namespace {

Digest h(std::uint8_t prefix, std::span<const std::uint8_t> a, std::span<const std::uint8_t> b = {}) {
  Bytes buf{prefix};
  buf.insert(buf.end(), a.begin(), a.end());
  buf.insert(buf.end(), b.begin(), b.end());
  return sha256(buf);
}

// Recursive reference: pair up one level, recurse on the parents.
Digest level_root(std::vector<Digest> level) {
  if (level.size() == 1) return level[0];
  if (level.size() % 2) level.push_back(level.back());
  std::vector<Digest> up;
  for (std::size_t i = 0; i < level.size(); i += 2) up.push_back(h(0x01, level[i], level[i + 1]));
  return level_root(up);
}

Digest reference_root(const std::vector<Bytes>& leaves) {
  std::vector<Digest> level;
  for (const auto& l : leaves) level.push_back(h(0x00, l));
  if (level.size() == 1) return h(0x01, level[0], level[0]);
  return level_root(level);
}

std::vector<Bytes> random_leaves(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Bytes> out(n);
  for (auto& l : out) {
    l.resize(1 + rng.below(40));
    for (auto& b : l) b = static_cast<std::uint8_t>(rng.below(256));
  }
  return out;
}

TEST(Merkle, SingleLeafIsDuplicated) {
  const Bytes leaf = to_bytes("L");
  const auto lh = h(0x00, leaf);
  EXPECT_EQ(merkle_root(std::vector<Bytes>{leaf}), h(0x01, lh, lh));
}

TEST(Merkle, MatchesReference) {
  for (std::size_t n = 1; n <= 17; ++n) {
    const auto leaves = random_leaves(n, n);
    EXPECT_EQ(merkle_root(leaves), reference_root(leaves)) << n;
  }
}

TEST(Merkle, SwapChangesRoot) {
  auto leaves = random_leaves(7, 3);
  const auto r = merkle_root(leaves);
  std::swap(leaves[2], leaves[5]);
  EXPECT_NE(merkle_root(leaves), r);
  EXPECT_THROW(merkle_root(std::vector<Bytes>{}), InputError);
}

TEST(Identity, SignVerifyAndTamper) {
  Authority auth(5);
  auth.register_identity("w", Role::kWorker);
  auth.register_identity("x", Role::kWorker);
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    auto msg = random_leaves(1, 1000 + i)[0];
    const auto sig = auth.sign("w", msg);
    ASSERT_TRUE(auth.verify("w", msg, sig));
    EXPECT_FALSE(auth.verify("x", msg, sig));
    auto bad = msg;
    bad[rng.below(bad.size())] ^= static_cast<std::uint8_t>(1u << rng.below(8));
    EXPECT_FALSE(auth.verify("w", bad, sig));
    auto bad_sig = sig;
    bad_sig[rng.below(bad_sig.size())] ^= static_cast<std::uint8_t>(1u << rng.below(8));
    EXPECT_FALSE(auth.verify("w", msg, bad_sig));
  }
}

TEST(Identity, DuplicateAndUnknown) {
  Authority auth(1);
  auth.register_identity("a", Role::kMiner);
  EXPECT_THROW(auth.register_identity("a", Role::kMiner), ProtocolError);
  EXPECT_THROW(auth.sign("ghost", to_bytes("m")), ProtocolError);
  EXPECT_FALSE(auth.verify("ghost", to_bytes("m"), Bytes(32)));
}

TEST(Identity, JsonRoundTrip) {
  Authority auth(9);
  auth.register_identity("a", Role::kPublisher);
  const auto sig = auth.sign("a", to_bytes("hello"));
  const auto back = Authority::from_json(auth.to_json());
  EXPECT_TRUE(back.verify("a", to_bytes("hello"), sig));
  EXPECT_EQ(back.identity("a").role, Role::kPublisher);
}

struct Fixture {
  Authority auth{11};
  Chain chain;
  Fixture() {
    auth.register_identity("rec", Role::kAuthority);
    auth.register_identity("leader", Role::kMiner);
    chain = Chain::create("training-1", ChainKind::kTraining, {"leader", "t1-worker-00"},
                          TrainingPayload{}, auth, "rec", 0);
  }
  void grow(std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      TrainingPayload p;
      p.round = static_cast<std::uint32_t>(chain.length() - 1);
      p.model_digest = sha256(std::to_string(p.round));
      append_block(chain, p, "leader", "leader", auth, static_cast<std::int64_t>(10 * chain.length()));
    }
  }
};

TEST(Chain, AppendToGenesis) {
  Fixture f;
  f.grow(1);
  EXPECT_EQ(f.chain.length(), 2u);
  EXPECT_EQ(f.chain.head().header.height, 1u);
  EXPECT_EQ(f.chain.head().header.prev_hash, f.chain.blocks()[0].header.hash());
  EXPECT_EQ(f.chain.blocks()[0].header.prev_hash, kZeroDigest);
}

TEST(Chain, AppendRejectsWrongWriterAndKind) {
  Fixture f;
  EXPECT_THROW(append_block(f.chain, TrainingPayload{}, "rec", "leader", f.auth, 1), ProtocolError);
  EXPECT_THROW(append_block(f.chain, TradePayload{}, "leader", "leader", f.auth, 1), ProtocolError);
  auto b = make_block(f.chain, TrainingPayload{}, "leader", f.auth, 1);
  b.header.prev_hash[0] ^= 1;
  EXPECT_THROW(append_block(f.chain, b, "leader", f.auth), ProtocolError);
  EXPECT_EQ(f.chain.length(), 1u);
}

TEST(Chain, FiftyAppendsRevalidate) {
  Fixture f;
  f.grow(50);
  EXPECT_TRUE(validate_chain(f.chain, f.auth).ok);
  const auto back = decode_chain(encode_chain(f.chain));
  EXPECT_EQ(back.blocks(), f.chain.blocks());
  EXPECT_EQ(back.access_list(), f.chain.access_list());
  EXPECT_TRUE(validate_chain(back, f.auth).ok);
}

TEST(Chain, TamperReportsHeight) {
  Fixture f;
  f.grow(8);
  auto blocks = f.chain.blocks();
  std::get<TrainingPayload>(blocks[5].payload).round ^= 1;
  const auto bad = Chain::from_blocks(f.chain.id(), f.chain.kind(), f.chain.access_list(), blocks);
  const auto res = validate_chain(bad, f.auth);
  EXPECT_FALSE(res.ok);
  EXPECT_EQ(res.first_invalid_height, 5u);
}

TEST(Chain, AccessListIsCommitted) {
  Fixture f;
  f.grow(2);
  auto acl = f.chain.access_list();
  acl.insert("intruder");
  const auto bad = Chain::from_blocks(f.chain.id(), f.chain.kind(), acl, f.chain.blocks());
  EXPECT_EQ(validate_chain(bad, f.auth).first_invalid_height, 0u);
}

TEST(Chain, FileRoundTrip) {
  Fixture f;
  f.grow(3);
  const auto path = std::filesystem::temp_directory_path() / "bfel_chain_roundtrip.bin";
  write_chain_file(path, f.chain);
  const auto back = read_chain_file(path);
  std::filesystem::remove(path);
  EXPECT_EQ(back.blocks(), f.chain.blocks());
}

TEST(Anchor, PeriodAndContiguity) {
  Fixture f;
  Chain main = Chain::create("main", ChainKind::kMain, {}, AnchorPayload{}, f.auth, "rec", 0);
  f.grow(4);  // heights 0..4
  const auto a1 = anchor_to_main(f.chain, main, 5, f.auth, "rec", 100);
  EXPECT_EQ(a1.from_height, 0u);
  EXPECT_EQ(a1.to_height, 4u);
  f.grow(3);
  EXPECT_THROW(anchor_to_main(f.chain, main, 5, f.auth, "rec", 200), InputError);
  f.grow(2);
  const auto a2 = anchor_to_main(f.chain, main, 5, f.auth, "rec", 300);
  EXPECT_EQ(a2.from_height, 5u);
  EXPECT_EQ(a2.to_height, 9u);

  const auto all = anchors_for(main, f.chain.id());
  ASSERT_EQ(all.size(), 2u);
  for (const auto& a : all) {
    EXPECT_TRUE(verify_anchor(a, f.chain));
    std::vector<Bytes> headers;
    for (auto hgt = a.from_height; hgt <= a.to_height; ++hgt) {
      headers.push_back(f.chain.blocks()[hgt].header.encode());
    }
    EXPECT_EQ(a.anchored_root, reference_root(headers));
  }
  EXPECT_TRUE(validate_chain(main, f.auth).ok);
  for (const auto& b : main.blocks()) {
    EXPECT_TRUE(std::holds_alternative<AnchorPayload>(b.payload));
  }
}

TEST(Anchor, TamperAfterAnchoringFails) {
  Fixture f;
  Chain main = Chain::create("main", ChainKind::kMain, {}, AnchorPayload{}, f.auth, "rec", 0);
  f.grow(5);
  const auto a = anchor_to_main(f.chain, main, 5, f.auth, "rec", 100);
  for (std::uint64_t k = a.from_height; k <= a.to_height; ++k) {
    auto blocks = f.chain.blocks();
    blocks[k].header.timestamp_ms += 1;
    EXPECT_FALSE(verify_anchor(a, Chain::from_blocks(f.chain.id(), f.chain.kind(),
                                                     f.chain.access_list(), blocks)));
    blocks = f.chain.blocks();
    std::get<TrainingPayload>(blocks[k].payload).model_digest[3] ^= 0x10;
    EXPECT_FALSE(verify_anchor(a, Chain::from_blocks(f.chain.id(), f.chain.kind(),
                                                     f.chain.access_list(), blocks)));
  }
}

struct Market : Fixture {
  Chain main;
  Chain trading;
  Market() {
    auth.register_identity("pub", Role::kPublisher);
    auth.register_identity("buyer", Role::kBuyer);
    auth.register_identity("outsider", Role::kBuyer);
    main = Chain::create("main", ChainKind::kMain, {}, AnchorPayload{}, auth, "rec", 0);
    trading = Chain::create("trading", ChainKind::kTrading, {"pub", "buyer"}, TradePayload{},
                            auth, "rec", 0);
  }
  TradeRecord trade(const Digest& model, const std::string& buyer) {
    TradeRecord t{"pub", buyer, model, 1000, 50, {}, {}};
    t.seller_signature = auth.sign("pub", t.signing_bytes());
    t.buyer_signature = auth.sign(buyer, t.signing_bytes());
    return t;
  }
};

TEST(Trade, AnchoredSetOracle) {
  Market m;
  m.grow(5);
  anchor_to_main(m.chain, m.main, 5, m.auth, "rec", 60);
  m.grow(1);  // height 6 is not anchored yet
  const Chain* chains[] = {&m.chain};
  const auto anchored = std::get<TrainingPayload>(m.chain.blocks()[3].payload).model_digest;
  const auto fresh = std::get<TrainingPayload>(m.chain.blocks()[6].payload).model_digest;

  record_trade(m.trade(anchored, "buyer"), m.trading, m.main, chains, m.auth, "rec", 70);
  EXPECT_EQ(trades_for_model(m.trading, anchored).size(), 1u);
  EXPECT_THROW(record_trade(m.trade(fresh, "buyer"), m.trading, m.main, chains, m.auth, "rec", 80),
               ProtocolError);
  EXPECT_THROW(record_trade(m.trade(sha256("never"), "buyer"), m.trading, m.main, chains, m.auth,
                            "rec", 80),
               ProtocolError);
  auto unsigned_trade = m.trade(anchored, "buyer");
  unsigned_trade.buyer_signature.clear();
  EXPECT_THROW(record_trade(unsigned_trade, m.trading, m.main, chains, m.auth, "rec", 80),
               ProtocolError);
  EXPECT_THROW(record_trade(m.trade(anchored, "outsider"), m.trading, m.main, chains, m.auth,
                            "rec", 80),
               ProtocolError);
  EXPECT_EQ(m.trading.length(), 2u);
  EXPECT_TRUE(validate_chain(m.trading, m.auth).ok);
}

TEST(Access, MatrixForTwoTasks) {
  Authority auth(2);
  auth.register_identity("rec", Role::kAuthority);
  std::vector<std::string> everyone;
  std::vector<std::set<std::string>> members(2);
  for (int t = 1; t <= 2; ++t) {
    const std::string p = "t" + std::to_string(t) + "-";
    for (int w = 0; w < 10; ++w) members[t - 1].insert(p + "worker-0" + std::to_string(w));
    for (int m = 0; m < 11; ++m) members[t - 1].insert(p + "miner-" + std::to_string(m));
    members[t - 1].insert(p + "publisher");
    for (const auto& id : members[t - 1]) everyone.push_back(id);
  }
  everyone.push_back("buyer-1");
  std::vector<Chain> chains;
  for (int t = 0; t < 2; ++t) {
    chains.push_back(Chain::create("training-" + std::to_string(t + 1), ChainKind::kTraining,
                                   members[t], TrainingPayload{}, auth, "rec", 0));
  }
  chains.push_back(Chain::create("trading", ChainKind::kTrading,
                                 {"t1-publisher", "t2-publisher", "buyer-1"}, TradePayload{},
                                 auth, "rec", 0));
  chains.push_back(Chain::create("main", ChainKind::kMain, {}, AnchorPayload{}, auth, "rec", 0));

  for (const auto& id : everyone) {
    const bool in1 = id.rfind("t1-", 0) == 0, in2 = id.rfind("t2-", 0) == 0;
    const bool trader = id == "t1-publisher" || id == "t2-publisher" || id == "buyer-1";
    EXPECT_EQ(check_access(chains[0], id), in1) << id;
    EXPECT_EQ(check_access(chains[1], id), in2) << id;
    EXPECT_EQ(check_access(chains[2], id), trader) << id;
    EXPECT_TRUE(check_access(chains[3], id)) << id;
  }
  EXPECT_TRUE(check_access(chains[3], "stranger"));
}

}  // namespace
}  // namespace bfel
