#include "bfel/records.h"

#include "bfel/errors.h"

namespace bfel {

namespace {

void write_digest(ByteWriter& w, const Digest& d) { w.raw(d); }

Digest read_digest(ByteReader& r) {
  auto s = r.raw(32);
  Digest d;
  std::copy(s.begin(), s.end(), d.begin());
  return d;
}

}  // namespace

Bytes LocalUpdate::signing_bytes() const {
  ByteWriter w;
  w.str("bfel/local-update");
  w.str(worker_id);
  w.u32(round);
  gradient.encode_to(w);
  w.i64(timestamp_ms);
  return std::move(w).take();
}

void LocalUpdate::encode_to(ByteWriter& w) const {
  w.str(worker_id);
  w.u32(round);
  gradient.encode_to(w);
  w.i64(timestamp_ms);
  w.blob(signature);
}

LocalUpdate LocalUpdate::decode_from(ByteReader& r) {
  LocalUpdate u;
  u.worker_id = r.str();
  u.round = r.u32();
  u.gradient = SparseGradient::decode_from(r);
  u.timestamp_ms = r.i64();
  u.signature = r.blob();
  return u;
}

Bytes LocalUpdate::encode() const {
  ByteWriter w;
  encode_to(w);
  return std::move(w).take();
}

LocalUpdate LocalUpdate::decode(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  auto u = decode_from(r);
  r.expect_done();
  return u;
}

namespace {

void write_response_body(ByteWriter& w, const VerifierResponse& v) {
  w.str(v.verifier_id);
  w.u32(v.round);
  w.u32(v.attempt);
  w.u32(static_cast<std::uint32_t>(v.qualified.size()));
  for (const auto& q : v.qualified) w.str(q);
  w.u32(static_cast<std::uint32_t>(v.comparison.size()));
  for (const auto& c : v.comparison) {
    w.str(c.peer_id);
    w.boolean(c.agree);
  }
  w.i64(v.timestamp_ms);
}

}  // namespace

Bytes VerifierResponse::signing_bytes() const {
  ByteWriter w;
  w.str("bfel/verifier-response");
  write_response_body(w, *this);
  return std::move(w).take();
}

void VerifierResponse::encode_to(ByteWriter& w) const {
  write_response_body(w, *this);
  w.blob(signature);
}

VerifierResponse VerifierResponse::decode_from(ByteReader& r) {
  VerifierResponse v;
  v.verifier_id = r.str();
  v.round = r.u32();
  v.attempt = r.u32();
  auto nq = r.u32();
  if (nq > r.remaining() / 4) throw DecodeError("qualified set count exceeds payload");
  for (std::uint32_t i = 0; i < nq; ++i) v.qualified.push_back(r.str());
  for (std::size_t i = 1; i < v.qualified.size(); ++i) {
    if (v.qualified[i] <= v.qualified[i - 1]) throw DecodeError("qualified set not sorted/unique");
  }
  auto nc = r.u32();
  if (nc > r.remaining() / 5) throw DecodeError("comparison count exceeds payload");
  for (std::uint32_t i = 0; i < nc; ++i) {
    PeerComparison c;
    c.peer_id = r.str();
    c.agree = r.boolean();
    v.comparison.push_back(std::move(c));
  }
  v.timestamp_ms = r.i64();
  v.signature = r.blob();
  return v;
}

Bytes VerifierResponse::encode() const {
  ByteWriter w;
  encode_to(w);
  return std::move(w).take();
}

VerifierResponse VerifierResponse::decode(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  auto v = decode_from(r);
  r.expect_done();
  return v;
}

std::string to_string(SlashReason reason) {
  switch (reason) {
    case SlashReason::kFalseVerification: return "false-verification";
    case SlashReason::kInvalidProposal: return "invalid-proposal";
    case SlashReason::kEquivocation: return "equivocation";
  }
  return "unknown";
}

Bytes TradeRecord::signing_bytes() const {
  ByteWriter w;
  w.str("bfel/trade");
  w.str(seller_id);
  w.str(buyer_id);
  write_digest(w, model_digest);
  w.u64(price);
  w.i64(timestamp_ms);
  return std::move(w).take();
}

void TradeRecord::encode_to(ByteWriter& w) const {
  w.str(seller_id);
  w.str(buyer_id);
  write_digest(w, model_digest);
  w.u64(price);
  w.i64(timestamp_ms);
  w.blob(seller_signature);
  w.blob(buyer_signature);
}

TradeRecord TradeRecord::decode_from(ByteReader& r) {
  TradeRecord t;
  t.seller_id = r.str();
  t.buyer_id = r.str();
  t.model_digest = read_digest(r);
  t.price = r.u64();
  t.timestamp_ms = r.i64();
  t.seller_signature = r.blob();
  t.buyer_signature = r.blob();
  return t;
}

void AnchorRecord::encode_to(ByteWriter& w) const {
  w.str(subchain_id);
  w.u64(from_height);
  w.u64(to_height);
  write_digest(w, anchored_root);
  w.str(locator);
}

AnchorRecord AnchorRecord::decode_from(ByteReader& r) {
  AnchorRecord a;
  a.subchain_id = r.str();
  a.from_height = r.u64();
  a.to_height = r.u64();
  a.anchored_root = read_digest(r);
  a.locator = r.str();
  if (a.to_height < a.from_height) throw DecodeError("anchor range is inverted");
  return a;
}

Bytes BlockVote::signing_bytes() const {
  ByteWriter w;
  w.str("bfel/block-vote");
  w.str(voter_id);
  w.u32(round);
  w.u32(attempt);
  write_digest(w, block_hash);
  w.boolean(approve);
  return std::move(w).take();
}

Bytes BlockVote::encode() const {
  ByteWriter w;
  w.str(voter_id);
  w.u32(round);
  w.u32(attempt);
  write_digest(w, block_hash);
  w.boolean(approve);
  w.blob(signature);
  return std::move(w).take();
}

BlockVote BlockVote::decode(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  BlockVote v;
  v.voter_id = r.str();
  v.round = r.u32();
  v.attempt = r.u32();
  v.block_hash = read_digest(r);
  v.approve = r.boolean();
  v.signature = r.blob();
  r.expect_done();
  return v;
}

Bytes GlobalUpdate::encode() const {
  ByteWriter w;
  w.u32(round);
  w.u64(height);
  w.u32(qualified);
  w.i64(next_round_start_ms);
  average.encode_to(w);
  return std::move(w).take();
}

GlobalUpdate GlobalUpdate::decode(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  GlobalUpdate g;
  g.round = r.u32();
  g.height = r.u64();
  g.qualified = r.u32();
  g.next_round_start_ms = r.i64();
  g.average = SparseGradient::decode_from(r);
  r.expect_done();
  return g;
}

}  // namespace bfel
