#include "bfel/identity.h"

#include <json.hpp>

#include "bfel/digest.h"
#include "bfel/errors.h"
#include "bfel/rng.h"

namespace bfel {

std::string to_string(Role role) {
  switch (role) {
    case Role::kWorker: return "worker";
    case Role::kMiner: return "miner";
    case Role::kPublisher: return "publisher";
    case Role::kBuyer: return "buyer";
    case Role::kAuthority: return "authority";
  }
  return "unknown";
}

Role role_from_string(const std::string& s) {
  if (s == "worker") return Role::kWorker;
  if (s == "miner") return Role::kMiner;
  if (s == "publisher") return Role::kPublisher;
  if (s == "buyer") return Role::kBuyer;
  if (s == "authority") return Role::kAuthority;
  throw ConfigError("unknown role: " + s);
}

KeyPair KeyedHashScheme::generate(std::uint64_t seed) const {
  ByteWriter w;
  w.str("bfel-secret");
  w.u64(seed);
  Digest sk = sha256(w.bytes());
  Bytes secret(sk.begin(), sk.end());
  ByteWriter pw;
  pw.str("bfel-public");
  pw.raw(secret);
  Digest pk = sha256(pw.bytes());
  return {Bytes(pk.begin(), pk.end()), std::move(secret)};
}

Bytes KeyedHashScheme::sign(const KeyPair& keys, std::span<const std::uint8_t> message) const {
  Digest mac = hmac_sha256(keys.secret_key, message);
  return Bytes(mac.begin(), mac.end());
}

bool KeyedHashScheme::verify(const KeyPair& keys, std::span<const std::uint8_t> message,
                             std::span<const std::uint8_t> signature) const {
  Digest mac = hmac_sha256(keys.secret_key, message);
  return signature.size() == mac.size() && std::equal(mac.begin(), mac.end(), signature.begin());
}

Authority::Authority(std::uint64_t seed, std::shared_ptr<const SignatureScheme> scheme)
    : seed_(seed), scheme_(std::move(scheme)) {}

Identity Authority::register_identity(const std::string& entity_id, Role role) {
  if (entity_id.empty()) throw ProtocolError("entity id must be non-empty");
  if (entries_.count(entity_id) != 0) {
    throw ProtocolError("duplicate identity registration: " + entity_id);
  }
  KeyPair keys = scheme_->generate(derive_seed(seed_, {counter_++, sha256(entity_id)[0]}));
  Identity id{entity_id, keys.public_key, role};
  entries_.emplace(entity_id, Entry{id, std::move(keys)});
  return id;
}

bool Authority::is_registered(const std::string& entity_id) const {
  return entries_.count(entity_id) != 0;
}

const Identity& Authority::identity(const std::string& entity_id) const {
  auto it = entries_.find(entity_id);
  if (it == entries_.end()) throw ProtocolError("unknown entity: " + entity_id);
  return it->second.identity;
}

std::vector<Identity> Authority::identities() const {
  std::vector<Identity> out;
  for (const auto& [_, e] : entries_) out.push_back(e.identity);
  return out;
}

Bytes Authority::sign(const std::string& entity_id, std::span<const std::uint8_t> message) const {
  auto it = entries_.find(entity_id);
  if (it == entries_.end()) throw ProtocolError("unregistered signer: " + entity_id);
  return scheme_->sign(it->second.keys, message);
}

bool Authority::verify(const std::string& entity_id, std::span<const std::uint8_t> message,
                       std::span<const std::uint8_t> signature) const {
  auto it = entries_.find(entity_id);
  if (it == entries_.end()) return false;
  return scheme_->verify(it->second.keys, message, signature);
}

std::string Authority::to_json() const {
  nlohmann::ordered_json doc;
  doc["seed"] = seed_;
  doc["counter"] = counter_;
  auto& list = doc["identities"] = nlohmann::ordered_json::array();
  for (const auto& [id, e] : entries_) {
    list.push_back({{"entity_id", id},
                    {"role", to_string(e.identity.role)},
                    {"public_key", to_hex(e.keys.public_key)},
                    {"secret_key", to_hex(e.keys.secret_key)}});
  }
  return doc.dump(2);
}

Authority Authority::from_json(const std::string& text) {
  try {
    auto doc = nlohmann::json::parse(text);
    Authority a(doc.at("seed").get<std::uint64_t>());
    a.counter_ = doc.at("counter").get<std::uint64_t>();
    for (const auto& item : doc.at("identities")) {
      KeyPair keys{from_hex(item.at("public_key").get<std::string>()),
                   from_hex(item.at("secret_key").get<std::string>())};
      Identity id{item.at("entity_id").get<std::string>(), keys.public_key,
                  role_from_string(item.at("role").get<std::string>())};
      a.entries_.emplace(id.entity_id, Entry{id, std::move(keys)});
    }
    return a;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed authority file: ") + e.what());
  }
}

}  // namespace bfel
