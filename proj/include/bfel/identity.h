#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bfel/bytes.h"

namespace bfel {

enum class Role { kWorker, kMiner, kPublisher, kBuyer, kAuthority };

std::string to_string(Role role);
Role role_from_string(const std::string& s);

struct KeyPair {
  Bytes public_key;
  Bytes secret_key;
};

// Pluggable signature primitive.
class SignatureScheme {
 public:
  virtual ~SignatureScheme() = default;
  virtual KeyPair generate(std::uint64_t seed) const = 0;
  virtual Bytes sign(const KeyPair& keys, std::span<const std::uint8_t> message) const = 0;
  virtual bool verify(const KeyPair& keys, std::span<const std::uint8_t> message,
                      std::span<const std::uint8_t> signature) const = 0;
};

// Deterministic keyed-hash signatures: HMAC-SHA256 under a seeded secret.
// Verification goes through the authority, which escrows the secrets; this
// stands in for real public-key signatures inside the simulation.
class KeyedHashScheme final : public SignatureScheme {
 public:
  KeyPair generate(std::uint64_t seed) const override;
  Bytes sign(const KeyPair& keys, std::span<const std::uint8_t> message) const override;
  bool verify(const KeyPair& keys, std::span<const std::uint8_t> message,
              std::span<const std::uint8_t> signature) const override;
};

struct Identity {
  std::string entity_id;
  Bytes public_key;
  Role role = Role::kWorker;
};

// In-process identity registry and key manager. Messages from entities that
// are not registered here never verify.
class Authority {
 public:
  explicit Authority(std::uint64_t seed,
                     std::shared_ptr<const SignatureScheme> scheme =
                         std::make_shared<KeyedHashScheme>());

  // Throws ProtocolError on a duplicate id.
  Identity register_identity(const std::string& entity_id, Role role);
  bool is_registered(const std::string& entity_id) const;
  const Identity& identity(const std::string& entity_id) const;
  std::vector<Identity> identities() const;

  // Throws ProtocolError when the signer is not registered.
  Bytes sign(const std::string& entity_id, std::span<const std::uint8_t> message) const;
  bool verify(const std::string& entity_id, std::span<const std::uint8_t> message,
              std::span<const std::uint8_t> signature) const;

  // JSON document with every identity and its key material.
  std::string to_json() const;
  static Authority from_json(const std::string& text);

 private:
  struct Entry {
    Identity identity;
    KeyPair keys;
  };

  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
  std::shared_ptr<const SignatureScheme> scheme_;
  std::map<std::string, Entry> entries_;
};

}  // namespace bfel
