#pragma once

#include <stdexcept>
#include <string>

namespace bfel {

/// Invalid configuration or incompatible dimensions.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input values (non-finite numbers, out-of-range arguments).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bytes that do not decode under the canonical encoding.
class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A participant broke a protocol rule (wrong leader, bad signature, ...).
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The federation can no longer make progress (e.g. empty committee).
class FederationHalt : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace bfel
