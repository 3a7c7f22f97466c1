#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "bfel/bytes.h"
#include "bfel/model.h"

namespace bfel {

struct CompressionConfig {
  // Percentage of coordinates selected per round, in (0, 100].
  double rho_percent = 0.3;
  // Momentum factor m in [0, 1).
  double momentum = 0.9;
  // Local clipping bound on the raw per-round gradient; nullopt disables it.
  std::optional<double> clip_norm = 1.0;

  // Throws ConfigError when a field is out of range.
  void validate() const;
  // ceil(rho% * dim), clamped to [1, dim].
  std::size_t selection_count(std::size_t dim) const;
};

struct SparseEntry {
  std::uint32_t index = 0;
  double value = 0.0;

  bool operator==(const SparseEntry&) const = default;
};

// Index/value pairs with strictly increasing indices below `dim` and
// finite values.
class SparseGradient {
 public:
  // Throws InputError if the entry invariants do not hold.
  SparseGradient(std::uint32_t dim, std::uint32_t round, std::vector<SparseEntry> entries);

  std::uint32_t dim() const { return dim_; }
  std::uint32_t round() const { return round_; }
  std::span<const SparseEntry> entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  // Every coordinate, zeros included: the uncompressed wire form.
  static SparseGradient from_dense(const GradientVector& g, std::uint32_t round);

  GradientVector densify() const;

  // Wire layout: dim u32, round u32, count u32, then (index u32, value f64)
  // pairs, all little-endian.
  Bytes encode() const;
  void encode_to(ByteWriter& w) const;
  static SparseGradient decode(std::span<const std::uint8_t> bytes);
  static SparseGradient decode_from(ByteReader& r);
  static constexpr std::size_t kHeaderBytes = 12;
  static constexpr std::size_t kEntryBytes = 12;
  std::size_t encoded_size() const { return kHeaderBytes + kEntryBytes * entries_.size(); }

  bool operator==(const SparseGradient&) const = default;

 private:
  std::uint32_t dim_;
  std::uint32_t round_;
  std::vector<SparseEntry> entries_;
};

// Per-worker buffers: momentum u, residual v, and the number of
// accumulate calls so far.
struct CompressorState {
  GradientVector momentum;
  GradientVector residual;
  std::uint32_t round = 0;
  // Set by accumulate, cleared by sparsify.
  bool pending = false;

  static CompressorState fresh(std::size_t dim);
};

// Rescales g to norm max_norm when its L2 norm exceeds it.
GradientVector clip_gradient(const GradientVector& g, double max_norm);

// u <- m*u + g; v <- v + u; round <- round + 1.
CompressorState accumulate(CompressorState state, const GradientVector& g,
                           const CompressionConfig& cfg);

struct SparsifyResult {
  SparseGradient update;
  CompressorState state;
  // Magnitude of the residual coordinate ranked selection_count() by
  // descending |v| (ties by ascending index).
  double threshold;
};

// Emits every nonzero residual coordinate with |v_i| >= threshold and zeroes
// those coordinates in both buffers.
SparsifyResult sparsify(CompressorState state, const CompressionConfig& cfg);

// Dense scatter-add of the updates in the order given. All updates must
// share dim and round.
GradientVector aggregate_sparse(std::span<const SparseGradient> updates, std::uint32_t dim);

// (dim * rounds) / total transmitted entries. `rounds` counts the dense
// gradient transmissions the updates stand in for (one per worker-round).
double compression_ratio(std::span<const SparseGradient> updates, std::uint32_t dim,
                         std::uint64_t rounds);
double compression_ratio(std::uint64_t entries, std::uint32_t dim, std::uint64_t rounds);

// Per-worker driver for one round: clip, accumulate, sparsify.
class GradientCompressor {
 public:
  GradientCompressor(std::size_t dim, CompressionConfig cfg);

  SparseGradient compress(const GradientVector& g);
  const CompressorState& state() const { return state_; }
  const CompressionConfig& config() const { return cfg_; }
  double last_threshold() const { return last_threshold_; }

 private:
  CompressionConfig cfg_;
  CompressorState state_;
  double last_threshold_ = 0.0;
};

}  // namespace bfel
