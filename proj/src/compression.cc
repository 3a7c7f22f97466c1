#include "bfel/compression.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "bfel/errors.h"

namespace bfel {

void CompressionConfig::validate() const {
  if (!(rho_percent > 0.0 && rho_percent <= 100.0)) {
    throw ConfigError("rho_percent must lie in (0, 100]");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (clip_norm && !(*clip_norm > 0.0)) throw ConfigError("clip_norm must be positive");
}

std::size_t CompressionConfig::selection_count(std::size_t dim) const {
  validate();
  const double x = rho_percent * static_cast<double>(dim) / 100.0;
  // Absorb representation error so that e.g. 0.3% of 10000 is 30, not 31.
  auto k = static_cast<std::size_t>(std::ceil(x - 1e-9 * std::max(1.0, x)));
  return std::clamp<std::size_t>(k, 1, dim);
}

SparseGradient::SparseGradient(std::uint32_t dim, std::uint32_t round,
                               std::vector<SparseEntry> entries)
    : dim_(dim), round_(round), entries_(std::move(entries)) {
  if (dim_ == 0) throw InputError("sparse gradient dim must be positive");
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& e = entries_[i];
    if (e.index >= dim_) throw InputError("sparse index out of range");
    if (i > 0 && e.index <= entries_[i - 1].index) {
      throw InputError("sparse indices must be strictly increasing");
    }
    if (!std::isfinite(e.value)) throw InputError("sparse values must be finite");
  }
}

SparseGradient SparseGradient::from_dense(const GradientVector& g, std::uint32_t round) {
  std::vector<SparseEntry> entries(g.dim());
  for (std::uint32_t i = 0; i < entries.size(); ++i) entries[i] = {i, g[i]};
  return SparseGradient(static_cast<std::uint32_t>(g.dim()), round, std::move(entries));
}

GradientVector SparseGradient::densify() const {
  std::vector<double> d(dim_, 0.0);
  for (const auto& e : entries_) d[e.index] = e.value;
  return GradientVector(std::move(d));
}

void SparseGradient::encode_to(ByteWriter& w) const {
  w.reserve_more(12 + 12 * entries_.size());
  w.u32(dim_);
  w.u32(round_);
  w.u32(static_cast<std::uint32_t>(entries_.size()));
  for (const auto& e : entries_) {
    w.u32(e.index);
    w.f64(e.value);
  }
}

Bytes SparseGradient::encode() const {
  ByteWriter w;
  encode_to(w);
  return std::move(w).take();
}

SparseGradient SparseGradient::decode_from(ByteReader& r) {
  const auto dim = r.u32();
  const auto round = r.u32();
  const auto count = r.u32();
  if (count > dim || r.remaining() < std::size_t{count} * kEntryBytes) {
    throw DecodeError("sparse gradient entry count exceeds payload");
  }
  std::vector<SparseEntry> entries(count);
  for (auto& e : entries) {
    e.index = r.u32();
    e.value = r.f64();
  }
  try {
    return SparseGradient(dim, round, std::move(entries));
  } catch (const InputError& err) {
    throw DecodeError(err.what());
  }
}

SparseGradient SparseGradient::decode(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  auto g = decode_from(r);
  r.expect_done();
  return g;
}

CompressorState CompressorState::fresh(std::size_t dim) {
  return {GradientVector(dim), GradientVector(dim), 0, false};
}

GradientVector clip_gradient(const GradientVector& g, double max_norm) {
  if (!(max_norm > 0.0)) throw InputError("clip norm must be positive");
  double sq = 0.0;
  for (double v : g.values()) {
    if (!std::isfinite(v)) throw InputError("non-finite gradient");
    sq += v * v;
  }
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return g;
  const double scale = max_norm / norm;
  std::vector<double> out(g.values().begin(), g.values().end());
  for (auto& v : out) v *= scale;
  return GradientVector(std::move(out));
}

CompressorState accumulate(CompressorState state, const GradientVector& g,
                           const CompressionConfig& cfg) {
  cfg.validate();
  if (g.dim() != state.momentum.dim() || g.dim() != state.residual.dim()) {
    throw ConfigError("gradient dimension does not match compressor state");
  }
  auto u = state.momentum.mutable_values();
  auto v = state.residual.mutable_values();
  auto gv = g.values();
  for (std::size_t i = 0; i < gv.size(); ++i) {
    u[i] = cfg.momentum * u[i] + gv[i];
    v[i] += u[i];
  }
  ++state.round;
  state.pending = true;
  return state;
}

SparsifyResult sparsify(CompressorState state, const CompressionConfig& cfg) {
  cfg.validate();
  if (!state.pending) throw InputError("sparsify requires a prior accumulate in this round");
  auto v = state.residual.mutable_values();
  auto u = state.momentum.mutable_values();
  const std::size_t dim = v.size();
  const std::size_t k = cfg.selection_count(dim);

  std::vector<std::uint32_t> order(dim);
  std::iota(order.begin(), order.end(), 0u);
  auto by_magnitude = [&](std::uint32_t a, std::uint32_t b) {
    const double ma = std::abs(v[a]), mb = std::abs(v[b]);
    return ma > mb || (ma == mb && a < b);
  };
  std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k - 1),
                   order.end(), by_magnitude);
  const double threshold = std::abs(v[order[k - 1]]);

  std::vector<SparseEntry> entries;
  entries.reserve(k);
  for (std::uint32_t i = 0; i < dim; ++i) {
    if (v[i] != 0.0 && std::abs(v[i]) >= threshold) {
      entries.push_back({i, v[i]});
      v[i] = 0.0;
      u[i] = 0.0;
    }
  }
  state.pending = false;
  SparseGradient update(static_cast<std::uint32_t>(dim), state.round, std::move(entries));
  return {std::move(update), std::move(state), threshold};
}

GradientVector aggregate_sparse(std::span<const SparseGradient> updates, std::uint32_t dim) {
  std::vector<double> sum(dim, 0.0);
  for (const auto& u : updates) {
    if (u.dim() != dim) throw InputError("sparse update dimension mismatch");
    if (u.round() != updates.front().round()) throw InputError("sparse update round mismatch");
    for (const auto& e : u.entries()) sum[e.index] += e.value;
  }
  return GradientVector(std::move(sum));
}

double compression_ratio(std::uint64_t entries, std::uint32_t dim, std::uint64_t rounds) {
  if (rounds == 0) throw InputError("rounds must be at least 1");
  if (entries == 0) return std::numeric_limits<double>::infinity();
  return static_cast<double>(dim) * static_cast<double>(rounds) / static_cast<double>(entries);
}

double compression_ratio(std::span<const SparseGradient> updates, std::uint32_t dim,
                         std::uint64_t rounds) {
  if (updates.empty()) throw InputError("compression_ratio needs at least one update");
  std::uint64_t entries = 0;
  for (const auto& u : updates) entries += u.size();
  return compression_ratio(entries, dim, rounds);
}

GradientCompressor::GradientCompressor(std::size_t dim, CompressionConfig cfg)
    : cfg_(cfg), state_(CompressorState::fresh(dim)) {
  cfg_.validate();
}

SparseGradient GradientCompressor::compress(const GradientVector& g) {
  const GradientVector& clipped = cfg_.clip_norm ? clip_gradient(g, *cfg_.clip_norm) : g;
  state_ = accumulate(std::move(state_), clipped, cfg_);
  auto result = sparsify(std::move(state_), cfg_);
  state_ = std::move(result.state);
  last_threshold_ = result.threshold;
  return std::move(result.update);
}

}  // namespace bfel
