#include "bfel/adversary.h"

#include <algorithm>
#include <cmath>

#include "bfel/errors.h"
#include "bfel/rng.h"

namespace bfel {

std::string to_string(PoisonMode mode) {
  switch (mode) {
    case PoisonMode::kSignFlip: return "sign-flip";
    case PoisonMode::kGaussianNoise: return "gaussian-noise";
    case PoisonMode::kLabelFlip: return "label-flip";
  }
  return "unknown";
}

PoisonMode poison_mode_from_string(const std::string& s) {
  if (s == "sign-flip") return PoisonMode::kSignFlip;
  if (s == "gaussian-noise") return PoisonMode::kGaussianNoise;
  if (s == "label-flip") return PoisonMode::kLabelFlip;
  throw ConfigError("unknown poison mode: " + s);
}

void AttackConfig::validate() const {
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!unit(poison_fraction)) throw ConfigError("poison_fraction must lie in [0, 1]");
  if (!unit(byzantine_fraction)) throw ConfigError("byzantine_fraction must lie in [0, 1]");
  if (!(poison_scale > 0.0) || !std::isfinite(poison_scale)) {
    throw ConfigError("poison_scale must be positive");
  }
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    throw ConfigError("noise_sigma must be >= 0");
  }
}

std::size_t fraction_count(double fraction, std::size_t n) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw InputError("fraction must lie in [0, 1]");
  return std::min(n, static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9)));
}

std::vector<std::string> select_nodes(std::span<const std::string> ids, double fraction,
                                      std::uint64_t seed) {
  const auto k = fraction_count(fraction, ids.size());
  const auto order = seeded_permutation(ids.size(), seed);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(ids[order[i]]);
  std::sort(out.begin(), out.end());
  return out;
}

GradientVector poison_gradient(const GradientVector& g, PoisonMode mode, std::uint64_t seed,
                               double scale, double sigma) {
  GradientVector out = g;
  auto v = out.mutable_values();
  switch (mode) {
    case PoisonMode::kSignFlip:
      for (auto& x : v) x = -scale * x;
      break;
    case PoisonMode::kGaussianNoise:
      if (sigma > 0.0) {
        Rng rng(seed);
        for (auto& x : v) x += rng.normal(0.0, sigma);
      }
      break;
    case PoisonMode::kLabelFlip:
      break;
  }
  return out;
}

SparseGradient poison_update(const SparseGradient& u, PoisonMode mode, std::uint64_t seed,
                             double scale, double sigma) {
  std::vector<SparseEntry> entries(u.entries().begin(), u.entries().end());
  std::vector<double> values(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) values[i] = entries[i].value;
  if (values.empty()) return u;
  const auto poisoned = poison_gradient(GradientVector(std::move(values)), mode, seed, scale, sigma);
  for (std::size_t i = 0; i < entries.size(); ++i) entries[i].value = poisoned[i];
  return SparseGradient(u.dim(), u.round(), std::move(entries));
}

Dataset flip_labels(const Dataset& data) {
  std::vector<std::uint32_t> labels(data.labels().begin(), data.labels().end());
  for (auto& y : labels) y = (y + 1) % data.num_classes();
  return data.with_labels(std::move(labels));
}

double exposure_ratio(std::uint64_t transmitted_entries, std::uint32_t dim, std::uint64_t rounds) {
  if (rounds == 0 || dim == 0) throw InputError("exposure needs dim >= 1 and rounds >= 1");
  return static_cast<double>(transmitted_entries) /
         (static_cast<double>(dim) * static_cast<double>(rounds));
}

double exposure_ratio(std::span<const SparseGradient> updates, std::uint32_t dim,
                      std::uint64_t rounds) {
  if (updates.empty()) throw InputError("exposure of an empty update sequence");
  std::uint64_t entries = 0;
  for (const auto& u : updates) {
    if (u.dim() != dim) throw ConfigError("update dimension mismatch");
    entries += u.size();
  }
  return exposure_ratio(entries, dim, rounds);
}

}  // namespace bfel
