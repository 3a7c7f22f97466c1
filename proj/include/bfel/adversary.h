#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bfel/compression.h"
#include "bfel/consensus.h"
#include "bfel/dataset.h"
#include "bfel/model.h"

namespace bfel {

enum class PoisonMode { kSignFlip, kGaussianNoise, kLabelFlip };
std::string to_string(PoisonMode mode);
PoisonMode poison_mode_from_string(const std::string& s);

struct AttackConfig {
  double poison_fraction = 0.0;
  PoisonMode poison_mode = PoisonMode::kSignFlip;
  // Sign-flip sends -scale * g. A scale of 1 is the plain flip.
  double poison_scale = 1.0;
  double noise_sigma = 0.0;
  double byzantine_fraction = 0.0;
  Directive byzantine_directive = Directive::kInvertVerdicts;

  void validate() const;
};

// floor(fraction * n), tolerant of representation error in `fraction`.
std::size_t fraction_count(double fraction, std::size_t n);

// floor(fraction * |ids|) ids chosen by a seeded permutation, returned in
// ascending order.
std::vector<std::string> select_nodes(std::span<const std::string> ids, double fraction,
                                      std::uint64_t seed);

// sign-flip: -scale * g. gaussian-noise: g + N(0, sigma^2) per coordinate,
// seeded. label-flip acts on the data, so the gradient is returned as is.
GradientVector poison_gradient(const GradientVector& g, PoisonMode mode, std::uint64_t seed,
                               double scale = 1.0, double sigma = 0.0);

// Same transform on an outgoing update: only the transmitted entries change,
// so the attacker's message keeps the honest size and sparsity pattern.
SparseGradient poison_update(const SparseGradient& u, PoisonMode mode, std::uint64_t seed,
                             double scale = 1.0, double sigma = 0.0);

// Cyclic label permutation y -> (y + 1) mod K.
Dataset flip_labels(const Dataset& data);

// Transmitted entries / (dim * rounds); `rounds` counts worker-round
// transmissions. Throws InputError on empty input or zero rounds.
double exposure_ratio(std::span<const SparseGradient> updates, std::uint32_t dim,
                      std::uint64_t rounds);
double exposure_ratio(std::uint64_t transmitted_entries, std::uint32_t dim, std::uint64_t rounds);

}  // namespace bfel
