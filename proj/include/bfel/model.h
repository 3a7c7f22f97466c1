#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bfel/dataset.h"
#include "bfel/digest.h"

namespace bfel {

// Flat real-valued vector with a fixed dimension. Tag distinguishes
// parameters from gradients at compile time.
template <typename Tag>
class FlatVector {
 public:
  FlatVector() = default;
  explicit FlatVector(std::size_t dim) : values_(dim, 0.0) {}
  // Throws InputError if any value is non-finite.
  explicit FlatVector(std::vector<double> values);

  std::size_t dim() const { return values_.size(); }
  std::span<const double> values() const { return values_; }
  std::span<double> mutable_values() { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }

  bool operator==(const FlatVector&) const = default;

 private:
  std::vector<double> values_;
};

struct ParamsTag {};
struct GradTag {};
using ModelParameters = FlatVector<ParamsTag>;
using GradientVector = FlatVector<GradTag>;

extern template class FlatVector<ParamsTag>;
extern template class FlatVector<GradTag>;

enum class ModelKind { kLogistic, kMlp };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& s);

struct ModelSpec {
  ModelKind kind = ModelKind::kMlp;
  std::size_t input_dim = 0;
  std::size_t hidden = 64;
  std::uint32_t num_classes = 0;
  // Standard deviation of the output-layer weights at init; biases start at 0.
  double output_init_std = 0.01;

  std::size_t param_count() const;
};

// Multinomial logistic regression or a one-hidden-layer tanh MLP with a
// softmax cross-entropy loss.
//
// Parameter layout (row-major):
//   logistic: W[classes x input], b[classes]
//   mlp:      W1[hidden x input], b1[hidden], W2[classes x hidden], b2[classes]
class ReferenceModel {
 public:
  explicit ReferenceModel(ModelSpec spec);

  const ModelSpec& spec() const { return spec_; }
  std::size_t param_count() const { return spec_.param_count(); }

  // First-layer weights ~ N(0, 1/input_dim), output weights
  // ~ N(0, output_init_std^2), biases zero.
  ModelParameters init(std::uint64_t seed) const;

  double loss(const ModelParameters& params, const Dataset& batch) const;
  double loss(const ModelParameters& params, const Dataset& data,
              std::span<const std::size_t> indices) const;

  GradientVector gradient(const ModelParameters& params, const Dataset& batch) const;
  GradientVector gradient(const ModelParameters& params, const Dataset& data,
                          std::span<const std::size_t> indices) const;

  // Argmax class, ties toward the smallest index.
  std::uint32_t predict(const ModelParameters& params, std::span<const double> x) const;
  double accuracy(const ModelParameters& params, const Dataset& test) const;

 private:
  void check(const ModelParameters& params, const Dataset& data) const;
  // Writes logits for x into `logits`; `hidden` receives the activations
  // when the model has a hidden layer.
  void forward(std::span<const double> params, std::span<const double> x,
               std::span<double> hidden, std::span<double> logits) const;

  ModelSpec spec_;
};

// params - eta * g, element-wise.
ModelParameters sgd_step(const ModelParameters& params, const GradientVector& g, double eta);

// SHA-256 over the canonical encoding (u32 dim, then f64 values).
Digest model_digest(const ModelParameters& params);
Bytes encode_parameters(const ModelParameters& params);

}  // namespace bfel
