#include "bfel/model.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bfel/bytes.h"
#include "bfel/errors.h"
#include "bfel/rng.h"

namespace bfel {

template <typename Tag>
FlatVector<Tag>::FlatVector(std::vector<double> values) : values_(std::move(values)) {
  for (double v : values_) {
    if (!std::isfinite(v)) throw InputError("non-finite value in vector");
  }
}

template class FlatVector<ParamsTag>;
template class FlatVector<GradTag>;

std::string to_string(ModelKind kind) {
  return kind == ModelKind::kLogistic ? "logistic" : "mlp";
}

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "logistic") return ModelKind::kLogistic;
  if (s == "mlp") return ModelKind::kMlp;
  throw ConfigError("unknown model kind: " + s);
}

std::size_t ModelSpec::param_count() const {
  if (kind == ModelKind::kLogistic) return num_classes * input_dim + num_classes;
  return hidden * input_dim + hidden + num_classes * hidden + num_classes;
}

ReferenceModel::ReferenceModel(ModelSpec spec) : spec_(spec) {
  if (spec_.input_dim == 0 || spec_.num_classes == 0) {
    throw ConfigError("model needs positive input_dim and num_classes");
  }
  if (!(spec_.output_init_std >= 0.0 && std::isfinite(spec_.output_init_std))) {
    throw ConfigError("output_init_std must be finite and >= 0");
  }
  if (spec_.kind == ModelKind::kMlp && spec_.hidden == 0) {
    throw ConfigError("mlp hidden width must be positive");
  }
}

ModelParameters ReferenceModel::init(std::uint64_t seed) const {
  std::vector<double> w(param_count(), 0.0);
  Rng rng(derive_seed(seed, {0x1417}));
  std::size_t off = 0;
  std::size_t width = spec_.input_dim;
  if (spec_.kind == ModelKind::kMlp) {
    const double sd = 1.0 / std::sqrt(static_cast<double>(spec_.input_dim));
    for (std::size_t i = 0; i < spec_.hidden * spec_.input_dim; ++i) w[i] = rng.normal(0.0, sd);
    off = spec_.hidden * spec_.input_dim + spec_.hidden;
    width = spec_.hidden;
  }
  if (spec_.output_init_std > 0.0) {
    for (std::size_t i = 0; i < spec_.num_classes * width; ++i) {
      w[off + i] = rng.normal(0.0, spec_.output_init_std);
    }
  }
  return ModelParameters(std::move(w));
}

void ReferenceModel::check(const ModelParameters& params, const Dataset& data) const {
  if (params.dim() != param_count()) throw ConfigError("parameter vector has wrong dimension");
  if (data.empty()) throw ConfigError("batch must be non-empty");
  if (data.dim() != spec_.input_dim) throw ConfigError("feature dimension mismatch");
  if (data.num_classes() != spec_.num_classes) throw ConfigError("class count mismatch");
}

namespace {

// Four independent partial sums let the compiler vectorize without
// reassociation flags; the order is fixed, so results stay reproducible.
double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

}  // namespace

void ReferenceModel::forward(std::span<const double> p, std::span<const double> x,
                             std::span<double> hidden, std::span<double> logits) const {
  const std::size_t in = spec_.input_dim;
  const std::size_t k = spec_.num_classes;
  std::span<const double> act = x;
  std::size_t width = in;
  std::size_t off = 0;
  if (spec_.kind == ModelKind::kMlp) {
    const std::size_t h = spec_.hidden;
    const double* w1 = p.data();
    const double* b1 = w1 + h * in;
    for (std::size_t j = 0; j < h; ++j) {
      const double* row = w1 + j * in;
      hidden[j] = std::tanh(b1[j] + dot(row, x.data(), in));
    }
    act = hidden;
    width = h;
    off = h * in + h;
  }
  const double* w = p.data() + off;
  const double* b = w + k * width;
  for (std::size_t c = 0; c < k; ++c) {
    const double* row = w + c * width;
    logits[c] = b[c] + dot(row, act.data(), width);
  }
}

namespace {

double log_sum_exp(std::span<const double> z) {
  const double mx = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - mx);
  return mx + std::log(s);
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

}  // namespace

double ReferenceModel::loss(const ModelParameters& params, const Dataset& batch) const {
  auto idx = all_indices(batch.size());
  return loss(params, batch, idx);
}

double ReferenceModel::loss(const ModelParameters& params, const Dataset& data,
                            std::span<const std::size_t> indices) const {
  check(params, data);
  if (indices.empty()) throw ConfigError("batch must be non-empty");
  std::vector<double> hidden(spec_.hidden), logits(spec_.num_classes);
  double total = 0.0;
  for (auto i : indices) {
    forward(params.values(), data.features(i), hidden, logits);
    total += std::max(0.0, log_sum_exp(logits) - logits[data.label(i)]);
  }
  return total / static_cast<double>(indices.size());
}

GradientVector ReferenceModel::gradient(const ModelParameters& params,
                                        const Dataset& batch) const {
  auto idx = all_indices(batch.size());
  return gradient(params, batch, idx);
}

GradientVector ReferenceModel::gradient(const ModelParameters& params, const Dataset& data,
                                        std::span<const std::size_t> indices) const {
  check(params, data);
  if (indices.empty()) throw ConfigError("batch must be non-empty");
  const std::size_t in = spec_.input_dim;
  const std::size_t k = spec_.num_classes;
  const bool mlp = spec_.kind == ModelKind::kMlp;
  const std::size_t h = mlp ? spec_.hidden : 0;
  const std::size_t width = mlp ? h : in;
  const std::size_t off = mlp ? h * in + h : 0;
  auto p = params.values();

  std::vector<double> grad(param_count(), 0.0);
  std::vector<double> hidden(h), logits(k), dz(k), dh(h);
  for (auto s : indices) {
    auto x = data.features(s);
    forward(p, x, hidden, logits);
    const double lse = log_sum_exp(logits);
    for (std::size_t c = 0; c < k; ++c) dz[c] = std::exp(logits[c] - lse);
    dz[data.label(s)] -= 1.0;

    std::span<const double> act = mlp ? std::span<const double>(hidden) : x;
    double* gw = grad.data() + off;
    double* gb = gw + k * width;
    for (std::size_t c = 0; c < k; ++c) {
      double* row = gw + c * width;
      for (std::size_t i = 0; i < width; ++i) row[i] += dz[c] * act[i];
      gb[c] += dz[c];
    }
    if (!mlp) continue;

    const double* w2 = p.data() + off;
    std::fill(dh.begin(), dh.end(), 0.0);
    for (std::size_t c = 0; c < k; ++c) {
      const double* row = w2 + c * h;
      for (std::size_t j = 0; j < h; ++j) dh[j] += row[j] * dz[c];
    }
    double* gw1 = grad.data();
    double* gb1 = gw1 + h * in;
    for (std::size_t j = 0; j < h; ++j) {
      const double d = dh[j] * (1.0 - hidden[j] * hidden[j]);
      if (d == 0.0) continue;
      double* row = gw1 + j * in;
      for (std::size_t i = 0; i < in; ++i) row[i] += d * x[i];
      gb1[j] += d;
    }
  }
  const double n = static_cast<double>(indices.size());
  for (auto& g : grad) g /= n;
  return GradientVector(std::move(grad));
}

std::uint32_t ReferenceModel::predict(const ModelParameters& params,
                                      std::span<const double> x) const {
  std::vector<double> hidden(spec_.hidden), logits(spec_.num_classes);
  forward(params.values(), x, hidden, logits);
  std::uint32_t best = 0;
  for (std::uint32_t c = 1; c < spec_.num_classes; ++c) {
    if (logits[c] > logits[best]) best = c;
  }
  return best;
}

double ReferenceModel::accuracy(const ModelParameters& params, const Dataset& test) const {
  check(params, test);
  std::vector<double> hidden(spec_.hidden), logits(spec_.num_classes);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    forward(params.values(), test.features(i), hidden, logits);
    std::uint32_t best = 0;
    for (std::uint32_t c = 1; c < spec_.num_classes; ++c) {
      if (logits[c] > logits[best]) best = c;
    }
    if (best == test.label(i)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

ModelParameters sgd_step(const ModelParameters& params, const GradientVector& g, double eta) {
  if (params.dim() != g.dim()) throw ConfigError("gradient dimension does not match model");
  if (!(eta > 0.0)) throw ConfigError("learning rate must be positive");
  std::vector<double> out(params.values().begin(), params.values().end());
  auto gv = g.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= eta * gv[i];
  return ModelParameters(std::move(out));
}

Bytes encode_parameters(const ModelParameters& params) {
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(params.dim()));
  for (double v : params.values()) w.f64(v);
  return std::move(w).take();
}

Digest model_digest(const ModelParameters& params) {
  return sha256(encode_parameters(params));
}

}  // namespace bfel
