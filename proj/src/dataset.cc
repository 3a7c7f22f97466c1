#include "bfel/dataset.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "bfel/errors.h"
#include "bfel/rng.h"

namespace bfel {

Dataset::Dataset(std::size_t dim, std::uint32_t num_classes, std::vector<double> features,
                 std::vector<std::uint32_t> labels)
    : dim_(dim), num_classes_(num_classes), features_(std::move(features)),
      labels_(std::move(labels)) {
  if (labels_.empty()) throw ConfigError("dataset must be non-empty");
  if (dim_ == 0 || num_classes_ == 0) throw ConfigError("dataset dim and num_classes must be positive");
  if (features_.size() != dim_ * labels_.size()) {
    throw ConfigError("feature matrix does not match dim x count");
  }
  for (auto l : labels_) {
    if (l >= num_classes_) throw ConfigError("label out of range");
  }
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  std::vector<double> f;
  std::vector<std::uint32_t> l;
  f.reserve(indices.size() * dim_);
  l.reserve(indices.size());
  for (auto i : indices) {
    auto row = features(i);
    f.insert(f.end(), row.begin(), row.end());
    l.push_back(labels_[i]);
  }
  return Dataset(dim_, num_classes_, std::move(f), std::move(l));
}

Dataset Dataset::with_labels(std::vector<std::uint32_t> labels) const {
  return Dataset(dim_, num_classes_, features_, std::move(labels));
}

std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    std::swap(p[i - 1], p[rng.below(i)]);
  }
  return p;
}

Dataset make_blobs(const BlobsSpec& spec, std::uint64_t seed) {
  if (spec.dim == 0 || spec.num_classes == 0 || spec.count == 0) {
    throw ConfigError("blobs spec requires positive dim, classes and count");
  }
  Rng rng(derive_seed(seed, {0xb10b5}));
  std::vector<double> centres(spec.num_classes * spec.dim);
  // Expected centre-to-centre distance equals `separation` in any dimension.
  const double scale = spec.separation / std::sqrt(2.0 * static_cast<double>(spec.dim));
  for (auto& c : centres) c = rng.normal(0.0, scale);

  std::vector<double> features(spec.count * spec.dim);
  std::vector<std::uint32_t> labels(spec.count);
  auto order = seeded_permutation(spec.count, derive_seed(seed, {0x5eed}));
  for (std::size_t i = 0; i < spec.count; ++i) {
    const auto label = static_cast<std::uint32_t>(order[i] % spec.num_classes);
    labels[i] = label;
    for (std::size_t j = 0; j < spec.dim; ++j) {
      features[i * spec.dim + j] =
          centres[label * spec.dim + j] + rng.normal(0.0, spec.noise);
    }
  }
  return Dataset(spec.dim, spec.num_classes, std::move(features), std::move(labels));
}

Dataset read_dataset_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open dataset file: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("dataset file missing header");
  std::size_t dim = 0, count = 0;
  std::uint32_t classes = 0;
  {
    std::istringstream hs(line);
    char c1 = 0, c2 = 0;
    if (!(hs >> dim >> c1 >> classes >> c2 >> count) || c1 != ',' || c2 != ',') {
      throw ConfigError("dataset header must be 'dim,num_classes,count'");
    }
  }
  std::vector<double> features;
  std::vector<std::uint32_t> labels;
  features.reserve(dim * count);
  labels.reserve(count);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream rs(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(rs, cell, ',')) cells.push_back(cell);
    if (cells.size() != dim + 1) {
      throw ConfigError("dataset row has " + std::to_string(cells.size()) +
                        " cells, expected " + std::to_string(dim + 1));
    }
    try {
      for (std::size_t j = 0; j < dim; ++j) {
        double v = std::stod(cells[j]);
        if (!std::isfinite(v)) throw ConfigError("non-finite feature");
        features.push_back(v);
      }
      auto lab = std::stoll(cells[dim]);
      if (lab < 0) throw ConfigError("negative label");
      labels.push_back(static_cast<std::uint32_t>(lab));
    } catch (const std::logic_error&) {
      throw ConfigError("unparseable dataset row");
    }
  }
  if (labels.size() != count) throw ConfigError("dataset row count does not match header");
  return Dataset(dim, classes, std::move(features), std::move(labels));
}

void write_dataset_csv(const std::filesystem::path& path, const Dataset& ds) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write dataset file: " + path.string());
  out.precision(17);
  out << ds.dim() << ',' << ds.num_classes() << ',' << ds.size() << '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (double v : ds.features(i)) out << v << ',';
    out << ds.label(i) << '\n';
  }
}

namespace {

std::uint32_t read_be32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw ConfigError("truncated IDX file");
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) |
         (std::uint32_t{b[2]} << 8) | std::uint32_t{b[3]};
}

}  // namespace

Dataset load_mnist_idx(const std::filesystem::path& images,
                       const std::filesystem::path& labels, std::size_t limit) {
  std::ifstream img(images, std::ios::binary);
  std::ifstream lab(labels, std::ios::binary);
  if (!img || !lab) throw ConfigError("cannot open MNIST IDX files");
  if (read_be32(img) != 0x00000803) throw ConfigError("bad IDX image magic");
  if (read_be32(lab) != 0x00000801) throw ConfigError("bad IDX label magic");
  std::size_t n = read_be32(img);
  const std::size_t rows = read_be32(img);
  const std::size_t cols = read_be32(img);
  if (read_be32(lab) != n) throw ConfigError("IDX image/label counts differ");
  if (limit != 0) n = std::min(n, limit);
  const std::size_t dim = rows * cols;

  std::vector<double> features(n * dim);
  std::vector<std::uint32_t> ys(n);
  std::vector<unsigned char> row(dim);
  for (std::size_t i = 0; i < n; ++i) {
    if (!img.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(dim))) {
      throw ConfigError("truncated IDX image data");
    }
    for (std::size_t j = 0; j < dim; ++j) features[i * dim + j] = row[j] / 255.0;
    char y = 0;
    if (!lab.read(&y, 1)) throw ConfigError("truncated IDX label data");
    ys[i] = static_cast<unsigned char>(y);
  }
  return Dataset(dim, 10, std::move(features), std::move(ys));
}

TrainTestSplit split_train_test(const Dataset& ds, double train_fraction,
                                std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("train_fraction must lie in (0, 1)");
  }
  auto perm = seeded_permutation(ds.size(), seed);
  const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * ds.size()));
  if (n_train == 0 || n_train == ds.size()) throw ConfigError("split leaves an empty side");
  std::span<const std::size_t> all(perm);
  return {ds.subset(all.first(n_train)), ds.subset(all.subspan(n_train))};
}

std::vector<Dataset> shard_iid(const Dataset& ds, std::size_t parts, std::uint64_t seed) {
  if (parts == 0 || parts > ds.size()) throw ConfigError("invalid shard count");
  auto perm = seeded_permutation(ds.size(), seed);
  std::vector<Dataset> shards;
  shards.reserve(parts);
  std::size_t begin = 0;
  for (std::size_t k = 0; k < parts; ++k) {
    std::size_t len = ds.size() / parts + (k < ds.size() % parts ? 1 : 0);
    shards.push_back(ds.subset(std::span<const std::size_t>(perm).subspan(begin, len)));
    begin += len;
  }
  return shards;
}

BatchSampler::BatchSampler(std::size_t dataset_size, std::size_t batch_size,
                           std::uint64_t seed)
    : size_(dataset_size), batch_(batch_size), seed_(seed) {
  if (batch_ == 0) throw ConfigError("batch size must be at least 1");
  if (batch_ > size_) throw ConfigError("batch size exceeds dataset size");
  reshuffle();
}

void BatchSampler::reshuffle() {
  order_ = seeded_permutation(size_, derive_seed(seed_, {epoch_}));
  cursor_ = 0;
}

std::vector<std::size_t> BatchSampler::next() {
  if (cursor_ + batch_ > size_) {
    ++epoch_;
    reshuffle();
  }
  std::vector<std::size_t> out(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                               order_.begin() + static_cast<std::ptrdiff_t>(cursor_ + batch_));
  cursor_ += batch_;
  return out;
}

}  // namespace bfel
