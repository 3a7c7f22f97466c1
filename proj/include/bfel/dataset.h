#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace bfel {

// Labelled samples with a shared feature dimension, stored row-major.
class Dataset {
 public:
  Dataset() = default;
  // Throws ConfigError on empty input, ragged rows, or labels >= num_classes.
  Dataset(std::size_t dim, std::uint32_t num_classes, std::vector<double> features,
          std::vector<std::uint32_t> labels);

  std::size_t dim() const { return dim_; }
  std::uint32_t num_classes() const { return num_classes_; }
  std::size_t size() const { return labels_.size(); }
  bool empty() const { return labels_.empty(); }

  std::span<const double> features(std::size_t i) const {
    return {features_.data() + i * dim_, dim_};
  }
  std::uint32_t label(std::size_t i) const { return labels_[i]; }
  std::span<const std::uint32_t> labels() const { return labels_; }

  Dataset subset(std::span<const std::size_t> indices) const;
  // Same features, replacement labels.
  Dataset with_labels(std::vector<std::uint32_t> labels) const;

 private:
  std::size_t dim_ = 0;
  std::uint32_t num_classes_ = 0;
  std::vector<double> features_;
  std::vector<std::uint32_t> labels_;
};

struct BlobsSpec {
  std::size_t dim = 196;
  std::uint32_t num_classes = 10;
  std::size_t count = 10000;
  // Expected distance between class centres, in units of `noise`.
  double separation = 5.0;
  double noise = 1.0;
};

// Gaussian blobs: one isotropic cluster per class, labels balanced by
// round-robin assignment before shuffling.
Dataset make_blobs(const BlobsSpec& spec, std::uint64_t seed);

// CSV schema: header "dim,num_classes,count", then one row per sample with
// `dim` features followed by an integer label.
Dataset read_dataset_csv(const std::filesystem::path& path);
void write_dataset_csv(const std::filesystem::path& path, const Dataset& ds);

// Standard MNIST IDX files (big-endian u32 magic/counts). Pixels are scaled
// into [0, 1]. `limit` == 0 reads everything.
Dataset load_mnist_idx(const std::filesystem::path& images,
                       const std::filesystem::path& labels, std::size_t limit = 0);

struct TrainTestSplit {
  Dataset train;
  Dataset test;
};

TrainTestSplit split_train_test(const Dataset& ds, double train_fraction,
                                std::uint64_t seed);

// IID uniform partition into `parts` shards of (almost) equal size.
std::vector<Dataset> shard_iid(const Dataset& ds, std::size_t parts, std::uint64_t seed);

// Mini-batches drawn without replacement within an epoch; the order is a
// seeded shuffle regenerated at every epoch boundary. A trailing partial
// batch is dropped.
class BatchSampler {
 public:
  // Throws ConfigError if batch_size is 0 or exceeds dataset_size.
  BatchSampler(std::size_t dataset_size, std::size_t batch_size, std::uint64_t seed);

  std::vector<std::size_t> next();
  std::size_t epoch() const { return epoch_; }

 private:
  void reshuffle();

  std::size_t size_;
  std::size_t batch_;
  std::uint64_t seed_;
  std::size_t epoch_ = 0;
  std::size_t cursor_ = 0;
  std::vector<std::size_t> order_;
};

// Seeded Fisher-Yates shuffle of 0..n-1.
std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed);

}  // namespace bfel
