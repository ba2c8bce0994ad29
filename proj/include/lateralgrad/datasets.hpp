#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lateralgrad/bbox.hpp"
#include "lateralgrad/tensor.hpp"
#include "lateralgrad/training.hpp"

namespace lateralgrad {

/// An ingested dataset: raw [0,1] images plus labels, optional ground-truth
/// boxes and per-channel normalization statistics.
struct DatasetHandle {
  std::string kind;  // mnist_idx | cifar10_bin | synthetic_boxes
  LabeledData train;
  LabeledData test;
  std::vector<BBox> train_boxes;  // synthetic_boxes only
  std::vector<BBox> test_boxes;
  int64_t num_classes = 0;
  std::vector<double> mean;    // per channel, filled by compute_normalization
  std::vector<double> stddev;

  /// Per-channel mean/std over the training images. std floors at 1e-8.
  void compute_normalization();

  /// (0 - mean)/std and (1 - mean)/std per channel, the valid normalized range.
  std::vector<double> clip_min() const;
  std::vector<double> clip_max() const;
};

Tensor normalize_images(const Tensor& images, const std::vector<double>& mean,
                        const std::vector<double>& stddev);

// -- IDX (MNIST layout) -------------------------------------------------------

/// Reads big-endian IDX image/label pairs. Bytes scale to [0,1] (255 -> 1.0).
LabeledData load_idx_pair(const std::string& images_path, const std::string& labels_path);

/// MNIST directory layout: train-images-idx3-ubyte, train-labels-idx1-ubyte,
/// t10k-images-idx3-ubyte, t10k-labels-idx1-ubyte. Missing t10k files leave
/// the test split empty.
DatasetHandle load_mnist_idx(const std::string& dir);

void save_idx_images(const std::string& path, const Tensor& images);
void save_idx_labels(const std::string& path, const std::vector<int>& labels);

// -- CIFAR-10 binary ----------------------------------------------------------

/// 3073-byte records: 1 label byte + 3072 channel-major pixels.
LabeledData load_cifar10_bin(const std::vector<std::string>& files);

/// Directory layout data_batch_1..5.bin + test_batch.bin; loads whichever
/// files exist.
DatasetHandle load_cifar10_dir(const std::string& dir);

void save_cifar10_bin(const std::string& path, const LabeledData& data);

// -- synthetic ----------------------------------------------------------------

/// High-contrast shapes (square / disc / cross) on textured noise, 3x32x32,
/// with exact ground-truth boxes. Fully seeded. When fg_masks is non-null it
/// receives the per-image foreground raster the boxes were measured from.
DatasetHandle make_synthetic_boxes(int64_t n_train, int64_t n_test, uint64_t seed,
                                   std::vector<Tensor>* fg_masks = nullptr);

/// Learnable 10-class pattern images (class-specific stamp, jittered
/// position, noisy background), CIFAR-shaped 3x32x32 in [0,1].
LabeledData make_synthetic_patterns(int64_t n, int64_t num_classes, uint64_t seed);

}  // namespace lateralgrad
