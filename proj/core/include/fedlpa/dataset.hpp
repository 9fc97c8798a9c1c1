#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fedlpa/linalg.hpp"

namespace fedlpa {

// N samples of d features with integer class labels.
class LabeledDataset {
 public:
  LabeledDataset() = default;
  // Validates: features.rows() == labels.size() >= 1, labels in [0, class_count),
  // features finite.
  LabeledDataset(Matrix features, std::vector<int> labels, int class_count);

  std::size_t size() const { return labels_.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(features_.cols()); }
  int class_count() const { return class_count_; }
  bool empty() const { return labels_.empty(); }

  const Matrix& features() const { return features_; }
  const std::vector<int>& labels() const { return labels_; }

  // Copies the listed rows, in the given order.
  LabeledDataset subset(std::span<const std::size_t> indices) const;

  std::vector<std::size_t> class_histogram() const;

 private:
  Matrix features_;
  std::vector<int> labels_;
  int class_count_ = 0;
};

// Reads an IDX image file (magic 0x00000803) and label file (0x00000801).
// Pixels are divided by 255. Throws FormatError with the offending byte offset
// on a bad magic number, truncated data, or an image/label count mismatch, and
// IoError if a file cannot be opened.
LabeledDataset load_idx(const std::filesystem::path& images_path,
                        const std::filesystem::path& labels_path, int class_count = 10);

// Raw IDX writers, the inverse of the loader (big-endian header).
void write_idx_images(const std::filesystem::path& path, std::span<const std::uint8_t> pixels,
                      std::uint32_t count, std::uint32_t rows, std::uint32_t cols);
void write_idx_labels(const std::filesystem::path& path, std::span<const std::uint8_t> labels);

enum class DatasetId { kMnist, kFashionMnist };

DatasetId parse_dataset_id(const std::string& name);
std::string dataset_name(DatasetId id);

struct TrainTestSplit {
  LabeledDataset train;
  LabeledDataset test;
};

// Loads <data_dir>/<mnist|fmnist>/{train,t10k}-{images-idx3,labels-idx1}-ubyte.
TrainTestSplit load_dataset(DatasetId id, const std::filesystem::path& data_dir);

}  // namespace fedlpa
