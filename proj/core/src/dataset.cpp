#include "fedlpa/dataset.hpp"

#include <array>
#include <fstream>
#include <iterator>

#include "fedlpa/errors.hpp"

namespace fedlpa {

LabeledDataset::LabeledDataset(Matrix features, std::vector<int> labels, int class_count)
    : features_(std::move(features)), labels_(std::move(labels)), class_count_(class_count) {
  if (labels_.empty()) throw InputError("dataset must contain at least one sample");
  if (class_count_ < 1) throw InputError("dataset needs at least one class");
  if (static_cast<std::size_t>(features_.rows()) != labels_.size()) {
    throw DimensionError("dataset: " + std::to_string(features_.rows()) + " feature rows vs " +
                         std::to_string(labels_.size()) + " labels");
  }
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] < 0 || labels_[i] >= class_count_) {
      throw InputError("dataset: label " + std::to_string(labels_[i]) + " at sample " +
                       std::to_string(i) + " outside [0, " + std::to_string(class_count_) +
                       ")");
    }
  }
  require_finite(features_, "dataset features");
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
  Matrix f(static_cast<Eigen::Index>(indices.size()), features_.cols());
  std::vector<int> l(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= size()) {
      throw InputError("subset index " + std::to_string(indices[r]) + " out of range");
    }
    f.row(static_cast<Eigen::Index>(r)) = features_.row(static_cast<Eigen::Index>(indices[r]));
    l[r] = labels_[indices[r]];
  }
  return LabeledDataset(std::move(f), std::move(l), class_count_);
}

std::vector<std::size_t> LabeledDataset::class_histogram() const {
  std::vector<std::size_t> h(static_cast<std::size_t>(class_count_), 0);
  for (int y : labels_) ++h[static_cast<std::size_t>(y)];
  return h;
}

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::vector<std::uint8_t> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open", path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t offset,
                        const std::string& file) {
  if (offset + 4 > bytes.size()) {
    throw FormatError(file + ": truncated header", bytes.size());
  }
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void put_be32(std::ofstream& out, std::uint32_t v) {
  const std::array<char, 4> b = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                                 static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(b.data(), b.size());
}

}  // namespace

LabeledDataset load_idx(const std::filesystem::path& images_path,
                        const std::filesystem::path& labels_path, int class_count) {
  const std::string image_file = images_path.filename().string();
  const std::string label_file = labels_path.filename().string();
  const auto images = read_all(images_path);
  const auto labels = read_all(labels_path);

  if (read_be32(images, 0, image_file) != kImageMagic) {
    throw FormatError(image_file + ": bad magic, expected 0x00000803", 0);
  }
  if (read_be32(labels, 0, label_file) != kLabelMagic) {
    throw FormatError(label_file + ": bad magic, expected 0x00000801", 0);
  }
  const std::uint32_t n_images = read_be32(images, 4, image_file);
  const std::uint32_t rows = read_be32(images, 8, image_file);
  const std::uint32_t cols = read_be32(images, 12, image_file);
  const std::uint32_t n_labels = read_be32(labels, 4, label_file);
  if (n_images != n_labels) {
    throw FormatError(label_file + ": " + std::to_string(n_labels) + " labels vs " +
                          std::to_string(n_images) + " images",
                      4);
  }
  const std::size_t pixels = std::size_t{rows} * cols;
  const std::size_t need_images = 16 + std::size_t{n_images} * pixels;
  if (images.size() < need_images) {
    throw FormatError(image_file + ": truncated pixel data, need " +
                          std::to_string(need_images) + " bytes",
                      images.size());
  }
  if (labels.size() < 8 + std::size_t{n_labels}) {
    throw FormatError(label_file + ": truncated label data", labels.size());
  }

  Matrix features(static_cast<Eigen::Index>(n_images), static_cast<Eigen::Index>(pixels));
  const std::uint8_t* src = images.data() + 16;
  for (Eigen::Index i = 0; i < features.size(); ++i) {
    features.data()[i] = static_cast<double>(src[i]) / 255.0;
  }
  std::vector<int> y(n_labels);
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = labels[8 + i];
    if (y[i] >= class_count) {
      throw FormatError(label_file + ": label " + std::to_string(y[i]) + " >= class count",
                        8 + i);
    }
  }
  return LabeledDataset(std::move(features), std::move(y), class_count);
}

void write_idx_images(const std::filesystem::path& path, std::span<const std::uint8_t> pixels,
                      std::uint32_t count, std::uint32_t rows, std::uint32_t cols) {
  if (pixels.size() != std::size_t{count} * rows * cols) {
    throw DimensionError("write_idx_images: pixel buffer does not match count*rows*cols");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write", path.string());
  put_be32(out, kImageMagic);
  put_be32(out, count);
  put_be32(out, rows);
  put_be32(out, cols);
  out.write(reinterpret_cast<const char*>(pixels.data()),
            static_cast<std::streamsize>(pixels.size()));
  if (!out) throw IoError("write failed", path.string());
}

void write_idx_labels(const std::filesystem::path& path, std::span<const std::uint8_t> labels) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write", path.string());
  put_be32(out, kLabelMagic);
  put_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.write(reinterpret_cast<const char*>(labels.data()),
            static_cast<std::streamsize>(labels.size()));
  if (!out) throw IoError("write failed", path.string());
}

DatasetId parse_dataset_id(const std::string& name) {
  if (name == "mnist") return DatasetId::kMnist;
  if (name == "fmnist") return DatasetId::kFashionMnist;
  throw InputError("unknown dataset '" + name + "' (expected mnist or fmnist)");
}

std::string dataset_name(DatasetId id) {
  return id == DatasetId::kMnist ? "mnist" : "fmnist";
}

TrainTestSplit load_dataset(DatasetId id, const std::filesystem::path& data_dir) {
  const auto dir = data_dir / dataset_name(id);
  return {load_idx(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte"),
          load_idx(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte")};
}

}  // namespace fedlpa
