#include "lateralgrad/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "lateralgrad/errors.hpp"
#include "lateralgrad/rng.hpp"

namespace lateralgrad {

namespace {

constexpr uint32_t kIdxImagesMagic = 0x00000803;
constexpr uint32_t kIdxLabelsMagic = 0x00000801;
constexpr size_t kCifarRecord = 3073;

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  f.seekg(0, std::ios::end);
  const auto size = static_cast<size_t>(f.tellg());
  f.seekg(0);
  std::vector<uint8_t> bytes(size);
  if (size > 0) f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
  if (!f) throw IoError("short read from " + path);
  return bytes;
}

void write_file(const std::string& path, const std::vector<uint8_t>& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + tmp + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

uint32_t read_be32(const std::vector<uint8_t>& b, size_t offset, const std::string& path) {
  if (offset + 4 > b.size())
    throw FormatError(path + ": truncated while reading a 32-bit field", offset);
  return (static_cast<uint32_t>(b[offset]) << 24) | (static_cast<uint32_t>(b[offset + 1]) << 16) |
         (static_cast<uint32_t>(b[offset + 2]) << 8) | static_cast<uint32_t>(b[offset + 3]);
}

void push_be32(std::vector<uint8_t>& b, uint32_t v) {
  b.push_back(static_cast<uint8_t>(v >> 24));
  b.push_back(static_cast<uint8_t>(v >> 16));
  b.push_back(static_cast<uint8_t>(v >> 8));
  b.push_back(static_cast<uint8_t>(v));
}

}  // namespace

void DatasetHandle::compute_normalization() {
  const Tensor& imgs = train.images;
  const int64_t N = imgs.dim(0), C = imgs.dim(1), HW = imgs.dim(2) * imgs.dim(3);
  mean.assign(static_cast<size_t>(C), 0.0);
  stddev.assign(static_cast<size_t>(C), 1.0);
  for (int64_t c = 0; c < C; ++c) {
    double s = 0.0;
    for (int64_t b = 0; b < N; ++b) {
      const double* p = imgs.data() + (b * C + c) * HW;
      for (int64_t i = 0; i < HW; ++i) s += p[i];
    }
    const double m = s / static_cast<double>(N * HW);
    double v = 0.0;
    for (int64_t b = 0; b < N; ++b) {
      const double* p = imgs.data() + (b * C + c) * HW;
      for (int64_t i = 0; i < HW; ++i) v += (p[i] - m) * (p[i] - m);
    }
    mean[static_cast<size_t>(c)] = m;
    stddev[static_cast<size_t>(c)] =
        std::max(std::sqrt(v / static_cast<double>(N * HW)), 1e-8);
  }
}

std::vector<double> DatasetHandle::clip_min() const {
  std::vector<double> out(mean.size());
  for (size_t c = 0; c < mean.size(); ++c) out[c] = (0.0 - mean[c]) / stddev[c];
  return out;
}

std::vector<double> DatasetHandle::clip_max() const {
  std::vector<double> out(mean.size());
  for (size_t c = 0; c < mean.size(); ++c) out[c] = (1.0 - mean[c]) / stddev[c];
  return out;
}

Tensor normalize_images(const Tensor& images, const std::vector<double>& mean,
                        const std::vector<double>& stddev) {
  const int64_t N = images.dim(0), C = images.dim(1), HW = images.dim(2) * images.dim(3);
  if (static_cast<int64_t>(mean.size()) != C || static_cast<int64_t>(stddev.size()) != C)
    throw ConfigError("normalization stats do not match channel count");
  Tensor out = images;
  for (int64_t b = 0; b < N; ++b)
    for (int64_t c = 0; c < C; ++c) {
      double* p = out.data() + (b * C + c) * HW;
      const double m = mean[static_cast<size_t>(c)], s = stddev[static_cast<size_t>(c)];
      for (int64_t i = 0; i < HW; ++i) p[i] = (p[i] - m) / s;
    }
  return out;
}

LabeledData load_idx_pair(const std::string& images_path, const std::string& labels_path) {
  const std::vector<uint8_t> ib = read_file(images_path);
  if (read_be32(ib, 0, images_path) != kIdxImagesMagic)
    throw FormatError(images_path + ": bad IDX image magic", 0);
  const uint32_t n = read_be32(ib, 4, images_path);
  const uint32_t rows = read_be32(ib, 8, images_path);
  const uint32_t cols = read_be32(ib, 12, images_path);
  const size_t need = 16 + static_cast<size_t>(n) * rows * cols;
  if (ib.size() < need)
    throw FormatError(images_path + ": truncated image payload, expected " +
                          std::to_string(need) + " bytes",
                      ib.size() < 16 ? ib.size() : 16);

  const std::vector<uint8_t> lb = read_file(labels_path);
  if (read_be32(lb, 0, labels_path) != kIdxLabelsMagic)
    throw FormatError(labels_path + ": bad IDX label magic", 0);
  const uint32_t ln = read_be32(lb, 4, labels_path);
  if (ln != n)
    throw FormatError(labels_path + ": label count " + std::to_string(ln) +
                          " does not match image count " + std::to_string(n),
                      4);
  if (lb.size() < 8 + static_cast<size_t>(ln))
    throw FormatError(labels_path + ": truncated label payload", lb.size());

  LabeledData data;
  data.images = Tensor({static_cast<int64_t>(n), 1, static_cast<int64_t>(rows),
                        static_cast<int64_t>(cols)});
  for (int64_t i = 0; i < data.images.numel(); ++i)
    data.images[i] = static_cast<double>(ib[16 + static_cast<size_t>(i)]) / 255.0;
  data.labels.resize(n);
  for (uint32_t i = 0; i < n; ++i) data.labels[i] = static_cast<int>(lb[8 + i]);
  return data;
}

DatasetHandle load_mnist_idx(const std::string& dir) {
  namespace fs = std::filesystem;
  DatasetHandle h;
  h.kind = "mnist_idx";
  h.num_classes = 10;
  h.train = load_idx_pair((fs::path(dir) / "train-images-idx3-ubyte").string(),
                          (fs::path(dir) / "train-labels-idx1-ubyte").string());
  const fs::path ti = fs::path(dir) / "t10k-images-idx3-ubyte";
  const fs::path tl = fs::path(dir) / "t10k-labels-idx1-ubyte";
  if (fs::exists(ti) && fs::exists(tl)) h.test = load_idx_pair(ti.string(), tl.string());
  return h;
}

void save_idx_images(const std::string& path, const Tensor& images) {
  const int64_t N = images.dim(0), H = images.dim(2), W = images.dim(3);
  if (images.dim(1) != 1) throw UsageError("IDX images are single-channel");
  std::vector<uint8_t> b;
  b.reserve(16 + static_cast<size_t>(N * H * W));
  push_be32(b, kIdxImagesMagic);
  push_be32(b, static_cast<uint32_t>(N));
  push_be32(b, static_cast<uint32_t>(H));
  push_be32(b, static_cast<uint32_t>(W));
  for (int64_t i = 0; i < images.numel(); ++i)
    b.push_back(static_cast<uint8_t>(std::lround(std::clamp(images[i], 0.0, 1.0) * 255.0)));
  write_file(path, b);
}

void save_idx_labels(const std::string& path, const std::vector<int>& labels) {
  std::vector<uint8_t> b;
  b.reserve(8 + labels.size());
  push_be32(b, kIdxLabelsMagic);
  push_be32(b, static_cast<uint32_t>(labels.size()));
  for (int v : labels) b.push_back(static_cast<uint8_t>(v));
  write_file(path, b);
}

LabeledData load_cifar10_bin(const std::vector<std::string>& files) {
  std::vector<uint8_t> all;
  for (const std::string& path : files) {
    std::vector<uint8_t> b = read_file(path);
    if (b.empty()) throw FormatError(path + ": empty dataset file", 0);
    if (b.size() % kCifarRecord != 0)
      throw FormatError(path + ": size " + std::to_string(b.size()) +
                            " is not a multiple of the 3073-byte record",
                        b.size() - b.size() % kCifarRecord);
    all.insert(all.end(), b.begin(), b.end());
  }
  if (all.empty()) throw FormatError("no CIFAR-10 records found", 0);
  const int64_t n = static_cast<int64_t>(all.size() / kCifarRecord);
  LabeledData data;
  data.images = Tensor({n, 3, 32, 32});
  data.labels.resize(static_cast<size_t>(n));
  for (int64_t r = 0; r < n; ++r) {
    const uint8_t* rec = all.data() + static_cast<size_t>(r) * kCifarRecord;
    data.labels[static_cast<size_t>(r)] = static_cast<int>(rec[0]);
    double* img = data.images.data() + r * 3 * 32 * 32;
    for (int64_t i = 0; i < 3 * 32 * 32; ++i)
      img[i] = static_cast<double>(rec[1 + i]) / 255.0;
  }
  return data;
}

DatasetHandle load_cifar10_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  DatasetHandle h;
  h.kind = "cifar10_bin";
  h.num_classes = 10;
  std::vector<std::string> train_files;
  for (int i = 1; i <= 5; ++i) {
    const fs::path p = fs::path(dir) / ("data_batch_" + std::to_string(i) + ".bin");
    if (fs::exists(p)) train_files.push_back(p.string());
  }
  if (train_files.empty()) throw IoError("no data_batch_*.bin files under " + dir);
  h.train = load_cifar10_bin(train_files);
  const fs::path t = fs::path(dir) / "test_batch.bin";
  if (fs::exists(t)) h.test = load_cifar10_bin({t.string()});
  return h;
}

void save_cifar10_bin(const std::string& path, const LabeledData& data) {
  const int64_t n = data.size();
  if (data.images.dim(1) != 3 || data.images.dim(2) != 32 || data.images.dim(3) != 32)
    throw UsageError("CIFAR-10 records are 3x32x32");
  std::vector<uint8_t> b;
  b.reserve(static_cast<size_t>(n) * kCifarRecord);
  for (int64_t r = 0; r < n; ++r) {
    b.push_back(static_cast<uint8_t>(data.labels[static_cast<size_t>(r)]));
    const double* img = data.images.data() + r * 3 * 32 * 32;
    for (int64_t i = 0; i < 3 * 32 * 32; ++i)
      b.push_back(static_cast<uint8_t>(std::lround(std::clamp(img[i], 0.0, 1.0) * 255.0)));
  }
  write_file(path, b);
}

namespace {

constexpr int64_t kBoxImage = 32;

struct ShapeDraw {
  int label;
  BBox box;
};

// Draws one shape (0 square, 1 disc, 2 cross) with a bright class-dependent
// color onto a noisy background; the reported box is measured from the
// pixels actually painted.
ShapeDraw draw_shape(Tensor& image, Tensor* fg_mask, Rng& rng) {
  const int64_t H = kBoxImage, W = kBoxImage;
  const int label = static_cast<int>(rng.below(3));
  const int64_t size = 8 + rng.below(9);             // 8..16
  const int64_t cy = rng.below(H - size);
  const int64_t cx = rng.below(W - size);
  const double color[3] = {label == 0 ? 1.0 : 0.15, label == 1 ? 1.0 : 0.15,
                           label == 2 ? 1.0 : 0.15};

  int64_t x_min = W, y_min = H, x_max = 0, y_max = 0;
  auto paint = [&](int64_t y, int64_t x) {
    for (int64_t c = 0; c < 3; ++c) image(c, y, x) = color[c] * (0.85 + 0.15 * rng.uniform());
    if (fg_mask) (*fg_mask)(y, x) = 1.0;
    x_min = std::min(x_min, x);
    y_min = std::min(y_min, y);
    x_max = std::max(x_max, x + 1);
    y_max = std::max(y_max, y + 1);
  };

  if (label == 0) {  // filled square
    for (int64_t y = cy; y < cy + size; ++y)
      for (int64_t x = cx; x < cx + size; ++x) paint(y, x);
  } else if (label == 1) {  // disc
    const double r = static_cast<double>(size) / 2.0;
    const double oy = static_cast<double>(cy) + r, ox = static_cast<double>(cx) + r;
    for (int64_t y = cy; y < cy + size; ++y)
      for (int64_t x = cx; x < cx + size; ++x) {
        const double dy = static_cast<double>(y) + 0.5 - oy;
        const double dx = static_cast<double>(x) + 0.5 - ox;
        if (dy * dy + dx * dx <= r * r) paint(y, x);
      }
  } else {  // cross
    const int64_t arm = std::max<int64_t>(2, size / 3);
    const int64_t mid = cy + size / 2, midx = cx + size / 2;
    for (int64_t y = mid - arm / 2; y < mid - arm / 2 + arm; ++y)
      for (int64_t x = cx; x < cx + size; ++x) paint(y, x);
    for (int64_t y = cy; y < cy + size; ++y)
      for (int64_t x = midx - arm / 2; x < midx - arm / 2 + arm; ++x) paint(y, x);
  }
  return {label, BBox{x_min, y_min, x_max, y_max}};
}

LabeledData make_boxes_split(int64_t n, Rng& rng, std::vector<BBox>& boxes,
                             std::vector<Tensor>* fg_masks) {
  LabeledData data;
  data.images = Tensor({n, 3, kBoxImage, kBoxImage});
  data.labels.resize(static_cast<size_t>(n));
  boxes.resize(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    Tensor image({3, kBoxImage, kBoxImage});
    // textured noise background, kept dim so the shape dominates
    for (int64_t j = 0; j < image.numel(); ++j) image[j] = 0.1 + 0.4 * rng.uniform();
    Tensor mask;
    if (fg_masks) mask = Tensor({kBoxImage, kBoxImage});
    ShapeDraw d = draw_shape(image, fg_masks ? &mask : nullptr, rng);
    data.labels[static_cast<size_t>(i)] = d.label;
    boxes[static_cast<size_t>(i)] = d.box;
    if (fg_masks) fg_masks->push_back(std::move(mask));
    std::copy(image.data(), image.data() + image.numel(),
              data.images.data() + i * image.numel());
  }
  return data;
}

}  // namespace

DatasetHandle make_synthetic_boxes(int64_t n_train, int64_t n_test, uint64_t seed,
                                   std::vector<Tensor>* fg_masks) {
  if (n_train < 1) throw ConfigError("synthetic_boxes needs at least one training image");
  DatasetHandle h;
  h.kind = "synthetic_boxes";
  h.num_classes = 3;
  Rng rng(seed);
  h.train = make_boxes_split(n_train, rng, h.train_boxes, fg_masks);
  if (n_test > 0) h.test = make_boxes_split(n_test, rng, h.test_boxes, nullptr);
  return h;
}

LabeledData make_synthetic_patterns(int64_t n, int64_t num_classes, uint64_t seed) {
  const int64_t H = 32, W = 32, S = 16;  // stamp extent
  // fixed per-class stamps, drawn once from class-derived seeds
  std::vector<Tensor> stamps;
  for (int64_t c = 0; c < num_classes; ++c) {
    Rng crng(0x5741u * static_cast<uint64_t>(c + 1));
    Tensor stamp({3, S, S});
    // blocky 8x8 binary pattern upsampled 2x, colored per class
    const double hue[3] = {0.5 + 0.5 * crng.uniform(), 0.5 + 0.5 * crng.uniform(),
                           0.5 + 0.5 * crng.uniform()};
    for (int64_t by = 0; by < S / 2; ++by)
      for (int64_t bx = 0; bx < S / 2; ++bx) {
        const double on = crng.uniform() < 0.5 ? 0.0 : 1.0;
        for (int64_t dy = 0; dy < 2; ++dy)
          for (int64_t dx = 0; dx < 2; ++dx)
            for (int64_t ch = 0; ch < 3; ++ch)
              stamp(ch, by * 2 + dy, bx * 2 + dx) = on * hue[ch];
      }
    stamps.push_back(std::move(stamp));
  }

  LabeledData data;
  data.images = Tensor({n, 3, H, W});
  data.labels.resize(static_cast<size_t>(n));
  Rng rng(seed);
  for (int64_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(rng.below(num_classes));
    data.labels[static_cast<size_t>(i)] = label;
    double* img = data.images.data() + i * 3 * H * W;
    // bright textured background so the stamp does not trivially dominate
    for (int64_t j = 0; j < 3 * H * W; ++j) img[j] = 0.7 * rng.uniform();
    const Tensor& stamp = stamps[static_cast<size_t>(label)];
    const int64_t oy = (H - S) / 2 - 6 + rng.below(13);  // +-6 jitter
    const int64_t ox = (W - S) / 2 - 6 + rng.below(13);
    for (int64_t ch = 0; ch < 3; ++ch)
      for (int64_t y = 0; y < S; ++y)
        for (int64_t x = 0; x < S; ++x) {
          const double v = stamp(ch, y, x);
          if (v > 0.0) {
            double& px = data.images(i, ch, oy + y, ox + x);
            px = std::clamp(0.62 * v + 0.38 * px + 0.12 * (rng.uniform() - 0.5), 0.0, 1.0);
          }
        }
  }
  return data;
}

}  // namespace lateralgrad
