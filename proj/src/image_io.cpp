#include "lateralgrad/image_io.hpp"

#include <algorithm>
#include <cmath>

#include "lateralgrad/csv.hpp"
#include "lateralgrad/errors.hpp"

namespace lateralgrad {

void write_pgm(const std::string& path, const Tensor& map_hw) {
  if (map_hw.ndim() != 2) throw UsageError("PGM writer expects H x W");
  const int64_t H = map_hw.dim(0), W = map_hw.dim(1);
  double lo = map_hw[0], hi = map_hw[0];
  for (int64_t i = 0; i < map_hw.numel(); ++i) {
    lo = std::min(lo, map_hw[i]);
    hi = std::max(hi, map_hw[i]);
  }
  std::string out = "P5\n" + std::to_string(W) + " " + std::to_string(H) + "\n255\n";
  out.reserve(out.size() + static_cast<size_t>(H * W));
  const double scale = hi > lo ? 255.0 / (hi - lo) : 0.0;
  for (int64_t i = 0; i < map_hw.numel(); ++i)
    out.push_back(static_cast<char>(
        static_cast<uint8_t>(std::lround((map_hw[i] - lo) * scale))));
  write_file_atomic(path, out);
}

void write_ppm(const std::string& path, const Tensor& image_chw) {
  if (image_chw.ndim() != 3 || image_chw.dim(0) != 3) throw UsageError("PPM writer expects 3 x H x W");
  const int64_t H = image_chw.dim(1), W = image_chw.dim(2);
  std::string out = "P6\n" + std::to_string(W) + " " + std::to_string(H) + "\n255\n";
  out.reserve(out.size() + static_cast<size_t>(3 * H * W));
  for (int64_t y = 0; y < H; ++y)
    for (int64_t x = 0; x < W; ++x)
      for (int64_t c = 0; c < 3; ++c)
        out.push_back(static_cast<char>(static_cast<uint8_t>(
            std::lround(std::clamp(image_chw(c, y, x), 0.0, 1.0) * 255.0))));
  write_file_atomic(path, out);
}

}  // namespace lateralgrad
