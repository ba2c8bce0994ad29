#pragma once

#include <string>

#include "lateralgrad/tensor.hpp"

namespace lateralgrad {

/// 8-bit binary PGM (P5), min-max normalized per image; a constant map
/// writes all zeros.
void write_pgm(const std::string& path, const Tensor& map_hw);

/// 8-bit binary PPM (P6) from a 3 x H x W image with values clamped to [0,1].
void write_ppm(const std::string& path, const Tensor& image_chw);

}  // namespace lateralgrad
