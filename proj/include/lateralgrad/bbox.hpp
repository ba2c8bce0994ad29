#pragma once

#include <cstdint>

namespace lateralgrad {

/// Axis-aligned pixel box, inclusive-exclusive: x in [x_min, x_max),
/// y in [y_min, y_max). x indexes columns, y indexes rows.
struct BBox {
  int64_t x_min = 0, y_min = 0, x_max = 0, y_max = 0;

  int64_t area() const { return (x_max - x_min) * (y_max - y_min); }
  bool valid() const { return x_min < x_max && y_min < y_max; }
};

/// Intersection over union in pixel area; 0 for disjoint boxes.
double iou(const BBox& a, const BBox& b);

}  // namespace lateralgrad
