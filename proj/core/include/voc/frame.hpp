#pragma once

#include <cstdint>
#include <vector>

namespace voc {

/// Grayscale or multi-channel 8-bit image, row-major [h][w][c].
struct Frame {
  int h = 0;
  int w = 0;
  int c = 1;
  std::vector<uint8_t> px;

  std::size_t size() const { return px.size(); }
  bool same_shape(const Frame& o) const { return h == o.h && w == o.w && c == o.c; }
  bool operator==(const Frame& o) const = default;
};

}  // namespace voc
