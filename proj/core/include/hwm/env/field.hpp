#pragma once

#include <cstddef>
#include <vector>

#include "hwm/env/env.hpp"

namespace hwm::env {

/// 64-bit working copy of a C x H x W state; solvers compute on this and
/// round to float32 only when a frame is stored.
struct Field {
  std::size_t channels = 0, height = 0, width = 0;
  std::vector<double> data;

  Field() = default;
  Field(std::size_t c, std::size_t h, std::size_t w, double fill = 0.0)
      : channels(c), height(h), width(w), data(c * h * w, fill) {}

  std::size_t plane() const noexcept { return height * width; }
  double& operator()(std::size_t c, std::size_t y, std::size_t x) noexcept {
    return data[(c * height + y) * width + x];
  }
  double operator()(std::size_t c, std::size_t y, std::size_t x) const noexcept {
    return data[(c * height + y) * width + x];
  }
  double* channel(std::size_t c) noexcept { return data.data() + c * plane(); }
  const double* channel(std::size_t c) const noexcept { return data.data() + c * plane(); }

  static Field from_state(const State& s);
  State to_state() const;
};

}  // namespace hwm::env
