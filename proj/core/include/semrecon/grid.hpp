#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "semrecon/errors.hpp"

namespace semrecon {

/// Dense row-major H x W x C array of doubles; the channel index is fastest.
///
/// Used for images, silhouettes, part maps, UV-space maps and texture flow.
class Grid {
 public:
  Grid() = default;
  Grid(int height, int width, int channels, double fill = 0.0)
      : height_(height), width_(width), channels_(channels) {
    if (height < 0 || width < 0 || channels < 0) {
      throw ParameterError("Grid: negative dimension");
    }
    data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
  }

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t pixels() const { return static_cast<std::size_t>(height_) * width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t index(int row, int col, int ch = 0) const {
    return (static_cast<std::size_t>(row) * width_ + col) * channels_ + ch;
  }

  double& operator()(int row, int col, int ch = 0) { return data_[index(row, col, ch)]; }
  double operator()(int row, int col, int ch = 0) const { return data_[index(row, col, ch)]; }

  std::span<double> pixel(int row, int col) {
    return {data_.data() + index(row, col), static_cast<std::size_t>(channels_)};
  }
  std::span<const double> pixel(int row, int col) const {
    return {data_.data() + index(row, col), static_cast<std::size_t>(channels_)};
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const Grid& other) const {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

}  // namespace semrecon
