#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "semrecon/grid.hpp"

namespace semrecon {

/// In-memory TNSR tensor: row-major float32 payload, last dimension fastest.
struct Tensor {
  std::vector<std::uint32_t> dims;
  std::vector<float> data;

  std::size_t count() const;
};

/// File layout: "TNSR", u32 version (1), u32 rank, rank x u32 dims, then the
/// little-endian float32 payload.
void write_tnsr(const std::filesystem::path& path, const Tensor& t);
Tensor read_tnsr(const std::filesystem::path& path);

/// H x W x C tensor from a grid; values are rounded to float32.
Tensor to_tensor(const Grid& g);
/// Accepts rank 2 (H x W) or rank 3 (H x W x C).
Grid to_grid(const Tensor& t);

/// 8-bit PNG with 1 (gray) or 3 (RGB) channels; values are clamped to [0, 1].
void write_png(const std::filesystem::path& path, const Grid& g);
/// Gray, gray-alpha, RGB or RGBA input; alpha is dropped. Values are in [0, 1].
Grid read_png(const std::filesystem::path& path);

}  // namespace semrecon
