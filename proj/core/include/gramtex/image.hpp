#pragma once

#include <filesystem>

#include "gramtex/tensor.hpp"

namespace gramtex {

/// Bilinear resampling with half-pixel centers and edge clamping.
Tensor resize_bilinear(const Tensor& image, std::size_t height, std::size_t width);

/// Copy with every value clamped to [0, 1].
Tensor clamp01(const Tensor& image);

/// 8-bit RGB PNG. Bytes map linearly to k / 255 (no gamma transform).
Tensor read_png(const std::filesystem::path& path);
/// Values are clamped to [0, 1] and rounded to the nearest 8-bit level.
void write_png(const Tensor& image, const std::filesystem::path& path);

/// Per-channel mean of an H x W x C image.
std::vector<double> channel_means(const Tensor& image);

}  // namespace gramtex
