#pragma once

#include <cstdint>
#include <vector>

#include "gramtex/rng.hpp"
#include "gramtex/tensor.hpp"

namespace gramtex {

struct QuiltParams {
  std::size_t patch = 16;
  /// 0 selects max(1, patch / 6).
  std::size_t overlap = 0;
  /// Candidates within (1 + tolerance) * min error are accepted.
  double tolerance = 0.1;
  std::size_t out_h = 64;
  std::size_t out_w = 64;
  std::uint64_t seed = 0;

  std::size_t effective_overlap() const;
  /// Throws InvalidArgument when the parameters do not fit the source.
  void validate(const Tensor& source) const;
};

/// Minimum-error boundary through an overlap band. For a band of R rows and
/// O columns, cut[i] is the first column of row i taken from the new patch.
struct Seam {
  std::vector<std::size_t> cut;
};

/// Existing canvas content under a candidate patch. Only pixels with a
/// non-zero mask entry (the overlap with earlier patches) are compared.
struct OverlapTarget {
  Tensor block;                    // patch x patch x C
  std::vector<std::uint8_t> mask;  // patch x patch
};

struct PatchPos {
  std::size_t row = 0;
  std::size_t col = 0;
  friend bool operator==(const PatchPos&, const PatchPos&) = default;
};

/// Sum of squared per-channel differences between the source patch at
/// (top, left) and the target, over masked pixels only.
double overlap_ssd(const Tensor& source, std::size_t top, std::size_t left,
                   const OverlapTarget& target);

/// Exhaustive scan of every patch position; uniform choice among those with
/// SSD <= (1 + tolerance) * min SSD, listed in row-major order.
PatchPos pick_patch(const Tensor& source, const OverlapTarget& target, const QuiltParams& params,
                    CounterRng& rng);

/// Dynamic program over an R x O error band (rank-2 tensor):
/// cost(i, j) = err(i, j) + min(cost(i-1, j-1..j+1)). Ties prefer the smaller
/// column.
Seam min_cut_seam(const Tensor& error_band);

/// Sum of band errors along the seam.
double seam_cost(const Tensor& error_band, const Seam& seam);

struct QuiltPlacement {
  std::size_t row = 0;  // canvas position
  std::size_t col = 0;
  PatchPos source;
  bool has_left = false;
  bool has_top = false;
  Seam left_seam;  // over the left band, rows of the patch
  Seam top_seam;   // over the top band, one entry per patch column
  double left_seam_cost = 0.0;
  double left_straight_cost = 0.0;  // cheapest straight vertical cut
  double top_seam_cost = 0.0;
  double top_straight_cost = 0.0;
};

struct QuiltLog {
  std::vector<QuiltPlacement> placements;
  /// Placement index that supplied each output pixel (out_h x out_w, row-major).
  std::vector<std::size_t> owner;
  std::size_t out_h = 0;
  std::size_t out_w = 0;
};

/// Raster-order image quilting with minimum-error boundary cuts. Pure
/// copy-and-paste: every output pixel is a source pixel.
Tensor quilt(const Tensor& source, const QuiltParams& params, QuiltLog* log = nullptr);

/// Texture-transfer quilting: candidate error is
/// alpha * overlap SSD + (1 - alpha) * luminance SSD against the
/// correspondence image at the target position.
Tensor quilt_transfer(const Tensor& source, const Tensor& correspondence,
                      const QuiltParams& params, double alpha, QuiltLog* log = nullptr);

/// ITU-R BT.601 luma weights.
inline constexpr double kLumaR = 0.299;
inline constexpr double kLumaG = 0.587;
inline constexpr double kLumaB = 0.114;

/// H x W x 1 luminance of an RGB image.
Tensor luminance(const Tensor& image);

}  // namespace gramtex
