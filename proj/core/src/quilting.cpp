#include "gramtex/quilting.hpp"

#include <algorithm>
#include <limits>

#include "gramtex/error.hpp"

namespace gramtex {
namespace {

struct Candidates {
  std::vector<double> errors;  // row-major over positions
  std::size_t rows = 0;
  std::size_t cols = 0;
};

PatchPos choose(const Candidates& c, double tolerance, CounterRng& rng) {
  const double best = *std::min_element(c.errors.begin(), c.errors.end());
  const double limit = best * (1.0 + tolerance);
  std::vector<std::size_t> accepted;
  for (std::size_t i = 0; i < c.errors.size(); ++i) {
    if (c.errors[i] <= limit) accepted.push_back(i);
  }
  const std::size_t pick = accepted[rng.below(accepted.size())];
  return {pick / c.cols, pick % c.cols};
}

// Luminance SSD of the source patch at (top, left) against the correspondence
// window at canvas (row, col), clipped to the correspondence extent.
double correspondence_error(const Tensor& src_lum, std::size_t top, std::size_t left,
                            const Tensor& corr_lum, std::size_t row, std::size_t col,
                            std::size_t patch) {
  double e = 0.0;
  for (std::size_t i = 0; i < patch && row + i < corr_lum.height(); ++i) {
    for (std::size_t j = 0; j < patch && col + j < corr_lum.width(); ++j) {
      const double d = src_lum.at(top + i, left + j, 0) - corr_lum.at(row + i, col + j, 0);
      e += d * d;
    }
  }
  return e;
}

Candidates candidate_errors(const Tensor& source, const OverlapTarget& target, std::size_t patch,
                            double alpha, const Tensor* src_lum, const Tensor* corr_lum,
                            std::size_t row, std::size_t col) {
  Candidates c;
  c.rows = source.height() - patch + 1;
  c.cols = source.width() - patch + 1;
  c.errors.resize(c.rows * c.cols);
  for (std::size_t r = 0; r < c.rows; ++r) {
    for (std::size_t q = 0; q < c.cols; ++q) {
      double e = alpha * overlap_ssd(source, r, q, target);
      if (corr_lum) {
        e += (1.0 - alpha) * correspondence_error(*src_lum, r, q, *corr_lum, row, col, patch);
      }
      c.errors[r * c.cols + q] = e;
    }
  }
  return c;
}

double straight_cost(const Tensor& band) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < band.dim(1); ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < band.dim(0); ++i) s += band.at(i, j);
    best = std::min(best, s);
  }
  return best;
}

Tensor quilt_impl(const Tensor& source, const Tensor* correspondence, const QuiltParams& params,
                  double alpha, QuiltLog* log) {
  params.validate(source);
  const std::size_t patch = params.patch;
  const std::size_t ov = params.effective_overlap();
  const std::size_t step = patch - ov;
  const std::size_t ch = source.channels();
  auto blocks = [&](std::size_t out) {
    return out <= patch ? std::size_t{1} : (out - ov + step - 1) / step;
  };
  const std::size_t nby = blocks(params.out_h), nbx = blocks(params.out_w);
  const std::size_t canvas_h = nby * step + ov, canvas_w = nbx * step + ov;

  Tensor src_lum, corr_lum;
  if (correspondence) {
    src_lum = luminance(source);
    corr_lum = luminance(*correspondence);
  }

  Tensor canvas({canvas_h, canvas_w, ch});
  std::vector<std::size_t> owner(canvas_h * canvas_w, 0);
  CounterRng rng(params.seed);
  std::vector<QuiltPlacement> placements;

  for (std::size_t by = 0; by < nby; ++by) {
    for (std::size_t bx = 0; bx < nbx; ++bx) {
      QuiltPlacement p;
      p.row = by * step;
      p.col = bx * step;
      p.has_left = bx > 0;
      p.has_top = by > 0;

      OverlapTarget target{Tensor({patch, patch, ch}), std::vector<std::uint8_t>(patch * patch)};
      for (std::size_t i = 0; i < patch; ++i) {
        for (std::size_t j = 0; j < patch; ++j) {
          const bool in_overlap = (p.has_left && j < ov) || (p.has_top && i < ov);
          target.mask[i * patch + j] = in_overlap ? 1 : 0;
          for (std::size_t c = 0; c < ch; ++c) {
            target.block.at(i, j, c) = canvas.at(p.row + i, p.col + j, c);
          }
        }
      }
      const Candidates cands =
          candidate_errors(source, target, patch, correspondence ? alpha : 1.0,
                           correspondence ? &src_lum : nullptr,
                           correspondence ? &corr_lum : nullptr, p.row, p.col);
      p.source = choose(cands, params.tolerance, rng);

      auto pixel_error = [&](std::size_t i, std::size_t j) {
        double e = 0.0;
        for (std::size_t c = 0; c < ch; ++c) {
          const double d =
              canvas.at(p.row + i, p.col + j, c) - source.at(p.source.row + i, p.source.col + j, c);
          e += d * d;
        }
        return e;
      };
      if (p.has_left) {
        Tensor band({patch, ov});
        for (std::size_t i = 0; i < patch; ++i) {
          for (std::size_t j = 0; j < ov; ++j) band.at(i, j) = pixel_error(i, j);
        }
        p.left_seam = min_cut_seam(band);
        p.left_seam_cost = seam_cost(band, p.left_seam);
        p.left_straight_cost = straight_cost(band);
      }
      if (p.has_top) {
        Tensor band({patch, ov});  // transposed: one row per patch column
        for (std::size_t j = 0; j < patch; ++j) {
          for (std::size_t i = 0; i < ov; ++i) band.at(j, i) = pixel_error(i, j);
        }
        p.top_seam = min_cut_seam(band);
        p.top_seam_cost = seam_cost(band, p.top_seam);
        p.top_straight_cost = straight_cost(band);
      }

      const std::size_t index = placements.size();
      for (std::size_t i = 0; i < patch; ++i) {
        for (std::size_t j = 0; j < patch; ++j) {
          const bool in_left = p.has_left && j < ov;
          const bool in_top = p.has_top && i < ov;
          bool take = true;
          if (in_left && j < p.left_seam.cut[i]) take = false;
          if (in_top && i < p.top_seam.cut[j]) take = false;
          if (!take) continue;
          for (std::size_t c = 0; c < ch; ++c) {
            canvas.at(p.row + i, p.col + j, c) = source.at(p.source.row + i, p.source.col + j, c);
          }
          owner[(p.row + i) * canvas_w + p.col + j] = index;
        }
      }
      placements.push_back(std::move(p));
    }
  }

  Tensor out({params.out_h, params.out_w, ch});
  for (std::size_t y = 0; y < params.out_h; ++y) {
    for (std::size_t x = 0; x < params.out_w; ++x) {
      for (std::size_t c = 0; c < ch; ++c) out.at(y, x, c) = canvas.at(y, x, c);
    }
  }
  if (log) {
    log->placements = std::move(placements);
    log->out_h = params.out_h;
    log->out_w = params.out_w;
    log->owner.resize(params.out_h * params.out_w);
    for (std::size_t y = 0; y < params.out_h; ++y) {
      for (std::size_t x = 0; x < params.out_w; ++x) {
        log->owner[y * params.out_w + x] = owner[y * canvas_w + x];
      }
    }
  }
  return out;
}

}  // namespace

std::size_t QuiltParams::effective_overlap() const {
  return overlap > 0 ? overlap : std::max<std::size_t>(1, patch / 6);
}

void QuiltParams::validate(const Tensor& source) const {
  if (source.rank() != 3 || source.empty()) {
    throw Error(ErrorCode::InvalidArgument, "quilting source must be H x W x C");
  }
  const std::size_t ov = effective_overlap();
  if (patch == 0 || ov >= patch) {
    throw Error(ErrorCode::InvalidArgument, "overlap " + std::to_string(ov) +
                                                " must be smaller than patch " +
                                                std::to_string(patch));
  }
  if (patch > source.height() || patch > source.width()) {
    throw Error(ErrorCode::InvalidArgument, "patch " + std::to_string(patch) +
                                                " exceeds source " + dims_string(source.dims()));
  }
  if (out_h < patch || out_w < patch) {
    throw Error(ErrorCode::InvalidArgument, "output must be at least one patch in size");
  }
  if (!(tolerance >= 0.0)) throw Error(ErrorCode::InvalidArgument, "tolerance must be >= 0");
}

double overlap_ssd(const Tensor& source, std::size_t top, std::size_t left,
                   const OverlapTarget& target) {
  const std::size_t patch = target.block.dim(0);
  const std::size_t ch = target.block.dim(2);
  if (source.rank() != 3 || source.channels() != ch) {
    throw Error(ErrorCode::DimensionMismatch, "overlap_ssd channel mismatch");
  }
  if (top + patch > source.height() || left + patch > source.width()) {
    throw Error(ErrorCode::InvalidArgument, "candidate patch at (" + std::to_string(top) + ", " +
                                                std::to_string(left) + ") leaves the source");
  }
  double e = 0.0;
  for (std::size_t i = 0; i < patch; ++i) {
    const std::uint8_t* m = &target.mask[i * patch];
    const double* s = source.data().data() + ((top + i) * source.width() + left) * ch;
    const double* t = target.block.data().data() + i * patch * ch;
    for (std::size_t j = 0; j < patch; ++j) {
      if (!m[j]) continue;
      for (std::size_t c = 0; c < ch; ++c) {
        const double d = s[j * ch + c] - t[j * ch + c];
        e += d * d;
      }
    }
  }
  return e;
}

PatchPos pick_patch(const Tensor& source, const OverlapTarget& target, const QuiltParams& params,
                    CounterRng& rng) {
  const std::size_t patch = target.block.dim(0);
  if (patch > source.height() || patch > source.width()) {
    throw Error(ErrorCode::InvalidArgument, "no valid candidate position");
  }
  return choose(candidate_errors(source, target, patch, 1.0, nullptr, nullptr, 0, 0),
                params.tolerance, rng);
}

Seam min_cut_seam(const Tensor& band) {
  if (band.rank() != 2 || band.dim(1) == 0 || band.dim(0) == 0) {
    throw Error(ErrorCode::InvalidArgument, "min_cut_seam needs a non-empty R x O band");
  }
  const std::size_t rows = band.dim(0), cols = band.dim(1);
  Tensor cost = band;
  for (std::size_t i = 1; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      double best = cost.at(i - 1, j);
      if (j > 0) best = std::min(best, cost.at(i - 1, j - 1));
      if (j + 1 < cols) best = std::min(best, cost.at(i - 1, j + 1));
      cost.at(i, j) += best;
    }
  }
  Seam seam;
  seam.cut.resize(rows);
  std::size_t j = 0;
  for (std::size_t k = 1; k < cols; ++k) {
    if (cost.at(rows - 1, k) < cost.at(rows - 1, j)) j = k;
  }
  seam.cut[rows - 1] = j;
  for (std::size_t i = rows - 1; i-- > 0;) {
    const std::size_t lo = j > 0 ? j - 1 : 0;
    const std::size_t hi = std::min(cols - 1, j + 1);
    std::size_t best = lo;
    for (std::size_t k = lo + 1; k <= hi; ++k) {
      if (cost.at(i, k) < cost.at(i, best)) best = k;
    }
    j = best;
    seam.cut[i] = j;
  }
  return seam;
}

double seam_cost(const Tensor& band, const Seam& seam) {
  double s = 0.0;
  for (std::size_t i = 0; i < seam.cut.size(); ++i) s += band.at(i, seam.cut[i]);
  return s;
}

Tensor quilt(const Tensor& source, const QuiltParams& params, QuiltLog* log) {
  return quilt_impl(source, nullptr, params, 1.0, log);
}

Tensor quilt_transfer(const Tensor& source, const Tensor& correspondence,
                      const QuiltParams& params, double alpha, QuiltLog* log) {
  if (correspondence.rank() != 3 || correspondence.height() != params.out_h ||
      correspondence.width() != params.out_w) {
    throw Error(ErrorCode::DimensionMismatch,
                "correspondence " + dims_string(correspondence.dims()) + " != output " +
                    std::to_string(params.out_h) + "x" + std::to_string(params.out_w));
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "alpha_blend must lie in [0, 1]");
  }
  if (alpha == 1.0) return quilt_impl(source, nullptr, params, 1.0, log);
  return quilt_impl(source, &correspondence, params, alpha, log);
}

Tensor luminance(const Tensor& image) {
  if (image.rank() != 3 || image.channels() != 3) {
    throw Error(ErrorCode::DimensionMismatch, "luminance needs H x W x 3, got " +
                                                  dims_string(image.dims()));
  }
  Tensor out({image.height(), image.width(), 1});
  for (std::size_t y = 0; y < image.height(); ++y) {
    for (std::size_t x = 0; x < image.width(); ++x) {
      out.at(y, x, 0) = kLumaR * image.at(y, x, 0) + kLumaG * image.at(y, x, 1) +
                        kLumaB * image.at(y, x, 2);
    }
  }
  return out;
}

}  // namespace gramtex
