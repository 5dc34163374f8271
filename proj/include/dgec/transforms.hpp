#pragma once

// Unitary 2D DFT and orthonormal 2D Haar DWT.
//
// DFT storage convention: the zero frequency sits at index (0, 0); fftshift()
// moves it to (height/2, width/2) for display or centered mask construction.
//
// DWT coefficient layout: subbands are stored as contiguous row-major blocks,
// coarsest first:
//
//   LL(D), LH(D), HL(D), HH(D), LH(D-1), HL(D-1), HH(D-1), ..., LH(1), HL(1), HH(1)
//
// For a 2x2 pixel block [a b; c d] one Haar level produces
//   LL = (a + b + c + d) / 2    LH = (a - b + c - d) / 2   (horizontal differences)
//   HL = (a + b - c - d) / 2    HH = (a - b - c + d) / 2   (vertical / diagonal)
// which is orthonormal, so the inverse equals the adjoint.
//
// Depth 0 is accepted as the trivial decomposition: one subband holding the
// whole image, with the transform equal to the identity.

#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>
#include <string>
#include <tuple>
#include <vector>

#include "dgec/core.hpp"

namespace dgec {

enum class Orientation { kLL, kLH, kHL, kHH };

inline const char* orientation_name(Orientation o) {
  switch (o) {
    case Orientation::kLL: return "LL";
    case Orientation::kLH: return "LH";
    case Orientation::kHL: return "HL";
    case Orientation::kHH: return "HH";
  }
  return "?";
}

struct Subband {
  int level = 0;  // 1 = finest; the LL band carries the decomposition depth
  Orientation orientation = Orientation::kLL;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t offset = 0;

  std::size_t size() const { return rows * cols; }
  std::string name() const { return std::string(orientation_name(orientation)) + std::to_string(level); }
};

class SubbandLayout {
 public:
  SubbandLayout() = default;

  SubbandLayout(std::size_t height, std::size_t width, int depth)
      : height_(height), width_(width), depth_(depth) {
    if (depth < 0) throw ArgumentError("wavelet depth must be nonnegative");
    if (height == 0 || width == 0) throw ShapeError("empty image shape");
    const std::size_t block = std::size_t{1} << depth;
    if (height % block != 0 || width % block != 0) {
      throw ShapeError("image " + std::to_string(height) + "x" + std::to_string(width) +
                       " is not divisible by 2^" + std::to_string(depth) +
                       " as required by a depth-" + std::to_string(depth) + " Haar transform");
    }
    std::size_t offset = 0;
    const std::size_t coarse_rows = height >> depth;
    const std::size_t coarse_cols = width >> depth;
    subbands_.push_back({depth, Orientation::kLL, coarse_rows, coarse_cols, offset});
    offset += coarse_rows * coarse_cols;
    for (int level = depth; level >= 1; --level) {
      const std::size_t rows = height >> level;
      const std::size_t cols = width >> level;
      for (Orientation o : {Orientation::kLH, Orientation::kHL, Orientation::kHH}) {
        subbands_.push_back({level, o, rows, cols, offset});
        offset += rows * cols;
      }
    }
  }

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  int depth() const { return depth_; }
  std::size_t total_size() const { return height_ * width_; }
  std::size_t count() const { return subbands_.size(); }
  const Subband& operator[](std::size_t l) const { return subbands_.at(l); }
  const std::vector<Subband>& subbands() const { return subbands_; }

  /// Index of the subband with the given level and orientation.
  std::size_t find(int level, Orientation o) const {
    for (std::size_t l = 0; l < subbands_.size(); ++l) {
      if (subbands_[l].level == level && subbands_[l].orientation == o) return l;
    }
    throw ArgumentError("no subband " + std::string(orientation_name(o)) + std::to_string(level));
  }

  /// Subband index that owns a flat coefficient index.
  std::size_t subband_of(std::size_t index) const {
    for (std::size_t l = 0; l < subbands_.size(); ++l) {
      if (index < subbands_[l].offset + subbands_[l].size()) return l;
    }
    throw ArgumentError("coefficient index out of range");
  }

  bool operator==(const SubbandLayout& o) const {
    return height_ == o.height_ && width_ == o.width_ && depth_ == o.depth_;
  }
  bool operator!=(const SubbandLayout& o) const { return !(*this == o); }

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  int depth_ = 0;
  std::vector<Subband> subbands_;
};

struct WaveletPyramid {
  SubbandLayout layout;
  CVector coeffs;

  WaveletPyramid() = default;
  explicit WaveletPyramid(SubbandLayout l)
      : layout(std::move(l)), coeffs(CVector::Zero(static_cast<Eigen::Index>(layout.total_size()))) {}
  WaveletPyramid(SubbandLayout l, CVector c) : layout(std::move(l)), coeffs(std::move(c)) {
    if (static_cast<std::size_t>(coeffs.size()) != layout.total_size()) {
      throw ShapeError("pyramid holds " + std::to_string(coeffs.size()) + " coefficients, layout needs " +
                       std::to_string(layout.total_size()));
    }
  }

  bool empty() const { return coeffs.size() == 0; }

  auto band(std::size_t l) {
    const Subband& s = layout[l];
    return coeffs.segment(static_cast<Eigen::Index>(s.offset), static_cast<Eigen::Index>(s.size()));
  }
  auto band(std::size_t l) const {
    const Subband& s = layout[l];
    return coeffs.segment(static_cast<Eigen::Index>(s.offset), static_cast<Eigen::Index>(s.size()));
  }
};

inline void require_same_layout(const WaveletPyramid& a, const WaveletPyramid& b, const char* what) {
  if (a.layout != b.layout || a.coeffs.size() != b.coeffs.size()) {
    throw ShapeError(std::string(what) + ": pyramid layouts differ");
  }
}

// ---------------------------------------------------------------------------
// DFT

namespace detail {

/// Process-wide cache of FFTW plans. Planning is serialized (FFTW planners are
/// not thread-safe); executing a plan on new arrays is.
class FftPlanCache {
 public:
  static FftPlanCache& instance() {
    static FftPlanCache cache;
    return cache;
  }

  fftw_plan get(std::size_t height, std::size_t width, int sign) {
    std::lock_guard<std::mutex> lock(mutex_);
    auto key = std::make_tuple(height, width, sign);
    auto it = plans_.find(key);
    if (it != plans_.end()) return it->second;
    auto* scratch = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * height * width));
    fftw_plan plan = fftw_plan_dft_2d(static_cast<int>(height), static_cast<int>(width), scratch, scratch,
                                      sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
    fftw_free(scratch);
    if (plan == nullptr) throw NumericalError("FFTW could not create a plan");
    plans_.emplace(key, plan);
    return plan;
  }

  FftPlanCache(const FftPlanCache&) = delete;
  FftPlanCache& operator=(const FftPlanCache&) = delete;

 private:
  FftPlanCache() = default;
  ~FftPlanCache() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

  std::mutex mutex_;
  std::map<std::tuple<std::size_t, std::size_t, int>, fftw_plan> plans_;
};

inline void fft2_inplace(CVector& data, std::size_t height, std::size_t width, int sign) {
  fftw_plan plan = FftPlanCache::instance().get(height, width, sign);
  auto* ptr = reinterpret_cast<fftw_complex*>(data.data());
  fftw_execute_dft(plan, ptr, ptr);
  data *= 1.0 / std::sqrt(static_cast<double>(height * width));
}

}  // namespace detail

/// Unitary forward DFT (1/sqrt(N) normalization).
inline ComplexImage dft2(const ComplexImage& img) {
  require_finite(img.data, "dft2");
  ComplexImage out = img;
  detail::fft2_inplace(out.data, out.height, out.width, FFTW_FORWARD);
  return out;
}

/// Unitary inverse DFT; the adjoint of dft2.
inline ComplexImage idft2(const ComplexImage& img) {
  require_finite(img.data, "idft2");
  ComplexImage out = img;
  detail::fft2_inplace(out.data, out.height, out.width, FFTW_BACKWARD);
  return out;
}

/// Moves the zero frequency from (0,0) to (h/2, w/2).
template <class Grid>
Grid fftshift_grid(const Grid& in, std::size_t height, std::size_t width) {
  Grid out = in;
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      out[((r + height / 2) % height) * width + (c + width / 2) % width] = in[r * width + c];
    }
  }
  return out;
}

/// Inverse of fftshift_grid (differs from it only for odd sizes).
template <class Grid>
Grid ifftshift_grid(const Grid& in, std::size_t height, std::size_t width) {
  Grid out = in;
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      out[r * width + c] = in[((r + height / 2) % height) * width + (c + width / 2) % width];
    }
  }
  return out;
}

inline ComplexImage fftshift(const ComplexImage& img) {
  return ComplexImage(img.height, img.width, fftshift_grid(img.data, img.height, img.width));
}

inline ComplexImage ifftshift(const ComplexImage& img) {
  return ComplexImage(img.height, img.width, ifftshift_grid(img.data, img.height, img.width));
}

/// Signed frequency index of storage position k along an axis of length n.
inline long signed_frequency(std::size_t k, std::size_t n) {
  return k < (n + 1) / 2 ? static_cast<long>(k) : static_cast<long>(k) - static_cast<long>(n);
}

// ---------------------------------------------------------------------------
// Haar DWT

inline WaveletPyramid dwt2_haar(const ComplexImage& img, int depth) {
  SubbandLayout layout(img.height, img.width, depth);
  WaveletPyramid pyr(layout);
  if (depth == 0) {
    pyr.coeffs = img.data;
    return pyr;
  }
  constexpr double kHalf = 0.5;
  CVector current = img.data;
  std::size_t rows = img.height;
  std::size_t cols = img.width;
  for (int level = 1; level <= depth; ++level) {
    const std::size_t hr = rows / 2;
    const std::size_t hc = cols / 2;
    CVector next(static_cast<Eigen::Index>(hr * hc));
    auto lh = pyr.band(layout.find(level, Orientation::kLH));
    auto hl = pyr.band(layout.find(level, Orientation::kHL));
    auto hh = pyr.band(layout.find(level, Orientation::kHH));
    for (std::size_t i = 0; i < hr; ++i) {
      for (std::size_t j = 0; j < hc; ++j) {
        const cplx a = current[(2 * i) * cols + 2 * j];
        const cplx b = current[(2 * i) * cols + 2 * j + 1];
        const cplx c = current[(2 * i + 1) * cols + 2 * j];
        const cplx d = current[(2 * i + 1) * cols + 2 * j + 1];
        const std::size_t k = i * hc + j;
        next[k] = kHalf * (a + b + c + d);
        lh[k] = kHalf * (a - b + c - d);
        hl[k] = kHalf * (a + b - c - d);
        hh[k] = kHalf * (a - b - c + d);
      }
    }
    current = std::move(next);
    rows = hr;
    cols = hc;
  }
  pyr.band(0) = current;
  return pyr;
}

inline ComplexImage idwt2_haar(const WaveletPyramid& pyr) {
  const SubbandLayout& layout = pyr.layout;
  if (static_cast<std::size_t>(pyr.coeffs.size()) != layout.total_size() || layout.count() == 0) {
    throw ShapeError("idwt2_haar: coefficient count does not match layout");
  }
  const int depth = layout.depth();
  if (depth == 0) return ComplexImage(layout.height(), layout.width(), pyr.coeffs);
  constexpr double kHalf = 0.5;
  CVector current = pyr.band(0);
  for (int level = depth; level >= 1; --level) {
    const std::size_t hr = layout.height() >> level;
    const std::size_t hc = layout.width() >> level;
    const std::size_t cols = 2 * hc;
    CVector next(static_cast<Eigen::Index>(4 * hr * hc));
    auto lh = pyr.band(layout.find(level, Orientation::kLH));
    auto hl = pyr.band(layout.find(level, Orientation::kHL));
    auto hh = pyr.band(layout.find(level, Orientation::kHH));
    for (std::size_t i = 0; i < hr; ++i) {
      for (std::size_t j = 0; j < hc; ++j) {
        const std::size_t k = i * hc + j;
        const cplx ll = current[k];
        next[(2 * i) * cols + 2 * j] = kHalf * (ll + lh[k] + hl[k] + hh[k]);
        next[(2 * i) * cols + 2 * j + 1] = kHalf * (ll - lh[k] + hl[k] - hh[k]);
        next[(2 * i + 1) * cols + 2 * j] = kHalf * (ll + lh[k] - hl[k] - hh[k]);
        next[(2 * i + 1) * cols + 2 * j + 1] = kHalf * (ll - lh[k] - hl[k] + hh[k]);
      }
    }
    current = std::move(next);
  }
  return ComplexImage(layout.height(), layout.width(), std::move(current));
}

/// Pixel footprint test: a coefficient is "inside" a pixel mask when every
/// pixel its basis function touches is inside. Returns one flag per coefficient.
inline std::vector<std::uint8_t> coefficient_support(const SubbandLayout& layout,
                                                     const std::vector<std::uint8_t>& pixel_support) {
  if (pixel_support.size() != layout.total_size()) {
    throw ShapeError("pixel support size does not match layout");
  }
  std::vector<std::uint8_t> out(layout.total_size(), 0);
  const std::size_t width = layout.width();
  for (const Subband& s : layout.subbands()) {
    const std::size_t block = std::size_t{1} << s.level;
    for (std::size_t i = 0; i < s.rows; ++i) {
      for (std::size_t j = 0; j < s.cols; ++j) {
        bool inside = true;
        for (std::size_t r = i * block; r < (i + 1) * block && inside; ++r) {
          for (std::size_t c = j * block; c < (j + 1) * block; ++c) {
            if (!pixel_support[r * width + c]) {
              inside = false;
              break;
            }
          }
        }
        out[s.offset + i * s.cols + j] = inside ? 1 : 0;
      }
    }
  }
  return out;
}

}  // namespace dgec
