// zrs/frame_matrix.hpp

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef ZRS_FRAME_MATRIX_HPP_
#define ZRS_FRAME_MATRIX_HPP_

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace zrs {

/// T x D matrix of frame-level features, one row per 10 ms frame.
/// Storage is row-major single-precision, matching the on-disk format.
class FrameMatrix {
 public:
  FrameMatrix() = default;
  FrameMatrix(std::uint32_t num_frames, std::uint32_t dim, float fill = 0.0f)
      : rows_(num_frames),
        cols_(dim),
        data_(static_cast<std::size_t>(num_frames) * dim, fill) {}

  std::uint32_t num_frames() const { return rows_; }
  std::uint32_t dim() const { return cols_; }
  bool empty() const { return data_.empty(); }

  float& at(std::uint32_t t, std::uint32_t d) {
    return data_[static_cast<std::size_t>(t) * cols_ + d];
  }
  float at(std::uint32_t t, std::uint32_t d) const {
    return data_[static_cast<std::size_t>(t) * cols_ + d];
  }

  std::span<float> row(std::uint32_t t) {
    return {data_.data() + static_cast<std::size_t>(t) * cols_, cols_};
  }
  std::span<const float> row(std::uint32_t t) const {
    return {data_.data() + static_cast<std::size_t>(t) * cols_, cols_};
  }

  std::vector<float>& data() { return data_; }
  const std::vector<float>& data() const { return data_; }

  bool all_finite() const {
    for (float v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  friend bool operator==(const FrameMatrix& a, const FrameMatrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::uint32_t rows_ = 0;
  std::uint32_t cols_ = 0;
  std::vector<float> data_;
};

/// Per-utterance mean/variance normalization. Each output dimension has zero
/// sample mean and unit population (1/T) variance; dimensions whose variance
/// falls below the 1e-10 floor come out as all zeros.
inline FrameMatrix cmvn(const FrameMatrix& m) {
  const std::uint32_t t_count = m.num_frames();
  const std::uint32_t dim = m.dim();
  if (t_count == 0) throw std::invalid_argument("cmvn: empty matrix");

  constexpr double kVarianceFloor = 1e-10;
  std::vector<double> mean(dim, 0.0), var(dim, 0.0);
  for (std::uint32_t t = 0; t < t_count; ++t)
    for (std::uint32_t d = 0; d < dim; ++d) mean[d] += m.at(t, d);
  for (std::uint32_t d = 0; d < dim; ++d) mean[d] /= t_count;
  for (std::uint32_t t = 0; t < t_count; ++t)
    for (std::uint32_t d = 0; d < dim; ++d) {
      double diff = m.at(t, d) - mean[d];
      var[d] += diff * diff;
    }
  for (std::uint32_t d = 0; d < dim; ++d) var[d] /= t_count;

  FrameMatrix out(t_count, dim);
  for (std::uint32_t d = 0; d < dim; ++d) {
    if (var[d] < kVarianceFloor) continue;  // constant dimension -> zeros
    double inv_std = 1.0 / std::sqrt(var[d]);
    for (std::uint32_t t = 0; t < t_count; ++t)
      out.at(t, d) = static_cast<float>((m.at(t, d) - mean[d]) * inv_std);
  }
  return out;
}

/// Stacks each frame with its +-context neighbors, replicating edge frames,
/// giving a T x D*(2*context+1) matrix.
inline FrameMatrix splice(const FrameMatrix& m, std::uint32_t context) {
  const std::uint32_t t_count = m.num_frames();
  const std::uint32_t dim = m.dim();
  if (t_count == 0) throw std::invalid_argument("splice: empty matrix");

  const std::uint32_t width = 2 * context + 1;
  FrameMatrix out(t_count, dim * width);
  for (std::uint32_t t = 0; t < t_count; ++t) {
    for (std::uint32_t w = 0; w < width; ++w) {
      std::int64_t src = static_cast<std::int64_t>(t) + w -
                         static_cast<std::int64_t>(context);
      if (src < 0) src = 0;
      if (src >= t_count) src = t_count - 1;
      for (std::uint32_t d = 0; d < dim; ++d)
        out.at(t, w * dim + d) = m.at(static_cast<std::uint32_t>(src), d);
    }
  }
  return out;
}

/// Copies the frame range [begin, end) into a new matrix.
inline FrameMatrix slice_frames(const FrameMatrix& m, std::uint32_t begin,
                                std::uint32_t end) {
  if (begin >= end || end > m.num_frames())
    throw std::invalid_argument("slice_frames: bad range");
  FrameMatrix out(end - begin, m.dim());
  for (std::uint32_t t = begin; t < end; ++t)
    for (std::uint32_t d = 0; d < m.dim(); ++d)
      out.at(t - begin, d) = m.at(t, d);
  return out;
}

}  // namespace zrs

#endif  // ZRS_FRAME_MATRIX_HPP_
