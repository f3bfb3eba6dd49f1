#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

#include "kshape/tensor.hpp"

namespace kshape::nn {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

/// One group of same-shaped kernels inside a mixed-kernel layer. Stride is
/// always 1 and padding keeps the input's spatial size.
template <typename T>
struct ConvBranch {
  std::string name;
  int kernel_height = 1;
  int kernel_width = 1;
  int in_channels = 1;
  int out_channels = 1;
  Tensor<T> weights;  // (out_channels, in_channels, kh, kw)
  Tensor<T> bias;     // (out_channels)

  ConvBranch() = default;
  ConvBranch(std::string branch_name, int kh, int kw, int in_ch, int out_ch)
      : name(std::move(branch_name)),
        kernel_height(kh),
        kernel_width(kw),
        in_channels(in_ch),
        out_channels(out_ch),
        weights(Shape{std::size_t(out_ch), std::size_t(in_ch), std::size_t(kh),
                      std::size_t(kw)}),
        bias(Shape{std::size_t(out_ch)}) {
    if (kh < 1 || kw < 1 || kh % 2 == 0 || kw % 2 == 0) {
      throw ShapeError(name + ": kernel dims must be odd and positive, got " +
                       std::to_string(kh) + "x" + std::to_string(kw));
    }
  }

  int pad_top() const { return (kernel_height - 1) / 2; }
  int pad_left() const { return (kernel_width - 1) / 2; }
  std::size_t patch_size() const {
    return std::size_t(in_channels) * kernel_height * kernel_width;
  }
};

template <typename T>
struct ConvGrads {
  Tensor<T> input;
  Tensor<T> weights;
  Tensor<T> bias;
};

namespace detail {

template <typename T>
void check_conv_input(const Tensor<T>& input, const ConvBranch<T>& branch) {
  if (input.rank() != 4 || input.dim(1) != std::size_t(branch.in_channels)) {
    throw ShapeError("conv branch '" + branch.name + "': expected input (N, " +
                     std::to_string(branch.in_channels) + ", H, W), got " +
                     to_string(input.shape()));
  }
}

// col is (patch_size, H*W) row-major for sample n.
template <typename T>
void im2col(const Tensor<T>& input, std::size_t n, const ConvBranch<T>& b,
            std::vector<T>& col) {
  const int c_in = b.in_channels, h = int(input.dim(2)), w = int(input.dim(3));
  const int kh = b.kernel_height, kw = b.kernel_width;
  const int ph = b.pad_top(), pw = b.pad_left();
  const std::size_t hw = std::size_t(h) * w;
  col.resize(b.patch_size() * hw);
  const T* src = input.data().data() + n * c_in * hw;
  std::size_t row = 0;
  for (int ic = 0; ic < c_in; ++ic) {
    const T* plane = src + ic * hw;
    for (int dy = 0; dy < kh; ++dy) {
      for (int dx = 0; dx < kw; ++dx, ++row) {
        T* dst = col.data() + row * hw;
        const int sx0 = dx - pw;
        for (int y = 0; y < h; ++y) {
          const int sy = y + dy - ph;
          T* out = dst + std::size_t(y) * w;
          if (sy < 0 || sy >= h) {
            std::fill(out, out + w, T{0});
            continue;
          }
          const T* in_row = plane + std::size_t(sy) * w;
          for (int x = 0; x < w; ++x) {
            const int sx = x + sx0;
            out[x] = (sx >= 0 && sx < w) ? in_row[sx] : T{0};
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const std::vector<T>& col, const ConvBranch<T>& b, int h, int w,
                T* dst) {
  const int kh = b.kernel_height, kw = b.kernel_width;
  const int ph = b.pad_top(), pw = b.pad_left();
  const std::size_t hw = std::size_t(h) * w;
  std::size_t row = 0;
  for (int ic = 0; ic < b.in_channels; ++ic) {
    T* plane = dst + ic * hw;
    for (int dy = 0; dy < kh; ++dy) {
      for (int dx = 0; dx < kw; ++dx, ++row) {
        const T* src = col.data() + row * hw;
        for (int y = 0; y < h; ++y) {
          const int sy = y + dy - ph;
          if (sy < 0 || sy >= h) continue;
          T* out_row = plane + std::size_t(sy) * w;
          const T* in = src + std::size_t(y) * w;
          for (int x = 0; x < w; ++x) {
            const int sx = x + dx - pw;
            if (sx >= 0 && sx < w) out_row[sx] += in[x];
          }
        }
      }
    }
  }
}

}  // namespace detail

/// Same-padded stride-1 convolution of `input` (N, Cin, H, W) with every
/// kernel of `branch`; returns (N, Cout, H, W).
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const ConvBranch<T>& branch) {
  detail::check_conv_input(input, branch);
  const std::size_t n_batch = input.dim(0), h = input.dim(2), w = input.dim(3);
  const std::size_t hw = h * w, c_out = branch.out_channels;
  Tensor<T> output(Shape{n_batch, c_out, h, w});
  ConstMatrixMap<T> weights(branch.weights.data().data(), c_out, branch.patch_size());
  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> bias(branch.bias.data().data(),
                                                             c_out);
  std::vector<T> col;
  for (std::size_t n = 0; n < n_batch; ++n) {
    detail::im2col(input, n, branch, col);
    ConstMatrixMap<T> patches(col.data(), branch.patch_size(), hw);
    MatrixMap<T> out(output.data().data() + n * c_out * hw, c_out, hw);
    out.noalias() = weights * patches;
    out.colwise() += bias;
  }
  return output;
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& input, const ConvBranch<T>& branch,
                             const Tensor<T>& upstream) {
  detail::check_conv_input(input, branch);
  const std::size_t n_batch = input.dim(0), h = input.dim(2), w = input.dim(3);
  const std::size_t hw = h * w, c_out = branch.out_channels;
  const Shape expected{n_batch, c_out, h, w};
  if (upstream.shape() != expected) {
    throw ShapeError("conv branch '" + branch.name + "': upstream gradient shape " +
                     to_string(upstream.shape()) + " != output shape " +
                     to_string(expected));
  }
  ConvGrads<T> grads{Tensor<T>(input.shape()), Tensor<T>(branch.weights.shape()),
                     Tensor<T>(branch.bias.shape())};
  const std::size_t patch = branch.patch_size();
  ConstMatrixMap<T> weights(branch.weights.data().data(), c_out, patch);
  MatrixMap<T> d_weights(grads.weights.data().data(), c_out, patch);
  Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> d_bias(grads.bias.data().data(),
                                                         c_out);
  std::vector<T> col;
  std::vector<T> d_col(patch * hw);
  for (std::size_t n = 0; n < n_batch; ++n) {
    ConstMatrixMap<T> d_out(upstream.data().data() + n * c_out * hw, c_out, hw);
    detail::im2col(input, n, branch, col);
    ConstMatrixMap<T> patches(col.data(), patch, hw);
    d_weights.noalias() += d_out * patches.transpose();
    // Plain loop: Eigen reductions over unaligned maps change their summation
    // order with the buffer address, which breaks run-to-run determinism.
    for (std::size_t oc = 0; oc < c_out; ++oc) {
      const T* row = upstream.data().data() + (n * c_out + oc) * hw;
      T sum{0};
      for (std::size_t i = 0; i < hw; ++i) sum += row[i];
      d_bias[oc] += sum;
    }
    MatrixMap<T> d_patches(d_col.data(), patch, hw);
    d_patches.noalias() = weights.transpose() * d_out;
    detail::col2im_add(d_col, branch, int(h), int(w),
                       grads.input.data().data() + n * branch.in_channels * hw);
  }
  return grads;
}

/// Direct sliding-window convolution. Counts every scalar multiplication it
/// executes, padded taps included, into `mult_counter` when given. Used as the
/// independent oracle for both the GEMM path and the analytic cost model.
template <typename T>
Tensor<T> conv2d_forward_direct(const Tensor<T>& input, const ConvBranch<T>& branch,
                                std::uint64_t* mult_counter = nullptr) {
  detail::check_conv_input(input, branch);
  const int n_batch = int(input.dim(0)), h = int(input.dim(2)), w = int(input.dim(3));
  const int kh = branch.kernel_height, kw = branch.kernel_width;
  const int ph = branch.pad_top(), pw = branch.pad_left();
  Tensor<T> output(Shape{std::size_t(n_batch), std::size_t(branch.out_channels),
                         std::size_t(h), std::size_t(w)});
  std::uint64_t mults = 0;
  for (int n = 0; n < n_batch; ++n) {
    for (int oc = 0; oc < branch.out_channels; ++oc) {
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          T acc = branch.bias[oc];
          for (int ic = 0; ic < branch.in_channels; ++ic) {
            for (int dy = 0; dy < kh; ++dy) {
              for (int dx = 0; dx < kw; ++dx) {
                const int sy = y + dy - ph, sx = x + dx - pw;
                const bool inside = sy >= 0 && sy < h && sx >= 0 && sx < w;
                const T pixel = inside ? input.at(n, ic, sy, sx) : T{0};
                acc += pixel * branch.weights.at(oc, ic, dy, dx);
                ++mults;
              }
            }
          }
          output.at(n, oc, y, x) = acc;
        }
      }
    }
  }
  if (mult_counter) *mult_counter += mults;
  return output;
}

}  // namespace kshape::nn
