#include <Eigen/Core>
#include <algorithm>

#include "tsc/autodiff.hpp"
#include "tsc/error.hpp"

namespace tsc::ad {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutableMap = Eigen::Map<RowMatrix>;

struct ConvGeometry {
  std::size_t batch, in_channels, length, out_channels, kernel, out_length, stride;
  std::ptrdiff_t pad_left;

  std::size_t patch() const { return in_channels * kernel; }
};

// Samples per im2col block, sized so one column block stays cache-resident.
std::size_t block_samples(const ConvGeometry& g) {
  constexpr std::size_t kBlockDoubles = 1 << 16;
  const std::size_t per_sample = g.patch() * g.out_length;
  return std::clamp<std::size_t>(kBlockDoubles / std::max<std::size_t>(per_sample, 1), 1, g.batch);
}

// Lays the receptive windows of samples [b0, b0 + nb) out as columns:
// row (c, tau), column (b - b0, t).
void im2col(const double* x, const ConvGeometry& g, std::size_t b0, std::size_t nb, RowMatrix& out) {
  const std::size_t cols = nb * g.out_length;
  out.setZero(static_cast<Eigen::Index>(g.patch()), static_cast<Eigen::Index>(cols));
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    for (std::size_t tau = 0; tau < g.kernel; ++tau) {
      double* row = out.data() + (c * g.kernel + tau) * cols;
      for (std::size_t b = 0; b < nb; ++b) {
        const double* src = x + ((b0 + b) * g.in_channels + c) * g.length;
        double* dst = row + b * g.out_length;
        for (std::size_t t = 0; t < g.out_length; ++t) {
          const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t * g.stride + tau) - g.pad_left;
          if (s >= 0 && s < static_cast<std::ptrdiff_t>(g.length)) dst[t] = src[s];
        }
      }
    }
  }
}

void col2im_add(const RowMatrix& dcols, double* dx, const ConvGeometry& g, std::size_t b0, std::size_t nb) {
  const std::size_t cols = nb * g.out_length;
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    for (std::size_t tau = 0; tau < g.kernel; ++tau) {
      const double* row = dcols.data() + (c * g.kernel + tau) * cols;
      for (std::size_t b = 0; b < nb; ++b) {
        double* dst = dx + ((b0 + b) * g.in_channels + c) * g.length;
        const double* src = row + b * g.out_length;
        for (std::size_t t = 0; t < g.out_length; ++t) {
          const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t * g.stride + tau) - g.pad_left;
          if (s >= 0 && s < static_cast<std::ptrdiff_t>(g.length)) dst[s] += src[t];
        }
      }
    }
  }
}

// Copies [nb, C, T] slices into a [C, nb * T] matrix, or back.
void gather_channels(const double* src, std::size_t channels, std::size_t length, std::size_t b0, std::size_t nb,
                     RowMatrix& out) {
  out.resize(static_cast<Eigen::Index>(channels), static_cast<Eigen::Index>(nb * length));
  for (std::size_t b = 0; b < nb; ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      const double* s = src + ((b0 + b) * channels + c) * length;
      std::copy(s, s + length, out.data() + c * nb * length + b * length);
    }
  }
}

}  // namespace

Var conv1d(Var x, Var w, std::optional<Var> bias, Conv1dOptions options) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const bool batched = xv.rank() == 3;
  if (xv.rank() != 2 && xv.rank() != 3) {
    throw ShapeError("conv1d", "input", "expected [C, T] or [B, C, T], got " + shape_string(xv.shape()));
  }
  if (wv.rank() != 3) {
    throw ShapeError("conv1d", "kernel", "expected [C_out, C_in, L], got " + shape_string(wv.shape()));
  }
  ConvGeometry g{};
  g.batch = batched ? xv.dim(0) : 1;
  g.in_channels = xv.dim(batched ? 1 : 0);
  g.length = xv.dim(batched ? 2 : 1);
  g.out_channels = wv.dim(0);
  g.kernel = wv.dim(2);
  g.stride = options.stride;
  if (wv.dim(1) != g.in_channels) {
    throw ShapeError("conv1d", "channels", "input has " + std::to_string(g.in_channels) +
                                               " channels, kernel expects " + std::to_string(wv.dim(1)));
  }
  if (g.stride == 0) throw ShapeError("conv1d", "stride", "stride must be positive");
  if (bias && (bias->value().rank() != 1 || bias->value().dim(0) != g.out_channels)) {
    throw ShapeError("conv1d", "bias", "expected [" + std::to_string(g.out_channels) + "], got " +
                                           shape_string(bias->value().shape()));
  }
  if (options.padding == Padding::same) {
    if (g.stride != 1) throw ShapeError("conv1d", "stride", "same padding requires stride 1");
    g.out_length = g.length;
    g.pad_left = static_cast<std::ptrdiff_t>((g.kernel - 1) / 2);
  } else {
    if (g.length < g.kernel) {
      throw ShapeError("conv1d", "time", "valid convolution needs T >= L (T=" + std::to_string(g.length) +
                                             ", L=" + std::to_string(g.kernel) + ")");
    }
    g.out_length = (g.length - g.kernel) / g.stride + 1;
    g.pad_left = 0;
  }

  Shape out_shape = batched ? Shape{g.batch, g.out_channels, g.out_length} : Shape{g.out_channels, g.out_length};
  Tensor out(out_shape);
  const double* bv = bias ? bias->value().raw() : nullptr;
  const ConstMap wm(wv.raw(), g.out_channels, g.patch());
  const std::size_t block = block_samples(g);
  RowMatrix cols, y;
  for (std::size_t b0 = 0; b0 < g.batch; b0 += block) {
    const std::size_t nb = std::min(block, g.batch - b0);
    im2col(xv.raw(), g, b0, nb, cols);
    y.noalias() = wm * cols;
    for (std::size_t b = 0; b < nb; ++b) {
      for (std::size_t o = 0; o < g.out_channels; ++o) {
        const double* src = y.data() + o * nb * g.out_length + b * g.out_length;
        double* dst = out.raw() + ((b0 + b) * g.out_channels + o) * g.out_length;
        const double shift = bv ? bv[o] : 0.0;
        for (std::size_t t = 0; t < g.out_length; ++t) dst[t] = src[t] + shift;
      }
    }
  }

  std::vector<Var> inputs{x, w};
  if (bias) inputs.push_back(*bias);
  // Tape nodes have stable addresses, so the backward pass reads the input
  // and kernel in place and rebuilds the column matrix on demand.
  const Tensor* input = &xv;
  const Tensor* weights = &wv;
  return x.tape().record(
      std::move(out), std::move(inputs),
      [g, input, weights](const Tensor& og, std::span<Tensor* const> grads) {
        const std::size_t block = block_samples(g);
        const ConstMap wm(weights->raw(), g.out_channels, g.patch());
        RowMatrix gm, cols, dcols;
        for (std::size_t b0 = 0; b0 < g.batch; b0 += block) {
          const std::size_t nb = std::min(block, g.batch - b0);
          gather_channels(og.raw(), g.out_channels, g.out_length, b0, nb, gm);
          if (grads[1]) {
            MutableMap dw(grads[1]->raw(), g.out_channels, g.patch());
            im2col(input->raw(), g, b0, nb, cols);
            dw.noalias() += gm * cols.transpose();
          }
          if (grads.size() > 2 && grads[2]) {
            Eigen::Map<Eigen::VectorXd> db(grads[2]->raw(), static_cast<Eigen::Index>(g.out_channels));
            db += gm.rowwise().sum();
          }
          if (grads[0]) {
            dcols.noalias() = wm.transpose() * gm;
            col2im_add(dcols, grads[0]->raw(), g, b0, nb);
          }
        }
      });
}

}  // namespace tsc::ad
