#include "marl/nn/conv.hpp"

namespace marl::nn {

namespace {

Index out_extent(Index in, Index stride) { return (in + stride - 1) / stride; }

void check_shape(const FeatureMap& x, const MatrixXd& kernel, const ConvShape& shape) {
  if (shape.stride < 1) throw Error("shape_mismatch", "stride must be >= 1");
  if (shape.kernel < 1 || shape.kernel % 2 == 0) throw Error("shape_mismatch", "kernel size must be odd");
  if (kernel.rows() != shape.kernel * shape.kernel * x.channels()) {
    throw Error("shape_mismatch", "kernel rows do not match k*k*Cin");
  }
  if (x.positions() != x.height * x.width) throw Error("shape_mismatch", "feature map storage is inconsistent");
}

}  // namespace

MatrixXd im2col(const FeatureMap& x, const ConvShape& shape) {
  const Index k = shape.kernel;
  const Index pad = (k - 1) / 2;
  const Index oh = out_extent(x.height, shape.stride);
  const Index ow = out_extent(x.width, shape.stride);
  const Index cin = x.channels();
  MatrixXd patches = MatrixXd::Zero(oh * ow, k * k * cin);
  for (Index oy = 0; oy < oh; ++oy) {
    for (Index ox = 0; ox < ow; ++ox) {
      const Index row = oy * ow + ox;
      for (Index ky = 0; ky < k; ++ky) {
        const Index iy = oy * shape.stride + ky - pad;
        if (iy < 0 || iy >= x.height) continue;
        for (Index kx = 0; kx < k; ++kx) {
          const Index ix = ox * shape.stride + kx - pad;
          if (ix < 0 || ix >= x.width) continue;
          patches.block(row, (ky * k + kx) * cin, 1, cin) = x.data.row(iy * x.width + ix);
        }
      }
    }
  }
  return patches;
}

FeatureMap conv2d_forward(const FeatureMap& x, const MatrixXd& kernel, const VectorXd& bias, const ConvShape& shape) {
  check_shape(x, kernel, shape);
  if (bias.size() != kernel.cols()) throw Error("shape_mismatch", "bias length differs from Cout");
  FeatureMap y;
  y.height = out_extent(x.height, shape.stride);
  y.width = out_extent(x.width, shape.stride);
  y.data.noalias() = im2col(x, shape) * kernel;
  y.data.rowwise() += bias.transpose();
  return y;
}

Conv2dGrads conv2d_backward(const FeatureMap& x, const MatrixXd& kernel, const FeatureMap& dout,
                            const ConvShape& shape) {
  check_shape(x, kernel, shape);
  const Index k = shape.kernel;
  const Index pad = (k - 1) / 2;
  const Index cin = x.channels();
  Conv2dGrads g;
  g.kernel.noalias() = im2col(x, shape).transpose() * dout.data;
  g.bias = dout.data.colwise().sum().transpose();

  const MatrixXd dpatches = dout.data * kernel.transpose();
  g.input = FeatureMap(x.height, x.width, cin);
  for (Index oy = 0; oy < dout.height; ++oy) {
    for (Index ox = 0; ox < dout.width; ++ox) {
      const Index row = oy * dout.width + ox;
      for (Index ky = 0; ky < k; ++ky) {
        const Index iy = oy * shape.stride + ky - pad;
        if (iy < 0 || iy >= x.height) continue;
        for (Index kx = 0; kx < k; ++kx) {
          const Index ix = ox * shape.stride + kx - pad;
          if (ix < 0 || ix >= x.width) continue;
          g.input.data.row(iy * x.width + ix) += dpatches.block(row, (ky * k + kx) * cin, 1, cin);
        }
      }
    }
  }
  return g;
}

FeatureMap maxpool2(const FeatureMap& x, Eigen::MatrixXi* argmax) {
  if (x.height % 2 != 0 || x.width % 2 != 0) throw Error("shape_mismatch", "maxpool2 needs even dimensions");
  FeatureMap y(x.height / 2, x.width / 2, x.channels());
  if (argmax) argmax->resize(y.positions(), y.channels());
  for (Index oy = 0; oy < y.height; ++oy) {
    for (Index ox = 0; ox < y.width; ++ox) {
      const Index out_row = oy * y.width + ox;
      const Index taps[4] = {(2 * oy) * x.width + 2 * ox, (2 * oy) * x.width + 2 * ox + 1,
                             (2 * oy + 1) * x.width + 2 * ox, (2 * oy + 1) * x.width + 2 * ox + 1};
      for (Index ch = 0; ch < x.channels(); ++ch) {
        Index best = taps[0];
        for (int t = 1; t < 4; ++t) {
          if (x.data(taps[t], ch) > x.data(best, ch)) best = taps[t];
        }
        y.data(out_row, ch) = x.data(best, ch);
        if (argmax) (*argmax)(out_row, ch) = static_cast<int>(best);
      }
    }
  }
  return y;
}

FeatureMap maxpool2_backward(Index in_height, Index in_width, const Eigen::MatrixXi& argmax, const FeatureMap& dout) {
  FeatureMap dx(in_height, in_width, dout.channels());
  for (Index r = 0; r < dout.positions(); ++r) {
    for (Index ch = 0; ch < dout.channels(); ++ch) dx.data(argmax(r, ch), ch) += dout.data(r, ch);
  }
  return dx;
}

}  // namespace marl::nn
