#pragma once

#include "marl/common.hpp"

#include <vector>

namespace marl::nn {

/// H x W x C activation stored as an (H*W) x C matrix; spatial positions are
/// row-major, so row y*W + x holds the channel vector at (y, x).
struct FeatureMap {
  Index height = 0;
  Index width = 0;
  MatrixXd data;

  FeatureMap() = default;
  FeatureMap(Index h, Index w, Index channels) : height(h), width(w), data(MatrixXd::Zero(h * w, channels)) {}

  Index channels() const { return data.cols(); }
  Index positions() const { return data.rows(); }
  double& at(Index y, Index x, Index ch) { return data(y * width + x, ch); }
  double at(Index y, Index x, Index ch) const { return data(y * width + x, ch); }
};

/// Convolution kernel laid out for im2col: (k*k*Cin) x Cout, row index
/// (ky*k + kx)*Cin + ci.
struct ConvShape {
  Index kernel = 3;
  Index stride = 1;
};

/// Patch matrix for a "same"-padded convolution (zero padding (k-1)/2). Output
/// position (oy, ox) is centred on input (oy*stride, ox*stride).
MatrixXd im2col(const FeatureMap& x, const ConvShape& shape);

FeatureMap conv2d_forward(const FeatureMap& x, const MatrixXd& kernel, const VectorXd& bias, const ConvShape& shape);

struct Conv2dGrads {
  FeatureMap input;
  MatrixXd kernel;
  VectorXd bias;
};

Conv2dGrads conv2d_backward(const FeatureMap& x, const MatrixXd& kernel, const FeatureMap& dout,
                            const ConvShape& shape);

/// 2x2 max pooling with stride 2. `argmax` receives, per output entry, the
/// input row that won (first maximum on ties).
FeatureMap maxpool2(const FeatureMap& x, Eigen::MatrixXi* argmax = nullptr);
FeatureMap maxpool2_backward(Index in_height, Index in_width, const Eigen::MatrixXi& argmax, const FeatureMap& dout);

}  // namespace marl::nn
