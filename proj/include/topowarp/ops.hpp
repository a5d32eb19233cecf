#pragma once

#include "topowarp/tensor.hpp"

namespace topowarp::ops {

// Elementwise arithmetic over identically shaped tensors. All ops record a
// backward closure on the active tape when any input participates in
// gradient computation; with no active tape they are pure functions.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double s);
Tensor add_const(const Tensor& x, double c);

// Full reduction to a rank-0 scalar.
Tensor sum(const Tensor& x);

// Same data, new shape (numel preserved); gradient passes through.
Tensor reshape(const Tensor& x, Shape shape);

Tensor relu(const Tensor& x);
Tensor tanh(const Tensor& x);

// Cross-correlation of x[C_in,H,W] with w[C_out,C_in,k,k] plus bias b[C_out],
// zero padding `pad` = (k-1)/2 so spatial extents are preserved.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int pad);

// Per-channel normalization of x[C,H,W] to zero mean / unit variance over
// each H×W plane (biased variance, guarded by eps).
Tensor instance_norm2d(const Tensor& x, double eps = 1e-5);

// 2×2 stride-2 max pooling of x[C,H,W]; H and W must be even. Gradient is
// routed to the argmax; ties break to the first element in row-major order.
Tensor maxpool2d(const Tensor& x);

// Bilinear resampling of x[C,H,W] to (h_out, w_out) using align-corners-false
// sample positions: src = (dst + 0.5)·(in/out) − 0.5, clamped at borders.
Tensor resize_bilinear(const Tensor& x, std::size_t h_out, std::size_t w_out);

// resize_bilinear to (factor·H, factor·W); factor < 1 is rejected.
Tensor upsample_bilinear(const Tensor& x, int factor);

// Channel-wise dropout: in training each whole channel of x[C,H,W] is zeroed
// independently with probability p and survivors are scaled by 1/(1−p);
// identity in evaluation mode.
Tensor dropout2d(const Tensor& x, double p, Rng& rng, bool training);

// Warps img[C,H,W] by the displacement field disp[2,H,W] (channel 0 = row
// offsets, channel 1 = column offsets, voxel units):
//   out(r,c) = img(r + disp_r(r,c), c + disp_c(r,c))
// with bilinear interpolation and clamp-to-edge borders. Differentiable in
// both img and disp; the positional gradient is zero where the sample point
// was clamped outside the grid.
Tensor grid_sample(const Tensor& img, const Tensor& disp);

}  // namespace topowarp::ops
