#pragma once

#include "topowarp/tensor.hpp"

namespace topowarp {

// A displacement field is a Tensor[2,H,W]: channel 0 holds row-direction
// offsets, channel 1 column-direction offsets, both in voxel units of the
// field's own grid. The deformation it encodes is Φ(x) = x + d(x).
using DisplacementField = Tensor;

struct SmoothingConfig {
    int kernel_size = 5;
    double sigma = 2.0;
    bool enabled = true;
};

struct JacobianReport {
    Tensor det_grid;  // [H-1, W-1] forward-difference determinants
    double min_det = 0.0;
    double frac_nonpositive = 0.0;  // fraction of det_grid entries <= 0
};

namespace fields {

// v = 0.5·tanh(u): squashes every component strictly into (−0.5, +0.5) so
// each voxel moves less than half a voxel per application.
DisplacementField diffeo_activation(const DisplacementField& u);

// d_out(x) = d1(x) + d2(x + d1(x)), i.e. apply d1 then d2. Bilinear sampling
// with clamp-to-edge borders; differentiable w.r.t. both fields.
DisplacementField compose(const DisplacementField& d1, const DisplacementField& d2);

// The normalized Gaussian tap kernel used by gaussian_smooth, as a
// [k,k] tensor (sampled at integer offsets, renormalized to sum 1).
Tensor gaussian_kernel(const SmoothingConfig& cfg);

// Convolves each channel with the truncated, renormalized Gaussian using
// clamp-to-edge padding. Identity when cfg.enabled is false.
DisplacementField gaussian_smooth(const DisplacementField& d, const SmoothingConfig& cfg);

// Scaling-and-squaring integration: starting from d0 = v, repeat T times
// d_k = compose(d_{k-1}, d_{k-1}), smoothing after every step when enabled.
// Displacement magnitude is capped by 0.5·2^T per axis when v is activated.
DisplacementField integrate_ss(const DisplacementField& v, int T, const SmoothingConfig& cfg);

// Bilinearly resamples the field onto an (h_out, w_out) grid and multiplies
// each channel by its per-axis resolution ratio so values stay in voxel
// units of the target grid.
DisplacementField super_upsample(const DisplacementField& d, std::size_t h_out,
                                 std::size_t w_out);

// Warps img (rank 2 [H,W] or rank 3 [C,H,W]) by d: out(x) = img(x + d(x)),
// bilinear with clamp-to-edge borders.
Tensor warp(const Tensor& img, const DisplacementField& d);

// Forward-difference Jacobian of Φ(x) = x + d(x):
//   J = [[1 + ∂d_r/∂r, ∂d_r/∂c], [∂d_c/∂r, 1 + ∂d_c/∂c]]
// evaluated on the (H−1)×(W−1) grid of voxels owning both forward
// neighbours. Determinants ≤ 0 mark folding.
JacobianReport jacobian_report(const DisplacementField& d);

}  // namespace fields
}  // namespace topowarp
