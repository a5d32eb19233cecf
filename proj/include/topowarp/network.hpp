#pragma once

#include <string>
#include <utility>
#include <vector>

#include "topowarp/config.hpp"
#include "topowarp/fields.hpp"
#include "topowarp/topology.hpp"

namespace topowarp {

// Two 3×3 conv → instance-norm → ReLU stages; channel-wise dropout follows
// the block during training.
struct ConvBlock {
    Tensor w1, b1, w2, b2;
};

// 1×1 convolution head producing a 2-channel velocity field.
struct ConvHead {
    Tensor w, b;
};

// Shared encoder plus two decoder branches predicting velocity fields: a
// coarse bulk field at 1/8 resolution that positions the prior, and a
// fine-tuning field at 1/2 resolution that refines its shape.
struct WarpNet {
    ModelConfig cfg;
    std::vector<ConvBlock> encoder;  // cfg.levels blocks, 2× maxpool between
    std::vector<ConvBlock> bulk_up;  // 1 upsampling block
    ConvHead bulk_head;
    std::vector<ConvBlock> ft_up;  // 3 upsampling blocks
    ConvHead ft_head;

    // Learnable tensors with stable names, in a fixed traversal order.
    std::vector<std::pair<std::string, Tensor>> parameters();
    std::vector<Tensor> parameter_tensors();
    void set_requires_grad(bool v);
};

struct NetOutput {
    Tensor y_soft;             // [h,w] soft prediction in [0,1]
    DisplacementField phi_bulk;  // final bulk field (zeros when branch disabled)
    DisplacementField phi_ft;    // final fine-tuning field
    Tensor y_bulk;             // warped prior before fine-tuning (diagnostic)
};

namespace network {

// He-initialized conv weights, zero biases; both velocity heads are fully
// zero-initialized so a fresh model predicts exactly zero fields (identity
// transform) and training starts from the unwarped prior.
WarpNet build(const ModelConfig& cfg, Rng& rng);

// Velocity fields (u_bulk at (h/8, w/8), u_ft at (h/2, w/2)) before the
// squashing activation.
std::pair<Tensor, Tensor> forward_velocities(WarpNet& net, const Tensor& x, bool training,
                                             Rng& rng);

// Full pipeline: velocities → squashing activation → scaling-and-squaring
// integration (with smoothing) → super-upsampling to (2h,2w) → warp the
// upsampled prior by the bulk field, then by the fine-tuning field → maxpool
// back to (h,w). With super_upsample off, fields are resampled to (h,w) and
// the final pooling is skipped.
NetOutput forward(WarpNet& net, const Tensor& x, const Tensor& prior, bool training, Rng& rng);

// Binary prior as a [h,w] 0/1 tensor from the config's canonical-unit
// radius/thickness (scaled to the frame).
Tensor make_prior_tensor(const ModelConfig& cfg);

}  // namespace network
}  // namespace topowarp
