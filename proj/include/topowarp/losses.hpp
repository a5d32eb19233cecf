#pragma once

#include "topowarp/tensor.hpp"
#include "topowarp/topology.hpp"

namespace topowarp {

// One evaluated training objective. grad_bulk / grad_ft are the normalized
// gradient-energy terms as they enter the objective, so the invariant
//   total == dice_loss + beta * (grad_bulk + grad_ft)
// holds exactly.
struct LossBreakdown {
    double dice_loss = 0.0;
    double grad_bulk = 0.0;
    double grad_ft = 0.0;
    double beta = 0.0;
    double total = 0.0;
};

namespace losses {

// Soft Dice loss 1 − (2·Σ p·t + s)/(Σ p + Σ t + s) with smoothing s (default
// 1) so empty-vs-empty is well defined. Differentiable in pred.
Tensor dice_loss(const Tensor& pred, const Tensor& target, double smooth = 1.0);

// Gradient energy Σ‖∇d‖²: squared forward differences of both displacement
// channels in both spatial directions, summed over the grid (voxel units).
Tensor grad_loss(const Tensor& phi);

// Number of forward-difference terms grad_loss sums over a [2,H,W] field.
std::size_t grad_loss_term_count(std::size_t h, std::size_t w);

// Scale factor turning grad_loss into the normalized term used by the total
// objective: the mean squared forward difference with displacements measured
// in grid-normalized units (voxels divided by half the extent), which makes
// beta resolution-independent.
double grad_loss_normalizer(std::size_t h, std::size_t w);

// Total objective: dice + beta·(grad_bulk + grad_ft), with each grad term
// normalized by grad_loss_normalizer of its own grid.
std::pair<Tensor, LossBreakdown> total_loss(const Tensor& y_soft, const Tensor& target,
                                            const Tensor& phi_bulk, const Tensor& phi_ft,
                                            double beta);

// Overlap metric 2|A∩B| / (|A|+|B|); 1.0 when both masks are empty.
double dice_metric(const BinaryMask& a, const BinaryMask& b);

// Symmetric Hausdorff distance between foreground voxel sets, Euclidean
// metric in voxels. Throws MetricError when either mask is empty.
double hausdorff(const BinaryMask& a, const BinaryMask& b);

}  // namespace losses
}  // namespace topowarp
