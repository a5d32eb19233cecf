#include "topowarp/losses.hpp"

#include <cmath>

#include "topowarp/ops.hpp"

namespace topowarp::losses {

Tensor dice_loss(const Tensor& pred, const Tensor& target, double smooth) {
    if (pred.shape() != target.shape())
        throw ShapeError("dice_loss: extent mismatch " + shape_str(pred.shape()) + " vs " +
                         shape_str(target.shape()));
    if (smooth < 0.0) throw ValueError("dice_loss: smoothing must be non-negative");
    Tensor inter = ops::sum(ops::mul(pred, target));
    Tensor denom = ops::add(ops::sum(pred), ops::sum(target));
    Tensor ratio = ops::div(ops::add_const(ops::scale(inter, 2.0), smooth),
                            ops::add_const(denom, smooth));
    return ops::add_const(ops::scale(ratio, -1.0), 1.0);
}

Tensor grad_loss(const Tensor& phi) {
    if (phi.rank() != 3 || phi.extent(0) != 2)
        throw ShapeError("grad_loss: field must be [2,H,W], got " + shape_str(phi.shape()));
    const std::size_t H = phi.extent(1), W = phi.extent(2);
    if (H < 2 && W < 2) throw ShapeError("grad_loss: grid must extend beyond one voxel");
    const std::size_t N = H * W;

    double acc = 0.0;
    for (std::size_t ch = 0; ch < 2; ++ch) {
        const double* p = phi.data() + ch * N;
        for (std::size_t r = 0; r + 1 < H; ++r)
            for (std::size_t c = 0; c < W; ++c) {
                const double t = p[(r + 1) * W + c] - p[r * W + c];
                acc += t * t;
            }
        for (std::size_t r = 0; r < H; ++r)
            for (std::size_t c = 0; c + 1 < W; ++c) {
                const double t = p[r * W + c + 1] - p[r * W + c];
                acc += t * t;
            }
    }
    Tensor y = Tensor::scalar(acc);

    if (Tape::active() && phi.grad_path()) {
        Tensor pt = phi, yt = y;
        y.mark_on_tape();
        Tape::active()->record([pt, yt, H, W, N]() mutable {
            const auto* gy = yt.grad_if();
            if (!gy) return;
            const double g0 = (*gy)[0];
            auto& g = pt.grad();
            for (std::size_t ch = 0; ch < 2; ++ch) {
                const double* p = pt.data() + ch * N;
                double* gp = g.data() + ch * N;
                for (std::size_t r = 0; r + 1 < H; ++r)
                    for (std::size_t c = 0; c < W; ++c) {
                        const double t = p[(r + 1) * W + c] - p[r * W + c];
                        gp[(r + 1) * W + c] += 2.0 * t * g0;
                        gp[r * W + c] -= 2.0 * t * g0;
                    }
                for (std::size_t r = 0; r < H; ++r)
                    for (std::size_t c = 0; c + 1 < W; ++c) {
                        const double t = p[r * W + c + 1] - p[r * W + c];
                        gp[r * W + c + 1] += 2.0 * t * g0;
                        gp[r * W + c] -= 2.0 * t * g0;
                    }
            }
        });
    }
    return y;
}

std::size_t grad_loss_term_count(std::size_t h, std::size_t w) {
    return 2 * ((h - 1) * w + h * (w - 1));
}

double grad_loss_normalizer(std::size_t h, std::size_t w) {
    // mean over difference sites, with displacements measured relative to
    // half the grid extent (a displacement spanning the whole grid ≈ 2);
    // keeps the regularization weight dimensionless across resolutions
    return 4.0 / (static_cast<double>(grad_loss_term_count(h, w)) * static_cast<double>(h) *
                  static_cast<double>(w));
}

std::pair<Tensor, LossBreakdown> total_loss(const Tensor& y_soft, const Tensor& target,
                                            const Tensor& phi_bulk, const Tensor& phi_ft,
                                            double beta) {
    if (beta < 0.0) throw ValueError("total_loss: beta must be non-negative");
    Tensor dice = dice_loss(y_soft, target);

    const double nb = grad_loss_normalizer(phi_bulk.extent(1), phi_bulk.extent(2));
    const double nf = grad_loss_normalizer(phi_ft.extent(1), phi_ft.extent(2));

    LossBreakdown bd;
    bd.beta = beta;
    bd.dice_loss = dice.item();

    Tensor total;
    if (beta > 0.0) {
        Tensor gb = ops::scale(grad_loss(phi_bulk), nb);
        Tensor gf = ops::scale(grad_loss(phi_ft), nf);
        bd.grad_bulk = gb.item();
        bd.grad_ft = gf.item();
        total = ops::add(dice, ops::scale(ops::add(gb, gf), beta));
    } else {
        // report the terms for logging without routing gradients through them
        bd.grad_bulk = grad_loss(phi_bulk.detached()).item() * nb;
        bd.grad_ft = grad_loss(phi_ft.detached()).item() * nf;
        total = dice;
    }
    bd.total = total.item();
    return {total, bd};
}

double dice_metric(const BinaryMask& a, const BinaryMask& b) {
    if (a.h != b.h || a.w != b.w) throw ShapeError("dice_metric: extent mismatch");
    std::size_t inter = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.v.size(); ++i) {
        const bool pa = a.v[i] != 0, pb = b.v[i] != 0;
        inter += (pa && pb) ? 1 : 0;
        na += pa ? 1 : 0;
        nb += pb ? 1 : 0;
    }
    if (na + nb == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

namespace {

std::vector<std::pair<double, double>> coords(const BinaryMask& m) {
    std::vector<std::pair<double, double>> pts;
    for (std::size_t r = 0; r < m.h; ++r)
        for (std::size_t c = 0; c < m.w; ++c)
            if (m.at(r, c)) pts.emplace_back(static_cast<double>(r), static_cast<double>(c));
    return pts;
}

double directed_sq(const std::vector<std::pair<double, double>>& A,
                   const std::vector<std::pair<double, double>>& B) {
    double worst = 0.0;
    for (const auto& a : A) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& b : B) {
            const double dr = a.first - b.first, dc = a.second - b.second;
            const double d2 = dr * dr + dc * dc;
            if (d2 < best) best = d2;
            if (best == 0.0) break;
        }
        if (best > worst) worst = best;
    }
    return worst;
}

}  // namespace

double hausdorff(const BinaryMask& a, const BinaryMask& b) {
    if (a.h != b.h || a.w != b.w) throw ShapeError("hausdorff: extent mismatch");
    const auto pa = coords(a), pb = coords(b);
    if (pa.empty() || pb.empty())
        throw MetricError("hausdorff: undefined for an empty mask");
    return std::sqrt(std::max(directed_sq(pa, pb), directed_sq(pb, pa)));
}

}  // namespace topowarp::losses
