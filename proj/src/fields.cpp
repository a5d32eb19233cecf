#include "topowarp/fields.hpp"

#include <cmath>
#include <memory>

#include "topowarp/ops.hpp"

namespace topowarp::fields {

namespace {

void check_field(const Tensor& d, const char* op) {
    if (d.rank() != 3 || d.extent(0) != 2)
        throw ShapeError(std::string(op) + ": displacement field must be [2,H,W], got " +
                         shape_str(d.shape()));
}

}  // namespace

DisplacementField diffeo_activation(const DisplacementField& u) {
    check_field(u, "diffeo_activation");
    return ops::scale(ops::tanh(u), 0.5);
}

DisplacementField compose(const DisplacementField& d1, const DisplacementField& d2) {
    check_field(d1, "compose");
    check_field(d2, "compose");
    if (d1.shape() != d2.shape())
        throw ShapeError("compose: grids differ, " + shape_str(d1.shape()) + " vs " +
                         shape_str(d2.shape()));
    // resample d2 at the points d1 lands on, then add d1's own displacement
    return ops::add(d1, ops::grid_sample(d2, d1));
}

Tensor gaussian_kernel(const SmoothingConfig& cfg) {
    if (cfg.kernel_size < 1 || cfg.kernel_size % 2 == 0)
        throw ValueError("gaussian kernel size must be odd and positive");
    if (cfg.sigma <= 0.0) throw ValueError("gaussian sigma must be positive");
    const int k = cfg.kernel_size;
    const int half = k / 2;
    Tensor kernel(Shape{static_cast<std::size_t>(k), static_cast<std::size_t>(k)});
    double total = 0.0;
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) {
            const double dr = i - half, dc = j - half;
            const double v = std::exp(-(dr * dr + dc * dc) / (2.0 * cfg.sigma * cfg.sigma));
            kernel[static_cast<std::size_t>(i * k + j)] = v;
            total += v;
        }
    }
    for (std::size_t i = 0; i < kernel.numel(); ++i) kernel[i] /= total;
    return kernel;
}

DisplacementField gaussian_smooth(const DisplacementField& d, const SmoothingConfig& cfg) {
    check_field(d, "gaussian_smooth");
    if (!cfg.enabled) return d;
    const Tensor kernel = gaussian_kernel(cfg);
    const int k = cfg.kernel_size, half = k / 2;
    const std::size_t H = d.extent(1), W = d.extent(2);
    const std::size_t N = H * W;
    const long Hl = static_cast<long>(H), Wl = static_cast<long>(W);

    Tensor y(d.shape());
    for (std::size_t ch = 0; ch < 2; ++ch) {
        const double* dp = d.data() + ch * N;
        double* yp = y.data() + ch * N;
        for (long r = 0; r < Hl; ++r) {
            for (long c = 0; c < Wl; ++c) {
                double acc = 0.0;
                for (int i = 0; i < k; ++i) {
                    long sr = r + i - half;
                    sr = sr < 0 ? 0 : (sr >= Hl ? Hl - 1 : sr);
                    for (int j = 0; j < k; ++j) {
                        long sc = c + j - half;
                        sc = sc < 0 ? 0 : (sc >= Wl ? Wl - 1 : sc);
                        acc += kernel[static_cast<std::size_t>(i * k + j)] * dp[sr * Wl + sc];
                    }
                }
                yp[r * Wl + c] = acc;
            }
        }
    }

    if (Tape::active() && d.grad_path()) {
        Tensor dt = d, yt = y;
        y.mark_on_tape();
        Tape::active()->record([dt, yt, kernel, k, half, H, W, N, Hl, Wl]() mutable {
            const auto* gy = yt.grad_if();
            if (!gy) return;
            auto& gd = dt.grad();
            // adjoint of clamp-to-edge convolution: scatter each output
            // gradient through the same clamped taps it was gathered from
            for (std::size_t ch = 0; ch < 2; ++ch) {
                const double* gyp = gy->data() + ch * N;
                double* gdp = gd.data() + ch * N;
                for (long r = 0; r < Hl; ++r) {
                    for (long c = 0; c < Wl; ++c) {
                        const double g = gyp[r * Wl + c];
                        if (g == 0.0) continue;
                        for (int i = 0; i < k; ++i) {
                            long sr = r + i - half;
                            sr = sr < 0 ? 0 : (sr >= Hl ? Hl - 1 : sr);
                            for (int j = 0; j < k; ++j) {
                                long sc = c + j - half;
                                sc = sc < 0 ? 0 : (sc >= Wl ? Wl - 1 : sc);
                                gdp[sr * Wl + sc] +=
                                    g * kernel[static_cast<std::size_t>(i * k + j)];
                            }
                        }
                    }
                }
            }
        });
    }
    return y;
}

DisplacementField integrate_ss(const DisplacementField& v, int T, const SmoothingConfig& cfg) {
    check_field(v, "integrate_ss");
    if (T < 0) throw ValueError("integrate_ss: T must be >= 0");
    DisplacementField d = v;
    for (int step = 0; step < T; ++step) {
        d = compose(d, d);
        if (cfg.enabled) d = gaussian_smooth(d, cfg);
    }
    return d;
}

DisplacementField super_upsample(const DisplacementField& d, std::size_t h_out,
                                 std::size_t w_out) {
    check_field(d, "super_upsample");
    const std::size_t H = d.extent(1), W = d.extent(2);
    const double row_scale = static_cast<double>(h_out) / static_cast<double>(H);
    const double col_scale = static_cast<double>(w_out) / static_cast<double>(W);
    Tensor up = ops::resize_bilinear(d, h_out, w_out);
    // displacement values are in voxels of the source grid; convert to the
    // target grid by multiplying each channel with its own axis ratio
    Tensor scale_map(up.shape());
    const std::size_t N = h_out * w_out;
    for (std::size_t i = 0; i < N; ++i) scale_map[i] = row_scale;
    for (std::size_t i = N; i < 2 * N; ++i) scale_map[i] = col_scale;
    return ops::mul(up, scale_map);
}

Tensor warp(const Tensor& img, const DisplacementField& d) {
    check_field(d, "warp");
    if (img.rank() == 2) {
        Tensor x3 = ops::reshape(img, Shape{1, img.extent(0), img.extent(1)});
        Tensor y3 = ops::grid_sample(x3, d);
        return ops::reshape(y3, img.shape());
    }
    if (img.rank() == 3) return ops::grid_sample(img, d);
    throw ShapeError("warp: image must be rank 2 or 3, got " + shape_str(img.shape()));
}

JacobianReport jacobian_report(const DisplacementField& d) {
    check_field(d, "jacobian_report");
    const std::size_t H = d.extent(1), W = d.extent(2);
    if (H < 2 || W < 2)
        throw ShapeError("jacobian_report: grid must be at least 2x2, got " +
                         shape_str(d.shape()));
    const std::size_t N = H * W;
    const double* dr = d.data();
    const double* dc = d.data() + N;

    JacobianReport rep;
    rep.det_grid = Tensor(Shape{H - 1, W - 1});
    rep.min_det = std::numeric_limits<double>::infinity();
    std::size_t nonpos = 0;
    for (std::size_t r = 0; r + 1 < H; ++r) {
        for (std::size_t c = 0; c + 1 < W; ++c) {
            const std::size_t p = r * W + c;
            const double a = 1.0 + (dr[p + W] - dr[p]);  // 1 + d(d_r)/dr
            const double b = dr[p + 1] - dr[p];          //     d(d_r)/dc
            const double e = dc[p + W] - dc[p];          //     d(d_c)/dr
            const double f = 1.0 + (dc[p + 1] - dc[p]);  // 1 + d(d_c)/dc
            const double det = a * f - b * e;
            rep.det_grid[r * (W - 1) + c] = det;
            if (det <= 0.0) ++nonpos;
            if (det < rep.min_det) rep.min_det = det;
        }
    }
    rep.frac_nonpositive =
        static_cast<double>(nonpos) / static_cast<double>((H - 1) * (W - 1));
    return rep;
}

}  // namespace topowarp::fields
