#include "topowarp/ops.hpp"

#include <cblas.h>

#include <cmath>
#include <utility>

namespace topowarp::ops {

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

void check_rank3(const Tensor& x, const char* op) {
    if (x.rank() != 3)
        throw ShapeError(std::string(op) + ": expected rank-3 [C,H,W] tensor, got rank " +
                         std::to_string(x.rank()));
}

bool recording(const Tensor& a) { return Tape::active() && a.grad_path(); }
bool recording(const Tensor& a, const Tensor& b) {
    return Tape::active() && (a.grad_path() || b.grad_path());
}

// Marks y as tape-resident and registers the closure. Closures receive the
// output gradient via y.grad_if(); a null result means no downstream op ever
// touched y's gradient, so there is nothing to propagate.
template <typename Fn>
void record(Tensor& y, Fn&& fn) {
    y.mark_on_tape();
    Tape::active()->record(std::forward<Fn>(fn));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    Tensor y(a.shape());
    const std::size_t n = y.numel();
    for (std::size_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
    if (recording(a, b)) {
        Tensor at = a, bt = b, yt = y;
        record(y, [at, bt, yt]() mutable {
            const auto* gy = yt.grad_if();
            if (!gy) return;
            if (at.grad_path()) {
                auto& g = at.grad();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += (*gy)[i];
            }
            if (bt.grad_path()) {
                auto& g = bt.grad();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += (*gy)[i];
            }
        });
    }
    return y;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    Tensor y(a.shape());
    const std::size_t n = y.numel();
    for (std::size_t i = 0; i < n; ++i) y[i] = a[i] - b[i];
    if (recording(a, b)) {
        Tensor at = a, bt = b, yt = y;
        record(y, [at, bt, yt]() mutable {
            const auto* gy = yt.grad_if();
            if (!gy) return;
            if (at.grad_path()) {
                auto& g = at.grad();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += (*gy)[i];
            }
            if (bt.grad_path()) {
                auto& g = bt.grad();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] -= (*gy)[i];
            }
        });
    }
    return y;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    Tensor y(a.shape());
    const std::size_t n = y.numel();
    for (std::size_t i = 0; i < n; ++i) y[i] = a[i] * b[i];
    if (recording(a, b)) {
        Tensor at = a, bt = b, yt = y;
        record(y, [at, bt, yt]() mutable {
            const auto* gy = yt.grad_if();
            if (!gy) return;
            if (at.grad_path()) {
                auto& g = at.grad();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += (*gy)[i] * bt[i];
            }
            if (bt.grad_path()) {
                auto& g = bt.grad();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += (*gy)[i] * at[i];
            }
        });
    }
    return y;
}

Tensor div(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "div");
    Tensor y(a.shape());
    const std::size_t n = y.numel();
    for (std::size_t i = 0; i < n; ++i) y[i] = a[i] / b[i];
    if (recording(a, b)) {
        Tensor at = a, bt = b, yt = y;
        record(y, [at, bt, yt]() mutable {
            const auto* gy = yt.grad_if();
            if (!gy) return;
            if (at.grad_path()) {
                auto& g = at.grad();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += (*gy)[i] / bt[i];
            }
            if (bt.grad_path()) {
                auto& g = bt.grad();
                for (std::size_t i = 0; i < g.size(); ++i)
                    g[i] -= (*gy)[i] * at[i] / (bt[i] * bt[i]);
            }
        });
    }
    return y;
}

Tensor scale(const Tensor& x, double s) {
    Tensor y(x.shape());
    const std::size_t n = y.numel();
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] * s;
    if (recording(x)) {
        Tensor xt = x, yt = y;
        record(y, [xt, yt, s]() mutable {
            const auto* gy = yt.grad_if();
            if (!gy) return;
            auto& g = xt.grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += (*gy)[i] * s;
        });
    }
    return y;
}

Tensor add_const(const Tensor& x, double c) {
    Tensor y(x.shape());
    const std::size_t n = y.numel();
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] + c;
    if (recording(x)) {
        Tensor xt = x, yt = y;
        record(y, [xt, yt]() mutable {
            const auto* gy = yt.grad_if();
            if (!gy) return;
            auto& g = xt.grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += (*gy)[i];
        });
    }
    return y;
}

Tensor sum(const Tensor& x) {
    double acc = 0.0;
    const std::size_t n = x.numel();
    for (std::size_t i = 0; i < n; ++i) acc += x[i];
    Tensor y = Tensor::scalar(acc);
    if (recording(x)) {
        Tensor xt = x, yt = y;
        record(y, [xt, yt]() mutable {
            const auto* gy = yt.grad_if();
            if (!gy) return;
            const double g0 = (*gy)[0];
            auto& g = xt.grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += g0;
        });
    }
    return y;
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel())
        throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                         shape_str(shape));
    Tensor y = Tensor::from_data(std::move(shape), x.vec());
    if (recording(x)) {
        Tensor xt = x, yt = y;
        record(y, [xt, yt]() mutable {
            const auto* gy = yt.grad_if();
            if (!gy) return;
            auto& g = xt.grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += (*gy)[i];
        });
    }
    return y;
}

Tensor relu(const Tensor& x) {
    Tensor y(x.shape());
    const std::size_t n = y.numel();
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
    if (recording(x)) {
        Tensor xt = x, yt = y;
        record(y, [xt, yt]() mutable {
            const auto* gy = yt.grad_if();
            if (!gy) return;
            auto& g = xt.grad();
            // subgradient at exactly 0 fixed to 0
            for (std::size_t i = 0; i < g.size(); ++i)
                if (xt[i] > 0.0) g[i] += (*gy)[i];
        });
    }
    return y;
}

Tensor tanh(const Tensor& x) {
    Tensor y(x.shape());
    const std::size_t n = y.numel();
    for (std::size_t i = 0; i < n; ++i) y[i] = std::tanh(x[i]);
    if (recording(x)) {
        Tensor xt = x, yt = y;
        record(y, [xt, yt]() mutable {
            const auto* gy = yt.grad_if();
            if (!gy) return;
            auto& g = xt.grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += (*gy)[i] * (1.0 - yt[i] * yt[i]);
        });
    }
    return y;
}

namespace {

// Unfolds x[C,H,W] into a (C·k·k) × (H·W) matrix for zero-padded
// cross-correlation, so conv2d reduces to one matrix product.
void im2col(const double* x, std::size_t C, std::size_t H, std::size_t W, int k, int pad,
            double* col) {
    const std::size_t HW = H * W;
    std::size_t row = 0;
    for (std::size_t ci = 0; ci < C; ++ci) {
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj, ++row) {
                double* dst = col + row * HW;
                const int dr = ki - pad, dc = kj - pad;
                for (std::size_t r = 0; r < H; ++r) {
                    const long sr = static_cast<long>(r) + dr;
                    if (sr < 0 || sr >= static_cast<long>(H)) {
                        for (std::size_t c = 0; c < W; ++c) dst[r * W + c] = 0.0;
                        continue;
                    }
                    const double* src = x + (ci * H + sr) * W;
                    for (std::size_t c = 0; c < W; ++c) {
                        const long sc = static_cast<long>(c) + dc;
                        dst[r * W + c] =
                            (sc < 0 || sc >= static_cast<long>(W)) ? 0.0 : src[sc];
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatter-adds the column matrix back into image layout.
void col2im_add(const double* col, std::size_t C, std::size_t H, std::size_t W, int k, int pad,
                double* gx) {
    const std::size_t HW = H * W;
    std::size_t row = 0;
    for (std::size_t ci = 0; ci < C; ++ci) {
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj, ++row) {
                const double* src = col + row * HW;
                const int dr = ki - pad, dc = kj - pad;
                for (std::size_t r = 0; r < H; ++r) {
                    const long sr = static_cast<long>(r) + dr;
                    if (sr < 0 || sr >= static_cast<long>(H)) continue;
                    double* dst = gx + (ci * H + sr) * W;
                    for (std::size_t c = 0; c < W; ++c) {
                        const long sc = static_cast<long>(c) + dc;
                        if (sc >= 0 && sc < static_cast<long>(W)) dst[sc] += src[r * W + c];
                    }
                }
            }
        }
    }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int pad) {
    check_rank3(x, "conv2d");
    if (w.rank() != 4)
        throw ShapeError("conv2d: weight must be rank-4 [C_out,C_in,k,k], got rank " +
                         std::to_string(w.rank()));
    const std::size_t Ci = x.extent(0), H = x.extent(1), W = x.extent(2);
    const std::size_t Co = w.extent(0), k = w.extent(2);
    if (w.extent(1) != Ci)
        throw ShapeError("conv2d: input has " + std::to_string(Ci) + " channels but weight wants " +
                         std::to_string(w.extent(1)));
    if (w.extent(3) != k || k % 2 == 0) throw ShapeError("conv2d: kernel must be square and odd");
    if (b.rank() != 1 || b.extent(0) != Co)
        throw ShapeError("conv2d: bias must be [C_out]");
    if (pad != static_cast<int>(k - 1) / 2)
        throw ValueError("conv2d: pad must be (k-1)/2 to preserve extents");

    const std::size_t HW = H * W;
    const std::size_t K = Ci * k * k;
    auto col = std::make_shared<std::vector<double>>(K * HW);
    im2col(x.data(), Ci, H, W, static_cast<int>(k), pad, col->data());

    Tensor y(Shape{Co, H, W});
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, static_cast<int>(Co),
                static_cast<int>(HW), static_cast<int>(K), 1.0, w.data(), static_cast<int>(K),
                col->data(), static_cast<int>(HW), 0.0, y.data(), static_cast<int>(HW));
    for (std::size_t co = 0; co < Co; ++co) {
        const double bias = b[co];
        double* row = y.data() + co * HW;
        for (std::size_t p = 0; p < HW; ++p) row[p] += bias;
    }

    if (Tape::active() && (x.grad_path() || w.grad_path() || b.grad_path())) {
        Tensor xt = x, wt = w, bt = b, yt = y;
        const int ipad = pad, ik = static_cast<int>(k);
        record(y, [xt, wt, bt, yt, col, Ci, H, W, Co, K, HW, ik, ipad]() mutable {
            const auto* gy = yt.grad_if();
            if (!gy) return;
            if (bt.grad_path()) {
                auto& gb = bt.grad();
                for (std::size_t co = 0; co < Co; ++co) {
                    double acc = 0.0;
                    const double* row = gy->data() + co * HW;
                    for (std::size_t p = 0; p < HW; ++p) acc += row[p];
                    gb[co] += acc;
                }
            }
            if (wt.grad_path()) {
                // dW = dY · colᵀ, accumulated straight into the weight gradient
                cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, static_cast<int>(Co),
                            static_cast<int>(K), static_cast<int>(HW), 1.0, gy->data(),
                            static_cast<int>(HW), col->data(), static_cast<int>(HW), 1.0,
                            wt.grad().data(), static_cast<int>(K));
            }
            if (xt.grad_path()) {
                std::vector<double> gcol(K * HW);
                // dcol = Wᵀ · dY, then scatter back to image layout
                cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, static_cast<int>(K),
                            static_cast<int>(HW), static_cast<int>(Co), 1.0, wt.data(),
                            static_cast<int>(K), gy->data(), static_cast<int>(HW), 0.0,
                            gcol.data(), static_cast<int>(HW));
                col2im_add(gcol.data(), Ci, H, W, ik, ipad, xt.grad().data());
            }
        });
    }
    return y;
}

Tensor instance_norm2d(const Tensor& x, double eps) {
    check_rank3(x, "instance_norm2d");
    if (eps <= 0.0) throw ValueError("instance_norm2d: eps must be positive");
    const std::size_t C = x.extent(0), H = x.extent(1), W = x.extent(2);
    const std::size_t N = H * W;
    if (N < 2) throw ShapeError("instance_norm2d: plane must hold at least 2 values");

    Tensor y(x.shape());
    auto invstd = std::make_shared<std::vector<double>>(C);
    for (std::size_t ch = 0; ch < C; ++ch) {
        const double* xp = x.data() + ch * N;
        double* yp = y.data() + ch * N;
        double mean = 0.0;
        for (std::size_t i = 0; i < N; ++i) mean += xp[i];
        mean /= static_cast<double>(N);
        double var = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            const double d = xp[i] - mean;
            var += d * d;
        }
        var /= static_cast<double>(N);
        const double inv = 1.0 / std::sqrt(var + eps);
        (*invstd)[ch] = inv;
        for (std::size_t i = 0; i < N; ++i) yp[i] = (xp[i] - mean) * inv;
    }

    if (recording(x)) {
        Tensor xt = x, yt = y;
        record(y, [xt, yt, invstd, C, N]() mutable {
            const auto* gy = yt.grad_if();
            if (!gy) return;
            auto& gx = xt.grad();
            // dx = inv · (dy − mean(dy) − y·mean(dy∘y)), per channel
            for (std::size_t ch = 0; ch < C; ++ch) {
                const double* gyp = gy->data() + ch * N;
                const double* yp = yt.data() + ch * N;
                double mg = 0.0, mgy = 0.0;
                for (std::size_t i = 0; i < N; ++i) {
                    mg += gyp[i];
                    mgy += gyp[i] * yp[i];
                }
                mg /= static_cast<double>(N);
                mgy /= static_cast<double>(N);
                const double inv = (*invstd)[ch];
                double* gxp = gx.data() + ch * N;
                for (std::size_t i = 0; i < N; ++i)
                    gxp[i] += inv * (gyp[i] - mg - yp[i] * mgy);
            }
        });
    }
    return y;
}

Tensor maxpool2d(const Tensor& x) {
    check_rank3(x, "maxpool2d");
    const std::size_t C = x.extent(0), H = x.extent(1), W = x.extent(2);
    if (H % 2 != 0 || W % 2 != 0)
        throw ShapeError("maxpool2d: extents must be even, got " + shape_str(x.shape()));
    const std::size_t Ho = H / 2, Wo = W / 2;

    Tensor y(Shape{C, Ho, Wo});
    auto argmax = std::make_shared<std::vector<std::size_t>>(C * Ho * Wo);
    for (std::size_t ch = 0; ch < C; ++ch) {
        for (std::size_t r = 0; r < Ho; ++r) {
            for (std::size_t c = 0; c < Wo; ++c) {
                const std::size_t base = (ch * H + 2 * r) * W + 2 * c;
                // candidates in row-major order; strict > keeps the first tie
                std::size_t best = base;
                double bv = x[base];
                const std::size_t cand[3] = {base + 1, base + W, base + W + 1};
                for (std::size_t q : cand) {
                    if (x[q] > bv) {
                        bv = x[q];
                        best = q;
                    }
                }
                const std::size_t o = (ch * Ho + r) * Wo + c;
                y[o] = bv;
                (*argmax)[o] = best;
            }
        }
    }

    if (recording(x)) {
        Tensor xt = x, yt = y;
        record(y, [xt, yt, argmax]() mutable {
            const auto* gy = yt.grad_if();
            if (!gy) return;
            auto& g = xt.grad();
            for (std::size_t o = 0; o < gy->size(); ++o) g[(*argmax)[o]] += (*gy)[o];
        });
    }
    return y;
}

namespace {

// Precomputed 1-d sampling taps for align-corners-false bilinear resizing.
struct LinearTaps {
    std::vector<std::size_t> i0, i1;
    std::vector<double> w1;  // weight of i1; i0 gets (1 − w1)
};

LinearTaps make_taps(std::size_t n_in, std::size_t n_out) {
    LinearTaps t;
    t.i0.resize(n_out);
    t.i1.resize(n_out);
    t.w1.resize(n_out);
    const double ratio = static_cast<double>(n_in) / static_cast<double>(n_out);
    for (std::size_t o = 0; o < n_out; ++o) {
        double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
        if (src < 0.0) src = 0.0;
        const double hi = static_cast<double>(n_in - 1);
        if (src > hi) src = hi;
        std::size_t i0 = static_cast<std::size_t>(src);
        if (i0 >= n_in - 1 && n_in >= 2) i0 = n_in - 2;
        t.i0[o] = i0;
        t.i1[o] = (n_in >= 2) ? i0 + 1 : 0;
        t.w1[o] = src - static_cast<double>(i0);
    }
    return t;
}

}  // namespace

Tensor resize_bilinear(const Tensor& x, std::size_t h_out, std::size_t w_out) {
    check_rank3(x, "resize_bilinear");
    if (h_out == 0 || w_out == 0) throw ValueError("resize_bilinear: zero output extent");
    const std::size_t C = x.extent(0), H = x.extent(1), W = x.extent(2);
    const LinearTaps tr = make_taps(H, h_out), tc = make_taps(W, w_out);

    Tensor y(Shape{C, h_out, w_out});
    for (std::size_t ch = 0; ch < C; ++ch) {
        const double* xp = x.data() + ch * H * W;
        double* yp = y.data() + ch * h_out * w_out;
        for (std::size_t r = 0; r < h_out; ++r) {
            const double* row0 = xp + tr.i0[r] * W;
            const double* row1 = xp + tr.i1[r] * W;
            const double fr = tr.w1[r];
            for (std::size_t c = 0; c < w_out; ++c) {
                const double fc = tc.w1[c];
                const double top = row0[tc.i0[c]] * (1.0 - fc) + row0[tc.i1[c]] * fc;
                const double bot = row1[tc.i0[c]] * (1.0 - fc) + row1[tc.i1[c]] * fc;
                yp[r * w_out + c] = top * (1.0 - fr) + bot * fr;
            }
        }
    }

    if (recording(x)) {
        Tensor xt = x, yt = y;
        record(y, [xt, yt, C, H, W, h_out, w_out]() mutable {
            const auto* gy = yt.grad_if();
            if (!gy) return;
            // taps are a pure function of the extents; rebuild rather than store
            const LinearTaps tr = make_taps(H, h_out), tc = make_taps(W, w_out);
            auto& gx = xt.grad();
            for (std::size_t ch = 0; ch < C; ++ch) {
                double* gxp = gx.data() + ch * H * W;
                const double* gyp = gy->data() + ch * h_out * w_out;
                for (std::size_t r = 0; r < h_out; ++r) {
                    const double fr = tr.w1[r];
                    double* grow0 = gxp + tr.i0[r] * W;
                    double* grow1 = gxp + tr.i1[r] * W;
                    for (std::size_t c = 0; c < w_out; ++c) {
                        const double g = gyp[r * w_out + c];
                        const double fc = tc.w1[c];
                        grow0[tc.i0[c]] += g * (1.0 - fr) * (1.0 - fc);
                        grow0[tc.i1[c]] += g * (1.0 - fr) * fc;
                        grow1[tc.i0[c]] += g * fr * (1.0 - fc);
                        grow1[tc.i1[c]] += g * fr * fc;
                    }
                }
            }
        });
    }
    return y;
}

Tensor upsample_bilinear(const Tensor& x, int factor) {
    if (factor < 1) throw ValueError("upsample_bilinear: factor must be >= 1");
    check_rank3(x, "upsample_bilinear");
    return resize_bilinear(x, x.extent(1) * static_cast<std::size_t>(factor),
                           x.extent(2) * static_cast<std::size_t>(factor));
}

Tensor dropout2d(const Tensor& x, double p, Rng& rng, bool training) {
    check_rank3(x, "dropout2d");
    if (p < 0.0 || p >= 1.0) throw ValueError("dropout2d: p must be in [0, 1)");
    if (!training || p == 0.0) return x;

    const std::size_t C = x.extent(0), N = x.extent(1) * x.extent(2);
    auto keep_scale = std::make_shared<std::vector<double>>(C);
    const double s = 1.0 / (1.0 - p);
    for (std::size_t ch = 0; ch < C; ++ch) (*keep_scale)[ch] = rng.bernoulli(p) ? 0.0 : s;

    Tensor y(x.shape());
    for (std::size_t ch = 0; ch < C; ++ch) {
        const double k = (*keep_scale)[ch];
        const double* xp = x.data() + ch * N;
        double* yp = y.data() + ch * N;
        for (std::size_t i = 0; i < N; ++i) yp[i] = xp[i] * k;
    }

    if (recording(x)) {
        Tensor xt = x, yt = y;
        record(y, [xt, yt, keep_scale, C, N]() mutable {
            const auto* gy = yt.grad_if();
            if (!gy) return;
            auto& gx = xt.grad();
            for (std::size_t ch = 0; ch < C; ++ch) {
                const double k = (*keep_scale)[ch];
                if (k == 0.0) continue;
                const double* gyp = gy->data() + ch * N;
                double* gxp = gx.data() + ch * N;
                for (std::size_t i = 0; i < N; ++i) gxp[i] += gyp[i] * k;
            }
        });
    }
    return y;
}

namespace {

// Clamped bilinear sample coordinates along one axis: index pair, fraction,
// and whether the raw coordinate fell outside the grid (positional gradient
// is zero there).
struct SamplePoint {
    std::size_t i0, i1;
    double frac;
    bool clamped;
};

inline SamplePoint locate(double coord, std::size_t n) {
    SamplePoint s;
    s.clamped = false;
    const double hi = static_cast<double>(n - 1);
    if (coord <= 0.0) {
        s.clamped = coord < 0.0;
        coord = 0.0;
    } else if (coord >= hi) {
        s.clamped = coord > hi;
        coord = hi;
    }
    std::size_t i0 = static_cast<std::size_t>(coord);
    if (i0 >= n - 1 && n >= 2) i0 = n - 2;
    s.i0 = i0;
    s.i1 = (n >= 2) ? i0 + 1 : 0;
    s.frac = coord - static_cast<double>(i0);
    return s;
}

}  // namespace

Tensor grid_sample(const Tensor& img, const Tensor& disp) {
    check_rank3(img, "grid_sample");
    check_rank3(disp, "grid_sample");
    const std::size_t C = img.extent(0), H = img.extent(1), W = img.extent(2);
    if (disp.extent(0) != 2 || disp.extent(1) != H || disp.extent(2) != W)
        throw ShapeError("grid_sample: displacement must be [2," + std::to_string(H) + "," +
                         std::to_string(W) + "], got " + shape_str(disp.shape()));

    const std::size_t N = H * W;
    Tensor y(img.shape());
    const double* dr = disp.data();
    const double* dc = disp.data() + N;
    for (std::size_t r = 0; r < H; ++r) {
        for (std::size_t c = 0; c < W; ++c) {
            const std::size_t p = r * W + c;
            const SamplePoint sr = locate(static_cast<double>(r) + dr[p], H);
            const SamplePoint sc = locate(static_cast<double>(c) + dc[p], W);
            for (std::size_t ch = 0; ch < C; ++ch) {
                const double* ip = img.data() + ch * N;
                const double v00 = ip[sr.i0 * W + sc.i0], v01 = ip[sr.i0 * W + sc.i1];
                const double v10 = ip[sr.i1 * W + sc.i0], v11 = ip[sr.i1 * W + sc.i1];
                const double top = v00 * (1.0 - sc.frac) + v01 * sc.frac;
                const double bot = v10 * (1.0 - sc.frac) + v11 * sc.frac;
                y.data()[ch * N + p] = top * (1.0 - sr.frac) + bot * sr.frac;
            }
        }
    }

    if (recording(img, disp)) {
        Tensor it = img, dt = disp, yt = y;
        record(y, [it, dt, yt, C, H, W, N]() mutable {
            const auto* gy = yt.grad_if();
            if (!gy) return;
            const bool gi = it.grad_path(), gd = dt.grad_path();
            double* gip = gi ? it.grad().data() : nullptr;
            double* gdp = gd ? dt.grad().data() : nullptr;
            const double* drp = dt.data();
            const double* dcp = dt.data() + N;
            for (std::size_t r = 0; r < H; ++r) {
                for (std::size_t c = 0; c < W; ++c) {
                    const std::size_t p = r * W + c;
                    const SamplePoint sr = locate(static_cast<double>(r) + drp[p], H);
                    const SamplePoint sc = locate(static_cast<double>(c) + dcp[p], W);
                    double acc_r = 0.0, acc_c = 0.0;
                    for (std::size_t ch = 0; ch < C; ++ch) {
                        const double g = (*gy)[ch * N + p];
                        if (g == 0.0) continue;
                        const double* ip = it.data() + ch * N;
                        const double v00 = ip[sr.i0 * W + sc.i0], v01 = ip[sr.i0 * W + sc.i1];
                        const double v10 = ip[sr.i1 * W + sc.i0], v11 = ip[sr.i1 * W + sc.i1];
                        if (gi) {
                            double* gc = gip + ch * N;
                            gc[sr.i0 * W + sc.i0] += g * (1.0 - sr.frac) * (1.0 - sc.frac);
                            gc[sr.i0 * W + sc.i1] += g * (1.0 - sr.frac) * sc.frac;
                            gc[sr.i1 * W + sc.i0] += g * sr.frac * (1.0 - sc.frac);
                            gc[sr.i1 * W + sc.i1] += g * sr.frac * sc.frac;
                        }
                        if (gd) {
                            acc_r += g * ((v10 - v00) * (1.0 - sc.frac) + (v11 - v01) * sc.frac);
                            acc_c += g * ((v01 - v00) * (1.0 - sr.frac) + (v11 - v10) * sr.frac);
                        }
                    }
                    if (gd) {
                        if (!sr.clamped) gdp[p] += acc_r;
                        if (!sc.clamped) gdp[N + p] += acc_c;
                    }
                }
            }
        });
    }
    return y;
}

}  // namespace topowarp::ops
