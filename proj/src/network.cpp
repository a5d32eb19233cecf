#include "topowarp/network.hpp"

#include <cmath>

#include "topowarp/ops.hpp"
#include "topowarp/synthdata.hpp"

namespace topowarp {

namespace {

Tensor he_conv_weight(std::size_t c_out, std::size_t c_in, std::size_t k, Rng& rng) {
    Tensor w(Shape{c_out, c_in, k, k});
    const double sd = std::sqrt(2.0 / static_cast<double>(c_in * k * k));
    for (std::size_t i = 0; i < w.numel(); ++i) w[i] = rng.normal(0.0, sd);
    return w;
}

ConvBlock make_block(std::size_t c_in, std::size_t c_out, Rng& rng) {
    ConvBlock b;
    b.w1 = he_conv_weight(c_out, c_in, 3, rng);
    b.b1 = Tensor(Shape{c_out});
    b.w2 = he_conv_weight(c_out, c_out, 3, rng);
    b.b2 = Tensor(Shape{c_out});
    return b;
}

Tensor run_block(const ConvBlock& blk, const Tensor& x, double dropout, bool training,
                 Rng& rng) {
    Tensor h = ops::relu(ops::instance_norm2d(ops::conv2d(x, blk.w1, blk.b1, 1)));
    h = ops::relu(ops::instance_norm2d(ops::conv2d(h, blk.w2, blk.b2, 1)));
    return ops::dropout2d(h, dropout, rng, training);
}

void collect_block(std::vector<std::pair<std::string, Tensor>>& out, const std::string& prefix,
                   const ConvBlock& b) {
    out.emplace_back(prefix + ".w1", b.w1);
    out.emplace_back(prefix + ".b1", b.b1);
    out.emplace_back(prefix + ".w2", b.w2);
    out.emplace_back(prefix + ".b2", b.b2);
}

}  // namespace

std::vector<std::pair<std::string, Tensor>> WarpNet::parameters() {
    std::vector<std::pair<std::string, Tensor>> out;
    for (std::size_t i = 0; i < encoder.size(); ++i)
        collect_block(out, "enc" + std::to_string(i), encoder[i]);
    for (std::size_t i = 0; i < bulk_up.size(); ++i)
        collect_block(out, "bulk_up" + std::to_string(i), bulk_up[i]);
    out.emplace_back("bulk_head.w", bulk_head.w);
    out.emplace_back("bulk_head.b", bulk_head.b);
    for (std::size_t i = 0; i < ft_up.size(); ++i)
        collect_block(out, "ft_up" + std::to_string(i), ft_up[i]);
    out.emplace_back("ft_head.w", ft_head.w);
    out.emplace_back("ft_head.b", ft_head.b);
    return out;
}

std::vector<Tensor> WarpNet::parameter_tensors() {
    std::vector<Tensor> out;
    for (auto& [name, t] : parameters()) out.push_back(t);
    return out;
}

void WarpNet::set_requires_grad(bool v) {
    for (auto& [name, t] : parameters()) t.set_requires_grad(v);
}

namespace network {

WarpNet build(const ModelConfig& cfg, Rng& rng) {
    if (cfg.levels < 4)
        throw ConfigError("network: need at least 4 levels for the decoder branches");
    const std::size_t div = std::size_t{1} << (cfg.levels - 1);
    if (cfg.h % div != 0 || cfg.w % div != 0)
        throw ConfigError("network: input extents must be divisible by " + std::to_string(div) +
                          ", got " + std::to_string(cfg.h) + "x" + std::to_string(cfg.w));

    WarpNet net;
    net.cfg = cfg;

    // encoder widths double per level: base, 2·base, 4·base, ...
    std::size_t c_in = 1;
    std::vector<std::size_t> widths;
    for (int lv = 0; lv < cfg.levels; ++lv) {
        const std::size_t c_out = static_cast<std::size_t>(cfg.base_channels) << lv;
        widths.push_back(c_out);
        net.encoder.push_back(make_block(c_in, c_out, rng));
        c_in = c_out;
    }

    const std::size_t bottleneck = widths.back();

    // bulk branch: one upsampling block (1/16 → 1/8), then a 1×1 head
    const std::size_t bulk_ch = widths[widths.size() - 2];
    net.bulk_up.push_back(make_block(bottleneck, bulk_ch, rng));
    net.bulk_head.w = Tensor(Shape{2, bulk_ch, 1, 1});  // zero-initialized
    net.bulk_head.b = Tensor(Shape{2});

    // fine-tuning branch: three upsampling blocks (1/16 → 1/2), then a head
    std::size_t ft_in = bottleneck;
    for (int i = 0; i < 3; ++i) {
        const std::size_t ft_out = widths[widths.size() - 2 - static_cast<std::size_t>(i)];
        net.ft_up.push_back(make_block(ft_in, ft_out, rng));
        ft_in = ft_out;
    }
    net.ft_head.w = Tensor(Shape{2, ft_in, 1, 1});  // zero-initialized
    net.ft_head.b = Tensor(Shape{2});

    net.set_requires_grad(true);
    return net;
}

std::pair<Tensor, Tensor> forward_velocities(WarpNet& net, const Tensor& x, bool training,
                                             Rng& rng) {
    if (x.rank() != 3 || x.extent(0) != 1 || x.extent(1) != net.cfg.h ||
        x.extent(2) != net.cfg.w)
        throw ShapeError("forward: expected input [1," + std::to_string(net.cfg.h) + "," +
                         std::to_string(net.cfg.w) + "], got " + shape_str(x.shape()));

    const double p = net.cfg.dropout;
    Tensor h = x;
    for (std::size_t lv = 0; lv < net.encoder.size(); ++lv) {
        if (lv > 0) h = ops::maxpool2d(h);
        h = run_block(net.encoder[lv], h, p, training, rng);
    }

    Tensor hb = h;
    for (ConvBlock& blk : net.bulk_up) {
        hb = ops::upsample_bilinear(hb, 2);
        hb = run_block(blk, hb, p, training, rng);
    }
    Tensor u_bulk = ops::conv2d(hb, net.bulk_head.w, net.bulk_head.b, 0);

    Tensor hf = h;
    for (ConvBlock& blk : net.ft_up) {
        hf = ops::upsample_bilinear(hf, 2);
        hf = run_block(blk, hf, p, training, rng);
    }
    Tensor u_ft = ops::conv2d(hf, net.ft_head.w, net.ft_head.b, 0);

    return {u_bulk, u_ft};
}

Tensor make_prior_tensor(const ModelConfig& cfg) {
    const double s = geometry_scale(cfg.h);
    const BinaryMask mask =
        synthdata::make_prior(cfg.h, cfg.w, cfg.prior_radius * s, cfg.prior_thickness * s);
    Tensor prior(Shape{cfg.h, cfg.w});
    for (std::size_t i = 0; i < prior.numel(); ++i) prior[i] = mask.v[i] ? 1.0 : 0.0;
    return prior;
}

NetOutput forward(WarpNet& net, const Tensor& x, const Tensor& prior, bool training, Rng& rng) {
    const ModelConfig& cfg = net.cfg;
    if (prior.rank() != 2 || prior.extent(0) != cfg.h || prior.extent(1) != cfg.w)
        throw ShapeError("forward: prior must be [" + std::to_string(cfg.h) + "," +
                         std::to_string(cfg.w) + "], got " + shape_str(prior.shape()));

    auto [u_bulk, u_ft] = forward_velocities(net, x, training, rng);

    // final fields live at (2h,2w) when super-upsampling, else at (h,w)
    const std::size_t Hf = cfg.super_upsample ? 2 * cfg.h : cfg.h;
    const std::size_t Wf = cfg.super_upsample ? 2 * cfg.w : cfg.w;

    const int T = cfg.integration_layers;
    DisplacementField phi_bulk, phi_ft;
    if (cfg.use_bulk) {
        DisplacementField d = fields::integrate_ss(fields::diffeo_activation(u_bulk), T,
                                                   cfg.smoothing);
        phi_bulk = fields::super_upsample(d, Hf, Wf);
    } else {
        phi_bulk = Tensor(Shape{2, Hf, Wf});
    }
    if (cfg.use_ft) {
        DisplacementField d =
            fields::integrate_ss(fields::diffeo_activation(u_ft), T, cfg.smoothing);
        phi_ft = fields::super_upsample(d, Hf, Wf);
    } else {
        phi_ft = Tensor(Shape{2, Hf, Wf});
    }

    Tensor prior3 = ops::reshape(prior, Shape{1, cfg.h, cfg.w});
    Tensor prior_up = (Hf == cfg.h) ? prior3 : ops::resize_bilinear(prior3, Hf, Wf);

    Tensor y_bulk = cfg.use_bulk ? ops::grid_sample(prior_up, phi_bulk) : prior_up;
    Tensor y_warp = cfg.use_ft ? ops::grid_sample(y_bulk, phi_ft) : y_bulk;
    Tensor y_small = cfg.super_upsample ? ops::maxpool2d(y_warp) : y_warp;

    NetOutput out;
    out.y_soft = ops::reshape(y_small, Shape{cfg.h, cfg.w});
    out.phi_bulk = phi_bulk;
    out.phi_ft = phi_ft;
    out.y_bulk = y_bulk;
    return out;
}

}  // namespace network
}  // namespace topowarp
