#include "topowarp/synthdata.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "topowarp/pgm.hpp"

namespace topowarp::synthdata {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Stream tags for per-split sample derivation and training augmentation.
constexpr std::uint64_t kTrainTag = 1, kValTag = 2, kTestTag = 3, kAugTag = 4;

BinaryMask annulus_mask(std::size_t h, std::size_t w, double cr, double cc, double radius,
                        double thickness) {
    BinaryMask mask(h, w);
    const double lo = radius - thickness / 2.0, hi = radius + thickness / 2.0;
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            const double dr = static_cast<double>(r) - cr;
            const double dc = static_cast<double>(c) - cc;
            const double d = std::sqrt(dr * dr + dc * dc);
            mask.at(r, c) = (d >= lo && d <= hi) ? 1 : 0;
        }
    }
    return mask;
}

}  // namespace

BinaryMask make_prior(std::size_t h, std::size_t w, double radius, double thickness) {
    if (radius <= 0.0 || thickness <= 0.0)
        throw ConfigError("make_prior: radius and thickness must be positive");
    if (thickness >= 2.0 * radius)
        throw ConfigError("make_prior: thickness >= 2*radius degenerates to a disk");
    const double cr = (static_cast<double>(h) - 1.0) / 2.0;
    const double cc = (static_cast<double>(w) - 1.0) / 2.0;
    const double reach = radius + thickness / 2.0;
    if (reach > cr || reach > cc)
        throw ConfigError("make_prior: annulus of reach " + std::to_string(reach) +
                          " exceeds a " + std::to_string(h) + "x" + std::to_string(w) + " frame");
    BinaryMask mask = annulus_mask(h, w, cr, cc, radius, thickness);
    const auto [b0, b1] = topology::betti_numbers(mask);
    if (b0 != 1 || b1 != 1)
        throw ConfigError("make_prior: discretized annulus lost its topology (b0=" +
                          std::to_string(b0) + ", b1=" + std::to_string(b1) +
                          "); thickness too small for this frame");
    return mask;
}

SynthSample generate_sample(std::uint64_t stream_seed, const DatasetConfig& cfg) {
    Rng rng(stream_seed);
    const double s = geometry_scale(cfg.h);
    const double hmax = static_cast<double>(cfg.h) - 1.0;
    const double wmax = static_cast<double>(cfg.w) - 1.0;

    SynthSample out;
    out.seed = stream_seed;

    // geometry: re-draw on the rare thin-ring discretization break
    for (int attempt = 0;; ++attempt) {
        out.radius = rng.uniform(cfg.radius_lo * s, cfg.radius_hi * s);
        out.thickness = rng.uniform(cfg.thickness_lo * s, cfg.thickness_hi * s);
        const double reach = out.radius + out.thickness / 2.0;
        // near-centered placement (like cropped scans): jitter around the
        // frame center, clamped so the ring keeps a 2-voxel border margin
        const double jr = cfg.center_jitter * static_cast<double>(cfg.h);
        const double jc = cfg.center_jitter * static_cast<double>(cfg.w);
        const double lo_r = std::max(hmax / 2.0 - jr, reach + 2.0);
        const double hi_r = std::min(hmax / 2.0 + jr, hmax - reach - 2.0);
        const double lo_c = std::max(wmax / 2.0 - jc, reach + 2.0);
        const double hi_c = std::min(wmax / 2.0 + jc, wmax - reach - 2.0);
        if (lo_r > hi_r || lo_c > hi_c)
            throw ConfigError("generate_sample: annulus reach leaves no room for the "
                              "configured center_jitter");
        out.center_r = rng.uniform(lo_r, hi_r);
        out.center_c = rng.uniform(lo_c, hi_c);
        out.label = annulus_mask(cfg.h, cfg.w, out.center_r, out.center_c, out.radius,
                                 out.thickness);
        if (topology::betti_numbers(out.label) == std::pair<int, int>{1, 1}) break;
        if (attempt >= 50)
            throw ConfigError("generate_sample: cannot draw a valid annulus; check the "
                              "dataset radius/thickness ranges");
    }

    // intensity image: dim sloped background, bright wall, mid-bright pool
    const double base = rng.uniform(0.05, 0.25);
    const double ramp_r = rng.uniform(-0.1, 0.1);
    const double ramp_c = rng.uniform(-0.1, 0.1);
    const double wall_v = rng.uniform(0.65, 0.95);
    const double pool_v = rng.uniform(0.35, 0.6);

    out.image = Tensor(Shape{1, cfg.h, cfg.w});
    const double pool_r = out.radius - out.thickness / 2.0;
    for (std::size_t r = 0; r < cfg.h; ++r) {
        for (std::size_t c = 0; c < cfg.w; ++c) {
            double v = base + ramp_r * static_cast<double>(r) / static_cast<double>(cfg.h) +
                       ramp_c * static_cast<double>(c) / static_cast<double>(cfg.w);
            const double dr = static_cast<double>(r) - out.center_r;
            const double dc = static_cast<double>(c) - out.center_c;
            if (dr * dr + dc * dc < pool_r * pool_r) v = pool_v;
            if (out.label.at(r, c)) v = wall_v;
            out.image[r * cfg.w + c] = v;
        }
    }

    // distractor blobs, kept clear of the annulus
    const int n_blobs = cfg.distractor_max > 0
                            ? static_cast<int>(rng.next_index(
                                  static_cast<std::uint64_t>(cfg.distractor_max) + 1))
                            : 0;
    const double reach = out.radius + out.thickness / 2.0;
    for (int bi = 0; bi < n_blobs; ++bi) {
        for (int attempt = 0; attempt < 10; ++attempt) {
            const double brad = rng.uniform(2.0 * s, 6.0 * s);
            const double bcr = rng.uniform(brad, hmax - brad);
            const double bcc = rng.uniform(brad, wmax - brad);
            const double bv = rng.uniform(0.3, 0.8);
            const double dr = bcr - out.center_r, dc = bcc - out.center_c;
            if (std::sqrt(dr * dr + dc * dc) < reach + brad + 2.0) continue;  // too close
            for (std::size_t r = 0; r < cfg.h; ++r)
                for (std::size_t c = 0; c < cfg.w; ++c) {
                    const double pr = static_cast<double>(r) - bcr;
                    const double pc = static_cast<double>(c) - bcc;
                    if (pr * pr + pc * pc <= brad * brad) out.image[r * cfg.w + c] = bv;
                }
            break;
        }
    }

    // additive noise, clamped to the intensity range
    if (cfg.noise_sigma > 0.0) {
        for (std::size_t i = 0; i < out.image.numel(); ++i) {
            double v = out.image[i] + rng.normal(0.0, cfg.noise_sigma);
            out.image[i] = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
        }
    }
    return out;
}

SynthSample apply_affine(const SynthSample& s, double theta_deg, double shift_r,
                         double shift_c, double zoom) {
    if (zoom <= 0.0) throw ConfigError("apply_affine: zoom must be positive");
    const std::size_t h = s.label.h, w = s.label.w;
    const double cr0 = (static_cast<double>(h) - 1.0) / 2.0;
    const double cc0 = (static_cast<double>(w) - 1.0) / 2.0;
    const double theta = theta_deg * kPi / 180.0;
    const double cosr = std::cos(-theta), sinr = std::sin(-theta);

    SynthSample out;
    out.seed = s.seed;
    out.image = Tensor(Shape{1, h, w});
    out.label = BinaryMask(h, w);
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            // inverse map: undo shift, rotation and zoom about the centre
            const double vr = (static_cast<double>(r) - cr0 - shift_r) / zoom;
            const double vc = (static_cast<double>(c) - cc0 - shift_c) / zoom;
            const double sr = cr0 + cosr * vr - sinr * vc;
            const double sc = cc0 + sinr * vr + cosr * vc;

            // label: nearest neighbour, background outside the frame
            const long nr = std::lround(sr), nc = std::lround(sc);
            if (nr >= 0 && nr < static_cast<long>(h) && nc >= 0 && nc < static_cast<long>(w))
                out.label.at(r, c) = s.label.at(static_cast<std::size_t>(nr),
                                                static_cast<std::size_t>(nc));

            // image: bilinear with clamp-to-edge
            double fr = sr < 0.0 ? 0.0
                                 : (sr > static_cast<double>(h - 1) ? static_cast<double>(h - 1)
                                                                    : sr);
            double fc = sc < 0.0 ? 0.0
                                 : (sc > static_cast<double>(w - 1) ? static_cast<double>(w - 1)
                                                                    : sc);
            std::size_t r0 = static_cast<std::size_t>(fr);
            std::size_t c0 = static_cast<std::size_t>(fc);
            if (r0 >= h - 1 && h >= 2) r0 = h - 2;
            if (c0 >= w - 1 && w >= 2) c0 = w - 2;
            const std::size_t r1 = h >= 2 ? r0 + 1 : r0, c1 = w >= 2 ? c0 + 1 : c0;
            const double ar = fr - static_cast<double>(r0), ac = fc - static_cast<double>(c0);
            const double* ip = s.image.data();
            const double top = ip[r0 * w + c0] * (1.0 - ac) + ip[r0 * w + c1] * ac;
            const double bot = ip[r1 * w + c0] * (1.0 - ac) + ip[r1 * w + c1] * ac;
            out.image[r * w + c] = top * (1.0 - ar) + bot * ar;
        }
    }

    // forward-transform the geometry metadata
    const double fcos = std::cos(theta), fsin = std::sin(theta);
    const double vr = s.center_r - cr0, vc = s.center_c - cc0;
    out.center_r = cr0 + shift_r + zoom * (fcos * vr - fsin * vc);
    out.center_c = cc0 + shift_c + zoom * (fsin * vr + fcos * vc);
    out.radius = s.radius * zoom;
    out.thickness = s.thickness * zoom;
    return out;
}

SynthSample augment(const SynthSample& s, Rng& rng) {
    const double hext = static_cast<double>(s.label.h);
    const double wext = static_cast<double>(s.label.w);

    for (int attempt = 0; attempt < 20; ++attempt) {
        // one of the paper's four variants: rotation, shift, zoom, or all
        // three combined; the unused parameters are drawn anyway so every
        // attempt consumes the same number of stream values
        const std::uint64_t mode = rng.next_index(4);
        double theta_deg = rng.uniform(-30.0, 30.0);
        double shift_r = rng.uniform(-0.1, 0.1) * hext;
        double shift_c = rng.uniform(-0.1, 0.1) * wext;
        double zoom = rng.uniform(0.8, 1.2);
        if (mode == 0) {
            shift_r = shift_c = 0.0;
            zoom = 1.0;
        } else if (mode == 1) {
            theta_deg = 0.0;
            zoom = 1.0;
        } else if (mode == 2) {
            theta_deg = 0.0;
            shift_r = shift_c = 0.0;
        }

        SynthSample out = apply_affine(s, theta_deg, shift_r, shift_c, zoom);
        if (topology::betti_numbers(out.label) == std::pair<int, int>{1, 1}) return out;
    }
    return s;  // could not find a topology-preserving draw; keep the original
}

Dataset generate_dataset(const DatasetConfig& cfg) {
    Dataset ds;
    ds.train.reserve(cfg.n_train);
    ds.val.reserve(cfg.n_val);
    ds.test.reserve(cfg.n_test);
    for (std::size_t i = 0; i < cfg.n_train; ++i) {
        SynthSample s = generate_sample(Rng::derive(cfg.data_seed, kTrainTag, i), cfg);
        if (cfg.augment) {
            Rng arng(Rng::derive(cfg.data_seed, kAugTag, i));
            if (arng.bernoulli(cfg.augment_fraction)) s = augment(s, arng);
        }
        ds.train.push_back(std::move(s));
    }
    for (std::size_t i = 0; i < cfg.n_val; ++i)
        ds.val.push_back(generate_sample(Rng::derive(cfg.data_seed, kValTag, i), cfg));
    for (std::size_t i = 0; i < cfg.n_test; ++i)
        ds.test.push_back(generate_sample(Rng::derive(cfg.data_seed, kTestTag, i), cfg));
    return ds;
}

namespace {

void write_split(const std::string& dir, const std::string& split,
                 const std::vector<SynthSample>& samples, std::ostream& manifest) {
    char buf[512];
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const SynthSample& s = samples[i];
        std::snprintf(buf, sizeof(buf), "img_%s_%04zu.pgm", split.c_str(), i);
        const std::string img_name = buf;
        std::snprintf(buf, sizeof(buf), "lbl_%s_%04zu.pgm", split.c_str(), i);
        const std::string lbl_name = buf;
        write_image_pgm(dir + "/" + img_name, s.image);
        write_mask_pgm(dir + "/" + lbl_name, s.label);
        std::snprintf(buf, sizeof(buf), "%s %zu %s %s %llu %.17g %.17g %.17g %.17g\n",
                      split.c_str(), i, img_name.c_str(), lbl_name.c_str(),
                      static_cast<unsigned long long>(s.seed), s.radius, s.thickness,
                      s.center_r, s.center_c);
        manifest << buf;
    }
}

}  // namespace

void write_dataset(const std::string& dir, const Dataset& ds) {
    std::filesystem::create_directories(dir);
    std::ofstream manifest(dir + "/manifest.txt");
    if (!manifest) throw IoError("cannot write manifest: " + dir + "/manifest.txt");
    manifest << "# split index image label seed radius thickness center_r center_c\n";
    write_split(dir, "train", ds.train, manifest);
    write_split(dir, "val", ds.val, manifest);
    write_split(dir, "test", ds.test, manifest);
    if (!manifest) throw IoError("manifest write failed: " + dir + "/manifest.txt");
}

Dataset load_dataset(const std::string& dir) {
    std::ifstream manifest(dir + "/manifest.txt");
    if (!manifest) throw IoError("no manifest found in dataset directory: " + dir);
    Dataset ds;
    std::string line;
    while (std::getline(manifest, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string split, img_name, lbl_name;
        std::size_t index;
        unsigned long long seed;
        SynthSample s;
        if (!(ls >> split >> index >> img_name >> lbl_name >> seed >> s.radius >> s.thickness >>
              s.center_r >> s.center_c))
            throw IoError("malformed manifest line: " + line);
        s.seed = seed;
        s.image = read_image_pgm(dir + "/" + img_name);
        s.label = read_mask_pgm(dir + "/" + lbl_name);
        if (split == "train")
            ds.train.push_back(std::move(s));
        else if (split == "val")
            ds.val.push_back(std::move(s));
        else if (split == "test")
            ds.test.push_back(std::move(s));
        else
            throw IoError("manifest: unknown split '" + split + "'");
    }
    return ds;
}

}  // namespace topowarp::synthdata
