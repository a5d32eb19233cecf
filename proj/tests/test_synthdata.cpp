#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "oracles.hpp"
#include "topowarp/config.hpp"
#include "topowarp/synthdata.hpp"
#include "topowarp/topology.hpp"

using namespace topowarp;

namespace {

constexpr double kPi = 3.14159265358979323846;

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    REQUIRE(bool(is));
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

double mean_where(const Tensor& img, const BinaryMask& m, bool inside) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < m.v.size(); ++i) {
        if ((m.v[i] != 0) == inside) {
            sum += img[i];
            ++n;
        }
    }
    REQUIRE(n > 0);
    return sum / static_cast<double>(n);
}

}  // namespace

TEST_CASE("make_prior: ring topology, symmetry, and area") {
    const BinaryMask m = synthdata::make_prior(64, 96, 18.0, 5.0);
    CHECK(oracles::betti_flood(m) == std::pair<int, int>{1, 1});

    // centred construction: invariant under 180-degree rotation of the frame
    for (std::size_t r = 0; r < m.h; ++r)
        for (std::size_t c = 0; c < m.w; ++c)
            CHECK(m.at(r, c) == m.at(m.h - 1 - r, m.w - 1 - c));

    // discretized area tracks the analytic annulus area 2*pi*radius*thickness
    struct Case {
        std::size_t h, w;
        double radius, thickness, tol;
    } cases[] = {
        {64, 96, 9.0, 3.0, 0.10},    // thin rings quantize coarsely
        {64, 96, 18.0, 5.0, 0.02},
        {128, 192, 30.0, 8.0, 0.02},
        {144, 144, 40.0, 12.0, 0.02},
    };
    for (const auto& k : cases) {
        const BinaryMask p = synthdata::make_prior(k.h, k.w, k.radius, k.thickness);
        const double area = static_cast<double>(p.count());
        const double expect = 2.0 * kPi * k.radius * k.thickness;
        CHECK(std::abs(area - expect) / expect < k.tol);
    }
}

TEST_CASE("make_prior: degenerate geometry is rejected") {
    CHECK_THROWS_AS(synthdata::make_prior(64, 64, 0.0, 4.0), ConfigError);
    CHECK_THROWS_AS(synthdata::make_prior(64, 64, 10.0, -1.0), ConfigError);
    // thickness >= 2*radius fills the hole
    CHECK_THROWS_AS(synthdata::make_prior(64, 64, 5.0, 10.0), ConfigError);
    // reach beyond the half-extent leaves the frame
    CHECK_THROWS_AS(synthdata::make_prior(64, 64, 30.0, 8.0), ConfigError);
    // sub-voxel thickness breaks the discretized ring
    CHECK_THROWS_AS(synthdata::make_prior(64, 64, 20.0, 0.05), ConfigError);
}

TEST_CASE("generate_sample: deterministic in the stream seed") {
    DatasetConfig cfg;
    const SynthSample a = synthdata::generate_sample(42, cfg);
    const SynthSample b = synthdata::generate_sample(42, cfg);
    CHECK(a.radius == b.radius);
    CHECK(a.thickness == b.thickness);
    CHECK(a.center_r == b.center_r);
    CHECK(a.center_c == b.center_c);
    CHECK(a.label.v == b.label.v);
    bool images_equal = a.image.numel() == b.image.numel();
    for (std::size_t i = 0; images_equal && i < a.image.numel(); ++i)
        images_equal = a.image[i] == b.image[i];
    CHECK(images_equal);

    const SynthSample c = synthdata::generate_sample(43, cfg);
    CHECK(a.label.v != c.label.v);
}

TEST_CASE("generate_sample: invariants over many seeds") {
    DatasetConfig cfg;
    const double s = geometry_scale(cfg.h);
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const SynthSample smp = synthdata::generate_sample(seed, cfg);
        CHECK(smp.image.shape() == Shape{1, cfg.h, cfg.w});
        CHECK(oracles::betti_flood(smp.label) == std::pair<int, int>{1, 1});

        // geometry drawn from the configured ranges, scaled to this frame
        CHECK(smp.radius >= cfg.radius_lo * s);
        CHECK(smp.radius <= cfg.radius_hi * s);
        CHECK(smp.thickness >= cfg.thickness_lo * s);
        CHECK(smp.thickness <= cfg.thickness_hi * s);

        // near-centred placement within the jitter window
        const double mid_r = (static_cast<double>(cfg.h) - 1.0) / 2.0;
        const double mid_c = (static_cast<double>(cfg.w) - 1.0) / 2.0;
        CHECK(std::abs(smp.center_r - mid_r) <=
              cfg.center_jitter * static_cast<double>(cfg.h) + 1e-9);
        CHECK(std::abs(smp.center_c - mid_c) <=
              cfg.center_jitter * static_cast<double>(cfg.w) + 1e-9);

        // intensities clamped after noise
        for (std::size_t i = 0; i < smp.image.numel(); ++i) {
            CHECK(smp.image[i] >= 0.0);
            CHECK(smp.image[i] <= 1.0);
        }
    }
}

TEST_CASE("generate_sample: the annulus wall is the bright structure") {
    DatasetConfig cfg;
    for (std::uint64_t seed = 200; seed < 220; ++seed) {
        const SynthSample smp = synthdata::generate_sample(seed, cfg);
        const double on = mean_where(smp.image, smp.label, true);
        const double off = mean_where(smp.image, smp.label, false);
        CHECK(on - off > 0.1);
    }
}

TEST_CASE("apply_affine: identity parameters reproduce the sample exactly") {
    DatasetConfig cfg;
    const SynthSample s = synthdata::generate_sample(21, cfg);
    const SynthSample out = synthdata::apply_affine(s, 0.0, 0.0, 0.0, 1.0);
    CHECK(out.label.v == s.label.v);
    CHECK(out.radius == s.radius);
    CHECK(out.center_r == s.center_r);
    for (std::size_t i = 0; i < s.image.numel(); ++i) CHECK(out.image[i] == s.image[i]);
    CHECK_THROWS_AS(synthdata::apply_affine(s, 0.0, 0.0, 0.0, 0.0), ConfigError);
}

TEST_CASE("apply_affine: a pure integer shift translates the sample") {
    DatasetConfig cfg;
    const SynthSample s = synthdata::generate_sample(22, cfg);
    const SynthSample out = synthdata::apply_affine(s, 0.0, 5.0, 5.0, 1.0);
    const std::size_t h = s.label.h, w = s.label.w;
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            const std::uint8_t want = (r >= 5 && c >= 5) ? s.label.at(r - 5, c - 5) : 0;
            CHECK(out.label.at(r, c) == want);
            if (r >= 5 && c >= 5)  // integer source coordinates: bilinear is exact
                CHECK(out.image[r * w + c] == s.image[(r - 5) * w + (c - 5)]);
        }
    }
    CHECK(out.center_r == doctest::Approx(s.center_r + 5.0).epsilon(1e-12));
    CHECK(out.center_c == doctest::Approx(s.center_c + 5.0).epsilon(1e-12));
    CHECK(out.radius == s.radius);
}

TEST_CASE("apply_affine: zoom scales geometry about the frame centre") {
    DatasetConfig cfg;
    const SynthSample s = synthdata::generate_sample(23, cfg);
    const double zoom = 1.15;
    const SynthSample out = synthdata::apply_affine(s, 0.0, 0.0, 0.0, zoom);
    CHECK(out.radius == doctest::Approx(s.radius * zoom).epsilon(1e-12));
    CHECK(out.thickness == doctest::Approx(s.thickness * zoom).epsilon(1e-12));
    const double mid_r = (static_cast<double>(s.label.h) - 1.0) / 2.0;
    CHECK(out.center_r - mid_r == doctest::Approx((s.center_r - mid_r) * zoom).epsilon(1e-9));
    // the discretized area tracks the zoomed analytic area
    const double want = 2.0 * kPi * out.radius * out.thickness;
    CHECK(std::abs(static_cast<double>(out.label.count()) - want) / want < 0.15);
}

TEST_CASE("augment: deterministic, topology-preserving, in range") {
    DatasetConfig cfg;
    const SynthSample base = synthdata::generate_sample(7, cfg);

    Rng r1(99), r2(99);
    const SynthSample a = synthdata::augment(base, r1);
    const SynthSample b = synthdata::augment(base, r2);
    CHECK(a.label.v == b.label.v);
    CHECK(a.radius == b.radius);
    CHECK(a.center_r == b.center_r);
    bool images_equal = true;
    for (std::size_t i = 0; images_equal && i < a.image.numel(); ++i)
        images_equal = a.image[i] == b.image[i];
    CHECK(images_equal);

    Rng rng(5);
    int changed = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const SynthSample out = synthdata::augment(base, rng);
        CHECK(oracles::betti_flood(out.label) == std::pair<int, int>{1, 1});
        for (std::size_t i = 0; i < out.image.numel(); ++i) {
            CHECK(out.image[i] >= 0.0);
            CHECK(out.image[i] <= 1.0);
        }
        // zoom rescales the stored geometry coherently
        CHECK(out.thickness / out.radius ==
              doctest::Approx(base.thickness / base.radius).epsilon(1e-9));
        if (out.label.v != base.label.v) ++changed;
    }
    CHECK(changed > 40);  // the transform is almost never the identity
}

TEST_CASE("augment: falls back to the input when topology cannot be kept") {
    // a two-ring label can never be mapped to a single ring by an affine
    // transform, so every redraw fails and the original sample comes back
    DatasetConfig cfg;
    SynthSample twin = synthdata::generate_sample(3, cfg);
    const BinaryMask left = synthdata::make_prior(64, 96, 8.0, 3.0);
    twin.label = BinaryMask(64, 96);
    for (std::size_t r = 0; r < 64; ++r)
        for (std::size_t c = 0; c < 44; ++c) {
            twin.label.at(r, c) = left.at(r, c + 26);          // ring shifted left
            if (left.at(r, c + 26)) twin.label.at(r, c + 52) = 1;  // and its copy right
        }
    REQUIRE(oracles::betti_flood(twin.label) == std::pair<int, int>{2, 2});

    Rng rng(11);
    const SynthSample out = synthdata::augment(twin, rng);
    CHECK(out.label.v == twin.label.v);
    CHECK(out.radius == twin.radius);
    CHECK(out.center_r == twin.center_r);
}

TEST_CASE("generate_dataset: split sizes and disjoint sample streams") {
    DatasetConfig cfg;
    cfg.h = 48;
    cfg.w = 48;
    cfg.n_train = 6;
    cfg.n_val = 3;
    cfg.n_test = 3;
    const Dataset ds = synthdata::generate_dataset(cfg);
    CHECK(ds.train.size() == 6);
    CHECK(ds.val.size() == 3);
    CHECK(ds.test.size() == 3);

    std::vector<std::uint64_t> seeds;
    for (const auto& s : ds.train) seeds.push_back(s.seed);
    for (const auto& s : ds.val) seeds.push_back(s.seed);
    for (const auto& s : ds.test) seeds.push_back(s.seed);
    std::sort(seeds.begin(), seeds.end());
    CHECK(std::adjacent_find(seeds.begin(), seeds.end()) == seeds.end());

    // regenerating yields the identical dataset
    const Dataset ds2 = synthdata::generate_dataset(cfg);
    for (std::size_t i = 0; i < ds.train.size(); ++i)
        CHECK(ds.train[i].label.v == ds2.train[i].label.v);
}

TEST_CASE("generate_dataset: augmentation only touches the training split") {
    DatasetConfig cfg;
    cfg.h = 48;
    cfg.w = 48;
    cfg.n_train = 12;
    cfg.n_val = 3;
    cfg.n_test = 3;
    cfg.augment = true;
    cfg.augment_fraction = 1.0;
    const Dataset aug = synthdata::generate_dataset(cfg);
    cfg.augment = false;
    const Dataset plain = synthdata::generate_dataset(cfg);

    int train_changed = 0;
    for (std::size_t i = 0; i < aug.train.size(); ++i) {
        if (aug.train[i].label.v != plain.train[i].label.v) ++train_changed;
        CHECK(aug.train[i].seed == plain.train[i].seed);  // provenance survives
        CHECK(oracles::betti_flood(aug.train[i].label) == std::pair<int, int>{1, 1});
    }
    CHECK(train_changed >= 10);
    for (std::size_t i = 0; i < aug.val.size(); ++i)
        CHECK(aug.val[i].label.v == plain.val[i].label.v);
    for (std::size_t i = 0; i < aug.test.size(); ++i)
        CHECK(aug.test[i].label.v == plain.test[i].label.v);

    // a zero fraction makes the toggle a no-op
    cfg.augment = true;
    cfg.augment_fraction = 0.0;
    const Dataset none = synthdata::generate_dataset(cfg);
    for (std::size_t i = 0; i < none.train.size(); ++i)
        CHECK(none.train[i].label.v == plain.train[i].label.v);
}

TEST_CASE("write_dataset/load_dataset: round trip") {
    namespace fs = std::filesystem;
    const fs::path dir1 = fs::path("synthdata_rt_a");
    const fs::path dir2 = fs::path("synthdata_rt_b");
    fs::remove_all(dir1);
    fs::remove_all(dir2);

    DatasetConfig cfg;
    cfg.h = 48;
    cfg.w = 48;
    cfg.n_train = 3;
    cfg.n_val = 2;
    cfg.n_test = 2;
    const Dataset ds = synthdata::generate_dataset(cfg);
    synthdata::write_dataset(dir1.string(), ds);

    const Dataset back = synthdata::load_dataset(dir1.string());
    REQUIRE(back.train.size() == ds.train.size());
    REQUIRE(back.val.size() == ds.val.size());
    REQUIRE(back.test.size() == ds.test.size());

    for (std::size_t i = 0; i < ds.train.size(); ++i) {
        const SynthSample& orig = ds.train[i];
        const SynthSample& got = back.train[i];
        // metadata written with full precision: exact round trip
        CHECK(got.seed == orig.seed);
        CHECK(got.radius == orig.radius);
        CHECK(got.thickness == orig.thickness);
        CHECK(got.center_r == orig.center_r);
        CHECK(got.center_c == orig.center_c);
        // labels are exact; images quantized to 8 bits
        CHECK(got.label.v == orig.label.v);
        REQUIRE(got.image.numel() == orig.image.numel());
        for (std::size_t k = 0; k < got.image.numel(); ++k)
            CHECK(std::abs(got.image[k] - orig.image[k]) <= 0.5 / 255.0 + 1e-12);
    }

    // writing the loaded dataset again reproduces every file byte for byte
    synthdata::write_dataset(dir2.string(), back);
    for (const auto& entry : fs::directory_iterator(dir1)) {
        const fs::path other = dir2 / entry.path().filename();
        REQUIRE(fs::exists(other));
        CHECK(slurp(entry.path().string()) == slurp(other.string()));
    }

    CHECK_THROWS_AS(synthdata::load_dataset("definitely_missing_dir"), IoError);

    fs::remove_all(dir1);
    fs::remove_all(dir2);
}
