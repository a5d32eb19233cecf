#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "oracles.hpp"
#include "topowarp/adam.hpp"
#include "topowarp/ops.hpp"
#include "topowarp/tensor.hpp"

using namespace topowarp;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

// Reverse-mode d(sum of f(inputs...)))/d(param[index]) compared against a
// central finite difference of the same scalar.
void check_grad(const std::function<Tensor()>& forward, Tensor param, double tol = 1e-6) {
    for (std::size_t index = 0; index < param.numel(); ++index) {
        param.set_requires_grad(true);
        param.zero_grad();
        Tape tape;
        double analytic;
        {
            TapeScope scope(tape);
            Tensor loss = ops::sum(forward());
            tape.backward(loss);
            analytic = param.grad()[index];
        }
        const double numeric = oracles::central_diff(
            [&]() { return ops::sum(forward()).item(); }, param, index);
        CAPTURE(index);
        CHECK(oracles::rel_err(analytic, numeric) < tol);
    }
}

}  // namespace

TEST_CASE("tensor basics: shape, access, clone semantics") {
    Tensor t = Tensor::from_data(Shape{2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(t.rank() == 2);
    CHECK(t.numel() == 6);
    CHECK(t.at(1, 2) == 6.0);

    Tensor shared = t;           // handle copy: storage shared
    shared[0] = 42.0;
    CHECK(t[0] == 42.0);

    Tensor deep = t.clone();     // deep copy: storage independent
    deep[0] = -1.0;
    CHECK(t[0] == 42.0);

    CHECK(Tensor::scalar(3.5).item() == 3.5);
    CHECK_THROWS_AS(t.item(), ShapeError);
    CHECK_THROWS_AS(Tensor::from_data(Shape{2, 2}, {1, 2, 3}), ShapeError);
}

TEST_CASE("rng: determinism and stream derivation") {
    Rng a(7), b(7);
    for (int i = 0; i < 100; ++i) CHECK(a.uniform(0, 1) == b.uniform(0, 1));

    // derived streams are stable and distinct across tags
    CHECK(Rng::derive(1, 2, 3) == Rng::derive(1, 2, 3));
    std::set<std::uint64_t> seen;
    for (std::uint64_t tag = 0; tag < 64; ++tag) seen.insert(Rng::derive(42, tag, 0));
    CHECK(seen.size() == 64);

    Rng idx(3);
    for (int i = 0; i < 1000; ++i) CHECK(idx.next_index(7) < 7);
}

TEST_CASE("elementwise ops forward") {
    const Tensor a = Tensor::from_data(Shape{3}, {1, -2, 3});
    const Tensor b = Tensor::from_data(Shape{3}, {4, 5, -6});
    CHECK(ops::add(a, b).vec() == std::vector<double>{5, 3, -3});
    CHECK(ops::sub(a, b).vec() == std::vector<double>{-3, -7, 9});
    CHECK(ops::mul(a, b).vec() == std::vector<double>{4, -10, -18});
    CHECK(ops::div(a, b)[0] == doctest::Approx(0.25));
    CHECK(ops::scale(a, 2.0).vec() == std::vector<double>{2, -4, 6});
    CHECK(ops::add_const(a, 1.0).vec() == std::vector<double>{2, -1, 4});
    CHECK(ops::sum(a).item() == 2.0);
    CHECK(ops::relu(a).vec() == std::vector<double>{1, 0, 3});
    CHECK(ops::tanh(a)[0] == doctest::Approx(std::tanh(1.0)));
    CHECK_THROWS_AS(ops::add(a, Tensor(Shape{2})), ShapeError);
}

TEST_CASE("elementwise and reduction gradients match finite differences") {
    Rng rng(11);
    Tensor x = random_tensor(Shape{2, 3}, rng, 0.5, 2.0);
    const Tensor c = random_tensor(Shape{2, 3}, rng, 0.5, 2.0);

    check_grad([&] { return ops::add(x, c); }, x);
    check_grad([&] { return ops::sub(c, x); }, x);
    check_grad([&] { return ops::mul(x, c); }, x);
    check_grad([&] { return ops::div(c, x); }, x);
    check_grad([&] { return ops::div(x, c); }, x);
    check_grad([&] { return ops::scale(x, -1.7); }, x);
    check_grad([&] { return ops::tanh(x); }, x);
    check_grad([&] { return ops::mul(x, x); }, x);  // fan-out accumulation
    check_grad([&] { return ops::reshape(ops::mul(x, x), Shape{6}); }, x);
}

TEST_CASE("relu gradient is the step function away from the kink") {
    Tensor x = Tensor::from_data(Shape{4}, {-2.0, -0.5, 0.5, 2.0});
    check_grad([&] { return ops::relu(x); }, x);
}

TEST_CASE("conv2d forward matches the nested-loop oracle") {
    Rng rng(5);
    for (int k : {1, 3, 5}) {
        const int pad = (k - 1) / 2;
        const Tensor x = random_tensor(Shape{3, 6, 7}, rng);
        const Tensor w = random_tensor(
            Shape{4, 3, static_cast<std::size_t>(k), static_cast<std::size_t>(k)}, rng);
        const Tensor b = random_tensor(Shape{4}, rng);
        const Tensor got = ops::conv2d(x, w, b, pad);
        const Tensor want = oracles::conv2d_naive(x, w, b, pad);
        REQUIRE(got.shape() == want.shape());
        for (std::size_t i = 0; i < got.numel(); ++i)
            CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
}

TEST_CASE("conv2d rejects malformed inputs") {
    const Tensor x(Shape{2, 4, 4});
    CHECK_THROWS_AS(ops::conv2d(x, Tensor(Shape{3, 2, 2, 2}), Tensor(Shape{3}), 0),
                    ShapeError);  // even kernel
    CHECK_THROWS_AS(ops::conv2d(x, Tensor(Shape{3, 2, 3, 3}), Tensor(Shape{3}), 0),
                    ValueError);  // pad != (k-1)/2
    CHECK_THROWS_AS(ops::conv2d(x, Tensor(Shape{3, 5, 3, 3}), Tensor(Shape{3}), 1),
                    ShapeError);  // channel mismatch
    CHECK_THROWS_AS(ops::conv2d(x, Tensor(Shape{3, 2, 3, 3}), Tensor(Shape{4}), 1),
                    ShapeError);  // bias length
}

TEST_CASE("conv2d gradients match finite differences") {
    Rng rng(13);
    Tensor x = random_tensor(Shape{2, 4, 5}, rng);
    Tensor w = random_tensor(Shape{3, 2, 3, 3}, rng);
    Tensor b = random_tensor(Shape{3}, rng);
    check_grad([&] { return ops::conv2d(x, w, b, 1); }, x, 1e-5);
    check_grad([&] { return ops::conv2d(x, w, b, 1); }, w, 1e-5);
    check_grad([&] { return ops::conv2d(x, w, b, 1); }, b, 1e-5);
}

TEST_CASE("instance_norm2d: per-channel zero mean, unit variance") {
    Rng rng(3);
    const Tensor x = random_tensor(Shape{3, 5, 4}, rng, -2.0, 5.0);
    const Tensor y = ops::instance_norm2d(x);
    const std::size_t plane = 20;
    for (std::size_t ch = 0; ch < 3; ++ch) {
        double mean = 0.0, var = 0.0;
        for (std::size_t i = 0; i < plane; ++i) mean += y[ch * plane + i];
        mean /= plane;
        for (std::size_t i = 0; i < plane; ++i) {
            const double d = y[ch * plane + i] - mean;
            var += d * d;
        }
        var /= plane;
        CHECK(mean == doctest::Approx(0.0).epsilon(1e-10));
        CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
    }
}

TEST_CASE("instance_norm2d gradient matches finite differences") {
    Rng rng(17);
    Tensor x = random_tensor(Shape{2, 3, 4}, rng, -1.5, 1.5);
    const Tensor m = random_tensor(Shape{2, 3, 4}, rng);  // break symmetry of sum
    check_grad([&] { return ops::mul(ops::instance_norm2d(x), m); }, x, 1e-4);
}

TEST_CASE("maxpool2d: forward, tie-breaking, gradient routing") {
    Tensor x = Tensor::from_data(Shape{1, 2, 4}, {1, 2, 3, 3, 0, -1, 2, 1});
    const Tensor y = ops::maxpool2d(x);
    REQUIRE(y.shape() == Shape{1, 1, 2});
    CHECK(y[0] == 2.0);
    CHECK(y[1] == 3.0);  // tie between (0,2) and (0,3): first in row-major wins

    x.set_requires_grad(true);
    Tape tape;
    {
        TapeScope scope(tape);
        tape.backward(ops::sum(ops::maxpool2d(x)));
    }
    CHECK(x.grad() == std::vector<double>{0, 1, 1, 0, 0, 0, 0, 0});
    CHECK_THROWS_AS(ops::maxpool2d(Tensor(Shape{1, 3, 4})), ShapeError);
}

TEST_CASE("resize_bilinear matches the closed-form sampler") {
    Rng rng(23);
    const Tensor x = random_tensor(Shape{2, 5, 7}, rng);
    const std::size_t ho = 9, wo = 4;
    const Tensor y = ops::resize_bilinear(x, ho, wo);
    for (std::size_t ch = 0; ch < 2; ++ch) {
        const std::vector<double> plane(x.vec().begin() + ch * 35,
                                        x.vec().begin() + (ch + 1) * 35);
        for (std::size_t r = 0; r < ho; ++r)
            for (std::size_t c = 0; c < wo; ++c) {
                const double sr = (r + 0.5) * (5.0 / ho) - 0.5;
                const double sc = (c + 0.5) * (7.0 / wo) - 0.5;
                const double want = oracles::bilinear_at(plane, 5, 7, sr, sc);
                CHECK(y[(ch * ho + r) * wo + c] == doctest::Approx(want).epsilon(1e-12));
            }
    }
}

TEST_CASE("resize_bilinear gradient matches finite differences") {
    Rng rng(29);
    Tensor x = random_tensor(Shape{1, 3, 4}, rng);
    const Tensor m = random_tensor(Shape{1, 5, 6}, rng);
    check_grad([&] { return ops::mul(ops::resize_bilinear(x, 5, 6), m); }, x, 1e-5);
    check_grad([&] { return ops::resize_bilinear(x, 2, 3); }, x, 1e-5);  // downscale
}

TEST_CASE("upsample_bilinear is resize to an integer multiple") {
    Rng rng(31);
    const Tensor x = random_tensor(Shape{1, 3, 4}, rng);
    const Tensor a = ops::upsample_bilinear(x, 2);
    const Tensor b = ops::resize_bilinear(x, 6, 8);
    CHECK(a.vec() == b.vec());
    CHECK_THROWS_AS(ops::upsample_bilinear(x, 0), ValueError);
}

TEST_CASE("grid_sample: zero displacement is the identity") {
    Rng rng(37);
    const Tensor img = random_tensor(Shape{1, 4, 5}, rng);
    const Tensor out = ops::grid_sample(img, Tensor(Shape{2, 4, 5}));
    CHECK(out.vec() == img.vec());
}

TEST_CASE("grid_sample: constant interior shift matches the oracle sampler") {
    Rng rng(41);
    const Tensor img = random_tensor(Shape{1, 6, 6}, rng);
    Tensor disp(Shape{2, 6, 6});
    for (std::size_t i = 0; i < 36; ++i) {
        disp[i] = 0.75;        // rows
        disp[36 + i] = -0.25;  // cols
    }
    const Tensor out = ops::grid_sample(img, disp);
    for (std::size_t r = 0; r < 6; ++r)
        for (std::size_t c = 0; c < 6; ++c) {
            const double want = oracles::bilinear_at(img.vec(), 6, 6, r + 0.75, c - 0.25);
            CHECK(out[r * 6 + c] == doctest::Approx(want).epsilon(1e-12));
        }
}

TEST_CASE("grid_sample gradients match finite differences") {
    Rng rng(43);
    Tensor img = random_tensor(Shape{1, 5, 5}, rng);
    Tensor disp = random_tensor(Shape{2, 5, 5}, rng, -0.4, 0.4);
    const Tensor m = random_tensor(Shape{1, 5, 5}, rng);
    check_grad([&] { return ops::mul(ops::grid_sample(img, disp), m); }, img, 1e-5);
    check_grad([&] { return ops::mul(ops::grid_sample(img, disp), m); }, disp, 1e-4);
}

TEST_CASE("dropout2d: eval identity, whole-channel zeroing, inverse scaling") {
    Rng rng(47);
    const Tensor x = Tensor::full(Shape{64, 2, 2}, 1.0);
    Rng eval_rng(1);
    CHECK(ops::dropout2d(x, 0.5, eval_rng, false).vec() == x.vec());

    Rng train_rng(1);
    const Tensor y = ops::dropout2d(x, 0.5, train_rng, true);
    int dropped = 0;
    for (std::size_t ch = 0; ch < 64; ++ch) {
        const double first = y[ch * 4];
        for (std::size_t i = 0; i < 4; ++i) CHECK(y[ch * 4 + i] == first);  // whole channel
        if (first == 0.0)
            ++dropped;
        else
            CHECK(first == doctest::Approx(2.0));  // survivor scaled by 1/(1-p)
    }
    CHECK(dropped > 10);
    CHECK(dropped < 54);
    CHECK_THROWS_AS(ops::dropout2d(x, 1.0, train_rng, true), ValueError);
}

TEST_CASE("tape: participation bookkeeping and error paths") {
    Tensor a = Tensor::from_data(Shape{2}, {1, 2});
    const Tensor spectator = Tensor::from_data(Shape{2}, {3, 4});
    a.set_requires_grad(true);

    Tape tape;
    {
        TapeScope scope(tape);
        const Tensor loss = ops::sum(ops::mul(a, a));
        CHECK_THROWS_AS(tape.backward(ops::mul(a, a)), ShapeError);  // non-scalar
        tape.backward(loss);
    }
    CHECK(a.grad() == std::vector<double>{2, 4});
    CHECK(spectator.grad_if() == nullptr);  // untouched by backward

    // outside a tape scope, ops never record
    Tensor b = Tensor::from_data(Shape{2}, {1, 2});
    b.set_requires_grad(true);
    const Tensor y = ops::mul(b, b);
    CHECK_FALSE(y.on_tape());
}

TEST_CASE("gradient accumulation across two backward passes") {
    Tensor x = Tensor::from_data(Shape{1}, {3.0});
    x.set_requires_grad(true);
    for (int pass = 0; pass < 2; ++pass) {
        Tape tape;
        TapeScope scope(tape);
        tape.backward(ops::sum(ops::scale(x, 5.0)));
    }
    CHECK(x.grad()[0] == 10.0);  // 5 + 5, no implicit zeroing
    x.zero_grad();
    CHECK(x.grad()[0] == 0.0);
}

TEST_CASE("adam: first step moves by lr toward the gradient sign") {
    Tensor p = Tensor::from_data(Shape{2}, {1.0, -1.0});
    p.set_requires_grad(true);
    p.grad() = {0.5, -0.25};
    Adam opt({p}, 0.01);
    opt.step();
    // bias-corrected first step is lr·g/(|g|+eps·corr) ≈ lr·sign(g)
    CHECK(p[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-4));
    CHECK(p[1] == doctest::Approx(-1.0 + 0.01).epsilon(1e-4));
}

TEST_CASE("adam minimizes a quadratic") {
    Tensor p = Tensor::from_data(Shape{3}, {4.0, -3.0, 2.0});
    p.set_requires_grad(true);
    Adam opt({p}, 0.1);
    for (int i = 0; i < 400; ++i) {
        Tape tape;
        TapeScope scope(tape);
        tape.backward(ops::sum(ops::mul(p, p)));
        opt.step();
        opt.zero_grad();
    }
    for (std::size_t i = 0; i < 3; ++i) CHECK(std::fabs(p[i]) < 1e-3);
}
