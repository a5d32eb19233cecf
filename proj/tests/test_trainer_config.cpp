#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "oracles.hpp"
#include "topowarp/config.hpp"
#include "topowarp/serialize.hpp"
#include "topowarp/trainer.hpp"

using namespace topowarp;

namespace {

// Small, easy problem: centered targets, thick rings, shallow net. Keeps the
// end-to-end trainer tests around a second each.
RunConfig tiny_cfg() {
    RunConfig cfg;
    cfg.model.h = cfg.data.h = 32;
    cfg.model.w = cfg.data.w = 32;
    cfg.model.levels = 4;
    cfg.model.integration_layers = 4;
    cfg.model.batch = 2;
    cfg.model.epochs = 4;
    cfg.model.prior_radius = 27.0;
    cfg.model.prior_thickness = 9.0;
    cfg.data.n_train = 4;
    cfg.data.n_val = 2;
    cfg.data.n_test = 3;
    cfg.data.radius_lo = 20.0;
    cfg.data.radius_hi = 35.0;
    cfg.data.thickness_lo = 8.0;
    cfg.data.thickness_hi = 12.0;
    cfg.data.center_jitter = 0.0;
    cfg.data.augment = false;
    cfg.validate();
    return cfg;
}

std::string resolved_text(const RunConfig& cfg) {
    std::ostringstream os;
    write_resolved_config(os, cfg);
    return os.str();
}

bool weights_equal(WarpNet& a, WarpNet& b) {
    auto pa = a.parameters(), pb = b.parameters();
    if (pa.size() != pb.size()) return false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        if (pa[i].first != pb[i].first) return false;
        if (pa[i].second.shape() != pb[i].second.shape()) return false;
        for (std::size_t k = 0; k < pa[i].second.numel(); ++k)
            if (pa[i].second[k] != pb[i].second[k]) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("config: resolved text round-trips through the parser") {
    RunConfig cfg;
    const std::string text = resolved_text(cfg);
    const RunConfig back = parse_config_text(text, "test");
    CHECK(resolved_text(back) == text);

    // a modified config round-trips its modifications too
    apply_override(cfg, "epochs", "7");
    apply_override(cfg, "radius_lo", "12.5");
    apply_override(cfg, "augment", "false");
    const RunConfig again = parse_config_text(resolved_text(cfg), "test");
    CHECK(again.model.epochs == 7);
    CHECK(again.data.radius_lo == 12.5);
    CHECK(again.data.augment == false);
    CHECK(resolved_text(again) == resolved_text(cfg));
}

TEST_CASE("config: parser skips comments and rejects unknown keys") {
    const RunConfig cfg =
        parse_config_text("# a comment\n\nepochs = 3\n  T = 5  # trailing comment\n", "test");
    CHECK(cfg.model.epochs == 3);
    CHECK(cfg.model.integration_layers == 5);  // T is an alias

    CHECK_THROWS_AS(parse_config_text("no_such_key = 1\n", "test"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("epochs = banana\n", "test"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("epochs\n", "test"), ConfigError);
    CHECK_THROWS_AS(parse_config_file("definitely_missing.cfg"), IoError);
}

TEST_CASE("config: apply_override parses and rejects like the file parser") {
    RunConfig cfg;
    apply_override(cfg, "T", "12");
    CHECK(cfg.model.integration_layers == 12);
    apply_override(cfg, "beta", "0");
    CHECK(cfg.model.beta == 0.0);
    apply_override(cfg, "smoothing_enabled", "false");
    CHECK(cfg.model.smoothing.enabled == false);
    CHECK_THROWS_AS(apply_override(cfg, "nope", "1"), ConfigError);
    CHECK_THROWS_AS(apply_override(cfg, "lr", "fast"), ConfigError);
}

TEST_CASE("config: validate rejects broken invariants") {
    auto broken = [](auto&& mutate) {
        RunConfig cfg;
        mutate(cfg);
        return cfg;
    };
    CHECK_THROWS_AS(broken([](RunConfig& c) { c.model.h = 60; c.data.h = 60; }).validate(),
                    ConfigError);
    CHECK_THROWS_AS(broken([](RunConfig& c) { c.model.dropout = 1.0; }).validate(), ConfigError);
    CHECK_THROWS_AS(broken([](RunConfig& c) { c.model.beta = -1.0; }).validate(), ConfigError);
    CHECK_THROWS_AS(broken([](RunConfig& c) { c.model.integration_layers = -1; }).validate(),
                    ConfigError);
    CHECK_THROWS_AS(broken([](RunConfig& c) { c.data.radius_lo = 50.0; }).validate(),
                    ConfigError);  // range inverted
    CHECK_THROWS_AS(broken([](RunConfig& c) { c.data.center_jitter = 0.7; }).validate(),
                    ConfigError);
    CHECK_THROWS_AS(broken([](RunConfig& c) { c.data.augment_fraction = 1.5; }).validate(),
                    ConfigError);
    CHECK_THROWS_AS(broken([](RunConfig& c) { c.model.prior_radius = 80.0; }).validate(),
                    ConfigError);  // prior leaves the frame
    CHECK_THROWS_AS(broken([](RunConfig& c) { c.sweep_t_values.clear(); }).validate(),
                    ConfigError);
    CHECK_THROWS_AS(broken([](RunConfig& c) { c.sweep_radii = {0.0}; }).validate(), ConfigError);
    CHECK_NOTHROW(RunConfig{}.validate());
}

TEST_CASE("config: geometry_scale is the row-count ratio") {
    CHECK(geometry_scale(144) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(geometry_scale(64) == doctest::Approx(64.0 / 144.0).epsilon(1e-12));
}

TEST_CASE("serialize: tnsr round trip, exact to the bit") {
    Rng rng(3);
    for (const Shape& shape : {Shape{7}, Shape{3, 5}, Shape{2, 3, 4}, Shape{2, 1, 3, 2}}) {
        Tensor t(shape);
        for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.normal(0.0, 10.0);
        t[0] = -0.0;  // signed zero survives too
        std::stringstream buf(std::ios::in | std::ios::out | std::ios::binary);
        write_tnsr(buf, t);
        const Tensor back = read_tnsr(buf);
        REQUIRE(back.shape() == shape);
        for (std::size_t i = 0; i < t.numel(); ++i)
            CHECK(std::memcmp(&back.vec()[i], &t.vec()[i], sizeof(double)) == 0);
    }

    std::stringstream bad("not a tensor", std::ios::in | std::ios::binary);
    CHECK_THROWS_AS(read_tnsr(bad), IoError);
    std::stringstream trunc(std::ios::in | std::ios::out | std::ios::binary);
    Tensor t(Shape{4, 4}, 1.5);
    write_tnsr(trunc, t);
    std::string bytes = trunc.str();
    bytes.resize(bytes.size() - 8);  // drop the last value
    std::stringstream cut(bytes, std::ios::in | std::ios::binary);
    CHECK_THROWS_AS(read_tnsr(cut), IoError);
}

TEST_CASE("serialize: checkpoint round trip preserves order, names, config") {
    namespace fs = std::filesystem;
    const std::string path = "ckpt_rt.ckpt";
    Checkpoint ckpt;
    ckpt.config = {{"alpha", "1"}, {"beta", "two words"}};
    Rng rng(5);
    Tensor a(Shape{2, 3});
    Tensor b(Shape{4});
    for (std::size_t i = 0; i < a.numel(); ++i) a[i] = rng.normal(0, 1);
    for (std::size_t i = 0; i < b.numel(); ++i) b[i] = rng.normal(0, 1);
    ckpt.tensors = {{"enc.w", a}, {"head.b", b}};
    save_checkpoint(path, ckpt);

    const Checkpoint back = load_checkpoint(path);
    REQUIRE(back.config.size() == 2);
    CHECK(back.config[0] == std::make_pair(std::string("alpha"), std::string("1")));
    CHECK(*back.config_value("beta") == "two words");
    CHECK(back.config_value("gamma") == nullptr);
    REQUIRE(back.tensors.size() == 2);
    CHECK(back.tensors[0].first == "enc.w");
    const Tensor& ba = back.tensor("enc.w");
    REQUIRE(ba.shape() == a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) CHECK(ba[i] == a[i]);
    CHECK_THROWS_AS(back.tensor("missing"), IoError);
    CHECK_THROWS_AS(load_checkpoint("no_such.ckpt"), IoError);
    fs::remove(path);
}

TEST_CASE("trainer: epochs=0 returns the identity-initialized model") {
    const RunConfig cfg = tiny_cfg();
    const Dataset ds = synthdata::generate_dataset(cfg.data);
    RunConfig zero = cfg;
    zero.model.epochs = 0;
    TrainResult res = trainer::train(zero, ds);
    CHECK(res.best_epoch == -1);
    CHECK(res.log.empty());

    // identity model: prediction is the prior roundtrip, fields are zero, so
    // the total objective equals the plain dice term
    Rng rng(cfg.model.seed);
    WarpNet fresh = network::build(cfg.model, rng);
    CHECK(weights_equal(res.model, fresh));
}

TEST_CASE("trainer: loss goes down and the best epoch is tracked") {
    RunConfig cfg = tiny_cfg();
    cfg.model.epochs = 20;
    // the velocity heads start at zero, so at toy scale the default rate
    // barely moves the loss inside 40 optimizer steps; a larger rate keeps
    // the decrease observable without touching the shipped default
    cfg.model.lr = 2e-3;
    const Dataset ds = synthdata::generate_dataset(cfg.data);
    TrainResult res = trainer::train(cfg, ds);
    REQUIRE(res.log.size() == 20);
    double min_total = std::numeric_limits<double>::infinity();
    for (const EpochLog& l : res.log) min_total = std::min(min_total, l.loss.total);
    CHECK(min_total < res.log.front().loss.total - 0.01);
    CHECK(res.best_epoch >= 0);
    CHECK(res.best_epoch < 20);
    CHECK(res.best_val_dice > 0.0);
    // the logged epoch indices are 0..n-1 in order
    for (std::size_t i = 0; i < res.log.size(); ++i)
        CHECK(res.log[i].epoch == static_cast<int>(i));
}

TEST_CASE("trainer: training is deterministic end to end") {
    const RunConfig cfg = tiny_cfg();
    const Dataset ds = synthdata::generate_dataset(cfg.data);
    TrainResult a = trainer::train(cfg, ds);
    TrainResult b = trainer::train(cfg, ds);
    REQUIRE(a.log.size() == b.log.size());
    for (std::size_t i = 0; i < a.log.size(); ++i) {
        CHECK(a.log[i].loss.total == b.log[i].loss.total);
        CHECK(a.log[i].val_dice == b.log[i].val_dice);
    }
    CHECK(weights_equal(a.model, b.model));

    EvalReport ra = trainer::evaluate(a.model, ds.test);
    EvalReport rb = trainer::evaluate(b.model, ds.test);
    CHECK(ra.row.dice_mean == rb.row.dice_mean);
    CHECK(ra.row.hd_mean == rb.row.hd_mean);
}

TEST_CASE("trainer: divergence aborts with the offending fields attached") {
    RunConfig cfg = tiny_cfg();
    // a non-finite image cannot reach the loss: instance norm spreads the
    // value across its channel and relu then zeroes it, so the fields stay
    // finite. the one loss term a legal config can blow up is the gradient
    // energy weight -- infinity is non-negative, and the first forward pass
    // has identically zero fields, so the loss becomes inf * 0 = nan.
    cfg.model.beta = std::numeric_limits<double>::infinity();
    Dataset ds = synthdata::generate_dataset(cfg.data);
    try {
        trainer::train(cfg, ds);
        FAIL("expected TrainingDiverged");
    } catch (const trainer::TrainingDiverged& e) {
        CHECK(std::string(e.what()).find("non-finite") != std::string::npos);
        CHECK(e.phi_bulk.numel() > 0);
        CHECK(e.phi_ft.numel() > 0);
    }
}

TEST_CASE("trainer: evaluate on prior-matching labels is perfect") {
    const RunConfig cfg = tiny_cfg();
    Rng rng(cfg.model.seed);
    WarpNet net = network::build(cfg.model, rng);
    const Tensor prior = network::make_prior_tensor(cfg.model);
    const BinaryMask prior_mask = topology::threshold(prior);

    DatasetConfig dc = cfg.data;
    std::vector<SynthSample> samples;
    for (std::uint64_t s = 0; s < 3; ++s) {
        SynthSample smp = synthdata::generate_sample(s, dc);
        smp.label = prior_mask;  // targets equal to the identity prediction
        samples.push_back(std::move(smp));
    }
    EvalReport rep = trainer::evaluate(net, samples);
    CHECK(rep.row.n == 3);
    CHECK(rep.row.dice_mean == 1.0);
    CHECK(rep.row.dice_sd == 0.0);
    CHECK(rep.row.hd_mean == 0.0);
    CHECK(rep.row.incorrect_topology == 0);
    CHECK(rep.row.pct_nonpos_bulk_mean == 0.0);
    CHECK(rep.row.pct_nonpos_ft_mean == 0.0);
    CHECK(rep.row.hd_missing == 0);
    REQUIRE(rep.detail.dice.size() == 3);
    CHECK(rep.detail.predictions[0].v == prior_mask.v);
}

TEST_CASE("trainer: csv formats are pinned") {
    CHECK(trainer::eval_csv_header() ==
          "dice_mean,dice_sd,hd_mean,hd_sd,pct_nonpos_bulk_mean,pct_nonpos_bulk_sd,"
          "pct_nonpos_ft_mean,pct_nonpos_ft_sd,incorrect_topology,n");
    EvalRow row;
    row.dice_mean = 0.8625;
    row.dice_sd = 0.12;
    row.hd_mean = 2.5;
    row.hd_sd = 0.5;
    row.pct_nonpos_bulk_mean = 0.0;
    row.pct_nonpos_bulk_sd = 0.0;
    row.pct_nonpos_ft_mean = 1.25;
    row.pct_nonpos_ft_sd = 0.25;
    row.incorrect_topology = 2;
    row.n = 100;
    CHECK(trainer::eval_csv_row(row) ==
          "0.862500,0.120000,2.500000,0.500000,0.000000,0.000000,1.250000,0.250000,2/100,100");
}

TEST_CASE("trainer: training log file is written and parseable") {
    namespace fs = std::filesystem;
    const std::string path = "trainlog_test.csv";
    std::vector<EpochLog> log(2);
    log[0].epoch = 0;
    log[0].loss = {0.5, 1e-7, 2e-7, 10000.0, 0.503};
    log[1].epoch = 1;
    log[1].loss = {0.4, 1e-7, 2e-7, 10000.0, 0.403};
    trainer::write_training_log(path, log);
    std::ifstream is(path);
    std::string line;
    REQUIRE(std::getline(is, line));
    CHECK(line == "epoch,dice_loss,grad_bulk,grad_ft,total");
    int rows = 0;
    while (std::getline(is, line)) {
        ++rows;
        int epoch;
        double d, gb, gf, t;
        CHECK(std::sscanf(line.c_str(), "%d,%lf,%lf,%lf,%lf", &epoch, &d, &gb, &gf, &t) == 5);
    }
    CHECK(rows == 2);
    fs::remove(path);
    CHECK_THROWS_AS(trainer::write_training_log("no_dir/x.csv", log), IoError);
}

TEST_CASE("trainer: save_model/load_model round trip") {
    namespace fs = std::filesystem;
    const std::string path = "model_rt.ckpt";
    RunConfig cfg = tiny_cfg();
    cfg.model.epochs = 2;
    const Dataset ds = synthdata::generate_dataset(cfg.data);
    TrainResult res = trainer::train(cfg, ds);
    trainer::save_model(path, res.model, cfg);

    auto [net, back_cfg] = trainer::load_model(path);
    CHECK(resolved_text(back_cfg) == resolved_text(cfg));
    CHECK(weights_equal(net, res.model));

    // a checkpoint missing a tensor is rejected with a clear error
    Checkpoint ckpt = load_checkpoint(path);
    ckpt.tensors.erase(ckpt.tensors.begin());
    save_checkpoint("model_rt_broken.ckpt", ckpt);
    CHECK_THROWS_AS(trainer::load_model("model_rt_broken.ckpt"), IoError);
    fs::remove(path);
    fs::remove("model_rt_broken.ckpt");
}

TEST_CASE("trainer: ablation variants toggle the advertised switches") {
    const RunConfig base = tiny_cfg();
    const auto variants = trainer::ablation_variants(base);
    REQUIRE(variants.size() == 7);
    CHECK(variants[0].name == "full");
    CHECK(variants[1].name == "A1_no_smooth_no_grad_no_super");
    CHECK_FALSE(variants[1].cfg.model.smoothing.enabled);
    CHECK_FALSE(variants[1].cfg.model.use_grad_loss);
    CHECK_FALSE(variants[1].cfg.model.super_upsample);
    CHECK(variants[2].name == "A2_no_smoothing");
    CHECK_FALSE(variants[2].cfg.model.smoothing.enabled);
    CHECK(variants[2].cfg.model.use_grad_loss);
    CHECK(variants[3].name == "A3_no_grad_loss");
    CHECK_FALSE(variants[3].cfg.model.use_grad_loss);
    CHECK(variants[4].name == "A4_no_super_upsample");
    CHECK_FALSE(variants[4].cfg.model.super_upsample);
    CHECK(variants[5].name == "A5_bulk_only");
    CHECK_FALSE(variants[5].cfg.model.use_ft);
    CHECK(variants[5].cfg.model.use_bulk);
    CHECK(variants[6].name == "A6_ft_only");
    CHECK_FALSE(variants[6].cfg.model.use_bulk);
    CHECK(variants[6].cfg.model.use_ft);
    // every variant still validates
    for (const auto& v : variants) CHECK_NOTHROW(v.cfg.validate());
}

TEST_CASE("trainer: run_ablations produces one row per variant") {
    RunConfig cfg = tiny_cfg();
    cfg.model.epochs = 1;
    const Dataset ds = synthdata::generate_dataset(cfg.data);
    const auto results = trainer::run_ablations(cfg, ds);
    REQUIRE(results.size() == 7);
    for (const auto& r : results) {
        CHECK(r.ok);
        CHECK(r.error.empty());
        CHECK(r.row.n == static_cast<int>(ds.test.size()));
        CHECK(std::isfinite(r.row.dice_mean));
    }
}

TEST_CASE("trainer: sweeps cover the requested grids") {
    RunConfig cfg = tiny_cfg();
    cfg.model.epochs = 1;
    const Dataset ds = synthdata::generate_dataset(cfg.data);

    const auto layers = trainer::sweep_integration_layers(cfg, ds, {0, 2});
    REQUIRE(layers.size() == 2);
    CHECK(layers[0].t == 0);
    CHECK(layers[1].t == 2);
    for (const auto& r : layers) {
        CHECK(std::isfinite(r.dice_mean));
        CHECK(std::isfinite(r.min_det));
    }

    const auto radii = trainer::sweep_prior_radius(cfg, ds, {25.0, 30.0});
    REQUIRE(radii.size() == 2);
    CHECK(radii[0].radius == 25.0);
    CHECK(radii[1].radius == 30.0);
    for (const auto& r : radii) {
        CHECK(r.incorrect_topology >= 0);
        CHECK(r.incorrect_topology <= static_cast<int>(ds.test.size()));
    }
}
