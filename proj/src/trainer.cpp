#include "topowarp/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "topowarp/adam.hpp"
#include "topowarp/ops.hpp"
#include "topowarp/serialize.hpp"

namespace topowarp::trainer {

namespace {

// Stream tags separating the independent RNG uses of one training run.
constexpr std::uint64_t kShuffleTag = 101, kDropoutTag = 103;

Tensor label_tensor(const BinaryMask& mask) {
    Tensor t(Shape{mask.h, mask.w});
    for (std::size_t i = 0; i < mask.v.size(); ++i) t[i] = mask.v[i] ? 1.0 : 0.0;
    return t;
}

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double acc = 0.0;
    for (double x : v) acc += x;
    return acc / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double acc = 0.0;
    for (double x : v) acc += (x - m) * (x - m);
    return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

double validation_dice(WarpNet& net, const Tensor& prior,
                       const std::vector<SynthSample>& val) {
    if (val.empty()) return 0.0;
    double acc = 0.0;
    Rng dummy(0);
    for (const SynthSample& s : val) {
        NetOutput out = network::forward(net, s.image, prior, false, dummy);
        acc += losses::dice_metric(topology::threshold(out.y_soft), s.label);
    }
    return acc / static_cast<double>(val.size());
}

}  // namespace

TrainResult train(const RunConfig& cfg, const Dataset& dataset, std::ostream* progress) {
    cfg.validate();
    const ModelConfig& m = cfg.model;
    if (m.epochs > 0 && dataset.train.empty())
        throw ValueError("train: empty training split");

    Rng init_rng(m.seed);
    TrainResult result;
    result.model = network::build(m, init_rng);
    WarpNet& net = result.model;
    const Tensor prior = network::make_prior_tensor(m);

    std::vector<Tensor> params = net.parameter_tensors();
    Adam opt(params, m.lr);

    // snapshot/restore of the best-validation weights
    std::vector<std::vector<double>> best;
    auto snapshot = [&]() {
        best.clear();
        for (const Tensor& p : params) best.push_back(p.vec());
    };
    auto restore = [&]() {
        for (std::size_t i = 0; i < params.size(); ++i) params[i].vec() = best[i];
    };

    const std::size_t n = dataset.train.size();
    const double effective_beta = m.use_grad_loss ? m.beta : 0.0;

    for (int epoch = 0; epoch < m.epochs; ++epoch) {
        // deterministic per-epoch shuffle
        std::vector<std::size_t> order(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        Rng shuffle_rng(Rng::derive(m.seed, kShuffleTag, static_cast<std::uint64_t>(epoch)));
        for (std::size_t i = n; i > 1; --i) {
            const std::size_t j = shuffle_rng.next_index(i);
            std::swap(order[i - 1], order[j]);
        }

        LossBreakdown epoch_sum;
        epoch_sum.beta = effective_beta;

        for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(m.batch)) {
            const std::size_t stop = std::min(n, start + static_cast<std::size_t>(m.batch));
            const double inv_batch = 1.0 / static_cast<double>(stop - start);
            for (std::size_t bi = start; bi < stop; ++bi) {
                const std::size_t idx = order[bi];
                const std::uint64_t unit =
                    static_cast<std::uint64_t>(epoch) * n + idx;  // per-sample stream id

                const SynthSample& sample = dataset.train[idx];
                const Tensor target = label_tensor(sample.label);

                Tape tape;
                TapeScope scope(tape);
                Rng drop_rng(Rng::derive(m.seed, kDropoutTag, unit));
                NetOutput out = network::forward(net, sample.image, prior, true, drop_rng);
                auto [total, bd] =
                    losses::total_loss(out.y_soft, target, out.phi_bulk, out.phi_ft,
                                       effective_beta);
                if (!std::isfinite(bd.total))
                    throw TrainingDiverged("training diverged: non-finite loss at epoch " +
                                               std::to_string(epoch) + ", sample " +
                                               std::to_string(idx),
                                           out.phi_bulk.detached(), out.phi_ft.detached());
                // batch-mean objective: seed each sample's backward with 1/B
                tape.backward(ops::scale(total, inv_batch));

                epoch_sum.dice_loss += bd.dice_loss;
                epoch_sum.grad_bulk += bd.grad_bulk;
                epoch_sum.grad_ft += bd.grad_ft;
                epoch_sum.total += bd.total;
            }
            opt.step();
            opt.zero_grad();
        }

        EpochLog log;
        log.epoch = epoch;
        log.loss.beta = effective_beta;
        log.loss.dice_loss = epoch_sum.dice_loss / static_cast<double>(n);
        log.loss.grad_bulk = epoch_sum.grad_bulk / static_cast<double>(n);
        log.loss.grad_ft = epoch_sum.grad_ft / static_cast<double>(n);
        log.loss.total = epoch_sum.total / static_cast<double>(n);
        log.val_dice = validation_dice(net, prior, dataset.val);
        result.log.push_back(log);

        if (result.best_epoch < 0 || log.val_dice > result.best_val_dice) {
            result.best_val_dice = log.val_dice;
            result.best_epoch = epoch;
            snapshot();
        }
        if (progress) {
            char buf[256];
            std::snprintf(buf, sizeof(buf),
                          "epoch %3d/%d  dice_loss %.4f  grad_bulk %.6f  grad_ft %.6f  "
                          "total %.4f  val_dice %.4f\n",
                          epoch + 1, m.epochs, log.loss.dice_loss, log.loss.grad_bulk,
                          log.loss.grad_ft, log.loss.total, log.val_dice);
            (*progress) << buf << std::flush;
        }
    }

    if (result.best_epoch >= 0) restore();
    return result;
}

EvalReport evaluate(WarpNet& net, const std::vector<SynthSample>& samples) {
    EvalReport rep;
    EvalDetail& d = rep.detail;
    const Tensor prior = network::make_prior_tensor(net.cfg);
    Rng dummy(0);

    for (const SynthSample& s : samples) {
        NetOutput out = network::forward(net, s.image, prior, false, dummy);
        const BinaryMask pred = topology::threshold(out.y_soft);

        d.dice.push_back(losses::dice_metric(pred, s.label));
        if (pred.empty_mask() || s.label.empty_mask())
            d.hd.push_back(std::nullopt);
        else
            d.hd.push_back(losses::hausdorff(pred, s.label));
        d.topology_ok.push_back(topology::topology_correct(pred).correct);

        const JacobianReport jb = fields::jacobian_report(out.phi_bulk);
        const JacobianReport jf = fields::jacobian_report(out.phi_ft);
        d.pct_nonpos_bulk.push_back(100.0 * jb.frac_nonpositive);
        d.pct_nonpos_ft.push_back(100.0 * jf.frac_nonpositive);
        d.min_det_bulk.push_back(jb.min_det);
        d.min_det_ft.push_back(jf.min_det);
        d.predictions.push_back(pred);
    }

    EvalRow& r = rep.row;
    r.n = static_cast<int>(samples.size());
    r.dice_mean = mean_of(d.dice);
    r.dice_sd = sd_of(d.dice);
    std::vector<double> hd_values;
    for (const auto& h : d.hd)
        if (h) hd_values.push_back(*h);
    r.hd_missing = r.n - static_cast<int>(hd_values.size());
    r.hd_mean = mean_of(hd_values);
    r.hd_sd = sd_of(hd_values);
    r.pct_nonpos_bulk_mean = mean_of(d.pct_nonpos_bulk);
    r.pct_nonpos_bulk_sd = sd_of(d.pct_nonpos_bulk);
    r.pct_nonpos_ft_mean = mean_of(d.pct_nonpos_ft);
    r.pct_nonpos_ft_sd = sd_of(d.pct_nonpos_ft);
    for (bool ok : d.topology_ok)
        if (!ok) ++r.incorrect_topology;
    return rep;
}

std::string eval_csv_header() {
    return "dice_mean,dice_sd,hd_mean,hd_sd,pct_nonpos_bulk_mean,pct_nonpos_bulk_sd,"
           "pct_nonpos_ft_mean,pct_nonpos_ft_sd,incorrect_topology,n";
}

std::string eval_csv_row(const EvalRow& row) {
    char buf[512];
    std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%d/%d,%d",
                  row.dice_mean, row.dice_sd, row.hd_mean, row.hd_sd,
                  row.pct_nonpos_bulk_mean, row.pct_nonpos_bulk_sd, row.pct_nonpos_ft_mean,
                  row.pct_nonpos_ft_sd, row.incorrect_topology, row.n, row.n);
    return buf;
}

void write_training_log(const std::string& path, const std::vector<EpochLog>& log) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write training log: " + path);
    os << "epoch,dice_loss,grad_bulk,grad_ft,total\n";
    char buf[256];
    for (const EpochLog& l : log) {
        std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g,%.9g\n", l.epoch, l.loss.dice_loss,
                      l.loss.grad_bulk, l.loss.grad_ft, l.loss.total);
        os << buf;
    }
    if (!os) throw IoError("training log write failed: " + path);
}

void save_model(const std::string& path, WarpNet& net, const RunConfig& cfg) {
    Checkpoint ckpt;
    std::ostringstream resolved;
    write_resolved_config(resolved, cfg);
    std::istringstream lines(resolved.str());
    std::string line;
    while (std::getline(lines, line)) {
        const auto eq = line.find(" = ");
        if (eq != std::string::npos)
            ckpt.config.emplace_back(line.substr(0, eq), line.substr(eq + 3));
    }
    for (auto& [name, t] : net.parameters()) ckpt.tensors.emplace_back(name, t);
    save_checkpoint(path, ckpt);
}

std::pair<WarpNet, RunConfig> load_model(const std::string& path) {
    const Checkpoint ckpt = load_checkpoint(path);
    RunConfig cfg = parse_config_text("", path);  // defaults
    for (const auto& [k, v] : ckpt.config) apply_override(cfg, k, v);
    cfg.validate();

    Rng rng(cfg.model.seed);
    WarpNet net = network::build(cfg.model, rng);
    for (auto& [name, t] : net.parameters()) {
        const Tensor& stored = ckpt.tensor(name);  // throws when absent
        if (stored.shape() != t.shape())
            throw IoError("checkpoint: tensor '" + name + "' has shape " +
                          shape_str(stored.shape()) + ", model wants " + shape_str(t.shape()));
        t.vec() = stored.vec();
    }
    return {std::move(net), std::move(cfg)};
}

std::vector<AblationVariant> ablation_variants(const RunConfig& base) {
    std::vector<AblationVariant> v;
    v.push_back({"full", base});

    RunConfig a1 = base;  // no smoothing, no gradient loss, no super-upsampling
    a1.model.smoothing.enabled = false;
    a1.model.use_grad_loss = false;
    a1.model.super_upsample = false;
    v.push_back({"A1_no_smooth_no_grad_no_super", a1});

    RunConfig a2 = base;
    a2.model.smoothing.enabled = false;
    v.push_back({"A2_no_smoothing", a2});

    RunConfig a3 = base;
    a3.model.use_grad_loss = false;
    v.push_back({"A3_no_grad_loss", a3});

    RunConfig a4 = base;
    a4.model.super_upsample = false;
    v.push_back({"A4_no_super_upsample", a4});

    RunConfig a5 = base;
    a5.model.use_ft = false;
    v.push_back({"A5_bulk_only", a5});

    RunConfig a6 = base;
    a6.model.use_bulk = false;
    v.push_back({"A6_ft_only", a6});
    return v;
}

std::vector<AblationResult> run_ablations(const RunConfig& base, const Dataset& dataset,
                                          std::ostream* progress) {
    std::vector<AblationResult> results;
    for (const AblationVariant& variant : ablation_variants(base)) {
        AblationResult res;
        res.name = variant.name;
        if (progress) (*progress) << "--- variant " << variant.name << "\n" << std::flush;
        try {
            TrainResult tr = train(variant.cfg, dataset, progress);
            res.row = evaluate(tr.model, dataset.test).row;
            res.ok = true;
        } catch (const std::exception& e) {
            res.error = e.what();  // one failing variant must not abort the table
        }
        results.push_back(std::move(res));
    }
    return results;
}

std::vector<LayerSweepRow> sweep_integration_layers(const RunConfig& cfg, const Dataset& dataset,
                                                    const std::vector<int>& t_values,
                                                    std::ostream* progress) {
    std::vector<LayerSweepRow> rows;
    for (int t : t_values) {
        RunConfig c = cfg;  // same seed per point: differences reflect T only
        c.model.integration_layers = t;
        if (progress) (*progress) << "--- integration layers T=" << t << "\n" << std::flush;
        TrainResult tr = train(c, dataset, progress);
        EvalReport rep = evaluate(tr.model, dataset.test);

        LayerSweepRow row;
        row.t = t;
        row.dice_mean = rep.row.dice_mean;
        row.hd_mean = rep.row.hd_mean;
        row.min_det = std::numeric_limits<double>::infinity();
        for (double v : rep.detail.min_det_bulk) row.min_det = std::min(row.min_det, v);
        for (double v : rep.detail.min_det_ft) row.min_det = std::min(row.min_det, v);
        row.pct_nonpos =
            (rep.row.pct_nonpos_bulk_mean + rep.row.pct_nonpos_ft_mean) / 2.0;
        rows.push_back(row);
    }
    return rows;
}

std::vector<RadiusSweepRow> sweep_prior_radius(const RunConfig& cfg, const Dataset& dataset,
                                               const std::vector<double>& radii,
                                               std::ostream* progress) {
    std::vector<RadiusSweepRow> rows;
    for (double radius : radii) {
        RunConfig c = cfg;
        c.model.prior_radius = radius;
        if (progress) (*progress) << "--- prior radius " << radius << "\n" << std::flush;
        TrainResult tr = train(c, dataset, progress);
        EvalReport rep = evaluate(tr.model, dataset.test);

        RadiusSweepRow row;
        row.radius = radius;
        row.dice_mean = rep.row.dice_mean;
        row.hd_mean = rep.row.hd_mean;
        row.pct_nonpos = (rep.row.pct_nonpos_bulk_mean + rep.row.pct_nonpos_ft_mean) / 2.0;
        row.incorrect_topology = rep.row.incorrect_topology;
        rows.push_back(row);
    }
    return rows;
}

}  // namespace topowarp::trainer
