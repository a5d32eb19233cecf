#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "topowarp/config.hpp"
#include "topowarp/losses.hpp"
#include "topowarp/network.hpp"
#include "topowarp/synthdata.hpp"

namespace topowarp {

// Aggregated test-set metrics, one table row per experiment.
struct EvalRow {
    double dice_mean = 0.0, dice_sd = 0.0;
    double hd_mean = 0.0, hd_sd = 0.0;  // over samples where HD is defined
    double pct_nonpos_bulk_mean = 0.0, pct_nonpos_bulk_sd = 0.0;
    double pct_nonpos_ft_mean = 0.0, pct_nonpos_ft_sd = 0.0;
    int incorrect_topology = 0;  // count of samples with wrong Betti numbers
    int n = 0;
    int hd_missing = 0;  // samples skipped by HD (empty prediction)
};

// Per-sample evaluation detail, kept alongside the aggregate row.
struct EvalDetail {
    std::vector<double> dice;
    std::vector<std::optional<double>> hd;
    std::vector<bool> topology_ok;
    std::vector<double> pct_nonpos_bulk, pct_nonpos_ft;
    std::vector<double> min_det_bulk, min_det_ft;
    std::vector<BinaryMask> predictions;
};

struct EvalReport {
    EvalRow row;
    EvalDetail detail;
};

struct EpochLog {
    int epoch = 0;
    LossBreakdown loss;    // means over the epoch's samples
    double val_dice = 0.0;  // mean validation Dice of the thresholded output
};

struct TrainResult {
    WarpNet model;  // weights of the best-validation-Dice epoch
    std::vector<EpochLog> log;
    int best_epoch = -1;  // -1 when epochs == 0
    double best_val_dice = 0.0;
};

namespace trainer {

// Divergence carries the offending fields so callers can dump them before
// exiting.
struct TrainingDiverged : NumericError {
    Tensor phi_bulk, phi_ft;
    TrainingDiverged(const std::string& msg, Tensor pb, Tensor pf)
        : NumericError(msg), phi_bulk(std::move(pb)), phi_ft(std::move(pf)) {}
};

// Minimizes the combined objective with Adam over minibatches; per-epoch
// validation picks the returned weights. Throws TrainingDiverged on a
// non-finite loss. Fully deterministic for a fixed (cfg, dataset).
TrainResult train(const RunConfig& cfg, const Dataset& dataset,
                  std::ostream* progress = nullptr);

// Threshold → Dice / Hausdorff / Betti verdict / Jacobian reports per test
// sample, aggregated as mean ± sd.
EvalReport evaluate(WarpNet& net, const std::vector<SynthSample>& samples);

// metrics.csv row (header fixed by the reporting contract).
std::string eval_csv_header();
std::string eval_csv_row(const EvalRow& row);

// log.csv (epoch, dice_loss, grad_bulk, grad_ft, total).
void write_training_log(const std::string& path, const std::vector<EpochLog>& log);

// Model checkpointing: plain-text header (full resolved config + tensor
// manifest) followed by TNSR blobs. load_model rebuilds the architecture
// from the embedded config and restores every named tensor.
void save_model(const std::string& path, WarpNet& net, const RunConfig& cfg);
std::pair<WarpNet, RunConfig> load_model(const std::string& path);

// The named ablation variants (full, A1..A6) applied to a base config.
struct AblationVariant {
    std::string name;
    RunConfig cfg;
};
std::vector<AblationVariant> ablation_variants(const RunConfig& base);

// Trains and evaluates every variant under the same budget and seed; a
// variant that throws is reported as a failed row rather than aborting the
// table. Returns (variant name, row or error).
struct AblationResult {
    std::string name;
    bool ok = false;
    EvalRow row;
    std::string error;
};
std::vector<AblationResult> run_ablations(const RunConfig& base, const Dataset& dataset,
                                          std::ostream* progress = nullptr);

// One retrain per integration-layer count; same seed per point.
struct LayerSweepRow {
    int t = 0;
    double dice_mean = 0.0, hd_mean = 0.0;
    double min_det = 0.0;      // min over test samples and both fields
    double pct_nonpos = 0.0;   // mean over samples and both fields
};
std::vector<LayerSweepRow> sweep_integration_layers(const RunConfig& cfg, const Dataset& dataset,
                                                    const std::vector<int>& t_values,
                                                    std::ostream* progress = nullptr);

// One retrain per prior radius (canonical 144-frame units).
struct RadiusSweepRow {
    double radius = 0.0;
    double dice_mean = 0.0, hd_mean = 0.0;
    double pct_nonpos = 0.0;
    int incorrect_topology = 0;
};
std::vector<RadiusSweepRow> sweep_prior_radius(const RunConfig& cfg, const Dataset& dataset,
                                               const std::vector<double>& radii,
                                               std::ostream* progress = nullptr);

}  // namespace trainer
}  // namespace topowarp
