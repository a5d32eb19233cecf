// topowarp — command-line workbench for the topology-preserving annulus
// segmentation model: synthetic data generation, training, evaluation,
// ablations, sweeps, and deformation-field inspection.
//
// Exit codes: 0 success, 1 usage error, 2 missing/invalid inputs,
// 3 numeric failure (training divergence, with a field dump in --out).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "topowarp/config.hpp"
#include "topowarp/fields.hpp"
#include "topowarp/network.hpp"
#include "topowarp/pgm.hpp"
#include "topowarp/serialize.hpp"
#include "topowarp/synthdata.hpp"
#include "topowarp/tensor.hpp"
#include "topowarp/topology.hpp"
#include "topowarp/trainer.hpp"

namespace fs = std::filesystem;
using namespace topowarp;

namespace {

struct CliArgs {
    std::string config_path;
    std::string data_dir;
    std::string out_dir;
    std::string ckpt_path;
    std::string image_path;
    std::string which;
    std::vector<std::string> overrides;
};

// Config file (when given) + repeated --override key=value flags, validated.
RunConfig resolve_config(const CliArgs& args) {
    RunConfig cfg =
        args.config_path.empty() ? RunConfig{} : parse_config_file(args.config_path);
    for (const std::string& ov : args.overrides) {
        const auto eq = ov.find('=');
        if (eq == std::string::npos || eq == 0)
            throw ConfigError("override must be key=value, got '" + ov + "'");
        std::string key = ov.substr(0, eq), value = ov.substr(eq + 1);
        while (!key.empty() && key.back() == ' ') key.pop_back();
        while (!value.empty() && value.front() == ' ') value.erase(value.begin());
        apply_override(cfg, key, value);
    }
    cfg.validate();
    return cfg;
}

void ensure_out_dir(const std::string& out) {
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw IoError("cannot create output directory " + out + ": " + ec.message());
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write " + path);
    os << text;
    if (!os) throw IoError("write failed: " + path);
}

Tensor channel_slice(const Tensor& field, std::size_t ch) {
    const std::size_t h = field.extent(1), w = field.extent(2);
    Tensor out(Shape{h, w});
    for (std::size_t i = 0; i < h * w; ++i) out[i] = field[ch * h * w + i];
    return out;
}

int cmd_gen_data(const CliArgs& args) {
    const RunConfig cfg = resolve_config(args);
    ensure_out_dir(args.out_dir);
    write_resolved_config_file(args.out_dir + "/resolved_config.txt", cfg);
    const Dataset ds = synthdata::generate_dataset(cfg.data);
    synthdata::write_dataset(args.out_dir, ds);
    std::cout << "wrote " << ds.train.size() << " train / " << ds.val.size() << " val / "
              << ds.test.size() << " test samples to " << args.out_dir << "\n";
    return 0;
}

int cmd_train(const CliArgs& args) {
    const RunConfig cfg = resolve_config(args);
    const Dataset ds = synthdata::load_dataset(args.data_dir);
    ensure_out_dir(args.out_dir);
    write_resolved_config_file(args.out_dir + "/resolved_config.txt", cfg);

    TrainResult tr;
    try {
        tr = trainer::train(cfg, ds, &std::cout);
    } catch (const trainer::TrainingDiverged& e) {
        const std::string pb = args.out_dir + "/diverged_phi_bulk.tnsr";
        const std::string pf = args.out_dir + "/diverged_phi_ft.tnsr";
        save_tnsr(pb, e.phi_bulk);
        save_tnsr(pf, e.phi_ft);
        std::cerr << "error: " << e.what() << " (fields dumped to " << pb << ", " << pf
                  << ")\n";
        return 3;
    }
    trainer::write_training_log(args.out_dir + "/log.csv", tr.log);
    trainer::save_model(args.out_dir + "/best.ckpt", tr.model, cfg);
    if (tr.best_epoch >= 0)
        std::cout << "best epoch " << tr.best_epoch << " with validation dice "
                  << tr.best_val_dice << "\n";
    std::cout << "wrote " << args.out_dir << "/best.ckpt\n";
    return 0;
}

int cmd_eval(const CliArgs& args) {
    auto [net, cfg] = trainer::load_model(args.ckpt_path);
    const Dataset ds = synthdata::load_dataset(args.data_dir);
    ensure_out_dir(args.out_dir);
    write_resolved_config_file(args.out_dir + "/resolved_config.txt", cfg);

    const EvalReport rep = trainer::evaluate(net, ds.test);
    write_text_file(args.out_dir + "/metrics.csv",
                    trainer::eval_csv_header() + "\n" + trainer::eval_csv_row(rep.row) + "\n");
    char name[64];
    for (std::size_t i = 0; i < rep.detail.predictions.size(); ++i) {
        std::snprintf(name, sizeof(name), "/pred_%04zu.pgm", i);
        write_mask_pgm(args.out_dir + name, rep.detail.predictions[i]);
    }
    std::cout << "n " << rep.row.n << "  dice " << rep.row.dice_mean << " +- "
              << rep.row.dice_sd << "  hd " << rep.row.hd_mean << " +- " << rep.row.hd_sd
              << "  incorrect_topology " << rep.row.incorrect_topology << "/" << rep.row.n
              << "\n";
    std::cout << "wrote " << args.out_dir << "/metrics.csv\n";
    return 0;
}

std::string csv_quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) out += (c == '"') ? '\'' : c;
    out += '"';
    return out;
}

int run_ablation_table(const RunConfig& cfg, const CliArgs& args) {
    const Dataset ds = synthdata::load_dataset(args.data_dir);
    const auto results = trainer::run_ablations(cfg, ds, &std::cout);

    std::string csv = "name," + trainer::eval_csv_header() + ",error\n";
    for (const auto& r : results) {
        if (r.ok)
            csv += r.name + "," + trainer::eval_csv_row(r.row) + ",\n";
        else
            csv += r.name + ",,,,,,,,,,," + csv_quote(r.error) + "\n";
    }
    write_text_file(args.out_dir + "/ablations.csv", csv);
    std::cout << "wrote " << args.out_dir << "/ablations.csv (" << results.size()
              << " rows)\n";
    return 0;
}

int cmd_ablate(const CliArgs& args) {
    const RunConfig cfg = resolve_config(args);
    ensure_out_dir(args.out_dir);
    write_resolved_config_file(args.out_dir + "/resolved_config.txt", cfg);
    return run_ablation_table(cfg, args);
}

int cmd_sweep(const CliArgs& args) {
    const RunConfig cfg = resolve_config(args);
    ensure_out_dir(args.out_dir);
    write_resolved_config_file(args.out_dir + "/resolved_config.txt", cfg);

    if (args.which == "ablations") return run_ablation_table(cfg, args);

    const Dataset ds = synthdata::load_dataset(args.data_dir);
    char buf[256];
    if (args.which == "layers") {
        const auto rows =
            trainer::sweep_integration_layers(cfg, ds, cfg.sweep_t_values, &std::cout);
        std::string csv = "t,dice_mean,hd_mean,min_det,pct_nonpos\n";
        for (const auto& r : rows) {
            std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%.6f,%.6f\n", r.t, r.dice_mean,
                          r.hd_mean, r.min_det, r.pct_nonpos);
            csv += buf;
        }
        write_text_file(args.out_dir + "/sweep_layers.csv", csv);
        std::cout << "wrote " << args.out_dir << "/sweep_layers.csv (" << rows.size()
                  << " rows)\n";
        return 0;
    }
    // --which is validated by the parser, so this is the radius sweep.
    const auto rows = trainer::sweep_prior_radius(cfg, ds, cfg.sweep_radii, &std::cout);
    std::string csv = "radius,dice_mean,hd_mean,pct_nonpos,incorrect_topology\n";
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%.6g,%.6f,%.6f,%.6f,%d\n", r.radius, r.dice_mean,
                      r.hd_mean, r.pct_nonpos, r.incorrect_topology);
        csv += buf;
    }
    write_text_file(args.out_dir + "/sweep_radius.csv", csv);
    std::cout << "wrote " << args.out_dir << "/sweep_radius.csv (" << rows.size()
              << " rows)\n";
    return 0;
}

int cmd_inspect_field(const CliArgs& args) {
    auto [net, cfg] = trainer::load_model(args.ckpt_path);
    const Tensor image = read_image_pgm(args.image_path);
    ensure_out_dir(args.out_dir);
    write_resolved_config_file(args.out_dir + "/resolved_config.txt", cfg);

    const Tensor prior = network::make_prior_tensor(cfg.model);
    Rng rng(0);
    NetOutput out = network::forward(net, image, prior, false, rng);
    const JacobianReport jb = fields::jacobian_report(out.phi_bulk);
    const JacobianReport jf = fields::jacobian_report(out.phi_ft);

    const std::string& d = args.out_dir;
    save_tnsr(d + "/phi_bulk.tnsr", out.phi_bulk);
    save_tnsr(d + "/phi_ft.tnsr", out.phi_ft);
    save_tnsr(d + "/det_bulk.tnsr", jb.det_grid);
    save_tnsr(d + "/det_ft.tnsr", jf.det_grid);
    save_tnsr(d + "/y_bulk.tnsr", out.y_bulk);
    save_tnsr(d + "/y_soft.tnsr", out.y_soft);

    write_heatmap_pgm(d + "/phi_bulk_row.pgm", channel_slice(out.phi_bulk, 0));
    write_heatmap_pgm(d + "/phi_bulk_col.pgm", channel_slice(out.phi_bulk, 1));
    write_heatmap_pgm(d + "/phi_ft_row.pgm", channel_slice(out.phi_ft, 0));
    write_heatmap_pgm(d + "/phi_ft_col.pgm", channel_slice(out.phi_ft, 1));
    write_heatmap_pgm(d + "/det_bulk.pgm", jb.det_grid);
    write_heatmap_pgm(d + "/det_ft.pgm", jf.det_grid);
    write_image_pgm(d + "/y_bulk.pgm", out.y_bulk);
    write_image_pgm(d + "/y_soft.pgm", out.y_soft);

    std::cout << "bulk: min_det " << jb.min_det << ", pct_nonpos " << 100.0 * jb.frac_nonpositive
              << "\n";
    std::cout << "ft:   min_det " << jf.min_det << ", pct_nonpos " << 100.0 * jf.frac_nonpositive
              << "\n";
    std::cout << "wrote field dumps to " << d << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"topology-preserving annulus segmentation workbench"};
    app.require_subcommand(1);

    CliArgs args;
    auto add_config = [&](CLI::App* sub) {
        sub->add_option("--config", args.config_path, "config file (flat key = value lines)")
            ->check(CLI::ExistingFile);
        sub->add_option("--override", args.overrides,
                        "config override key=value (repeatable)");
    };
    auto add_data = [&](CLI::App* sub) {
        sub->add_option("--data", args.data_dir, "dataset directory (from gen-data)")
            ->required()
            ->check(CLI::ExistingDirectory);
    };
    auto add_out = [&](CLI::App* sub) {
        sub->add_option("--out", args.out_dir, "output directory (created if missing)")
            ->required();
    };
    auto add_ckpt = [&](CLI::App* sub) {
        sub->add_option("--ckpt", args.ckpt_path, "model checkpoint")
            ->required()
            ->check(CLI::ExistingFile);
    };

    CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic annulus dataset");
    add_config(gen);
    add_out(gen);

    CLI::App* train = app.add_subcommand("train", "train a model on a generated dataset");
    add_config(train);
    add_data(train);
    add_out(train);

    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
    add_ckpt(eval);
    add_data(eval);
    add_out(eval);

    CLI::App* ablate = app.add_subcommand("ablate", "train and evaluate all ablation variants");
    add_config(ablate);
    add_data(ablate);
    add_out(ablate);

    CLI::App* sweep = app.add_subcommand("sweep", "parameter sweeps (retrains per point)");
    add_config(sweep);
    add_data(sweep);
    add_out(sweep);
    sweep->add_option("--which", args.which, "what to sweep")
        ->required()
        ->check(CLI::IsMember({"layers", "radius", "ablations"}));

    CLI::App* inspect =
        app.add_subcommand("inspect-field", "dump fields and diagnostics for one image");
    add_ckpt(inspect);
    inspect->add_option("--image", args.image_path, "input image (PGM)")
        ->required()
        ->check(CLI::ExistingFile);
    add_out(inspect);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(args);
        if (train->parsed()) return cmd_train(args);
        if (eval->parsed()) return cmd_eval(args);
        if (ablate->parsed()) return cmd_ablate(args);
        if (sweep->parsed()) return cmd_sweep(args);
        if (inspect->parsed()) return cmd_inspect_field(args);
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {  // config/io/shape/value errors
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
