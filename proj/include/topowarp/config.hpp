#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "topowarp/fields.hpp"

namespace topowarp {

// Geometry defaults (prior radius/thickness, dataset radius/thickness
// ranges) are stated in the units of a 144-row frame and scaled by h/144 at
// use, so one config works across frame sizes.
double geometry_scale(std::size_t h);

struct ModelConfig {
    std::size_t h = 64, w = 96;     // input extents, divisible by 16
    int levels = 5;                 // encoder resolution levels
    int base_channels = 12;         // channels at the first level (doubles per level)
    double dropout = 0.2;           // channel-wise dropout after each conv block
    int integration_layers = 8;     // scaling-and-squaring steps T
    SmoothingConfig smoothing{};    // 5x5, sigma 2, enabled
    bool super_upsample = true;     // resample final fields to (2h, 2w)
    bool use_bulk = true;           // coarse positioning branch
    bool use_ft = true;             // fine-tuning branch
    bool use_grad_loss = true;      // gradient-energy regularization
    double beta = 10000.0;          // regularization weight
    double prior_radius = 30.0;     // 144-frame units
    double prior_thickness = 8.0;   // 144-frame units
    double lr = 1e-4;
    int batch = 5;
    int epochs = 30;
    std::uint64_t seed = 42;
};

struct DatasetConfig {
    std::size_t h = 64, w = 96;
    std::size_t n_train = 500, n_val = 100, n_test = 100;
    double radius_lo = 10.0, radius_hi = 40.0;      // 144-frame units
    double thickness_lo = 4.0, thickness_hi = 12.0;  // 144-frame units
    double noise_sigma = 0.05;
    int distractor_max = 3;
    // annulus centers land within +-center_jitter*extent of the frame center
    // (mimicking roughly-centered, unaligned crops), so the centered prior
    // always has a reachable target
    double center_jitter = 0.12;
    // training-split augmentation, applied once at generation time so the
    // training set is a fixed collection the optimizer revisits every epoch
    bool augment = true;
    double augment_fraction = 0.5;  // share of training samples that get augmented
    std::uint64_t data_seed = 1234;
};

struct RunConfig {
    ModelConfig model;
    DatasetConfig data;
    std::vector<int> sweep_t_values = {2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16};
    std::vector<double> sweep_radii = {10.0, 20.0, 30.0, 40.0, 50.0};  // 144-frame units

    // Throws ConfigError when any invariant is violated (extents not
    // divisible by 16, geometry not fitting the frame, ranges inverted...).
    void validate() const;
};

// Flat `key = value` config files; '#' starts a comment, blank lines are
// skipped, unknown keys are rejected. Every key has a default, so an empty
// file is a valid config.
RunConfig parse_config_file(const std::string& path);
RunConfig parse_config_text(const std::string& text, const std::string& origin);

// Applies one `key=value` override (the `T` alias maps to
// integration_layers). Unknown keys and unparseable values throw ConfigError.
void apply_override(RunConfig& cfg, const std::string& key, const std::string& value);

// Echoes every key with its effective value, in a fixed order, re-parseable
// by parse_config_file.
void write_resolved_config(std::ostream& os, const RunConfig& cfg);
void write_resolved_config_file(const std::string& path, const RunConfig& cfg);

}  // namespace topowarp
