#pragma once

#include <string>
#include <vector>

#include "topowarp/config.hpp"
#include "topowarp/topology.hpp"

namespace topowarp {

// One synthetic heart-slice stand-in: an intensity image with a bright
// annular wall, an interior pool, optional distractor blobs and noise, plus
// the binary annulus label (always a single ring: betti numbers (1,1)).
struct SynthSample {
    Tensor image;      // [1,h,w], values in [0,1]
    BinaryMask label;  // annulus
    double center_r = 0.0, center_c = 0.0;
    double radius = 0.0, thickness = 0.0;
    std::uint64_t seed = 0;  // stream seed this sample was generated from
};

struct Dataset {
    std::vector<SynthSample> train, val, test;
};

namespace synthdata {

// Centered annulus: foreground where radius − thickness/2 ≤ dist(center) ≤
// radius + thickness/2 (voxel units of this frame). Throws ConfigError when
// the annulus does not fit the frame or degenerates to a disk.
BinaryMask make_prior(std::size_t h, std::size_t w, double radius, double thickness);

// Deterministic sample from one RNG stream seed; label verified betti (1,1),
// parameters re-drawn on the rare discretization violation.
SynthSample generate_sample(std::uint64_t stream_seed, const DatasetConfig& cfg);

// Rotation by theta_deg about the frame centre, then zoom, then a shift of
// (shift_r, shift_c) voxels, applied to image (bilinear, clamp-to-edge) and
// label (nearest-neighbour, background outside the frame) alike. Geometry
// metadata is transformed to match. Makes no topology promise.
SynthSample apply_affine(const SynthSample& s, double theta_deg, double shift_r,
                         double shift_c, double zoom);

// One random augmentation: picks rotation (±30°), shift (±10% extent), zoom
// (0.8–1.2) or a combination of all three, re-drawn until the transformed
// label keeps betti (1,1), falling back to the input sample.
SynthSample augment(const SynthSample& s, Rng& rng);

// Train/val/test splits from disjoint per-split, per-index RNG streams. When
// cfg.augment is set, a cfg.augment_fraction share of the training split is
// augmented here, at generation time, so training iterates a fixed set.
Dataset generate_dataset(const DatasetConfig& cfg);

// PGM pairs (img_####.pgm, lbl_####.pgm) per split plus manifest.txt listing
// index, split, paths, stream seed and geometry.
void write_dataset(const std::string& dir, const Dataset& ds);
Dataset load_dataset(const std::string& dir);

}  // namespace synthdata
}  // namespace topowarp
