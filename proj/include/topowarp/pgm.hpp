#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "topowarp/tensor.hpp"
#include "topowarp/topology.hpp"

namespace topowarp {

// Binary (P5) 8-bit PGM images — the only raster format this project reads
// or writes.
struct PgmImage {
    std::size_t h = 0, w = 0;
    std::vector<std::uint8_t> pix;
};

void write_pgm(const std::string& path, const PgmImage& img);
PgmImage read_pgm(const std::string& path);

// Mask as 0/255 pixels.
void write_mask_pgm(const std::string& path, const BinaryMask& mask);
BinaryMask read_mask_pgm(const std::string& path);  // >= 128 is foreground

// Intensity image with values in [0,1], scaled to 0..255. Accepts [H,W] or
// [1,H,W] tensors.
void write_image_pgm(const std::string& path, const Tensor& img);
Tensor read_image_pgm(const std::string& path);  // returns [1,H,W] in [0,1]

// Linear min-max normalization of an arbitrary [H,W] tensor to 0..255; a
// constant tensor renders mid-gray.
void write_heatmap_pgm(const std::string& path, const Tensor& values);

}  // namespace topowarp
