#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "topowarp/tensor.hpp"

namespace topowarp {

// Binary image: v[r*w + c] nonzero means foreground.
struct BinaryMask {
    std::size_t h = 0, w = 0;
    std::vector<std::uint8_t> v;

    BinaryMask() = default;
    BinaryMask(std::size_t h_, std::size_t w_) : h(h_), w(w_), v(h_ * w_, 0) {}

    std::uint8_t& at(std::size_t r, std::size_t c) { return v[r * w + c]; }
    std::uint8_t at(std::size_t r, std::size_t c) const { return v[r * w + c]; }
    std::size_t count() const;
    bool empty_mask() const { return count() == 0; }
};

struct TopologyReport {
    int b0 = 0;           // foreground connected components (4-connectivity)
    int b1 = 0;           // holes: bounded background components (8-connectivity)
    bool correct = false;  // b0/b1 match the expected pair
};

namespace topology {

// Labels connected foreground components under the given connectivity (4 or
// 8). Returns the component count; `labels`, when non-null, receives one
// label per pixel (-1 background, components numbered from 0).
int connected_components(const BinaryMask& mask, int connectivity,
                         std::vector<int>* labels = nullptr);

// (b0, b1) with dual connectivity: foreground components at 4-connectivity,
// holes as 8-connected background components after conceptually padding the
// image with a one-pixel background ring (so all border-reachable background
// belongs to the single exterior component, which is not a hole).
std::pair<int, int> betti_numbers(const BinaryMask& mask);

TopologyReport topology_correct(const BinaryMask& mask, std::pair<int, int> expected = {1, 1});

// mask = (y_soft >= t); accepts rank-2 [H,W] or rank-3 [1,H,W] tensors.
BinaryMask threshold(const Tensor& y_soft, double t = 0.5);

}  // namespace topology
}  // namespace topowarp
