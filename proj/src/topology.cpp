#include "topowarp/topology.hpp"

#include <numeric>

namespace topowarp {

std::size_t BinaryMask::count() const {
    std::size_t n = 0;
    for (std::uint8_t p : v) n += p ? 1 : 0;
    return n;
}

namespace topology {

namespace {

// Union-find over pixel indices; chosen deliberately so the test oracle
// (recursive flood fill) exercises a genuinely different algorithm.
class DisjointSets {
public:
    explicit DisjointSets(std::size_t n) : parent_(n) {
        std::iota(parent_.begin(), parent_.end(), 0);
    }
    std::size_t find(std::size_t a) {
        while (parent_[a] != a) {
            parent_[a] = parent_[parent_[a]];
            a = parent_[a];
        }
        return a;
    }
    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a != b) parent_[b] = a;
    }

private:
    std::vector<std::size_t> parent_;
};

// Counts components of the predicate-selected pixels over an (h, w) grid.
template <typename Pred>
int count_components(std::size_t h, std::size_t w, int connectivity, Pred in_set,
                     std::vector<int>* labels) {
    DisjointSets ds(h * w);
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            if (!in_set(r, c)) continue;
            const std::size_t p = r * w + c;
            // union with already-visited neighbours (up, left; plus the two
            // upper diagonals at 8-connectivity)
            if (r > 0 && in_set(r - 1, c)) ds.unite(p, p - w);
            if (c > 0 && in_set(r, c - 1)) ds.unite(p, p - 1);
            if (connectivity == 8) {
                if (r > 0 && c > 0 && in_set(r - 1, c - 1)) ds.unite(p, p - w - 1);
                if (r > 0 && c + 1 < w && in_set(r - 1, c + 1)) ds.unite(p, p - w + 1);
            }
        }
    }
    if (labels) labels->assign(h * w, -1);
    std::vector<int> root_label(h * w, -1);
    int n = 0;
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            if (!in_set(r, c)) continue;
            const std::size_t root = ds.find(r * w + c);
            if (root_label[root] < 0) root_label[root] = n++;
            if (labels) (*labels)[r * w + c] = root_label[root];
        }
    }
    return n;
}

}  // namespace

int connected_components(const BinaryMask& mask, int connectivity, std::vector<int>* labels) {
    if (connectivity != 4 && connectivity != 8)
        throw ValueError("connected_components: connectivity must be 4 or 8");
    return count_components(
        mask.h, mask.w, connectivity,
        [&mask](std::size_t r, std::size_t c) { return mask.at(r, c) != 0; }, labels);
}

std::pair<int, int> betti_numbers(const BinaryMask& mask) {
    const int b0 = connected_components(mask, 4);
    // background components on the grid padded by one background ring: pixel
    // (r,c) of the padded (h+2, w+2) grid maps to (r-1, c-1) of the mask
    const std::size_t hp = mask.h + 2, wp = mask.w + 2;
    const int bg = count_components(hp, wp, 8, [&mask](std::size_t r, std::size_t c) {
        if (r == 0 || c == 0 || r == mask.h + 1 || c == mask.w + 1) return true;  // ring
        return mask.at(r - 1, c - 1) == 0;
    }, nullptr);
    // the exterior (ring-connected) component is not a hole
    return {b0, bg - 1};
}

TopologyReport topology_correct(const BinaryMask& mask, std::pair<int, int> expected) {
    TopologyReport rep;
    const auto [b0, b1] = betti_numbers(mask);
    rep.b0 = b0;
    rep.b1 = b1;
    rep.correct = (b0 == expected.first && b1 == expected.second);
    return rep;
}

BinaryMask threshold(const Tensor& y_soft, double t) {
    std::size_t h = 0, w = 0;
    if (y_soft.rank() == 2) {
        h = y_soft.extent(0);
        w = y_soft.extent(1);
    } else if (y_soft.rank() == 3 && y_soft.extent(0) == 1) {
        h = y_soft.extent(1);
        w = y_soft.extent(2);
    } else {
        throw ShapeError("threshold: expected [H,W] or [1,H,W], got " +
                         shape_str(y_soft.shape()));
    }
    BinaryMask mask(h, w);
    for (std::size_t i = 0; i < h * w; ++i) mask.v[i] = y_soft[i] >= t ? 1 : 0;
    return mask;
}

}  // namespace topology
}  // namespace topowarp
