#pragma once

// Probability maps to label masks, touching-instance splitting via seeded
// watershed on the distance transform, and instance map extraction.
//
// Conventions: foreground is 8-connected, background 4-connected. The
// distance transform measures Euclidean distance to the nearest background
// pixel, with everything outside the image treated as background.

#include <optional>
#include <vector>

#include "tubeseg/image.hpp"

namespace tubeseg {

// Per-pixel elevation used as the watershed flooding surface.
struct TopographicSurface {
    int width = 0;
    int height = 0;
    std::vector<double> values;

    TopographicSurface() = default;
    TopographicSurface(int w, int h)
        : width(w), height(h), values(static_cast<std::size_t>(w) * h, 0.0) {}

    double& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
    double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

struct Seed {
    int x = 0;
    int y = 0;
    int label = 0;
};

// Per-pixel argmax; ties go to the lower class index.
LabelMask argmax_mask(const ProbMap& probs);

// 8-connected labeling of mask pixels equal to foreground_class, ids in
// first-scan (row-major) order.
InstanceMap connected_components(const LabelMask& mask, int foreground_class = 1);

// Exact Euclidean distance to the nearest background pixel (in-image or the
// virtual background ring outside the image); 0 on background.
TopographicSurface distance_transform(const LabelMask& mask, int foreground_class = 1);

// Priority flood ascending on -surface: floods spread from the seeds, always
// expanding the frontier pixel with the highest surface value next; equal
// priorities resolve in queue insertion order. Foreground components that no
// flood reaches (no seed inside) keep their own fresh ids. Output ids are
// renumbered 1..K in seed order.
InstanceMap seeded_watershed(const TopographicSurface& surface, const std::vector<Seed>& seeds,
                             const LabelMask& mask, int foreground_class = 1);

// Local maxima of the surface (plateaus collapse to one candidate each) with
// non-maximum suppression at radius min_distance, ordered by decreasing
// elevation; labels 1..K in that order.
std::vector<Seed> auto_seeds(const TopographicSurface& surface, double min_distance);

// Enclosed background holes (4-connected components not touching the image
// border) become foreground.
LabelMask fill_holes(const LabelMask& mask, int foreground_class = 1);

struct SplitOptions {
    double min_distance = 8.0;  // auto-seed suppression radius
    int num_classes = 2;
};

// Touching-instance splitting. For 2-class masks: enclosed lumens are filled
// so that tubule-center seeds lie on the flooding domain, the watershed runs
// on the distance transform of the filled mask, and labels are restricted
// back to the epithelium pixels. For 3-class masks the border class already
// separates instances: components of class 1 are labeled and each border
// pixel joins its nearest instance.
InstanceMap split_touching(const LabelMask& mask, const std::vector<Seed>* seeds = nullptr,
                           const SplitOptions& options = {});

// Reads "x y" pairs (one per line, origin top-left); labels assigned 1..K in
// file order.
std::vector<Seed> read_seeds_file(const std::string& path);

// Pixels lying on an instance edge (4-neighbor with a different id or the
// image border); used for overlays.
LabelMask instance_boundaries(const InstanceMap& instances);

}  // namespace tubeseg
