#pragma once

// Procedural tubule scenes: annular epithelium (outer disc minus lumen) on
// stained-tissue-like backgrounds, with optional touching pairs whose
// epithelium merges — the fixture the watershed splitting is tested on.

#include <cstdint>
#include <string>

#include "tubeseg/image.hpp"

namespace tubeseg {

struct Palette {
    // Mean RGB plus a per-tubule jitter amplitude.
    std::uint8_t background[3];
    std::uint8_t epithelium[3];
    std::uint8_t lumen[3];
    double jitter = 6.0;
};

// Two synthetic stain looks used for the cross-staining generalization
// benchmark: train on one, evaluate on the other.
Palette pas_like_palette();
Palette he_like_palette();

struct SceneSpec {
    int width = 128;
    int height = 128;  // both must be divisible by 32
    int count_min = 2;
    int count_max = 5;
    double radius_min = 14.0;
    double radius_max = 24.0;
    double lumen_ratio_min = 0.35;
    double lumen_ratio_max = 0.6;
    double touching_prob = 0.3;
    Palette palette = pas_like_palette();
    double texture_noise = 4.0;         // per-pixel gaussian amplitude
    double illumination_gradient = 0.05;  // max relative ramp across the image
    int border_px = 2;                  // class-2 ring thickness (3-class masks)

    void validate() const;
};

struct SceneData {
    ImageU8 image;
    LabelMask mask2;        // 0 background, 1 epithelium
    LabelMask mask3;        // 0 background, 1 epithelium interior, 2 border ring
    InstanceMap instances;  // per-tubule ids; touching pairs keep distinct ids
};

// Deterministic per (spec, seed). Throws after bounded placement retries,
// naming the violated constraint.
SceneData generate_scene(const SceneSpec& spec, std::uint64_t seed);

struct FoldSplit {
    int k = 0;
    std::vector<int> fold_of;  // record index -> fold id [0, k)

    std::vector<std::size_t> fold_indices(int fold) const;
    std::vector<std::size_t> complement_indices(int fold) const;
};

// Seeded permutation, round-robin assignment; fold sizes differ by <= 1.
FoldSplit kfold_split(std::size_t n_records, int k, std::uint64_t seed);

}  // namespace tubeseg
