#include "tubeseg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "tubeseg/rng.hpp"

namespace tubeseg {

Palette pas_like_palette() {
    // Magenta epithelium on pale pink interstitium.
    return {{238, 216, 228}, {168, 92, 146}, {246, 240, 244}, 6.0};
}

Palette he_like_palette() {
    // Purple epithelium on pink interstitium.
    return {{230, 204, 218}, {134, 108, 176}, {244, 238, 242}, 6.0};
}

void SceneSpec::validate() const {
    if (width % 32 != 0 || height % 32 != 0)
        throw std::invalid_argument("scene extents must be divisible by 32");
    if (count_min < 1 || count_max < count_min)
        throw std::invalid_argument("tubule count range invalid");
    if (radius_min <= 2.0 || radius_max < radius_min)
        throw std::invalid_argument("radius range invalid");
    if (2.0 * radius_max + 4.0 > std::min(width, height))
        throw std::invalid_argument("radius range does not fit the image extents");
    if (lumen_ratio_min <= 0.0 || lumen_ratio_max >= 1.0 || lumen_ratio_max < lumen_ratio_min)
        throw std::invalid_argument("lumen ratio range must lie inside (0,1)");
    if (touching_prob < 0.0 || touching_prob > 1.0)
        throw std::invalid_argument("touching probability must lie in [0,1]");
    if (border_px < 1) throw std::invalid_argument("border thickness must be >= 1");
}

namespace {

struct Tubule {
    double cx, cy, r_out, r_lum;
    double color_jitter[3];
};

bool overlaps_any(const std::vector<Tubule>& placed, double cx, double cy, double r,
                  std::size_t skip_from) {
    for (std::size_t i = 0; i < placed.size() && i < skip_from; ++i) {
        const double dx = cx - placed[i].cx, dy = cy - placed[i].cy;
        const double min_d = r + placed[i].r_out + 3.0;
        if (dx * dx + dy * dy < min_d * min_d) return true;
    }
    return false;
}

bool inside_image(const SceneSpec& spec, double cx, double cy, double r) {
    return cx - r >= 2.0 && cy - r >= 2.0 && cx + r <= spec.width - 2.0 &&
           cy + r <= spec.height - 2.0;
}

}  // namespace

SceneData generate_scene(const SceneSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(mix_seed(seed, 0x5EEDu));

    const int count = static_cast<int>(rng.uniform_int(spec.count_min, spec.count_max));
    std::vector<Tubule> tubules;
    constexpr int kMaxRetries = 400;

    auto sample_tubule = [&](double& r_out, double& r_lum, double jitter[3]) {
        r_out = rng.uniform(spec.radius_min, spec.radius_max);
        r_lum = r_out * rng.uniform(spec.lumen_ratio_min, spec.lumen_ratio_max);
        for (int c = 0; c < 3; ++c) jitter[c] = rng.uniform(-spec.palette.jitter, spec.palette.jitter);
    };

    const int placed_target = count;
    auto place_anchor = [&](Tubule& a) -> bool {
        for (int attempt = 0; attempt < kMaxRetries; ++attempt) {
            a.cx = rng.uniform(a.r_out + 2.0, spec.width - a.r_out - 2.0);
            a.cy = rng.uniform(a.r_out + 2.0, spec.height - a.r_out - 2.0);
            if (!overlaps_any(tubules, a.cx, a.cy, a.r_out, tubules.size())) return true;
        }
        return false;
    };
    while (static_cast<int>(tubules.size()) < placed_target) {
        const bool pair = (placed_target - static_cast<int>(tubules.size())) >= 2 &&
                          rng.bernoulli(spec.touching_prob);
        if (!pair) {
            Tubule a{};
            sample_tubule(a.r_out, a.r_lum, a.color_jitter);
            if (!place_anchor(a))
                throw std::runtime_error(
                    "generate_scene: could not place tubule " +
                    std::to_string(tubules.size() + 1) +
                    " after bounded retries (radius range vs image extents / non-overlap constraint)");
            tubules.push_back(a);
            continue;
        }
        // Touching pair: anchor and partner placed together; an anchor whose
        // neighborhood cannot host the partner is dropped and resampled.
        bool pair_done = false;
        for (int anchor_attempt = 0; anchor_attempt < 40 && !pair_done; ++anchor_attempt) {
            Tubule a{};
            sample_tubule(a.r_out, a.r_lum, a.color_jitter);
            if (!place_anchor(a))
                throw std::runtime_error(
                    "generate_scene: could not place tubule " +
                    std::to_string(tubules.size() + 1) +
                    " after bounded retries (radius range vs image extents / non-overlap constraint)");
            Tubule b{};
            sample_tubule(b.r_out, b.r_lum, b.color_jitter);
            for (int attempt = 0; attempt < kMaxRetries && !pair_done; ++attempt) {
                // Center distance below r1 + r2 merges the epithelium rings.
                const double d = rng.uniform(0.82, 0.95) * (a.r_out + b.r_out);
                const double angle = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
                b.cx = a.cx + d * std::cos(angle);
                b.cy = a.cy + d * std::sin(angle);
                if (inside_image(spec, b.cx, b.cy, b.r_out) &&
                    !overlaps_any(tubules, b.cx, b.cy, b.r_out, tubules.size())) {
                    tubules.push_back(a);
                    tubules.push_back(b);
                    pair_done = true;
                }
            }
        }
        if (!pair_done)
            throw std::runtime_error(
                "generate_scene: could not place a touching pair at position " +
                std::to_string(tubules.size() + 1) +
                " after bounded retries (touching-pair placement constraint)");
    }

    SceneData scene;
    scene.image = ImageU8(spec.width, spec.height);
    scene.mask2 = LabelMask(spec.width, spec.height);
    scene.mask3 = LabelMask(spec.width, spec.height);
    scene.instances = InstanceMap(spec.width, spec.height);
    scene.instances.count = static_cast<int>(tubules.size());

    const double gx = rng.uniform(-spec.illumination_gradient, spec.illumination_gradient);
    const double gy = rng.uniform(-spec.illumination_gradient, spec.illumination_gradient);

    for (int y = 0; y < spec.height; ++y)
        for (int x = 0; x < spec.width; ++x) {
            // Classify the pixel against every tubule; the instance id goes
            // to the tubule with the smallest normalized center distance.
            int owner = 0;          // 1-based tubule id owning the pixel (annulus member)
            double owner_nd = 2.0;  // normalized distance of the owner
            bool border = false, interior = false, lumen = false;
            int lumen_owner = 0;
            for (std::size_t t = 0; t < tubules.size(); ++t) {
                const Tubule& tb = tubules[t];
                const double dx = x + 0.5 - tb.cx, dy = y + 0.5 - tb.cy;
                const double dist = std::sqrt(dx * dx + dy * dy);
                if (dist > tb.r_out) continue;
                if (dist < tb.r_lum) {
                    lumen = true;
                    if (lumen_owner == 0) lumen_owner = static_cast<int>(t) + 1;
                    continue;
                }
                // Annulus pixel of tubule t.
                if (dist > tb.r_out - spec.border_px)
                    border = true;
                else
                    interior = true;
                const double nd = dist / tb.r_out;
                if (nd < owner_nd) {
                    owner_nd = nd;
                    owner = static_cast<int>(t) + 1;
                }
            }

            std::uint8_t cls3 = 0;
            if (border) cls3 = 2;
            if (interior && !border) cls3 = 1;
            // A border band of one tubule crossing the interior of another
            // stays class 2 so the 3-class scheme separates the pair.
            scene.mask3.at(x, y) = cls3;
            scene.mask2.at(x, y) = cls3 != 0 ? 1 : 0;
            scene.instances.at(x, y) = cls3 != 0 ? owner : 0;

            const Tubule* color_src = owner != 0 ? &tubules[owner - 1]
                                     : lumen      ? &tubules[lumen_owner - 1]
                                                  : nullptr;
            const std::uint8_t* base = cls3 != 0       ? spec.palette.epithelium
                                       : lumen         ? spec.palette.lumen
                                                       : spec.palette.background;
            const double ramp = 1.0 + gx * (double(x) / spec.width - 0.5) +
                                gy * (double(y) / spec.height - 0.5);
            for (int c = 0; c < 3; ++c) {
                double v = base[c] * ramp;
                if (color_src) v += color_src->color_jitter[c];
                v += rng.normal(0.0, spec.texture_noise);
                scene.image.at(x, y, c) =
                    static_cast<std::uint8_t>(std::min(255.0, std::max(0.0, std::round(v))));
            }
        }
    return scene;
}

std::vector<std::size_t> FoldSplit::fold_indices(int fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < fold_of.size(); ++i)
        if (fold_of[i] == fold) out.push_back(i);
    return out;
}

std::vector<std::size_t> FoldSplit::complement_indices(int fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < fold_of.size(); ++i)
        if (fold_of[i] != fold) out.push_back(i);
    return out;
}

FoldSplit kfold_split(std::size_t n_records, int k, std::uint64_t seed) {
    if (k < 2) throw std::invalid_argument("kfold_split requires k >= 2");
    if (n_records < static_cast<std::size_t>(k))
        throw std::invalid_argument("kfold_split requires at least k records, got " +
                                    std::to_string(n_records));
    std::vector<std::size_t> perm(n_records);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(mix_seed(seed, 0xF01Du));
    for (std::size_t i = n_records - 1; i > 0; --i) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i)));
        std::swap(perm[i], perm[j]);
    }
    FoldSplit split;
    split.k = k;
    split.fold_of.assign(n_records, 0);
    for (std::size_t i = 0; i < n_records; ++i)
        split.fold_of[perm[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
    return split;
}

}  // namespace tubeseg
