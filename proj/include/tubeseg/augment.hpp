#pragma once

// Data augmentation: flips, Gaussian noise, brightness/contrast, RGB shift,
// HSV shift, with each transform gated at probability 0.5 from a seeded
// stream; plus input normalization and flip-based test-time augmentation.
//
// Unit conventions: noise variance and RGB/saturation/value shifts are in
// 8-bit intensity units, hue shifts in degrees.

#include <array>
#include <cstdint>
#include <string>

#include "tubeseg/image.hpp"
#include "tubeseg/rng.hpp"
#include "tubeseg/tensor.hpp"

namespace tubeseg {

struct AugmentationConfig {
    enum class Preset { none, low, high };

    double apply_probability = 0.5;
    double noise_mean = 0.0;
    double noise_var_min = 0.0, noise_var_max = 0.0;
    double rgb_shift_limit = 0.0;        // per-channel shift in [-limit, limit]
    double hue_shift_limit = 0.0;        // degrees
    double hue_scale = 1.0;              // unit interpretation factor for hue presets
    double sat_shift_limit = 0.0;
    double val_shift_limit = 0.0;
    double brightness_limit = 20.0;      // 8-bit offset range
    double contrast_min = 0.8, contrast_max = 1.2;
    Preset preset = Preset::none;

    static AugmentationConfig from_preset(Preset p);
};

struct NormalizationStats {
    std::array<double, 3> mean{};  // in [0,1] units
    std::array<double, 3> stddev{};
    std::string source;  // "dataset" or "canonical"
};

// The well-known large-scale pretraining statistics.
NormalizationStats canonical_pretraining_stats();

// Streaming per-channel mean/stddev over a dataset of images.
class StatsAccumulator {
public:
    void add(const ImageU8& image);
    // Throws if no pixels were seen or any channel is constant.
    NormalizationStats finalize() const;

private:
    std::array<double, 3> sum_{};
    std::array<double, 3> sumsq_{};
    std::int64_t count_ = 0;
};

// ---- individual transforms ----

ImageU8 hflip(const ImageU8& image);
ImageU8 vflip(const ImageU8& image);
LabelMask hflip(const LabelMask& mask);
LabelMask vflip(const LabelMask& mask);
InstanceMap hflip(const InstanceMap& map);
InstanceMap vflip(const InstanceMap& map);
ProbMap hflip(const ProbMap& probs);
ProbMap vflip(const ProbMap& probs);

ImageU8 gauss_noise(const ImageU8& image, double mean, double variance, Rng& rng);
ImageU8 rgb_shift(const ImageU8& image, double max_shift, Rng& rng);
ImageU8 brightness_contrast(const ImageU8& image, double brightness_limit, double contrast_min,
                            double contrast_max, Rng& rng);
ImageU8 hsv_shift(const ImageU8& image, double hue_limit, double sat_limit, double val_limit,
                  Rng& rng);

// Deterministic cores the sampled transforms are built on.
ImageU8 rgb_shift_by(const ImageU8& image, const double shift[3]);
ImageU8 brightness_contrast_by(const ImageU8& image, double brightness, double contrast);
ImageU8 hsv_shift_by(const ImageU8& image, double dh, double ds, double dv);

// RGB <-> HSV with hue in degrees [0,360) and S, V in 8-bit units.
std::array<double, 3> rgb_to_hsv(std::uint8_t r, std::uint8_t g, std::uint8_t b);
std::array<std::uint8_t, 3> hsv_to_rgb(double h, double s, double v);

struct AppliedTransforms {
    bool hflip = false, vflip = false, noise = false;
    bool brightness_contrast = false, rgb = false, hsv = false;
};

// Fixed transform order: hflip, vflip, noise, brightness/contrast, RGB
// shift, HSV shift. Geometric transforms apply to the mask, photometric
// ones do not.
AppliedTransforms apply_pipeline(ImageU8& image, LabelMask& mask, const AugmentationConfig& config,
                                 std::uint64_t seed);

// Per-channel (x/255 - mean)/stddev as a [1,3,H,W] network input.
template <typename T>
Tensor<T> normalize(const ImageU8& image, const NormalizationStats& stats);

// Writes one image into row n of an already allocated [N,3,H,W] batch.
template <typename T>
void normalize_into(const ImageU8& image, const NormalizationStats& stats, Tensor<T>& batch,
                    std::int64_t n);

// Averages predictions over {identity, hflip, vflip}, un-flipping each
// before the average. `predict` maps an image to a ProbMap.
template <typename PredictFn>
ProbMap tta_predict(const ImageU8& image, PredictFn&& predict) {
    ProbMap p0 = predict(image);
    ProbMap ph = hflip(predict(hflip(image)));
    ProbMap pv = vflip(predict(vflip(image)));
    ProbMap out(p0.num_classes, p0.height, p0.width);
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = (p0.data[i] + ph.data[i] + pv.data[i]) / 3.0f;
    return out;
}

}  // namespace tubeseg
