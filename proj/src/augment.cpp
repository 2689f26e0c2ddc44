#include "tubeseg/augment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tubeseg {

AugmentationConfig AugmentationConfig::from_preset(Preset p) {
    AugmentationConfig c;
    c.preset = p;
    switch (p) {
        case Preset::none:
            break;
        case Preset::low:
            c.noise_var_min = 0.4;
            c.noise_var_max = 0.6;
            c.rgb_shift_limit = 5;
            c.hue_shift_limit = 2;
            c.sat_shift_limit = 3;
            c.val_shift_limit = 2;
            break;
        case Preset::high:
            c.noise_var_min = 1.0;
            c.noise_var_max = 1.0;
            c.rgb_shift_limit = 15;
            c.hue_shift_limit = 20;
            c.sat_shift_limit = 30;
            c.val_shift_limit = 20;
            break;
    }
    return c;
}

NormalizationStats canonical_pretraining_stats() {
    return {{0.485, 0.456, 0.406}, {0.229, 0.224, 0.225}, "canonical"};
}

void StatsAccumulator::add(const ImageU8& image) {
    const std::size_t n = image.pixel_count();
    for (std::size_t i = 0; i < n; ++i)
        for (int c = 0; c < 3; ++c) {
            const double v = image.pixels[i * 3 + c] / 255.0;
            sum_[c] += v;
            sumsq_[c] += v * v;
        }
    count_ += static_cast<std::int64_t>(n);
}

NormalizationStats StatsAccumulator::finalize() const {
    if (count_ == 0) throw std::runtime_error("dataset statistics: no pixels accumulated");
    NormalizationStats s;
    s.source = "dataset";
    for (int c = 0; c < 3; ++c) {
        s.mean[c] = sum_[c] / double(count_);
        const double var = sumsq_[c] / double(count_) - s.mean[c] * s.mean[c];
        if (var <= 1e-12)
            throw std::runtime_error("dataset statistics: channel " + std::to_string(c) +
                                     " is constant, stddev would be zero");
        s.stddev[c] = std::sqrt(var);
    }
    return s;
}

// ---- flips ----

namespace {

template <typename Pix, int Ch>
std::vector<Pix> flip_buffer(const std::vector<Pix>& src, int w, int h, bool horizontal) {
    std::vector<Pix> dst(src.size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int sx = horizontal ? w - 1 - x : x;
            const int sy = horizontal ? y : h - 1 - y;
            for (int c = 0; c < Ch; ++c)
                dst[(static_cast<std::size_t>(y) * w + x) * Ch + c] =
                    src[(static_cast<std::size_t>(sy) * w + sx) * Ch + c];
        }
    return dst;
}

}  // namespace

ImageU8 hflip(const ImageU8& image) {
    ImageU8 out(image.width, image.height);
    out.pixels = flip_buffer<std::uint8_t, 3>(image.pixels, image.width, image.height, true);
    return out;
}

ImageU8 vflip(const ImageU8& image) {
    ImageU8 out(image.width, image.height);
    out.pixels = flip_buffer<std::uint8_t, 3>(image.pixels, image.width, image.height, false);
    return out;
}

LabelMask hflip(const LabelMask& mask) {
    LabelMask out(mask.width, mask.height);
    out.ids = flip_buffer<std::uint8_t, 1>(mask.ids, mask.width, mask.height, true);
    return out;
}

LabelMask vflip(const LabelMask& mask) {
    LabelMask out(mask.width, mask.height);
    out.ids = flip_buffer<std::uint8_t, 1>(mask.ids, mask.width, mask.height, false);
    return out;
}

InstanceMap hflip(const InstanceMap& map) {
    InstanceMap out(map.width, map.height);
    out.count = map.count;
    out.ids = flip_buffer<std::int32_t, 1>(map.ids, map.width, map.height, true);
    return out;
}

InstanceMap vflip(const InstanceMap& map) {
    InstanceMap out(map.width, map.height);
    out.count = map.count;
    out.ids = flip_buffer<std::int32_t, 1>(map.ids, map.width, map.height, false);
    return out;
}

ProbMap hflip(const ProbMap& probs) {
    ProbMap out(probs.num_classes, probs.height, probs.width);
    for (int c = 0; c < probs.num_classes; ++c)
        for (int y = 0; y < probs.height; ++y)
            for (int x = 0; x < probs.width; ++x)
                out.at(c, y, x) = probs.at(c, y, probs.width - 1 - x);
    return out;
}

ProbMap vflip(const ProbMap& probs) {
    ProbMap out(probs.num_classes, probs.height, probs.width);
    for (int c = 0; c < probs.num_classes; ++c)
        for (int y = 0; y < probs.height; ++y)
            for (int x = 0; x < probs.width; ++x)
                out.at(c, y, x) = probs.at(c, probs.height - 1 - y, x);
    return out;
}

// ---- photometric transforms ----

namespace {

std::uint8_t clamp_u8(double v) {
    return static_cast<std::uint8_t>(std::min(255.0, std::max(0.0, std::round(v))));
}

}  // namespace

ImageU8 gauss_noise(const ImageU8& image, double mean, double variance, Rng& rng) {
    ImageU8 out = image;
    if (variance <= 0.0 && mean == 0.0) return out;
    const double stddev = variance > 0.0 ? std::sqrt(variance) : 0.0;
    for (auto& p : out.pixels) p = clamp_u8(double(p) + rng.normal(mean, stddev));
    return out;
}

ImageU8 rgb_shift_by(const ImageU8& image, const double shift[3]) {
    ImageU8 out = image;
    const std::size_t n = out.pixel_count();
    for (std::size_t i = 0; i < n; ++i)
        for (int c = 0; c < 3; ++c)
            out.pixels[i * 3 + c] = clamp_u8(double(image.pixels[i * 3 + c]) + shift[c]);
    return out;
}

ImageU8 rgb_shift(const ImageU8& image, double max_shift, Rng& rng) {
    const double shift[3] = {rng.uniform(-max_shift, max_shift),
                             rng.uniform(-max_shift, max_shift),
                             rng.uniform(-max_shift, max_shift)};
    return rgb_shift_by(image, shift);
}

ImageU8 brightness_contrast_by(const ImageU8& image, double brightness, double contrast) {
    ImageU8 out = image;
    for (std::size_t i = 0; i < out.pixels.size(); ++i)
        out.pixels[i] = clamp_u8(contrast * (double(image.pixels[i]) - 128.0) + 128.0 + brightness);
    return out;
}

ImageU8 brightness_contrast(const ImageU8& image, double brightness_limit, double contrast_min,
                            double contrast_max, Rng& rng) {
    const double brightness = rng.uniform(-brightness_limit, brightness_limit);
    const double contrast = rng.uniform(contrast_min, contrast_max);
    return brightness_contrast_by(image, brightness, contrast);
}

std::array<double, 3> rgb_to_hsv(std::uint8_t r8, std::uint8_t g8, std::uint8_t b8) {
    const double r = r8, g = g8, b = b8;
    const double maxc = std::max({r, g, b});
    const double minc = std::min({r, g, b});
    const double delta = maxc - minc;
    double h = 0.0;
    if (delta > 0.0) {
        if (maxc == r)
            h = 60.0 * std::fmod((g - b) / delta, 6.0);
        else if (maxc == g)
            h = 60.0 * ((b - r) / delta + 2.0);
        else
            h = 60.0 * ((r - g) / delta + 4.0);
        if (h < 0.0) h += 360.0;
    }
    const double s = maxc <= 0.0 ? 0.0 : delta / maxc * 255.0;
    return {h, s, maxc};
}

std::array<std::uint8_t, 3> hsv_to_rgb(double h, double s, double v) {
    h = std::fmod(h, 360.0);
    if (h < 0.0) h += 360.0;
    const double sat = std::min(255.0, std::max(0.0, s)) / 255.0;
    const double val = std::min(255.0, std::max(0.0, v));
    const double c = val * sat;
    const double hp = h / 60.0;
    const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    if (hp < 1)      { r = c; g = x; }
    else if (hp < 2) { r = x; g = c; }
    else if (hp < 3) { g = c; b = x; }
    else if (hp < 4) { g = x; b = c; }
    else if (hp < 5) { r = x; b = c; }
    else             { r = c; b = x; }
    const double m = val - c;
    return {clamp_u8(r + m), clamp_u8(g + m), clamp_u8(b + m)};
}

ImageU8 hsv_shift_by(const ImageU8& image, double dh, double ds, double dv) {
    ImageU8 out = image;
    const std::size_t n = out.pixel_count();
    for (std::size_t i = 0; i < n; ++i) {
        const auto hsv = rgb_to_hsv(image.pixels[i * 3], image.pixels[i * 3 + 1],
                                    image.pixels[i * 3 + 2]);
        const auto rgb = hsv_to_rgb(hsv[0] + dh, hsv[1] + ds, hsv[2] + dv);
        out.pixels[i * 3] = rgb[0];
        out.pixels[i * 3 + 1] = rgb[1];
        out.pixels[i * 3 + 2] = rgb[2];
    }
    return out;
}

ImageU8 hsv_shift(const ImageU8& image, double hue_limit, double sat_limit, double val_limit,
                  Rng& rng) {
    const double dh = rng.uniform(-hue_limit, hue_limit);
    const double ds = rng.uniform(-sat_limit, sat_limit);
    const double dv = rng.uniform(-val_limit, val_limit);
    return hsv_shift_by(image, dh, ds, dv);
}

AppliedTransforms apply_pipeline(ImageU8& image, LabelMask& mask, const AugmentationConfig& config,
                                 std::uint64_t seed) {
    require_same_extent(image.width, image.height, mask.width, mask.height, "apply_pipeline");
    AppliedTransforms applied;
    if (config.preset == AugmentationConfig::Preset::none) return applied;
    Rng rng(seed);
    const double p = config.apply_probability;

    if (rng.bernoulli(p)) {
        applied.hflip = true;
        image = hflip(image);
        mask = hflip(mask);
    }
    if (rng.bernoulli(p)) {
        applied.vflip = true;
        image = vflip(image);
        mask = vflip(mask);
    }
    if (rng.bernoulli(p)) {
        applied.noise = true;
        const double var = rng.uniform(config.noise_var_min, config.noise_var_max);
        image = gauss_noise(image, config.noise_mean, var, rng);
    }
    if (rng.bernoulli(p)) {
        applied.brightness_contrast = true;
        image = brightness_contrast(image, config.brightness_limit, config.contrast_min,
                                    config.contrast_max, rng);
    }
    if (rng.bernoulli(p)) {
        applied.rgb = true;
        image = rgb_shift(image, config.rgb_shift_limit, rng);
    }
    if (rng.bernoulli(p)) {
        applied.hsv = true;
        image = hsv_shift(image, config.hue_shift_limit * config.hue_scale,
                          config.sat_shift_limit, config.val_shift_limit, rng);
    }
    return applied;
}

template <typename T>
void normalize_into(const ImageU8& image, const NormalizationStats& stats, Tensor<T>& batch,
                    std::int64_t n) {
    const Shape& s = batch.shape();
    if (s.size() != 4 || s[1] != 3 || s[2] != image.height || s[3] != image.width || n >= s[0])
        throw std::invalid_argument("normalize_into: batch shape " + shape_str(s) +
                                    " does not fit image " + std::to_string(image.width) + "x" +
                                    std::to_string(image.height));
    for (int c = 0; c < 3; ++c) {
        if (stats.stddev[c] <= 0.0)
            throw std::invalid_argument("normalize: stddev must be positive");
        const double inv = 1.0 / stats.stddev[c];
        T* dst = batch.values_mut().data() + ((n * 3 + c) * image.height) * image.width;
        for (std::size_t i = 0; i < image.pixel_count(); ++i)
            dst[i] = static_cast<T>((image.pixels[i * 3 + c] / 255.0 - stats.mean[c]) * inv);
    }
}

template <typename T>
Tensor<T> normalize(const ImageU8& image, const NormalizationStats& stats) {
    Tensor<T> t(Shape{1, 3, image.height, image.width});
    normalize_into(image, stats, t, 0);
    return t;
}

template Tensor<float> normalize(const ImageU8&, const NormalizationStats&);
template Tensor<double> normalize(const ImageU8&, const NormalizationStats&);
template void normalize_into(const ImageU8&, const NormalizationStats&, Tensor<float>&, std::int64_t);
template void normalize_into(const ImageU8&, const NormalizationStats&, Tensor<double>&, std::int64_t);

}  // namespace tubeseg
