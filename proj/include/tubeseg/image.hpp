#pragma once

// Plain raster containers shared by the data, augmentation, post-processing
// and metrics modules.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace tubeseg {

// 8-bit RGB, interleaved, row-major, origin top-left.
struct ImageU8 {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    ImageU8() = default;
    ImageU8(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, 0) {}

    std::uint8_t& at(int x, int y, int c) {
        return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
    std::uint8_t at(int x, int y, int c) const {
        return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
};

// Per-pixel class ids (0 background, 1 epithelium, 2 border in the 3-class
// scheme).
struct LabelMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> ids;

    LabelMask() = default;
    LabelMask(int w, int h) : width(w), height(h), ids(static_cast<std::size_t>(w) * h, 0) {}

    std::uint8_t& at(int x, int y) { return ids[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int x, int y) const { return ids[static_cast<std::size_t>(y) * width + x]; }
    std::size_t pixel_count() const { return ids.size(); }
};

// Per-pixel instance ids, 0 = background, 1..count instances.
struct InstanceMap {
    int width = 0;
    int height = 0;
    std::vector<std::int32_t> ids;
    int count = 0;

    InstanceMap() = default;
    InstanceMap(int w, int h) : width(w), height(h), ids(static_cast<std::size_t>(w) * h, 0) {}

    std::int32_t& at(int x, int y) { return ids[static_cast<std::size_t>(y) * width + x]; }
    std::int32_t at(int x, int y) const { return ids[static_cast<std::size_t>(y) * width + x]; }
};

// Per-pixel class probabilities, [C][H][W] planes.
struct ProbMap {
    int num_classes = 0;
    int height = 0;
    int width = 0;
    std::vector<float> data;

    ProbMap() = default;
    ProbMap(int classes, int h, int w)
        : num_classes(classes), height(h), width(w),
          data(static_cast<std::size_t>(classes) * h * w, 0.0f) {}

    float& at(int c, int y, int x) {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    float at(int c, int y, int x) const {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
};

inline void require_same_extent(int wa, int ha, int wb, int hb, const std::string& what) {
    if (wa != wb || ha != hb)
        throw std::invalid_argument(what + ": extents differ, " + std::to_string(wa) + "x" +
                                    std::to_string(ha) + " vs " + std::to_string(wb) + "x" +
                                    std::to_string(hb));
}

}  // namespace tubeseg
