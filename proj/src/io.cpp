#include "tubeseg/io.hpp"

#include <png.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace tubeseg {

namespace {

struct PngReader {
    png_structp png = nullptr;
    png_infop info = nullptr;
    FILE* file = nullptr;

    explicit PngReader(const std::string& path) {
        file = std::fopen(path.c_str(), "rb");
        if (!file) throw std::runtime_error("cannot open for reading: " + path);
        png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
        info = png ? png_create_info_struct(png) : nullptr;
        if (!png || !info) {
            cleanup();
            throw std::runtime_error("libpng initialization failed for " + path);
        }
    }
    ~PngReader() { cleanup(); }
    void cleanup() {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        if (file) std::fclose(file);
        png = nullptr;
        info = nullptr;
        file = nullptr;
    }
};

struct PngWriter {
    png_structp png = nullptr;
    png_infop info = nullptr;
    FILE* file = nullptr;
    std::string tmp_path, final_path;

    explicit PngWriter(const std::string& path) : final_path(path) {
        tmp_path = path + ".tmp";
        file = std::fopen(tmp_path.c_str(), "wb");
        if (!file) throw std::runtime_error("cannot open for writing: " + tmp_path);
        png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
        info = png ? png_create_info_struct(png) : nullptr;
        if (!png || !info) {
            cleanup();
            throw std::runtime_error("libpng initialization failed for " + path);
        }
    }
    ~PngWriter() { cleanup(); }
    void commit() {
        if (file) {
            std::fclose(file);
            file = nullptr;
        }
        std::filesystem::rename(tmp_path, final_path);
        tmp_path.clear();
    }
    void cleanup() {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        if (file) std::fclose(file);
        if (!tmp_path.empty()) std::filesystem::remove(tmp_path);
        png = nullptr;
        info = nullptr;
        file = nullptr;
    }
};

struct PngData {
    int width = 0, height = 0;
    int channels = 0, bit_depth = 0;
    std::vector<std::uint8_t> rows;  // packed, big-endian for 16-bit
};

PngData read_png(const std::string& path) {
    PngReader r(path);
    if (setjmp(png_jmpbuf(r.png))) throw std::runtime_error("invalid or corrupt PNG: " + path);
    png_init_io(r.png, r.file);
    png_read_info(r.png, r.info);

    png_uint_32 w, h;
    int bit_depth, color_type;
    png_get_IHDR(r.png, r.info, &w, &h, &bit_depth, &color_type, nullptr, nullptr, nullptr);

    // Normalize to 8-bit RGB or 8/16-bit gray.
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(r.png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(r.png);
    if (png_get_valid(r.png, r.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(r.png);
    png_set_strip_alpha(r.png);
    png_read_update_info(r.png, r.info);
    png_get_IHDR(r.png, r.info, &w, &h, &bit_depth, &color_type, nullptr, nullptr, nullptr);

    PngData data;
    data.width = static_cast<int>(w);
    data.height = static_cast<int>(h);
    data.bit_depth = bit_depth;
    data.channels = png_get_channels(r.png, r.info);
    const std::size_t rowbytes = png_get_rowbytes(r.png, r.info);
    data.rows.resize(rowbytes * h);
    std::vector<png_bytep> row_ptrs(h);
    for (png_uint_32 y = 0; y < h; ++y) row_ptrs[y] = data.rows.data() + y * rowbytes;
    png_read_image(r.png, row_ptrs.data());
    png_read_end(r.png, nullptr);
    return data;
}

void write_png(const std::string& path, int width, int height, int color_type, int bit_depth,
               const std::uint8_t* rows, std::size_t rowbytes) {
    PngWriter wtr(path);
    if (setjmp(png_jmpbuf(wtr.png))) throw std::runtime_error("PNG write failed: " + path);
    png_init_io(wtr.png, wtr.file);
    png_set_IHDR(wtr.png, wtr.info, width, height, bit_depth, color_type, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(wtr.png, wtr.info);
    std::vector<png_bytep> row_ptrs(height);
    for (int y = 0; y < height; ++y)
        row_ptrs[y] = const_cast<png_bytep>(rows + static_cast<std::size_t>(y) * rowbytes);
    png_write_image(wtr.png, row_ptrs.data());
    png_write_end(wtr.png, nullptr);
    wtr.commit();
}

}  // namespace

void write_image(const std::string& path, const ImageU8& image) {
    write_png(path, image.width, image.height, PNG_COLOR_TYPE_RGB, 8, image.pixels.data(),
              static_cast<std::size_t>(image.width) * 3);
}

ImageU8 read_image(const std::string& path) {
    PngData data = read_png(path);
    if (data.channels != 3 || data.bit_depth != 8)
        throw std::runtime_error("expected an 8-bit RGB image: " + path);
    ImageU8 image(data.width, data.height);
    image.pixels = std::move(data.rows);
    return image;
}

void write_mask(const std::string& path, const LabelMask& mask) {
    write_png(path, mask.width, mask.height, PNG_COLOR_TYPE_GRAY, 8, mask.ids.data(),
              static_cast<std::size_t>(mask.width));
}

LabelMask read_mask(const std::string& path) {
    PngData data = read_png(path);
    if (data.channels != 1 || data.bit_depth != 8)
        throw std::runtime_error("expected an 8-bit single-channel class mask: " + path);
    LabelMask mask(data.width, data.height);
    mask.ids = std::move(data.rows);
    return mask;
}

void write_instance_map(const std::string& path, const InstanceMap& map) {
    std::vector<std::uint8_t> rows(static_cast<std::size_t>(map.width) * map.height * 2);
    for (std::size_t i = 0; i < map.ids.size(); ++i) {
        const std::int32_t id = map.ids[i];
        if (id < 0 || id > 65535)
            throw std::runtime_error("instance id " + std::to_string(id) +
                                     " does not fit 16-bit storage: " + path);
        rows[i * 2] = static_cast<std::uint8_t>(id >> 8);  // PNG is big-endian
        rows[i * 2 + 1] = static_cast<std::uint8_t>(id & 0xff);
    }
    write_png(path, map.width, map.height, PNG_COLOR_TYPE_GRAY, 16, rows.data(),
              static_cast<std::size_t>(map.width) * 2);
}

InstanceMap read_instance_map(const std::string& path) {
    PngData data = read_png(path);
    if (data.channels != 1 || data.bit_depth != 16)
        throw std::runtime_error("expected a 16-bit single-channel instance map: " + path);
    InstanceMap map(data.width, data.height);
    int max_id = 0;
    for (std::size_t i = 0; i < map.ids.size(); ++i) {
        map.ids[i] = (static_cast<std::int32_t>(data.rows[i * 2]) << 8) | data.rows[i * 2 + 1];
        max_id = std::max(max_id, static_cast<int>(map.ids[i]));
    }
    map.count = max_id;
    return map;
}

void atomic_write_text(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("cannot open for writing: " + tmp);
        out << content;
        if (!out) throw std::runtime_error("write failed: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

void write_manifest(const std::string& path, const DatasetManifest& manifest) {
    std::ostringstream os;
    for (const auto& r : manifest)
        os << r.image << '\t' << r.mask2 << '\t' << r.mask3 << '\t' << r.instances << '\t'
           << r.split << '\n';
    atomic_write_text(path, os.str());
}

DatasetManifest read_manifest(const std::string& path, bool check_files) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest: " + path);
    DatasetManifest manifest;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        ManifestRecord r;
        if (!std::getline(ls, r.image, '\t') || !std::getline(ls, r.mask2, '\t') ||
            !std::getline(ls, r.mask3, '\t') || !std::getline(ls, r.instances, '\t'))
            throw std::runtime_error("manifest " + path + " line " + std::to_string(lineno) +
                                     ": expected 5 tab-separated fields");
        std::getline(ls, r.split, '\t');
        if (check_files)
            for (const std::string* p : {&r.image, &r.mask2, &r.mask3, &r.instances})
                if (!p->empty() && !std::filesystem::exists(*p))
                    throw std::runtime_error("manifest " + path + " line " +
                                             std::to_string(lineno) + ": missing file " + *p);
        manifest.push_back(std::move(r));
    }
    return manifest;
}

void write_stats_file(const std::string& path, const NormalizationStats& stats) {
    nlohmann::json j;
    j["mean"] = stats.mean;
    j["std"] = stats.stddev;
    j["source"] = stats.source;
    atomic_write_text(path, j.dump(2) + "\n");
}

NormalizationStats read_stats_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open stats file: " + path);
    nlohmann::json j;
    in >> j;
    NormalizationStats s;
    for (int c = 0; c < 3; ++c) {
        s.mean[c] = j.at("mean").at(c).get<double>();
        s.stddev[c] = j.at("std").at(c).get<double>();
        if (s.stddev[c] <= 0.0) throw std::runtime_error("stats file has non-positive std");
    }
    s.source = j.value("source", "dataset");
    return s;
}

}  // namespace tubeseg
