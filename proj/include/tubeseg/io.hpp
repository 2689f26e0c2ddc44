#pragma once

// File formats: PNG images (8-bit RGB), class masks (8-bit gray PNG),
// instance maps (16-bit gray PNG), tab-separated dataset manifests, and the
// JSON normalization-stats file. All writes go through a temp file + rename.

#include <string>
#include <vector>

#include "tubeseg/augment.hpp"
#include "tubeseg/image.hpp"

namespace tubeseg {

void write_image(const std::string& path, const ImageU8& image);
ImageU8 read_image(const std::string& path);

void write_mask(const std::string& path, const LabelMask& mask);
LabelMask read_mask(const std::string& path);

void write_instance_map(const std::string& path, const InstanceMap& map);
InstanceMap read_instance_map(const std::string& path);

struct ManifestRecord {
    std::string image;
    std::string mask2;
    std::string mask3;
    std::string instances;
    std::string split;
};

using DatasetManifest = std::vector<ManifestRecord>;

void write_manifest(const std::string& path, const DatasetManifest& manifest);
// check_files: verify every referenced file exists.
DatasetManifest read_manifest(const std::string& path, bool check_files = true);

void write_stats_file(const std::string& path, const NormalizationStats& stats);
NormalizationStats read_stats_file(const std::string& path);

// Write-temp-then-rename text file helper.
void atomic_write_text(const std::string& path, const std::string& content);

}  // namespace tubeseg
