#include "tubeseg/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <fstream>
#include <limits>
#include <queue>
#include <stdexcept>

namespace tubeseg {

namespace {

constexpr int kDx8[8] = {-1, 0, 1, -1, 1, -1, 0, 1};
constexpr int kDy8[8] = {-1, -1, -1, 0, 0, 1, 1, 1};
constexpr int kDx4[4] = {0, -1, 1, 0};
constexpr int kDy4[4] = {-1, 0, 0, 1};

}  // namespace

LabelMask argmax_mask(const ProbMap& probs) {
    LabelMask mask(probs.width, probs.height);
    for (int y = 0; y < probs.height; ++y)
        for (int x = 0; x < probs.width; ++x) {
            int best = 0;
            float best_p = probs.at(0, y, x);
            for (int c = 1; c < probs.num_classes; ++c) {
                const float p = probs.at(c, y, x);
                if (p > best_p) {  // strict: ties keep the lower class
                    best_p = p;
                    best = c;
                }
            }
            mask.at(x, y) = static_cast<std::uint8_t>(best);
        }
    return mask;
}

InstanceMap connected_components(const LabelMask& mask, int foreground_class) {
    InstanceMap out(mask.width, mask.height);
    std::deque<std::pair<int, int>> queue;
    int next_id = 0;
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x) {
            if (mask.at(x, y) != foreground_class || out.at(x, y) != 0) continue;
            ++next_id;
            out.at(x, y) = next_id;
            queue.emplace_back(x, y);
            while (!queue.empty()) {
                const auto [cx, cy] = queue.front();
                queue.pop_front();
                for (int k = 0; k < 8; ++k) {
                    const int nx = cx + kDx8[k], ny = cy + kDy8[k];
                    if (nx < 0 || ny < 0 || nx >= mask.width || ny >= mask.height) continue;
                    if (mask.at(nx, ny) != foreground_class || out.at(nx, ny) != 0) continue;
                    out.at(nx, ny) = next_id;
                    queue.emplace_back(nx, ny);
                }
            }
        }
    out.count = next_id;
    return out;
}

namespace {

// 1-d squared-distance lower envelope (Felzenszwalb-Huttenlocher). All f
// values must be finite; d receives min_p (q - p)^2 + f(p).
void edt_lower_envelope(const std::vector<double>& f, std::vector<double>& d, int n) {
    std::vector<int> v(n);
    std::vector<double> z(n + 1);
    int k = 0;
    v[0] = 0;
    z[0] = -std::numeric_limits<double>::infinity();
    z[1] = std::numeric_limits<double>::infinity();
    for (int q = 1; q < n; ++q) {
        double s = ((f[q] + double(q) * q) - (f[v[k]] + double(v[k]) * v[k])) /
                   (2.0 * q - 2.0 * v[k]);
        while (s <= z[k]) {
            --k;
            s = ((f[q] + double(q) * q) - (f[v[k]] + double(v[k]) * v[k])) /
                (2.0 * q - 2.0 * v[k]);
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = std::numeric_limits<double>::infinity();
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        const double dq = q - v[k];
        d[q] = dq * dq + f[v[k]];
    }
}

}  // namespace

TopographicSurface distance_transform(const LabelMask& mask, int foreground_class) {
    const int w = mask.width, h = mask.height;
    TopographicSurface out(w, h);

    // Column pass: vertical distance to the nearest background pixel, with
    // virtual background just above and below the image. Two linear scans
    // keep all values finite for the row pass.
    std::vector<double> colsq(static_cast<std::size_t>(w) * h);
    for (int x = 0; x < w; ++x) {
        int dist = 0;  // start at the virtual background row y = -1
        for (int y = 0; y < h; ++y) {
            dist = mask.at(x, y) == foreground_class ? dist + 1 : 0;
            colsq[static_cast<std::size_t>(y) * w + x] = dist;
        }
        dist = 0;
        for (int y = h - 1; y >= 0; --y) {
            dist = mask.at(x, y) == foreground_class ? dist + 1 : 0;
            auto& cell = colsq[static_cast<std::size_t>(y) * w + x];
            cell = std::min(cell, double(dist));
            cell *= cell;
        }
    }

    // Row pass over squared column distances, with virtual background at the
    // left and right image edges (positions -1 and w).
    std::vector<double> f(w + 2), d(w + 2);
    for (int y = 0; y < h; ++y) {
        f[0] = 0.0;
        f[w + 1] = 0.0;
        for (int x = 0; x < w; ++x) f[x + 1] = colsq[static_cast<std::size_t>(y) * w + x];
        edt_lower_envelope(f, d, w + 2);
        for (int x = 0; x < w; ++x)
            out.at(x, y) = mask.at(x, y) == foreground_class ? std::sqrt(d[x + 1]) : 0.0;
    }
    return out;
}

InstanceMap seeded_watershed(const TopographicSurface& surface, const std::vector<Seed>& seeds,
                             const LabelMask& mask, int foreground_class) {
    require_same_extent(surface.width, surface.height, mask.width, mask.height, "seeded_watershed");
    const int w = mask.width, h = mask.height;
    InstanceMap out(w, h);

    if (!seeds.empty()) {
        std::vector<int> labels_seen;
        for (const Seed& s : seeds) {
            if (s.x < 0 || s.y < 0 || s.x >= w || s.y >= h)
                throw std::invalid_argument("seed (" + std::to_string(s.x) + "," +
                                            std::to_string(s.y) + ") outside the image");
            if (mask.at(s.x, s.y) != foreground_class)
                throw std::invalid_argument("seed (" + std::to_string(s.x) + "," +
                                            std::to_string(s.y) + ") lies on background");
            if (std::find(labels_seen.begin(), labels_seen.end(), s.label) != labels_seen.end())
                throw std::invalid_argument("duplicate seed label " + std::to_string(s.label));
            labels_seen.push_back(s.label);
        }

        struct QueueEntry {
            double elevation;   // surface value; higher floods first
            std::uint64_t seq;  // FIFO tie-break
            int x, y;
        };
        struct Lower {
            bool operator()(const QueueEntry& a, const QueueEntry& b) const {
                if (a.elevation != b.elevation) return a.elevation < b.elevation;
                return a.seq > b.seq;
            }
        };
        std::priority_queue<QueueEntry, std::vector<QueueEntry>, Lower> open;
        std::uint64_t seq = 0;

        // Internally label with 1..K in seed order; pixels are labeled when
        // first touched by a flood, so the earliest-arriving flood wins.
        for (std::size_t i = 0; i < seeds.size(); ++i) {
            const Seed& s = seeds[i];
            out.at(s.x, s.y) = static_cast<std::int32_t>(i) + 1;
            open.push({surface.at(s.x, s.y), seq++, s.x, s.y});
        }
        while (!open.empty()) {
            const QueueEntry e = open.top();
            open.pop();
            const std::int32_t label = out.at(e.x, e.y);
            for (int k = 0; k < 8; ++k) {
                const int nx = e.x + kDx8[k], ny = e.y + kDy8[k];
                if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                if (mask.at(nx, ny) != foreground_class || out.at(nx, ny) != 0) continue;
                out.at(nx, ny) = label;
                open.push({surface.at(nx, ny), seq++, nx, ny});
            }
        }
        out.count = static_cast<int>(seeds.size());
    }

    // Foreground components no flood reached (or the zero-seed case) keep
    // their own ids, appended after the seeded ones.
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (mask.at(x, y) != foreground_class || out.at(x, y) != 0) continue;
            ++out.count;
            const std::int32_t id = out.count;
            std::deque<std::pair<int, int>> queue;
            out.at(x, y) = id;
            queue.emplace_back(x, y);
            while (!queue.empty()) {
                const auto [cx, cy] = queue.front();
                queue.pop_front();
                for (int k = 0; k < 8; ++k) {
                    const int nx = cx + kDx8[k], ny = cy + kDy8[k];
                    if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                    if (mask.at(nx, ny) != foreground_class || out.at(nx, ny) != 0) continue;
                    out.at(nx, ny) = id;
                    queue.emplace_back(nx, ny);
                }
            }
        }
    return out;
}

std::vector<Seed> auto_seeds(const TopographicSurface& surface, double min_distance) {
    if (min_distance <= 0.0) throw std::invalid_argument("auto_seeds: min_distance must be > 0");
    const int w = surface.width, h = surface.height;

    // Regional maxima: flood each equal-value plateau and accept it only if
    // no pixel of the plateau touches strictly higher ground. A flat saddle
    // has higher neighbors at its ends, so it never produces a seed.
    struct Candidate {
        double elevation;
        int x, y;
    };
    std::vector<Candidate> candidates;
    std::vector<std::uint8_t> visited(static_cast<std::size_t>(w) * h, 0);
    std::deque<std::pair<int, int>> queue;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const std::size_t idx = static_cast<std::size_t>(y) * w + x;
            if (visited[idx]) continue;
            const double v = surface.at(x, y);
            if (v <= 0.0) continue;
            std::vector<std::pair<int, int>> plateau;
            bool is_regional_max = true;
            visited[idx] = 1;
            queue.emplace_back(x, y);
            while (!queue.empty()) {
                const auto [cx, cy] = queue.front();
                queue.pop_front();
                plateau.emplace_back(cx, cy);
                for (int k = 0; k < 8; ++k) {
                    const int nx = cx + kDx8[k], ny = cy + kDy8[k];
                    if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                    const double nv = surface.at(nx, ny);
                    if (nv > v) is_regional_max = false;
                    const std::size_t nidx = static_cast<std::size_t>(ny) * w + nx;
                    if (nv != v || visited[nidx]) continue;
                    visited[nidx] = 1;
                    queue.emplace_back(nx, ny);
                }
            }
            if (!is_regional_max) continue;
            // Plateau representative: the pixel closest to the centroid.
            double sx = 0, sy = 0;
            for (const auto& [px, py] : plateau) {
                sx += px;
                sy += py;
            }
            sx /= double(plateau.size());
            sy /= double(plateau.size());
            std::pair<int, int> best = plateau[0];
            double best_d = std::numeric_limits<double>::infinity();
            for (const auto& [px, py] : plateau) {
                const double d = (px - sx) * (px - sx) + (py - sy) * (py - sy);
                if (d < best_d || (d == best_d && std::make_pair(py, px) <
                                                      std::make_pair(best.second, best.first))) {
                    best_d = d;
                    best = {px, py};
                }
            }
            candidates.push_back({v, best.first, best.second});
        }

    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
        if (a.elevation != b.elevation) return a.elevation > b.elevation;
        if (a.y != b.y) return a.y < b.y;
        return a.x < b.x;
    });

    std::vector<Seed> seeds;
    const double min_sq = min_distance * min_distance;
    for (const Candidate& c : candidates) {
        bool suppressed = false;
        for (const Seed& s : seeds) {
            const double dx = c.x - s.x, dy = c.y - s.y;
            if (dx * dx + dy * dy < min_sq) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed)
            seeds.push_back({c.x, c.y, static_cast<int>(seeds.size()) + 1});
    }
    return seeds;
}

LabelMask fill_holes(const LabelMask& mask, int foreground_class) {
    const int w = mask.width, h = mask.height;
    // Flood 4-connected background from the border; anything not reached is
    // an enclosed hole.
    std::vector<std::uint8_t> outside(static_cast<std::size_t>(w) * h, 0);
    std::deque<std::pair<int, int>> queue;
    auto push_if_bg = [&](int x, int y) {
        const std::size_t idx = static_cast<std::size_t>(y) * w + x;
        if (mask.at(x, y) != foreground_class && !outside[idx]) {
            outside[idx] = 1;
            queue.emplace_back(x, y);
        }
    };
    for (int x = 0; x < w; ++x) {
        push_if_bg(x, 0);
        push_if_bg(x, h - 1);
    }
    for (int y = 0; y < h; ++y) {
        push_if_bg(0, y);
        push_if_bg(w - 1, y);
    }
    while (!queue.empty()) {
        const auto [cx, cy] = queue.front();
        queue.pop_front();
        for (int k = 0; k < 4; ++k) {
            const int nx = cx + kDx4[k], ny = cy + kDy4[k];
            if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
            push_if_bg(nx, ny);
        }
    }
    LabelMask out(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const bool fg = mask.at(x, y) == foreground_class ||
                            !outside[static_cast<std::size_t>(y) * w + x];
            out.at(x, y) = fg ? static_cast<std::uint8_t>(foreground_class) : 0;
        }
    return out;
}

namespace {

// Assign labeled-region ids to the remaining pixels of `domain` by
// multi-source 8-connected BFS (nearest instance in flood order).
void assign_nearest(InstanceMap& inst, const std::vector<std::uint8_t>& domain) {
    const int w = inst.width, h = inst.height;
    std::deque<std::pair<int, int>> queue;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (inst.at(x, y) != 0) queue.emplace_back(x, y);
    while (!queue.empty()) {
        const auto [cx, cy] = queue.front();
        queue.pop_front();
        const std::int32_t id = inst.at(cx, cy);
        for (int k = 0; k < 8; ++k) {
            const int nx = cx + kDx8[k], ny = cy + kDy8[k];
            if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
            const std::size_t idx = static_cast<std::size_t>(ny) * w + nx;
            if (!domain[idx] || inst.at(nx, ny) != 0) continue;
            inst.at(nx, ny) = id;
            queue.emplace_back(nx, ny);
        }
    }
}

InstanceMap relabel_contiguous(const InstanceMap& inst) {
    InstanceMap out(inst.width, inst.height);
    std::vector<std::int32_t> remap;
    std::vector<std::int32_t> ids_seen;
    for (std::size_t i = 0; i < inst.ids.size(); ++i) {
        const std::int32_t id = inst.ids[i];
        if (id == 0) continue;
        if (static_cast<std::size_t>(id) >= remap.size()) remap.resize(id + 1, 0);
        if (remap[id] == 0) {
            ids_seen.push_back(id);
            remap[id] = static_cast<std::int32_t>(ids_seen.size());
        }
        out.ids[i] = remap[id];
    }
    out.count = static_cast<int>(ids_seen.size());
    return out;
}

}  // namespace

InstanceMap split_touching(const LabelMask& mask, const std::vector<Seed>* seeds,
                           const SplitOptions& options) {
    if (options.num_classes == 3) {
        // Borders (class 2) separate touching instances by construction:
        // label class-1 components, then attach each border pixel to its
        // nearest instance.
        InstanceMap inst = connected_components(mask, 1);
        std::vector<std::uint8_t> domain(mask.ids.size(), 0);
        for (std::size_t i = 0; i < mask.ids.size(); ++i)
            domain[i] = mask.ids[i] == 1 || mask.ids[i] == 2;
        assign_nearest(inst, domain);
        return relabel_contiguous(inst);
    }

    const LabelMask filled = fill_holes(mask, 1);
    const TopographicSurface surface = distance_transform(filled, 1);
    std::vector<Seed> auto_list;
    const std::vector<Seed>* use = seeds;
    if (!use) {
        auto_list = auto_seeds(surface, options.min_distance);
        use = &auto_list;
    }
    InstanceMap flooded = seeded_watershed(surface, *use, filled, 1);
    // Restrict labels to the original epithelium pixels.
    InstanceMap restricted(mask.width, mask.height);
    for (std::size_t i = 0; i < mask.ids.size(); ++i)
        restricted.ids[i] = mask.ids[i] == 1 ? flooded.ids[i] : 0;
    restricted.count = flooded.count;
    return relabel_contiguous(restricted);
}

std::vector<Seed> read_seeds_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open seeds file: " + path);
    std::vector<Seed> seeds;
    int x, y;
    while (in >> x >> y) seeds.push_back({x, y, static_cast<int>(seeds.size()) + 1});
    if (!in.eof())
        throw std::runtime_error("seeds file " + path + ": expected 'x y' pairs, one per line");
    return seeds;
}

LabelMask instance_boundaries(const InstanceMap& instances) {
    LabelMask out(instances.width, instances.height);
    for (int y = 0; y < instances.height; ++y)
        for (int x = 0; x < instances.width; ++x) {
            const std::int32_t id = instances.at(x, y);
            if (id == 0) continue;
            for (int k = 0; k < 4; ++k) {
                const int nx = x + kDx4[k], ny = y + kDy4[k];
                const std::int32_t other =
                    (nx < 0 || ny < 0 || nx >= instances.width || ny >= instances.height)
                        ? 0
                        : instances.at(nx, ny);
                if (other != id) {
                    out.at(x, y) = 1;
                    break;
                }
            }
        }
    return out;
}

}  // namespace tubeseg
