#pragma once

// Independent brute-force oracles the implementation is checked against.
// These deliberately use the most direct formulation available (nested
// loops, Dijkstra-style frontier scans, exhaustive matching) and share no
// code with the implementation paths they verify.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

#include "tubeseg/image.hpp"
#include "tubeseg/postprocess.hpp"
#include "tubeseg/tensor.hpp"

namespace tubeseg::testsupport {

// Direct 6-nested-loop cross-correlation.
inline Tensor<double> naive_conv2d(const Tensor<double>& input, const Tensor<double>& weight,
                                   const Tensor<double>* bias, int stride, int padding) {
    const Shape& is = input.shape();
    const Shape& ws = weight.shape();
    const std::int64_t N = is[0], Cin = is[1], H = is[2], W = is[3];
    const std::int64_t Cout = ws[0], kh = ws[2], kw = ws[3];
    const std::int64_t Ho = (H + 2 * padding - kh) / stride + 1;
    const std::int64_t Wo = (W + 2 * padding - kw) / stride + 1;
    Tensor<double> out(Shape{N, Cout, Ho, Wo});
    auto ov = out.values_mut();
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t co = 0; co < Cout; ++co)
            for (std::int64_t oy = 0; oy < Ho; ++oy)
                for (std::int64_t ox = 0; ox < Wo; ++ox) {
                    double acc = bias ? bias->values()[co] : 0.0;
                    for (std::int64_t ci = 0; ci < Cin; ++ci)
                        for (std::int64_t ky = 0; ky < kh; ++ky)
                            for (std::int64_t kx = 0; kx < kw; ++kx) {
                                const std::int64_t iy = oy * stride + ky - padding;
                                const std::int64_t ix = ox * stride + kx - padding;
                                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                                acc += input.at(n, ci, iy, ix) *
                                       weight.at(co, ci, ky, kx);
                            }
                    ov[((n * Cout + co) * Ho + oy) * Wo + ox] = acc;
                }
    return out;
}

// Window-scan max pooling.
inline Tensor<double> naive_maxpool2d(const Tensor<double>& input, int kernel, int stride,
                                      int padding) {
    const Shape& is = input.shape();
    const std::int64_t N = is[0], C = is[1], H = is[2], W = is[3];
    const std::int64_t Ho = (H + 2 * padding - kernel) / stride + 1;
    const std::int64_t Wo = (W + 2 * padding - kernel) / stride + 1;
    Tensor<double> out(Shape{N, C, Ho, Wo});
    auto ov = out.values_mut();
    std::size_t idx = 0;
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t oy = 0; oy < Ho; ++oy)
                for (std::int64_t ox = 0; ox < Wo; ++ox) {
                    double best = -std::numeric_limits<double>::infinity();
                    for (int ky = 0; ky < kernel; ++ky)
                        for (int kx = 0; kx < kernel; ++kx) {
                            const std::int64_t iy = oy * stride + ky - padding;
                            const std::int64_t ix = ox * stride + kx - padding;
                            if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                            best = std::max(best, input.at(n, c, iy, ix));
                        }
                    ov[idx++] = best;
                }
    return out;
}

// Distance to the nearest background pixel by scanning every background
// pixel plus the virtual ring outside the image.
inline double brute_force_distance(const LabelMask& mask, int fg, int px, int py) {
    if (mask.at(px, py) != fg) return 0.0;
    double best_sq = std::numeric_limits<double>::infinity();
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x) {
            if (mask.at(x, y) == fg) continue;
            const double dx = x - px, dy = y - py;
            best_sq = std::min(best_sq, dx * dx + dy * dy);
        }
    const double to_edge = std::min(std::min(px + 1, mask.width - px),
                                    std::min(py + 1, mask.height - py));
    best_sq = std::min(best_sq, to_edge * to_edge);
    return std::sqrt(best_sq);
}

// Dijkstra-style flood: repeatedly finalize the frontier pixel with the
// highest surface value (ties by the order pixels entered the frontier),
// then admit its unlabeled foreground neighbors. Mirrors the watershed
// contract with linear scans instead of a heap. Unreached components get
// fresh ids in scan order, as in the implementation.
inline InstanceMap dijkstra_flood_oracle(const TopographicSurface& surface,
                                         const std::vector<Seed>& seeds, const LabelMask& mask,
                                         int fg = 1) {
    const int w = mask.width, h = mask.height;
    InstanceMap out(w, h);
    struct Frontier {
        int x, y;
        std::uint64_t seq;
        bool alive;
    };
    std::vector<Frontier> frontier;
    std::uint64_t seq = 0;
    static constexpr int dx[8] = {-1, 0, 1, -1, 1, -1, 0, 1};
    static constexpr int dy[8] = {-1, -1, -1, 0, 0, 1, 1, 1};

    for (std::size_t i = 0; i < seeds.size(); ++i) {
        out.at(seeds[i].x, seeds[i].y) = static_cast<std::int32_t>(i) + 1;
        frontier.push_back({seeds[i].x, seeds[i].y, seq++, true});
    }
    while (true) {
        int best = -1;
        for (std::size_t i = 0; i < frontier.size(); ++i) {
            if (!frontier[i].alive) continue;
            if (best < 0) {
                best = static_cast<int>(i);
                continue;
            }
            const double va = surface.at(frontier[i].x, frontier[i].y);
            const double vb = surface.at(frontier[best].x, frontier[best].y);
            if (va > vb || (va == vb && frontier[i].seq < frontier[best].seq))
                best = static_cast<int>(i);
        }
        if (best < 0) break;
        frontier[best].alive = false;
        const int cx = frontier[best].x, cy = frontier[best].y;
        const std::int32_t label = out.at(cx, cy);
        for (int k = 0; k < 8; ++k) {
            const int nx = cx + dx[k], ny = cy + dy[k];
            if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
            if (mask.at(nx, ny) != fg || out.at(nx, ny) != 0) continue;
            out.at(nx, ny) = label;
            frontier.push_back({nx, ny, seq++, true});
        }
    }
    out.count = static_cast<int>(seeds.size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (mask.at(x, y) != fg || out.at(x, y) != 0) continue;
            ++out.count;
            const std::int32_t id = out.count;
            std::vector<std::pair<int, int>> stack{{x, y}};
            out.at(x, y) = id;
            while (!stack.empty()) {
                const auto [px, py] = stack.back();
                stack.pop_back();
                for (int k = 0; k < 8; ++k) {
                    const int nx = px + dx[k], ny = py + dy[k];
                    if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                    if (mask.at(nx, ny) != fg || out.at(nx, ny) != 0) continue;
                    out.at(nx, ny) = id;
                    stack.emplace_back(nx, ny);
                }
            }
        }
    return out;
}

// Exhaustive AJI: maximize the AJI value over every injective partial
// assignment of ground-truth instances to predictions.
inline double exhaustive_aji(const InstanceMap& gt, const InstanceMap& pred) {
    const int ng = gt.count, np = pred.count;
    if (ng == 0 && np == 0) return 1.0;
    std::vector<std::int64_t> ga(ng + 1, 0), pa(np + 1, 0);
    std::vector<std::vector<std::int64_t>> inter(ng + 1, std::vector<std::int64_t>(np + 1, 0));
    for (std::size_t i = 0; i < gt.ids.size(); ++i) {
        const auto g = gt.ids[i], p = pred.ids[i];
        if (g > 0) ++ga[g];
        if (p > 0) ++pa[p];
        if (g > 0 && p > 0) ++inter[g][p];
    }
    double best = 0.0;
    std::vector<int> assign(ng + 1, 0);  // 0 = unmatched
    std::vector<bool> used(np + 1, false);
    bool any = false;

    std::function<void(int)> recurse = [&](int g) {
        if (g > ng) {
            std::int64_t isum = 0, usum = 0;
            for (int gi = 1; gi <= ng; ++gi) {
                if (assign[gi] == 0) {
                    usum += ga[gi];
                } else {
                    isum += inter[gi][assign[gi]];
                    usum += ga[gi] + pa[assign[gi]] - inter[gi][assign[gi]];
                }
            }
            for (int p = 1; p <= np; ++p)
                if (!used[p]) usum += pa[p];
            const double v = usum == 0 ? 1.0 : double(isum) / double(usum);
            if (!any || v > best) best = v;
            any = true;
            return;
        }
        assign[g] = 0;
        recurse(g + 1);
        for (int p = 1; p <= np; ++p) {
            if (used[p] || inter[g][p] == 0) continue;
            used[p] = true;
            assign[g] = p;
            recurse(g + 1);
            used[p] = false;
            assign[g] = 0;
        }
    };
    recurse(1);
    return best;
}

}  // namespace tubeseg::testsupport
