#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "mgve/ops.hpp"
#include "mgve/tensor.hpp"

namespace mgve {

// Target resolution for one frame/sub-image: aspect-preserving rescale to
// roughly r_v^2 pixels, rounded to whole patches.
struct ResizePlan {
    std::size_t target_w = 0;
    std::size_t target_h = 0;
    double ideal_w = 0.0;  // r_v * sqrt(W/H) before rounding
    double ideal_h = 0.0;
};

// Columns x rows of the sub-image partition.
struct GridConfig {
    std::size_t cols = 1;  // m
    std::size_t rows = 1;  // n
};

namespace detail {
inline std::size_t round_to_multiple(double ideal, std::size_t unit) {
    const double rounded = std::round(ideal / static_cast<double>(unit));
    const double clamped = std::max(1.0, rounded);
    return static_cast<std::size_t>(clamped) * unit;
}
}  // namespace detail

// Ideal targets are r_v*sqrt(W/H) by r_v*sqrt(H/W): same pixel count as the
// pretraining square, original aspect ratio. Rounding unit is the patch
// size so the ViT sees whole patches.
inline ResizePlan dynamic_resize(std::size_t w, std::size_t h, std::size_t r_v, std::size_t p) {
    if (w == 0 || h == 0) throw ShapeError("dynamic_resize: zero input extent");
    if (p == 0 || r_v % p != 0) {
        throw ConfigError("dynamic_resize: r_v=" + std::to_string(r_v) +
                          " must be a positive multiple of p=" + std::to_string(p));
    }
    ResizePlan plan;
    const double ratio = std::sqrt(static_cast<double>(w) / static_cast<double>(h));
    plan.ideal_w = static_cast<double>(r_v) * ratio;
    plan.ideal_h = static_cast<double>(r_v) / ratio;
    plan.target_w = detail::round_to_multiple(plan.ideal_w, p);
    plan.target_h = detail::round_to_multiple(plan.ideal_h, p);
    return plan;
}

// Same rescale rule rounded to 2P so the pooled patch grid stays whole;
// this is the plan the encoder path actually uses.
inline ResizePlan encoder_resize_plan(std::size_t w, std::size_t h, std::size_t r_v,
                                      std::size_t p) {
    ResizePlan plan = dynamic_resize(w, h, r_v, p);
    plan.target_w = detail::round_to_multiple(plan.ideal_w, 2 * p);
    plan.target_h = detail::round_to_multiple(plan.ideal_h, 2 * p);
    return plan;
}

// Candidate grids for n tiles: all (m, n/m) factor pairs. C_0 is empty.
inline std::vector<GridConfig> grid_candidates(std::size_t tiles) {
    std::vector<GridConfig> out;
    for (std::size_t m = 1; m <= tiles; ++m) {
        if (tiles % m == 0) out.push_back(GridConfig{m, tiles / m});
    }
    return out;
}

// Picks (m, n) over the candidate sets for N_s-1, N_s, N_s+1 tiles that
// minimizes the log aspect-ratio distortion. Ties break toward fewer
// tiles, then toward the squarer grid.
inline GridConfig subimage_grid(std::size_t w_i, std::size_t h_i, std::size_t r_v) {
    if (w_i == 0 || h_i == 0) throw ShapeError("subimage_grid: zero input extent");
    if (r_v == 0) throw ConfigError("subimage_grid: r_v must be positive");
    const double area_ratio = static_cast<double>(w_i) * static_cast<double>(h_i) /
                              (static_cast<double>(r_v) * static_cast<double>(r_v));
    const std::size_t n_s = std::max<std::size_t>(1, static_cast<std::size_t>(area_ratio));
    const double target = std::log(static_cast<double>(w_i) / static_cast<double>(h_i));

    GridConfig best{1, 1};
    double best_score = std::numeric_limits<double>::infinity();
    bool have = false;
    for (std::size_t tiles = (n_s > 1 ? n_s - 1 : 1); tiles <= n_s + 1; ++tiles) {
        for (const GridConfig& g : grid_candidates(tiles)) {
            const double score =
                std::abs(target - std::log(static_cast<double>(g.cols) /
                                           static_cast<double>(g.rows)));
            const std::size_t count = g.cols * g.rows;
            const std::size_t skew =
                g.cols > g.rows ? g.cols - g.rows : g.rows - g.cols;
            const std::size_t best_count = best.cols * best.rows;
            const std::size_t best_skew =
                best.cols > best.rows ? best.cols - best.rows : best.rows - best.cols;
            if (!have || score < best_score ||
                (score == best_score &&
                 (count < best_count || (count == best_count && skew < best_skew)))) {
                best = g;
                best_score = score;
                have = true;
            }
        }
    }
    return best;
}

// Eq-style positional-embedding resize: out(x, y) = table sampled at the
// fractional index (x*P_v/P_W, y*P_v/P_H), bilinear with edge clamping.
// Bit-identical copy when the sizes already match.
inline Tensor resize_pos_embed(const Tensor& e_v, std::size_t p_w, std::size_t p_h) {
    return ops::bilinear_resize_grid(e_v, p_w, p_h);
}

}  // namespace mgve
