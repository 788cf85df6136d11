#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mgve/resolution.hpp"

using namespace mgve;

namespace {

// Brute-force reference for the partition argmin, written independently
// from the library: enumerate every factor pair of N_s-1, N_s, N_s+1 and
// apply the tie rules (fewer tiles, then squarer) directly.
GridConfig grid_oracle(std::size_t w, std::size_t h, std::size_t r_v) {
    const std::size_t n_s =
        std::max<std::size_t>(1, (w * h) / (r_v * r_v));
    const double target = std::log(static_cast<double>(w) / static_cast<double>(h));
    bool have = false;
    GridConfig best{1, 1};
    double best_score = 0.0;
    for (std::size_t tiles : {n_s - 1, n_s, n_s + 1}) {
        if (tiles < 1 || tiles > n_s + 1) continue;  // n_s-1 underflows when n_s == 1
        for (std::size_t m = 1; m <= tiles; ++m) {
            if (tiles % m != 0) continue;
            const std::size_t n = tiles / m;
            const double score =
                std::abs(target - std::log(static_cast<double>(m) / static_cast<double>(n)));
            auto tuple_of = [](double s, const GridConfig& g) {
                return std::make_tuple(
                    s, g.cols * g.rows,
                    g.cols > g.rows ? g.cols - g.rows : g.rows - g.cols);
            };
            const GridConfig cand{m, n};
            if (!have || tuple_of(score, cand) < tuple_of(best_score, best)) {
                best = cand;
                best_score = score;
                have = true;
            }
        }
    }
    return best;
}

}  // namespace

TEST(DynamicResize, PinnedExamples) {
    ResizePlan p1 = dynamic_resize(1280, 720, 384, 16);
    EXPECT_EQ(p1.target_w, 512u);
    EXPECT_EQ(p1.target_h, 288u);
    ResizePlan p2 = dynamic_resize(500, 500, 384, 16);
    EXPECT_EQ(p2.target_w, 384u);
    EXPECT_EQ(p2.target_h, 384u);
    // frozen: 384*sqrt(10/7)=458.97 -> 464, 384*sqrt(7/10)=321.28 -> 320
    ResizePlan p3 = dynamic_resize(1000, 700, 384, 16);
    EXPECT_EQ(p3.target_w, 464u);
    EXPECT_EQ(p3.target_h, 320u);
}

TEST(DynamicResize, AreaStaysNearPretrainingBudget) {
    std::mt19937_64 rng(29);
    std::uniform_int_distribution<std::size_t> dist(64, 4096);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t w = dist(rng), h = dist(rng);
        ResizePlan p = dynamic_resize(w, h, 384, 16);
        const double area = static_cast<double>(p.target_w) * static_cast<double>(p.target_h);
        const double budget = 384.0 * 384.0;
        EXPECT_LE(std::abs(area - budget),
                  16.0 * static_cast<double>(p.target_w + p.target_h))
            << w << "x" << h;
        EXPECT_EQ(p.target_w % 16, 0u);
        EXPECT_EQ(p.target_h % 16, 0u);
    }
}

TEST(EncoderResizePlan, RoundsToWholePooledGrid) {
    ResizePlan p = encoder_resize_plan(1000, 700, 384, 16);
    EXPECT_EQ(p.target_w % 32, 0u);
    EXPECT_EQ(p.target_h % 32, 0u);
    EXPECT_EQ(p.target_w, 448u);
    EXPECT_EQ(p.target_h, 320u);
}

TEST(SubimageGrid, PinnedExamples) {
    GridConfig g1 = subimage_grid(384, 384, 384);
    EXPECT_EQ(g1.cols, 1u);
    EXPECT_EQ(g1.rows, 1u);
    GridConfig g2 = subimage_grid(768, 384, 384);
    EXPECT_EQ(g2.cols, 2u);
    EXPECT_EQ(g2.rows, 1u);
    GridConfig g3 = subimage_grid(1000, 700, 384);
    EXPECT_EQ(g3.cols, 2u);
    EXPECT_EQ(g3.rows, 2u);
}

TEST(SubimageGrid, MatchesBruteForceOracle) {
    std::mt19937_64 rng(31);
    std::uniform_int_distribution<std::size_t> dist(192, 4000);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t w = dist(rng), h = dist(rng);
        const GridConfig got = subimage_grid(w, h, 384);
        const GridConfig expect = grid_oracle(w, h, 384);
        EXPECT_EQ(got.cols, expect.cols) << w << "x" << h;
        EXPECT_EQ(got.rows, expect.rows) << w << "x" << h;
    }
}

TEST(SubimageGrid, CandidateSetAlwaysNonEmptyForTinyImages) {
    const GridConfig g = subimage_grid(16, 16, 384);
    EXPECT_GE(g.cols * g.rows, 1u);
    EXPECT_EQ(g.cols, 1u);
    EXPECT_EQ(g.rows, 1u);
}

TEST(ResizePosEmbed, IdentityIsBitExact) {
    std::mt19937_64 rng(37);
    Tensor e = random_normal({6, 6, 4}, rng);
    EXPECT_TRUE(bitwise_equal(resize_pos_embed(e, 6, 6), e));
}

TEST(ResizePosEmbed, ConstantFieldExactAtAnySize) {
    Tensor e = Tensor::full({4, 4, 3}, 1.375);
    for (std::size_t w : {1u, 3u, 7u, 9u}) {
        Tensor out = resize_pos_embed(e, w, w + 1);
        for (double v : out.data) EXPECT_DOUBLE_EQ(v, 1.375);
    }
}

TEST(ResizePosEmbed, ExactOnBilinearFields) {
    // bilinear interpolation reproduces a + b*x + c*y + d*x*y exactly
    // (each cell's interpolant through exact corner samples is the field)
    const std::size_t pv = 6;
    const double a = 0.3, b = -1.25, c = 2.5, d = 0.125;
    Tensor e({pv, pv, 1});
    for (std::size_t x = 0; x < pv; ++x) {
        for (std::size_t y = 0; y < pv; ++y) {
            const double fx = static_cast<double>(x), fy = static_cast<double>(y);
            e.data[x * pv + y] = a + b * fx + c * fy + d * fx * fy;
        }
    }
    for (auto [w, h] : {std::pair<std::size_t, std::size_t>{9, 7}, {4, 11}, {13, 5}}) {
        Tensor out = resize_pos_embed(e, w, h);
        for (std::size_t x = 0; x < w; ++x) {
            const double u = std::min(static_cast<double>(x) * pv / w,
                                      static_cast<double>(pv - 1));
            for (std::size_t y = 0; y < h; ++y) {
                const double v = std::min(static_cast<double>(y) * pv / h,
                                          static_cast<double>(pv - 1));
                EXPECT_NEAR(out.data[x * h + y], a + b * u + c * v + d * u * v, 1e-12)
                    << w << "x" << h << " at (" << x << "," << y << ")";
            }
        }
    }
}

TEST(ResizePosEmbed, LinearRampDoublesWithHalfSlope) {
    // table value = x along the first axis; doubling P_W halves the
    // per-index slope: out(x) = x/2 until the clamped edge
    const std::size_t pv = 8, d = 2;
    Tensor e({pv, pv, d});
    for (std::size_t x = 0; x < pv; ++x) {
        for (std::size_t y = 0; y < pv; ++y) {
            e.data[(x * pv + y) * d + 0] = static_cast<double>(x);
            e.data[(x * pv + y) * d + 1] = 5.0;
        }
    }
    Tensor out = resize_pos_embed(e, 2 * pv, pv);
    for (std::size_t x = 0; x < 2 * pv; ++x) {
        const double expect = std::min(static_cast<double>(x) / 2.0, static_cast<double>(pv - 1));
        for (std::size_t y = 0; y < pv; ++y) {
            EXPECT_NEAR(out.data[(x * pv + y) * d + 0], expect, 1e-12) << "x=" << x;
            EXPECT_DOUBLE_EQ(out.data[(x * pv + y) * d + 1], 5.0);
        }
    }
}
