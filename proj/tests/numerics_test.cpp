#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mgve/engine.hpp"
#include "mgve/gradcheck.hpp"
#include "mgve/ops.hpp"
#include "mgve/tensor.hpp"

#include "test_oracles.hpp"

using namespace mgve;
using testing_oracles::chunk_frame;
using testing_oracles::conv2d_patch_oracle;
using testing_oracles::kernel_time_slice;

TEST(Matmul, IdentityLeavesOperandUnchanged) {
    Tensor eye({2, 2}, {1, 0, 0, 1});
    Tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
    EXPECT_TRUE(bitwise_equal(ops::matmul(eye, a), a));
}

TEST(Matmul, HandArithmetic) {
    Tensor a({2, 2}, {1, 2, 3, 4});
    Tensor b({2, 1}, {5, 6});
    Tensor c = ops::matmul(a, b);
    EXPECT_EQ(c.shape, (Shape{2, 1}));
    EXPECT_DOUBLE_EQ(c.data[0], 17.0);
    EXPECT_DOUBLE_EQ(c.data[1], 39.0);
}

TEST(Matmul, DimensionErrorNamesBothShapes) {
    Tensor a({2, 3});
    Tensor b({2, 3});
    try {
        ops::matmul(a, b);
        FAIL() << "expected ShapeError";
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
        EXPECT_NE(msg.rfind("[2x3]"), msg.find("[2x3]")) << "both shapes should appear: " << msg;
    }
}

TEST(Softmax, EqualValuesGiveUniformRow) {
    Tensor x({1, 4}, {3.5, 3.5, 3.5, 3.5});
    Tensor y = ops::softmax_rows(x);
    for (double v : y.data) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(Softmax, MaskForcesAllMassOnKeptEntry) {
    Tensor x({1, 2}, {0.0, 100.0});
    std::vector<std::uint8_t> keep = {1, 0};
    Tensor y = ops::softmax_rows(x, ops::MaskKind::explicit_mask, &keep);
    EXPECT_DOUBLE_EQ(y.data[0], 1.0);
    EXPECT_EQ(y.data[1], 0.0);

    Tensor mask({1, 2}, {1.0, 0.0});
    Tensor y2 = ops::softmax_rows(x, mask);
    EXPECT_TRUE(bitwise_equal(y, y2));
}

TEST(Softmax, FrozenRowOneTwoThree) {
    // frozen from the closed-form exp/sum oracle at double precision
    Tensor x({1, 3}, {1.0, 2.0, 3.0});
    Tensor y = ops::softmax_rows(x);
    EXPECT_NEAR(y.data[0], 0.09003057317038046, 1e-15);
    EXPECT_NEAR(y.data[1], 0.24472847105479767, 1e-15);
    EXPECT_NEAR(y.data[2], 0.6652409557748219, 1e-15);
}

TEST(Softmax, RowsSumToOneAndShiftInvariant) {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        Tensor x = random_normal({5, 9}, rng, 0.0, 3.0);
        Tensor y = ops::softmax_rows(x);
        for (std::size_t i = 0; i < 5; ++i) {
            double sum = 0.0;
            for (std::size_t j = 0; j < 9; ++j) sum += y.at2(i, j);
            EXPECT_NEAR(sum, 1.0, 1e-12);
        }
        Tensor shifted = x;
        std::uniform_real_distribution<double> shift_dist(-10.0, 10.0);
        for (std::size_t i = 0; i < 5; ++i) {
            const double s = shift_dist(rng);
            for (std::size_t j = 0; j < 9; ++j) shifted.at2(i, j) += s;
        }
        EXPECT_LE(max_abs_diff(ops::softmax_rows(shifted), y), 1e-12);
    }
}

TEST(Softmax, FullyMaskedRowIsDegenerate) {
    Tensor x({2, 2}, {1, 2, 3, 4});
    std::vector<std::uint8_t> keep = {1, 1, 0, 0};
    EXPECT_THROW(ops::softmax_rows(x, ops::MaskKind::explicit_mask, &keep), ValueError);
}

TEST(Conv3dPatch, ZeroInputZeroBiasGivesZeroOutput) {
    Tensor x({2, 8, 8, 3});
    Tensor k({4, 2, 4, 4, 3});
    std::mt19937_64 rng(3);
    k = random_normal(k.shape, rng);
    Tensor bias({4});
    Tensor y = ops::conv3d_patch(x, k, bias);
    EXPECT_EQ(y.shape, (Shape{4, 4}));
    for (double v : y.data) EXPECT_EQ(v, 0.0);
}

TEST(Conv3dPatch, ReplicatedKernelOnIdenticalFramesScalesThe2dEmbedding) {
    std::mt19937_64 rng(11);
    const std::size_t f = 3, p = 4, d = 5;
    Tensor k2d = random_normal({d, p, p, 3}, rng);
    Tensor frame = random_uniform({8, 12, 3}, rng);
    Tensor chunk({f, 8, 12, 3});
    for (std::size_t t = 0; t < f; ++t) {
        std::copy(frame.data.begin(), frame.data.end(), chunk.data.begin() + t * frame.numel());
    }
    Tensor k3d({d, f, p, p, 3});
    for (std::size_t o = 0; o < d; ++o) {
        for (std::size_t t = 0; t < f; ++t) {
            std::copy(k2d.data.begin() + o * p * p * 3, k2d.data.begin() + (o + 1) * p * p * 3,
                      k3d.data.begin() + (o * f + t) * p * p * 3);
        }
    }
    Tensor bias({d});
    Tensor got = ops::conv3d_patch(chunk, k3d, bias);
    Tensor expect = ops::scale(conv2d_patch_oracle(frame, k2d, bias), static_cast<double>(f));
    EXPECT_LE(max_abs_diff(got, expect), 1e-10);
}

TEST(Conv3dPatch, MatchesPerFrame2dOracleOnRandomInput) {
    std::mt19937_64 rng(19);
    const std::size_t f = 4, p = 4, d = 6;
    Tensor chunk = random_uniform({f, 8, 8, 3}, rng);
    Tensor kernel = random_normal({d, f, p, p, 3}, rng);
    Tensor bias = random_normal({d}, rng);
    // sum over frames of the per-slice 2D conv, bias added once
    Tensor expect = conv2d_patch_oracle(chunk_frame(chunk, 0), kernel_time_slice(kernel, 0), bias);
    Tensor zero_bias({d});
    for (std::size_t t = 1; t < f; ++t) {
        expect = ops::add(expect, conv2d_patch_oracle(chunk_frame(chunk, t),
                                                      kernel_time_slice(kernel, t), zero_bias));
    }
    EXPECT_LE(max_abs_diff(ops::conv3d_patch(chunk, kernel, bias), expect), 1e-10);
}

TEST(Conv3dPatch, LinearInInput) {
    std::mt19937_64 rng(23);
    Tensor x = random_normal({2, 8, 8, 3}, rng);
    Tensor y = random_normal({2, 8, 8, 3}, rng);
    Tensor k = random_normal({4, 2, 4, 4, 3}, rng);
    Tensor bias({4});
    const double alpha = 1.7, beta = -0.4;
    Tensor combo = ops::add(ops::scale(x, alpha), ops::scale(y, beta));
    Tensor lhs = ops::conv3d_patch(combo, k, bias);
    Tensor rhs = ops::add(ops::scale(ops::conv3d_patch(x, k, bias), alpha),
                          ops::scale(ops::conv3d_patch(y, k, bias), beta));
    EXPECT_LE(max_abs_diff(lhs, rhs), 1e-10);
}

TEST(Conv3dPatch, NonDivisibleSpatialExtentIsShapeError) {
    Tensor x({2, 9, 8, 3});
    Tensor k({4, 2, 4, 4, 3});
    Tensor bias({4});
    EXPECT_THROW(ops::conv3d_patch(x, k, bias), ShapeError);
}

TEST(CropeLogits, ZeroDeltaEqualsPlainDotBitwise) {
    std::mt19937_64 rng(31);
    Tensor q = random_normal({3, 8}, rng);
    Tensor k = random_normal({5, 8}, rng);
    std::vector<std::int64_t> ids_q(3, 42), ids_k(5, 42);
    Tensor logits = ops::crope_logits(q, k, ids_q, ids_k, 1e4);
    Tensor plain = ops::matmul(q, ops::transpose(k));
    EXPECT_TRUE(bitwise_equal(logits, plain));
}

TEST(CropeLogits, ShiftInvariantBitwise) {
    std::mt19937_64 rng(37);
    for (int trial = 0; trial < 100; ++trial) {
        Tensor q = random_normal({4, 6}, rng);
        Tensor k = random_normal({4, 6}, rng);
        std::vector<std::int64_t> ids = {0, 0, 3, 7};
        std::vector<std::int64_t> shifted = {7, 7, 10, 14};
        Tensor a = ops::crope_logits(q, k, ids, ids, 1e4);
        Tensor b = ops::crope_logits(q, k, shifted, shifted, 1e4);
        EXPECT_TRUE(bitwise_equal(a, b));
    }
}

TEST(CropeLogits, SingleRotationHandValue) {
    // d_h=2, base=1e4: theta_0 = 1, q=k=(1,0), delta=1 -> cos(1)
    Tensor q({1, 2}, {1.0, 0.0});
    Tensor k({1, 2}, {1.0, 0.0});
    Tensor logit = ops::crope_logits(q, k, {1}, {0}, 1e4);
    EXPECT_NEAR(logit.data[0], 0.5403023058681398, 1e-15);
}

TEST(CropeLogits, OddHeadDimIsConfigError) {
    Tensor q({1, 3});
    Tensor k({1, 3});
    EXPECT_THROW(ops::crope_logits(q, k, {0}, {0}, 1e4), ConfigError);
}

TEST(BilinearResize, IdentityIsBitExact) {
    std::mt19937_64 rng(41);
    Tensor src = random_normal({5, 7, 3}, rng);
    EXPECT_TRUE(bitwise_equal(ops::bilinear_resize_grid(src, 5, 7), src));
}

TEST(BilinearResize, ConstantFieldStaysConstant) {
    Tensor src = Tensor::full({4, 4, 2}, 3.25);
    Tensor out = ops::bilinear_resize_grid(src, 9, 5);
    for (double v : out.data) EXPECT_DOUBLE_EQ(v, 3.25);
}

TEST(AvgPool, TwoByTwoMean) {
    // grid [1,2;3,4] with d=1 -> single token 2.5
    Tensor x({4, 1}, {1, 2, 3, 4});
    Tensor y = ops::avg_pool2x2_grid(x, 2, 2);
    EXPECT_EQ(y.shape, (Shape{1, 1}));
    EXPECT_DOUBLE_EQ(y.data[0], 2.5);
}

TEST(AvgPool, ConstantGridKeepsValueAndQuartersTokens) {
    Tensor x = Tensor::full({16, 3}, -0.75);
    Tensor y = ops::avg_pool2x2_grid(x, 4, 4);
    EXPECT_EQ(y.shape, (Shape{4, 3}));
    for (double v : y.data) EXPECT_DOUBLE_EQ(v, -0.75);
}

TEST(AvgPool, OddGridIsShapeError) {
    Tensor x({6, 2});
    EXPECT_THROW(ops::avg_pool2x2_grid(x, 3, 2), ShapeError);
}

// Reverse-mode gradients of every primitive against central differences,
// 100+ seeded trials on random small tensors.
TEST(PrimitiveGradients, MatchCentralDifferences) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        std::mt19937_64 rng(seed);
        const int which = static_cast<int>(seed % 10);
        double err = 0.0;
        switch (which) {
            case 0: {
                Tensor a = random_normal({3, 4}, rng), b = random_normal({4, 2}, rng);
                err = grad_check_leaves(
                          {&a, &b},
                          [](TapeEngine& e, const std::vector<Var>& v) {
                              return e.sum_all(e.matmul(v[0], v[1]));
                          },
                          1e-5, 50, seed)
                          .max_rel_err;
                break;
            }
            case 1: {
                Tensor x = random_normal({4, 6}, rng);
                err = grad_check_leaves(
                          {&x},
                          [](TapeEngine& e, const std::vector<Var>& v) {
                              return e.sum_all(e.gelu(e.scale(v[0], 1.3)));
                          },
                          1e-5, 50, seed)
                          .max_rel_err;
                break;
            }
            case 2: {
                Tensor x = random_normal({3, 5}, rng);
                Tensor w = random_normal({3, 5}, rng);
                err = grad_check_leaves(
                          {&x, &w},
                          [](TapeEngine& e, const std::vector<Var>& v) {
                              auto y = e.softmax(e.add(v[0], v[1]), ops::MaskKind::causal);
                              return e.sum_all(e.gelu(y));
                          },
                          1e-5, 50, seed)
                          .max_rel_err;
                break;
            }
            case 3: {
                Tensor x = random_normal({4, 6}, rng);
                Tensor g = random_uniform({6}, rng, 0.5, 1.5);
                Tensor b = random_normal({6}, rng);
                err = grad_check_leaves(
                          {&x, &g, &b},
                          [](TapeEngine& e, const std::vector<Var>& v) {
                              return e.sum_all(e.gelu(e.layernorm(v[0], v[1], v[2])));
                          },
                          1e-5, 60, seed)
                          .max_rel_err;
                break;
            }
            case 4: {
                Tensor x = random_normal({2, 6, 6, 3}, rng);
                Tensor k = random_normal({3, 2, 3, 3, 3}, rng);
                Tensor bias = random_normal({3}, rng);
                err = grad_check_leaves(
                          {&x, &k, &bias},
                          [](TapeEngine& e, const std::vector<Var>& v) {
                              return e.sum_all(e.gelu(e.conv3d_patch(v[0], v[1], v[2])));
                          },
                          1e-5, 60, seed)
                          .max_rel_err;
                break;
            }
            case 5: {
                Tensor q = random_normal({3, 4}, rng), k = random_normal({3, 4}, rng);
                std::vector<std::int64_t> ids = {0, 2, 5};
                err = grad_check_leaves(
                          {&q, &k},
                          [&ids](TapeEngine& e, const std::vector<Var>& v) {
                              return e.sum_all(
                                  e.gelu(e.crope_logits(v[0], v[1], ids, ids, 1e4)));
                          },
                          1e-5, 40, seed)
                          .max_rel_err;
                break;
            }
            case 6: {
                Tensor src = random_normal({3, 3, 2}, rng);
                err = grad_check_leaves(
                          {&src},
                          [](TapeEngine& e, const std::vector<Var>& v) {
                              return e.sum_all(e.gelu(e.bilinear_resize(v[0], 5, 4)));
                          },
                          1e-5, 40, seed)
                          .max_rel_err;
                break;
            }
            case 7: {
                Tensor x = random_normal({8, 3}, rng);
                err = grad_check_leaves(
                          {&x},
                          [](TapeEngine& e, const std::vector<Var>& v) {
                              return e.sum_all(e.gelu(e.avg_pool2x2(v[0], 4, 2)));
                          },
                          1e-5, 30, seed)
                          .max_rel_err;
                break;
            }
            case 8: {
                Tensor x = random_normal({3, 8}, rng);
                Tensor b = random_normal({8}, rng);
                err = grad_check_leaves(
                          {&x, &b},
                          [](TapeEngine& e, const std::vector<Var>& v) {
                              auto y = e.add_bias(v[0], v[1]);
                              auto a = e.slice_cols(y, 0, 4);
                              auto bb = e.slice_cols(y, 4, 4);
                              return e.sum_all(e.gelu(e.concat_cols({a, e.transpose(
                                                                             e.transpose(bb))})));
                          },
                          1e-5, 40, seed)
                          .max_rel_err;
                break;
            }
            default: {
                Tensor x = random_normal({8, 3}, rng);
                err = grad_check_leaves(
                          {&x},
                          [](TapeEngine& e, const std::vector<Var>& v) {
                              return e.sum_all(e.gelu(e.max_pool2x2(v[0], 4, 2)));
                          },
                          1e-5, 30, seed)
                          .max_rel_err;
                break;
            }
        }
        EXPECT_LT(err, 1e-6) << "primitive case " << which << " seed " << seed;
    }
}
