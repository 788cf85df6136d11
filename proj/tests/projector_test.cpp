#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "mgve/projector.hpp"
#include "mgve/weights.hpp"

using namespace mgve;

namespace {

TokenSequence sample_sequence(const ModelConfig& cfg, std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    TokenSequence seq;
    seq.tokens = random_normal({n, cfg.d_v}, rng);
    seq.chunk_ids.assign(n, 0);
    return seq;
}

}  // namespace

TEST(Project, ZeroWeightsGiveZeroOutputOfProjectedShape) {
    ModelConfig cfg = ModelConfig::tiny();
    EncoderWeights w = init_weights(cfg, 1);
    for (Tensor* t : {&w.proj_w1, &w.proj_b1, &w.proj_w2, &w.proj_b2}) {
        std::fill(t->data.begin(), t->data.end(), 0.0);
    }
    TokenSequence seq = sample_sequence(cfg, 5, 2);
    ProjectedTokens out = project(seq, w, cfg);
    EXPECT_EQ(out.tokens.shape, (Shape{5, cfg.d_llm}));
    for (double v : out.tokens.data) EXPECT_EQ(v, 0.0);
}

TEST(Project, TokenCountAndIdsPreserved) {
    ModelConfig cfg = ModelConfig::tiny();
    EncoderWeights w = init_weights(cfg, 3);
    TokenSequence seq = sample_sequence(cfg, 144, 4);
    seq.chunk_ids.assign(144, 7);
    ProjectedTokens out = project(seq, w, cfg);
    EXPECT_EQ(out.size(), 144u);
    EXPECT_EQ(out.chunk_ids, seq.chunk_ids);
}

TEST(Project, DimensionMismatchIsShapeError) {
    ModelConfig cfg = ModelConfig::tiny();
    EncoderWeights w = init_weights(cfg, 5);
    TokenSequence seq;
    seq.tokens = Tensor({3, cfg.d_v + 1});
    seq.chunk_ids.assign(3, 0);
    EXPECT_THROW(project(seq, w, cfg), ShapeError);
}

TEST(TokenFile, RoundTripAtStoredPrecision) {
    ModelConfig cfg = ModelConfig::tiny();
    EncoderWeights w = init_weights(cfg, 6);
    TokenSequence seq = sample_sequence(cfg, 9, 7);
    for (std::size_t i = 0; i < 9; ++i) seq.chunk_ids[i] = static_cast<std::int64_t>(i / 3);
    ProjectedTokens out = project(seq, w, cfg);

    const auto path = std::filesystem::temp_directory_path() / "mgve_tokens.mgvt";
    save_tokens(out, path.string());
    ProjectedTokens loaded = load_tokens(path.string());
    EXPECT_EQ(loaded.chunk_ids, out.chunk_ids);
    ASSERT_EQ(loaded.tokens.shape, out.tokens.shape);
    for (std::size_t i = 0; i < out.tokens.data.size(); ++i) {
        EXPECT_EQ(static_cast<float>(out.tokens.data[i]),
                  static_cast<float>(loaded.tokens.data[i]));
    }
    std::filesystem::remove(path);
}

TEST(TokenFile, BadMagicAndTruncation) {
    const auto path = std::filesystem::temp_directory_path() / "mgve_tokens_bad.mgvt";
    {
        std::ofstream os(path, std::ios::binary);
        os.write("MGXX", 4);
    }
    EXPECT_THROW(load_tokens(path.string()), FormatError);
    {
        ProjectedTokens t;
        t.tokens = Tensor({4, 3});
        t.chunk_ids.assign(4, 0);
        save_tokens(t, path.string());
        std::filesystem::resize_file(path, 20);
    }
    EXPECT_THROW(load_tokens(path.string()), TruncationError);
    std::filesystem::remove(path);
}
