#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "mgve/media.hpp"

using namespace mgve;

namespace {

VideoTensor noise_video(std::size_t frames, std::size_t h = 8, std::size_t w = 8,
                        double fps = 2.0, std::uint64_t seed = 1) {
    SynthSpec s;
    s.pattern = SynthPattern::unique_noise;
    s.frames = frames;
    s.height = h;
    s.width = w;
    s.fps = fps;
    s.seed = seed;
    return synth_video(s);
}

std::filesystem::path temp_file(const char* name) {
    return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST(Partition, ExactDivision) {
    auto chunks = partition_chunks(noise_video(32), 16);
    ASSERT_EQ(chunks.size(), 2u);
    EXPECT_EQ(chunks[0].chunk_id, 0);
    EXPECT_EQ(chunks[1].chunk_id, 1);
}

TEST(Partition, LastChunkPadsByRepeatingFinalFrame) {
    VideoTensor v = noise_video(33);
    auto chunks = partition_chunks(v, 16);
    ASSERT_EQ(chunks.size(), 3u);
    const Tensor last_frame = frame_at(v, 32);
    const std::size_t elems = last_frame.numel();
    for (std::size_t i = 0; i < 16; ++i) {
        Tensor padded({8, 8, 3});
        std::copy(chunks[2].frames.data.begin() + i * elems,
                  chunks[2].frames.data.begin() + (i + 1) * elems, padded.data.begin());
        EXPECT_TRUE(bitwise_equal(padded, last_frame)) << "frame slot " << i;
    }
}

TEST(Partition, SixtyChunksFor960Frames) {
    EXPECT_EQ(partition_chunks(noise_video(960, 2, 2), 16).size(), 60u);
}

TEST(Partition, ChunkIdFormulaHoldsForEveryChunk) {
    VideoTensor v = noise_video(100, 4, 4, 3.0);
    for (const Chunk& c : partition_chunks(v, 8)) {
        EXPECT_EQ(c.chunk_id,
                  static_cast<std::int64_t>(std::floor(c.first_timestamp * v.fps_fixed / 8.0)));
    }
}

TEST(Partition, FlattenReproducesInputOrder) {
    VideoTensor v = noise_video(21, 4, 4);
    auto chunks = partition_chunks(v, 8);
    const std::size_t elems = 4 * 4 * 3;
    for (std::size_t i = 0; i < 21; ++i) {
        const Chunk& c = chunks[i / 8];
        Tensor from_chunk({4, 4, 3});
        std::copy(c.frames.data.begin() + (i % 8) * elems,
                  c.frames.data.begin() + (i % 8 + 1) * elems, from_chunk.data.begin());
        EXPECT_TRUE(bitwise_equal(from_chunk, frame_at(v, i))) << "frame " << i;
    }
}

TEST(Partition, EmptyVideoIsAnError) {
    VideoTensor v;
    EXPECT_THROW(partition_chunks(v, 16), ValueError);
}

TEST(Accelerate, NoOpWhenWithinBudget) {
    VideoTensor v = noise_video(960, 2, 2);
    VideoTensor out = accelerate_playback(v, 60, 16);
    EXPECT_TRUE(bitwise_equal(out.frames, v.frames));
    EXPECT_EQ(out.timestamps, v.timestamps);
}

TEST(Accelerate, StrideDropKeepsOriginalTimestamps) {
    // 1920 frames at 2 fps with a 60-chunk budget: stride 2, and the
    // second retained chunk starts at original timestamp 16 s -> id 2
    VideoTensor v = noise_video(1920, 2, 2);
    VideoTensor out = accelerate_playback(v, 60, 16);
    ASSERT_EQ(out.frame_count(), 960u);
    for (std::size_t i = 0; i < out.frame_count(); ++i) {
        EXPECT_DOUBLE_EQ(out.timestamps[i], v.timestamps[2 * i]);
    }
    auto chunks = partition_chunks(out, 16);
    EXPECT_DOUBLE_EQ(chunks[1].first_timestamp, 16.0);
    EXPECT_EQ(chunks[1].chunk_id, 2);
    EXPECT_EQ(chunks[0].chunk_id, 0);
}

TEST(Accelerate, SingleFrameUnchanged) {
    VideoTensor v = noise_video(1, 4, 4);
    VideoTensor out = accelerate_playback(v, 60, 16);
    EXPECT_TRUE(bitwise_equal(out.frames, v.frames));
}

TEST(Accelerate, NeverReordersFrames) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t t = 1 + rng() % 200;
        const std::size_t budget = 1 + rng() % 8;
        VideoTensor v = noise_video(t, 2, 2, 2.0, rng());
        VideoTensor out = accelerate_playback(v, budget, 4);
        EXPECT_LE(out.frame_count(), budget * 4);
        for (std::size_t i = 1; i < out.timestamps.size(); ++i) {
            EXPECT_LT(out.timestamps[i - 1], out.timestamps[i]);
        }
    }
}

TEST(Synth, ConstantPatternAllFramesIdentical) {
    SynthSpec s;
    s.pattern = SynthPattern::constant;
    s.frames = 5;
    s.value = 0.33;
    VideoTensor v = synth_video(s);
    for (double px : v.frames.data) EXPECT_DOUBLE_EQ(px, 0.33);
}

TEST(Synth, ZeroSpeedSquareDegeneratesToConstantFrames) {
    SynthSpec s;
    s.pattern = SynthPattern::moving_square;
    s.frames = 6;
    s.speed = 0.0;
    VideoTensor v = synth_video(s);
    const Tensor first = frame_at(v, 0);
    for (std::size_t t = 1; t < 6; ++t) {
        EXPECT_TRUE(bitwise_equal(frame_at(v, t), first));
    }
}

TEST(Synth, SeededNoiseIsBitReproducible) {
    SynthSpec s;
    s.pattern = SynthPattern::unique_noise;
    s.frames = 4;
    s.seed = 99;
    EXPECT_TRUE(bitwise_equal(synth_video(s).frames, synth_video(s).frames));
}

TEST(Synth, UniquePatternHasNoEqualFrames) {
    VideoTensor v = noise_video(300, 2, 2);
    for (std::size_t a = 0; a < v.frame_count(); ++a) {
        for (std::size_t b = a + 1; b < v.frame_count(); ++b) {
            if (bitwise_equal(frame_at(v, a), frame_at(v, b))) {
                FAIL() << "frames " << a << " and " << b << " are equal";
            }
        }
    }
}

TEST(Synth, ZeroExtentRejected) {
    SynthSpec s;
    s.frames = 0;
    EXPECT_THROW(synth_video(s), ShapeError);
}

TEST(SynthSpecParse, RoundTripAndErrors) {
    SynthSpec s = parse_synth_spec("synthetic:unique,frames=24,width=32,height=16,fps=4,seed=7");
    EXPECT_EQ(s.pattern, SynthPattern::unique_noise);
    EXPECT_EQ(s.frames, 24u);
    EXPECT_EQ(s.width, 32u);
    EXPECT_EQ(s.height, 16u);
    EXPECT_DOUBLE_EQ(s.fps, 4.0);
    EXPECT_EQ(s.seed, 7u);
    EXPECT_THROW(parse_synth_spec("synthetic:vortex"), FormatError);
    EXPECT_THROW(parse_synth_spec("synthetic:unique,bogus=1"), FormatError);
    EXPECT_FALSE(is_synth_spec("video.mgvv"));
}

TEST(VideoFile, RoundTripAtStoredPrecision) {
    VideoTensor v = noise_video(3, 4, 6, 2.0, 11);
    const auto path = temp_file("mgve_video_roundtrip.mgvv");
    save_video(v, path.string());
    VideoTensor loaded = load_video(path.string());
    ASSERT_EQ(loaded.frame_count(), 3u);
    EXPECT_EQ(loaded.height(), 4u);
    EXPECT_EQ(loaded.width(), 6u);
    for (std::size_t i = 0; i < v.frames.data.size(); ++i) {
        EXPECT_EQ(static_cast<float>(v.frames.data[i]),
                  static_cast<float>(loaded.frames.data[i]));
    }
    EXPECT_DOUBLE_EQ(loaded.timestamps[1], 0.5);
    std::filesystem::remove(path);
}

TEST(VideoFile, BadMagicAndTruncationAreDistinct) {
    const auto path = temp_file("mgve_video_bad.mgvv");
    {
        std::ofstream os(path, std::ios::binary);
        os.write("NOPE", 4);
    }
    EXPECT_THROW(load_video(path.string()), FormatError);
    {
        VideoTensor v = noise_video(2, 4, 4);
        save_video(v, path.string());
        std::filesystem::resize_file(path, 40);
    }
    EXPECT_THROW(load_video(path.string()), TruncationError);
    std::filesystem::remove(path);
}

TEST(ResizeImage, IdentityAndInterpolation) {
    std::mt19937_64 rng(4);
    Tensor img = random_uniform({6, 8, 3}, rng);
    EXPECT_TRUE(bitwise_equal(resize_image(img, 6, 8), img));
    Tensor half = resize_image(img, 3, 4);
    EXPECT_EQ(half.shape, (Shape{3, 4, 3}));
    for (double v : half.data) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
}
