#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mgve/compression.hpp"
#include "mgve/config.hpp"
#include "mgve/ifa.hpp"
#include "mgve/ive.hpp"
#include "mgve/media.hpp"
#include "mgve/projector.hpp"
#include "mgve/resolution.hpp"
#include "mgve/threading.hpp"
#include "mgve/weights.hpp"

namespace mgve {

// ------------------------------------------------------- encode pipeline

// IVE over a chunk list; chunks are independent, so they may be encoded
// concurrently and merged back in chunk order.
inline std::vector<FeatureMap> encode_chunks(const std::vector<Chunk>& chunks,
                                             const EncoderWeights& w, const ModelConfig& cfg) {
    std::vector<FeatureMap> maps(chunks.size());
    parallel_for(chunks.size(),
                 [&](std::size_t i) { maps[i] = encode_chunk(chunks[i], w, cfg); });
    return maps;
}

struct EncodeOptions {
    std::optional<double> compress_threshold;
    std::optional<double> compress_target;  // reduction ratio; resolved via sweep
};

struct EncodeResult {
    ProjectedTokens tokens;
    std::size_t chunks = 0;
    std::size_t tokens_per_chunk = 0;
    double compression_reduction = 0.0;
    double compression_threshold = 1.01;
};

// Full video path: accelerated playback to the chunk budget, dynamic
// resolution, chunk partition, IVE, optional token merge, IFA, projector.
inline EncodeResult encode_video(const VideoTensor& raw, const EncoderWeights& w,
                                 const ModelConfig& cfg, const EncodeOptions& opts = {}) {
    raw.validate();
    cfg.validate();
    const VideoTensor budgeted = accelerate_playback(raw, cfg.max_chunks, cfg.f);
    const ResizePlan plan =
        encoder_resize_plan(budgeted.width(), budgeted.height(), cfg.r_v, cfg.patch);
    const VideoTensor resized = resize_video(budgeted, plan.target_h, plan.target_w);
    const std::vector<Chunk> chunks = partition_chunks(resized, cfg.f);
    const std::vector<FeatureMap> maps = encode_chunks(chunks, w, cfg);
    TokenSequence seq = concat_feature_maps(maps);

    EncodeResult result;
    result.chunks = chunks.size();
    result.tokens_per_chunk = maps.front().tokens.shape[0];

    if (opts.compress_threshold || opts.compress_target) {
        double threshold = opts.compress_threshold.value_or(1.01);
        if (opts.compress_target) {
            const auto sweep =
                sweep_thresholds(seq, result.tokens_per_chunk, {*opts.compress_target});
            threshold = sweep.front().threshold;
        }
        MergeResult merged = merge_tokens(seq, result.tokens_per_chunk, threshold);
        result.compression_reduction = merged.reduction;
        result.compression_threshold = threshold;
        seq = std::move(merged.sequence);
    }

    const TokenSequence aggregated = aggregate(seq, w, cfg);
    result.tokens = project(aggregated, w, cfg);
    return result;
}

struct ImageEncodeResult {
    ProjectedTokens tokens;
    GridConfig grid;
    std::size_t sequences = 0;  // thumbnail + sub-images
};

// Image path: thumbnail plus sub-image sequences, each aggregated
// independently, projected and concatenated in order.
inline ImageEncodeResult encode_image(const Tensor& image, const EncoderWeights& w,
                                      const ModelConfig& cfg, std::int64_t replication_id = 0) {
    cfg.validate();
    ImageEncodeResult result;
    result.grid = subimage_grid(image.shape[1], image.shape[0], cfg.r_v);
    const std::vector<TokenSequence> seqs = encode_image_set(image, w, cfg, replication_id);
    result.sequences = seqs.size();
    std::vector<const Tensor*> parts;
    parts.reserve(seqs.size());
    std::vector<std::int64_t> ids;
    for (const TokenSequence& s : seqs) {
        parts.push_back(&s.tokens);
        ids.insert(ids.end(), s.chunk_ids.begin(), s.chunk_ids.end());
    }
    TokenSequence all;
    all.tokens = ops::concat_rows(parts);
    all.chunk_ids = std::move(ids);
    result.tokens = project(all, w, cfg);
    return result;
}

// ---------------------------------------------------------- token budget

struct TokenBudget {
    std::size_t chunks = 0;
    double tokens_chunked = 0.0;
    double tokens_per_frame_baseline = 0.0;
    double ratio = 0.0;
    std::size_t n_v = 0;  // patch features per chunk before pooling
};

// Context-size arithmetic: chunk count, chunk-level token total, and the
// per-frame-encoding baseline it replaces.
inline TokenBudget token_budget(std::size_t t_v, std::size_t width, std::size_t height,
                                const ModelConfig& cfg) {
    if (t_v == 0) throw ValueError("token_budget: empty video");
    const ResizePlan plan = dynamic_resize(width, height, cfg.r_v, cfg.patch);
    TokenBudget b;
    b.chunks = (t_v + cfg.f - 1) / cfg.f;
    b.n_v = (plan.target_w / cfg.patch) * (plan.target_h / cfg.patch);
    const double per_chunk = static_cast<double>(b.n_v) / 4.0;
    b.tokens_chunked = static_cast<double>(b.chunks) * per_chunk;
    b.tokens_per_frame_baseline = static_cast<double>(t_v) * per_chunk;
    b.ratio = b.tokens_per_frame_baseline / b.tokens_chunked;
    return b;
}

// ------------------------------------------------------------------ NIAH

// Replaces the frame at global index chunk*F + pos with the needle image
// (resampled to the video's frame grid). Timestamps are untouched.
inline VideoTensor niah_insert(const VideoTensor& v, const Tensor& needle, std::size_t chunk,
                               std::size_t pos, std::size_t f) {
    v.validate();
    if (pos >= f) {
        throw ValueError("niah_insert: frame position " + std::to_string(pos) +
                         " outside chunk of " + std::to_string(f));
    }
    const std::size_t global = chunk * f + pos;
    if (global >= v.frame_count()) {
        throw ValueError("niah_insert: frame index " + std::to_string(global) +
                         " out of range for " + std::to_string(v.frame_count()) + " frames");
    }
    const Tensor fitted = resize_image(needle, v.height(), v.width());
    VideoTensor out = v;
    const std::size_t elems = v.height() * v.width() * 3;
    std::copy(fitted.data.begin(), fitted.data.end(), out.frames.data.begin() + global * elems);
    return out;
}

struct LocateResult {
    bool found = false;
    std::int64_t chunk_id = -1;
    std::size_t token_index = 0;
};

// Deterministic reader: the chunk id of the first token where the two
// encodings differ beyond the tolerance. Encoder locality plus causal
// aggregation pin that first difference to the needle's chunk.
inline LocateResult niah_locate(const ProjectedTokens& with_needle,
                                const ProjectedTokens& without_needle, double tol = 1e-9) {
    if (with_needle.tokens.shape != without_needle.tokens.shape ||
        with_needle.chunk_ids != without_needle.chunk_ids) {
        throw ShapeError("niah_locate: sequences must share shape and chunk ids");
    }
    const std::size_t n = with_needle.size();
    const std::size_t d = with_needle.tokens.shape[1];
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < d; ++c) {
            if (std::abs(with_needle.tokens.data[i * d + c] -
                         without_needle.tokens.data[i * d + c]) > tol) {
                return LocateResult{true, with_needle.chunk_ids[i], i};
            }
        }
    }
    return LocateResult{};
}

struct NiahTrial {
    std::size_t video = 0;
    std::size_t target_chunk = 0;
    std::size_t frame_pos = 0;
    std::int64_t target_chunk_id = 0;
    std::int64_t located_chunk_id = -1;
    bool correct = false;
};

struct NiahRow {
    std::size_t chunks = 0;
    std::size_t trials = 0;
    std::size_t correct = 0;
    double accuracy = 0.0;
};

struct NiahParams {
    std::size_t chunks_max = 8;
    std::size_t trials_per_chunk = 50;
    std::uint64_t seed = 1;
    std::size_t video_pool = 10;
    std::size_t frame_width = 64;
    std::size_t frame_height = 64;
};

// Chunk-level needle-in-a-haystack sweep. For each chunk count c the
// campaign runs trials_per_chunk * c trials: pick a pooled video,
// accelerate it to fit c chunks, insert a needle frame at a random
// (chunk, position), encode both variants and locate the first differing
// chunk. Trials whose needle equals the replaced frame are redrawn.
inline std::vector<NiahRow> niah_campaign(const EncoderWeights& w, const ModelConfig& cfg,
                                          const NiahParams& params,
                                          std::vector<NiahTrial>* trace = nullptr) {
    cfg.validate();
    std::mt19937_64 rng(params.seed);
    std::vector<NiahRow> rows;
    rows.reserve(params.chunks_max);

    for (std::size_t c_v = 1; c_v <= params.chunks_max; ++c_v) {
        struct PoolEntry {
            VideoTensor video;  // accelerated + resized to the encoder grid
            std::vector<FeatureMap> maps;
            ProjectedTokens baseline;
        };
        std::vector<PoolEntry> pool(params.video_pool);
        const ResizePlan plan =
            encoder_resize_plan(params.frame_width, params.frame_height, cfg.r_v, cfg.patch);
        for (std::size_t vid = 0; vid < params.video_pool; ++vid) {
            SynthSpec spec;
            spec.pattern = SynthPattern::unique_noise;
            spec.width = params.frame_width;
            spec.height = params.frame_height;
            spec.fps = cfg.fps_fixed;
            // alternate between exact-fit and 2x-overlong sources so the
            // accelerated-playback path is exercised for half the pool
            spec.frames = c_v * cfg.f * (1 + vid % 2);
            spec.seed = params.seed * 7919 + c_v * 131 + vid;
            VideoTensor v = synth_video(spec);
            v = accelerate_playback(v, c_v, cfg.f);
            v = resize_video(v, plan.target_h, plan.target_w);
            PoolEntry& e = pool[vid];
            e.maps = encode_chunks(partition_chunks(v, cfg.f), w, cfg);
            e.baseline = project(aggregate(concat_feature_maps(e.maps), w, cfg), w, cfg);
            e.video = std::move(v);
        }

        const std::size_t n_trials = params.trials_per_chunk * c_v;
        std::vector<NiahTrial> trials(n_trials);
        std::uniform_int_distribution<std::size_t> pick_video(0, params.video_pool - 1);
        std::uniform_int_distribution<std::size_t> pick_chunk(0, c_v - 1);
        std::uniform_int_distribution<std::size_t> pick_pos(0, cfg.f - 1);
        std::vector<Tensor> needles(n_trials);
        for (std::size_t t = 0; t < n_trials; ++t) {
            NiahTrial& trial = trials[t];
            for (int attempt = 0;; ++attempt) {
                if (attempt > 1000) {
                    throw ValueError("niah_campaign: could not draw a detectable trial");
                }
                trial.video = pick_video(rng);
                trial.target_chunk = pick_chunk(rng);
                trial.frame_pos = pick_pos(rng);
                SynthSpec needle_spec;
                needle_spec.pattern = SynthPattern::unique_noise;
                needle_spec.frames = 1;
                needle_spec.width = params.frame_width + 16;
                needle_spec.height = params.frame_height + 8;
                needle_spec.seed = rng();
                const VideoTensor needle_v = synth_video(needle_spec);
                Tensor needle = frame_at(needle_v, 0);
                const PoolEntry& e = pool[trial.video];
                const std::size_t global = trial.target_chunk * cfg.f + trial.frame_pos;
                if (global >= e.video.frame_count()) continue;  // padded tail position
                const Tensor fitted = resize_image(needle, e.video.height(), e.video.width());
                const Tensor original = frame_at(e.video, global);
                if (bitwise_equal(fitted, original)) continue;  // undetectable; redraw
                needles[t] = needle;
                break;
            }
        }

        std::vector<std::uint8_t> correct(n_trials, 0);
        parallel_for(n_trials, [&](std::size_t t) {
            NiahTrial& trial = trials[t];
            const PoolEntry& e = pool[trial.video];
            const VideoTensor variant =
                niah_insert(e.video, needles[t], trial.target_chunk, trial.frame_pos, cfg.f);
            // only the needle chunk changed; reuse the cached maps elsewhere
            std::vector<FeatureMap> maps = e.maps;
            maps[trial.target_chunk] =
                encode_chunk(chunk_at(variant, trial.target_chunk, cfg.f), w, cfg);
            const ProjectedTokens with_needle =
                project(aggregate(concat_feature_maps(maps), w, cfg), w, cfg);
            const LocateResult loc = niah_locate(with_needle, e.baseline);
            trial.target_chunk_id = e.maps[trial.target_chunk].chunk_id;
            trial.located_chunk_id = loc.found ? loc.chunk_id : -1;
            trial.correct = loc.found && loc.chunk_id == trial.target_chunk_id;
            correct[t] = trial.correct ? 1 : 0;
        });

        NiahRow row;
        row.chunks = c_v;
        row.trials = n_trials;
        for (std::uint8_t c : correct) row.correct += c;
        row.accuracy = static_cast<double>(row.correct) / static_cast<double>(n_trials);
        rows.push_back(row);
        if (trace) trace->insert(trace->end(), trials.begin(), trials.end());
    }
    return rows;
}

}  // namespace mgve
