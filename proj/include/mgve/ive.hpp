#pragma once

#include <cstdint>
#include <vector>

#include "mgve/config.hpp"
#include "mgve/engine.hpp"
#include "mgve/media.hpp"
#include "mgve/transformer.hpp"
#include "mgve/weights.hpp"

namespace mgve {

// Per-chunk patch-feature grid.
struct FeatureMap {
    Tensor tokens;  // [rows*cols x d_v]
    std::size_t grid_rows = 0;
    std::size_t grid_cols = 0;
    std::int64_t chunk_id = 0;
};

namespace detail {
inline void check_chunk_shape(const Tensor& frames, const ModelConfig& cfg) {
    if (frames.rank() != 4 || frames.shape[3] != 3) {
        throw ShapeError("encode_chunk: frames must be [F x H x W x 3], got " +
                         frames.shape_str());
    }
    if (frames.shape[0] != cfg.f) {
        throw ShapeError("encode_chunk: chunk has " + std::to_string(frames.shape[0]) +
                         " frames, config expects " + std::to_string(cfg.f));
    }
    const std::size_t unit = 2 * cfg.patch;
    if (frames.shape[1] % unit != 0 || frames.shape[2] % unit != 0) {
        throw ShapeError("encode_chunk: spatial extents of " + frames.shape_str() +
                         " must be divisible by 2P=" + std::to_string(unit) +
                         " for whole pooled patches");
    }
}
}  // namespace detail

// Chunk embedding before the ViT: 3D patch conv normalized by the chunk
// length. With temporally replicated kernels this is the mean of the
// per-frame 2D embeddings.
template <class E>
typename E::value patch_embed_value(E& eng, const typename E::value& frames,
                                    const WeightsT<typename E::value>& w,
                                    const ModelConfig& cfg) {
    auto feat = eng.conv3d_patch(frames, w.conv_kernel, w.conv_bias);
    return eng.scale(feat, 1.0 / static_cast<double>(cfg.f));
}

inline Tensor patch_embed(const Chunk& c, const EncoderWeights& w, const ModelConfig& cfg) {
    EvalEngine eng;
    return patch_embed_value(eng, c.frames, w, cfg);
}

// Full intra-chunk encoder on one chunk's frames: patch embedding,
// resized absolute position table, bidirectional ViT blocks, 2x2 pool.
template <class E>
typename E::value encode_chunk_value(E& eng, const typename E::value& frames,
                                     const WeightsT<typename E::value>& w, const ModelConfig& cfg,
                                     std::size_t rows, std::size_t cols) {
    auto feat = patch_embed_value(eng, frames, w, cfg);
    auto pos_grid = eng.bilinear_resize(w.ape, cols, rows);  // [P_W x P_H x d]
    auto pos = eng.grid_to_token_rows(pos_grid);
    feat = eng.add(feat, pos);
    for (const auto& layer : w.vit) {
        feat = transformer_layer(eng, feat, layer, cfg, ops::MaskKind::none, nullptr, false);
    }
    return cfg.pool == PoolMode::average ? eng.avg_pool2x2(feat, rows, cols)
                                         : eng.max_pool2x2(feat, rows, cols);
}

inline FeatureMap encode_chunk(const Chunk& c, const EncoderWeights& w, const ModelConfig& cfg) {
    detail::check_chunk_shape(c.frames, cfg);
    const std::size_t rows = c.frames.shape[1] / cfg.patch;
    const std::size_t cols = c.frames.shape[2] / cfg.patch;
    EvalEngine eng;
    FeatureMap fm;
    fm.tokens = encode_chunk_value(eng, c.frames, w, cfg, rows, cols);
    fm.grid_rows = rows / 2;
    fm.grid_cols = cols / 2;
    fm.chunk_id = c.chunk_id;
    return fm;
}

// Standalone 2x2 pooling over a feature-map grid; token count quarters.
inline FeatureMap pool2x2(const FeatureMap& f, PoolMode mode = PoolMode::average) {
    if (f.grid_rows % 2 != 0 || f.grid_cols % 2 != 0) {
        throw ShapeError("pool2x2: odd grid " + std::to_string(f.grid_rows) + "x" +
                         std::to_string(f.grid_cols));
    }
    FeatureMap out;
    out.tokens = mode == PoolMode::average
                     ? ops::avg_pool2x2_grid(f.tokens, f.grid_rows, f.grid_cols)
                     : ops::max_pool2x2_grid(f.tokens, f.grid_rows, f.grid_cols);
    out.grid_rows = f.grid_rows / 2;
    out.grid_cols = f.grid_cols / 2;
    out.chunk_id = f.chunk_id;
    return out;
}

}  // namespace mgve
