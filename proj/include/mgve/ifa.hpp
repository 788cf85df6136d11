#pragma once

#include <cstdint>
#include <numeric>
#include <vector>

#include "mgve/config.hpp"
#include "mgve/engine.hpp"
#include "mgve/ive.hpp"
#include "mgve/resolution.hpp"
#include "mgve/transformer.hpp"

namespace mgve {

// Concatenated pooled features with the per-token chunk id materialized
// explicitly: rotations depend only on differences of these ids.
struct TokenSequence {
    Tensor tokens;  // [N x d]
    std::vector<std::int64_t> chunk_ids;

    std::size_t size() const { return chunk_ids.size(); }

    void validate() const {
        const std::size_t n = tokens.shape.empty() ? 0 : tokens.shape[0];
        if (chunk_ids.size() != n) {
            throw ShapeError("token sequence: " + std::to_string(chunk_ids.size()) +
                             " chunk ids for " + std::to_string(n) + " tokens");
        }
    }
};

inline TokenSequence concat_feature_maps(const std::vector<FeatureMap>& maps) {
    if (maps.empty()) throw ValueError("concat_feature_maps: no feature maps");
    std::vector<const Tensor*> parts;
    parts.reserve(maps.size());
    TokenSequence seq;
    for (const FeatureMap& m : maps) {
        parts.push_back(&m.tokens);
        seq.chunk_ids.insert(seq.chunk_ids.end(), m.tokens.shape[0], m.chunk_id);
    }
    seq.tokens = ops::concat_rows(parts);
    return seq;
}

// Rotary attention logits between token rows; exposed directly so the
// relative-position properties can be tested at the logit level.
inline Tensor crope_logits(const Tensor& q, const Tensor& k,
                           const std::vector<std::int64_t>& ids_q,
                           const std::vector<std::int64_t>& ids_k, double base) {
    return ops::crope_logits(q, k, ids_q, ids_k, base);
}

// Causal aggregator over the concatenated chunk features. rope ids come
// from the materialized chunk ids (crope) or from raw token indices
// (standard). l_inter == 0 bypasses the stage entirely.
template <class E>
typename E::value aggregate_value(E& eng, typename E::value x,
                                  const std::vector<std::int64_t>& chunk_ids,
                                  const WeightsT<typename E::value>& w, const ModelConfig& cfg) {
    if (cfg.l_inter == 0) return x;
    if (cfg.l_inter > w.ifa.size()) {
        throw ConfigError("aggregate: l_inter=" + std::to_string(cfg.l_inter) + " but only " +
                          std::to_string(w.ifa.size()) + " aggregator layers available");
    }
    std::vector<std::int64_t> pos_ids;
    if (cfg.rope == RopeMode::crope) {
        pos_ids = chunk_ids;
    } else {
        pos_ids.resize(chunk_ids.size());
        std::iota(pos_ids.begin(), pos_ids.end(), 0);
    }
    for (std::size_t l = 0; l < cfg.l_inter; ++l) {
        x = transformer_layer(eng, x, w.ifa[l], cfg, ops::MaskKind::causal, &pos_ids,
                              cfg.attention_only);
    }
    return x;
}

inline TokenSequence aggregate(const TokenSequence& x, const EncoderWeights& w,
                               const ModelConfig& cfg) {
    x.validate();
    if (cfg.l_inter == 0) return x;
    EvalEngine eng;
    TokenSequence out;
    out.tokens = aggregate_value(eng, x.tokens, x.chunk_ids, w, cfg);
    out.chunk_ids = x.chunk_ids;
    return out;
}

// ------------------------------------------------------------- image mode

// A single image becomes a chunk of F identical frames; the aggregator
// sees each sub-image (and the thumbnail) as its own one-chunk sequence,
// so no attention crosses sub-image boundaries. The chunk id of each copy
// is assignable (replication hook); a lone chunk only produces delta = 0
// rotations, so outputs are id-independent.
inline Chunk image_to_chunk(const Tensor& image, const ModelConfig& cfg,
                            std::int64_t replication_id) {
    if (image.rank() != 3 || image.shape[2] != 3) {
        throw ShapeError("image_to_chunk: expected [H x W x 3], got " + image.shape_str());
    }
    Chunk c;
    const std::size_t elems = image.numel();
    c.frames = Tensor({cfg.f, image.shape[0], image.shape[1], 3});
    for (std::size_t t = 0; t < cfg.f; ++t) {
        std::copy(image.data.begin(), image.data.end(), c.frames.data.begin() + t * elems);
    }
    c.chunk_id = replication_id;
    c.first_timestamp = 0.0;
    return c;
}

// Splits the raw image into a cols x rows tile grid (integer boundaries).
inline std::vector<Tensor> split_subimages(const Tensor& image, const GridConfig& grid) {
    const std::size_t h = image.shape[0], w = image.shape[1];
    std::vector<Tensor> tiles;
    tiles.reserve(grid.cols * grid.rows);
    for (std::size_t r = 0; r < grid.rows; ++r) {
        const std::size_t y0 = r * h / grid.rows;
        const std::size_t y1 = (r + 1) * h / grid.rows;
        for (std::size_t c = 0; c < grid.cols; ++c) {
            const std::size_t x0 = c * w / grid.cols;
            const std::size_t x1 = (c + 1) * w / grid.cols;
            Tensor tile({y1 - y0, x1 - x0, 3});
            for (std::size_t y = y0; y < y1; ++y) {
                std::copy(image.data.begin() + (y * w + x0) * 3,
                          image.data.begin() + (y * w + x1) * 3,
                          tile.data.begin() + ((y - y0) * (x1 - x0)) * 3);
            }
            tiles.push_back(std::move(tile));
        }
    }
    return tiles;
}

// Encodes one image as aggregator-ready sequences: the thumbnail first,
// then sub-images in row-major order, each run through the IVE and the
// aggregator independently.
inline std::vector<TokenSequence> encode_image_set(const Tensor& image, const EncoderWeights& w,
                                                   const ModelConfig& cfg,
                                                   std::int64_t replication_id = 0) {
    if (image.rank() != 3 || image.shape[2] != 3) {
        throw ShapeError("encode_image_set: expected [H x W x 3], got " + image.shape_str());
    }
    const std::size_t h = image.shape[0], w_i = image.shape[1];
    const GridConfig grid = subimage_grid(w_i, h, cfg.r_v);

    std::vector<Tensor> inputs;
    inputs.push_back(image);  // thumbnail of the whole image
    if (grid.cols * grid.rows > 1) {
        for (Tensor& tile : split_subimages(image, grid)) inputs.push_back(std::move(tile));
    }

    std::vector<TokenSequence> out;
    out.reserve(inputs.size());
    for (const Tensor& input : inputs) {
        const ResizePlan plan =
            encoder_resize_plan(input.shape[1], input.shape[0], cfg.r_v, cfg.patch);
        const Tensor resized = resize_image(input, plan.target_h, plan.target_w);
        const Chunk chunk = image_to_chunk(resized, cfg, replication_id);
        const FeatureMap fm = encode_chunk(chunk, w, cfg);
        TokenSequence seq = concat_feature_maps({fm});
        out.push_back(aggregate(seq, w, cfg));
    }
    return out;
}

}  // namespace mgve
