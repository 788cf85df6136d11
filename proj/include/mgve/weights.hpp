#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "mgve/config.hpp"
#include "mgve/media.hpp"
#include "mgve/tensor.hpp"

namespace mgve {

// One pre-LN transformer block: attention + feed-forward.
template <class V>
struct TransformerLayerT {
    V ln1_gamma, ln1_beta;
    V wq, bq, wk, bk, wv, bv, wo, bo;
    V ln2_gamma, ln2_beta;
    V mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

// Every learnable parameter of the stack: 3D patch-conv kernels, the
// absolute position table, intra-chunk ViT blocks, aggregator blocks and
// the output projector. Templated so the same structure can hold either
// concrete tensors or tape variables.
template <class V>
struct WeightsT {
    V conv_kernel;  // [d_v x F x P x P x 3]
    V conv_bias;    // [d_v]
    V ape;          // [P_v x P_v x d_v]
    std::vector<TransformerLayerT<V>> vit;
    std::vector<TransformerLayerT<V>> ifa;
    V proj_w1, proj_b1, proj_w2, proj_b2;
};

using EncoderWeights = WeightsT<Tensor>;

// Replicates a 2D patch kernel F times along the temporal axis. Together
// with the 1/F normalization in the chunk embedding, a chunk of F
// identical frames then embeds exactly like the single image.
inline Tensor init_from_2d(const Tensor& kernel2d, std::size_t f) {
    if (kernel2d.rank() != 4 || kernel2d.shape[3] != 3) {
        throw ShapeError("init_from_2d: expected [d x P x P x 3], got " + kernel2d.shape_str());
    }
    if (f == 0) throw ConfigError("init_from_2d: f must be >= 1");
    const std::size_t d = kernel2d.shape[0], p = kernel2d.shape[1];
    const std::size_t slice = p * kernel2d.shape[2] * 3;
    Tensor out({d, f, p, kernel2d.shape[2], 3});
    for (std::size_t o = 0; o < d; ++o) {
        for (std::size_t t = 0; t < f; ++t) {
            std::copy(kernel2d.data.begin() + o * slice, kernel2d.data.begin() + (o + 1) * slice,
                      out.data.begin() + (o * f + t) * slice);
        }
    }
    return out;
}

namespace detail {

template <class V>
void for_each_layer_tensor(TransformerLayerT<V>& l, const std::string& prefix,
                           const std::function<void(const std::string&, V&)>& fn) {
    fn(prefix + ".ln1.gamma", l.ln1_gamma);
    fn(prefix + ".ln1.beta", l.ln1_beta);
    fn(prefix + ".attn.wq", l.wq);
    fn(prefix + ".attn.bq", l.bq);
    fn(prefix + ".attn.wk", l.wk);
    fn(prefix + ".attn.bk", l.bk);
    fn(prefix + ".attn.wv", l.wv);
    fn(prefix + ".attn.bv", l.bv);
    fn(prefix + ".attn.wo", l.wo);
    fn(prefix + ".attn.bo", l.bo);
    fn(prefix + ".ln2.gamma", l.ln2_gamma);
    fn(prefix + ".ln2.beta", l.ln2_beta);
    fn(prefix + ".mlp.w1", l.mlp_w1);
    fn(prefix + ".mlp.b1", l.mlp_b1);
    fn(prefix + ".mlp.w2", l.mlp_w2);
    fn(prefix + ".mlp.b2", l.mlp_b2);
}

}  // namespace detail

// Visits every tensor in canonical order with its canonical name. The
// same enumeration drives serialization, gradient checks and init, so the
// orders can never drift apart.
template <class V>
void for_each_tensor(WeightsT<V>& w, const std::function<void(const std::string&, V&)>& fn) {
    fn("conv.kernel", w.conv_kernel);
    fn("conv.bias", w.conv_bias);
    fn("ape", w.ape);
    for (std::size_t i = 0; i < w.vit.size(); ++i) {
        detail::for_each_layer_tensor(w.vit[i], "vit." + std::to_string(i), fn);
    }
    for (std::size_t i = 0; i < w.ifa.size(); ++i) {
        detail::for_each_layer_tensor(w.ifa[i], "ifa." + std::to_string(i), fn);
    }
    fn("proj.w1", w.proj_w1);
    fn("proj.b1", w.proj_b1);
    fn("proj.w2", w.proj_w2);
    fn("proj.b2", w.proj_b2);
}

namespace detail {

inline TransformerLayerT<Tensor> init_layer(std::size_t d, std::size_t hidden,
                                            std::mt19937_64& rng) {
    TransformerLayerT<Tensor> l;
    const double attn_std = 1.0 / std::sqrt(static_cast<double>(d));
    l.ln1_gamma = Tensor::full({d}, 1.0);
    l.ln1_beta = Tensor::zeros({d});
    l.wq = random_normal({d, d}, rng, 0.0, attn_std);
    l.bq = Tensor::zeros({d});
    l.wk = random_normal({d, d}, rng, 0.0, attn_std);
    l.bk = Tensor::zeros({d});
    l.wv = random_normal({d, d}, rng, 0.0, attn_std);
    l.bv = Tensor::zeros({d});
    l.wo = random_normal({d, d}, rng, 0.0, attn_std);
    l.bo = Tensor::zeros({d});
    l.ln2_gamma = Tensor::full({d}, 1.0);
    l.ln2_beta = Tensor::zeros({d});
    l.mlp_w1 = random_normal({d, hidden}, rng, 0.0, attn_std);
    l.mlp_b1 = Tensor::zeros({hidden});
    l.mlp_w2 = random_normal({hidden, d}, rng, 0.0, 1.0 / std::sqrt(static_cast<double>(hidden)));
    l.mlp_b2 = Tensor::zeros({d});
    return l;
}

}  // namespace detail

// Seeded random init. The 3D conv kernel is built by replicating a random
// 2D kernel along time, mirroring how pretrained 2D patch embeddings
// would be inflated.
inline EncoderWeights init_weights(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    std::mt19937_64 rng(seed);
    EncoderWeights w;
    const std::size_t fan_in = cfg.patch * cfg.patch * 3;
    Tensor kernel2d = random_normal({cfg.d_v, cfg.patch, cfg.patch, 3}, rng, 0.0,
                                    1.0 / std::sqrt(static_cast<double>(fan_in)));
    w.conv_kernel = init_from_2d(kernel2d, cfg.f);
    w.conv_bias = Tensor::zeros({cfg.d_v});
    w.ape = random_normal({cfg.ape_grid(), cfg.ape_grid(), cfg.d_v}, rng, 0.0, 0.02);
    const std::size_t hidden = cfg.d_v * cfg.mlp_ratio;
    for (std::size_t i = 0; i < cfg.l_vit; ++i) {
        w.vit.push_back(detail::init_layer(cfg.d_v, hidden, rng));
    }
    for (std::size_t i = 0; i < cfg.l_inter; ++i) {
        w.ifa.push_back(detail::init_layer(cfg.d_v, hidden, rng));
    }
    w.proj_w1 = random_normal({cfg.d_v, cfg.proj_hidden}, rng, 0.0,
                              1.0 / std::sqrt(static_cast<double>(cfg.d_v)));
    w.proj_b1 = Tensor::zeros({cfg.proj_hidden});
    w.proj_w2 = random_normal({cfg.proj_hidden, cfg.d_llm}, rng, 0.0,
                              1.0 / std::sqrt(static_cast<double>(cfg.proj_hidden)));
    w.proj_b2 = Tensor::zeros({cfg.d_llm});
    return w;
}

// Builds the weight skeleton (correct shapes, zero data) for a config;
// load_weights fills it and verifies every record against it.
inline EncoderWeights weights_skeleton(const ModelConfig& cfg) {
    EncoderWeights w = init_weights(cfg, 0);
    for_each_tensor<Tensor>(w, [](const std::string&, Tensor& t) {
        std::fill(t.data.begin(), t.data.end(), 0.0);
    });
    return w;
}

constexpr std::uint16_t kWeightsVersion = 1;

// MGVE weight file: magic "MGVE", u16 version, u32-length-prefixed
// key=value config text, then per-tensor records (u32 name length, name,
// u32 rank, u32 dims, f32 data LE) in canonical order.
inline void save_weights(EncoderWeights& w, const ModelConfig& cfg, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("save_weights: cannot open " + path);
    os.write("MGVE", 4);
    detail::write_u16(os, kWeightsVersion);
    const std::string cfg_text = kv_to_text(cfg.to_kv());
    detail::write_u32(os, static_cast<std::uint32_t>(cfg_text.size()));
    os.write(cfg_text.data(), static_cast<std::streamsize>(cfg_text.size()));
    for_each_tensor<Tensor>(w, [&os](const std::string& name, Tensor& t) {
        detail::write_u32(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail::write_u32(os, static_cast<std::uint32_t>(t.rank()));
        for (std::size_t e : t.shape) detail::write_u32(os, static_cast<std::uint32_t>(e));
        detail::write_f32_block(os, t.data);
    });
    if (!os) throw Error("save_weights: write failed for " + path);
}

struct LoadedWeights {
    ModelConfig config;
    EncoderWeights weights;
};

inline LoadedWeights load_weights(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("load_weights: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is) throw TruncationError("load_weights: truncated magic in " + path);
    if (std::memcmp(magic, "MGVE", 4) != 0) {
        throw FormatError("load_weights: bad magic in " + path);
    }
    const std::uint16_t version = detail::read_u16(is, "version");
    if (version != kWeightsVersion) {
        throw VersionError("load_weights: unsupported version " + std::to_string(version));
    }
    const std::uint32_t cfg_len = detail::read_u32(is, "config length");
    std::string cfg_text(cfg_len, '\0');
    is.read(cfg_text.data(), cfg_len);
    if (!is) throw TruncationError("load_weights: truncated config block in " + path);

    LoadedWeights out;
    out.config.apply_kv(parse_kv_text(cfg_text));
    out.weights = weights_skeleton(out.config);

    std::map<std::string, Tensor*> expected;
    for_each_tensor<Tensor>(out.weights,
                            [&expected](const std::string& name, Tensor& t) { expected[name] = &t; });
    std::map<std::string, bool> seen;
    while (true) {
        unsigned char len_bytes[4];
        is.read(reinterpret_cast<char*>(len_bytes), 4);
        if (is.eof() && is.gcount() == 0) break;
        if (!is || is.gcount() != 4) throw TruncationError("load_weights: truncated record header");
        const std::uint32_t name_len = static_cast<std::uint32_t>(len_bytes[0]) |
                                       (static_cast<std::uint32_t>(len_bytes[1]) << 8) |
                                       (static_cast<std::uint32_t>(len_bytes[2]) << 16) |
                                       (static_cast<std::uint32_t>(len_bytes[3]) << 24);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        if (!is) throw TruncationError("load_weights: truncated tensor name");
        const std::uint32_t rank = detail::read_u32(is, "tensor rank");
        if (rank > 8) throw FormatError("load_weights: implausible rank for " + name);
        Shape shape(rank);
        for (std::uint32_t i = 0; i < rank; ++i) {
            shape[i] = detail::read_u32(is, "tensor dims");
        }
        auto it = expected.find(name);
        if (it == expected.end()) {
            throw FormatError("load_weights: unexpected tensor '" + name + "'");
        }
        if (it->second->shape != shape) {
            throw FormatError("load_weights: tensor '" + name + "' has shape " +
                              shape_string(shape) + ", config implies " + it->second->shape_str());
        }
        detail::read_f32_block(is, it->second->data, name.c_str());
        seen[name] = true;
    }
    if (seen.size() != expected.size()) {
        for (const auto& [name, ptr] : expected) {
            (void)ptr;
            if (!seen.count(name)) {
                throw TruncationError("load_weights: missing tensor '" + name + "'");
            }
        }
    }
    return out;
}

}  // namespace mgve
