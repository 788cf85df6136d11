#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "mgve/config.hpp"
#include "mgve/engine.hpp"
#include "mgve/ifa.hpp"
#include "mgve/weights.hpp"

namespace mgve {

// Visual tokens in the language-model embedding dimension; chunk ids are
// carried through untouched.
struct ProjectedTokens {
    Tensor tokens;  // [N x d_llm]
    std::vector<std::int64_t> chunk_ids;

    std::size_t size() const { return chunk_ids.size(); }
};

template <class E>
typename E::value project_value(E& eng, typename E::value x,
                                const WeightsT<typename E::value>& w) {
    auto h = eng.add_bias(eng.matmul(x, w.proj_w1), w.proj_b1);
    h = eng.gelu(h);
    return eng.add_bias(eng.matmul(h, w.proj_w2), w.proj_b2);
}

inline ProjectedTokens project(const TokenSequence& x, const EncoderWeights& w,
                               const ModelConfig& cfg) {
    x.validate();
    if (!x.tokens.shape.empty() && x.tokens.shape[1] != cfg.d_v) {
        throw ShapeError("project: token dim " + x.tokens.shape_str() + " does not match d_v=" +
                         std::to_string(cfg.d_v));
    }
    EvalEngine eng;
    ProjectedTokens out;
    out.tokens = project_value(eng, x.tokens, w);
    out.chunk_ids = x.chunk_ids;
    return out;
}

// MGVT token file: magic "MGVT", u32 N, u32 d_llm, u32 chunk_ids[N],
// f32 tokens row-major.
inline void save_tokens(const ProjectedTokens& t, const std::string& path) {
    if (t.tokens.rank() != 2 || t.tokens.shape[0] != t.chunk_ids.size()) {
        throw ShapeError("save_tokens: inconsistent token block " + t.tokens.shape_str());
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("save_tokens: cannot open " + path);
    os.write("MGVT", 4);
    detail::write_u32(os, static_cast<std::uint32_t>(t.tokens.shape[0]));
    detail::write_u32(os, static_cast<std::uint32_t>(t.tokens.shape[1]));
    for (std::int64_t id : t.chunk_ids) {
        if (id < 0) throw ValueError("save_tokens: negative chunk id");
        detail::write_u32(os, static_cast<std::uint32_t>(id));
    }
    detail::write_f32_block(os, t.tokens.data);
    if (!os) throw Error("save_tokens: write failed for " + path);
}

inline ProjectedTokens load_tokens(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("load_tokens: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is) throw TruncationError("load_tokens: truncated magic in " + path);
    if (std::memcmp(magic, "MGVT", 4) != 0) {
        throw FormatError("load_tokens: bad magic in " + path);
    }
    const std::uint32_t n = detail::read_u32(is, "token count");
    const std::uint32_t d = detail::read_u32(is, "token dim");
    if (n == 0 || d == 0) throw FormatError("load_tokens: empty token block in " + path);
    ProjectedTokens out;
    out.chunk_ids.resize(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        out.chunk_ids[i] = static_cast<std::int64_t>(detail::read_u32(is, "chunk ids"));
    }
    out.tokens = Tensor({n, d});
    detail::read_f32_block(is, out.tokens.data, "token data");
    return out;
}

}  // namespace mgve
