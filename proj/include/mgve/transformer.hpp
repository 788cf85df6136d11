#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "mgve/config.hpp"
#include "mgve/engine.hpp"
#include "mgve/weights.hpp"

namespace mgve {

// Pre-LN transformer layer over token rows [N x d_v], written once for
// both engines. Attention is multi-head via column slices of the fused
// projections. When rope_ids is null the logits are plain scaled dot
// products (the intra-chunk ViT); with rope_ids the logits go through the
// rotary kernel, whose delta==0 fast path keeps same-id logits bitwise
// equal to the plain route.
//
// attention_only reduces the layer to softmax(SDP) * V per head (concat
// across heads): no output projection, residual or feed-forward.
template <class E>
typename E::value transformer_layer(E& eng, typename E::value x,
                                    const TransformerLayerT<typename E::value>& layer,
                                    const ModelConfig& cfg, ops::MaskKind mask,
                                    const std::vector<std::int64_t>* rope_ids,
                                    bool attention_only) {
    using value = typename E::value;
    const std::size_t dh = cfg.head_dim();
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

    // literal mode takes Q,K,V straight from the layer input
    value h = attention_only ? x : eng.layernorm(x, layer.ln1_gamma, layer.ln1_beta);
    value q = eng.add_bias(eng.matmul(h, layer.wq), layer.bq);
    value k = eng.add_bias(eng.matmul(h, layer.wk), layer.bk);
    value v = eng.add_bias(eng.matmul(h, layer.wv), layer.bv);

    std::vector<value> head_outputs;
    head_outputs.reserve(cfg.heads);
    for (std::size_t a = 0; a < cfg.heads; ++a) {
        value qh = eng.slice_cols(q, a * dh, dh);
        value kh = eng.slice_cols(k, a * dh, dh);
        value vh = eng.slice_cols(v, a * dh, dh);
        value logits = rope_ids
                           ? eng.crope_logits(qh, kh, *rope_ids, *rope_ids, cfg.rope_base)
                           : eng.matmul(qh, eng.transpose(kh));
        logits = eng.scale(logits, inv_sqrt_dh);
        value attn = eng.softmax(logits, mask);
        head_outputs.push_back(eng.matmul(attn, vh));
    }
    value o = eng.concat_cols(head_outputs);
    if (attention_only) return o;

    o = eng.add_bias(eng.matmul(o, layer.wo), layer.bo);
    x = eng.add(x, o);
    value m = eng.layernorm(x, layer.ln2_gamma, layer.ln2_beta);
    m = eng.add_bias(eng.matmul(m, layer.mlp_w1), layer.mlp_b1);
    m = eng.gelu(m);
    m = eng.add_bias(eng.matmul(m, layer.mlp_w2), layer.mlp_b2);
    return eng.add(x, m);
}

}  // namespace mgve
