#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "mgve/ops.hpp"
#include "mgve/tape.hpp"
#include "mgve/tensor.hpp"

// The encoder pipeline is written once, templated on an engine. EvalEngine
// runs the kernels directly; TapeEngine records the same kernels on a
// GradTape so the identical wiring is differentiable. Both produce the
// same forward values because they call the same kernels in the same order.

namespace mgve {

struct EvalEngine {
    using value = Tensor;

    value leaf(const Tensor& t, bool /*requires_grad*/ = false) { return t; }
    const Tensor& tensor(const value& v) const { return v; }

    value matmul(const value& a, const value& b) { return ops::matmul(a, b); }
    value transpose(const value& x) { return ops::transpose(x); }
    value add(const value& a, const value& b) { return ops::add(a, b); }
    value scale(const value& x, double c) { return ops::scale(x, c); }
    value add_bias(const value& x, const value& b) { return ops::add_bias(x, b); }
    value gelu(const value& x) { return ops::gelu(x); }
    value layernorm(const value& x, const value& g, const value& b) {
        return ops::layernorm_rows(x, g, b);
    }
    value softmax(const value& x, ops::MaskKind kind) { return ops::softmax_rows(x, kind); }
    value slice_cols(const value& x, std::size_t j0, std::size_t n) {
        return ops::slice_cols(x, j0, n);
    }
    value concat_cols(const std::vector<value>& parts) {
        std::vector<const Tensor*> ps;
        ps.reserve(parts.size());
        for (const value& p : parts) ps.push_back(&p);
        return ops::concat_cols(ps);
    }
    value concat_rows(const std::vector<value>& parts) {
        std::vector<const Tensor*> ps;
        ps.reserve(parts.size());
        for (const value& p : parts) ps.push_back(&p);
        return ops::concat_rows(ps);
    }
    value conv3d_patch(const value& x, const value& k, const value& b) {
        return ops::conv3d_patch(x, k, b);
    }
    value crope_logits(const value& q, const value& k, const std::vector<std::int64_t>& ids_q,
                       const std::vector<std::int64_t>& ids_k, double base) {
        return ops::crope_logits(q, k, ids_q, ids_k, base);
    }
    value bilinear_resize(const value& src, std::size_t w, std::size_t h) {
        return ops::bilinear_resize_grid(src, w, h);
    }
    value grid_to_token_rows(const value& g) { return ops::grid_to_token_rows(g); }
    value avg_pool2x2(const value& x, std::size_t rows, std::size_t cols) {
        return ops::avg_pool2x2_grid(x, rows, cols);
    }
    value max_pool2x2(const value& x, std::size_t rows, std::size_t cols) {
        return ops::max_pool2x2_grid(x, rows, cols);
    }
    value sum_all(const value& x) { return ops::sum_all(x); }
};

struct TapeEngine {
    using value = Var;
    GradTape* tape = nullptr;

    explicit TapeEngine(GradTape& t) : tape(&t) {}

    value leaf(const Tensor& t, bool requires_grad = false) {
        return tape->leaf(t, requires_grad);
    }
    const Tensor& tensor(const value& v) const { return tape->value(v); }

    value matmul(value a, value b) {
        return tape->push(
            "matmul", {a.idx, b.idx},
            [](const std::vector<const Tensor*>& pv) { return ops::matmul(*pv[0], *pv[1]); },
            [](const GradTape::Node& self, const std::vector<const Tensor*>& pv,
               const std::vector<Tensor*>& pg) {
                if (pg[0]) detail::accumulate(pg[0], ops::matmul_grad_a(self.grad, *pv[1]));
                if (pg[1]) detail::accumulate(pg[1], ops::matmul_grad_b(*pv[0], self.grad));
            });
    }

    value transpose(value x) {
        return tape->push(
            "transpose", {x.idx},
            [](const std::vector<const Tensor*>& pv) { return ops::transpose(*pv[0]); },
            [](const GradTape::Node& self, const std::vector<const Tensor*>&,
               const std::vector<Tensor*>& pg) {
                if (pg[0]) detail::accumulate(pg[0], ops::transpose(self.grad));
            });
    }

    value add(value a, value b) {
        return tape->push(
            "add", {a.idx, b.idx},
            [](const std::vector<const Tensor*>& pv) { return ops::add(*pv[0], *pv[1]); },
            [](const GradTape::Node& self, const std::vector<const Tensor*>&,
               const std::vector<Tensor*>& pg) {
                if (pg[0]) detail::accumulate(pg[0], self.grad);
                if (pg[1]) detail::accumulate(pg[1], self.grad);
            });
    }

    value scale(value x, double c) {
        return tape->push(
            "scale", {x.idx},
            [c](const std::vector<const Tensor*>& pv) { return ops::scale(*pv[0], c); },
            [c](const GradTape::Node& self, const std::vector<const Tensor*>&,
                const std::vector<Tensor*>& pg) {
                if (pg[0]) detail::accumulate(pg[0], ops::scale(self.grad, c));
            });
    }

    value add_bias(value x, value b) {
        return tape->push(
            "add_bias", {x.idx, b.idx},
            [](const std::vector<const Tensor*>& pv) { return ops::add_bias(*pv[0], *pv[1]); },
            [](const GradTape::Node& self, const std::vector<const Tensor*>&,
               const std::vector<Tensor*>& pg) {
                if (pg[0]) detail::accumulate(pg[0], self.grad);
                if (pg[1]) detail::accumulate(pg[1], ops::column_sums(self.grad));
            });
    }

    value gelu(value x) {
        return tape->push(
            "gelu", {x.idx},
            [](const std::vector<const Tensor*>& pv) { return ops::gelu(*pv[0]); },
            [](const GradTape::Node& self, const std::vector<const Tensor*>& pv,
               const std::vector<Tensor*>& pg) {
                if (pg[0]) detail::accumulate(pg[0], ops::gelu_grad(self.grad, *pv[0]));
            });
    }

    value layernorm(value x, value g, value b) {
        return tape->push(
            "layernorm", {x.idx, g.idx, b.idx},
            [](const std::vector<const Tensor*>& pv) {
                return ops::layernorm_rows(*pv[0], *pv[1], *pv[2]);
            },
            [](const GradTape::Node& self, const std::vector<const Tensor*>& pv,
               const std::vector<Tensor*>& pg) {
                ops::LayerNormGrads gr = ops::layernorm_rows_grad(self.grad, *pv[0], *pv[1]);
                if (pg[0]) detail::accumulate(pg[0], gr.x);
                if (pg[1]) detail::accumulate(pg[1], gr.gamma);
                if (pg[2]) detail::accumulate(pg[2], gr.beta);
            });
    }

    value softmax(value x, ops::MaskKind kind) {
        return tape->push(
            "softmax", {x.idx},
            [kind](const std::vector<const Tensor*>& pv) {
                return ops::softmax_rows(*pv[0], kind);
            },
            [kind](const GradTape::Node& self, const std::vector<const Tensor*>&,
                   const std::vector<Tensor*>& pg) {
                if (pg[0]) {
                    detail::accumulate(pg[0], ops::softmax_rows_grad(self.grad, self.value, kind));
                }
            });
    }

    value slice_cols(value x, std::size_t j0, std::size_t n) {
        return tape->push(
            "slice_cols", {x.idx},
            [j0, n](const std::vector<const Tensor*>& pv) {
                return ops::slice_cols(*pv[0], j0, n);
            },
            [j0](const GradTape::Node& self, const std::vector<const Tensor*>& pv,
                 const std::vector<Tensor*>& pg) {
                if (pg[0]) {
                    detail::accumulate(pg[0], ops::slice_cols_grad(self.grad, pv[0]->shape, j0));
                }
            });
    }

    value concat_cols(const std::vector<value>& parts) {
        std::vector<int> parents;
        parents.reserve(parts.size());
        for (value p : parts) parents.push_back(p.idx);
        return tape->push(
            "concat_cols", std::move(parents),
            [](const std::vector<const Tensor*>& pv) { return ops::concat_cols(pv); },
            [](const GradTape::Node& self, const std::vector<const Tensor*>& pv,
               const std::vector<Tensor*>& pg) {
                std::size_t off = 0;
                for (std::size_t p = 0; p < pv.size(); ++p) {
                    const std::size_t w = pv[p]->shape[1];
                    if (pg[p]) {
                        detail::accumulate(pg[p], ops::slice_cols(self.grad, off, w));
                    }
                    off += w;
                }
            });
    }

    value concat_rows(const std::vector<value>& parts) {
        std::vector<int> parents;
        parents.reserve(parts.size());
        for (value p : parts) parents.push_back(p.idx);
        return tape->push(
            "concat_rows", std::move(parents),
            [](const std::vector<const Tensor*>& pv) { return ops::concat_rows(pv); },
            [](const GradTape::Node& self, const std::vector<const Tensor*>& pv,
               const std::vector<Tensor*>& pg) {
                std::size_t off = 0;
                for (std::size_t p = 0; p < pv.size(); ++p) {
                    const std::size_t rows = pv[p]->shape[0];
                    if (pg[p]) {
                        detail::accumulate(pg[p], ops::slice_rows(self.grad, off, rows));
                    }
                    off += rows;
                }
            });
    }

    value conv3d_patch(value x, value k, value b) {
        return tape->push(
            "conv3d_patch", {x.idx, k.idx, b.idx},
            [](const std::vector<const Tensor*>& pv) {
                return ops::conv3d_patch(*pv[0], *pv[1], *pv[2]);
            },
            [](const GradTape::Node& self, const std::vector<const Tensor*>& pv,
               const std::vector<Tensor*>& pg) {
                if (pg[0]) {
                    detail::accumulate(
                        pg[0], ops::conv3d_patch_grad_input(self.grad, *pv[1], pv[0]->shape));
                }
                if (pg[1]) {
                    detail::accumulate(
                        pg[1], ops::conv3d_patch_grad_kernel(self.grad, *pv[0], pv[1]->shape));
                }
                if (pg[2]) detail::accumulate(pg[2], ops::conv3d_patch_grad_bias(self.grad));
            });
    }

    value crope_logits(value q, value k, std::vector<std::int64_t> ids_q,
                       std::vector<std::int64_t> ids_k, double base) {
        return tape->push(
            "crope_logits", {q.idx, k.idx},
            [ids_q, ids_k, base](const std::vector<const Tensor*>& pv) {
                return ops::crope_logits(*pv[0], *pv[1], ids_q, ids_k, base);
            },
            [ids_q, ids_k, base](const GradTape::Node& self, const std::vector<const Tensor*>& pv,
                                 const std::vector<Tensor*>& pg) {
                ops::CropeGrads gr =
                    ops::crope_logits_grad(self.grad, *pv[0], *pv[1], ids_q, ids_k, base);
                if (pg[0]) detail::accumulate(pg[0], gr.q);
                if (pg[1]) detail::accumulate(pg[1], gr.k);
            });
    }

    value bilinear_resize(value src, std::size_t w, std::size_t h) {
        return tape->push(
            "bilinear_resize", {src.idx},
            [w, h](const std::vector<const Tensor*>& pv) {
                return ops::bilinear_resize_grid(*pv[0], w, h);
            },
            [](const GradTape::Node& self, const std::vector<const Tensor*>& pv,
               const std::vector<Tensor*>& pg) {
                if (pg[0]) {
                    detail::accumulate(pg[0],
                                       ops::bilinear_resize_grid_grad(self.grad, pv[0]->shape));
                }
            });
    }

    value grid_to_token_rows(value g) {
        return tape->push(
            "grid_to_token_rows", {g.idx},
            [](const std::vector<const Tensor*>& pv) { return ops::grid_to_token_rows(*pv[0]); },
            [](const GradTape::Node& self, const std::vector<const Tensor*>& pv,
               const std::vector<Tensor*>& pg) {
                if (pg[0]) {
                    detail::accumulate(pg[0],
                                       ops::grid_to_token_rows_grad(self.grad, pv[0]->shape));
                }
            });
    }

    value avg_pool2x2(value x, std::size_t rows, std::size_t cols) {
        return tape->push(
            "avg_pool2x2", {x.idx},
            [rows, cols](const std::vector<const Tensor*>& pv) {
                return ops::avg_pool2x2_grid(*pv[0], rows, cols);
            },
            [rows, cols](const GradTape::Node& self, const std::vector<const Tensor*>&,
                         const std::vector<Tensor*>& pg) {
                if (pg[0]) {
                    detail::accumulate(pg[0], ops::avg_pool2x2_grid_grad(self.grad, rows, cols));
                }
            });
    }

    value max_pool2x2(value x, std::size_t rows, std::size_t cols) {
        return tape->push(
            "max_pool2x2", {x.idx},
            [rows, cols](const std::vector<const Tensor*>& pv) {
                return ops::max_pool2x2_grid(*pv[0], rows, cols);
            },
            [rows, cols](const GradTape::Node& self, const std::vector<const Tensor*>& pv,
                         const std::vector<Tensor*>& pg) {
                if (pg[0]) {
                    detail::accumulate(pg[0],
                                       ops::max_pool2x2_grid_grad(self.grad, *pv[0], rows, cols));
                }
            });
    }

    value sum_all(value x) {
        return tape->push(
            "sum_all", {x.idx},
            [](const std::vector<const Tensor*>& pv) { return ops::sum_all(*pv[0]); },
            [](const GradTape::Node& self, const std::vector<const Tensor*>& pv,
               const std::vector<Tensor*>& pg) {
                if (pg[0]) {
                    detail::accumulate(pg[0], Tensor::full(pv[0]->shape, self.grad.data[0]));
                }
            });
    }
};

}  // namespace mgve
