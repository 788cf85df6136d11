#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "mgve/tensor.hpp"

// Dense kernels. Every differentiable forward op has matching gradient
// kernels next to it; the tape wires them together. All kernels are pure
// and single-threaded, so results are reproducible bit for bit.

namespace mgve::ops {

// ---------------------------------------------------------------- matmul

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2) {
        throw ShapeError("matmul: expected rank-2 operands, got " + a.shape_str() + " and " +
                         b.shape_str());
    }
    if (a.shape[1] != b.shape[0]) {
        throw ShapeError("matmul: inner extents mismatch: " + a.shape_str() + " vs " +
                         b.shape_str());
    }
    const std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t t = 0; t < k; ++t) acc += a.data[i * k + t] * b.data[t * n + j];
            out.data[i * n + j] = acc;
        }
    }
    return out;
}

inline Tensor transpose(const Tensor& x) {
    if (x.rank() != 2) throw ShapeError("transpose: expected rank-2, got " + x.shape_str());
    const std::size_t m = x.shape[0], n = x.shape[1];
    Tensor out({n, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out.data[j * m + i] = x.data[i * n + j];
    return out;
}

inline Tensor matmul_grad_a(const Tensor& g, const Tensor& b) { return matmul(g, transpose(b)); }
inline Tensor matmul_grad_b(const Tensor& a, const Tensor& g) { return matmul(transpose(a), g); }

// ------------------------------------------------------------ elementwise

inline Tensor add(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) {
        throw ShapeError("add: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    }
    Tensor out = a;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
    return out;
}

inline Tensor scale(const Tensor& x, double c) {
    Tensor out = x;
    for (double& v : out.data) v *= c;
    return out;
}

// x: [m x n], bias: [n], added to every row.
inline Tensor add_bias(const Tensor& x, const Tensor& bias) {
    if (x.rank() != 2 || bias.rank() != 1 || bias.shape[0] != x.shape[1]) {
        throw ShapeError("add_bias: incompatible shapes " + x.shape_str() + " and " +
                         bias.shape_str());
    }
    Tensor out = x;
    const std::size_t m = x.shape[0], n = x.shape[1];
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out.data[i * n + j] += bias.data[j];
    return out;
}

inline Tensor column_sums(const Tensor& g) {
    const std::size_t m = g.shape[0], n = g.shape[1];
    Tensor out({n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out.data[j] += g.data[i * n + j];
    return out;
}

inline Tensor sum_all(const Tensor& x) {
    double acc = 0.0;
    for (double v : x.data) acc += v;
    return Tensor::scalar(acc);
}

// ---------------------------------------------------------------- softmax

enum class MaskKind { none, causal, explicit_mask };

// Per-row softmax. Masked entries are exactly 0 in the output and are
// excluded from both the max shift and the normalization. `mask` is a
// row-major keep-bitmap (1 = attend), required iff kind == explicit_mask.
inline Tensor softmax_rows(const Tensor& x, MaskKind kind = MaskKind::none,
                           const std::vector<std::uint8_t>* mask = nullptr) {
    if (x.rank() != 2) throw ShapeError("softmax_rows: expected rank-2, got " + x.shape_str());
    const std::size_t m = x.shape[0], n = x.shape[1];
    if (kind == MaskKind::explicit_mask && (!mask || mask->size() != m * n)) {
        throw ShapeError("softmax_rows: mask bitmap does not cover " + x.shape_str());
    }
    auto keep = [&](std::size_t i, std::size_t j) {
        switch (kind) {
            case MaskKind::none: return true;
            case MaskKind::causal: return j <= i;
            default: return (*mask)[i * n + j] != 0;
        }
    };
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j)
            if (keep(i, j)) mx = std::max(mx, x.data[i * n + j]);
        if (!std::isfinite(mx)) {
            throw ValueError("softmax_rows: fully masked row " + std::to_string(i));
        }
        double denom = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (keep(i, j)) {
                const double e = std::exp(x.data[i * n + j] - mx);
                out.data[i * n + j] = e;
                denom += e;
            }
        }
        for (std::size_t j = 0; j < n; ++j)
            if (keep(i, j)) out.data[i * n + j] /= denom;
    }
    return out;
}

// Boolean-tensor mask form: nonzero entries attend.
inline Tensor softmax_rows(const Tensor& x, const Tensor& mask) {
    if (mask.shape != x.shape) {
        throw ShapeError("softmax_rows: mask " + mask.shape_str() + " does not match " +
                         x.shape_str());
    }
    std::vector<std::uint8_t> keep(mask.data.size());
    for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = mask.data[i] != 0.0 ? 1 : 0;
    return softmax_rows(x, MaskKind::explicit_mask, &keep);
}

// d(softmax)/dx given the forward output y: per row, g_x = y * (g - <g, y>).
inline Tensor softmax_rows_grad(const Tensor& g, const Tensor& y, MaskKind kind = MaskKind::none,
                                const std::vector<std::uint8_t>* mask = nullptr) {
    const std::size_t m = y.shape[0], n = y.shape[1];
    auto keep = [&](std::size_t i, std::size_t j) {
        switch (kind) {
            case MaskKind::none: return true;
            case MaskKind::causal: return j <= i;
            default: return (*mask)[i * n + j] != 0;
        }
    };
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j)
            if (keep(i, j)) dot += g.data[i * n + j] * y.data[i * n + j];
        for (std::size_t j = 0; j < n; ++j)
            if (keep(i, j)) out.data[i * n + j] = y.data[i * n + j] * (g.data[i * n + j] - dot);
    }
    return out;
}

// --------------------------------------------------------------- layernorm

constexpr double kLayerNormEps = 1e-6;

inline Tensor layernorm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                             double eps = kLayerNormEps) {
    if (x.rank() != 2 || gamma.shape != Shape{x.shape[1]} || beta.shape != Shape{x.shape[1]}) {
        throw ShapeError("layernorm_rows: incompatible shapes " + x.shape_str() + ", " +
                         gamma.shape_str() + ", " + beta.shape_str());
    }
    const std::size_t m = x.shape[0], n = x.shape[1];
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        double mean = 0.0;
        for (std::size_t j = 0; j < n; ++j) mean += x.data[i * n + j];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double d = x.data[i * n + j] - mean;
            var += d * d;
        }
        var /= static_cast<double>(n);
        const double inv = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < n; ++j) {
            out.data[i * n + j] =
                gamma.data[j] * ((x.data[i * n + j] - mean) * inv) + beta.data[j];
        }
    }
    return out;
}

struct LayerNormGrads {
    Tensor x, gamma, beta;
};

inline LayerNormGrads layernorm_rows_grad(const Tensor& g, const Tensor& x, const Tensor& gamma,
                                          double eps = kLayerNormEps) {
    const std::size_t m = x.shape[0], n = x.shape[1];
    LayerNormGrads out{Tensor({m, n}), Tensor({n}), Tensor({n})};
    for (std::size_t i = 0; i < m; ++i) {
        double mean = 0.0;
        for (std::size_t j = 0; j < n; ++j) mean += x.data[i * n + j];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double d = x.data[i * n + j] - mean;
            var += d * d;
        }
        var /= static_cast<double>(n);
        const double inv = 1.0 / std::sqrt(var + eps);

        // gh = dL/dxhat; reduce the two row sums, then distribute.
        double sum_gh = 0.0, sum_gh_xhat = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double xhat = (x.data[i * n + j] - mean) * inv;
            const double gh = g.data[i * n + j] * gamma.data[j];
            sum_gh += gh;
            sum_gh_xhat += gh * xhat;
            out.gamma.data[j] += g.data[i * n + j] * xhat;
            out.beta.data[j] += g.data[i * n + j];
        }
        for (std::size_t j = 0; j < n; ++j) {
            const double xhat = (x.data[i * n + j] - mean) * inv;
            const double gh = g.data[i * n + j] * gamma.data[j];
            out.x.data[i * n + j] =
                inv * (gh - (sum_gh + xhat * sum_gh_xhat) / static_cast<double>(n));
        }
    }
    return out;
}

// -------------------------------------------------------------------- gelu

// tanh approximation
inline double gelu_scalar(double x) {
    constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
    return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x)));
}

inline double gelu_grad_scalar(double x) {
    constexpr double c = 0.7978845608028654;
    const double u = c * (x + 0.044715 * x * x * x);
    const double t = std::tanh(u);
    const double du = c * (1.0 + 3.0 * 0.044715 * x * x);
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

inline Tensor gelu(const Tensor& x) {
    Tensor out = x;
    for (double& v : out.data) v = gelu_scalar(v);
    return out;
}

inline Tensor gelu_grad(const Tensor& g, const Tensor& x) {
    Tensor out = x;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = g.data[i] * gelu_grad_scalar(x.data[i]);
    }
    return out;
}

// ------------------------------------------------------------ 3D patch conv

// Non-overlapping spatio-temporal patch embedding. The temporal kernel
// depth equals the chunk length F with stride F, so each chunk collapses
// to a single temporal slice: one output row per spatial patch.
//   x:      [F x H x W x 3]
//   kernel: [d_v x F x P x P x 3]
//   bias:   [d_v]
//   out:    [(H/P)*(W/P) x d_v], patch rows in (row-major gy, gx) order
inline Tensor conv3d_patch(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
    if (x.rank() != 4 || x.shape[3] != 3) {
        throw ShapeError("conv3d_patch: input must be [F x H x W x 3], got " + x.shape_str());
    }
    if (kernel.rank() != 5 || kernel.shape[4] != 3) {
        throw ShapeError("conv3d_patch: kernel must be [d x F x P x P x 3], got " +
                         kernel.shape_str());
    }
    const std::size_t F = x.shape[0], H = x.shape[1], W = x.shape[2];
    const std::size_t d = kernel.shape[0], P = kernel.shape[2];
    if (kernel.shape[1] != F) {
        throw ShapeError("conv3d_patch: kernel temporal depth " + kernel.shape_str() +
                         " does not match chunk " + x.shape_str());
    }
    if (kernel.shape[3] != P) {
        throw ShapeError("conv3d_patch: non-square spatial kernel " + kernel.shape_str());
    }
    if (H % P != 0 || W % P != 0) {
        throw ShapeError("conv3d_patch: spatial extents of " + x.shape_str() +
                         " not divisible by patch size " + std::to_string(P));
    }
    if (bias.shape != Shape{d}) {
        throw ShapeError("conv3d_patch: bias " + bias.shape_str() + " does not match d=" +
                         std::to_string(d));
    }
    const std::size_t gh = H / P, gw = W / P;
    Tensor out({gh * gw, d});
    for (std::size_t gy = 0; gy < gh; ++gy) {
        for (std::size_t gx = 0; gx < gw; ++gx) {
            const std::size_t p = gy * gw + gx;
            for (std::size_t o = 0; o < d; ++o) {
                double acc = bias.data[o];
                for (std::size_t t = 0; t < F; ++t) {
                    for (std::size_t py = 0; py < P; ++py) {
                        const double* xr = &x.data[((t * H + gy * P + py) * W + gx * P) * 3];
                        const double* kr = &kernel.data[(((o * F + t) * P + py) * P) * 3];
                        for (std::size_t px = 0; px < P * 3; ++px) acc += xr[px] * kr[px];
                    }
                }
                out.data[p * d + o] = acc;
            }
        }
    }
    return out;
}

inline Tensor conv3d_patch_grad_kernel(const Tensor& g, const Tensor& x, const Shape& kshape) {
    const std::size_t F = x.shape[0], H = x.shape[1], W = x.shape[2];
    const std::size_t d = kshape[0], P = kshape[2];
    const std::size_t gh = H / P, gw = W / P;
    Tensor out(kshape);
    for (std::size_t gy = 0; gy < gh; ++gy) {
        for (std::size_t gx = 0; gx < gw; ++gx) {
            const std::size_t p = gy * gw + gx;
            for (std::size_t o = 0; o < d; ++o) {
                const double go = g.data[p * d + o];
                if (go == 0.0) continue;
                for (std::size_t t = 0; t < F; ++t) {
                    for (std::size_t py = 0; py < P; ++py) {
                        const double* xr = &x.data[((t * H + gy * P + py) * W + gx * P) * 3];
                        double* kr = &out.data[(((o * F + t) * P + py) * P) * 3];
                        for (std::size_t px = 0; px < P * 3; ++px) kr[px] += go * xr[px];
                    }
                }
            }
        }
    }
    return out;
}

inline Tensor conv3d_patch_grad_input(const Tensor& g, const Tensor& kernel, const Shape& xshape) {
    const std::size_t F = xshape[0], H = xshape[1], W = xshape[2];
    const std::size_t d = kernel.shape[0], P = kernel.shape[2];
    const std::size_t gh = H / P, gw = W / P;
    Tensor out(xshape);
    for (std::size_t gy = 0; gy < gh; ++gy) {
        for (std::size_t gx = 0; gx < gw; ++gx) {
            const std::size_t p = gy * gw + gx;
            for (std::size_t o = 0; o < d; ++o) {
                const double go = g.data[p * d + o];
                if (go == 0.0) continue;
                for (std::size_t t = 0; t < F; ++t) {
                    for (std::size_t py = 0; py < P; ++py) {
                        double* xr = &out.data[((t * H + gy * P + py) * W + gx * P) * 3];
                        const double* kr = &kernel.data[(((o * F + t) * P + py) * P) * 3];
                        for (std::size_t px = 0; px < P * 3; ++px) xr[px] += go * kr[px];
                    }
                }
            }
        }
    }
    return out;
}

inline Tensor conv3d_patch_grad_bias(const Tensor& g) { return column_sums(g); }

// ---------------------------------------------------------- rotary logits

// logit(i,j) = q_i . R_{delta} . k_j^T with delta = ids_q[i] - ids_k[j] and
// R_delta applying planar rotations by delta * theta_t, theta_t = base^(-2t/d).
// delta enters only through the id difference, so shifting every id by a
// constant reproduces the exact same arithmetic (bit-identical logits).
// delta == 0 short-circuits to the plain sequential dot product, which makes
// intra-chunk logits bitwise equal to matmul(q, k^T).
inline Tensor crope_logits(const Tensor& q, const Tensor& k, const std::vector<std::int64_t>& ids_q,
                           const std::vector<std::int64_t>& ids_k, double base) {
    if (q.rank() != 2 || k.rank() != 2 || q.shape[1] != k.shape[1]) {
        throw ShapeError("crope_logits: incompatible shapes " + q.shape_str() + " vs " +
                         k.shape_str());
    }
    const std::size_t n = q.shape[0], m = k.shape[0], d = q.shape[1];
    if (d % 2 != 0) {
        throw ConfigError("crope_logits: head dim " + std::to_string(d) + " must be even");
    }
    if (ids_q.size() != n || ids_k.size() != m) {
        throw ShapeError("crope_logits: id lists do not match " + q.shape_str() + " / " +
                         k.shape_str());
    }
    const std::size_t half = d / 2;
    std::vector<double> theta(half);
    for (std::size_t t = 0; t < half; ++t) {
        theta[t] = std::pow(base, -2.0 * static_cast<double>(t) / static_cast<double>(d));
    }
    Tensor out({n, m});
    for (std::size_t i = 0; i < n; ++i) {
        const double* qi = &q.data[i * d];
        for (std::size_t j = 0; j < m; ++j) {
            const double* kj = &k.data[j * d];
            const std::int64_t delta = ids_q[i] - ids_k[j];
            double acc = 0.0;
            if (delta == 0) {
                for (std::size_t t = 0; t < d; ++t) acc += qi[t] * kj[t];
            } else {
                for (std::size_t t = 0; t < half; ++t) {
                    const double ang = static_cast<double>(delta) * theta[t];
                    const double c = std::cos(ang), s = std::sin(ang);
                    const double q0 = qi[2 * t], q1 = qi[2 * t + 1];
                    const double k0 = kj[2 * t], k1 = kj[2 * t + 1];
                    acc += c * (q0 * k0 + q1 * k1) + s * (q1 * k0 - q0 * k1);
                }
            }
            out.data[i * m + j] = acc;
        }
    }
    return out;
}

struct CropeGrads {
    Tensor q, k;
};

inline CropeGrads crope_logits_grad(const Tensor& g, const Tensor& q, const Tensor& k,
                                    const std::vector<std::int64_t>& ids_q,
                                    const std::vector<std::int64_t>& ids_k, double base) {
    const std::size_t n = q.shape[0], m = k.shape[0], d = q.shape[1];
    const std::size_t half = d / 2;
    std::vector<double> theta(half);
    for (std::size_t t = 0; t < half; ++t) {
        theta[t] = std::pow(base, -2.0 * static_cast<double>(t) / static_cast<double>(d));
    }
    CropeGrads out{Tensor({n, d}), Tensor({m, d})};
    for (std::size_t i = 0; i < n; ++i) {
        const double* qi = &q.data[i * d];
        double* gqi = &out.q.data[i * d];
        for (std::size_t j = 0; j < m; ++j) {
            const double gij = g.data[i * m + j];
            if (gij == 0.0) continue;
            const double* kj = &k.data[j * d];
            double* gkj = &out.k.data[j * d];
            const std::int64_t delta = ids_q[i] - ids_k[j];
            for (std::size_t t = 0; t < half; ++t) {
                const double ang = static_cast<double>(delta) * theta[t];
                const double c = std::cos(ang), s = std::sin(ang);
                const double q0 = qi[2 * t], q1 = qi[2 * t + 1];
                const double k0 = kj[2 * t], k1 = kj[2 * t + 1];
                // logit term: c*(q0 k0 + q1 k1) + s*(q1 k0 - q0 k1)
                gqi[2 * t] += gij * (c * k0 - s * k1);
                gqi[2 * t + 1] += gij * (c * k1 + s * k0);
                gkj[2 * t] += gij * (c * q0 + s * q1);
                gkj[2 * t + 1] += gij * (c * q1 - s * q0);
            }
        }
    }
    return out;
}

// --------------------------------------------------------- bilinear resize

// src: [S_w x S_h x d] sampled at fractional indices (x*S_w/out_w, y*S_h/out_h)
// with edge clamping. Exact copy (bit-identical) when sizes match.
inline Tensor bilinear_resize_grid(const Tensor& src, std::size_t out_w, std::size_t out_h) {
    if (src.rank() != 3) {
        throw ShapeError("bilinear_resize_grid: expected [w x h x d], got " + src.shape_str());
    }
    const std::size_t sw = src.shape[0], sh = src.shape[1], d = src.shape[2];
    if (out_w == 0 || out_h == 0) throw ShapeError("bilinear_resize_grid: zero target extent");
    Tensor out({out_w, out_h, d});
    auto sample_axis = [](std::size_t idx, std::size_t out_n, std::size_t src_n, std::size_t& i0,
                          std::size_t& i1, double& w) {
        const double u = static_cast<double>(idx) * static_cast<double>(src_n) /
                         static_cast<double>(out_n);
        double fl = std::floor(u);
        if (fl > static_cast<double>(src_n - 1)) fl = static_cast<double>(src_n - 1);
        i0 = static_cast<std::size_t>(fl);
        i1 = std::min(i0 + 1, src_n - 1);
        w = u - fl;
        if (i1 == i0) w = 0.0;
    };
    for (std::size_t x = 0; x < out_w; ++x) {
        std::size_t x0, x1;
        double wx;
        sample_axis(x, out_w, sw, x0, x1, wx);
        for (std::size_t y = 0; y < out_h; ++y) {
            std::size_t y0, y1;
            double wy;
            sample_axis(y, out_h, sh, y0, y1, wy);
            double* o = &out.data[(x * out_h + y) * d];
            if (wx == 0.0 && wy == 0.0) {
                // exact lattice hit; copy to keep identity resizes bit-exact
                const double* s = &src.data[(x0 * sh + y0) * d];
                for (std::size_t c = 0; c < d; ++c) o[c] = s[c];
                continue;
            }
            const double* s00 = &src.data[(x0 * sh + y0) * d];
            const double* s01 = &src.data[(x0 * sh + y1) * d];
            const double* s10 = &src.data[(x1 * sh + y0) * d];
            const double* s11 = &src.data[(x1 * sh + y1) * d];
            for (std::size_t c = 0; c < d; ++c) {
                const double a = s00[c] * (1.0 - wy) + s01[c] * wy;
                const double b = s10[c] * (1.0 - wy) + s11[c] * wy;
                o[c] = a * (1.0 - wx) + b * wx;
            }
        }
    }
    return out;
}

inline Tensor bilinear_resize_grid_grad(const Tensor& g, const Shape& src_shape) {
    const std::size_t sw = src_shape[0], sh = src_shape[1], d = src_shape[2];
    const std::size_t out_w = g.shape[0], out_h = g.shape[1];
    Tensor out(src_shape);
    auto sample_axis = [](std::size_t idx, std::size_t out_n, std::size_t src_n, std::size_t& i0,
                          std::size_t& i1, double& w) {
        const double u = static_cast<double>(idx) * static_cast<double>(src_n) /
                         static_cast<double>(out_n);
        double fl = std::floor(u);
        if (fl > static_cast<double>(src_n - 1)) fl = static_cast<double>(src_n - 1);
        i0 = static_cast<std::size_t>(fl);
        i1 = std::min(i0 + 1, src_n - 1);
        w = u - fl;
        if (i1 == i0) w = 0.0;
    };
    for (std::size_t x = 0; x < out_w; ++x) {
        std::size_t x0, x1;
        double wx;
        sample_axis(x, out_w, sw, x0, x1, wx);
        for (std::size_t y = 0; y < out_h; ++y) {
            std::size_t y0, y1;
            double wy;
            sample_axis(y, out_h, sh, y0, y1, wy);
            const double* go = &g.data[(x * out_h + y) * d];
            double* s00 = &out.data[(x0 * sh + y0) * d];
            double* s01 = &out.data[(x0 * sh + y1) * d];
            double* s10 = &out.data[(x1 * sh + y0) * d];
            double* s11 = &out.data[(x1 * sh + y1) * d];
            for (std::size_t c = 0; c < d; ++c) {
                s00[c] += go[c] * (1.0 - wx) * (1.0 - wy);
                s01[c] += go[c] * (1.0 - wx) * wy;
                s10[c] += go[c] * wx * (1.0 - wy);
                s11[c] += go[c] * wx * wy;
            }
        }
    }
    return out;
}

// ----------------------------------------------------------------- pooling

// x holds a (rows x cols) token grid flattened row-major into [rows*cols x d].
inline Tensor avg_pool2x2_grid(const Tensor& x, std::size_t rows, std::size_t cols) {
    if (x.rank() != 2 || x.shape[0] != rows * cols) {
        throw ShapeError("avg_pool2x2_grid: token count " + x.shape_str() +
                         " does not match grid " + std::to_string(rows) + "x" +
                         std::to_string(cols));
    }
    if (rows % 2 != 0 || cols % 2 != 0) {
        throw ShapeError("avg_pool2x2_grid: odd grid " + std::to_string(rows) + "x" +
                         std::to_string(cols));
    }
    const std::size_t d = x.shape[1], orows = rows / 2, ocols = cols / 2;
    Tensor out({orows * ocols, d});
    for (std::size_t oy = 0; oy < orows; ++oy) {
        for (std::size_t ox = 0; ox < ocols; ++ox) {
            double* o = &out.data[(oy * ocols + ox) * d];
            for (std::size_t dy = 0; dy < 2; ++dy) {
                const double* r0 = &x.data[((2 * oy + dy) * cols + 2 * ox) * d];
                for (std::size_t c = 0; c < d; ++c) o[c] += 0.25 * (r0[c] + r0[d + c]);
            }
        }
    }
    return out;
}

inline Tensor avg_pool2x2_grid_grad(const Tensor& g, std::size_t rows, std::size_t cols) {
    const std::size_t d = g.shape[1], orows = rows / 2, ocols = cols / 2;
    Tensor out({rows * cols, d});
    for (std::size_t oy = 0; oy < orows; ++oy) {
        for (std::size_t ox = 0; ox < ocols; ++ox) {
            const double* go = &g.data[(oy * ocols + ox) * d];
            for (std::size_t dy = 0; dy < 2; ++dy) {
                double* r0 = &out.data[((2 * oy + dy) * cols + 2 * ox) * d];
                for (std::size_t c = 0; c < d; ++c) {
                    r0[c] += 0.25 * go[c];
                    r0[d + c] += 0.25 * go[c];
                }
            }
        }
    }
    return out;
}

inline Tensor max_pool2x2_grid(const Tensor& x, std::size_t rows, std::size_t cols) {
    if (x.rank() != 2 || x.shape[0] != rows * cols || rows % 2 != 0 || cols % 2 != 0) {
        throw ShapeError("max_pool2x2_grid: bad grid for " + x.shape_str());
    }
    const std::size_t d = x.shape[1], orows = rows / 2, ocols = cols / 2;
    Tensor out({orows * ocols, d});
    for (std::size_t oy = 0; oy < orows; ++oy) {
        for (std::size_t ox = 0; ox < ocols; ++ox) {
            double* o = &out.data[(oy * ocols + ox) * d];
            for (std::size_t c = 0; c < d; ++c) {
                double m = -std::numeric_limits<double>::infinity();
                for (std::size_t dy = 0; dy < 2; ++dy)
                    for (std::size_t dx = 0; dx < 2; ++dx)
                        m = std::max(m, x.data[((2 * oy + dy) * cols + 2 * ox + dx) * d + c]);
                o[c] = m;
            }
        }
    }
    return out;
}

inline Tensor max_pool2x2_grid_grad(const Tensor& g, const Tensor& x, std::size_t rows,
                                    std::size_t cols) {
    const std::size_t d = g.shape[1], orows = rows / 2, ocols = cols / 2;
    Tensor out({rows * cols, d});
    for (std::size_t oy = 0; oy < orows; ++oy) {
        for (std::size_t ox = 0; ox < ocols; ++ox) {
            const double* go = &g.data[(oy * ocols + ox) * d];
            for (std::size_t c = 0; c < d; ++c) {
                std::size_t best = 0;
                double m = -std::numeric_limits<double>::infinity();
                for (std::size_t dy = 0; dy < 2; ++dy) {
                    for (std::size_t dx = 0; dx < 2; ++dx) {
                        const std::size_t idx = ((2 * oy + dy) * cols + 2 * ox + dx) * d + c;
                        if (x.data[idx] > m) {
                            m = x.data[idx];
                            best = idx;
                        }
                    }
                }
                out.data[best] += go[c];
            }
        }
    }
    return out;
}

// ------------------------------------------------------------ slice/concat

inline Tensor slice_cols(const Tensor& x, std::size_t j0, std::size_t count) {
    if (x.rank() != 2 || j0 + count > x.shape[1]) {
        throw ShapeError("slice_cols: [" + std::to_string(j0) + ", " + std::to_string(j0 + count) +
                         ") out of range for " + x.shape_str());
    }
    const std::size_t m = x.shape[0], n = x.shape[1];
    Tensor out({m, count});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < count; ++j) out.data[i * count + j] = x.data[i * n + j0 + j];
    return out;
}

inline Tensor slice_cols_grad(const Tensor& g, const Shape& xshape, std::size_t j0) {
    const std::size_t m = xshape[0], n = xshape[1], count = g.shape[1];
    Tensor out(xshape);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < count; ++j) out.data[i * n + j0 + j] = g.data[i * count + j];
    return out;
}

inline Tensor concat_cols(const std::vector<const Tensor*>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no parts");
    const std::size_t m = parts[0]->shape[0];
    std::size_t n = 0;
    for (const Tensor* p : parts) {
        if (p->rank() != 2 || p->shape[0] != m) {
            throw ShapeError("concat_cols: row mismatch at " + p->shape_str());
        }
        n += p->shape[1];
    }
    Tensor out({m, n});
    std::size_t off = 0;
    for (const Tensor* p : parts) {
        const std::size_t pn = p->shape[1];
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < pn; ++j) out.data[i * n + off + j] = p->data[i * pn + j];
        off += pn;
    }
    return out;
}

inline Tensor slice_rows(const Tensor& x, std::size_t i0, std::size_t count) {
    if (x.rank() != 2 || i0 + count > x.shape[0]) {
        throw ShapeError("slice_rows: [" + std::to_string(i0) + ", " + std::to_string(i0 + count) +
                         ") out of range for " + x.shape_str());
    }
    const std::size_t n = x.shape[1];
    Tensor out({count, n});
    std::copy(x.data.begin() + i0 * n, x.data.begin() + (i0 + count) * n, out.data.begin());
    return out;
}

// Rows are stacked: parts with equal column counts, concatenated along rows.
inline Tensor concat_rows(const std::vector<const Tensor*>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no parts");
    const std::size_t n = parts[0]->shape.size() < 2 ? 1 : parts[0]->shape[1];
    std::size_t m = 0;
    for (const Tensor* p : parts) {
        if (p->rank() != 2 || p->shape[1] != n) {
            throw ShapeError("concat_rows: column mismatch at " + p->shape_str());
        }
        m += p->shape[0];
    }
    Tensor out({m, n});
    std::size_t off = 0;
    for (const Tensor* p : parts) {
        std::copy(p->data.begin(), p->data.end(), out.data.begin() + off);
        off += p->data.size();
    }
    return out;
}

// Positional grid [P_W x P_H x d] -> token rows [P_H*P_W x d], token
// (y * P_W + x) taking grid entry (x, y). Matches the patch row order
// produced by conv3d_patch.
inline Tensor grid_to_token_rows(const Tensor& grid) {
    if (grid.rank() != 3) {
        throw ShapeError("grid_to_token_rows: expected [w x h x d], got " + grid.shape_str());
    }
    const std::size_t w = grid.shape[0], h = grid.shape[1], d = grid.shape[2];
    Tensor out({w * h, d});
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < d; ++c)
                out.data[(y * w + x) * d + c] = grid.data[(x * h + y) * d + c];
    return out;
}

inline Tensor grid_to_token_rows_grad(const Tensor& g, const Shape& grid_shape) {
    const std::size_t w = grid_shape[0], h = grid_shape[1], d = grid_shape[2];
    Tensor out(grid_shape);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < d; ++c)
                out.data[(x * h + y) * d + c] = g.data[(y * w + x) * d + c];
    return out;
}

}  // namespace mgve::ops
