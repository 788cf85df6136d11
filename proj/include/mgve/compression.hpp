#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "mgve/ifa.hpp"
#include "mgve/tensor.hpp"

namespace mgve {

inline double cosine_similarity(const double* a, const double* b, std::size_t d) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

struct MergeResult {
    TokenSequence sequence;
    double reduction = 0.0;   // 1 - out/in
    std::size_t merged = 0;   // tokens absorbed
};

// Merges tokens at corresponding indices of adjacent chunks when their
// cosine similarity exceeds the threshold. Merge decisions are taken
// between the ORIGINAL adjacent-chunk features; a run of positive
// decisions forms a chain whose survivor is the arithmetic mean of every
// absorbed token, placed at the earliest chunk's slot with that chunk's
// positional id. transitive=false caps chains at two chunks.
inline MergeResult merge_tokens(const TokenSequence& seq, std::size_t per_chunk, double threshold,
                                bool transitive = true) {
    seq.validate();
    if (per_chunk == 0) throw ConfigError("merge_tokens: per_chunk must be >= 1");
    const std::size_t n = seq.size();
    if (n % per_chunk != 0) {
        throw ValueError("merge_tokens: " + std::to_string(n) +
                         " tokens do not form whole chunks of " + std::to_string(per_chunk));
    }
    const std::size_t chunks = n / per_chunk;
    for (std::size_t c = 0; c < chunks; ++c) {
        const std::int64_t id = seq.chunk_ids[c * per_chunk];
        for (std::size_t p = 1; p < per_chunk; ++p) {
            if (seq.chunk_ids[c * per_chunk + p] != id) {
                throw ValueError("merge_tokens: non-uniform chunk sizes (id changes inside chunk " +
                                 std::to_string(c) + ")");
            }
        }
        if (c > 0 && seq.chunk_ids[(c - 1) * per_chunk] >= id) {
            throw ValueError("merge_tokens: chunk ids not increasing at chunk " +
                             std::to_string(c));
        }
    }

    MergeResult result;
    if (chunks == 1 || threshold > 1.0) {
        result.sequence = seq;
        return result;
    }

    const std::size_t d = seq.tokens.shape[1];
    // link[c][p]: merge decision between chunk c and c+1 at index p
    std::vector<std::vector<bool>> link(chunks - 1, std::vector<bool>(per_chunk, false));
    for (std::size_t c = 0; c + 1 < chunks; ++c) {
        for (std::size_t p = 0; p < per_chunk; ++p) {
            const double* a = &seq.tokens.data[(c * per_chunk + p) * d];
            const double* b = &seq.tokens.data[((c + 1) * per_chunk + p) * d];
            link[c][p] = cosine_similarity(a, b, d) > threshold;
        }
    }

    // chain heads and lengths per index column
    std::vector<std::vector<std::size_t>> absorbed_into(chunks,
                                                        std::vector<std::size_t>(per_chunk));
    std::vector<std::vector<bool>> is_head(chunks, std::vector<bool>(per_chunk, true));
    for (std::size_t p = 0; p < per_chunk; ++p) {
        std::size_t c = 0;
        while (c < chunks) {
            std::size_t end = c;
            while (end + 1 < chunks && link[end][p] &&
                   (transitive || end == c)) {
                ++end;
            }
            absorbed_into[c][p] = end;
            for (std::size_t a = c + 1; a <= end; ++a) is_head[a][p] = false;
            c = end + 1;
        }
    }

    std::size_t out_n = 0;
    for (std::size_t c = 0; c < chunks; ++c) {
        for (std::size_t p = 0; p < per_chunk; ++p) out_n += is_head[c][p] ? 1 : 0;
    }
    TokenSequence out;
    out.tokens = Tensor({out_n, d});
    out.chunk_ids.reserve(out_n);
    std::size_t row = 0;
    for (std::size_t c = 0; c < chunks; ++c) {
        for (std::size_t p = 0; p < per_chunk; ++p) {
            if (!is_head[c][p]) continue;
            const std::size_t end = absorbed_into[c][p];
            double* o = &out.tokens.data[row * d];
            if (end == c) {
                const double* s = &seq.tokens.data[(c * per_chunk + p) * d];
                std::copy(s, s + d, o);
            } else {
                const double inv = 1.0 / static_cast<double>(end - c + 1);
                for (std::size_t m = c; m <= end; ++m) {
                    const double* s = &seq.tokens.data[(m * per_chunk + p) * d];
                    for (std::size_t i = 0; i < d; ++i) o[i] += s[i];
                }
                for (std::size_t i = 0; i < d; ++i) o[i] *= inv;
                result.merged += end - c;
            }
            out.chunk_ids.push_back(seq.chunk_ids[c * per_chunk]);
            ++row;
        }
    }
    result.sequence = std::move(out);
    result.reduction = 1.0 - static_cast<double>(out_n) / static_cast<double>(n);
    return result;
}

struct SweepEntry {
    double target = 0.0;
    double threshold = 1.01;
    double achieved = 0.0;
    bool reachable = true;
};

// Binary-searches a similarity threshold per target reduction ratio.
// Reduction is a monotone step function of the threshold, so bisection
// converges onto the step closest to the target; targets further than 2%
// from any achievable step are reported as unreachable, not errors.
inline std::vector<SweepEntry> sweep_thresholds(const TokenSequence& seq, std::size_t per_chunk,
                                                const std::vector<double>& targets,
                                                double tolerance = 0.02) {
    std::vector<SweepEntry> out;
    out.reserve(targets.size());
    for (double target : targets) {
        if (target < 0.0 || target > 0.9) {
            throw ConfigError("sweep_thresholds: target " + std::to_string(target) +
                              " outside [0, 0.9]");
        }
        SweepEntry entry;
        entry.target = target;
        if (target == 0.0) {
            entry.threshold = 1.01;
            entry.achieved = 0.0;
            out.push_back(entry);
            continue;
        }
        double lo = -1.0, hi = 1.01;
        double best_diff = std::numeric_limits<double>::infinity();
        for (int iter = 0; iter < 60; ++iter) {
            const double mid = 0.5 * (lo + hi);
            const double achieved = merge_tokens(seq, per_chunk, mid).reduction;
            const double diff = std::abs(achieved - target);
            if (diff < best_diff) {
                best_diff = diff;
                entry.threshold = mid;
                entry.achieved = achieved;
            }
            if (achieved > target) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        entry.reachable = best_diff <= tolerance + 1e-12;
        out.push_back(entry);
    }
    return out;
}

}  // namespace mgve
