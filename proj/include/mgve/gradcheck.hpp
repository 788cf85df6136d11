#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <unordered_set>
#include <vector>

#include "mgve/engine.hpp"
#include "mgve/tape.hpp"
#include "mgve/tensor.hpp"
#include "mgve/weights.hpp"

namespace mgve {

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::size_t samples = 0;
    std::size_t coordinates = 0;  // total coordinate space the samples came from
};

// Compares reverse-mode gradients against central finite differences.
// The analytic side records the program once and runs backward; the
// numeric side perturbs one leaf coordinate and replays the recorded
// forward closures, which re-executes the identical kernels. Per-probe
// error is |analytic - cd| / max(1, |cd|).
//
// BuildFn: (TapeEngine&, const std::vector<Var>& leaves) -> Var (scalar).
template <class BuildFn>
GradCheckReport grad_check_leaves(std::vector<Tensor*> leaves, BuildFn build, double h = 1e-5,
                                  std::size_t max_samples = 200, std::uint64_t seed = 0) {
    if (!(h >= 1e-6 && h <= 1e-4)) {
        throw ConfigError("grad_check: step h must lie in [1e-6, 1e-4]");
    }
    GradTape tape;
    TapeEngine eng(tape);
    std::vector<Var> vars;
    vars.reserve(leaves.size());
    for (Tensor* t : leaves) vars.push_back(eng.leaf(*t, /*requires_grad=*/true));
    Var out = build(eng, vars);
    if (tape.value(out).numel() != 1) {
        throw ShapeError("grad_check: program output must be scalar, got " +
                         tape.value(out).shape_str());
    }
    if (!std::isfinite(tape.scalar_output(out))) {
        throw ValueError("grad_check: non-finite evaluation at the base point");
    }
    tape.backward(out);

    std::vector<Tensor> analytic;
    analytic.reserve(vars.size());
    for (Var v : vars) analytic.push_back(tape.grad(v));

    std::size_t total = 0;
    std::vector<std::size_t> offsets(leaves.size() + 1, 0);
    for (std::size_t i = 0; i < leaves.size(); ++i) {
        total += leaves[i]->numel();
        offsets[i + 1] = total;
    }

    std::vector<std::size_t> picks;
    if (total <= max_samples) {
        picks.resize(total);
        for (std::size_t i = 0; i < total; ++i) picks[i] = i;
    } else {
        std::mt19937_64 rng(seed);
        std::uniform_int_distribution<std::size_t> dist(0, total - 1);
        std::unordered_set<std::size_t> chosen;
        while (chosen.size() < max_samples) chosen.insert(dist(rng));
        picks.assign(chosen.begin(), chosen.end());
        std::sort(picks.begin(), picks.end());
    }

    GradCheckReport report;
    report.coordinates = total;
    for (std::size_t global : picks) {
        const std::size_t leaf_i =
            static_cast<std::size_t>(std::upper_bound(offsets.begin(), offsets.end(), global) -
                                     offsets.begin()) -
            1;
        const std::size_t idx = global - offsets[leaf_i];
        Tensor& leaf = tape.leaf_value(vars[leaf_i]);
        const double orig = leaf.data[idx];

        leaf.data[idx] = orig + h;
        tape.replay();
        const double f_plus = tape.scalar_output(out);
        leaf.data[idx] = orig - h;
        tape.replay();
        const double f_minus = tape.scalar_output(out);
        leaf.data[idx] = orig;

        if (!std::isfinite(f_plus) || !std::isfinite(f_minus)) {
            throw ValueError("grad_check: non-finite evaluation while probing");
        }
        const double cd = (f_plus - f_minus) / (2.0 * h);
        const double err =
            std::abs(analytic[leaf_i].data[idx] - cd) / std::max(1.0, std::abs(cd));
        report.max_rel_err = std::max(report.max_rel_err, err);
        report.samples += 1;
    }
    tape.replay();  // leave the tape consistent with the restored leaves
    return report;
}

// Tape-side mirror of the weight struct.
using WeightVars = WeightsT<Var>;

inline WeightVars wrap_weights(TapeEngine& eng, EncoderWeights& w, bool requires_grad = true) {
    WeightVars out;
    out.vit.resize(w.vit.size());
    out.ifa.resize(w.ifa.size());
    std::vector<Var*> slots;
    for_each_tensor<Var>(out, [&slots](const std::string&, Var& v) { slots.push_back(&v); });
    std::vector<Tensor*> tensors;
    for_each_tensor<Tensor>(w, [&tensors](const std::string&, Tensor& t) { tensors.push_back(&t); });
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        *slots[i] = eng.leaf(*tensors[i], requires_grad);
    }
    return out;
}

// Gradient check of a scalar function of the encoder weights; coordinates
// are sampled uniformly across every weight tensor.
//
// BuildFn: (TapeEngine&, WeightVars&) -> Var (scalar).
template <class BuildFn>
GradCheckReport grad_check(EncoderWeights& w, BuildFn build, double h = 1e-5,
                           std::size_t max_samples = 200, std::uint64_t seed = 0) {
    std::vector<Tensor*> leaves;
    for_each_tensor<Tensor>(w, [&leaves](const std::string&, Tensor& t) { leaves.push_back(&t); });
    return grad_check_leaves(
        leaves,
        [&](TapeEngine& eng, const std::vector<Var>& vars) {
            WeightVars wv;
            wv.vit.resize(w.vit.size());
            wv.ifa.resize(w.ifa.size());
            std::vector<Var*> slots;
            for_each_tensor<Var>(wv, [&slots](const std::string&, Var& v) { slots.push_back(&v); });
            for (std::size_t i = 0; i < vars.size(); ++i) *slots[i] = vars[i];
            return build(eng, wv);
        },
        h, max_samples, seed);
}

}  // namespace mgve
