#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mgve/ops.hpp"
#include "mgve/tensor.hpp"

namespace mgve {

// Handle into a GradTape. Plain index; cheap to copy.
struct Var {
    int idx = -1;
    bool valid() const { return idx >= 0; }
};

// Reverse-mode tape. Nodes are appended in evaluation order, which is a
// topological order by construction: backward() walks it in reverse,
// replay() re-runs the recorded forward closures in insertion order.
// Replaying on identical leaf values reproduces every node bit for bit,
// since each forward closure is a pure deterministic kernel.
class GradTape {
public:
    struct Node {
        std::vector<int> parents;
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        bool is_leaf = false;
        // forward: recompute value from parent values (null for leaves)
        std::function<Tensor(const std::vector<const Tensor*>&)> forward;
        // backward: scatter self.grad into parent grads (null for leaves)
        std::function<void(const Node& self, const std::vector<const Tensor*>& pv,
                           const std::vector<Tensor*>& pg)>
            backward;
        std::string op;
    };

    Var leaf(Tensor value, bool requires_grad) {
        Node n;
        n.value = std::move(value);
        n.requires_grad = requires_grad;
        n.is_leaf = true;
        n.op = "leaf";
        nodes_.push_back(std::move(n));
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    Var push(std::string op, std::vector<int> parents,
             std::function<Tensor(const std::vector<const Tensor*>&)> forward,
             std::function<void(const Node&, const std::vector<const Tensor*>&,
                                const std::vector<Tensor*>&)>
                 backward) {
        Node n;
        n.parents = std::move(parents);
        n.op = std::move(op);
        n.forward = std::move(forward);
        n.backward = std::move(backward);
        for (int p : n.parents) n.requires_grad = n.requires_grad || nodes_[p].requires_grad;
        n.value = n.forward(parent_values(n.parents));
        nodes_.push_back(std::move(n));
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    const Tensor& value(Var v) const { return nodes_[v.idx].value; }
    const Tensor& grad(Var v) const { return nodes_[v.idx].grad; }
    std::size_t size() const { return nodes_.size(); }

    // in-place edit of a leaf, used by finite-difference probes
    Tensor& leaf_value(Var v) {
        if (!nodes_[v.idx].is_leaf) throw Error("GradTape: node is not a leaf");
        return nodes_[v.idx].value;
    }

    double scalar_output(Var v) const {
        const Tensor& t = nodes_[v.idx].value;
        if (t.numel() != 1) {
            throw ShapeError("GradTape: expected scalar output, got " + t.shape_str());
        }
        return t.data[0];
    }

    // Recomputes every non-leaf node from current leaf values.
    void replay() {
        for (Node& n : nodes_) {
            if (!n.is_leaf) n.value = n.forward(parent_values(n.parents));
        }
    }

    // Accumulates d(output)/d(node) for every node that requires grad.
    void backward(Var output) {
        Node& out = nodes_[output.idx];
        if (out.value.numel() != 1) {
            throw ShapeError("GradTape::backward: output must be scalar, got " +
                             out.value.shape_str());
        }
        for (Node& n : nodes_) {
            n.grad = n.requires_grad ? Tensor::zeros(n.value.shape) : Tensor();
        }
        if (!out.requires_grad) return;
        out.grad.data[0] = 1.0;
        for (int i = output.idx; i >= 0; --i) {
            Node& n = nodes_[i];
            if (n.is_leaf || !n.requires_grad || !n.backward) continue;
            std::vector<const Tensor*> pv = parent_values(n.parents);
            std::vector<Tensor*> pg(n.parents.size());
            for (std::size_t p = 0; p < n.parents.size(); ++p) {
                Node& parent = nodes_[n.parents[p]];
                pg[p] = parent.requires_grad ? &parent.grad : nullptr;
            }
            n.backward(n, pv, pg);
        }
    }

private:
    std::vector<Node> nodes_;

    std::vector<const Tensor*> parent_values(const std::vector<int>& parents) const {
        std::vector<const Tensor*> pv(parents.size());
        for (std::size_t i = 0; i < parents.size(); ++i) pv[i] = &nodes_[parents[i]].value;
        return pv;
    }
};

namespace detail {
inline void accumulate(Tensor* dst, const Tensor& delta) {
    if (!dst) return;
    for (std::size_t i = 0; i < dst->data.size(); ++i) dst->data[i] += delta.data[i];
}
}  // namespace detail

}  // namespace mgve
