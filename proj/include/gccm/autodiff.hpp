#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "gccm/tensor.hpp"

namespace gccm::ad {

// Reverse-mode autodiff over dense matrices. Each operation eagerly computes
// its forward value and records a closure that scatters the node's gradient
// into its parents. A Var is a shared handle to one node; graphs are plain
// DAGs of shared_ptrs rooted at the last result.
//
// One graph is confined to one thread. Leaves (parameters) may be shared by
// many graphs over time; their gradients accumulate until zeroed.

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
    Tensor value;
    Tensor grad;  // same shape as value, zero until backward
    bool requires_grad = false;
    bool backward_done = false;  // set on a node used as backward root
    std::vector<NodePtr> parents;
    std::function<void(Node&)> backward_fn;  // null for leaves
};

class Var {
  public:
    Var() = default;

    static Var leaf(Tensor value, bool requires_grad = false) {
        auto n = std::make_shared<Node>();
        n->grad = Tensor(value.rows(), value.cols(), 0.0);
        n->value = std::move(value);
        n->requires_grad = requires_grad;
        return Var(std::move(n));
    }

    bool valid() const { return node_ != nullptr; }
    const Tensor& value() const { return node_->value; }
    Tensor& mutable_value() { return node_->value; }  // in-place parameter updates
    const Tensor& grad() const { return node_->grad; }
    bool requires_grad() const { return node_->requires_grad; }
    void zero_grad() { node_->grad = Tensor(node_->value.rows(), node_->value.cols(), 0.0); }
    Node* raw() const { return node_.get(); }
    const NodePtr& node() const { return node_; }

    explicit Var(NodePtr n) : node_(std::move(n)) {}

  private:
    NodePtr node_;
};

namespace detail {

inline Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward_fn) {
    auto n = std::make_shared<Node>();
    n->grad = Tensor(value.rows(), value.cols(), 0.0);
    n->value = std::move(value);
    for (auto& p : parents) {
        n->requires_grad = n->requires_grad || p.requires_grad();
        n->parents.push_back(p.node());
    }
    if (n->requires_grad) n->backward_fn = std::move(backward_fn);
    return Var(std::move(n));
}

inline void accumulate(Node& target, const Tensor& delta) {
    for (std::size_t k = 0; k < delta.size(); ++k) target.grad[k] += delta[k];
}

[[noreturn]] inline void shape_error(const char* op, const Tensor& a, const Tensor& b) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch (" + a.shape() + " vs " + b.shape() + ")");
}

// True when b may be broadcast row-wise over a (b is 1xC, a is nxC).
inline bool row_broadcastable(const Tensor& a, const Tensor& b) {
    return b.rows() == 1 && b.cols() == a.cols() && a.rows() >= 1;
}

inline Tensor colsum(const Tensor& g) {
    Tensor s(1, g.cols(), 0.0);
    for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) s(0, j) += g(i, j);
    return s;
}

}  // namespace detail

inline Var matmul(const Var& a, const Var& b) {
    if (a.value().cols() != b.value().rows()) detail::shape_error("matmul", a.value(), b.value());
    Tensor out = gccm::matmul(a.value(), b.value());
    return detail::make_op(std::move(out), {a, b}, [](Node& n) {
        Node& pa = *n.parents[0];
        Node& pb = *n.parents[1];
        if (pa.requires_grad) detail::accumulate(pa, gccm::matmul(n.grad, gccm::transpose(pb.value)));
        if (pb.requires_grad) detail::accumulate(pb, gccm::matmul(gccm::transpose(pa.value), n.grad));
    });
}

inline Var transpose(const Var& a) {
    return detail::make_op(gccm::transpose(a.value()), {a}, [](Node& n) {
        Node& pa = *n.parents[0];
        if (pa.requires_grad) detail::accumulate(pa, gccm::transpose(n.grad));
    });
}

// Elementwise add; b may be a 1xC row broadcast over a's rows.
inline Var add(const Var& a, const Var& b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    const bool bcast = !av.same_shape(bv);
    if (bcast && !detail::row_broadcastable(av, bv)) detail::shape_error("add", av, bv);
    Tensor out = av;
    for (std::size_t i = 0; i < out.rows(); ++i)
        for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += bcast ? bv(0, j) : bv(i, j);
    return detail::make_op(std::move(out), {a, b}, [bcast](Node& n) {
        Node& pa = *n.parents[0];
        Node& pb = *n.parents[1];
        if (pa.requires_grad) detail::accumulate(pa, n.grad);
        if (pb.requires_grad) detail::accumulate(pb, bcast ? detail::colsum(n.grad) : n.grad);
    });
}

// Elementwise multiply; b may be a 1xC row broadcast over a's rows.
inline Var mul(const Var& a, const Var& b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    const bool bcast = !av.same_shape(bv);
    if (bcast && !detail::row_broadcastable(av, bv)) detail::shape_error("mul", av, bv);
    Tensor out = av;
    for (std::size_t i = 0; i < out.rows(); ++i)
        for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) *= bcast ? bv(0, j) : bv(i, j);
    return detail::make_op(std::move(out), {a, b}, [bcast](Node& n) {
        Node& pa = *n.parents[0];
        Node& pb = *n.parents[1];
        if (pa.requires_grad) {
            Tensor da(n.grad.rows(), n.grad.cols());
            for (std::size_t i = 0; i < da.rows(); ++i)
                for (std::size_t j = 0; j < da.cols(); ++j)
                    da(i, j) = n.grad(i, j) * (bcast ? pb.value(0, j) : pb.value(i, j));
            detail::accumulate(pa, da);
        }
        if (pb.requires_grad) {
            Tensor prod(n.grad.rows(), n.grad.cols());
            for (std::size_t i = 0; i < prod.rows(); ++i)
                for (std::size_t j = 0; j < prod.cols(); ++j) prod(i, j) = n.grad(i, j) * pa.value(i, j);
            detail::accumulate(pb, bcast ? detail::colsum(prod) : prod);
        }
    });
}

inline Var sub(const Var& a, const Var& b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (!av.same_shape(bv)) detail::shape_error("sub", av, bv);
    Tensor out = av;
    for (std::size_t k = 0; k < out.size(); ++k) out[k] -= bv[k];
    return detail::make_op(std::move(out), {a, b}, [](Node& n) {
        Node& pa = *n.parents[0];
        Node& pb = *n.parents[1];
        if (pa.requires_grad) detail::accumulate(pa, n.grad);
        if (pb.requires_grad) detail::accumulate(pb, gccm::scale(n.grad, -1.0));
    });
}

// Elementwise divide, equal shapes only.
inline Var divide(const Var& a, const Var& b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (!av.same_shape(bv)) detail::shape_error("divide", av, bv);
    Tensor out = av;
    for (std::size_t k = 0; k < out.size(); ++k) out[k] /= bv[k];
    return detail::make_op(std::move(out), {a, b}, [](Node& n) {
        Node& pa = *n.parents[0];
        Node& pb = *n.parents[1];
        if (pa.requires_grad) {
            Tensor da = n.grad;
            for (std::size_t k = 0; k < da.size(); ++k) da[k] /= pb.value[k];
            detail::accumulate(pa, da);
        }
        if (pb.requires_grad) {
            Tensor db = n.grad;
            for (std::size_t k = 0; k < db.size(); ++k)
                db[k] *= -pa.value[k] / (pb.value[k] * pb.value[k]);
            detail::accumulate(pb, db);
        }
    });
}

inline Var scale(const Var& a, double c) {
    return detail::make_op(gccm::scale(a.value(), c), {a}, [c](Node& n) {
        Node& pa = *n.parents[0];
        if (pa.requires_grad) detail::accumulate(pa, gccm::scale(n.grad, c));
    });
}

// Row-wise softmax, stabilized by subtracting each row's max.
inline Var softmax_rows(const Var& a) {
    const Tensor& av = a.value();
    Tensor out(av.rows(), av.cols());
    for (std::size_t i = 0; i < av.rows(); ++i) {
        double m = av(i, 0);
        for (std::size_t j = 1; j < av.cols(); ++j) m = std::max(m, av(i, j));
        double z = 0.0;
        for (std::size_t j = 0; j < av.cols(); ++j) {
            out(i, j) = std::exp(av(i, j) - m);
            z += out(i, j);
        }
        for (std::size_t j = 0; j < av.cols(); ++j) out(i, j) /= z;
    }
    Tensor s = out;
    return detail::make_op(std::move(out), {a}, [s = std::move(s)](Node& n) {
        Node& pa = *n.parents[0];
        if (!pa.requires_grad) return;
        Tensor da(s.rows(), s.cols());
        for (std::size_t i = 0; i < s.rows(); ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < s.cols(); ++j) dot += n.grad(i, j) * s(i, j);
            for (std::size_t j = 0; j < s.cols(); ++j) da(i, j) = s(i, j) * (n.grad(i, j) - dot);
        }
        detail::accumulate(pa, da);
    });
}

inline Var log(const Var& a) {
    Tensor out = a.value();
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = std::log(out[k]);
    return detail::make_op(std::move(out), {a}, [](Node& n) {
        Node& pa = *n.parents[0];
        if (!pa.requires_grad) return;
        Tensor da = n.grad;
        for (std::size_t k = 0; k < da.size(); ++k) da[k] /= pa.value[k];
        detail::accumulate(pa, da);
    });
}

inline Var exp(const Var& a) {
    Tensor out = a.value();
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = std::exp(out[k]);
    return detail::make_op(std::move(out), {a}, [](Node& n) {
        Node& pa = *n.parents[0];
        if (!pa.requires_grad) return;
        Tensor da = n.grad;
        for (std::size_t k = 0; k < da.size(); ++k) da[k] *= n.value[k];
        detail::accumulate(pa, da);
    });
}

inline Var tanh(const Var& a) {
    Tensor out = a.value();
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = std::tanh(out[k]);
    return detail::make_op(std::move(out), {a}, [](Node& n) {
        Node& pa = *n.parents[0];
        if (!pa.requires_grad) return;
        Tensor da = n.grad;
        for (std::size_t k = 0; k < da.size(); ++k) da[k] *= 1.0 - n.value[k] * n.value[k];
        detail::accumulate(pa, da);
    });
}

inline Var abs(const Var& a) {
    Tensor out = a.value();
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = std::abs(out[k]);
    return detail::make_op(std::move(out), {a}, [](Node& n) {
        Node& pa = *n.parents[0];
        if (!pa.requires_grad) return;
        Tensor da = n.grad;
        for (std::size_t k = 0; k < da.size(); ++k) {
            const double x = pa.value[k];
            da[k] *= (x > 0.0) ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
        }
        detail::accumulate(pa, da);
    });
}

inline Var clamp_min(const Var& a, double floor) {
    Tensor out = a.value();
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = std::max(out[k], floor);
    return detail::make_op(std::move(out), {a}, [floor](Node& n) {
        Node& pa = *n.parents[0];
        if (!pa.requires_grad) return;
        Tensor da = n.grad;
        for (std::size_t k = 0; k < da.size(); ++k)
            if (pa.value[k] <= floor) da[k] = 0.0;
        detail::accumulate(pa, da);
    });
}

// nxm -> nx1, sum over each row.
inline Var sum_rows(const Var& a) {
    const Tensor& av = a.value();
    Tensor out(av.rows(), 1);
    for (std::size_t i = 0; i < av.rows(); ++i)
        for (std::size_t j = 0; j < av.cols(); ++j) out(i, 0) += av(i, j);
    return detail::make_op(std::move(out), {a}, [](Node& n) {
        Node& pa = *n.parents[0];
        if (!pa.requires_grad) return;
        Tensor da(pa.value.rows(), pa.value.cols());
        for (std::size_t i = 0; i < da.rows(); ++i)
            for (std::size_t j = 0; j < da.cols(); ++j) da(i, j) = n.grad(i, 0);
        detail::accumulate(pa, da);
    });
}

// nxm -> 1xm, mean over rows (column-mean pooling).
inline Var mean_cols(const Var& a) {
    const Tensor& av = a.value();
    Tensor out(1, av.cols());
    for (std::size_t i = 0; i < av.rows(); ++i)
        for (std::size_t j = 0; j < av.cols(); ++j) out(0, j) += av(i, j);
    const double inv = 1.0 / static_cast<double>(av.rows());
    for (std::size_t j = 0; j < av.cols(); ++j) out(0, j) *= inv;
    return detail::make_op(std::move(out), {a}, [inv](Node& n) {
        Node& pa = *n.parents[0];
        if (!pa.requires_grad) return;
        Tensor da(pa.value.rows(), pa.value.cols());
        for (std::size_t i = 0; i < da.rows(); ++i)
            for (std::size_t j = 0; j < da.cols(); ++j) da(i, j) = n.grad(0, j) * inv;
        detail::accumulate(pa, da);
    });
}

// nxm -> 1x1, sum of all entries.
inline Var sum_all(const Var& a) {
    const Tensor& av = a.value();
    double s = 0.0;
    for (std::size_t k = 0; k < av.size(); ++k) s += av[k];
    Tensor out(1, 1, 0.0);
    out(0, 0) = s;
    return detail::make_op(std::move(out), {a}, [](Node& n) {
        Node& pa = *n.parents[0];
        if (!pa.requires_grad) return;
        Tensor da(pa.value.rows(), pa.value.cols(), 0.0);
        for (std::size_t k = 0; k < da.size(); ++k) da[k] = n.grad(0, 0);
        detail::accumulate(pa, da);
    });
}

// nxm -> nx1, Euclidean norm of each row.
inline Var l2norm_rows(const Var& a) {
    const Tensor& av = a.value();
    Tensor out(av.rows(), 1);
    for (std::size_t i = 0; i < av.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < av.cols(); ++j) s += av(i, j) * av(i, j);
        out(i, 0) = std::sqrt(s);
    }
    return detail::make_op(std::move(out), {a}, [](Node& n) {
        Node& pa = *n.parents[0];
        if (!pa.requires_grad) return;
        Tensor da(pa.value.rows(), pa.value.cols());
        for (std::size_t i = 0; i < da.rows(); ++i) {
            const double r = n.value(i, 0);
            if (r == 0.0) continue;  // subgradient 0 at the origin
            for (std::size_t j = 0; j < da.cols(); ++j)
                da(i, j) = n.grad(i, 0) * pa.value(i, j) / r;
        }
        detail::accumulate(pa, da);
    });
}

// nxm -> nx1, log(sum_j exp(x_ij)) stabilized by the row max.
inline Var logsumexp_rows(const Var& a) {
    const Tensor& av = a.value();
    Tensor out(av.rows(), 1);
    Tensor soft(av.rows(), av.cols());
    for (std::size_t i = 0; i < av.rows(); ++i) {
        double m = av(i, 0);
        for (std::size_t j = 1; j < av.cols(); ++j) m = std::max(m, av(i, j));
        double z = 0.0;
        for (std::size_t j = 0; j < av.cols(); ++j) {
            soft(i, j) = std::exp(av(i, j) - m);
            z += soft(i, j);
        }
        for (std::size_t j = 0; j < av.cols(); ++j) soft(i, j) /= z;
        out(i, 0) = m + std::log(z);
    }
    return detail::make_op(std::move(out), {a}, [soft = std::move(soft)](Node& n) {
        Node& pa = *n.parents[0];
        if (!pa.requires_grad) return;
        Tensor da(soft.rows(), soft.cols());
        for (std::size_t i = 0; i < da.rows(); ++i)
            for (std::size_t j = 0; j < da.cols(); ++j) da(i, j) = n.grad(i, 0) * soft(i, j);
        detail::accumulate(pa, da);
    });
}

// Stack matrices with equal column counts on top of each other.
inline Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: empty input");
    const std::size_t cols = parts[0].value().cols();
    std::size_t rows = 0;
    for (const Var& p : parts) {
        if (p.value().cols() != cols)
            throw std::invalid_argument("concat_rows: column mismatch (" + parts[0].value().shape() +
                                        " vs " + p.value().shape() + ")");
        rows += p.value().rows();
    }
    Tensor out(rows, cols);
    std::size_t r = 0;
    for (const Var& p : parts) {
        const Tensor& v = p.value();
        for (std::size_t i = 0; i < v.rows(); ++i, ++r)
            for (std::size_t j = 0; j < cols; ++j) out(r, j) = v(i, j);
    }
    return detail::make_op(std::move(out), parts, [](Node& n) {
        std::size_t r = 0;
        for (auto& parent : n.parents) {
            Node& p = *parent;
            const std::size_t pr = p.value.rows();
            if (p.requires_grad) {
                Tensor da(pr, p.value.cols());
                for (std::size_t i = 0; i < pr; ++i)
                    for (std::size_t j = 0; j < da.cols(); ++j) da(i, j) = n.grad(r + i, j);
                detail::accumulate(p, da);
            }
            r += pr;
        }
    });
}

// Gather the given rows; gradients scatter back (duplicates accumulate).
inline Var select_rows(const Var& a, const std::vector<std::size_t>& idx) {
    const Tensor& av = a.value();
    for (std::size_t i : idx)
        if (i >= av.rows()) throw std::invalid_argument("select_rows: index out of range");
    Tensor out(idx.size(), av.cols());
    for (std::size_t k = 0; k < idx.size(); ++k)
        for (std::size_t j = 0; j < av.cols(); ++j) out(k, j) = av(idx[k], j);
    return detail::make_op(std::move(out), {a}, [idx](Node& n) {
        Node& pa = *n.parents[0];
        if (!pa.requires_grad) return;
        Tensor da(pa.value.rows(), pa.value.cols(), 0.0);
        for (std::size_t k = 0; k < idx.size(); ++k)
            for (std::size_t j = 0; j < da.cols(); ++j) da(idx[k], j) += n.grad(k, j);
        detail::accumulate(pa, da);
    });
}

namespace detail {

inline void topo_order(Node* root, std::vector<Node*>& order) {
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root, 0);
    visited.insert(root);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (visited.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
}

}  // namespace detail

// Propagates d(root)/d(leaf) into every reachable leaf's grad. The root must
// be a 1x1 scalar. A second backward through the same root without a reset is
// rejected.
inline void backward(const Var& root) {
    if (!root.valid()) throw std::invalid_argument("backward: empty Var");
    Node* r = root.raw();
    if (r->value.rows() != 1 || r->value.cols() != 1)
        throw std::invalid_argument("backward: root must be 1x1 scalar, got " + r->value.shape());
    if (r->backward_done)
        throw std::logic_error("backward: repeated call on the same root without reset");
    std::vector<Node*> order;
    detail::topo_order(r, order);
    r->grad(0, 0) += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->requires_grad && n->backward_fn) n->backward_fn(*n);
    }
    r->backward_done = true;
}

// Clears gradients and the backward flag for every node reachable from root.
inline void zero_grad(const Var& root) {
    if (!root.valid()) return;
    std::vector<Node*> order;
    detail::topo_order(root.raw(), order);
    for (Node* n : order) {
        n->grad = Tensor(n->value.rows(), n->value.cols(), 0.0);
        n->backward_done = false;
    }
}

}  // namespace gccm::ad
