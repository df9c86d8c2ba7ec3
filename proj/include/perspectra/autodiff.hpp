#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "perspectra/tensor.hpp"

namespace perspectra {

enum class OpKind {
    Leaf,
    Constant,
    Add,
    Sub,
    Mul,
    MatMul,
    MatVec,
    Relu,
    Tanh,
    Concat,
    Sum,
    Scale,
    AddMany,
    MeanMany,
    EmbeddingMean,
    CrossEntropy,
};

inline const char* op_name(OpKind k) {
    switch (k) {
        case OpKind::Leaf: return "leaf";
        case OpKind::Constant: return "constant";
        case OpKind::Add: return "add";
        case OpKind::Sub: return "sub";
        case OpKind::Mul: return "mul";
        case OpKind::MatMul: return "matmul";
        case OpKind::MatVec: return "matvec";
        case OpKind::Relu: return "relu";
        case OpKind::Tanh: return "tanh";
        case OpKind::Concat: return "concat";
        case OpKind::Sum: return "sum";
        case OpKind::Scale: return "scale";
        case OpKind::AddMany: return "add_many";
        case OpKind::MeanMany: return "mean_many";
        case OpKind::EmbeddingMean: return "embedding_mean";
        case OpKind::CrossEntropy: return "cross_entropy";
    }
    return "?";
}

using NodeId = std::uint32_t;

/// Reverse-mode autodiff tape. Ops evaluate eagerly as they are recorded, so the
/// node list is topologically ordered by construction; backward() walks it in
/// reverse accumulating gradients. Tensors are immutable once recorded.
///
/// In checked mode every op output is scanned for NaN/Inf and rejected with an
/// error naming the op.
class Graph {
public:
    explicit Graph(bool checked = true) : checked_(checked) {}

    bool checked() const { return checked_; }
    std::size_t node_count() const { return nodes_.size(); }

    // ---- leaves ------------------------------------------------------------

    NodeId constant(Tensor t) {
        t.requires_grad = false;
        return push(OpKind::Constant, {}, std::move(t), false);
    }

    NodeId leaf(Tensor t, bool requires_grad, std::string name = "") {
        NodeId id = push(OpKind::Leaf, {}, std::move(t), requires_grad);
        nodes_[id].name = std::move(name);
        return id;
    }

    // ---- elementwise -------------------------------------------------------

    NodeId add(NodeId a, NodeId b) { return binary_elementwise(OpKind::Add, a, b); }
    NodeId sub(NodeId a, NodeId b) { return binary_elementwise(OpKind::Sub, a, b); }
    NodeId mul(NodeId a, NodeId b) { return binary_elementwise(OpKind::Mul, a, b); }

    NodeId relu(NodeId x) {
        Tensor out = val(x);
        for (double& v : out.data) v = v > 0.0 ? v : 0.0;
        return push(OpKind::Relu, {x}, std::move(out), grad_flag({x}));
    }

    NodeId tanh_act(NodeId x) {
        Tensor out = val(x);
        for (double& v : out.data) v = std::tanh(v);
        return push(OpKind::Tanh, {x}, std::move(out), grad_flag({x}));
    }

    NodeId scale(NodeId x, double c) {
        Tensor out = val(x);
        for (double& v : out.data) v *= c;
        NodeId id = push(OpKind::Scale, {x}, std::move(out), grad_flag({x}));
        nodes_[id].scalar = c;
        return id;
    }

    // ---- linear algebra ----------------------------------------------------

    /// C[m,n] = A[m,k] * B[k,n]
    NodeId matmul(NodeId a, NodeId b) {
        const Tensor& A = val(a);
        const Tensor& B = val(b);
        if (A.rank() != 2 || B.rank() != 2 || A.cols() != B.rows())
            throw std::invalid_argument(detail::concat(
                "matmul: incompatible shapes ", shape_str(A.shape), " and ", shape_str(B.shape)));
        std::size_t m = A.rows(), k = A.cols(), n = B.cols();
        Tensor out = Tensor::zeros({m, n});
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
                double aip = A.at(i, p);
                if (aip == 0.0) continue;
                for (std::size_t j = 0; j < n; ++j) out.at(i, j) += aip * B.at(p, j);
            }
        return push(OpKind::MatMul, {a, b}, std::move(out), grad_flag({a, b}));
    }

    /// y[m] = W[m,n] * x[n]
    NodeId matvec(NodeId w, NodeId x) {
        const Tensor& W = val(w);
        const Tensor& X = val(x);
        if (W.rank() != 2 || X.rank() != 1 || W.cols() != X.size())
            throw std::invalid_argument(detail::concat(
                "matvec: weight shape ", shape_str(W.shape), " does not match input shape ",
                shape_str(X.shape)));
        std::size_t m = W.rows(), n = W.cols();
        Tensor out = Tensor::zeros({m});
        for (std::size_t i = 0; i < m; ++i) {
            double acc = 0.0;
            const double* wrow = W.data.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) acc += wrow[j] * X.data[j];
            out.data[i] = acc;
        }
        return push(OpKind::MatVec, {w, x}, std::move(out), grad_flag({w, x}));
    }

    NodeId concat(NodeId a, NodeId b) {
        const Tensor& A = val(a);
        const Tensor& B = val(b);
        if (A.rank() != 1 || B.rank() != 1)
            throw std::invalid_argument(detail::concat(
                "concat: expects two vectors, got ", shape_str(A.shape), " and ",
                shape_str(B.shape)));
        Tensor out = Tensor::zeros({A.size() + B.size()});
        std::copy(A.data.begin(), A.data.end(), out.data.begin());
        std::copy(B.data.begin(), B.data.end(), out.data.begin() + A.size());
        return push(OpKind::Concat, {a, b}, std::move(out), grad_flag({a, b}));
    }

    // ---- reductions ----------------------------------------------------------

    NodeId sum(NodeId x) {
        double acc = 0.0;
        for (double v : val(x).data) acc += v;
        return push(OpKind::Sum, {x}, Tensor::scalar(acc), grad_flag({x}));
    }

    NodeId add_many(const std::vector<NodeId>& xs) { return nary(OpKind::AddMany, xs); }

    /// Elementwise mean of same-shaped inputs; the batch-loss reduction.
    NodeId mean_many(const std::vector<NodeId>& xs) { return nary(OpKind::MeanMany, xs); }

    // ---- embedding -----------------------------------------------------------

    /// Mean of the rows of `table` selected by `ids`; empty ids give a zero vector.
    NodeId embedding_mean(NodeId table, std::vector<std::uint32_t> ids) {
        const Tensor& T = val(table);
        if (T.rank() != 2)
            throw std::invalid_argument(detail::concat("embedding_mean: table must be rank 2, got ",
                                                       shape_str(T.shape)));
        std::size_t v = T.rows(), d = T.cols();
        for (std::uint32_t id : ids)
            if (id >= v)
                throw std::invalid_argument(detail::concat("embedding_mean: id ", id,
                                                           " out of range for table with ", v,
                                                           " rows"));
        Tensor out = Tensor::zeros({d});
        if (!ids.empty()) {
            for (std::uint32_t id : ids)
                for (std::size_t j = 0; j < d; ++j) out.data[j] += T.at(id, j);
            double inv = 1.0 / static_cast<double>(ids.size());
            for (double& x : out.data) x *= inv;
        }
        NodeId node = push(OpKind::EmbeddingMean, {table}, std::move(out), grad_flag({table}));
        nodes_[node].ids = std::move(ids);
        return node;
    }

    // ---- loss ----------------------------------------------------------------

    /// loss = -class_weights[target] * log softmax(logits)[target]
    NodeId cross_entropy_weighted(NodeId logits, std::size_t target,
                                  std::span<const double> class_weights) {
        const Tensor& L = val(logits);
        if (L.rank() != 1 || L.size() < 2)
            throw std::invalid_argument(detail::concat(
                "cross_entropy: logits must be a vector of length >= 2, got ",
                shape_str(L.shape)));
        std::size_t k = L.size();
        if (class_weights.size() != k)
            throw std::invalid_argument(detail::concat("cross_entropy: ", class_weights.size(),
                                                       " class weights for ", k, " logits"));
        if (target >= k)
            throw std::invalid_argument(detail::concat("cross_entropy: target ", target,
                                                       " out of range [0,", k, ")"));
        for (double w : class_weights)
            if (!(w >= 0.0) || !std::isfinite(w))
                throw std::invalid_argument(
                    "cross_entropy: class weights must be non-negative and finite");

        // stable log-softmax
        double mx = L.data[0];
        for (double v : L.data) mx = std::max(mx, v);
        double lse = 0.0;
        for (double v : L.data) lse += std::exp(v - mx);
        lse = mx + std::log(lse);
        double w = class_weights[target];
        double loss = w * (lse - L.data[target]);
        std::vector<double> sm(k); // cache before push(): it may reallocate nodes_ and drop L
        for (std::size_t i = 0; i < k; ++i) sm[i] = std::exp(L.data[i] - lse);

        NodeId node = push(OpKind::CrossEntropy, {logits}, Tensor::scalar(loss),
                           grad_flag({logits}));
        Node& n = nodes_[node];
        n.target = target;
        n.scalar = w;
        n.softmax = std::move(sm);
        return node;
    }

    // ---- access ----------------------------------------------------------------

    const Tensor& value(NodeId id) const { return nodes_.at(id).value; }
    bool requires_grad(NodeId id) const { return nodes_.at(id).requires_grad; }

    /// Reverse pass from a scalar loss node. Seeds d(loss)/d(loss) = 1 and fills a
    /// gradient for every node that requires one (zero if unreachable from the loss).
    void backward(NodeId loss) {
        if (nodes_.empty()) throw std::runtime_error("backward: graph is empty");
        if (loss >= nodes_.size()) throw std::invalid_argument("backward: unknown node");
        if (!nodes_[loss].value.is_scalar())
            throw std::invalid_argument(detail::concat("backward: loss must be scalar, got shape ",
                                                       shape_str(nodes_[loss].value.shape)));
        grads_.assign(nodes_.size(), Tensor{});
        grads_[loss] = Tensor::scalar(1.0);

        for (std::size_t i = nodes_.size(); i-- > 0;) {
            Node& n = nodes_[i];
            if (!n.requires_grad || grads_[i].data.empty()) continue;
            propagate(static_cast<NodeId>(i), n);
        }
        // every requires_grad node reports a gradient of its own shape
        for (std::size_t i = 0; i < nodes_.size(); ++i)
            if (nodes_[i].requires_grad && grads_[i].data.empty())
                grads_[i] = Tensor::zeros(nodes_[i].value.shape);
        backward_done_ = true;
    }

    const Tensor& gradient(NodeId id) const {
        if (!backward_done_) throw std::runtime_error("gradient: backward has not been run");
        if (id >= nodes_.size()) throw std::invalid_argument("gradient: unknown node");
        if (!nodes_[id].requires_grad)
            throw std::invalid_argument("gradient: node does not track gradients");
        return grads_[id];
    }

private:
    struct Node {
        OpKind kind;
        std::vector<NodeId> inputs;
        Tensor value;
        bool requires_grad = false;
        std::string name;
        double scalar = 0.0;                // Scale factor / CE target weight
        std::size_t target = 0;             // CE target index
        std::vector<double> softmax;        // CE cached softmax
        std::vector<std::uint32_t> ids;     // EmbeddingMean row ids
    };

    const Tensor& val(NodeId id) const {
        if (id >= nodes_.size()) throw std::invalid_argument("graph: unknown node id");
        return nodes_[id].value;
    }

    bool grad_flag(std::initializer_list<NodeId> inputs) const {
        for (NodeId i : inputs)
            if (nodes_[i].requires_grad) return true;
        return false;
    }

    NodeId push(OpKind kind, std::vector<NodeId> inputs, Tensor out, bool requires_grad) {
        if (checked_) check_finite(out, op_name(kind));
        Node n;
        n.kind = kind;
        n.inputs = std::move(inputs);
        n.value = std::move(out);
        n.requires_grad = requires_grad;
        nodes_.push_back(std::move(n));
        backward_done_ = false;
        return static_cast<NodeId>(nodes_.size() - 1);
    }

    NodeId binary_elementwise(OpKind kind, NodeId a, NodeId b) {
        const Tensor& A = val(a);
        const Tensor& B = val(b);
        if (!A.same_shape(B))
            throw std::invalid_argument(detail::concat(op_name(kind), ": shape mismatch ",
                                                       shape_str(A.shape), " vs ",
                                                       shape_str(B.shape)));
        Tensor out = A;
        switch (kind) {
            case OpKind::Add:
                for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += B.data[i];
                break;
            case OpKind::Sub:
                for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= B.data[i];
                break;
            case OpKind::Mul:
                for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= B.data[i];
                break;
            default: throw std::logic_error("not elementwise");
        }
        return push(kind, {a, b}, std::move(out), grad_flag({a, b}));
    }

    NodeId nary(OpKind kind, const std::vector<NodeId>& xs) {
        if (xs.empty())
            throw std::invalid_argument(detail::concat(op_name(kind), ": no inputs"));
        Tensor out = val(xs[0]);
        for (std::size_t i = 1; i < xs.size(); ++i) {
            const Tensor& t = val(xs[i]);
            if (!t.same_shape(out))
                throw std::invalid_argument(detail::concat(op_name(kind), ": shape mismatch ",
                                                           shape_str(out.shape), " vs ",
                                                           shape_str(t.shape)));
            for (std::size_t j = 0; j < out.size(); ++j) out.data[j] += t.data[j];
        }
        if (kind == OpKind::MeanMany) {
            double inv = 1.0 / static_cast<double>(xs.size());
            for (double& v : out.data) v *= inv;
        }
        bool rg = false;
        for (NodeId x : xs) rg = rg || nodes_[x].requires_grad;
        return push(kind, xs, std::move(out), rg);
    }

    Tensor& grad_of(NodeId id) {
        if (grads_[id].data.empty()) grads_[id] = Tensor::zeros(nodes_[id].value.shape);
        return grads_[id];
    }

    void accumulate_if_needed(NodeId input, const std::vector<double>& contribution) {
        if (!nodes_[input].requires_grad) return;
        Tensor& g = grad_of(input);
        for (std::size_t i = 0; i < contribution.size(); ++i) g.data[i] += contribution[i];
    }

    void propagate(NodeId id, Node& n) {
        const Tensor& gout = grads_[id];
        switch (n.kind) {
            case OpKind::Leaf:
            case OpKind::Constant:
                break;
            case OpKind::Add: {
                accumulate_if_needed(n.inputs[0], gout.data);
                accumulate_if_needed(n.inputs[1], gout.data);
                break;
            }
            case OpKind::Sub: {
                accumulate_if_needed(n.inputs[0], gout.data);
                if (nodes_[n.inputs[1]].requires_grad) {
                    Tensor& g = grad_of(n.inputs[1]);
                    for (std::size_t i = 0; i < gout.size(); ++i) g.data[i] -= gout.data[i];
                }
                break;
            }
            case OpKind::Mul: {
                const Tensor& A = nodes_[n.inputs[0]].value;
                const Tensor& B = nodes_[n.inputs[1]].value;
                if (nodes_[n.inputs[0]].requires_grad) {
                    Tensor& g = grad_of(n.inputs[0]);
                    for (std::size_t i = 0; i < gout.size(); ++i)
                        g.data[i] += gout.data[i] * B.data[i];
                }
                if (nodes_[n.inputs[1]].requires_grad) {
                    Tensor& g = grad_of(n.inputs[1]);
                    for (std::size_t i = 0; i < gout.size(); ++i)
                        g.data[i] += gout.data[i] * A.data[i];
                }
                break;
            }
            case OpKind::MatMul: {
                const Tensor& A = nodes_[n.inputs[0]].value;
                const Tensor& B = nodes_[n.inputs[1]].value;
                std::size_t m = A.rows(), k = A.cols(), c = B.cols();
                if (nodes_[n.inputs[0]].requires_grad) {
                    Tensor& gA = grad_of(n.inputs[0]); // dA = gout * B^T
                    for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t p = 0; p < k; ++p) {
                            double acc = 0.0;
                            for (std::size_t j = 0; j < c; ++j)
                                acc += gout.at(i, j) * B.at(p, j);
                            gA.at(i, p) += acc;
                        }
                }
                if (nodes_[n.inputs[1]].requires_grad) {
                    Tensor& gB = grad_of(n.inputs[1]); // dB = A^T * gout
                    for (std::size_t p = 0; p < k; ++p)
                        for (std::size_t j = 0; j < c; ++j) {
                            double acc = 0.0;
                            for (std::size_t i = 0; i < m; ++i)
                                acc += A.at(i, p) * gout.at(i, j);
                            gB.at(p, j) += acc;
                        }
                }
                break;
            }
            case OpKind::MatVec: {
                const Tensor& W = nodes_[n.inputs[0]].value;
                const Tensor& X = nodes_[n.inputs[1]].value;
                std::size_t m = W.rows(), c = W.cols();
                if (nodes_[n.inputs[0]].requires_grad) {
                    Tensor& gW = grad_of(n.inputs[0]); // dW = gout (outer) x
                    for (std::size_t i = 0; i < m; ++i) {
                        double gi = gout.data[i];
                        if (gi == 0.0) continue;
                        double* row = gW.data.data() + i * c;
                        for (std::size_t j = 0; j < c; ++j) row[j] += gi * X.data[j];
                    }
                }
                if (nodes_[n.inputs[1]].requires_grad) {
                    Tensor& gX = grad_of(n.inputs[1]); // dx = W^T gout
                    for (std::size_t i = 0; i < m; ++i) {
                        double gi = gout.data[i];
                        if (gi == 0.0) continue;
                        const double* row = W.data.data() + i * c;
                        for (std::size_t j = 0; j < c; ++j) gX.data[j] += gi * row[j];
                    }
                }
                break;
            }
            case OpKind::Relu: {
                // subgradient at 0 is 0
                const Tensor& X = nodes_[n.inputs[0]].value;
                if (nodes_[n.inputs[0]].requires_grad) {
                    Tensor& g = grad_of(n.inputs[0]);
                    for (std::size_t i = 0; i < gout.size(); ++i)
                        if (X.data[i] > 0.0) g.data[i] += gout.data[i];
                }
                break;
            }
            case OpKind::Tanh: {
                if (nodes_[n.inputs[0]].requires_grad) {
                    Tensor& g = grad_of(n.inputs[0]);
                    for (std::size_t i = 0; i < gout.size(); ++i) {
                        double y = n.value.data[i];
                        g.data[i] += gout.data[i] * (1.0 - y * y);
                    }
                }
                break;
            }
            case OpKind::Concat: {
                std::size_t na = nodes_[n.inputs[0]].value.size();
                if (nodes_[n.inputs[0]].requires_grad) {
                    Tensor& g = grad_of(n.inputs[0]);
                    for (std::size_t i = 0; i < na; ++i) g.data[i] += gout.data[i];
                }
                if (nodes_[n.inputs[1]].requires_grad) {
                    Tensor& g = grad_of(n.inputs[1]);
                    for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += gout.data[na + i];
                }
                break;
            }
            case OpKind::Sum: {
                if (nodes_[n.inputs[0]].requires_grad) {
                    Tensor& g = grad_of(n.inputs[0]);
                    double gv = gout.data[0];
                    for (double& v : g.data) v += gv;
                }
                break;
            }
            case OpKind::Scale: {
                if (nodes_[n.inputs[0]].requires_grad) {
                    Tensor& g = grad_of(n.inputs[0]);
                    for (std::size_t i = 0; i < gout.size(); ++i)
                        g.data[i] += n.scalar * gout.data[i];
                }
                break;
            }
            case OpKind::AddMany: {
                for (NodeId in : n.inputs) accumulate_if_needed(in, gout.data);
                break;
            }
            case OpKind::MeanMany: {
                double inv = 1.0 / static_cast<double>(n.inputs.size());
                for (NodeId in : n.inputs) {
                    if (!nodes_[in].requires_grad) continue;
                    Tensor& g = grad_of(in);
                    for (std::size_t i = 0; i < gout.size(); ++i)
                        g.data[i] += inv * gout.data[i];
                }
                break;
            }
            case OpKind::EmbeddingMean: {
                if (nodes_[n.inputs[0]].requires_grad && !n.ids.empty()) {
                    Tensor& g = grad_of(n.inputs[0]);
                    std::size_t d = nodes_[n.inputs[0]].value.cols();
                    double inv = 1.0 / static_cast<double>(n.ids.size());
                    for (std::uint32_t id : n.ids)
                        for (std::size_t j = 0; j < d; ++j)
                            g.data[id * d + j] += inv * gout.data[j];
                }
                break;
            }
            case OpKind::CrossEntropy: {
                // dlogits = w * (softmax - onehot[target]) * gout
                if (nodes_[n.inputs[0]].requires_grad) {
                    Tensor& g = grad_of(n.inputs[0]);
                    double gv = gout.data[0] * n.scalar;
                    for (std::size_t i = 0; i < g.size(); ++i) {
                        double p = n.softmax[i];
                        g.data[i] += gv * (p - (i == n.target ? 1.0 : 0.0));
                    }
                }
                break;
            }
        }
    }

    std::vector<Node> nodes_;
    std::vector<Tensor> grads_;
    bool checked_;
    bool backward_done_ = false;
};

/// Numerically stable softmax; outputs sum to 1 for any finite input.
inline std::vector<double> softmax(std::span<const double> logits) {
    require(!logits.empty(), "softmax: empty input");
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    std::vector<double> out(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        z += out[i];
    }
    for (double& v : out) v /= z;
    return out;
}

inline std::size_t argmax(std::span<const double> v) {
    require(!v.empty(), "argmax: empty input");
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

} // namespace perspectra
