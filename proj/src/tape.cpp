#include "attnrel/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "attnrel/errors.hpp"

namespace attnrel {

Tape::Value Tape::push(Node node) {
    nodes_.push_back(std::move(node));
    return Value{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

void Tape::check(Value v) const {
    if (!v.valid() || v.id >= nodes_.size()) throw RejectedInput("tape: invalid value handle");
}

const Tensor& Tape::value(Value v) const {
    check(v);
    return nodes_[v.id].out;
}

Tape::Value Tape::leaf(Tensor t) {
    Node n;
    n.op = Op::Leaf;
    n.out = std::move(t);
    return push(std::move(n));
}

Tape::Value Tape::rows(Value table, std::vector<int> indices) {
    check(table);
    const Tensor& src = nodes_[table.id].out;
    if (src.rank() != 2) throw RejectedInput("rows: table must be 2-D");
    Node n;
    n.op = Op::Rows;
    n.inputs = {table.id};
    n.idx.assign(indices.begin(), indices.end());
    for (int i : indices)
        if (i < 0 || static_cast<std::size_t>(i) >= src.dim(0))
            throw RejectedInput("rows: index out of range");
    n.out = eval(n);
    return push(std::move(n));
}

Tape::Value Tape::concat0(const std::vector<Value>& parts) {
    if (parts.empty()) throw RejectedInput("concat0: no parts");
    Node n;
    n.op = Op::Concat0;
    for (Value p : parts) {
        check(p);
        if (nodes_[p.id].out.rank() != 2) throw RejectedInput("concat0: parts must be 2-D");
        n.inputs.push_back(p.id);
    }
    n.out = eval(n);
    return push(std::move(n));
}

Tape::Value Tape::stack0(const std::vector<Value>& parts) {
    if (parts.empty()) throw RejectedInput("stack0: no parts");
    Node n;
    n.op = Op::Stack0;
    for (Value p : parts) {
        check(p);
        if (nodes_[p.id].out.rank() != 2) throw RejectedInput("stack0: parts must be 2-D");
        if (!nodes_[p.id].out.same_shape(nodes_[parts[0].id].out))
            throw RejectedInput("stack0: parts must share a shape");
        n.inputs.push_back(p.id);
    }
    n.out = eval(n);
    return push(std::move(n));
}

Tape::Value Tape::slice0(Value a, std::size_t index) {
    check(a);
    const Tensor& src = nodes_[a.id].out;
    if (src.rank() != 3 || index >= src.dim(0)) throw RejectedInput("slice0: bad slice");
    Node n;
    n.op = Op::Slice0;
    n.inputs = {a.id};
    n.idx = {static_cast<int>(index)};
    n.out = eval(n);
    return push(std::move(n));
}

Tape::Value Tape::row_range(Value a, std::size_t r0, std::size_t r1) {
    check(a);
    const Tensor& src = nodes_[a.id].out;
    if (src.rank() != 2 || r0 >= r1 || r1 > src.dim(0)) throw RejectedInput("row_range: bad range");
    Node n;
    n.op = Op::RowRange;
    n.inputs = {a.id};
    n.idx = {static_cast<int>(r0), static_cast<int>(r1)};
    n.out = eval(n);
    return push(std::move(n));
}

Tape::Value Tape::col_range(Value a, std::size_t c0, std::size_t c1) {
    check(a);
    const Tensor& src = nodes_[a.id].out;
    if (src.rank() != 2 || c0 >= c1 || c1 > src.dim(1)) throw RejectedInput("col_range: bad range");
    Node n;
    n.op = Op::ColRange;
    n.inputs = {a.id};
    n.idx = {static_cast<int>(c0), static_cast<int>(c1)};
    n.out = eval(n);
    return push(std::move(n));
}

Tape::Value Tape::concat_cols(const std::vector<Value>& parts) {
    if (parts.empty()) throw RejectedInput("concat_cols: no parts");
    Node n;
    n.op = Op::ConcatCols;
    for (Value p : parts) {
        check(p);
        if (nodes_[p.id].out.rank() != 2) throw RejectedInput("concat_cols: parts must be 2-D");
        if (nodes_[p.id].out.dim(0) != nodes_[parts[0].id].out.dim(0))
            throw RejectedInput("concat_cols: row counts disagree");
        n.inputs.push_back(p.id);
    }
    n.out = eval(n);
    return push(std::move(n));
}

Tape::Value Tape::matmul(Value a, Value b) {
    check(a);
    check(b);
    if (nodes_[a.id].out.rank() != 2 || nodes_[b.id].out.rank() != 2)
        throw RejectedInput("tape matmul expects 2-D operands");
    Node n;
    n.op = Op::Matmul;
    n.inputs = {a.id, b.id};
    n.out = eval(n);
    return push(std::move(n));
}

Tape::Value Tape::transpose(Value a) {
    check(a);
    if (nodes_[a.id].out.rank() != 2) throw RejectedInput("tape transpose expects 2-D");
    Node n;
    n.op = Op::Transpose;
    n.inputs = {a.id};
    n.out = eval(n);
    return push(std::move(n));
}

Tape::Value Tape::add(Value a, Value b) {
    check(a);
    check(b);
    Node n;
    n.op = Op::Add;
    n.inputs = {a.id, b.id};
    n.out = eval(n);
    return push(std::move(n));
}

Tape::Value Tape::add_rowvec(Value a, Value bias) {
    check(a);
    check(bias);
    const Tensor& x = nodes_[a.id].out;
    const Tensor& b = nodes_[bias.id].out;
    if (x.rank() != 2 || b.rank() != 2 || b.dim(0) != 1 || b.dim(1) != x.dim(1))
        throw RejectedInput("add_rowvec: bias must be [1, cols]");
    Node n;
    n.op = Op::AddRowVec;
    n.inputs = {a.id, bias.id};
    n.out = eval(n);
    return push(std::move(n));
}

Tape::Value Tape::scale(Value a, double factor) {
    check(a);
    Node n;
    n.op = Op::Scale;
    n.inputs = {a.id};
    n.factor = factor;
    n.out = eval(n);
    return push(std::move(n));
}

Tape::Value Tape::softmax(Value a) {
    check(a);
    Node n;
    n.op = Op::Softmax;
    n.inputs = {a.id};
    n.out = eval(n);
    return push(std::move(n));
}

Tape::Value Tape::relu(Value a) {
    check(a);
    Node n;
    n.op = Op::Relu;
    n.inputs = {a.id};
    n.out = eval(n);
    return push(std::move(n));
}

Tape::Value Tape::sigmoid(Value a) {
    check(a);
    Node n;
    n.op = Op::Sigmoid;
    n.inputs = {a.id};
    n.out = eval(n);
    return push(std::move(n));
}

Tape::Value Tape::cross_entropy(Value logits, std::size_t row, std::size_t label) {
    check(logits);
    const Tensor& x = nodes_[logits.id].out;
    if (x.rank() != 2 || row >= x.dim(0) || label >= x.dim(1))
        throw RejectedInput("cross_entropy: row/label out of range");
    Node n;
    n.op = Op::CrossEntropy;
    n.inputs = {logits.id};
    n.idx = {static_cast<int>(row), static_cast<int>(label)};
    n.out = eval(n);
    return push(std::move(n));
}

Tape::Value Tape::l1_to(Value a, std::size_t row, std::vector<double> target) {
    check(a);
    const Tensor& x = nodes_[a.id].out;
    if (x.rank() != 2 || row >= x.dim(0) || target.size() != x.dim(1))
        throw RejectedInput("l1_to: row/target mismatch");
    Node n;
    n.op = Op::L1To;
    n.inputs = {a.id};
    n.idx = {static_cast<int>(row)};
    n.target = std::move(target);
    n.out = eval(n);
    return push(std::move(n));
}

Tensor Tape::eval(const Node& node) const {
    auto in = [&](std::size_t i) -> const Tensor& { return nodes_[node.inputs[i]].out; };
    switch (node.op) {
        case Op::Leaf:
            return node.out;
        case Op::Rows: {
            const Tensor& t = in(0);
            const std::size_t d = t.dim(1);
            Tensor out({node.idx.size(), d});
            for (std::size_t r = 0; r < node.idx.size(); ++r)
                std::copy_n(t.data().data() + static_cast<std::size_t>(node.idx[r]) * d, d,
                            out.data().data() + r * d);
            return out;
        }
        case Op::Concat0: {
            std::size_t rows = 0;
            const std::size_t d = in(0).dim(1);
            for (std::size_t i = 0; i < node.inputs.size(); ++i) rows += in(i).dim(0);
            Tensor out({rows, d});
            std::size_t at = 0;
            for (std::size_t i = 0; i < node.inputs.size(); ++i) {
                std::copy(in(i).data().begin(), in(i).data().end(), out.data().begin() + at);
                at += in(i).size();
            }
            return out;
        }
        case Op::Stack0: {
            const std::size_t s = in(0).dim(0), q = in(0).dim(1);
            Tensor out({node.inputs.size(), s, q});
            for (std::size_t k = 0; k < node.inputs.size(); ++k)
                std::copy(in(k).data().begin(), in(k).data().end(),
                          out.data().begin() + k * s * q);
            return out;
        }
        case Op::Slice0: {
            const Tensor& t = in(0);
            const std::size_t block = t.dim(1) * t.dim(2);
            Tensor out({t.dim(1), t.dim(2)});
            std::copy_n(t.data().data() + static_cast<std::size_t>(node.idx[0]) * block, block,
                        out.data().data());
            return out;
        }
        case Op::RowRange: {
            const Tensor& t = in(0);
            const std::size_t r0 = node.idx[0], r1 = node.idx[1], d = t.dim(1);
            Tensor out({r1 - r0, d});
            std::copy_n(t.data().data() + r0 * d, (r1 - r0) * d, out.data().data());
            return out;
        }
        case Op::ColRange: {
            const Tensor& t = in(0);
            const std::size_t c0 = node.idx[0], c1 = node.idx[1];
            Tensor out({t.dim(0), c1 - c0});
            for (std::size_t r = 0; r < t.dim(0); ++r)
                for (std::size_t c = c0; c < c1; ++c) out(r, c - c0) = t(r, c);
            return out;
        }
        case Op::ConcatCols: {
            const std::size_t rows = in(0).dim(0);
            std::size_t cols = 0;
            for (std::size_t i = 0; i < node.inputs.size(); ++i) cols += in(i).dim(1);
            Tensor out({rows, cols});
            std::size_t at = 0;
            for (std::size_t i = 0; i < node.inputs.size(); ++i) {
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t c = 0; c < in(i).dim(1); ++c) out(r, at + c) = in(i)(r, c);
                at += in(i).dim(1);
            }
            return out;
        }
        case Op::Matmul:
            return attnrel::matmul(in(0), in(1));
        case Op::Transpose:
            return attnrel::transpose(in(0));
        case Op::Add:
            return attnrel::add(in(0), in(1));
        case Op::AddRowVec: {
            const Tensor& x = in(0);
            const Tensor& b = in(1);
            Tensor out(x.shape());
            for (std::size_t r = 0; r < x.dim(0); ++r)
                for (std::size_t c = 0; c < x.dim(1); ++c) out(r, c) = x(r, c) + b(0, c);
            return out;
        }
        case Op::Scale:
            return attnrel::scale(in(0), node.factor);
        case Op::Softmax:
            return softmax_rows(in(0));
        case Op::Relu:
            return clamp_min(in(0), 0.0);
        case Op::Sigmoid: {
            const Tensor& x = in(0);
            Tensor out(x.shape());
            for (std::size_t i = 0; i < x.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-x[i]));
            return out;
        }
        case Op::CrossEntropy: {
            const Tensor& x = in(0);
            const std::size_t row = node.idx[0], label = node.idx[1], c = x.dim(1);
            const double* v = x.data().data() + row * c;
            const double mx = *std::max_element(v, v + c);
            double sum = 0.0;
            for (std::size_t j = 0; j < c; ++j) sum += std::exp(v[j] - mx);
            return Tensor({1}, {std::log(sum) - (v[label] - mx)});
        }
        case Op::L1To: {
            const Tensor& x = in(0);
            const std::size_t row = node.idx[0], d = x.dim(1);
            double sum = 0.0;
            for (std::size_t j = 0; j < d; ++j) sum += std::abs(x(row, j) - node.target[j]);
            return Tensor({1}, {sum});
        }
    }
    throw NumericError("tape: unknown op");
}

bool Tape::replay_matches() const {
    for (const Node& node : nodes_) {
        if (node.op == Op::Leaf) continue;
        Tensor again = eval(node);
        if (!again.same_shape(node.out)) return false;
        if (std::memcmp(again.data().data(), node.out.data().data(),
                        again.size() * sizeof(double)) != 0)
            return false;
    }
    return true;
}

Gradients Tape::gradient(Value output, std::size_t flat_element) const {
    check(output);
    const Node& root = nodes_[output.id];
    if (flat_element >= root.out.size())
        throw RejectedInput("gradient: output element out of range");

    std::vector<std::optional<Tensor>> grads(nodes_.size());
    grads[output.id].emplace(root.out.shape());
    (*grads[output.id])[flat_element] = 1.0;

    auto grad_into = [&](std::uint32_t id) -> Tensor& {
        if (!grads[id]) grads[id].emplace(nodes_[id].out.shape());
        return *grads[id];
    };

    for (std::uint32_t id = output.id + 1; id-- > 0;) {
        if (!grads[id]) continue;
        const Node& node = nodes_[id];
        const Tensor& g = *grads[id];
        auto in = [&](std::size_t i) -> const Tensor& { return nodes_[node.inputs[i]].out; };
        switch (node.op) {
            case Op::Leaf:
                break;
            case Op::Rows: {
                Tensor& dt = grad_into(node.inputs[0]);
                const std::size_t d = dt.dim(1);
                for (std::size_t r = 0; r < node.idx.size(); ++r)
                    for (std::size_t c = 0; c < d; ++c)
                        dt(static_cast<std::size_t>(node.idx[r]), c) += g(r, c);
                break;
            }
            case Op::Concat0: {
                std::size_t at = 0;
                for (std::size_t i = 0; i < node.inputs.size(); ++i) {
                    Tensor& dp = grad_into(node.inputs[i]);
                    for (std::size_t k = 0; k < dp.size(); ++k) dp[k] += g[at + k];
                    at += dp.size();
                }
                break;
            }
            case Op::Stack0: {
                const std::size_t block = in(0).size();
                for (std::size_t k = 0; k < node.inputs.size(); ++k) {
                    Tensor& dp = grad_into(node.inputs[k]);
                    for (std::size_t j = 0; j < block; ++j) dp[j] += g[k * block + j];
                }
                break;
            }
            case Op::Slice0: {
                Tensor& dt = grad_into(node.inputs[0]);
                const std::size_t block = node.out.size();
                const std::size_t base = static_cast<std::size_t>(node.idx[0]) * block;
                for (std::size_t j = 0; j < block; ++j) dt[base + j] += g[j];
                break;
            }
            case Op::RowRange: {
                Tensor& dt = grad_into(node.inputs[0]);
                const std::size_t r0 = node.idx[0], d = dt.dim(1);
                for (std::size_t j = 0; j < node.out.size(); ++j) dt[r0 * d + j] += g[j];
                break;
            }
            case Op::ColRange: {
                Tensor& dt = grad_into(node.inputs[0]);
                const std::size_t c0 = node.idx[0];
                for (std::size_t r = 0; r < node.out.dim(0); ++r)
                    for (std::size_t c = 0; c < node.out.dim(1); ++c) dt(r, c0 + c) += g(r, c);
                break;
            }
            case Op::ConcatCols: {
                std::size_t at = 0;
                for (std::size_t i = 0; i < node.inputs.size(); ++i) {
                    Tensor& dp = grad_into(node.inputs[i]);
                    for (std::size_t r = 0; r < dp.dim(0); ++r)
                        for (std::size_t c = 0; c < dp.dim(1); ++c) dp(r, c) += g(r, at + c);
                    at += dp.dim(1);
                }
                break;
            }
            case Op::Matmul: {
                // dA = G . B^T ; dB = A^T . G
                const Tensor& a = in(0);
                const Tensor& b = in(1);
                Tensor& da = grad_into(node.inputs[0]);
                Tensor& db = grad_into(node.inputs[1]);
                for (std::size_t i = 0; i < a.dim(0); ++i)
                    for (std::size_t p = 0; p < a.dim(1); ++p) {
                        double acc = 0.0;
                        for (std::size_t j = 0; j < b.dim(1); ++j) acc += g(i, j) * b(p, j);
                        da(i, p) += acc;
                    }
                for (std::size_t p = 0; p < b.dim(0); ++p)
                    for (std::size_t j = 0; j < b.dim(1); ++j) {
                        double acc = 0.0;
                        for (std::size_t i = 0; i < a.dim(0); ++i) acc += a(i, p) * g(i, j);
                        db(p, j) += acc;
                    }
                break;
            }
            case Op::Transpose: {
                Tensor& dt = grad_into(node.inputs[0]);
                for (std::size_t i = 0; i < node.out.dim(0); ++i)
                    for (std::size_t j = 0; j < node.out.dim(1); ++j) dt(j, i) += g(i, j);
                break;
            }
            case Op::Add: {
                Tensor& da = grad_into(node.inputs[0]);
                Tensor& db = grad_into(node.inputs[1]);
                for (std::size_t j = 0; j < g.size(); ++j) {
                    da[j] += g[j];
                    db[j] += g[j];
                }
                break;
            }
            case Op::AddRowVec: {
                Tensor& da = grad_into(node.inputs[0]);
                Tensor& dbias = grad_into(node.inputs[1]);
                for (std::size_t r = 0; r < node.out.dim(0); ++r)
                    for (std::size_t c = 0; c < node.out.dim(1); ++c) {
                        da(r, c) += g(r, c);
                        dbias(0, c) += g(r, c);
                    }
                break;
            }
            case Op::Scale: {
                Tensor& dt = grad_into(node.inputs[0]);
                for (std::size_t j = 0; j < g.size(); ++j) dt[j] += g[j] * node.factor;
                break;
            }
            case Op::Softmax: {
                // dx_i = y_i * (g_i - sum_j g_j y_j) per last-axis slice
                Tensor& dt = grad_into(node.inputs[0]);
                const Tensor& y = node.out;
                const std::size_t q = y.dim(y.rank() - 1);
                for (std::size_t r = 0; r < y.size() / q; ++r) {
                    const double* yv = y.data().data() + r * q;
                    const double* gv = g.data().data() + r * q;
                    double dot = 0.0;
                    for (std::size_t j = 0; j < q; ++j) dot += gv[j] * yv[j];
                    for (std::size_t j = 0; j < q; ++j) dt[r * q + j] += yv[j] * (gv[j] - dot);
                }
                break;
            }
            case Op::Relu: {
                Tensor& dt = grad_into(node.inputs[0]);
                const Tensor& x = in(0);
                for (std::size_t j = 0; j < g.size(); ++j)
                    if (x[j] > 0.0) dt[j] += g[j];
                break;
            }
            case Op::Sigmoid: {
                Tensor& dt = grad_into(node.inputs[0]);
                const Tensor& y = node.out;
                for (std::size_t j = 0; j < g.size(); ++j) dt[j] += g[j] * y[j] * (1.0 - y[j]);
                break;
            }
            case Op::CrossEntropy: {
                Tensor& dt = grad_into(node.inputs[0]);
                const Tensor& x = in(0);
                const std::size_t row = node.idx[0], label = node.idx[1], c = x.dim(1);
                const double* v = x.data().data() + row * c;
                const double mx = *std::max_element(v, v + c);
                double sum = 0.0;
                for (std::size_t j = 0; j < c; ++j) sum += std::exp(v[j] - mx);
                for (std::size_t j = 0; j < c; ++j) {
                    const double p = std::exp(v[j] - mx) / sum;
                    dt(row, j) += g[0] * (p - (j == label ? 1.0 : 0.0));
                }
                break;
            }
            case Op::L1To: {
                Tensor& dt = grad_into(node.inputs[0]);
                const Tensor& x = in(0);
                const std::size_t row = node.idx[0], d = x.dim(1);
                for (std::size_t j = 0; j < d; ++j) {
                    const double diff = x(row, j) - node.target[j];
                    dt(row, j) += g[0] * (diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0));
                }
                break;
            }
        }
    }
    return Gradients(*this, std::move(grads));
}

const Tensor* Gradients::find(Tape::Value v) const {
    tape_->check(v);
    return grads_[v.id] ? &*grads_[v.id] : nullptr;
}

Tensor Gradients::at(Tape::Value v) const {
    if (const Tensor* g = find(v)) return *g;
    return Tensor(tape_->nodes_[v.id].out.shape());
}

} // namespace attnrel
