#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "attnrel/tensor.hpp"

namespace attnrel {

class Gradients;

// Reverse-mode operation tape. Each op records its inputs and forward value;
// gradient() replays the graph backwards from one scalar element of any node.
// Single-writer while recording, read-only afterwards.
class Tape {
public:
    struct Value {
        std::uint32_t id = kInvalid;
        bool valid() const { return id != kInvalid; }
        static constexpr std::uint32_t kInvalid = 0xffffffff;
    };

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Value leaf(Tensor t);

    // Gather rows of a 2-D table: out[i] = table[indices[i]].
    Value rows(Value table, std::vector<int> indices);
    // Stack 2-D blocks vertically.
    Value concat0(const std::vector<Value>& parts);
    // Stack k 2-D tensors of equal shape into [k, s, q].
    Value stack0(const std::vector<Value>& parts);
    // Select one leading slice of a 3-D tensor: [k, s, q] -> [s, q].
    Value slice0(Value a, std::size_t index);
    // Contiguous row / column ranges of a 2-D tensor.
    Value row_range(Value a, std::size_t r0, std::size_t r1);
    Value col_range(Value a, std::size_t c0, std::size_t c1);
    // Concatenate 2-D tensors with equal row counts along columns.
    Value concat_cols(const std::vector<Value>& parts);

    Value matmul(Value a, Value b); // 2-D x 2-D
    Value transpose(Value a);       // 2-D
    Value add(Value a, Value b);
    // [n, d] + [1, d], broadcast over rows.
    Value add_rowvec(Value a, Value bias);
    Value scale(Value a, double factor);
    Value softmax(Value a); // last axis
    Value relu(Value a);
    Value sigmoid(Value a);

    // Scalar [1]: -log softmax(logits[row])[label].
    Value cross_entropy(Value logits, std::size_t row, std::size_t label);
    // Scalar [1]: sum_i |a[row, i] - target[i]|.
    Value l1_to(Value a, std::size_t row, std::vector<double> target);

    const Tensor& value(Value v) const;
    std::size_t node_count() const { return nodes_.size(); }

    // Recompute every node from its inputs and compare bit-for-bit with the
    // recorded forward values.
    bool replay_matches() const;

    // d(output[flat_element]) / d(every node). output must index a recorded
    // node; flat_element addresses its data row-major.
    Gradients gradient(Value output, std::size_t flat_element) const;

private:
    enum class Op : std::uint8_t {
        Leaf,
        Rows,
        Concat0,
        Stack0,
        Slice0,
        RowRange,
        ColRange,
        ConcatCols,
        Matmul,
        Transpose,
        Add,
        AddRowVec,
        Scale,
        Softmax,
        Relu,
        Sigmoid,
        CrossEntropy,
        L1To,
    };

    struct Node {
        Op op;
        std::vector<std::uint32_t> inputs;
        Tensor out;
        std::vector<int> idx;       // gather indices / range bounds / (row,label)
        std::vector<double> target; // l1 target
        double factor = 0.0;
    };

    Value push(Node node);
    Tensor eval(const Node& node) const;
    void check(Value v) const;

    std::vector<Node> nodes_;

    friend class Gradients;
};

// Gradient of one scalar with respect to every tape node. Nodes the scalar
// does not depend on report a zero tensor.
class Gradients {
public:
    // Non-null for nodes reached by the backward sweep.
    const Tensor* find(Tape::Value v) const;
    // Always materializes: zeros when the node was not reached.
    Tensor at(Tape::Value v) const;

private:
    Gradients(const Tape& tape, std::vector<std::optional<Tensor>> grads)
        : tape_(&tape), grads_(std::move(grads)) {}

    const Tape* tape_;
    std::vector<std::optional<Tensor>> grads_;

    friend class Tape;
};

} // namespace attnrel
