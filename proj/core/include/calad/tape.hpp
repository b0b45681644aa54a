#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "calad/tensor.hpp"

namespace calad {

// Trainable tensor with a persistent gradient buffer. Gradients accumulate
// across backward passes until an optimizer consumes and clears them.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;

    Parameter(std::string n, Tensor v)
        : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros(value.shape)) {}

    void zero_grad() { grad.fill(0.0); }
};

class Tape;

// Handle to a tape node. Valid only while the owning tape is alive and
// has not been cleared.
class Var {
public:
    Var() = default;
    const Tensor& value() const;
    const Shape& shape() const { return value().shape; }
    bool valid() const { return tape_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* t, std::size_t i) : tape_(t), idx_(i) {}
    Tape* tape_ = nullptr;
    std::size_t idx_ = 0;
};

// Record of primitive operations in execution order. Each recorded node
// stores its forward value and a rule that scatters the node's gradient to
// its inputs. A tape is confined to one thread for its lifetime.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Constant input; receives no gradient.
    Var input(Tensor v);
    // Trainable leaf. Registering the same parameter twice returns the same
    // node, so fan-out gradients accumulate naturally.
    Var leaf(Parameter& p);

    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var a, double s);
    Var add_scalar(Var a, double s);
    // Broadcast add: b's shape must be a trailing suffix of a's shape.
    Var add_bcast(Var a, Var b);
    // a: [..., m, k] (leading dims flattened), b: [k, n].
    Var matmul(Var a, Var b);
    // Batched: a [B, m, k], b [B, k, n].
    Var bmm(Var a, Var b);
    Var permute(Var a, const std::vector<std::size_t>& perm);
    Var reshape(Var a, Shape s);
    Var relu(Var a);
    // Softmax over the trailing axis, max-subtracted.
    Var softmax(Var a);
    // Layer normalization over the trailing axis.
    Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
    // 1-D convolution over time with zero same-padding.
    // x: [n, T, c_in], w: [k, c_in, c_out], b: [c_out]; k odd.
    Var conv1d_same(Var x, Var w, Var b);
    // [n, T, d] -> [n, d].
    Var mean_time(Var x);
    Var sum_all(Var a);
    Var mean_all(Var a);
    // [..., K] -> [...].
    Var sum_lastdim(Var a);
    Var log(Var a);
    // Gradient passes only strictly inside (lo, hi).
    Var clamp(Var a, double lo, double hi);

    // Seeds d(loss)/d(loss) = 1, sweeps the tape in reverse, adds each leaf's
    // gradient into its Parameter::grad, then clears the tape.
    void backward(Var loss);
    void clear();

    const Tensor& value(Var v) const;
    std::size_t size() const { return nodes_.size(); }

private:
    friend class Var;
    struct Node {
        Tensor value;
        Tensor grad;  // allocated on first use during backward
        bool requires_grad = false;
        Parameter* param = nullptr;
        std::function<void(Tape&, std::size_t)> back;
    };

    std::vector<Node> nodes_;
    std::unordered_map<Parameter*, std::size_t> leaves_;

    std::size_t push(Tensor value, bool requires_grad, std::function<void(Tape&, std::size_t)> back);
    Tensor& grad_of(std::size_t idx);
    bool has_grad(std::size_t idx) const { return !nodes_[idx].grad.data.empty(); }
    const Node& node(std::size_t idx) const { return nodes_[idx]; }
    void check_same_tape(Var v) const;
};

// Convenience compositions used by the model code.
Var mse(Tape& t, Var a, Var b);                           // mean over all entries
Var squared_distance_rows(Tape& t, Var a, Var b);         // [n, d] -> [n]
Var dot_rows(Tape& t, Var a, Var b);                      // [n, d] -> [n]

}  // namespace calad
