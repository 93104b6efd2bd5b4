#pragma once

#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "appraisal/rng.hpp"

namespace appraisal::tensor {

/// Dense double-precision array of rank 1 or 2, row-major.
class Tensor {
public:
    Tensor() = default;
    /// Zero-filled.
    explicit Tensor(std::vector<std::size_t> shape);
    Tensor(std::vector<std::size_t> shape, std::vector<double> values);

    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values = {});
    static Tensor vector(std::vector<double> values);
    static Tensor scalar(double value) { return vector({value}); }
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    /// A rank-1 tensor reads as a single row.
    std::size_t rows() const { return shape_.size() == 2 ? shape_[0] : 1; }
    std::size_t cols() const { return shape_.empty() ? 0 : shape_.back(); }
    std::size_t size() const { return values_.size(); }

    std::span<double> data() { return values_; }
    std::span<const double> data() const { return values_; }
    const std::vector<double>& values() const { return values_; }

    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }
    double& operator()(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
    double operator()(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;
    void fill(double v);
    std::string shape_string() const;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    std::vector<std::size_t> shape_;
    std::vector<double> values_;
};

/// Trainable leaf. `grad` accumulates across backward passes until zeroed.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;

    void zero_grad();
};

class Tape;

/// Handle to a node on a tape.
class Var {
public:
    Var() = default;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape& tape() const { return *tape_; }
    std::size_t id() const { return id_; }
    const Tensor& value() const;
    const Tensor& grad() const;

private:
    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Records operations in execution order; backward walks them in exact reverse.
class Tape {
public:
    using Backward = std::function<void(Tape&, std::size_t self)>;

    Var constant(Tensor value);
    /// Constant leaf that refers to `value` without copying; it must outlive the tape.
    Var constant_ref(const Tensor& value);
    /// Leaf whose gradient is added to `param.grad` by backward().
    Var parameter(Parameter& param);

    const Tensor& value(std::size_t id) const;
    const Tensor& grad(std::size_t id) const;
    /// Mutable gradient slot, allocated on first touch.
    Tensor& grad_slot(std::size_t id);
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    std::size_t size() const { return nodes_.size(); }

    /// Appends an op result; throws NumericError naming `op` when the value is not finite.
    Var record(const char* op, Tensor value, std::vector<std::size_t> inputs, Backward backward);

    /// Seeds d(loss)/d(loss) = 1, propagates, then accumulates into parameters.
    void backward(Var loss);

private:
    struct Node {
        const char* op = "";
        Tensor value;
        const Tensor* external = nullptr;
        Tensor grad;
        std::vector<std::size_t> inputs;
        Backward backward;
        Parameter* param = nullptr;
        bool requires_grad = false;
    };
    std::vector<Node> nodes_;
};

// Core ops. Shapes are checked; mismatches throw ShapeError.

Var matmul(Var a, Var b);
/// Same shapes, or a matrix plus a bias vector added to every row.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
/// Concatenation along the last axis.
Var concat(const std::vector<Var>& parts);
Var sigmoid(Var x);
Var tanh(Var x);
/// Row-wise softmax over positions where mask != 0; masked positions get exactly 0.
Var masked_softmax(Var x, const Tensor& mask);
/// Inverted dropout: kept entries scaled by 1/(1-p). Identity (same Var) when
/// not training or p == 0.
Var dropout(Var x, double p, bool training, Rng& rng);
/// Mean over rows of -log softmax(logits)[target].
Var cross_entropy_with_logits(Var logits, const std::vector<int>& targets);

// Structural helpers used by the recurrent layers.

Var sum(Var x);
Var scale(Var x, double factor);
Var slice_cols(Var x, std::size_t start, std::size_t count);
/// Multiplies row r of a matrix by s[r]; `s` is a column (rows x 1) or a vector of length rows.
Var mul_rows(Var x, Var s);

/// Plain kernels shared with non-tape code. Per-element summation order is
/// fixed (ascending inner index) regardless of operand sizes.
void gemm(const Tensor& a, const Tensor& b, Tensor& out);
double softmax_row(std::span<const double> x, std::span<const double> mask, std::span<double> out);

}  // namespace appraisal::tensor
