#include "appraisal/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "appraisal/errors.hpp"

namespace appraisal::tensor {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

void check_rank(const std::vector<std::size_t>& shape) {
    if (shape.empty() || shape.size() > 2) throw ShapeError("tensors are 1-D or 2-D");
}

[[noreturn]] void shape_fail(const char* op, const Tensor& a, const Tensor& b) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + a.shape_string() + " and " + b.shape_string());
}

void accumulate(Tensor& into, std::span<const double> from) {
    auto dst = into.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += from[i];
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
    check_rank(shape_);
    values_.assign(product(shape_), 0.0);
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
    check_rank(shape_);
    if (values_.size() != product(shape_)) {
        throw ShapeError("tensor of shape " + shape_string() + " given " + std::to_string(values_.size()) + " values");
    }
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
    if (values.empty()) values.assign(rows * cols, 0.0);
    return Tensor({rows, cols}, std::move(values));
}

Tensor Tensor::vector(std::vector<double> values) {
    const auto n = values.size();
    return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> values;
    for (const auto& row : rows) {
        if (row.size() != c) throw ShapeError("ragged matrix literal");
        values.insert(values.end(), row.begin(), row.end());
    }
    return matrix(r, c, std::move(values));
}

bool Tensor::all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

std::string Tensor::shape_string() const {
    std::string s = "(";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape_[i]);
    }
    return s + ")";
}

void Parameter::zero_grad() {
    if (!grad.same_shape(value)) grad = Tensor(value.shape());
    grad.fill(0.0);
}

const Tensor& Var::value() const { return tape_->value(id_); }
const Tensor& Var::grad() const { return tape_->grad(id_); }

Var Tape::constant(Tensor value) {
    if (!value.all_finite()) throw NumericError("constant: non-finite input");
    Node node;
    node.op = "constant";
    node.value = std::move(value);
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

Var Tape::constant_ref(const Tensor& value) {
    if (!value.all_finite()) throw NumericError("constant: non-finite input");
    Node node;
    node.op = "constant";
    node.external = &value;
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Parameter& param) {
    if (!param.value.all_finite()) throw NumericError("parameter '" + param.name + "' holds non-finite values");
    Node node;
    node.op = "parameter";
    node.external = &param.value;
    node.param = &param;
    node.requires_grad = true;
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::value(std::size_t id) const {
    const auto& n = nodes_.at(id);
    return n.external ? *n.external : n.value;
}

const Tensor& Tape::grad(std::size_t id) const {
    const auto& n = nodes_.at(id);
    return n.grad;
}

Tensor& Tape::grad_slot(std::size_t id) {
    auto& n = nodes_[id];
    if (n.grad.size() == 0 && value(id).size() != 0) n.grad = Tensor(value(id).shape());
    return n.grad;
}

Var Tape::record(const char* op, Tensor value, std::vector<std::size_t> inputs, Backward backward) {
    if (!value.all_finite()) throw NumericError(std::string(op) + ": produced a non-finite value");
    Node node;
    node.op = op;
    node.value = std::move(value);
    for (auto in : inputs) node.requires_grad = node.requires_grad || nodes_.at(in).requires_grad;
    node.inputs = std::move(inputs);
    if (node.requires_grad) node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

void Tape::backward(Var loss) {
    if (&loss.tape() != this) throw UsageError("backward: loss belongs to another tape");
    const auto root = loss.id();
    if (value(root).size() != 1) {
        throw UsageError("backward: loss must be a scalar, got shape " + value(root).shape_string());
    }
    for (auto& n : nodes_) n.grad = Tensor();
    grad_slot(root)[0] = 1.0;
    for (std::size_t k = root + 1; k-- > 0;) {
        auto& n = nodes_[k];
        if (!n.requires_grad || n.grad.size() == 0) continue;
        if (n.backward) n.backward(*this, k);
    }
    for (auto& n : nodes_) {
        if (!n.param) continue;
        if (!n.param->grad.same_shape(n.param->value)) n.param->zero_grad();
        if (n.grad.size() != 0) accumulate(n.param->grad, n.grad.data());
    }
}

// ---------------------------------------------------------------- kernels

void gemm(const Tensor& a, const Tensor& b, Tensor& out) {
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    const double* A = a.data().data();
    const double* B = b.data().data();
    double* C = out.data().data();
    std::fill(C, C + m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = C + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = A[i * k + p];
            const double* brow = B + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

namespace {

// out += g * b^T   (g: m x n, b: k x n, out: m x k)
void gemm_nt_acc(const Tensor& g, const Tensor& b, Tensor& out) {
    const std::size_t m = g.rows(), n = g.cols(), k = b.rows();
    const double* G = g.data().data();
    const double* B = b.data().data();
    double* O = out.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            double s = 0;
            const double* grow = G + i * n;
            const double* brow = B + p * n;
            for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
            O[i * k + p] += s;
        }
    }
}

// out += a^T * g   (a: m x k, g: m x n, out: k x n)
void gemm_tn_acc(const Tensor& a, const Tensor& g, Tensor& out) {
    const std::size_t m = a.rows(), k = a.cols(), n = g.cols();
    const double* A = a.data().data();
    const double* G = g.data().data();
    double* O = out.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        const double* grow = G + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = A[i * k + p];
            if (av == 0) continue;
            double* orow = O + p * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * grow[j];
        }
    }
}

}  // namespace

double softmax_row(std::span<const double> x, std::span<const double> mask, std::span<double> out) {
    double mx = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t j = 0; j < x.size(); ++j) {
        if (mask[j] != 0) {
            mx = std::max(mx, x[j]);
            any = true;
        }
    }
    if (!any) throw UsageError("masked_softmax: every position is masked");
    double total = 0;
    for (std::size_t j = 0; j < x.size(); ++j) {
        out[j] = mask[j] != 0 ? std::exp(x[j] - mx) : 0.0;
        total += out[j];
    }
    for (std::size_t j = 0; j < x.size(); ++j) out[j] /= total;
    return total;
}

// ---------------------------------------------------------------- ops

Var matmul(Var a, Var b) {
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    if (A.rank() != 2 || B.rank() != 2 || A.cols() != B.rows()) shape_fail("matmul", A, B);
    Tensor out = Tensor::matrix(A.rows(), B.cols());
    gemm(A, B, out);
    const auto ia = a.id(), ib = b.id();
    return a.tape().record("matmul", std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        if (t.requires_grad(ia)) gemm_nt_acc(g, t.value(ib), t.grad_slot(ia));
        if (t.requires_grad(ib)) gemm_tn_acc(t.value(ia), g, t.grad_slot(ib));
    });
}

namespace {

Var add_sub(Var a, Var b, double sign, const char* op) {
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    const bool bias = A.rank() == 2 && B.rank() == 1 && B.cols() == A.cols();
    if (!A.same_shape(B) && !bias) shape_fail(op, A, B);
    Tensor out = A;
    auto o = out.data();
    auto bv = B.data();
    const std::size_t cols = A.cols();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += sign * bv[bias ? i % cols : i];
    const auto ia = a.id(), ib = b.id();
    return a.tape().record(op, std::move(out), {ia, ib}, [ia, ib, sign, bias, cols](Tape& t, std::size_t self) {
        const auto g = t.grad(self).data();
        if (t.requires_grad(ia)) accumulate(t.grad_slot(ia), g);
        if (t.requires_grad(ib)) {
            auto gb = t.grad_slot(ib).data();
            for (std::size_t i = 0; i < g.size(); ++i) gb[bias ? i % cols : i] += sign * g[i];
        }
    });
}

Var unary(Var x, const char* op, double (*f)(double), double (*df_from_y)(double)) {
    Tensor out = x.value();
    for (auto& v : out.data()) v = f(v);
    const auto ix = x.id();
    return x.tape().record(op, std::move(out), {ix}, [ix, df_from_y](Tape& t, std::size_t self) {
        const auto g = t.grad(self).data();
        const auto y = t.value(self).data();
        auto gx = t.grad_slot(ix).data();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df_from_y(y[i]);
    });
}

double sigmoid_fn(double v) {
    if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
}

}  // namespace

Var add(Var a, Var b) { return add_sub(a, b, 1.0, "add"); }
Var sub(Var a, Var b) { return add_sub(a, b, -1.0, "sub"); }

Var mul(Var a, Var b) {
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    if (!A.same_shape(B)) shape_fail("mul", A, B);
    Tensor out = A;
    auto o = out.data();
    auto bv = B.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
    const auto ia = a.id(), ib = b.id();
    return a.tape().record("mul", std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
        const auto g = t.grad(self).data();
        if (t.requires_grad(ia)) {
            auto ga = t.grad_slot(ia).data();
            const auto bv = t.value(ib).data();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
        }
        if (t.requires_grad(ib)) {
            auto gb = t.grad_slot(ib).data();
            const auto av = t.value(ia).data();
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
        }
    });
}

Var concat(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    const Tensor& first = parts[0].value();
    const std::size_t rows = first.rows();
    std::vector<std::size_t> widths;
    std::size_t total = 0;
    for (const auto& p : parts) {
        const Tensor& v = p.value();
        if (v.rank() != first.rank() || v.rows() != rows) shape_fail("concat", first, v);
        widths.push_back(v.cols());
        total += v.cols();
    }
    Tensor out = first.rank() == 1 ? Tensor({total}) : Tensor::matrix(rows, total);
    std::size_t offset = 0;
    std::vector<std::size_t> ids;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const Tensor& v = parts[k].value();
        for (std::size_t r = 0; r < rows; ++r) {
            std::copy_n(v.data().data() + r * widths[k], widths[k], out.data().data() + r * total + offset);
        }
        offset += widths[k];
        ids.push_back(parts[k].id());
    }
    return parts[0].tape().record("concat", std::move(out), ids, [ids, widths, rows, total](Tape& t, std::size_t self) {
        const auto g = t.grad(self).data();
        std::size_t off = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
            if (t.requires_grad(ids[k])) {
                auto gk = t.grad_slot(ids[k]).data();
                for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t c = 0; c < widths[k]; ++c) gk[r * widths[k] + c] += g[r * total + off + c];
                }
            }
            off += widths[k];
        }
    });
}

Var sigmoid(Var x) {
    return unary(x, "sigmoid", sigmoid_fn, [](double y) { return y * (1.0 - y); });
}

Var tanh(Var x) {
    return unary(x, "tanh", [](double v) { return std::tanh(v); }, [](double y) { return 1.0 - y * y; });
}

Var masked_softmax(Var x, const Tensor& mask) {
    const Tensor& X = x.value();
    if (!X.same_shape(mask)) shape_fail("masked_softmax", X, mask);
    Tensor out(X.shape());
    const std::size_t rows = X.rows(), cols = X.cols();
    for (std::size_t r = 0; r < rows; ++r) {
        softmax_row(X.data().subspan(r * cols, cols), mask.data().subspan(r * cols, cols),
                    out.data().subspan(r * cols, cols));
    }
    const auto ix = x.id();
    return x.tape().record("masked_softmax", std::move(out), {ix}, [ix, rows, cols](Tape& t, std::size_t self) {
        const auto g = t.grad(self).data();
        const auto y = t.value(self).data();
        auto gx = t.grad_slot(ix).data();
        for (std::size_t r = 0; r < rows; ++r) {
            double dot = 0;
            for (std::size_t c = 0; c < cols; ++c) dot += g[r * cols + c] * y[r * cols + c];
            for (std::size_t c = 0; c < cols; ++c) {
                const std::size_t i = r * cols + c;
                gx[i] += y[i] * (g[i] - dot);
            }
        }
    });
}

Var dropout(Var x, double p, bool training, Rng& rng) {
    if (!(p >= 0.0 && p < 1.0)) throw UsageError("dropout: probability must lie in [0, 1)");
    if (!training || p == 0.0) return x;
    const double keep_scale = 1.0 / (1.0 - p);
    Tensor mask(x.value().shape());
    for (auto& m : mask.data()) m = rng.uniform() >= p ? keep_scale : 0.0;
    Tensor out = x.value();
    auto o = out.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] *= mask[i];
    const auto ix = x.id();
    return x.tape().record("dropout", std::move(out), {ix}, [ix, mask = std::move(mask)](Tape& t, std::size_t self) {
        const auto g = t.grad(self).data();
        auto gx = t.grad_slot(ix).data();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
    });
}

Var cross_entropy_with_logits(Var logits, const std::vector<int>& targets) {
    const Tensor& Z = logits.value();
    const std::size_t rows = Z.rows(), cols = Z.cols();
    if (targets.size() != rows) {
        throw ShapeError("cross_entropy_with_logits: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(rows) + " rows");
    }
    Tensor probs(Z.shape());
    const std::vector<double> ones(cols, 1.0);
    double loss = 0;
    for (std::size_t r = 0; r < rows; ++r) {
        const int target = targets[r];
        if (target < 0 || static_cast<std::size_t>(target) >= cols) throw ShapeError("cross_entropy: target out of range");
        const auto row = Z.data().subspan(r * cols, cols);
        double mx = *std::max_element(row.begin(), row.end());
        double total = 0;
        for (double v : row) total += std::exp(v - mx);
        loss += (mx + std::log(total)) - row[static_cast<std::size_t>(target)];
        softmax_row(row, ones, probs.data().subspan(r * cols, cols));
    }
    loss /= static_cast<double>(rows);
    const auto iz = logits.id();
    return logits.tape().record("cross_entropy_with_logits", Tensor::scalar(loss), {iz},
                                [iz, rows, cols, targets, probs = std::move(probs)](Tape& t, std::size_t self) {
                                    const double g = t.grad(self)[0] / static_cast<double>(rows);
                                    auto gz = t.grad_slot(iz).data();
                                    for (std::size_t r = 0; r < rows; ++r) {
                                        for (std::size_t c = 0; c < cols; ++c) {
                                            const double onehot =
                                                static_cast<int>(c) == targets[r] ? 1.0 : 0.0;
                                            gz[r * cols + c] += g * (probs[r * cols + c] - onehot);
                                        }
                                    }
                                });
}

Var sum(Var x) {
    double s = 0;
    for (double v : x.value().data()) s += v;
    const auto ix = x.id();
    return x.tape().record("sum", Tensor::scalar(s), {ix}, [ix](Tape& t, std::size_t self) {
        const double g = t.grad(self)[0];
        for (auto& v : t.grad_slot(ix).data()) v += g;
    });
}

Var scale(Var x, double factor) {
    Tensor out = x.value();
    for (auto& v : out.data()) v *= factor;
    const auto ix = x.id();
    return x.tape().record("scale", std::move(out), {ix}, [ix, factor](Tape& t, std::size_t self) {
        const auto g = t.grad(self).data();
        auto gx = t.grad_slot(ix).data();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += factor * g[i];
    });
}

Var slice_cols(Var x, std::size_t start, std::size_t count) {
    const Tensor& X = x.value();
    if (X.rank() != 2 || start + count > X.cols()) {
        throw ShapeError("slice_cols: columns [" + std::to_string(start) + ", " + std::to_string(start + count) +
                         ") out of range for " + X.shape_string());
    }
    const std::size_t rows = X.rows(), cols = X.cols();
    Tensor out = Tensor::matrix(rows, count);
    for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(X.data().data() + r * cols + start, count, out.data().data() + r * count);
    }
    const auto ix = x.id();
    return x.tape().record("slice_cols", std::move(out), {ix}, [ix, rows, cols, start, count](Tape& t, std::size_t self) {
        const auto g = t.grad(self).data();
        auto gx = t.grad_slot(ix).data();
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < count; ++c) gx[r * cols + start + c] += g[r * count + c];
        }
    });
}

Var mul_rows(Var x, Var s) {
    const Tensor& X = x.value();
    const Tensor& S = s.value();
    const std::size_t rows = X.rows(), cols = X.cols();
    if (X.rank() != 2 || S.size() != rows || (S.rank() == 2 && S.cols() != 1)) shape_fail("mul_rows", X, S);
    Tensor out = X;
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) out(r, c) *= S[r];
    }
    const auto ix = x.id(), is = s.id();
    return x.tape().record("mul_rows", std::move(out), {ix, is}, [ix, is, rows, cols](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        if (t.requires_grad(ix)) {
            const Tensor& sv = t.value(is);
            Tensor& gx = t.grad_slot(ix);
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t c = 0; c < cols; ++c) gx(r, c) += g(r, c) * sv[r];
            }
        }
        if (t.requires_grad(is)) {
            const Tensor& xv = t.value(ix);
            Tensor& gs = t.grad_slot(is);
            for (std::size_t r = 0; r < rows; ++r) {
                double acc = 0;
                for (std::size_t c = 0; c < cols; ++c) acc += g(r, c) * xv(r, c);
                gs[r] += acc;
            }
        }
    });
}

}  // namespace appraisal::tensor
