/*
 * Copyright 2026 The framesft Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#include "sft/autodiff.hpp"

#include "sft/sym3.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

namespace sft::ad {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using MatrixMap = Eigen::Map<RowMatrix>;

void require_same_shape(const char* op, const Tensor& a, const Tensor& b)
{
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                                    shape_string(b.shape()));
}

void require_rank(const char* op, const Tensor& a, std::size_t rank)
{
    if (a.rank() != rank)
        throw std::invalid_argument(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                                    shape_string(a.shape()));
}

Tape& tape_of(Var a)
{
    if (!a.valid())
        throw std::invalid_argument("operation on an unbound Var");
    return *a.tape();
}

template <typename Fn, typename Dfn>
Var unary(const char* op, Var a, Fn&& value_fn, Dfn derivative)
{
    Tape& tape = tape_of(a);
    const Tensor& x = a.value();
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i)
        y[i] = value_fn(x[i]);
    return tape.record(op, std::move(y), {a}, [a, derivative](Tape& t, const Tensor& g) {
        Tensor* slot = t.gradient_slot(a);
        if (slot == nullptr)
            return;
        const Tensor& x = t.value(a);
        for (std::size_t i = 0; i < x.size(); ++i)
            (*slot)[i] += g[i] * derivative(x[i], 0.0);
    });
}

Eigen::Map<const Eigen::Matrix<double, 3, 3, Eigen::RowMajor>> mat3_at(const Tensor& t, std::size_t i)
{
    return Eigen::Map<const Eigen::Matrix<double, 3, 3, Eigen::RowMajor>>(t.data() + 9 * i);
}

} // namespace

// ---- Var / Tape ---------------------------------------------------------------

const Tensor& Var::value() const { return tape_of(*this).value(*this); }
Tensor Var::gradient() const { return tape_of(*this).gradient(*this); }

Tape::Node& Tape::node(Var v)
{
    if (v.tape() != this || v.id() < 0 || static_cast<std::size_t>(v.id()) >= nodes_.size())
        throw std::invalid_argument("Var does not belong to this tape");
    return nodes_[static_cast<std::size_t>(v.id())];
}

const Tape::Node& Tape::node(Var v) const { return const_cast<Tape*>(this)->node(v); }

Var Tape::constant(Tensor value, std::string name)
{
    nodes_.push_back(Node{std::move(name), std::move(value), {}, false, false, {}, {}});
    return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::variable(Tensor value, std::string name)
{
    nodes_.push_back(Node{std::move(name), std::move(value), {}, true, false, {}, {}});
    return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::record(std::string op, Tensor value, std::vector<Var> inputs, BackwardFn backward)
{
    Node n;
    n.op = std::move(op);
    n.value = std::move(value);
    for (const Var& in : inputs) {
        const Node& src = node(in);
        n.needs_grad = n.needs_grad || src.needs_grad;
        n.inputs.push_back(in.id());
    }
    if (n.needs_grad)
        n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<int>(nodes_.size() - 1));
}

const Tensor& Tape::value(Var v) const { return node(v).value; }

Tensor Tape::gradient(Var v) const
{
    const Node& n = node(v);
    if (n.has_grad)
        return n.grad;
    return Tensor(n.value.shape());
}

bool Tape::requires_grad(Var v) const { return node(v).needs_grad; }
const std::string& Tape::op_name(Var v) const { return node(v).op; }

Tensor* Tape::gradient_slot(Var v)
{
    Node& n = node(v);
    if (!n.needs_grad)
        return nullptr;
    if (!n.has_grad) {
        n.grad = Tensor(n.value.shape());
        n.has_grad = true;
    }
    return &n.grad;
}

void Tape::accumulate(Var v, const Tensor& g)
{
    Tensor* slot = gradient_slot(v);
    if (slot == nullptr)
        return;
    require_same_shape("accumulate", *slot, g);
    for (std::size_t i = 0; i < g.size(); ++i)
        (*slot)[i] += g[i];
}

void Tape::backward(Var output)
{
    Node& out = node(output);
    if (out.value.size() != 1)
        throw std::invalid_argument("backward() requires a scalar output, got shape " +
                                    shape_string(out.value.shape()));
    // Leaves accumulate across passes; interior adjoints start from zero.
    for (int id = output.id(); id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (n.backward && n.has_grad) {
            n.grad = Tensor();
            n.has_grad = false;
        }
    }
    Tensor* seed = gradient_slot(output);
    if (seed == nullptr)
        return;
    (*seed)[0] += 1.0;

    for (int id = output.id(); id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.has_grad)
            continue;
        if (!n.grad.all_finite())
            throw GradientError("non-finite gradient at node " + std::to_string(id) + " (" + n.op + ")");
        if (n.backward)
            n.backward(*this, n.grad);
    }
}

void Tape::zero_grad()
{
    for (Node& n : nodes_) {
        n.grad = Tensor();
        n.has_grad = false;
    }
}

void Tape::write_gradient_norms_csv(std::ostream& out) const
{
    out << "node,op,size,grad_norm\n";
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const Node& n = nodes_[i];
        double sq = 0.0;
        if (n.has_grad)
            for (double g : n.grad.values())
                sq += g * g;
        out << i << ',' << n.op << ',' << n.value.size() << ',' << std::sqrt(sq) << '\n';
    }
}

// ---- elementwise -------------------------------------------------------------

Var add(Var a, Var b)
{
    Tape& tape = tape_of(a);
    require_same_shape("add", a.value(), b.value());
    Tensor y = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < y.size(); ++i)
        y[i] += bv[i];
    return tape.record("add", std::move(y), {a, b}, [a, b](Tape& t, const Tensor& g) {
        t.accumulate(a, g);
        t.accumulate(b, g);
    });
}

Var sub(Var a, Var b)
{
    Tape& tape = tape_of(a);
    require_same_shape("sub", a.value(), b.value());
    Tensor y = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < y.size(); ++i)
        y[i] -= bv[i];
    return tape.record("sub", std::move(y), {a, b}, [a, b](Tape& t, const Tensor& g) {
        t.accumulate(a, g);
        if (Tensor* slot = t.gradient_slot(b))
            for (std::size_t i = 0; i < g.size(); ++i)
                (*slot)[i] -= g[i];
    });
}

Var mul(Var a, Var b)
{
    Tape& tape = tape_of(a);
    require_same_shape("mul", a.value(), b.value());
    Tensor y = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < y.size(); ++i)
        y[i] *= bv[i];
    return tape.record("mul", std::move(y), {a, b}, [a, b](Tape& t, const Tensor& g) {
        if (Tensor* slot = t.gradient_slot(a)) {
            const Tensor& bv = t.value(b);
            for (std::size_t i = 0; i < g.size(); ++i)
                (*slot)[i] += g[i] * bv[i];
        }
        if (Tensor* slot = t.gradient_slot(b)) {
            const Tensor& av = t.value(a);
            for (std::size_t i = 0; i < g.size(); ++i)
                (*slot)[i] += g[i] * av[i];
        }
    });
}

Var scale(Var a, double factor)
{
    Tape& tape = tape_of(a);
    Tensor y = a.value();
    for (double& v : y.storage())
        v *= factor;
    return tape.record("scale", std::move(y), {a}, [a, factor](Tape& t, const Tensor& g) {
        if (Tensor* slot = t.gradient_slot(a))
            for (std::size_t i = 0; i < g.size(); ++i)
                (*slot)[i] += factor * g[i];
    });
}

Var relu(Var a)
{
    return unary("relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
                 [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var abs(Var a)
{
    return unary("abs", a, [](double x) { return std::abs(x); },
                 [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var exp(Var a)
{
    return unary("exp", a, [](double x) { return std::exp(x); }, [](double x, double) { return std::exp(x); });
}

Var square(Var a)
{
    return unary("square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

// ---- reductions and linear algebra -----------------------------------------

Var sum(Var a)
{
    Tape& tape = tape_of(a);
    double s = 0.0;
    for (double v : a.value().values())
        s += v;
    return tape.record("sum", Tensor::scalar(s), {a}, [a](Tape& t, const Tensor& g) {
        if (Tensor* slot = t.gradient_slot(a))
            for (double& v : slot->storage())
                v += g[0];
    });
}

Var mean(Var a)
{
    const std::size_t n = a.value().size();
    if (n == 0)
        throw std::invalid_argument("mean of an empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var matmul(Var a, Var b)
{
    Tape& tape = tape_of(a);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    require_rank("matmul", av, 2);
    require_rank("matmul", bv, 2);
    const auto n = static_cast<Eigen::Index>(av.dim(0)), k = static_cast<Eigen::Index>(av.dim(1));
    const auto m = static_cast<Eigen::Index>(bv.dim(1));
    if (static_cast<Eigen::Index>(bv.dim(0)) != k)
        throw std::invalid_argument("matmul: inner dimensions differ " + shape_string(av.shape()) + " x " +
                                    shape_string(bv.shape()));
    Tensor y({av.dim(0), bv.dim(1)});
    MatrixMap(y.data(), n, m).noalias() = ConstMatrixMap(av.data(), n, k) * ConstMatrixMap(bv.data(), k, m);
    return tape.record("matmul", std::move(y), {a, b}, [a, b, n, k, m](Tape& t, const Tensor& g) {
        ConstMatrixMap gm(g.data(), n, m);
        if (Tensor* slot = t.gradient_slot(a))
            MatrixMap(slot->data(), n, k).noalias() += gm * ConstMatrixMap(t.value(b).data(), k, m).transpose();
        if (Tensor* slot = t.gradient_slot(b))
            MatrixMap(slot->data(), k, m).noalias() += ConstMatrixMap(t.value(a).data(), n, k).transpose() * gm;
    });
}

Var add_bias(Var x, Var bias)
{
    Tape& tape = tape_of(x);
    const Tensor& xv = x.value();
    const Tensor& bv = bias.value();
    require_rank("add_bias", xv, 2);
    if (bv.size() != xv.dim(1))
        throw std::invalid_argument("add_bias: bias size " + std::to_string(bv.size()) + " vs width " +
                                    std::to_string(xv.dim(1)));
    const std::size_t rows = xv.dim(0), cols = xv.dim(1);
    Tensor y = xv;
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c)
            y[r * cols + c] += bv[c];
    return tape.record("add_bias", std::move(y), {x, bias}, [x, bias, rows, cols](Tape& t, const Tensor& g) {
        t.accumulate(x, g);
        if (Tensor* slot = t.gradient_slot(bias))
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < cols; ++c)
                    (*slot)[c] += g[r * cols + c];
    });
}

Var column(Var x, std::size_t j)
{
    Tape& tape = tape_of(x);
    const Tensor& xv = x.value();
    require_rank("column", xv, 2);
    const std::size_t rows = xv.dim(0), cols = xv.dim(1);
    if (j >= cols)
        throw std::out_of_range("column index out of range");
    Tensor y({rows});
    for (std::size_t r = 0; r < rows; ++r)
        y[r] = xv[r * cols + j];
    return tape.record("column", std::move(y), {x}, [x, j, rows, cols](Tape& t, const Tensor& g) {
        if (Tensor* slot = t.gradient_slot(x))
            for (std::size_t r = 0; r < rows; ++r)
                (*slot)[r * cols + j] += g[r];
    });
}

Var row_norm(Var x)
{
    Tape& tape = tape_of(x);
    const Tensor& xv = x.value();
    require_rank("row_norm", xv, 2);
    const std::size_t rows = xv.dim(0), cols = xv.dim(1);
    Tensor y({rows});
    for (std::size_t r = 0; r < rows; ++r) {
        double sq = 0.0;
        for (std::size_t c = 0; c < cols; ++c)
            sq += xv[r * cols + c] * xv[r * cols + c];
        y[r] = std::sqrt(sq);
    }
    return tape.record("row_norm", std::move(y), {x}, [x, rows, cols](Tape& t, const Tensor& g) {
        Tensor* slot = t.gradient_slot(x);
        if (slot == nullptr)
            return;
        const Tensor& xv = t.value(x);
        for (std::size_t r = 0; r < rows; ++r) {
            double sq = 0.0;
            for (std::size_t c = 0; c < cols; ++c)
                sq += xv[r * cols + c] * xv[r * cols + c];
            if (sq == 0.0)
                continue;
            const double norm = std::sqrt(sq);
            for (std::size_t c = 0; c < cols; ++c)
                (*slot)[r * cols + c] += g[r] * xv[r * cols + c] / norm;
        }
    });
}

Var gather_rows(Var x, std::vector<int> indices)
{
    Tape& tape = tape_of(x);
    const Tensor& xv = x.value();
    require_rank("gather_rows", xv, 2);
    const std::size_t cols = xv.dim(1);
    Tensor y({indices.size(), cols});
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const auto src = static_cast<std::size_t>(indices[i]);
        if (indices[i] < 0 || src >= xv.dim(0))
            throw std::out_of_range("gather_rows: index " + std::to_string(indices[i]) + " out of range");
        std::copy_n(xv.data() + src * cols, cols, y.data() + i * cols);
    }
    return tape.record("gather_rows", std::move(y), {x}, [x, idx = std::move(indices), cols](Tape& t, const Tensor& g) {
        if (Tensor* slot = t.gradient_slot(x))
            for (std::size_t i = 0; i < idx.size(); ++i)
                for (std::size_t c = 0; c < cols; ++c)
                    (*slot)[static_cast<std::size_t>(idx[i]) * cols + c] += g[i * cols + c];
    });
}

Var concat_rows(const std::vector<Var>& parts)
{
    if (parts.empty())
        throw std::invalid_argument("concat_rows: no inputs");
    Tape& tape = tape_of(parts.front());
    Shape tail(parts.front().shape().begin() + 1, parts.front().shape().end());
    std::size_t rows = 0;
    std::vector<double> data;
    for (const Var& p : parts) {
        const Tensor& v = p.value();
        if (Shape(v.shape().begin() + 1, v.shape().end()) != tail)
            throw std::invalid_argument("concat_rows: trailing shapes differ");
        rows += v.dim(0);
        data.insert(data.end(), v.values().begin(), v.values().end());
    }
    Shape shape{rows};
    shape.insert(shape.end(), tail.begin(), tail.end());
    return tape.record("concat_rows", Tensor(std::move(shape), std::move(data)), parts,
                       [parts](Tape& t, const Tensor& g) {
                           std::size_t offset = 0;
                           for (const Var& p : parts) {
                               const std::size_t n = t.value(p).size();
                               if (Tensor* slot = t.gradient_slot(p))
                                   for (std::size_t i = 0; i < n; ++i)
                                       (*slot)[i] += g[offset + i];
                               offset += n;
                           }
                       });
}

Var reshape(Var x, Shape shape)
{
    Tape& tape = tape_of(x);
    Tensor y = x.value().reshaped(std::move(shape));
    return tape.record("reshape", std::move(y), {x}, [x](Tape& t, const Tensor& g) {
        if (Tensor* slot = t.gradient_slot(x))
            for (std::size_t i = 0; i < g.size(); ++i)
                (*slot)[i] += g[i];
    });
}

Var slice(Var x, std::size_t offset, Shape shape)
{
    Tape& tape = tape_of(x);
    const Tensor& xv = x.value();
    const std::size_t n = element_count(shape);
    if (offset + n > xv.size())
        throw std::out_of_range("slice: range exceeds tensor of size " + std::to_string(xv.size()));
    Tensor y(std::move(shape), std::vector<double>(xv.data() + offset, xv.data() + offset + n));
    return tape.record("slice", std::move(y), {x}, [x, offset, n](Tape& t, const Tensor& g) {
        if (Tensor* slot = t.gradient_slot(x))
            for (std::size_t i = 0; i < n; ++i)
                (*slot)[offset + i] += g[i];
    });
}

// ---- batched 3x3 ------------------------------------------------------------

Var det3(Var m)
{
    Tape& tape = tape_of(m);
    const Tensor& mv = m.value();
    if (mv.rank() != 2 || mv.dim(1) != 9)
        throw std::invalid_argument("det3 expects {n,9}, got " + shape_string(mv.shape()));
    const std::size_t n = mv.dim(0);
    Tensor y({n});
    for (std::size_t i = 0; i < n; ++i)
        y[i] = Mat3(mat3_at(mv, i)).determinant();
    return tape.record("det3", std::move(y), {m}, [m, n](Tape& t, const Tensor& g) {
        Tensor* slot = t.gradient_slot(m);
        if (slot == nullptr)
            return;
        const Tensor& mv = t.value(m);
        for (std::size_t i = 0; i < n; ++i) {
            const Mat3 a = mat3_at(mv, i);
            // d det / dA = cofactor matrix.
            Mat3 cof;
            cof.row(0) = a.row(1).cross(a.row(2));
            cof.row(1) = a.row(2).cross(a.row(0));
            cof.row(2) = a.row(0).cross(a.row(1));
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c)
                    (*slot)[9 * i + 3 * r + c] += g[i] * cof(r, c);
        }
    });
}

Var sym_eig3(Var m)
{
    Tape& tape = tape_of(m);
    const Tensor& mv = m.value();
    if (mv.rank() != 2 || mv.dim(1) != 9)
        throw std::invalid_argument("sym_eig3 expects {n,9}, got " + shape_string(mv.shape()));
    const std::size_t n = mv.dim(0);
    Tensor y({n, 3});
    for (std::size_t i = 0; i < n; ++i) {
        const Vec3 l = symmetric_eigenvalues(mat3_at(mv, i));
        for (int k = 0; k < 3; ++k)
            y[3 * i + k] = l[k];
    }
    return tape.record("sym_eig3", std::move(y), {m}, [m, n](Tape& t, const Tensor& g) {
        Tensor* slot = t.gradient_slot(m);
        if (slot == nullptr)
            return;
        const Tensor& mv = t.value(m);
        for (std::size_t i = 0; i < n; ++i) {
            const SymmetricEigen eig = symmetric_eigen(mat3_at(mv, i));
            // Average the incoming adjoint over each group of repeated values.
            double group_sum[3] = {0, 0, 0};
            int group_size[3] = {0, 0, 0};
            for (int k = 0; k < 3; ++k) {
                group_sum[eig.group[k]] += g[3 * i + k];
                ++group_size[eig.group[k]];
            }
            Mat3 d = Mat3::Zero();
            for (int k = 0; k < 3; ++k) {
                const double gk = group_sum[eig.group[k]] / group_size[eig.group[k]];
                const Vec3 v = eig.vectors.col(k);
                d += gk * v * v.transpose();
            }
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c)
                    (*slot)[9 * i + 3 * r + c] += d(r, c);
        }
    });
}

Var neighborhood_covariance(Var points, const std::vector<std::vector<int>>& neighborhoods)
{
    Tape& tape = tape_of(points);
    const Tensor& pv = points.value();
    if (pv.rank() != 2 || pv.dim(1) != 3)
        throw std::invalid_argument("neighborhood_covariance expects {V,3}, got " + shape_string(pv.shape()));
    const std::size_t count = neighborhoods.size();
    Tensor y({count, 9});
    for (std::size_t v = 0; v < count; ++v) {
        const auto& nb = neighborhoods[v];
        Vec3 mean = Vec3::Zero();
        for (int j : nb)
            mean += Vec3(pv.data() + 3 * j);
        mean /= static_cast<double>(nb.size());
        Mat3 c = Mat3::Zero();
        for (int j : nb) {
            const Vec3 d = Vec3(pv.data() + 3 * j) - mean;
            c += d * d.transpose();
        }
        c /= static_cast<double>(nb.size());
        for (int r = 0; r < 3; ++r)
            for (int k = 0; k < 3; ++k)
                y[9 * v + 3 * r + k] = c(r, k);
    }
    return tape.record("neighborhood_covariance", std::move(y), {points},
                       [points, neighborhoods, count](Tape& t, const Tensor& g) {
                           Tensor* slot = t.gradient_slot(points);
                           if (slot == nullptr)
                               return;
                           const Tensor& pv = t.value(points);
                           for (std::size_t v = 0; v < count; ++v) {
                               const auto& nb = neighborhoods[v];
                               const double inv = 1.0 / static_cast<double>(nb.size());
                               Vec3 mean = Vec3::Zero();
                               for (int j : nb)
                                   mean += Vec3(pv.data() + 3 * j);
                               mean *= inv;
                               const Mat3 gm = mat3_at(g, v);
                               const Mat3 sym = gm + gm.transpose();
                               // The mean's contribution cancels: sum of deviations is zero.
                               for (int j : nb) {
                                   const Vec3 d = Vec3(pv.data() + 3 * j) - mean;
                                   const Vec3 dx = inv * (sym * d);
                                   for (int k = 0; k < 3; ++k)
                                       (*slot)[3 * j + k] += dx[k];
                               }
                           }
                       });
}

// ---- images -----------------------------------------------------------------

std::size_t reflect_index(long i, std::size_t n)
{
    if (n == 1)
        return 0;
    const long period = 2 * static_cast<long>(n) - 2;
    long r = i % period;
    if (r < 0)
        r += period;
    if (r >= static_cast<long>(n))
        r = period - r;
    return static_cast<std::size_t>(r);
}

namespace {

void check_kernel(const Tensor& kernel)
{
    if (kernel.rank() != 2 || kernel.dim(0) % 2 == 0 || kernel.dim(1) % 2 == 0)
        throw std::invalid_argument("conv2d kernel must be {kh,kw} with odd sizes, got " +
                                    shape_string(kernel.shape()));
}

void check_image(const Tensor& image)
{
    if (image.rank() != 3)
        throw std::invalid_argument("conv2d expects an {H,W,C} image, got " + shape_string(image.shape()));
}

} // namespace

namespace {

// Shared loop for the reflect-padded correlation and its adjoint. The adjoint
// scatters each output sample back onto the taps it read.
template <bool Adjoint>
Tensor conv2d_reflect_impl(const Tensor& src, const Tensor& kernel)
{
    check_image(src);
    check_kernel(kernel);
    const std::size_t h = src.dim(0), w = src.dim(1), ch = src.dim(2);
    const long kh = static_cast<long>(kernel.dim(0)), kw = static_cast<long>(kernel.dim(1));
    const long ry = kh / 2, rx = kw / 2;
    std::vector<std::size_t> rows(h + static_cast<std::size_t>(kh) - 1), cols(w + static_cast<std::size_t>(kw) - 1);
    for (std::size_t i = 0; i < rows.size(); ++i)
        rows[i] = reflect_index(static_cast<long>(i) - ry, h);
    for (std::size_t i = 0; i < cols.size(); ++i)
        cols[i] = reflect_index(static_cast<long>(i) - rx, w);
    struct Tap
    {
        std::size_t a, b;
        double k;
    };
    std::vector<Tap> taps;
    for (long a = 0; a < kh; ++a)
        for (long b = 0; b < kw; ++b)
            if (const double k = kernel[static_cast<std::size_t>(a * kw + b)]; k != 0.0)
                taps.push_back({static_cast<std::size_t>(a), static_cast<std::size_t>(b), k});

    Tensor out(src.shape());
    const double* in = src.data();
    double* o = out.data();
    for (std::size_t y = 0; y < h; ++y)
        for (const Tap& t : taps) {
            const std::size_t sy = rows[y + t.a];
            const std::size_t* cx = cols.data() + t.b;
            for (std::size_t x = 0; x < w; ++x) {
                const std::size_t dst = (y * w + x) * ch, from = (sy * w + cx[x]) * ch;
                for (std::size_t c = 0; c < ch; ++c) {
                    if constexpr (Adjoint)
                        o[from + c] += t.k * in[dst + c];
                    else
                        o[dst + c] += t.k * in[from + c];
                }
            }
        }
    return out;
}

} // namespace

Tensor conv2d_reflect(const Tensor& image, const Tensor& kernel)
{
    return conv2d_reflect_impl<false>(image, kernel);
}

Tensor conv2d_reflect_adjoint(const Tensor& grad_out, const Tensor& kernel)
{
    return conv2d_reflect_impl<true>(grad_out, kernel);
}

Var conv2d(Var image, const Tensor& kernel)
{
    Tape& tape = tape_of(image);
    Tensor y = conv2d_reflect(image.value(), kernel);
    return tape.record("conv2d", std::move(y), {image}, [image, kernel](Tape& t, const Tensor& g) {
        if (t.requires_grad(image))
            t.accumulate(image, conv2d_reflect_adjoint(g, kernel));
    });
}

// ---- evaluation and validation ---------------------------------------------

GradientResult evaluate_with_gradients(const Program& program, const std::vector<Tensor>& inputs)
{
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(inputs.size());
    for (const Tensor& in : inputs)
        vars.push_back(tape.variable(in, "input"));
    Var out = program(tape, vars);
    if (out.value().size() != 1)
        throw std::invalid_argument("program output must be scalar, got " + shape_string(out.shape()));
    tape.backward(out);
    GradientResult result;
    result.value = out.value()[0];
    for (const Var& v : vars)
        result.gradients.push_back(tape.gradient(v));
    return result;
}

double evaluate(const Program& program, const std::vector<Tensor>& inputs)
{
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(inputs.size());
    for (const Tensor& in : inputs)
        vars.push_back(tape.constant(in, "input"));
    Var out = program(tape, vars);
    if (out.value().size() != 1)
        throw std::invalid_argument("program output must be scalar, got " + shape_string(out.shape()));
    return out.value()[0];
}

std::string FdReport::summary() const
{
    std::ostringstream out;
    out << (passed() ? "PASS " : "FAIL ") << name << ": max rel. error " << max_relative_error << " over "
        << coordinates_checked << " coordinates (tol " << tolerance << ")";
    if (!failures.empty())
        out << ", " << failures.size() << " failing";
    return out.str();
}

FdReport finite_difference_check(const Program& program, const std::vector<Tensor>& inputs, const FdOptions& options)
{
    FdReport report;
    report.tolerance = options.tolerance;
    const GradientResult analytic = evaluate_with_gradients(program, inputs);

    std::vector<std::pair<std::size_t, std::size_t>> coords;
    for (std::size_t i = 0; i < inputs.size(); ++i)
        for (std::size_t j = 0; j < inputs[i].size(); ++j)
            coords.emplace_back(i, j);
    if (options.max_coordinates > 0 && options.max_coordinates < coords.size()) {
        std::mt19937_64 rng(options.seed);
        std::shuffle(coords.begin(), coords.end(), rng);
        coords.resize(options.max_coordinates);
        std::sort(coords.begin(), coords.end());
    }

    std::vector<double> numeric(coords.size());
    std::vector<Tensor> work = inputs;
    double max_numeric = 0.0;
    for (std::size_t c = 0; c < coords.size(); ++c) {
        auto [i, j] = coords[c];
        const double x = work[i][j];
        work[i][j] = x + options.step;
        const double fp = evaluate(program, work);
        work[i][j] = x - options.step;
        const double fm = evaluate(program, work);
        work[i][j] = x;
        numeric[c] = (fp - fm) / (2.0 * options.step);
        max_numeric = std::max(max_numeric, std::abs(numeric[c]));
    }

    const double floor = std::max(options.floor_fraction * max_numeric, 1e-300);
    for (std::size_t c = 0; c < coords.size(); ++c) {
        auto [i, j] = coords[c];
        const double a = analytic.gradients[i][j];
        const double n = numeric[c];
        const double denom = std::max({std::abs(a), std::abs(n), floor});
        const double err = std::abs(a - n) / denom;
        report.max_relative_error = std::max(report.max_relative_error, err);
        if (err > options.tolerance)
            report.failures.push_back({i, j, a, n, err});
    }
    report.coordinates_checked = coords.size();
    return report;
}

} // namespace sft::ad
