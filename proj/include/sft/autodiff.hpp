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
#pragma once

#include "sft/tensor.hpp"

#include <cstdint>
#include <deque>
#include <functional>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

/**
 * Reverse-mode differentiation over tensor-valued operations.
 *
 * A Tape records every operation in evaluation order. Calling backward() on a
 * scalar output walks the record once in reverse and accumulates adjoints into
 * the gradient slot of every node that depends on a variable. Constants never
 * receive gradients, which is also how detached quantities are expressed.
 */
namespace sft::ad {

class Tape;

class GradientError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

class Var
{
public:
    Var() = default;

    Tape* tape() const noexcept { return tape_; }
    int id() const noexcept { return id_; }
    bool valid() const noexcept { return tape_ != nullptr && id_ >= 0; }

    const Tensor& value() const;
    Tensor gradient() const;
    const Shape& shape() const { return value().shape(); }

private:
    friend class Tape;
    Var(Tape* tape, int id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    int id_ = -1;
};

using BackwardFn = std::function<void(Tape& tape, const Tensor& out_grad)>;

class Tape
{
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor value, std::string name = "constant");
    Var variable(Tensor value, std::string name = "variable");

    /// Appends an operation node. `backward` receives the node's adjoint and
    /// must call accumulate() for each input it depends on.
    Var record(std::string op, Tensor value, std::vector<Var> inputs, BackwardFn backward);

    const Tensor& value(Var v) const;
    /// Accumulated adjoint, or zeros when the node was never reached.
    Tensor gradient(Var v) const;
    bool requires_grad(Var v) const;
    const std::string& op_name(Var v) const;

    /// Adds `g` into the gradient slot of `v`; ignored for constants.
    void accumulate(Var v, const Tensor& g);
    /// Mutable gradient slot (zero-filled on first use), nullptr for constants.
    Tensor* gradient_slot(Var v);

    /// Seeds d(output)/d(output) = 1 and propagates. Leaf gradients are summed
    /// into existing slots; call zero_grad() between independent passes.
    void backward(Var output);
    void zero_grad();

    std::size_t node_count() const noexcept { return nodes_.size(); }

    /// CSV with one row per node: id, op, size, gradient L2 norm.
    void write_gradient_norms_csv(std::ostream& out) const;

private:
    struct Node
    {
        std::string op;
        Tensor value;
        Tensor grad;
        bool needs_grad = false;
        bool has_grad = false;
        std::vector<int> inputs;
        BackwardFn backward;
    };

    Node& node(Var v);
    const Node& node(Var v) const;

    std::deque<Node> nodes_;
};

// ---- elementwise -------------------------------------------------------------
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var relu(Var a);
/// Subgradient 0 at 0.
Var abs(Var a);
Var exp(Var a);
Var square(Var a);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double s, Var a) { return scale(a, s); }

// ---- reductions and linear algebra -----------------------------------------
Var sum(Var a);
Var mean(Var a);
/// {n,k} x {k,m} -> {n,m}
Var matmul(Var a, Var b);
/// {n,m} + {m} broadcast over rows.
Var add_bias(Var x, Var bias);
/// Column j of an {n,k} array -> {n}.
Var column(Var x, std::size_t j);
/// Euclidean norm of each row of {n,k} -> {n}; gradient 0 for zero rows.
Var row_norm(Var x);
/// Rows x[indices[i]] -> {m,d}; backward scatter-adds.
Var gather_rows(Var x, std::vector<int> indices);
/// Concatenate arrays with equal trailing shape along axis 0.
Var concat_rows(const std::vector<Var>& parts);
Var reshape(Var x, Shape shape);
/// Contiguous elements [offset, offset + size(shape)) of x viewed as `shape`.
Var slice(Var x, std::size_t offset, Shape shape);

// ---- batched 3x3 ------------------------------------------------------------
/// {n,9} row-major 3x3 matrices -> {n} determinants.
Var det3(Var m);
/// {n,9} -> {n,3} eigenvalues of the symmetric part, descending.
/// Adjoint dλ_k = v_kᵀ dC v_k; repeated eigenvalues share the averaged adjoint
/// over their eigenspace projector.
Var sym_eig3(Var m);
/// {V,3} points -> {V,9} covariance of each neighborhood about its mean.
Var neighborhood_covariance(Var points, const std::vector<std::vector<int>>& neighborhoods);

// ---- images -----------------------------------------------------------------
/// 2D correlation of every channel of an {H,W,C} image with `kernel` {kh,kw}
/// (odd sizes), reflect-padded.
Var conv2d(Var image, const Tensor& kernel);

Tensor conv2d_reflect(const Tensor& image, const Tensor& kernel);
/// Exact adjoint of conv2d_reflect with the same kernel.
Tensor conv2d_reflect_adjoint(const Tensor& grad_out, const Tensor& kernel);
/// Reflect index (no edge repeat) into [0, n).
std::size_t reflect_index(long i, std::size_t n);

// ---- evaluation and validation ---------------------------------------------
using Program = std::function<Var(Tape&, std::span<const Var>)>;

struct GradientResult
{
    double value = 0.0;
    std::vector<Tensor> gradients;
};

/// Runs `program` on fresh variables built from `inputs` and returns the scalar
/// value and the gradient with respect to each input.
GradientResult evaluate_with_gradients(const Program& program, const std::vector<Tensor>& inputs);
double evaluate(const Program& program, const std::vector<Tensor>& inputs);

struct FdOptions
{
    double step = 1e-5;
    double tolerance = 1e-4;
    /// Per-coordinate errors are relative to max(|analytic|, |numeric|,
    /// floor_fraction * max|numeric|).
    double floor_fraction = 1e-3;
    /// 0 checks every coordinate; otherwise a seeded random subset.
    std::size_t max_coordinates = 0;
    std::uint64_t seed = 0;
};

struct FdFailure
{
    std::size_t input = 0;
    std::size_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double relative_error = 0.0;
};

struct FdReport
{
    std::string name;
    double tolerance = 0.0;
    double max_relative_error = 0.0;
    std::size_t coordinates_checked = 0;
    std::vector<FdFailure> failures;

    bool passed() const noexcept { return failures.empty(); }
    std::string summary() const;
};

/// Central differences (f(x+h) - f(x-h)) / 2h against the tape's gradients.
FdReport finite_difference_check(const Program& program, const std::vector<Tensor>& inputs,
                                 const FdOptions& options = {});

} // namespace sft::ad
