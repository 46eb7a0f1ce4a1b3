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
#include "oracles.hpp"

#include "sft/autodiff.hpp"
#include "sft/sym3.hpp"

#include <gtest/gtest.h>

#include <sstream>

namespace sft {
namespace {

using ad::Program;
using ad::Tape;
using ad::Var;
using testing::random_tensor;

Program single(std::function<Var(Var)> f)
{
    return [f](Tape&, std::span<const Var> in) { return f(in[0]); };
}

TEST(Autodiff, SquareGradientAtThree)
{
    const auto r = ad::evaluate_with_gradients(single([](Var x) { return ad::sum(x * x); }), {Tensor::scalar(3.0)});
    EXPECT_DOUBLE_EQ(r.value, 9.0);
    EXPECT_DOUBLE_EQ(r.gradients[0][0], 6.0);
}

TEST(Autodiff, ReluInactiveUnitHasZeroGradient)
{
    const auto r = ad::evaluate_with_gradients(single([](Var x) { return ad::sum(ad::relu(x)); }),
                                               {Tensor::scalar(-1.0)});
    EXPECT_EQ(r.gradients[0][0], 0.0);
}

TEST(Autodiff, AbsSubgradientAtZeroIsZero)
{
    const auto r = ad::evaluate_with_gradients(single([](Var x) { return ad::sum(ad::abs(x)); }),
                                               {Tensor::scalar(0.0)});
    EXPECT_EQ(r.gradients[0][0], 0.0);
}

TEST(Autodiff, DeterminantGradientIsCofactorMatrix)
{
    std::mt19937_64 rng(11);
    const Tensor c = random_tensor({1, 9}, rng);
    const auto r = ad::evaluate_with_gradients(single([](Var m) { return ad::sum(ad::det3(m)); }), {c});
    Eigen::Map<const Eigen::Matrix<double, 3, 3, Eigen::RowMajor>> m(c.data());
    const Mat3 cof = m.determinant() * Mat3(m.inverse().transpose());
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            EXPECT_NEAR(r.gradients[0][static_cast<std::size_t>(3 * i + j)], cof(i, j), 1e-12);
    const auto fd = ad::finite_difference_check(single([](Var m) { return ad::sum(ad::det3(m)); }), {c},
                                                {.step = 1e-5, .tolerance = 1e-8});
    EXPECT_TRUE(fd.passed()) << fd.summary();
}

TEST(Autodiff, QuadraticFormFiniteDifferences)
{
    std::mt19937_64 rng(3);
    const Tensor a = random_tensor({4, 4}, rng);
    Program quad = [a](Tape& t, std::span<const Var> in) {
        Var x = in[0];
        return ad::sum(ad::matmul(ad::matmul(ad::reshape(x, {1, 4}), t.constant(a)), ad::reshape(x, {4, 1})));
    };
    const auto fd = ad::finite_difference_check(quad, {random_tensor({4}, rng)}, {.step = 1e-5, .tolerance = 1e-6});
    EXPECT_TRUE(fd.passed()) << fd.summary();
    EXPECT_LT(fd.max_relative_error, 1e-6);
}

TEST(Autodiff, SymmetricEigenvalueAdjointOnRandomSpd)
{
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        const Tensor b = random_tensor({3, 3}, rng);
        Eigen::Map<const Eigen::Matrix<double, 3, 3, Eigen::RowMajor>> bm(b.data());
        const Mat3 spd = bm * bm.transpose() + 0.1 * Mat3::Identity();
        Tensor c({1, 9});
        for (int i = 0; i < 9; ++i)
            c[static_cast<std::size_t>(i)] = spd(i / 3, i % 3);
        const Tensor w = random_tensor({1, 3}, rng);
        Program f = [w](Tape& t, std::span<const Var> in) { return ad::sum(ad::sym_eig3(in[0]) * t.constant(w)); };
        const auto fd = ad::finite_difference_check(f, {c}, {.step = 1e-6, .tolerance = 1e-4});
        EXPECT_TRUE(fd.passed()) << fd.summary();
    }
}

TEST(Autodiff, ZeroFunctionPasses)
{
    Program zero = [](Tape& t, std::span<const Var> in) { return ad::scale(ad::sum(in[0]), 0.0) + t.constant(Tensor::scalar(0.0)); };
    std::mt19937_64 rng(1);
    const auto fd = ad::finite_difference_check(zero, {random_tensor({5}, rng)});
    EXPECT_TRUE(fd.passed()) << fd.summary();
    const auto r = ad::evaluate_with_gradients(zero, {random_tensor({5}, rng)});
    for (double g : r.gradients[0].values())
        EXPECT_EQ(g, 0.0);
}

TEST(Autodiff, GradientIsLinear)
{
    std::mt19937_64 rng(9);
    const Tensor x = random_tensor({6}, rng, 0.2, 1.0);
    auto f = [](Var v) { return ad::sum(ad::exp(v) * v); };
    auto g = [](Var v) { return ad::sum(ad::square(v) * ad::square(v)); };
    const double a = 2.5, b = -0.75;
    const auto rf = ad::evaluate_with_gradients(single(f), {x});
    const auto rg = ad::evaluate_with_gradients(single(g), {x});
    const auto rc = ad::evaluate_with_gradients(single([&](Var v) { return a * f(v) + b * g(v); }), {x});
    for (std::size_t i = 0; i < x.size(); ++i)
        EXPECT_NEAR(rc.gradients[0][i], a * rf.gradients[0][i] + b * rg.gradients[0][i], 1e-10);
}

TEST(Autodiff, VariableUsedTwiceAccumulates)
{
    const auto r = ad::evaluate_with_gradients(single([](Var x) { return ad::sum(x + x); }), {Tensor::scalar(1.7)});
    EXPECT_DOUBLE_EQ(r.gradients[0][0], 2.0);
}

TEST(Autodiff, ConstantsReceiveNoGradient)
{
    Tape t;
    Var c = t.constant(Tensor::scalar(2.0));
    Var x = t.variable(Tensor::scalar(3.0));
    Var y = ad::sum(c * x);
    t.backward(y);
    EXPECT_FALSE(t.requires_grad(c));
    EXPECT_EQ(c.gradient()[0], 0.0);
    EXPECT_EQ(x.gradient()[0], 2.0);
}

TEST(Autodiff, BackwardAccumulatesUntilZeroGrad)
{
    Tape t;
    Var x = t.variable(Tensor::scalar(3.0));
    Var y = ad::sum(x * x);
    t.backward(y);
    t.backward(y);
    EXPECT_EQ(x.gradient()[0], 12.0);
    t.zero_grad();
    t.backward(y);
    EXPECT_EQ(x.gradient()[0], 6.0);
}

TEST(Autodiff, NonFiniteGradientNamesTheNode)
{
    Tape t;
    Var x = t.variable(Tensor::scalar(800.0));
    Var y = ad::sum(ad::exp(ad::exp(x)));
    try {
        t.backward(y);
        FAIL() << "expected GradientError";
    }
    catch (const ad::GradientError& e) {
        EXPECT_NE(std::string(e.what()).find("non-finite gradient at node"), std::string::npos);
    }
}

TEST(Autodiff, BackwardRequiresScalar)
{
    Tape t;
    Var x = t.variable(Tensor({3}, 1.0));
    EXPECT_THROW(t.backward(x * x), std::invalid_argument);
}

TEST(Autodiff, GradientNormCsvHasOneRowPerNode)
{
    Tape t;
    Var x = t.variable(Tensor({2}, 1.0));
    t.backward(ad::sum(x * x));
    std::ostringstream out;
    t.write_gradient_norms_csv(out);
    const std::string csv = out.str();
    EXPECT_EQ(csv.rfind("node,op,size,grad_norm\n", 0), 0u);
    EXPECT_EQ(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')), t.node_count() + 1);
}

TEST(Autodiff, ShapeMismatchIsRejected)
{
    Tape t;
    EXPECT_THROW(ad::add(t.variable(Tensor({2})), t.variable(Tensor({3}))), std::invalid_argument);
    EXPECT_THROW(ad::matmul(t.variable(Tensor({2, 3})), t.variable(Tensor({2, 3}))), std::invalid_argument);
}

// Every primitive against central differences, inputs kept away from kinks.
struct PrimitiveCase
{
    const char* name;
    std::vector<Shape> shapes;
    Program program;
};

class PrimitiveGradient : public ::testing::TestWithParam<int>
{
};

std::vector<PrimitiveCase> primitive_cases()
{
    auto w = [](Tape& t, Var v, std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        return ad::sum(v * t.constant(random_tensor(v.shape(), rng)));
    };
    std::vector<std::vector<int>> hoods = {{0, 1, 2, 3}, {1, 0, 2}, {2, 0, 1, 3, 4}, {3, 0, 2, 4}, {4, 2, 3}};
    Tensor kernel({3, 5});
    for (std::size_t i = 0; i < kernel.size(); ++i)
        kernel[i] = std::sin(1.0 + static_cast<double>(i));
    return {
        {"add", {{4}, {4}}, [=](Tape& t, std::span<const Var> in) { return w(t, in[0] + in[1], 1); }},
        {"sub", {{4}, {4}}, [=](Tape& t, std::span<const Var> in) { return w(t, in[0] - in[1], 2); }},
        {"mul", {{4}, {4}}, [=](Tape& t, std::span<const Var> in) { return w(t, in[0] * in[1], 3); }},
        {"scale", {{4}}, [=](Tape& t, std::span<const Var> in) { return w(t, ad::scale(in[0], -1.7), 4); }},
        {"relu", {{6}}, [=](Tape& t, std::span<const Var> in) { return w(t, ad::relu(in[0]), 5); }},
        {"abs", {{6}}, [=](Tape& t, std::span<const Var> in) { return w(t, ad::abs(in[0]), 6); }},
        {"exp", {{4}}, [=](Tape& t, std::span<const Var> in) { return w(t, ad::exp(in[0]), 7); }},
        {"square", {{4}}, [=](Tape& t, std::span<const Var> in) { return w(t, ad::square(in[0]), 8); }},
        {"mean", {{5}}, [=](Tape&, std::span<const Var> in) { return ad::mean(in[0] * in[0]); }},
        {"matmul", {{3, 4}, {4, 2}}, [=](Tape& t, std::span<const Var> in) { return w(t, ad::matmul(in[0], in[1]), 9); }},
        {"add_bias", {{3, 4}, {4}}, [=](Tape& t, std::span<const Var> in) { return w(t, ad::add_bias(in[0], in[1]), 10); }},
        {"column", {{3, 4}}, [=](Tape& t, std::span<const Var> in) { return w(t, ad::column(in[0], 2), 11); }},
        {"row_norm", {{4, 3}}, [=](Tape& t, std::span<const Var> in) { return w(t, ad::row_norm(in[0]), 12); }},
        {"gather_rows", {{4, 3}}, [=](Tape& t, std::span<const Var> in) { return w(t, ad::gather_rows(in[0], {3, 0, 3, 1}), 13); }},
        {"concat_rows", {{2, 3}, {3, 3}}, [=](Tape& t, std::span<const Var> in) { return w(t, ad::concat_rows({in[0], in[1]}), 14); }},
        {"reshape", {{2, 6}}, [=](Tape& t, std::span<const Var> in) { return w(t, ad::reshape(in[0], {3, 4}), 15); }},
        {"slice", {{10}}, [=](Tape& t, std::span<const Var> in) { return w(t, ad::slice(in[0], 3, {2, 2}), 16); }},
        {"det3", {{3, 9}}, [=](Tape& t, std::span<const Var> in) { return w(t, ad::det3(in[0]), 17); }},
        {"neighborhood_covariance", {{5, 3}},
         [=](Tape& t, std::span<const Var> in) { return w(t, ad::neighborhood_covariance(in[0], hoods), 18); }},
        {"conv2d", {{5, 6, 2}}, [=](Tape& t, std::span<const Var> in) { return w(t, ad::conv2d(in[0], kernel), 19); }},
    };
}

TEST(Autodiff, EveryPrimitivePassesFiniteDifferences)
{
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> mag(0.2, 1.0);
    std::bernoulli_distribution sign(0.5);
    for (const PrimitiveCase& c : primitive_cases()) {
        std::vector<Tensor> inputs;
        for (const Shape& s : c.shapes) {
            Tensor t(s);
            // |x| >= 0.2 keeps every coordinate far from the relu/abs kinks.
            for (double& v : t.storage())
                v = sign(rng) ? mag(rng) : -mag(rng);
            inputs.push_back(t);
        }
        const auto fd = ad::finite_difference_check(c.program, inputs, {.step = 1e-6, .tolerance = 1e-4});
        EXPECT_TRUE(fd.passed()) << c.name << ": " << fd.summary();
    }
}

TEST(Sym3, DiagonalEigenvalues)
{
    const Vec3 l = symmetric_eigenvalues(Vec3(0.5, 0.5, 0.0).asDiagonal());
    EXPECT_NEAR(l[0], 0.5, 1e-15);
    EXPECT_NEAR(l[1], 0.5, 1e-15);
    EXPECT_NEAR(l[2], 0.0, 1e-15);
}

TEST(Sym3, OffDiagonalExample)
{
    Mat3 a;
    a << 0, 1, 0, 1, 0, 0, 0, 0, 0;
    const Vec3 l = symmetric_eigenvalues(a);
    EXPECT_NEAR(l[0], 1.0, 1e-14);
    EXPECT_NEAR(l[1], 0.0, 1e-14);
    EXPECT_NEAR(l[2], -1.0, 1e-14);
}

TEST(Sym3, MatchesIterativeSolverOnRandomMatrices)
{
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int trial = 0; trial < 200; ++trial) {
        Mat3 b;
        for (int i = 0; i < 9; ++i)
            b(i / 3, i % 3) = u(rng);
        const Mat3 a = 0.5 * (b + b.transpose());
        Eigen::SelfAdjointEigenSolver<Mat3> ref(a);
        const SymmetricEigen e = symmetric_eigen(a);
        for (int k = 0; k < 3; ++k) {
            EXPECT_NEAR(e.values[k], ref.eigenvalues()[2 - k], 1e-10);
            const Vec3 v = e.vectors.col(k);
            EXPECT_NEAR(v.norm(), 1.0, 1e-10);
            EXPECT_LT((a * v - e.values[k] * v).norm(), 1e-9);
        }
    }
}

TEST(Sym3, RepeatedEigenvaluesShareAGroup)
{
    const SymmetricEigen e = symmetric_eigen(Vec3(2.0, 2.0, 1.0).asDiagonal());
    EXPECT_EQ(e.group[0], 0);
    EXPECT_EQ(e.group[1], 0);
    EXPECT_EQ(e.group[2], 2);
    EXPECT_NEAR(std::abs(e.vectors.col(2).z()), 1.0, 1e-12);
}

TEST(Tensor, ConstructionValidatesSize)
{
    EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), std::invalid_argument);
    Tensor t({2, 3, 1}, 0.5);
    EXPECT_EQ(t.size(), 6u);
    EXPECT_EQ(shape_string(t.shape()), "[2x3x1]");
    EXPECT_TRUE(t.all_finite());
}

} // namespace
} // namespace sft
