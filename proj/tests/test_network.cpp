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

#include "sft/network.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

namespace sft {
namespace {

// (in*w + w) + (L-1)(w*w + w) + (w*3 + 3) for L hidden layers of width w.
std::size_t count_by_formula(std::size_t layers, std::size_t width)
{
    return (3 * width + width) + (layers - 1) * (width * width + width) + (width * 3 + 3);
}

Points random_points(std::size_t n, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    Points p;
    for (std::size_t i = 0; i < n; ++i)
        p.emplace_back(u(rng), u(rng), 2.0 + u(rng));
    return p;
}

DeformationState small_state(const Points& x0, std::uint64_t seed)
{
    DeformationState s;
    s.config = NetworkConfig::from_preset("small", seed);
    s.normalization = fit_normalization(x0);
    s.parameters = init_network(s.config);
    return s;
}

TEST(Network, ParameterCountsFollowLayerFormula)
{
    EXPECT_EQ(parameter_count(NetworkConfig::from_preset("small")), count_by_formula(4, 64));
    EXPECT_EQ(parameter_count(NetworkConfig::from_preset("base")), count_by_formula(8, 256));
    EXPECT_EQ(parameter_count(NetworkConfig::from_preset("base")), 462339u);
    EXPECT_EQ(parameter_count(NetworkConfig::from_preset("large")), count_by_formula(12, 512));
    EXPECT_EQ(init_network(NetworkConfig::from_preset("small")).size(), count_by_formula(4, 64));
}

TEST(Network, UnknownPresetIsRejected)
{
    EXPECT_THROW(NetworkConfig::from_preset("huge"), std::invalid_argument);
}

TEST(Network, ZeroInitialisedOutputGivesIdentity)
{
    const Points x0 = random_points(50, 1);
    DeformationState s = small_state(x0, 3);
    EXPECT_EQ(deform(s, x0), x0);
}

TEST(Network, HeInitialisationStatistics)
{
    const NetworkParameters p = init_network(NetworkConfig::from_preset("base", 5));
    const std::size_t layer = 3;
    const std::size_t off = p.weight_offset(layer), n = p.layers[layer].in * p.layers[layer].out;
    double s = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        s += p.values[off + i];
        s2 += p.values[off + i] * p.values[off + i];
    }
    const double mean = s / n, var = s2 / n - mean * mean;
    EXPECT_NEAR(mean, 0.0, 0.005);
    EXPECT_NEAR(var, 2.0 / 256.0, 0.05 * 2.0 / 256.0);
    for (std::size_t i = p.bias_offset(layer); i < p.bias_offset(layer) + p.layers[layer].out; ++i)
        EXPECT_EQ(p.values[i], 0.0);
    const std::size_t last = p.layers.size() - 1;
    for (std::size_t i = p.weight_offset(last); i < p.size(); ++i)
        EXPECT_EQ(p.values[i], 0.0);
}

TEST(Network, InitialisationIsDeterministicPerSeed)
{
    EXPECT_EQ(init_network(NetworkConfig::from_preset("small", 7)).values,
              init_network(NetworkConfig::from_preset("small", 7)).values);
    EXPECT_NE(init_network(NetworkConfig::from_preset("small", 7)).values,
              init_network(NetworkConfig::from_preset("small", 8)).values);
}

TEST(Network, NormalizationMapsIntoUnitCube)
{
    const Points x0 = random_points(200, 2);
    const Normalization n = fit_normalization(x0);
    double extent = 0.0;
    for (const Vec3& p : x0)
        extent = std::max(extent, n.apply(p).cwiseAbs().maxCoeff());
    EXPECT_NEAR(extent, 1.0, 1e-12);
}

TEST(VertexOffsets, UniformLift)
{
    const Points x0 = random_points(30, 3);
    DeformationState s;
    s.mode = DeformationMode::VertexOffset;
    s.parameters.values.assign(x0.size() * 3, 0.0);
    for (std::size_t i = 0; i < x0.size(); ++i)
        s.parameters.values[3 * i + 2] = 0.1;
    const Points x = deform(s, x0);
    for (std::size_t i = 0; i < x0.size(); ++i) {
        EXPECT_EQ(x[i].x(), x0[i].x());
        EXPECT_EQ(x[i].y(), x0[i].y());
        EXPECT_NEAR(x[i].z() - x0[i].z(), 0.1, 1e-15);
    }
}

TEST(Network, ForwardMatchesDeform)
{
    const Points x0 = random_points(40, 4);
    DeformationState s = small_state(x0, 9);
    std::mt19937_64 rng(10);
    std::normal_distribution<double> n(0.0, 0.05);
    for (double& v : s.parameters.values)
        v += n(rng);
    ad::Tape tape;
    const ad::Var out = forward(tape, s, x0, tape.variable(Tensor({s.parameters.size()}, s.parameters.values)));
    const Points direct = deform(s, x0);
    for (std::size_t i = 0; i < x0.size(); ++i)
        for (int k = 0; k < 3; ++k)
            EXPECT_NEAR(out.value()[3 * i + static_cast<std::size_t>(k)], direct[i][k], 1e-12);
}

TEST(Network, ParameterGradientMatchesFiniteDifferences)
{
    const Points x0 = random_points(60, 5);
    DeformationState s = small_state(x0, 11);
    std::mt19937_64 rng(12);
    std::normal_distribution<double> n(0.0, 0.1);
    const std::size_t last = s.parameters.layers.size() - 1;
    for (std::size_t i = s.parameters.weight_offset(last); i < s.parameters.size(); ++i)
        s.parameters.values[i] = n(rng);
    Tensor weights({x0.size(), 3});
    for (double& w : weights.storage())
        w = n(rng);
    auto objective = [&](const std::vector<double>& theta) {
        DeformationState t = s;
        t.parameters.values = theta;
        const Points x = deform(t, x0);
        double v = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i)
            for (int k = 0; k < 3; ++k)
                v += weights[3 * i + static_cast<std::size_t>(k)] * x[i][k] * x[i][k];
        return v;
    };
    ad::Tape tape;
    ad::Var theta = tape.variable(Tensor({s.parameters.size()}, s.parameters.values));
    ad::Var x = forward(tape, s, x0, theta);
    tape.backward(ad::sum(ad::mul(tape.constant(weights), ad::square(x))));
    const Tensor g = theta.gradient();

    std::uniform_int_distribution<std::size_t> pick(0, s.parameters.size() - 1);
    const double h = 1e-6;
    double max_g = 0.0;
    for (double v : g.storage())
        max_g = std::max(max_g, std::abs(v));
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t i = pick(rng);
        std::vector<double> tp = s.parameters.values, tm = s.parameters.values;
        tp[i] += h;
        tm[i] -= h;
        const double numeric = (objective(tp) - objective(tm)) / (2 * h);
        const double scale = std::max({std::abs(numeric), std::abs(g[i]), 1e-3 * max_g});
        EXPECT_LT(std::abs(numeric - g[i]) / scale, 1e-4) << "parameter " << i;
    }
}

TEST(Network, TransferIsADeepCopy)
{
    const Points x0 = random_points(10, 6);
    DeformationState a = small_state(x0, 13);
    DeformationState b = transfer_parameters(a);
    EXPECT_EQ(a.parameters.values, b.parameters.values);
    b.parameters.values[0] += 1.0;
    EXPECT_NE(a.parameters.values[0], b.parameters.values[0]);
}

TEST(Network, SaveLoadRoundTrip)
{
    const auto dir = std::filesystem::temp_directory_path() / "framesft_network";
    std::filesystem::create_directories(dir);
    const Points x0 = random_points(10, 7);
    DeformationState a = small_state(x0, 14);
    a.parameters.values[5] = 1.0 / 3.0;
    save_parameters(dir / "p.bin", a);
    const DeformationState b = load_parameters(dir / "p.bin");
    EXPECT_EQ(b.mode, a.mode);
    EXPECT_EQ(b.config.preset, "small");
    EXPECT_EQ(b.config.seed, 14u);
    EXPECT_EQ(b.config.hidden_layers, 4);
    EXPECT_EQ(b.normalization.center, a.normalization.center);
    EXPECT_EQ(b.normalization.scale, a.normalization.scale);
    EXPECT_EQ(b.parameters.values, a.parameters.values);
    EXPECT_EQ(deform(b, x0), deform(a, x0));

    {
        std::ofstream bad(dir / "bad.bin", std::ios::binary);
        bad << "NOTAPARAMFILE";
    }
    EXPECT_THROW(load_parameters(dir / "bad.bin"), std::runtime_error);
}

TEST(Network, ParameterSizeMismatchIsRejected)
{
    const Points x0 = random_points(10, 8);
    DeformationState s = small_state(x0, 15);
    ad::Tape tape;
    EXPECT_THROW(forward(tape, s, x0, tape.variable(Tensor({7}))), std::invalid_argument);
}

} // namespace
} // namespace sft
