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

#include "sft/autodiff.hpp"
#include "sft/geometry.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace sft {

struct NetworkConfig
{
    int hidden_layers = 8;
    int width = 256;
    int input_dim = 3;
    int output_dim = 3;
    std::uint64_t seed = 0;
    std::string preset = "base";
    // Optional sin/cos encoding of the normalised input; off by default.
    int fourier_frequencies = 0;

    void validate() const;
    int encoded_input_dim() const { return input_dim * (1 + 2 * fourier_frequencies); }

    /// small = (4, 64), base = (8, 256), large = (12, 512).
    static NetworkConfig from_preset(const std::string& name, std::uint64_t seed = 0);
};

struct LayerShape
{
    std::size_t in = 0;
    std::size_t out = 0;
};

/// Flat parameter vector: for each layer, the {in, out} weight matrix
/// (row-major) followed by its bias.
struct NetworkParameters
{
    std::vector<LayerShape> layers;
    std::vector<double> values;

    std::size_t size() const noexcept { return values.size(); }
    std::size_t weight_offset(std::size_t layer) const;
    std::size_t bias_offset(std::size_t layer) const { return weight_offset(layer) + layers[layer].in * layers[layer].out; }
};

std::size_t parameter_count(const NetworkConfig& config);

/// He-normal hidden layers, zero biases, zero output layer.
NetworkParameters init_network(const NetworkConfig& config);

enum class DeformationMode
{
    Network,
    VertexOffset,
};

/// Maps template coordinates into [-1,1]^3 with one isotropic scale.
struct Normalization
{
    Vec3 center = Vec3::Zero();
    double scale = 1.0;

    Vec3 apply(const Vec3& p) const { return (p - center) / scale; }
};

Normalization fit_normalization(std::span<const Vec3> points);

struct DeformationState
{
    DeformationMode mode = DeformationMode::Network;
    NetworkConfig config;
    Normalization normalization;
    // Network weights, or V*3 per-vertex offsets in VertexOffset mode.
    NetworkParameters parameters;
};

DeformationState make_network_state(const TemplateMesh& mesh, const NetworkConfig& config);
DeformationState make_offset_state(const TemplateMesh& mesh);

/// x_t = x0 + f(normalize(x0)) (network) or x0 + Δx (offsets). `params` is a
/// flat {P} variable holding the state's parameter values.
ad::Var forward(ad::Tape& tape, const DeformationState& state, std::span<const Vec3> x0, ad::Var params);

/// Non-differentiable evaluation of the deformed vertices.
Points deform(const DeformationState& state, std::span<const Vec3> x0);

/// Deep copy of a converged state used to initialise the next frame.
DeformationState transfer_parameters(const DeformationState& previous);

/// Header (JSON: mode, preset, seed, layer shapes) plus little-endian doubles.
void save_parameters(const std::filesystem::path& path, const DeformationState& state);
DeformationState load_parameters(const std::filesystem::path& path);

} // namespace sft
