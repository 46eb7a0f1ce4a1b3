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
#include "sft/network.hpp"

#include <json.hpp>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>
#include <stdexcept>

namespace sft {

namespace {

constexpr char kParamMagic[8] = {'S', 'F', 'T', 'P', 'A', 'R', 'A', 'M'};

std::vector<LayerShape> layer_shapes(const NetworkConfig& config)
{
    std::vector<LayerShape> layers;
    std::size_t in = static_cast<std::size_t>(config.encoded_input_dim());
    for (int l = 0; l < config.hidden_layers; ++l) {
        layers.push_back({in, static_cast<std::size_t>(config.width)});
        in = static_cast<std::size_t>(config.width);
    }
    layers.push_back({in, static_cast<std::size_t>(config.output_dim)});
    return layers;
}

Tensor encode_inputs(const DeformationState& state, std::span<const Vec3> x0)
{
    const int freqs = state.config.fourier_frequencies;
    const std::size_t dim = static_cast<std::size_t>(state.config.encoded_input_dim());
    Tensor enc({x0.size(), dim});
    for (std::size_t i = 0; i < x0.size(); ++i) {
        const Vec3 p = state.normalization.apply(x0[i]);
        double* row = enc.data() + i * dim;
        for (int c = 0; c < 3; ++c)
            row[c] = p[c];
        for (int k = 0; k < freqs; ++k) {
            const double w = std::ldexp(std::numbers::pi, k);
            for (int c = 0; c < 3; ++c) {
                row[3 + 6 * k + c] = std::sin(w * p[c]);
                row[6 + 6 * k + c] = std::cos(w * p[c]);
            }
        }
    }
    return enc;
}

void check_state(const DeformationState& state, std::size_t vertex_count)
{
    if (state.mode == DeformationMode::VertexOffset) {
        if (state.parameters.size() != vertex_count * 3)
            throw std::invalid_argument("offset state has " + std::to_string(state.parameters.size()) +
                                        " values for " + std::to_string(vertex_count) + " vertices");
    }
    else if (state.parameters.layers.empty()) {
        throw std::invalid_argument("network state has no layers");
    }
}

} // namespace

void NetworkConfig::validate() const
{
    if (hidden_layers < 1 || width < 1)
        throw std::invalid_argument("network needs at least one hidden layer of positive width");
    if (input_dim != 3 || output_dim != 3)
        throw std::invalid_argument("deformation network maps R^3 to R^3");
    if (fourier_frequencies < 0)
        throw std::invalid_argument("fourier_frequencies must be non-negative");
}

NetworkConfig NetworkConfig::from_preset(const std::string& name, std::uint64_t seed)
{
    NetworkConfig c;
    c.preset = name;
    c.seed = seed;
    if (name == "small") {
        c.hidden_layers = 4;
        c.width = 64;
    }
    else if (name == "base") {
        c.hidden_layers = 8;
        c.width = 256;
    }
    else if (name == "large") {
        c.hidden_layers = 12;
        c.width = 512;
    }
    else {
        throw std::invalid_argument("unknown network preset '" + name + "' (small, base, large)");
    }
    return c;
}

std::size_t NetworkParameters::weight_offset(std::size_t layer) const
{
    std::size_t offset = 0;
    for (std::size_t l = 0; l < layer; ++l)
        offset += layers[l].in * layers[l].out + layers[l].out;
    return offset;
}

std::size_t parameter_count(const NetworkConfig& config)
{
    config.validate();
    std::size_t n = 0;
    for (const LayerShape& s : layer_shapes(config))
        n += s.in * s.out + s.out;
    return n;
}

NetworkParameters init_network(const NetworkConfig& config)
{
    config.validate();
    NetworkParameters p;
    p.layers = layer_shapes(config);
    p.values.assign(parameter_count(config), 0.0);
    std::mt19937_64 rng(config.seed);
    for (std::size_t l = 0; l + 1 < p.layers.size(); ++l) {
        std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(p.layers[l].in)));
        const std::size_t off = p.weight_offset(l);
        for (std::size_t k = 0; k < p.layers[l].in * p.layers[l].out; ++k)
            p.values[off + k] = normal(rng);
    }
    return p;
}

Normalization fit_normalization(std::span<const Vec3> points)
{
    if (points.empty())
        throw std::invalid_argument("cannot normalise an empty point set");
    Vec3 lo = points[0], hi = points[0];
    for (const Vec3& p : points) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    Normalization n;
    n.center = 0.5 * (lo + hi);
    const double half = 0.5 * (hi - lo).maxCoeff();
    n.scale = half > 0.0 ? half : 1.0;
    return n;
}

DeformationState make_network_state(const TemplateMesh& mesh, const NetworkConfig& config)
{
    DeformationState s;
    s.mode = DeformationMode::Network;
    s.config = config;
    s.normalization = fit_normalization(mesh.vertices);
    s.parameters = init_network(config);
    return s;
}

DeformationState make_offset_state(const TemplateMesh& mesh)
{
    DeformationState s;
    s.mode = DeformationMode::VertexOffset;
    s.config.preset = "offsets";
    s.normalization = fit_normalization(mesh.vertices);
    s.parameters.layers = {{mesh.vertices.size(), 3}};
    s.parameters.values.assign(mesh.vertices.size() * 3, 0.0);
    return s;
}

ad::Var forward(ad::Tape& tape, const DeformationState& state, std::span<const Vec3> x0, ad::Var params)
{
    check_state(state, x0.size());
    if (params.value().size() != state.parameters.size())
        throw std::invalid_argument("parameter variable has " + std::to_string(params.value().size()) +
                                    " values, state expects " + std::to_string(state.parameters.size()));
    ad::Var base = tape.constant(points_to_tensor(x0), "x0");
    if (state.mode == DeformationMode::VertexOffset)
        return base + ad::reshape(params, {x0.size(), 3});

    const NetworkParameters& np = state.parameters;
    ad::Var h = tape.constant(encode_inputs(state, x0), "encoded_x0");
    for (std::size_t l = 0; l < np.layers.size(); ++l) {
        const LayerShape& s = np.layers[l];
        ad::Var w = ad::slice(params, np.weight_offset(l), {s.in, s.out});
        ad::Var b = ad::slice(params, np.bias_offset(l), {s.out});
        h = ad::add_bias(ad::matmul(h, w), b);
        if (l + 1 < np.layers.size())
            h = ad::relu(h);
    }
    return base + h;
}

Points deform(const DeformationState& state, std::span<const Vec3> x0)
{
    ad::Tape tape;
    ad::Var params = tape.constant(Tensor({state.parameters.size()}, state.parameters.values), "theta");
    return tensor_to_points(forward(tape, state, x0, params).value());
}

DeformationState transfer_parameters(const DeformationState& previous)
{
    return previous;
}

void save_parameters(const std::filesystem::path& path, const DeformationState& state)
{
    static_assert(std::endian::native == std::endian::little, "parameter files are little-endian");
    nlohmann::json header;
    header["mode"] = state.mode == DeformationMode::Network ? "network" : "offsets";
    header["preset"] = state.config.preset;
    header["seed"] = state.config.seed;
    header["hidden_layers"] = state.config.hidden_layers;
    header["width"] = state.config.width;
    header["fourier_frequencies"] = state.config.fourier_frequencies;
    header["normalization"] = {state.normalization.center.x(), state.normalization.center.y(),
                               state.normalization.center.z(), state.normalization.scale};
    nlohmann::json layers = nlohmann::json::array();
    for (const LayerShape& s : state.parameters.layers)
        layers.push_back({s.in, s.out});
    header["layers"] = layers;
    header["count"] = state.parameters.size();
    const std::string text = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot write parameters: " + path.string());
    const std::uint64_t len = text.size();
    out.write(kParamMagic, sizeof kParamMagic);
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.write(reinterpret_cast<const char*>(state.parameters.values.data()),
              static_cast<std::streamsize>(state.parameters.size() * sizeof(double)));
    if (!out)
        throw std::runtime_error("failed writing parameters: " + path.string());
}

DeformationState load_parameters(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot read parameters: " + path.string());
    char magic[8];
    std::uint64_t len = 0;
    in.read(magic, sizeof magic);
    in.read(reinterpret_cast<char*>(&len), sizeof len);
    if (!in || std::memcmp(magic, kParamMagic, sizeof magic) != 0 || len > (1u << 20))
        throw std::runtime_error("not a parameter file: " + path.string());
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    const nlohmann::json header = nlohmann::json::parse(text);

    DeformationState s;
    s.mode = header.at("mode") == "network" ? DeformationMode::Network : DeformationMode::VertexOffset;
    s.config.preset = header.at("preset");
    s.config.seed = header.at("seed");
    s.config.hidden_layers = header.at("hidden_layers");
    s.config.width = header.at("width");
    s.config.fourier_frequencies = header.at("fourier_frequencies");
    const auto& norm = header.at("normalization");
    s.normalization.center = Vec3(norm[0], norm[1], norm[2]);
    s.normalization.scale = norm[3];
    for (const auto& l : header.at("layers"))
        s.parameters.layers.push_back({l[0], l[1]});
    const std::size_t count = header.at("count");
    s.parameters.values.resize(count);
    in.read(reinterpret_cast<char*>(s.parameters.values.data()), static_cast<std::streamsize>(count * sizeof(double)));
    if (!in)
        throw std::runtime_error("truncated parameter file: " + path.string());
    return s;
}

} // namespace sft
