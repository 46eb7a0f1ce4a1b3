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
#include "sft/gradcheck.hpp"

#include "sft/filters.hpp"
#include "sft/losses.hpp"
#include "sft/network.hpp"
#include "sft/renderer.hpp"
#include "sft/synthetic.hpp"

#include <algorithm>
#include <ostream>
#include <random>
#include <stdexcept>

namespace sft {

namespace {

struct Scene
{
    ScenarioConfig config;
    TemplateMesh mesh;
    CameraIntrinsics camera;
    Points vertices;  // evaluation pose
    Tensor reference; // render of a second pose
};

Scene make_scene(const GradcheckOptions& o, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Scene s;
    ScenarioConfig& c = s.config;
    c.grid_resolution = o.grid_resolution;
    c.image_size = o.image_size;
    c.texture = TextureKind::Noise;
    c.texture_size = 64;
    c.family = u(rng) < 0.5 ? DeformationFamily::SineBend : DeformationFamily::Compound;
    c.amplitude = 0.1 + 0.15 * u(rng);
    c.frequency = 0.3 + 0.4 * u(rng);
    c.tilt_degrees = 10.0 + 30.0 * u(rng);
    c.seed = seed;
    const int m = c.grid_resolution;
    std::vector<Face> faces;
    for (int j = 0; j + 1 < m; ++j)
        for (int i = 0; i + 1 < m; ++i) {
            const int v00 = j * m + i, v10 = v00 + 1, v01 = v00 + m, v11 = v01 + 1;
            faces.push_back({v00, v10, v11});
            faces.push_back({v00, v11, v01});
        }
    std::vector<Vec2> uvs;
    for (int j = 0; j < m; ++j)
        for (int i = 0; i < m; ++i)
            uvs.emplace_back(static_cast<double>(i) / (m - 1), 1.0 - static_cast<double>(j) / (m - 1));
    s.mesh = build_template(sheet_vertices(c, 0.0), faces, uvs, faces, make_texture(c));
    s.camera.fx = s.camera.fy = c.focal_scale * c.image_size;
    s.camera.cx = s.camera.cy = 0.5 * c.image_size;
    s.camera.width = s.camera.height = c.image_size;

    // Small random jitter keeps the pose generic (no exactly repeated values).
    std::normal_distribution<double> jitter(0.0, 2e-3);
    s.vertices = sheet_vertices(c, 0.3 + 0.4 * u(rng));
    for (Vec3& p : s.vertices)
        p += Vec3(jitter(rng), jitter(rng), jitter(rng));
    s.reference = rasterize(sheet_vertices(c, 1.0), s.mesh, s.camera).rgb;
    return s;
}

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0)
{
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> u(lo, hi);
    for (double& v : t.storage())
        v = u(rng);
    return t;
}

ad::Var weighted_sum(ad::Var x, const Tensor& w)
{
    return ad::sum(x * x.tape()->constant(w));
}

std::vector<ad::FdReport> check_rgb(const Scene& s, const GradcheckOptions& o, std::uint64_t seed)
{
    const Tensor band = occlusion_band_mask(rasterize(s.vertices, s.mesh, s.camera), s.mesh);
    Tensor band3(s.reference.shape());
    Tensor masked_ref = s.reference;
    for (std::size_t k = 0; k < band3.size(); ++k) {
        band3[k] = band[k / 3];
        masked_ref[k] *= band3[k];
    }
    const Tensor ones(masked_ref.shape(), 1.0);
    ad::Program program = [&](ad::Tape& tape, std::span<const ad::Var> in) {
        RenderVars r = render(tape, in[0], s.mesh, s.camera);
        return weighted_lp(r.rgb * tape.constant(band3), masked_ref, ones, 2);
    };
    ad::FdOptions fd{.step = 1e-6, .tolerance = o.renderer_tolerance, .floor_fraction = 1e-3, .max_coordinates = 0,
                     .seed = seed};
    ad::FdReport r = ad::finite_difference_check(program, {points_to_tensor(s.vertices)}, fd);
    r.name = "rgb";
    return {r};
}

std::vector<ad::FdReport> check_silhouette(const Scene& s, const GradcheckOptions& o, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    const auto n = static_cast<std::size_t>(o.image_size);
    const Tensor w = random_tensor({n, n, 1}, rng);
    ad::Program program = [&](ad::Tape& tape, std::span<const ad::Var> in) {
        return weighted_sum(render(tape, in[0], s.mesh, s.camera).silhouette, w);
    };
    ad::FdOptions fd{.step = 1e-6, .tolerance = o.renderer_tolerance, .floor_fraction = 1e-3, .max_coordinates = 0,
                     .seed = seed};
    ad::FdReport r = ad::finite_difference_check(program, {points_to_tensor(s.vertices)}, fd);
    r.name = "silhouette";
    return {r};
}

std::vector<ad::FdReport> check_filters(const GradcheckOptions& o, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    const std::size_t n = 12;
    const Tensor image = random_tensor({n, n, 3}, rng, 0.0, 1.0);
    const Tensor w = random_tensor({n, n, 3}, rng);
    ad::FdOptions fd{.step = 1e-5, .tolerance = o.numeric_tolerance, .floor_fraction = 1e-3, .max_coordinates = 0,
                     .seed = seed};
    std::vector<ad::FdReport> out;
    auto run = [&](const std::string& name, ad::Program p) {
        ad::FdReport r = ad::finite_difference_check(p, {image}, fd);
        r.name = name;
        out.push_back(r);
    };
    run("filters/blur", [&](ad::Tape&, std::span<const ad::Var> in) {
        return weighted_sum(gaussian_blur(in[0], 1.3), w);
    });
    for (int order : {1, 2})
        for (bool normalized : {false, true})
            run("filters/sobel" + std::to_string(order) + (normalized ? "n" : ""),
                [&, order, normalized](ad::Tape&, std::span<const ad::Var> in) {
                    std::vector<ad::Var> g = sobel(in[0], order, normalized);
                    ad::Var total = weighted_sum(g[0], w);
                    for (std::size_t k = 1; k < g.size(); ++k)
                        total = total + weighted_sum(g[k], w);
                    return total;
                });
    return out;
}

std::vector<ad::FdReport> check_inextensibility(const Scene& s, const GradcheckOptions& o, std::uint64_t seed)
{
    std::vector<ad::FdReport> out;
    for (InextVariant variant : {InextVariant::EigenvalueDiagonal, InextVariant::LiteralDeterminant}) {
        LossConfig cfg;
        cfg.inext_variant = variant;
        ad::Program program = [&](ad::Tape&, std::span<const ad::Var> in) {
            return inextensibility_loss(in[0], s.mesh, cfg);
        };
        ad::FdOptions fd{.step = 1e-7, .tolerance = o.numeric_tolerance, .floor_fraction = 1e-3,
                         .max_coordinates = 0, .seed = seed};
        ad::FdReport r = ad::finite_difference_check(program, {points_to_tensor(s.vertices)}, fd);
        r.name = "inextensibility/" + to_string(variant);
        out.push_back(r);
    }
    return out;
}

std::vector<ad::FdReport> check_network(const GradcheckOptions& o, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    ScenarioConfig c;
    c.grid_resolution = 4;
    const Points x0 = sheet_vertices(c, 0.5);
    NetworkConfig nc = NetworkConfig::from_preset("small", seed);
    DeformationState state;
    state.config = nc;
    state.normalization = fit_normalization(x0);
    state.parameters = init_network(nc);
    // A non-zero output layer so that every hidden parameter receives gradient.
    const std::size_t last = state.parameters.layers.size() - 1;
    std::normal_distribution<double> normal(0.0, 0.1);
    for (std::size_t k = state.parameters.weight_offset(last); k < state.parameters.size(); ++k)
        state.parameters.values[k] = normal(rng);
    const Tensor w = random_tensor({x0.size(), 3}, rng);
    ad::Program program = [&](ad::Tape& tape, std::span<const ad::Var> in) {
        return weighted_sum(forward(tape, state, x0, in[0]), w);
    };
    ad::FdOptions fd{.step = 1e-6, .tolerance = o.numeric_tolerance, .floor_fraction = 1e-3,
                     .max_coordinates = 400, .seed = seed};
    ad::FdReport r = ad::finite_difference_check(program, {Tensor({state.parameters.size()}, state.parameters.values)},
                                                 fd);
    r.name = "network";
    return {r};
}

std::vector<ad::FdReport> check_data_loss(const GradcheckOptions& o, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    const Tensor pred = random_tensor({6, 7, 3}, rng, 0.0, 1.0);
    const Tensor ref = random_tensor({6, 7, 3}, rng, 0.0, 1.0);
    // Weights are detached, so they are frozen at the unperturbed residual.
    LossConfig cfg;
    Tensor residual = pred;
    for (std::size_t k = 0; k < residual.size(); ++k)
        residual[k] = std::abs(pred[k] - ref[k]);
    const Tensor weights = adaptive_weight(residual, cfg.alpha, cfg.sigma);
    std::vector<ad::FdReport> out;
    for (int p : {1, 2}) {
        ad::Program program = [&, p](ad::Tape&, std::span<const ad::Var> in) {
            return weighted_lp(in[0], ref, weights, p);
        };
        ad::FdOptions fd{.step = 1e-7, .tolerance = o.numeric_tolerance, .floor_fraction = 1e-3,
                         .max_coordinates = 0, .seed = seed};
        ad::FdReport r = ad::finite_difference_check(program, {pred}, fd);
        r.name = "data_loss/p" + std::to_string(p);
        out.push_back(r);
    }
    return out;
}

std::vector<ad::FdReport> check_temporal(const GradcheckOptions& o, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::vector<Tensor> inputs;
    for (int k = 0; k < 3; ++k)
        inputs.push_back(random_tensor({10, 3}, rng));
    ad::Program program = [](ad::Tape&, std::span<const ad::Var> in) { return temporal_loss(in[0], in[1], in[2]); };
    ad::FdOptions fd{.step = 1e-6, .tolerance = o.numeric_tolerance, .floor_fraction = 1e-3, .max_coordinates = 0,
                     .seed = seed};
    ad::FdReport r = ad::finite_difference_check(program, inputs, fd);
    r.name = "temporal";
    return {r};
}

} // namespace

const std::vector<std::string>& gradcheck_families()
{
    static const std::vector<std::string> names = {"rgb",     "silhouette", "filters", "inextensibility",
                                                   "network", "data_loss",  "temporal"};
    return names;
}

bool GradcheckReport::passed() const
{
    return failure_count() == 0;
}

std::size_t GradcheckReport::failure_count() const
{
    return static_cast<std::size_t>(
        std::count_if(checks.begin(), checks.end(), [](const ad::FdReport& r) { return !r.passed(); }));
}

GradcheckReport run_gradcheck(const GradcheckOptions& o, std::ostream& log)
{
    const auto& families = gradcheck_families();
    if (!o.only.empty() && std::find(families.begin(), families.end(), o.only) == families.end())
        throw std::invalid_argument("unknown gradcheck family '" + o.only + "'");
    if (o.scenes < 1)
        throw std::invalid_argument("gradcheck needs at least one scene");
    auto selected = [&](const std::string& f) { return o.only.empty() || o.only == f; };

    GradcheckReport report;
    for (int k = 0; k < o.scenes; ++k) {
        const std::uint64_t seed = o.seed * 7919ULL + static_cast<std::uint64_t>(k);
        std::vector<ad::FdReport> checks;
        const bool needs_scene = selected("rgb") || selected("silhouette") || selected("inextensibility");
        const Scene scene = needs_scene ? make_scene(o, seed) : Scene{};
        auto add = [&](std::vector<ad::FdReport> r) { checks.insert(checks.end(), r.begin(), r.end()); };
        if (selected("rgb"))
            add(check_rgb(scene, o, seed));
        if (selected("silhouette"))
            add(check_silhouette(scene, o, seed));
        if (selected("filters"))
            add(check_filters(o, seed));
        if (selected("inextensibility"))
            add(check_inextensibility(scene, o, seed));
        if (selected("network"))
            add(check_network(o, seed));
        if (selected("data_loss"))
            add(check_data_loss(o, seed));
        if (selected("temporal"))
            add(check_temporal(o, seed));
        for (ad::FdReport& r : checks) {
            r.name = "scene " + std::to_string(k) + " " + r.name;
            log << r.summary() << '\n';
            report.checks.push_back(std::move(r));
        }
    }
    log << (report.passed() ? "gradcheck passed" : "gradcheck FAILED") << ": " << report.checks.size()
        << " checks, " << report.failure_count() << " failures\n";
    return report;
}

} // namespace sft
