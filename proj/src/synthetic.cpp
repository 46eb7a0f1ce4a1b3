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
#include "sft/synthetic.hpp"

#include "sft/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

namespace sft {

namespace {

constexpr double kDepthToMillimetres = 1000.0;

Vec3 checker_colour(bool dark)
{
    return dark ? Vec3(0.05, 0.1, 0.3) : Vec3(0.8, 0.8, 0.7);
}

// Lift along the sheet normal at normalised coordinates (a, b) in [0, 1]^2.
double lift(const ScenarioConfig& c, double a, double b)
{
    const double two_pi = 2.0 * std::numbers::pi;
    switch (c.family) {
    case DeformationFamily::SineBend:
        return c.amplitude * std::sin(two_pi * c.frequency * a);
    case DeformationFamily::CornerFold: {
        const double d = std::max(0.0, a + b - 1.0);
        return c.amplitude * d * d;
    }
    case DeformationFamily::Compound:
        return c.amplitude * std::sin(two_pi * c.frequency * a) +
               0.5 * c.amplitude * std::sin(two_pi * c.frequency * b);
    case DeformationFamily::Translate:
        return 0.0;
    }
    return 0.0;
}

void check_in_frame(const ScenarioConfig& c, const CameraIntrinsics& camera, std::span<const Vec3> vertices, int t)
{
    const Projection proj = project(vertices, camera);
    double worst = 0.0;
    for (const Vec2& p : proj.pixels) {
        const double dx = std::abs(p.x() - camera.cx) / camera.cx;
        const double dy = std::abs(p.y() - camera.cy) / camera.cy;
        worst = std::max({worst, dx, dy});
    }
    if (worst >= 1.0) {
        std::ostringstream msg;
        msg << "sheet leaves the image at frame " << t << "; try camera_distance >= "
            << std::ceil(c.camera_distance * worst * 1.1 * 100.0) / 100.0;
        throw GeometryError(msg.str());
    }
}

} // namespace

std::string to_string(DeformationFamily family)
{
    switch (family) {
    case DeformationFamily::SineBend:
        return "sine-bend";
    case DeformationFamily::CornerFold:
        return "corner-fold";
    case DeformationFamily::Compound:
        return "compound";
    case DeformationFamily::Translate:
        return "translate";
    }
    return "sine-bend";
}

DeformationFamily parse_family(const std::string& name)
{
    for (DeformationFamily f : {DeformationFamily::SineBend, DeformationFamily::CornerFold,
                                DeformationFamily::Compound, DeformationFamily::Translate})
        if (to_string(f) == name)
            return f;
    throw std::invalid_argument("unknown deformation family '" + name +
                                "' (sine-bend, corner-fold, compound, translate)");
}

TextureKind parse_texture_kind(const std::string& name)
{
    if (name == "checkerboard")
        return TextureKind::Checkerboard;
    if (name == "noise")
        return TextureKind::Noise;
    if (name == "image")
        return TextureKind::ImageFile;
    throw std::invalid_argument("unknown texture kind '" + name + "' (checkerboard, noise, image)");
}

void ScenarioConfig::validate() const
{
    if (grid_resolution < 2)
        throw std::invalid_argument("grid_resolution must be >= 2");
    if (frame_count < 1)
        throw std::invalid_argument("frame_count must be >= 1");
    if (amplitude < 0.0)
        throw std::invalid_argument("amplitude must be >= 0");
    if (!(sheet_size > 0.0) || !(camera_distance > 0.0) || !(focal_scale > 0.0))
        throw std::invalid_argument("sheet_size, camera_distance and focal_scale must be > 0");
    if (image_size < 8)
        throw std::invalid_argument("image_size must be >= 8");
    if (texture == TextureKind::Checkerboard && (checker_cells < 1 || texture_size < checker_cells))
        throw std::invalid_argument("checkerboard needs 1 <= checker_cells <= texture_size");
    if (texture == TextureKind::ImageFile && texture_file.empty())
        throw std::invalid_argument("image texture needs texture_file");
}

std::uint64_t frame_point_seed(std::uint64_t base, std::size_t frame)
{
    return base * 1000003ULL + 7919ULL * (frame + 1);
}

Points sheet_vertices(const ScenarioConfig& c, double phase)
{
    const int m = c.grid_resolution;
    const double tilt = c.tilt_degrees * std::numbers::pi / 180.0;
    const double ct = std::cos(tilt), st = std::sin(tilt);
    const Vec3 shift = c.family == DeformationFamily::Translate ? Vec3(phase * c.translation) : Vec3::Zero();
    Points out;
    out.reserve(static_cast<std::size_t>(m * m));
    for (int j = 0; j < m; ++j) {
        for (int i = 0; i < m; ++i) {
            const double a = static_cast<double>(i) / (m - 1);
            const double b = static_cast<double>(j) / (m - 1);
            // Sheet frame: x right, y down the image, lift towards the camera.
            const double x = (a - 0.5) * c.sheet_size;
            const double y = (b - 0.5) * c.sheet_size;
            const double z = -phase * lift(c, a, b);
            out.emplace_back(x + shift.x(), ct * y - st * z + shift.y(), st * y + ct * z + c.camera_distance + shift.z());
        }
    }
    return out;
}

Tensor make_texture(const ScenarioConfig& c)
{
    if (c.texture == TextureKind::ImageFile) {
        Tensor t = read_png(c.texture_file);
        if (t.dim(2) == 3)
            return t;
        Tensor rgb({t.dim(0), t.dim(1), 3});
        for (std::size_t k = 0; k < t.size(); ++k)
            for (std::size_t ch = 0; ch < 3; ++ch)
                rgb[k * 3 + ch] = t[k];
        return rgb;
    }
    const auto n = static_cast<std::size_t>(c.texture_size);
    Tensor tex({n, n, 3});
    if (c.texture == TextureKind::Checkerboard) {
        const std::size_t cell = n / static_cast<std::size_t>(c.checker_cells);
        for (std::size_t y = 0; y < n; ++y)
            for (std::size_t x = 0; x < n; ++x) {
                const Vec3 col = checker_colour(((x / cell) + (y / cell)) % 2 == 1);
                for (int ch = 0; ch < 3; ++ch)
                    tex.at(y, x, static_cast<std::size_t>(ch)) = col[ch];
            }
        return tex;
    }
    // Smooth noise: a seeded sum of low-frequency sinusoids per channel.
    std::mt19937_64 rng(c.seed ^ 0x5eedULL);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    std::uniform_real_distribution<double> freq(1.0, 4.0);
    for (int ch = 0; ch < 3; ++ch) {
        std::array<std::array<double, 4>, 4> waves{};
        for (auto& w : waves)
            w = {freq(rng), freq(rng), phase(rng), 0.0};
        for (std::size_t y = 0; y < n; ++y)
            for (std::size_t x = 0; x < n; ++x) {
                const double u = static_cast<double>(x) / n, v = static_cast<double>(y) / n;
                double s = 0.0;
                for (const auto& w : waves)
                    s += std::sin(2.0 * std::numbers::pi * (w[0] * u + w[1] * v) + w[2]);
                tex.at(y, x, static_cast<std::size_t>(ch)) = 0.45 + 0.1 * s;
            }
    }
    return tex;
}

SyntheticSequence generate_sequence(const ScenarioConfig& c)
{
    c.validate();
    SyntheticSequence seq;
    seq.config = c;
    const int m = c.grid_resolution;

    std::vector<Face> faces;
    for (int j = 0; j + 1 < m; ++j)
        for (int i = 0; i + 1 < m; ++i) {
            const int v00 = j * m + i, v10 = v00 + 1, v01 = v00 + m, v11 = v01 + 1;
            faces.push_back({v00, v10, v11});
            faces.push_back({v00, v11, v01});
        }
    // Texture row 0 is the top of the image while uv v = 0 is the bottom.
    std::vector<Vec2> uvs;
    for (int j = 0; j < m; ++j)
        for (int i = 0; i < m; ++i)
            uvs.emplace_back(static_cast<double>(i) / (m - 1), 1.0 - static_cast<double>(j) / (m - 1));
    seq.mesh = build_template(sheet_vertices(c, 0.0), faces, uvs, faces, quantize_8bit(make_texture(c)));

    seq.camera.fx = seq.camera.fy = c.focal_scale * c.image_size;
    seq.camera.cx = seq.camera.cy = 0.5 * c.image_size;
    seq.camera.width = seq.camera.height = c.image_size;
    check_in_frame(c, seq.camera, seq.mesh.vertices, 0);

    seq.gt_point_seed = c.seed;
    RenderSettings settings;
    for (int t = 1; t <= c.frame_count; ++t) {
        const double phase = static_cast<double>(t) / c.frame_count;
        Points verts = sheet_vertices(c, phase);
        check_in_frame(c, seq.camera, verts, t);
        const RenderOutput r = rasterize(verts, seq.mesh, seq.camera, settings);

        FrameObservation f;
        Tensor rgb = r.rgb;
        if (c.brightness_ramp != 0.0)
            for (double& v : rgb.storage())
                v = std::clamp(v * (1.0 + c.brightness_ramp * phase), 0.0, 1.0);
        f.rgb = quantize_8bit(rgb);
        f.mask = Tensor({r.raster.height, r.raster.width, 1});
        for (std::size_t k = 0; k < f.mask.size(); ++k)
            f.mask[k] = r.raster.covered(k) ? 1.0 : 0.0;
        Tensor depth = r.depth;
        for (double& v : depth.storage())
            v = static_cast<double>(static_cast<float>(v * kDepthToMillimetres));
        f.depth = std::move(depth);
        f.gt_points = sample_points(verts, seq.mesh.faces, c.gt_point_count,
                                    frame_point_seed(c.seed, static_cast<std::size_t>(t - 1)));
        seq.frames.push_back(std::move(f));
        seq.gt_vertices.push_back(std::move(verts));
    }
    return seq;
}

} // namespace sft
