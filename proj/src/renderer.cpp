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
#include "sft/renderer.hpp"

#include "sft/detail/dual.hpp"
#include "sft/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace sft {

namespace {

struct TextureSample
{
    std::array<double, 3> color{};
    std::array<double, 3> d_du{};
    std::array<double, 3> d_dv{};
    bool clamped = false;
};

// Bilinear lookup with clamp-to-edge addressing. OBJ convention: v = 0 is the
// bottom row of the image.
TextureSample sample_texture(const Tensor& tex, double u, double v)
{
    TextureSample s;
    const double uc = std::clamp(u, 0.0, 1.0), vc = std::clamp(v, 0.0, 1.0);
    const bool u_in = uc == u, v_in = vc == v;
    s.clamped = !(u_in && v_in);
    const auto w = static_cast<long>(tex.dim(1)), h = static_cast<long>(tex.dim(0));
    const double x = uc * static_cast<double>(w) - 0.5;
    const double y = (1.0 - vc) * static_cast<double>(h) - 0.5;
    const double xf = std::floor(x), yf = std::floor(y);
    const double ax = x - xf, ay = y - yf;
    const auto clampi = [](long i, long n) { return static_cast<std::size_t>(std::clamp(i, 0L, n - 1)); };
    const std::size_t x0 = clampi(static_cast<long>(xf), w), x1 = clampi(static_cast<long>(xf) + 1, w);
    const std::size_t y0 = clampi(static_cast<long>(yf), h), y1 = clampi(static_cast<long>(yf) + 1, h);
    for (std::size_t c = 0; c < 3; ++c) {
        const double t00 = tex.at(y0, x0, c), t01 = tex.at(y0, x1, c);
        const double t10 = tex.at(y1, x0, c), t11 = tex.at(y1, x1, c);
        s.color[c] = (1 - ay) * ((1 - ax) * t00 + ax * t01) + ay * ((1 - ax) * t10 + ax * t11);
        const double d_dx = (1 - ay) * (t01 - t00) + ay * (t11 - t10);
        const double d_dy = (1 - ax) * (t10 - t00) + ax * (t11 - t01);
        s.d_du[c] = u_in ? d_dx * static_cast<double>(w) : 0.0;
        s.d_dv[c] = v_in ? -d_dy * static_cast<double>(h) : 0.0;
    }
    return s;
}

double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

double signed_area(const Projection& proj, const Face& f)
{
    const Vec2& p0 = proj.pixels[static_cast<std::size_t>(f[0])];
    return cross2(proj.pixels[static_cast<std::size_t>(f[1])] - p0, proj.pixels[static_cast<std::size_t>(f[2])] - p0);
}

struct HardRaster
{
    RasterRecord record;
    std::vector<double> depth;
};

HardRaster rasterize_hard(const Projection& proj, const TemplateMesh& mesh, const CameraIntrinsics& camera)
{
    const auto w = static_cast<std::size_t>(camera.width), h = static_cast<std::size_t>(camera.height);
    HardRaster out;
    out.record.width = w;
    out.record.height = h;
    out.record.face.assign(w * h, -1);
    out.record.barycentrics.assign(w * h, {0.0, 0.0, 0.0});
    out.depth.assign(w * h, std::numeric_limits<double>::infinity());

    for (std::size_t fi = 0; fi < mesh.face_count(); ++fi) {
        const Face& f = mesh.faces[fi];
        const Vec2& p0 = proj.pixels[static_cast<std::size_t>(f[0])];
        const Vec2& p1 = proj.pixels[static_cast<std::size_t>(f[1])];
        const Vec2& p2 = proj.pixels[static_cast<std::size_t>(f[2])];
        const double area = cross2(p1 - p0, p2 - p0);
        if (std::abs(area) < 1e-12)
            continue;
        const double z0 = proj.depths[static_cast<std::size_t>(f[0])];
        const double z1 = proj.depths[static_cast<std::size_t>(f[1])];
        const double z2 = proj.depths[static_cast<std::size_t>(f[2])];

        const double min_x = std::min({p0.x(), p1.x(), p2.x()}), max_x = std::max({p0.x(), p1.x(), p2.x()});
        const double min_y = std::min({p0.y(), p1.y(), p2.y()}), max_y = std::max({p0.y(), p1.y(), p2.y()});
        const long x_begin = std::max(0L, static_cast<long>(std::ceil(min_x - 0.5)));
        const long x_end = std::min(static_cast<long>(w) - 1, static_cast<long>(std::floor(max_x - 0.5)));
        const long y_begin = std::max(0L, static_cast<long>(std::ceil(min_y - 0.5)));
        const long y_end = std::min(static_cast<long>(h) - 1, static_cast<long>(std::floor(max_y - 0.5)));

        for (long py = y_begin; py <= y_end; ++py)
            for (long px = x_begin; px <= x_end; ++px) {
                const Vec2 q(static_cast<double>(px) + 0.5, static_cast<double>(py) + 0.5);
                const double b0 = cross2(p1 - q, p2 - q) / area;
                const double b1 = cross2(p2 - q, p0 - q) / area;
                const double b2 = 1.0 - b0 - b1;
                if (b0 < 0.0 || b1 < 0.0 || b2 < 0.0)
                    continue;
                const double z = 1.0 / (b0 / z0 + b1 / z1 + b2 / z2);
                const std::size_t pixel = static_cast<std::size_t>(py) * w + static_cast<std::size_t>(px);
                if (z < out.depth[pixel]) {
                    out.depth[pixel] = z;
                    out.record.face[pixel] = static_cast<int>(fi);
                    out.record.barycentrics[pixel] = {b0, b1, b2};
                }
            }
    }
    return out;
}

// Outline edges for the soft silhouette: {a, b, opposite vertex of an adjacent
// face}. The opposite vertex marks the covered side of the edge.
std::vector<std::array<int, 3>> outline_edges(const Projection& proj, const TemplateMesh& mesh)
{
    std::vector<std::array<int, 3>> out;
    auto opposite = [&](int face, int a, int b) {
        for (int v : mesh.faces[static_cast<std::size_t>(face)])
            if (v != a && v != b)
                return v;
        return a;
    };
    for (const auto& e : mesh.edges) {
        if (e.faces[1] < 0) {
            out.push_back({e.a, e.b, opposite(e.faces[0], e.a, e.b)});
            continue;
        }
        const double a0 = signed_area(proj, mesh.faces[static_cast<std::size_t>(e.faces[0])]);
        const double a1 = signed_area(proj, mesh.faces[static_cast<std::size_t>(e.faces[1])]);
        // An interior edge is on the outline when the surface folds over it
        // in screen space.
        const Face& f0 = mesh.faces[static_cast<std::size_t>(e.faces[0])];
        const Face& f1 = mesh.faces[static_cast<std::size_t>(e.faces[1])];
        auto forward = [&](const Face& f) {
            for (int k = 0; k < 3; ++k)
                if (f[static_cast<std::size_t>(k)] == e.a && f[static_cast<std::size_t>((k + 1) % 3)] == e.b)
                    return true;
            return false;
        };
        const bool consistent = forward(f0) != forward(f1);
        const bool same_side = (a0 > 0.0) == (a1 > 0.0);
        if (consistent != same_side)
            out.push_back({e.a, e.b, opposite(e.faces[0], e.a, e.b)});
    }
    return out;
}

double segment_distance(const Vec2& q, const Vec2& a, const Vec2& b)
{
    const Vec2 ab = b - a;
    const double len2 = ab.squaredNorm();
    double t = len2 > 0.0 ? (q - a).dot(ab) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return (q - (a + t * ab)).norm();
}

double sigmoid(double x)
{
    if (x >= 0.0)
        return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

struct SoftSilhouette
{
    Tensor coverage;
    std::vector<int> nearest_edge; // index into edges, -1 when out of range
    std::vector<std::array<int, 3>> edges;
};

SoftSilhouette soft_silhouette(const Projection& proj, const RasterRecord& raster, const TemplateMesh& mesh,
                               double softness)
{
    if (!(softness > 0.0))
        throw std::invalid_argument("silhouette softness must be positive");
    const std::size_t w = raster.width, h = raster.height;
    SoftSilhouette out;
    out.edges = outline_edges(proj, mesh);
    out.coverage = Tensor({h, w, 1});
    out.nearest_edge.assign(w * h, -1);
    std::vector<double> dist(w * h, std::numeric_limits<double>::infinity());

    // Beyond this distance the sigmoid is within 1.4e-11 of 0 or 1.
    const double reach = kSilhouetteReach * softness;
    for (std::size_t ei = 0; ei < out.edges.size(); ++ei) {
        const Vec2& a = proj.pixels[static_cast<std::size_t>(out.edges[ei][0])];
        const Vec2& b = proj.pixels[static_cast<std::size_t>(out.edges[ei][1])];
        const long x_begin = std::max(0L, static_cast<long>(std::floor(std::min(a.x(), b.x()) - reach)));
        const long x_end = std::min(static_cast<long>(w) - 1, static_cast<long>(std::ceil(std::max(a.x(), b.x()) + reach)));
        const long y_begin = std::max(0L, static_cast<long>(std::floor(std::min(a.y(), b.y()) - reach)));
        const long y_end = std::min(static_cast<long>(h) - 1, static_cast<long>(std::ceil(std::max(a.y(), b.y()) + reach)));
        for (long py = y_begin; py <= y_end; ++py)
            for (long px = x_begin; px <= x_end; ++px) {
                const std::size_t pixel = static_cast<std::size_t>(py) * w + static_cast<std::size_t>(px);
                const double d =
                    segment_distance(Vec2(static_cast<double>(px) + 0.5, static_cast<double>(py) + 0.5), a, b);
                if (d < dist[pixel]) {
                    dist[pixel] = d;
                    out.nearest_edge[pixel] = static_cast<int>(ei);
                }
            }
    }
    for (std::size_t pixel = 0; pixel < w * h; ++pixel) {
        const double sign = raster.covered(pixel) ? 1.0 : -1.0;
        out.coverage[pixel] = std::isinf(dist[pixel]) ? (sign > 0 ? 1.0 : 0.0) : sigmoid(sign * dist[pixel] / softness);
    }
    return out;
}

struct ShadeResult
{
    Tensor rgb;
    std::size_t clamped = 0;
};

ShadeResult shade(const Projection& proj, const RasterRecord& raster, const TemplateMesh& mesh)
{
    ShadeResult out{Tensor({raster.height, raster.width, 3}), 0};
    for (std::size_t pixel = 0; pixel < raster.face.size(); ++pixel) {
        if (!raster.covered(pixel))
            continue;
        const auto fi = static_cast<std::size_t>(raster.face[pixel]);
        const Face& f = mesh.faces[fi];
        const auto& b = raster.barycentrics[pixel];
        double wsum = 0.0;
        double wk[3];
        for (std::size_t k = 0; k < 3; ++k) {
            wk[k] = b[k] / proj.depths[static_cast<std::size_t>(f[k])];
            wsum += wk[k];
        }
        Vec2 uv = Vec2::Zero();
        for (int k = 0; k < 3; ++k)
            uv += (wk[k] / wsum) * mesh.uv(fi, k);
        const TextureSample s = sample_texture(mesh.texture, uv.x(), uv.y());
        out.clamped += s.clamped ? 1 : 0;
        for (std::size_t c = 0; c < 3; ++c)
            out.rgb[3 * pixel + c] = s.color[c];
    }
    return out;
}

using D9 = detail::Dual<9>;
using D6 = detail::Dual<6>;

} // namespace

RenderOutput rasterize(std::span<const Vec3> vertices, const TemplateMesh& mesh, const CameraIntrinsics& camera,
                       const RenderSettings& settings)
{
    camera.validate();
    if (vertices.size() != mesh.vertex_count())
        throw std::invalid_argument("rasterize: vertex count does not match the mesh");
    const Projection proj = project(vertices, camera, settings.near_plane);
    HardRaster hard = rasterize_hard(proj, mesh, camera);
    RenderOutput out;
    ShadeResult shaded = shade(proj, hard.record, mesh);
    out.rgb = std::move(shaded.rgb);
    out.uv_clamped = shaded.clamped;
    out.depth = Tensor({hard.record.height, hard.record.width, 1});
    for (std::size_t pixel = 0; pixel < hard.depth.size(); ++pixel)
        out.depth[pixel] = hard.record.covered(pixel) ? hard.depth[pixel] : 0.0;
    out.silhouette = soft_silhouette(proj, hard.record, mesh, settings.silhouette_softness).coverage;
    out.raster = std::move(hard.record);
    return out;
}

Tensor render_silhouette(std::span<const Vec3> vertices, const TemplateMesh& mesh, const CameraIntrinsics& camera,
                         double softness)
{
    camera.validate();
    const Projection proj = project(vertices, camera);
    const HardRaster hard = rasterize_hard(proj, mesh, camera);
    return soft_silhouette(proj, hard.record, mesh, softness).coverage;
}

RenderVars render(ad::Tape& tape, ad::Var vertices, const TemplateMesh& mesh, const CameraIntrinsics& camera,
                  const RenderSettings& settings)
{
    camera.validate();
    const Points points = tensor_to_points(vertices.value());
    if (points.size() != mesh.vertex_count())
        throw std::invalid_argument("render: vertex count does not match the mesh");
    const Projection proj = project(points, camera, settings.near_plane);
    HardRaster hard = rasterize_hard(proj, mesh, camera);
    auto sil = std::make_shared<SoftSilhouette>(
        soft_silhouette(proj, hard.record, mesh, settings.silhouette_softness));
    ShadeResult shaded = shade(proj, hard.record, mesh);

    RenderVars out;
    out.output.rgb = shaded.rgb;
    out.output.uv_clamped = shaded.clamped;
    out.output.silhouette = sil->coverage;
    out.output.depth = Tensor({hard.record.height, hard.record.width, 1});
    for (std::size_t pixel = 0; pixel < hard.depth.size(); ++pixel)
        out.output.depth[pixel] = hard.record.covered(pixel) ? hard.depth[pixel] : 0.0;
    auto raster = std::make_shared<RasterRecord>(hard.record);
    out.output.raster = std::move(hard.record);

    const CameraIntrinsics cam = camera;
    const TemplateMesh* mesh_ptr = &mesh;

    out.rgb = tape.record("render_rgb", std::move(shaded.rgb), {vertices},
                          [vertices, raster, cam, mesh_ptr](ad::Tape& t, const Tensor& g) {
        Tensor* slot = t.gradient_slot(vertices);
        if (slot == nullptr)
            return;
        const TemplateMesh& m = *mesh_ptr;
        const Tensor& xv = t.value(vertices);
        for (std::size_t pixel = 0; pixel < raster->face.size(); ++pixel) {
            if (!raster->covered(pixel))
                continue;
            const double g0 = g[3 * pixel], g1 = g[3 * pixel + 1], g2 = g[3 * pixel + 2];
            if (g0 == 0.0 && g1 == 0.0 && g2 == 0.0)
                continue;
            const auto fi = static_cast<std::size_t>(raster->face[pixel]);
            const Face& f = m.faces[fi];
            D9 sx[3], sy[3], z[3];
            for (int k = 0; k < 3; ++k) {
                const std::size_t vi = static_cast<std::size_t>(f[static_cast<std::size_t>(k)]);
                const D9 X = D9::seed(xv[3 * vi], 3 * k), Y = D9::seed(xv[3 * vi + 1], 3 * k + 1);
                z[k] = D9::seed(xv[3 * vi + 2], 3 * k + 2);
                sx[k] = D9(cam.fx) * X / z[k] + D9(cam.cx);
                sy[k] = D9(cam.fy) * Y / z[k] + D9(cam.cy);
            }
            const double qx = static_cast<double>(pixel % raster->width) + 0.5;
            const double qy = static_cast<double>(pixel / raster->width) + 0.5;
            auto cross = [](const D9& ax, const D9& ay, const D9& bx, const D9& by) { return ax * by - ay * bx; };
            const D9 area = cross(sx[1] - sx[0], sy[1] - sy[0], sx[2] - sx[0], sy[2] - sy[0]);
            const D9 b0 = cross(sx[1] - D9(qx), sy[1] - D9(qy), sx[2] - D9(qx), sy[2] - D9(qy)) / area;
            const D9 b1 = cross(sx[2] - D9(qx), sy[2] - D9(qy), sx[0] - D9(qx), sy[0] - D9(qy)) / area;
            const D9 b2 = D9(1.0) - b0 - b1;
            const D9 w0 = b0 / z[0], w1 = b1 / z[1], w2 = b2 / z[2];
            const D9 wsum = w0 + w1 + w2;
            const Vec2 &t0 = m.uv(fi, 0), &t1 = m.uv(fi, 1), &t2 = m.uv(fi, 2);
            const D9 u = (w0 * D9(t0.x()) + w1 * D9(t1.x()) + w2 * D9(t2.x())) / wsum;
            const D9 v = (w0 * D9(t0.y()) + w1 * D9(t1.y()) + w2 * D9(t2.y())) / wsum;
            const TextureSample s = sample_texture(m.texture, u.v, v.v);
            const double gu = g0 * s.d_du[0] + g1 * s.d_du[1] + g2 * s.d_du[2];
            const double gv = g0 * s.d_dv[0] + g1 * s.d_dv[1] + g2 * s.d_dv[2];
            for (int k = 0; k < 3; ++k) {
                const std::size_t vi = static_cast<std::size_t>(f[static_cast<std::size_t>(k)]);
                for (int c = 0; c < 3; ++c) {
                    const auto j = static_cast<std::size_t>(3 * k + c);
                    (*slot)[3 * vi + static_cast<std::size_t>(c)] += gu * u.d[j] + gv * v.d[j];
                }
            }
        }
    });

    const double softness = settings.silhouette_softness;
    out.silhouette = tape.record("render_silhouette", sil->coverage, {vertices},
                                 [vertices, raster, sil, cam, softness](ad::Tape& t, const Tensor& g) {
        Tensor* slot = t.gradient_slot(vertices);
        if (slot == nullptr)
            return;
        const Tensor& xv = t.value(vertices);
        for (std::size_t pixel = 0; pixel < sil->nearest_edge.size(); ++pixel) {
            const int ei = sil->nearest_edge[pixel];
            if (ei < 0 || g[pixel] == 0.0)
                continue;
            const double c = sil->coverage[pixel];
            const double dc = c * (1.0 - c) / softness;
            if (dc == 0.0)
                continue;
            const auto& e = sil->edges[static_cast<std::size_t>(ei)];
            D6 px[2], py[2];
            for (int k = 0; k < 2; ++k) {
                const std::size_t vi = static_cast<std::size_t>(e[static_cast<std::size_t>(k)]);
                const D6 X = D6::seed(xv[3 * vi], 3 * k), Y = D6::seed(xv[3 * vi + 1], 3 * k + 1);
                const D6 Z = D6::seed(xv[3 * vi + 2], 3 * k + 2);
                px[k] = D6(cam.fx) * X / Z + D6(cam.cx);
                py[k] = D6(cam.fy) * Y / Z + D6(cam.cy);
            }
            const D6 qx(static_cast<double>(pixel % raster->width) + 0.5);
            const D6 qy(static_cast<double>(pixel / raster->width) + 0.5);
            const D6 abx = px[1] - px[0], aby = py[1] - py[0];
            const D6 len2 = abx * abx + aby * aby;
            D6 tpar = ((qx - px[0]) * abx + (qy - py[0]) * aby) / len2;
            if (tpar.v <= 0.0)
                tpar = D6(0.0);
            else if (tpar.v >= 1.0)
                tpar = D6(1.0);
            const D6 dx = qx - (px[0] + tpar * abx), dy = qy - (py[0] + tpar * aby);
            D6 signed_dist = detail::sqrt(dx * dx + dy * dy);
            if (signed_dist.v == 0.0) {
                // On the edge |d| has no derivative but the signed distance
                // to the edge line does; orient it towards the covered side.
                if (tpar.v <= 0.0 || tpar.v >= 1.0)
                    continue;
                const std::size_t oi = static_cast<std::size_t>(e[2]);
                const double ox = cam.fx * xv[3 * oi] / xv[3 * oi + 2] + cam.cx;
                const double oy = cam.fy * xv[3 * oi + 1] / xv[3 * oi + 2] + cam.cy;
                const double side = abx.v * (oy - py[0].v) - aby.v * (ox - px[0].v);
                const D6 perp = (abx * (qy - py[0]) - aby * (qx - px[0])) / detail::sqrt(len2);
                signed_dist = side > 0.0 ? perp : -perp;
            }
            else if (!raster->covered(pixel)) {
                signed_dist = -signed_dist;
            }
            const double scale = g[pixel] * dc;
            for (int k = 0; k < 2; ++k) {
                const std::size_t vi = static_cast<std::size_t>(e[static_cast<std::size_t>(k)]);
                for (int cc = 0; cc < 3; ++cc)
                    (*slot)[3 * vi + static_cast<std::size_t>(cc)] +=
                        scale * signed_dist.d[static_cast<std::size_t>(3 * k + cc)];
            }
        }
    });
    return out;
}

Tensor occlusion_band_mask(const RenderOutput& output, const TemplateMesh& mesh)
{
    const RasterRecord& r = output.raster;
    Tensor mask({r.height, r.width, 1}, 1.0);
    auto share_vertex = [&](int fa, int fb) {
        if (fa == fb)
            return true;
        for (int a : mesh.faces[static_cast<std::size_t>(fa)])
            for (int b : mesh.faces[static_cast<std::size_t>(fb)])
                if (a == b)
                    return true;
        return false;
    };
    for (std::size_t y = 0; y < r.height; ++y)
        for (std::size_t x = 0; x < r.width; ++x) {
            const std::size_t p = y * r.width + x;
            bool keep = true;
            for (long dy = -1; dy <= 1 && keep; ++dy)
                for (long dx = -1; dx <= 1 && keep; ++dx) {
                    const long ny = static_cast<long>(y) + dy, nx = static_cast<long>(x) + dx;
                    if (ny < 0 || nx < 0 || ny >= static_cast<long>(r.height) || nx >= static_cast<long>(r.width))
                        continue;
                    const std::size_t q = static_cast<std::size_t>(ny) * r.width + static_cast<std::size_t>(nx);
                    if (r.covered(p) != r.covered(q))
                        keep = false;
                    else if (r.covered(p) && !share_vertex(r.face[p], r.face[q]))
                        keep = false;
                }
            mask[p] = keep ? 1.0 : 0.0;
        }
    return mask;
}

void dump_render(const RenderOutput& output, const std::filesystem::path& prefix)
{
    write_png(prefix.string() + "_rgb.png", output.rgb);
    write_png(prefix.string() + "_sil.png", output.silhouette);
    double zmax = 0.0;
    for (double z : output.depth.values())
        zmax = std::max(zmax, z);
    Tensor depth = output.depth;
    if (zmax > 0.0)
        for (double& z : depth.storage())
            z /= zmax;
    write_png(prefix.string() + "_depth.png", depth);
}

} // namespace sft
