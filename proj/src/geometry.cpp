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
#include "sft/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>

#include "sft/image_io.hpp"

namespace sft {

// ---- camera -----------------------------------------------------------------

void CameraIntrinsics::validate() const
{
    if (!(fx > 0.0) || !(fy > 0.0))
        throw GeometryError("camera focal lengths must be positive");
    if (width <= 0 || height <= 0)
        throw GeometryError("camera image size must be positive");
    if (cx < 0.0 || cx >= width || cy < 0.0 || cy >= height)
        throw GeometryError("camera principal point lies outside the image");
}

Projection project(std::span<const Vec3> points, const CameraIntrinsics& camera, double near)
{
    Projection out;
    out.pixels.reserve(points.size());
    out.depths.reserve(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        const Vec3& p = points[i];
        if (!(p.z() > near))
            throw GeometryError("vertex behind camera: index " + std::to_string(i) + " (z = " +
                                std::to_string(p.z()) + ")");
        out.pixels.emplace_back(camera.fx * p.x() / p.z() + camera.cx, camera.fy * p.y() / p.z() + camera.cy);
        out.depths.push_back(p.z());
    }
    return out;
}

// ---- mesh construction ------------------------------------------------------

std::vector<std::vector<int>> one_ring_neighborhoods(std::size_t vertex_count, std::span<const Face> faces)
{
    std::vector<std::vector<int>> rings(vertex_count);
    for (const Face& f : faces)
        for (int k = 0; k < 3; ++k) {
            auto& ring = rings[static_cast<std::size_t>(f[static_cast<std::size_t>(k)])];
            ring.push_back(f[static_cast<std::size_t>((k + 1) % 3)]);
            ring.push_back(f[static_cast<std::size_t>((k + 2) % 3)]);
        }
    std::vector<std::vector<int>> out(vertex_count);
    for (std::size_t v = 0; v < vertex_count; ++v) {
        auto& ring = rings[v];
        std::sort(ring.begin(), ring.end());
        ring.erase(std::unique(ring.begin(), ring.end()), ring.end());
        out[v].push_back(static_cast<int>(v));
        out[v].insert(out[v].end(), ring.begin(), ring.end());
    }
    return out;
}

double median_edge_length(std::span<const Vec3> vertices, std::span<const Face> faces)
{
    std::vector<std::pair<int, int>> edges;
    for (const Face& f : faces)
        for (int k = 0; k < 3; ++k) {
            int a = f[static_cast<std::size_t>(k)], b = f[static_cast<std::size_t>((k + 1) % 3)];
            edges.emplace_back(std::min(a, b), std::max(a, b));
        }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    if (edges.empty())
        throw GeometryError("mesh has no edges");
    std::vector<double> lengths;
    lengths.reserve(edges.size());
    for (auto [a, b] : edges)
        lengths.push_back((vertices[static_cast<std::size_t>(a)] - vertices[static_cast<std::size_t>(b)]).norm());
    std::sort(lengths.begin(), lengths.end());
    const std::size_t n = lengths.size();
    return n % 2 == 1 ? lengths[n / 2] : 0.5 * (lengths[n / 2 - 1] + lengths[n / 2]);
}

Mat3 vertex_covariance(std::span<const Vec3> points)
{
    if (points.size() < 2)
        throw GeometryError("degenerate neighborhood: " + std::to_string(points.size()) + " point(s)");
    Vec3 mean = Vec3::Zero();
    for (const Vec3& p : points)
        mean += p;
    mean /= static_cast<double>(points.size());
    Mat3 c = Mat3::Zero();
    for (const Vec3& p : points) {
        const Vec3 d = p - mean;
        c += d * d.transpose();
    }
    return c / static_cast<double>(points.size());
}

std::vector<Vec3> template_eigen(const TemplateMesh& mesh)
{
    std::vector<Vec3> out;
    out.reserve(mesh.vertex_count());
    Points local;
    for (const auto& nb : mesh.neighborhoods) {
        local.clear();
        for (int j : nb)
            local.push_back(mesh.vertices[static_cast<std::size_t>(j)]);
        out.push_back(symmetric_eigenvalues(vertex_covariance(local)));
    }
    return out;
}

TemplateMesh build_template(Points vertices, std::vector<Face> faces, std::vector<Vec2> uv_coords,
                            std::vector<Face> face_uvs, Tensor texture)
{
    if (vertices.empty() || faces.empty())
        throw GeometryError("template has no geometry");
    if (uv_coords.empty() || face_uvs.size() != faces.size())
        throw GeometryError("template not textured: missing UV coordinates");
    if (texture.rank() != 3 || texture.dim(2) != 3 || texture.empty())
        throw GeometryError("template texture must be an RGB image");

    const auto nv = static_cast<int>(vertices.size());
    const auto nt = static_cast<int>(uv_coords.size());
    std::map<std::pair<int, int>, TemplateMesh::Edge> edge_map;
    for (std::size_t fi = 0; fi < faces.size(); ++fi) {
        const Face& f = faces[fi];
        for (int k = 0; k < 3; ++k) {
            if (f[static_cast<std::size_t>(k)] < 0 || f[static_cast<std::size_t>(k)] >= nv)
                throw GeometryError("face " + std::to_string(fi) + " references a missing vertex");
            const int t = face_uvs[fi][static_cast<std::size_t>(k)];
            if (t < 0 || t >= nt)
                throw GeometryError("template not textured: face " + std::to_string(fi) + " has no UV");
        }
        const Vec3& a = vertices[static_cast<std::size_t>(f[0])];
        const Vec3& b = vertices[static_cast<std::size_t>(f[1])];
        const Vec3& c = vertices[static_cast<std::size_t>(f[2])];
        const double scale = std::max({(b - a).squaredNorm(), (c - a).squaredNorm(), 1e-300});
        if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2] || (b - a).cross(c - a).norm() <= 1e-14 * scale)
            throw GeometryError("degenerate (zero-area) face " + std::to_string(fi));
        for (int k = 0; k < 3; ++k) {
            int u = f[static_cast<std::size_t>(k)], v = f[static_cast<std::size_t>((k + 1) % 3)];
            auto key = std::make_pair(std::min(u, v), std::max(u, v));
            auto& e = edge_map[key];
            e.a = key.first;
            e.b = key.second;
            if (e.faces[0] < 0)
                e.faces[0] = static_cast<int>(fi);
            else if (e.faces[1] < 0)
                e.faces[1] = static_cast<int>(fi);
            else
                throw GeometryError("non-manifold edge at face " + std::to_string(fi));
        }
    }

    TemplateMesh mesh;
    mesh.vertices = std::move(vertices);
    mesh.faces = std::move(faces);
    mesh.uv_coords = std::move(uv_coords);
    mesh.face_uvs = std::move(face_uvs);
    mesh.texture = std::move(texture);
    for (auto& [key, e] : edge_map)
        mesh.edges.push_back(e);

    mesh.neighborhoods = one_ring_neighborhoods(mesh.vertex_count(), mesh.faces);
    for (std::size_t v = 0; v < mesh.neighborhoods.size(); ++v)
        if (mesh.neighborhoods[v].size() < 3)
            throw GeometryError("vertex " + std::to_string(v) + " is not referenced by any face");
    mesh.lambda0 = template_eigen(mesh);
    mesh.delta_hat = median_edge_length(mesh.vertices, mesh.faces);
    if (!(mesh.delta_hat > 0.0))
        throw GeometryError("template median edge length is zero");
    return mesh;
}

// ---- OBJ --------------------------------------------------------------------

namespace {

int resolve_index(const std::string& token, std::size_t count, std::size_t line)
{
    long i = 0;
    try {
        i = std::stol(token);
    } catch (const std::exception&) {
        throw GeometryError("OBJ line " + std::to_string(line) + ": bad index '" + token + "'");
    }
    if (i < 0)
        i += static_cast<long>(count);
    else
        i -= 1;
    if (i < 0 || i >= static_cast<long>(count))
        throw GeometryError("OBJ line " + std::to_string(line) + ": index " + token + " out of range");
    return static_cast<int>(i);
}

} // namespace

ObjMesh read_obj(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw GeometryError("cannot open mesh file " + path.string());
    ObjMesh mesh;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ss(line);
        std::string tag;
        if (!(ss >> tag) || tag[0] == '#')
            continue;
        if (tag == "v") {
            Vec3 p;
            if (!(ss >> p.x() >> p.y() >> p.z()))
                throw GeometryError("OBJ line " + std::to_string(line_no) + ": malformed vertex");
            mesh.vertices.push_back(p);
        } else if (tag == "vt") {
            Vec2 t;
            if (!(ss >> t.x() >> t.y()))
                throw GeometryError("OBJ line " + std::to_string(line_no) + ": malformed texture coordinate");
            mesh.uv_coords.push_back(t);
        } else if (tag == "f") {
            std::vector<int> vs, ts;
            std::string corner;
            while (ss >> corner) {
                const auto slash = corner.find('/');
                vs.push_back(resolve_index(corner.substr(0, slash), mesh.vertices.size(), line_no));
                int t = -1;
                if (slash != std::string::npos) {
                    const auto next = corner.find('/', slash + 1);
                    const std::string vt = corner.substr(slash + 1, next == std::string::npos ? next : next - slash - 1);
                    if (!vt.empty())
                        t = resolve_index(vt, mesh.uv_coords.size(), line_no);
                }
                ts.push_back(t);
            }
            if (vs.size() < 3)
                throw GeometryError("OBJ line " + std::to_string(line_no) + ": face with fewer than 3 corners");
            for (std::size_t k = 1; k + 1 < vs.size(); ++k) {
                mesh.faces.push_back({vs[0], vs[k], vs[k + 1]});
                mesh.face_uvs.push_back({ts[0], ts[k], ts[k + 1]});
            }
        }
    }
    return mesh;
}

TemplateMesh load_template(const std::filesystem::path& mesh_file, const std::filesystem::path& texture_file)
{
    ObjMesh obj = read_obj(mesh_file);
    Tensor texture = read_png(texture_file);
    if (texture.dim(2) == 1) {
        Tensor rgb({texture.dim(0), texture.dim(1), 3});
        for (std::size_t i = 0; i < texture.size(); ++i)
            for (std::size_t c = 0; c < 3; ++c)
                rgb[3 * i + c] = texture[i];
        texture = std::move(rgb);
    }
    return build_template(std::move(obj.vertices), std::move(obj.faces), std::move(obj.uv_coords),
                          std::move(obj.face_uvs), std::move(texture));
}

void write_obj(const std::filesystem::path& path, std::span<const Vec3> vertices, const TemplateMesh& mesh)
{
    if (vertices.size() != mesh.vertex_count())
        throw GeometryError("write_obj: vertex count does not match the template");
    std::unique_ptr<std::FILE, int (*)(std::FILE*)> file(std::fopen(path.string().c_str(), "wb"), &std::fclose);
    if (!file)
        throw GeometryError("cannot write mesh file " + path.string());
    for (const Vec3& p : vertices)
        std::fprintf(file.get(), "v %.17g %.17g %.17g\n", p.x(), p.y(), p.z());
    for (const Vec2& t : mesh.uv_coords)
        std::fprintf(file.get(), "vt %.17g %.17g\n", t.x(), t.y());
    for (std::size_t f = 0; f < mesh.face_count(); ++f) {
        std::fprintf(file.get(), "f");
        for (std::size_t k = 0; k < 3; ++k)
            std::fprintf(file.get(), " %d/%d", mesh.faces[f][k] + 1, mesh.face_uvs[f][k] + 1);
        std::fprintf(file.get(), "\n");
    }
}

// ---- sampling and metrics ---------------------------------------------------

Points sample_points(std::span<const Vec3> vertices, std::span<const Face> faces, std::size_t count,
                     std::uint64_t seed)
{
    if (count == 0)
        throw GeometryError("sample_points: count must be at least 1");
    std::vector<double> cumulative;
    cumulative.reserve(faces.size());
    double total = 0.0;
    for (const Face& f : faces) {
        const Vec3& a = vertices[static_cast<std::size_t>(f[0])];
        const Vec3& b = vertices[static_cast<std::size_t>(f[1])];
        const Vec3& c = vertices[static_cast<std::size_t>(f[2])];
        total += 0.5 * (b - a).cross(c - a).norm();
        cumulative.push_back(total);
    }
    if (!(total > 0.0))
        throw GeometryError("sample_points: mesh has zero surface area");

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    Points out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const double pick = uniform(rng) * total;
        auto it = std::upper_bound(cumulative.begin(), cumulative.end(), pick);
        const std::size_t fi = std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()), faces.size() - 1);
        const double r1 = std::sqrt(uniform(rng));
        const double r2 = uniform(rng);
        const Face& f = faces[fi];
        out.push_back((1.0 - r1) * vertices[static_cast<std::size_t>(f[0])] +
                      r1 * (1.0 - r2) * vertices[static_cast<std::size_t>(f[1])] +
                      r1 * r2 * vertices[static_cast<std::size_t>(f[2])]);
    }
    return out;
}

namespace {

// Static 3D k-d tree over a point span for nearest-neighbour queries.
class KdTree
{
public:
    explicit KdTree(std::span<const Vec3> points) : points_(points), order_(points.size())
    {
        std::iota(order_.begin(), order_.end(), 0);
        build(0, order_.size(), 0);
    }

    double nearest_squared(const Vec3& q) const
    {
        double best = std::numeric_limits<double>::infinity();
        search(q, 0, order_.size(), 0, best);
        return best;
    }

private:
    void build(std::size_t lo, std::size_t hi, int depth)
    {
        if (hi - lo <= 8)
            return;
        const int axis = depth % 3;
        const std::size_t mid = lo + (hi - lo) / 2;
        std::nth_element(order_.begin() + static_cast<long>(lo), order_.begin() + static_cast<long>(mid),
                         order_.begin() + static_cast<long>(hi),
                         [&](std::size_t a, std::size_t b) { return points_[a][axis] < points_[b][axis]; });
        build(lo, mid, depth + 1);
        build(mid + 1, hi, depth + 1);
    }

    void search(const Vec3& q, std::size_t lo, std::size_t hi, int depth, double& best) const
    {
        if (hi - lo <= 8) {
            for (std::size_t i = lo; i < hi; ++i)
                best = std::min(best, (points_[order_[i]] - q).squaredNorm());
            return;
        }
        const int axis = depth % 3;
        const std::size_t mid = lo + (hi - lo) / 2;
        const Vec3& pivot = points_[order_[mid]];
        best = std::min(best, (pivot - q).squaredNorm());
        const double diff = q[axis] - pivot[axis];
        const bool left_first = diff < 0.0;
        if (left_first)
            search(q, lo, mid, depth + 1, best);
        else
            search(q, mid + 1, hi, depth + 1, best);
        if (diff * diff < best) {
            if (left_first)
                search(q, mid + 1, hi, depth + 1, best);
            else
                search(q, lo, mid, depth + 1, best);
        }
    }

    std::span<const Vec3> points_;
    std::vector<std::size_t> order_;
};

double mean_nearest(std::span<const Vec3> from, const KdTree& to)
{
    double s = 0.0;
    for (const Vec3& p : from)
        s += to.nearest_squared(p);
    return s / static_cast<double>(from.size());
}

} // namespace

double chamfer(std::span<const Vec3> a, std::span<const Vec3> b)
{
    if (a.empty() || b.empty())
        throw GeometryError("chamfer: point sets must be non-empty");
    const KdTree tree_a(a), tree_b(b);
    return 0.5 * mean_nearest(a, tree_b) + 0.5 * mean_nearest(b, tree_a);
}

double depth_rmse(const Tensor& predicted, const Tensor& ground_truth, const Tensor& mask)
{
    if (predicted.size() != ground_truth.size() || predicted.size() != mask.size())
        throw GeometryError("depth_rmse: map sizes differ");
    double sq = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        if (mask[i] < 0.5 || ground_truth[i] == 0.0)
            continue;
        const double d = predicted[i] - ground_truth[i];
        sq += d * d;
        ++n;
    }
    if (n == 0)
        throw GeometryError("depth_rmse: no valid ground-truth pixels under the mask");
    return std::sqrt(sq / static_cast<double>(n));
}

void validate_frame(const FrameObservation& frame, const CameraIntrinsics& camera)
{
    const auto h = static_cast<std::size_t>(camera.height), w = static_cast<std::size_t>(camera.width);
    if (frame.rgb.shape() != Shape{h, w, 3})
        throw GeometryError("frame image " + shape_string(frame.rgb.shape()) + " does not match camera " +
                            std::to_string(w) + "x" + std::to_string(h));
    if (frame.mask.shape() != Shape{h, w, 1})
        throw GeometryError("frame mask " + shape_string(frame.mask.shape()) + " does not match camera");
    for (double m : frame.mask.values())
        if (m < 0.0 || m > 1.0)
            throw GeometryError("mask values must lie in [0,1]");
    if (frame.depth && frame.depth->shape() != Shape{h, w, 1})
        throw GeometryError("depth map " + shape_string(frame.depth->shape()) + " does not match camera");
}

Tensor points_to_tensor(std::span<const Vec3> points)
{
    Tensor t({points.size(), 3});
    for (std::size_t i = 0; i < points.size(); ++i)
        for (int k = 0; k < 3; ++k)
            t[3 * i + static_cast<std::size_t>(k)] = points[i][k];
    return t;
}

Points tensor_to_points(const Tensor& t)
{
    if (t.rank() != 2 || t.dim(1) != 3)
        throw GeometryError("expected a {V,3} array, got " + shape_string(t.shape()));
    Points out(t.dim(0));
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = Vec3(t[3 * i], t[3 * i + 1], t[3 * i + 2]);
    return out;
}

} // namespace sft
