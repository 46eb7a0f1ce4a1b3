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

#include "sft/sym3.hpp"
#include "sft/tensor.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sft {

using Points = std::vector<Vec3>;
using Face = std::array<int, 3>;

class GeometryError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/**
 * Pinhole intrinsics. Camera frame: +z forward, +x right, +y down; pixel
 * (0,0) is the top-left corner of the image, so pixel (i,j) is centred at
 * (i + 0.5, j + 0.5).
 */
struct CameraIntrinsics
{
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 1;
    int height = 1;

    void validate() const;
};

struct Projection
{
    std::vector<Vec2> pixels;
    std::vector<double> depths;
};

inline constexpr double kNearPlane = 1e-6;

/// (u, v) = (fx x/z + cx, fy y/z + cy). Throws for any z <= near.
Projection project(std::span<const Vec3> points, const CameraIntrinsics& camera, double near = kNearPlane);

/**
 * Textured template triangle mesh with the per-vertex quantities the
 * reconstruction needs precomputed.
 */
struct TemplateMesh
{
    Points vertices;
    std::vector<Face> faces;
    std::vector<Vec2> uv_coords;
    std::vector<Face> face_uvs; // indices into uv_coords per face corner
    Tensor texture;             // {H, W, 3} in [0,1]

    // 1-ring of every vertex, the vertex itself first.
    std::vector<std::vector<int>> neighborhoods;
    // Descending covariance eigenvalues of each template neighborhood.
    std::vector<Vec3> lambda0;
    // Median edge length, frozen at construction.
    double delta_hat = 0.0;

    struct Edge
    {
        int a = 0, b = 0;
        std::array<int, 2> faces{-1, -1};
    };
    std::vector<Edge> edges;

    std::size_t vertex_count() const noexcept { return vertices.size(); }
    std::size_t face_count() const noexcept { return faces.size(); }
    const Vec2& uv(std::size_t face, int corner) const
    {
        return uv_coords[static_cast<std::size_t>(face_uvs[face][static_cast<std::size_t>(corner)])];
    }
};

/// Validates the mesh and precomputes neighborhoods, lambda0, delta_hat and
/// edge adjacency.
TemplateMesh build_template(Points vertices, std::vector<Face> faces, std::vector<Vec2> uv_coords,
                            std::vector<Face> face_uvs, Tensor texture);

struct ObjMesh
{
    Points vertices;
    std::vector<Vec2> uv_coords;
    std::vector<Face> faces;
    std::vector<Face> face_uvs; // empty entries (-1) when a face has no vt
};

/// Reads `v`, `vt` and `f` records; polygons are fan-triangulated.
ObjMesh read_obj(const std::filesystem::path& path);
TemplateMesh load_template(const std::filesystem::path& mesh_file, const std::filesystem::path& texture_file);
/// Writes `vertices` (round-trip precision) with the template's UV and face blocks.
void write_obj(const std::filesystem::path& path, std::span<const Vec3> vertices, const TemplateMesh& mesh);

std::vector<std::vector<int>> one_ring_neighborhoods(std::size_t vertex_count, std::span<const Face> faces);
double median_edge_length(std::span<const Vec3> vertices, std::span<const Face> faces);

/// (1/|N|) Σ (x_n - x̄)(x_n - x̄)ᵀ about the neighborhood mean.
Mat3 vertex_covariance(std::span<const Vec3> points);
std::vector<Vec3> template_eigen(const TemplateMesh& mesh);

/// Area-uniform surface samples, deterministic per seed.
Points sample_points(std::span<const Vec3> vertices, std::span<const Face> faces, std::size_t count,
                     std::uint64_t seed);

/// ½ mean_a min_b |a-b|² + ½ mean_b min_a |a-b|².
double chamfer(std::span<const Vec3> a, std::span<const Vec3> b);

/// RMSE over pixels where mask >= 0.5 and gt_depth != 0. Maps are {H,W,1}.
double depth_rmse(const Tensor& predicted, const Tensor& ground_truth, const Tensor& mask);

/// One video frame. rgb {H,W,3}, mask {H,W,1}; depth in mm.
struct FrameObservation
{
    Tensor rgb;
    Tensor mask;
    std::optional<Tensor> depth;
    std::optional<Points> gt_points;
};

void validate_frame(const FrameObservation& frame, const CameraIntrinsics& camera);

Tensor points_to_tensor(std::span<const Vec3> points);
Points tensor_to_points(const Tensor& t);

} // namespace sft
