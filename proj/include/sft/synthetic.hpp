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

#include "sft/geometry.hpp"
#include "sft/renderer.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace sft {

enum class DeformationFamily
{
    SineBend,   // arch along u
    CornerFold, // quadratic lift of one corner
    Compound,   // sine bend along u plus a half-amplitude ripple along v
    Translate,  // rigid translation, no bending
};

enum class TextureKind
{
    Checkerboard,
    Noise,
    ImageFile,
};

std::string to_string(DeformationFamily family);
DeformationFamily parse_family(const std::string& name);
TextureKind parse_texture_kind(const std::string& name);

struct ScenarioConfig
{
    int grid_resolution = 16; // m x m vertices
    double sheet_size = 1.0;
    DeformationFamily family = DeformationFamily::SineBend;
    double amplitude = 0.4;
    double frequency = 0.5; // cycles over the sheet
    Vec3 translation = Vec3(0.1, 0.05, 0.0); // final offset for Translate
    int frame_count = 10;
    double camera_distance = 2.0;
    int image_size = 128;
    double focal_scale = 1.25; // fx = fy = focal_scale * image_size
    double tilt_degrees = 25.0; // sheet rotation about the image x axis
    TextureKind texture = TextureKind::Checkerboard;
    int checker_cells = 8;
    int texture_size = 64;
    std::filesystem::path texture_file;
    double brightness_ramp = 0.0; // frame t is scaled by 1 + ramp * t / T
    std::size_t gt_point_count = 4000;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SyntheticSequence
{
    ScenarioConfig config;
    TemplateMesh mesh;
    CameraIntrinsics camera;
    std::vector<FrameObservation> frames; // t = 1..T
    std::vector<Points> gt_vertices;      // one per frame
    std::uint64_t gt_point_seed = 0;
};

/// Seed used to sample the point cloud of frame index `frame` (zero-based).
std::uint64_t frame_point_seed(std::uint64_t base, std::size_t frame);

/// Sheet vertices at deformation phase s in [0, 1] (s = 0 is the template).
Points sheet_vertices(const ScenarioConfig& config, double phase);

Tensor make_texture(const ScenarioConfig& config);

/// Frames t = 1..T with phase t/T, rendered by the reconstruction renderer and
/// quantised to 8 bits so that a written dataset reloads exactly.
SyntheticSequence generate_sequence(const ScenarioConfig& config);

} // namespace sft
