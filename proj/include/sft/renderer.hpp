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

#include <array>
#include <filesystem>
#include <memory>
#include <vector>

namespace sft {

/// Soft coverage is evaluated within this many softness units of the outline.
inline constexpr double kSilhouetteReach = 25.0;

struct RenderSettings
{
    double silhouette_softness = 1.0; // sigmoid scale, pixels
    double blur_sigma = 1.0;          // silhouette blur, pixels
    double near_plane = kNearPlane;
};

/// Per-pixel visibility: depth-nearest covering face and its screen-space
/// barycentrics. face == -1 marks background.
struct RasterRecord
{
    std::size_t width = 0, height = 0;
    std::vector<int> face;
    std::vector<std::array<double, 3>> barycentrics;

    bool covered(std::size_t pixel) const { return face[pixel] >= 0; }
};

struct RenderOutput
{
    Tensor rgb;        // {H,W,3}, zero on background
    Tensor silhouette; // {H,W,1} soft coverage in [0,1]
    Tensor depth;      // {H,W,1} scene units, zero on background
    RasterRecord raster;
    std::size_t uv_clamped = 0;
};

/// Hard z-buffered RGB/depth plus the soft silhouette. Double-sided.
RenderOutput rasterize(std::span<const Vec3> vertices, const TemplateMesh& mesh, const CameraIntrinsics& camera,
                       const RenderSettings& settings = {});

/**
 * Soft coverage sigmoid(D(p) / softness), where D is the screen distance from
 * the pixel centre to the projected silhouette outline (boundary edges plus
 * contour edges between oppositely oriented faces), positive on hard-covered
 * pixels. Exactly 0.5 on the outline.
 */
Tensor render_silhouette(std::span<const Vec3> vertices, const TemplateMesh& mesh, const CameraIntrinsics& camera,
                         double softness);

struct RenderVars
{
    ad::Var rgb;
    ad::Var silhouette;
    RenderOutput output;
};

/**
 * Differentiable render of `vertices` ({V,3} camera frame). RGB gradients flow
 * through perspective-correct barycentrics and UV interpolation with the
 * visibility of the forward pass held fixed; silhouette gradients flow through
 * the outline distance. `mesh` must outlive the tape.
 */
RenderVars render(ad::Tape& tape, ad::Var vertices, const TemplateMesh& mesh, const CameraIntrinsics& camera,
                  const RenderSettings& settings = {});

/// Pixels whose 3x3 neighbourhood straddles a coverage change or a jump
/// between faces that share no vertex get 0, all others 1. {H,W,1}.
Tensor occlusion_band_mask(const RenderOutput& output, const TemplateMesh& mesh);

/// Writes <prefix>_rgb.png, <prefix>_sil.png, <prefix>_depth.png (depth
/// normalised to its maximum).
void dump_render(const RenderOutput& output, const std::filesystem::path& prefix);

} // namespace sft
