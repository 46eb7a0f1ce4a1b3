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
#include "sft/renderer.hpp"

#include <string>
#include <vector>

namespace sft {

enum class InextVariant
{
    EigenvalueDiagonal, // Π_k |λ̂_k - λ0_k|, invariant to rigid motion
    LiteralDeterminant, // |det(Ĉ - diag(λ0))| in world coordinates
};

enum class InextWeightMode
{
    Adaptive, // δ̂^-6
    Fixed,
};

struct LossConfig
{
    double alpha = 10.0;
    double sigma = 1.0;
    int p = 1;
    bool use_adaptive = true;
    bool use_image_gradient = true;
    bool use_silhouette = true;
    InextWeightMode inext_weight_mode = InextWeightMode::Adaptive;
    double inext_weight = 1.0; // used in Fixed mode
    InextVariant inext_variant = InextVariant::EigenvalueDiagonal;
    double temporal_weight = 1.0;
    // Sobel kernels divided by 8 inside the image-gradient loss.
    bool sobel_normalized = true;

    void validate() const;
};

struct LossBreakdown
{
    double rgb = 0.0;
    double silhouette = 0.0;
    double image_gradient = 0.0;
    double inextensibility = 0.0; // already multiplied by w_inext
    double temporal = 0.0;        // already multiplied by temporal_weight
    double total = 0.0;
};

/// Warning counters accumulated while building losses.
struct LossCounters
{
    std::size_t weight_clamps = 0;
    std::size_t skipped_vertices = 0;
};

/// Overflow guard for the adaptive weight exponent.
inline constexpr double kMaxWeightExponent = 50.0;

/// α exp(d / σ) elementwise, exponent clamped at 50.
Tensor adaptive_weight(const Tensor& residual, double alpha, double sigma, LossCounters* counters = nullptr);

/// mean(weights ⊙ |pred - ref|^p) with the weights treated as constants.
ad::Var weighted_lp(ad::Var pred, const Tensor& ref, const Tensor& weights, int p);

/// mean(w(|ŷ-y|) ⊙ |ŷ-y|^p), w detached; plain mean of |ŷ-y|^p when the
/// adaptive weighting is off.
ad::Var data_loss(ad::Var pred, const Tensor& ref, const LossConfig& config, LossCounters* counters = nullptr);

/// Reference-side images derived once per frame.
struct LossTargets
{
    Tensor masked_rgb;   // I ⊙ S
    Tensor blurred_mask; // blur(S)
    std::vector<Tensor> gradients; // Gx, Gy, Gxx, Gxy, Gyy of I ⊙ S
};

LossTargets prepare_targets(const FrameObservation& frame, const LossConfig& config, double blur_sigma);

ad::Var rgb_loss(ad::Var rendered_rgb, const LossTargets& targets, const LossConfig& config,
                 LossCounters* counters = nullptr);
ad::Var silhouette_loss(ad::Var rendered_silhouette, const LossTargets& targets, const LossConfig& config,
                        double blur_sigma, LossCounters* counters = nullptr);
ad::Var image_gradient_loss(ad::Var rendered_rgb, const LossTargets& targets, const LossConfig& config,
                            LossCounters* counters = nullptr);

double inextensibility_weight(const TemplateMesh& mesh, const LossConfig& config);
/// w_inext Σ_v term_v for the configured variant.
ad::Var inextensibility_loss(ad::Var vertices, const TemplateMesh& mesh, const LossConfig& config,
                             LossCounters* counters = nullptr);

/// Mean over vertices of |x_{t+1} - (x_t + x_{t+2}) / 2|_2.
ad::Var temporal_loss(ad::Var first, ad::Var middle, ad::Var last);

struct FrameLoss
{
    ad::Var total;
    LossBreakdown breakdown;
};

/// RGB + silhouette + image-gradient + inextensibility for one frame; disabled
/// terms contribute 0. Window strategies add the temporal term on top.
FrameLoss total_loss(const RenderVars& render, const LossTargets& targets, ad::Var vertices, const TemplateMesh& mesh,
                     const LossConfig& config, double blur_sigma, LossCounters* counters = nullptr);

std::string to_string(InextVariant variant);
InextVariant parse_inext_variant(const std::string& name);

} // namespace sft
