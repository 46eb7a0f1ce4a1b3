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
#include "sft/losses.hpp"

#include "sft/filters.hpp"

#include <cmath>
#include <stdexcept>

namespace sft {

void LossConfig::validate() const
{
    if (!(alpha > 0.0) || !(sigma > 0.0))
        throw std::invalid_argument("loss alpha and sigma must be positive");
    if (p != 1 && p != 2)
        throw std::invalid_argument("loss norm order p must be 1 or 2");
    if (inext_weight < 0.0 || temporal_weight < 0.0)
        throw std::invalid_argument("loss weights must be non-negative");
}

Tensor adaptive_weight(const Tensor& residual, double alpha, double sigma, LossCounters* counters)
{
    Tensor w(residual.shape());
    for (std::size_t i = 0; i < residual.size(); ++i) {
        double e = residual[i] / sigma;
        if (e > kMaxWeightExponent) {
            e = kMaxWeightExponent;
            if (counters)
                ++counters->weight_clamps;
        }
        w[i] = alpha * std::exp(e);
    }
    return w;
}

ad::Var weighted_lp(ad::Var pred, const Tensor& ref, const Tensor& weights, int p)
{
    ad::Tape& tape = *pred.tape();
    if (!pred.value().same_shape(ref) || !ref.same_shape(weights))
        throw std::invalid_argument("data loss: shape mismatch " + shape_string(pred.shape()) + " vs " +
                                    shape_string(ref.shape()));
    ad::Var diff = ad::sub(pred, tape.constant(ref, "reference"));
    ad::Var elem = p == 1 ? ad::abs(diff) : ad::square(diff);
    return ad::mean(ad::mul(elem, tape.constant(weights, "weights")));
}

ad::Var data_loss(ad::Var pred, const Tensor& ref, const LossConfig& config, LossCounters* counters)
{
    if (!pred.value().same_shape(ref))
        throw std::invalid_argument("data loss: shape mismatch " + shape_string(pred.shape()) + " vs " +
                                    shape_string(ref.shape()));
    if (!config.use_adaptive)
        return weighted_lp(pred, ref, Tensor(ref.shape(), 1.0), config.p);
    Tensor residual(ref.shape());
    const Tensor& pv = pred.value();
    for (std::size_t i = 0; i < ref.size(); ++i)
        residual[i] = std::abs(pv[i] - ref[i]);
    return weighted_lp(pred, ref, adaptive_weight(residual, config.alpha, config.sigma, counters), config.p);
}

LossTargets prepare_targets(const FrameObservation& frame, const LossConfig& config, double blur_sigma)
{
    LossTargets t;
    t.masked_rgb = frame.rgb;
    const std::size_t pixels = frame.mask.size();
    if (frame.rgb.size() != 3 * pixels)
        throw std::invalid_argument("frame image and mask sizes differ");
    for (std::size_t i = 0; i < pixels; ++i)
        for (std::size_t c = 0; c < 3; ++c)
            t.masked_rgb[3 * i + c] *= frame.mask[i];
    t.blurred_mask = gaussian_blur(frame.mask, blur_sigma);
    if (config.use_image_gradient) {
        for (int order = 1; order <= 2; ++order)
            for (Tensor& g : sobel(t.masked_rgb, order, config.sobel_normalized))
                t.gradients.push_back(std::move(g));
    }
    return t;
}

ad::Var rgb_loss(ad::Var rendered_rgb, const LossTargets& targets, const LossConfig& config, LossCounters* counters)
{
    return data_loss(rendered_rgb, targets.masked_rgb, config, counters);
}

ad::Var silhouette_loss(ad::Var rendered_silhouette, const LossTargets& targets, const LossConfig& config,
                        double blur_sigma, LossCounters* counters)
{
    return data_loss(gaussian_blur(rendered_silhouette, blur_sigma), targets.blurred_mask, config, counters);
}

ad::Var image_gradient_loss(ad::Var rendered_rgb, const LossTargets& targets, const LossConfig& config,
                            LossCounters* counters)
{
    if (targets.gradients.size() != 5)
        throw std::invalid_argument("image gradient targets were not prepared");
    std::vector<ad::Var> rendered;
    for (int order = 1; order <= 2; ++order)
        for (ad::Var g : sobel(rendered_rgb, order, config.sobel_normalized))
            rendered.push_back(g);
    ad::Var total = data_loss(rendered[0], targets.gradients[0], config, counters);
    for (std::size_t k = 1; k < rendered.size(); ++k)
        total = ad::add(total, data_loss(rendered[k], targets.gradients[k], config, counters));
    return total;
}

double inextensibility_weight(const TemplateMesh& mesh, const LossConfig& config)
{
    if (config.inext_weight_mode == InextWeightMode::Fixed)
        return config.inext_weight;
    return std::pow(mesh.delta_hat, -6.0);
}

ad::Var inextensibility_loss(ad::Var vertices, const TemplateMesh& mesh, const LossConfig& config,
                             LossCounters* counters)
{
    ad::Tape& tape = *vertices.tape();
    // Neighbourhoods that cannot define a covariance are dropped.
    std::vector<std::vector<int>> neighborhoods;
    std::vector<std::size_t> kept;
    for (std::size_t v = 0; v < mesh.neighborhoods.size(); ++v) {
        if (mesh.neighborhoods[v].size() < 2) {
            if (counters)
                ++counters->skipped_vertices;
            continue;
        }
        neighborhoods.push_back(mesh.neighborhoods[v]);
        kept.push_back(v);
    }
    const std::size_t n = kept.size();
    ad::Var cov = ad::neighborhood_covariance(vertices, neighborhoods);

    ad::Var per_vertex;
    if (config.inext_variant == InextVariant::EigenvalueDiagonal) {
        Tensor lambda0({n, 3});
        for (std::size_t i = 0; i < n; ++i)
            for (int k = 0; k < 3; ++k)
                lambda0[3 * i + static_cast<std::size_t>(k)] = mesh.lambda0[kept[i]][k];
        ad::Var gap = ad::abs(ad::sub(ad::sym_eig3(cov), tape.constant(lambda0, "lambda0")));
        per_vertex = ad::mul(ad::mul(ad::column(gap, 0), ad::column(gap, 1)), ad::column(gap, 2));
    } else {
        Tensor diag({n, 9});
        for (std::size_t i = 0; i < n; ++i)
            for (int k = 0; k < 3; ++k)
                diag[9 * i + static_cast<std::size_t>(4 * k)] = mesh.lambda0[kept[i]][k];
        per_vertex = ad::abs(ad::det3(ad::sub(cov, tape.constant(diag, "lambda0"))));
    }
    return ad::scale(ad::sum(per_vertex), inextensibility_weight(mesh, config));
}

ad::Var temporal_loss(ad::Var first, ad::Var middle, ad::Var last)
{
    if (!first.value().same_shape(middle.value()) || !first.value().same_shape(last.value()))
        throw std::invalid_argument("temporal loss: shapes differ");
    ad::Var midpoint = ad::scale(ad::add(first, last), 0.5);
    return ad::mean(ad::row_norm(ad::sub(middle, midpoint)));
}

FrameLoss total_loss(const RenderVars& render, const LossTargets& targets, ad::Var vertices, const TemplateMesh& mesh,
                     const LossConfig& config, double blur_sigma, LossCounters* counters)
{
    FrameLoss out;
    ad::Var total = rgb_loss(render.rgb, targets, config, counters);
    out.breakdown.rgb = total.value()[0];
    if (config.use_silhouette) {
        ad::Var sil = silhouette_loss(render.silhouette, targets, config, blur_sigma, counters);
        out.breakdown.silhouette = sil.value()[0];
        total = ad::add(total, sil);
    }
    if (config.use_image_gradient) {
        ad::Var grad = image_gradient_loss(render.rgb, targets, config, counters);
        out.breakdown.image_gradient = grad.value()[0];
        total = ad::add(total, grad);
    }
    ad::Var inext = inextensibility_loss(vertices, mesh, config, counters);
    out.breakdown.inextensibility = inext.value()[0];
    total = ad::add(total, inext);
    out.breakdown.total = total.value()[0];
    out.total = total;
    return out;
}

std::string to_string(InextVariant variant)
{
    return variant == InextVariant::EigenvalueDiagonal ? "eig" : "literal";
}

InextVariant parse_inext_variant(const std::string& name)
{
    if (name == "eig")
        return InextVariant::EigenvalueDiagonal;
    if (name == "literal")
        return InextVariant::LiteralDeterminant;
    throw std::invalid_argument("unknown inextensibility variant '" + name + "' (expected eig or literal)");
}

} // namespace sft
