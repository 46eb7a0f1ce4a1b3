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
#include "sft/tensor.hpp"

#include <vector>

namespace sft {

/// Normalized 1D Gaussian weights with radius ceil(3 sigma).
std::vector<double> gaussian_kernel(double sigma);

/// Separable Gaussian blur of an {H,W,C} image, reflect padding.
Tensor gaussian_blur(const Tensor& image, double sigma);
ad::Var gaussian_blur(ad::Var image, double sigma);

/// 3x3 Sobel kernels. Unnormalized: [[-1,0,1],[-2,0,2],[-1,0,1]] for x;
/// normalized divides by 8 so a unit ramp has unit response.
Tensor sobel_kernel_x(bool normalized);
Tensor sobel_kernel_y(bool normalized);

/// order 1 -> {Gx, Gy}; order 2 -> {Gxx, Gxy, Gyy} composed from first-order
/// passes. Each entry is {H,W,C}. Requires H, W >= 3.
std::vector<Tensor> sobel(const Tensor& image, int order, bool normalized = false);
std::vector<ad::Var> sobel(ad::Var image, int order, bool normalized = false);

} // namespace sft
