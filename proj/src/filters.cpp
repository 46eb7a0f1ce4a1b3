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
#include "sft/filters.hpp"

#include <cmath>
#include <stdexcept>

namespace sft {

std::vector<double> gaussian_kernel(double sigma)
{
    if (!(sigma > 0.0))
        throw std::invalid_argument("gaussian blur sigma must be positive");
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double total = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double w = std::exp(-0.5 * (i * i) / (sigma * sigma));
        k[static_cast<std::size_t>(i + radius)] = w;
        total += w;
    }
    for (double& w : k)
        w /= total;
    return k;
}

namespace {

Tensor row_kernel(const std::vector<double>& k) { return Tensor({1, k.size()}, k); }
Tensor column_kernel(const std::vector<double>& k) { return Tensor({k.size(), 1}, k); }

void check_sobel_input(const Shape& shape, int order)
{
    if (order != 1 && order != 2)
        throw std::invalid_argument("sobel order must be 1 or 2");
    if (shape.size() != 3 || shape[0] < 3 || shape[1] < 3)
        throw std::invalid_argument("sobel needs an {H,W,C} image with H, W >= 3, got " + shape_string(shape));
}

} // namespace

Tensor gaussian_blur(const Tensor& image, double sigma)
{
    const auto k = gaussian_kernel(sigma);
    return ad::conv2d_reflect(ad::conv2d_reflect(image, row_kernel(k)), column_kernel(k));
}

ad::Var gaussian_blur(ad::Var image, double sigma)
{
    const auto k = gaussian_kernel(sigma);
    return ad::conv2d(ad::conv2d(image, row_kernel(k)), column_kernel(k));
}

Tensor sobel_kernel_x(bool normalized)
{
    const double s = normalized ? 1.0 / 8.0 : 1.0;
    return Tensor({3, 3}, {-s, 0, s, -2 * s, 0, 2 * s, -s, 0, s});
}

Tensor sobel_kernel_y(bool normalized)
{
    const double s = normalized ? 1.0 / 8.0 : 1.0;
    return Tensor({3, 3}, {-s, -2 * s, -s, 0, 0, 0, s, 2 * s, s});
}

std::vector<Tensor> sobel(const Tensor& image, int order, bool normalized)
{
    check_sobel_input(image.shape(), order);
    const Tensor kx = sobel_kernel_x(normalized), ky = sobel_kernel_y(normalized);
    Tensor gx = ad::conv2d_reflect(image, kx);
    Tensor gy = ad::conv2d_reflect(image, ky);
    if (order == 1)
        return {std::move(gx), std::move(gy)};
    return {ad::conv2d_reflect(gx, kx), ad::conv2d_reflect(gx, ky), ad::conv2d_reflect(gy, ky)};
}

std::vector<ad::Var> sobel(ad::Var image, int order, bool normalized)
{
    check_sobel_input(image.shape(), order);
    const Tensor kx = sobel_kernel_x(normalized), ky = sobel_kernel_y(normalized);
    ad::Var gx = ad::conv2d(image, kx);
    ad::Var gy = ad::conv2d(image, ky);
    if (order == 1)
        return {gx, gy};
    return {ad::conv2d(gx, kx), ad::conv2d(gx, ky), ad::conv2d(gy, ky)};
}

} // namespace sft
