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

#include <array>
#include <cmath>

namespace sft::detail {

/// Forward-mode dual number carrying N partial derivatives. Used for small,
/// per-pixel Jacobians inside the renderer adjoints.
template <int N>
struct Dual
{
    double v = 0.0;
    std::array<double, N> d{};

    Dual() = default;
    Dual(double value) : v(value) {}

    static Dual seed(double value, int index)
    {
        Dual x(value);
        x.d[static_cast<std::size_t>(index)] = 1.0;
        return x;
    }

    friend Dual operator+(const Dual& a, const Dual& b)
    {
        Dual r(a.v + b.v);
        for (int i = 0; i < N; ++i)
            r.d[i] = a.d[i] + b.d[i];
        return r;
    }
    friend Dual operator-(const Dual& a, const Dual& b)
    {
        Dual r(a.v - b.v);
        for (int i = 0; i < N; ++i)
            r.d[i] = a.d[i] - b.d[i];
        return r;
    }
    friend Dual operator*(const Dual& a, const Dual& b)
    {
        Dual r(a.v * b.v);
        for (int i = 0; i < N; ++i)
            r.d[i] = a.d[i] * b.v + a.v * b.d[i];
        return r;
    }
    friend Dual operator/(const Dual& a, const Dual& b)
    {
        Dual r(a.v / b.v);
        const double inv = 1.0 / (b.v * b.v);
        for (int i = 0; i < N; ++i)
            r.d[i] = (a.d[i] * b.v - a.v * b.d[i]) * inv;
        return r;
    }
    friend Dual operator-(const Dual& a)
    {
        Dual r(-a.v);
        for (int i = 0; i < N; ++i)
            r.d[i] = -a.d[i];
        return r;
    }
};

template <int N>
Dual<N> sqrt(const Dual<N>& a)
{
    Dual<N> r(std::sqrt(a.v));
    const double k = r.v > 0.0 ? 0.5 / r.v : 0.0;
    for (int i = 0; i < N; ++i)
        r.d[i] = k * a.d[i];
    return r;
}

} // namespace sft::detail
