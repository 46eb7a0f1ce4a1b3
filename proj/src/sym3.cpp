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
#include "sft/sym3.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace sft {

namespace {

Vec3 sorted_descending(Vec3 v)
{
    std::sort(v.data(), v.data() + 3, std::greater<>());
    return v;
}

// Unit vector spanning the null space of (a - lambda I), assuming lambda is a
// simple eigenvalue.
Vec3 null_vector(const Mat3& a, double lambda)
{
    Mat3 m = a - lambda * Mat3::Identity();
    const Vec3 r0 = m.row(0), r1 = m.row(1), r2 = m.row(2);
    Vec3 c[3] = {r0.cross(r1), r0.cross(r2), r1.cross(r2)};
    int best = 0;
    for (int i = 1; i < 3; ++i)
        if (c[i].squaredNorm() > c[best].squaredNorm())
            best = i;
    const double n = c[best].norm();
    if (n == 0.0)
        return Vec3::UnitX();
    return c[best] / n;
}

// Orthonormal pair completing `v` to a basis.
void complement_basis(const Vec3& v, Vec3& b1, Vec3& b2)
{
    const Vec3 helper = std::abs(v.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
    b1 = v.cross(helper).normalized();
    b2 = v.cross(b1);
}

} // namespace

Vec3 symmetric_eigenvalues(const Mat3& input)
{
    const Mat3 sym = 0.5 * (input + input.transpose());
    const double scale = sym.cwiseAbs().maxCoeff();
    if (scale == 0.0)
        return Vec3::Zero();
    const Mat3 a = sym / scale;

    const double p1 = a(0, 1) * a(0, 1) + a(0, 2) * a(0, 2) + a(1, 2) * a(1, 2);
    if (p1 == 0.0)
        return sorted_descending(a.diagonal()) * scale;

    const double q = a.trace() / 3.0;
    const double d0 = a(0, 0) - q, d1 = a(1, 1) - q, d2 = a(2, 2) - q;
    const double p2 = d0 * d0 + d1 * d1 + d2 * d2 + 2.0 * p1;
    const double p = std::sqrt(p2 / 6.0);
    const Mat3 b = (a - q * Mat3::Identity()) / p;
    const double r = std::clamp(b.determinant() / 2.0, -1.0, 1.0);
    const double phi = std::acos(r) / 3.0;

    const double e1 = q + 2.0 * p * std::cos(phi);
    const double e3 = q + 2.0 * p * std::cos(phi + 2.0 * std::numbers::pi / 3.0);
    const double e2 = 3.0 * q - e1 - e3;
    return sorted_descending(Vec3(e1, e2, e3)) * scale;
}

SymmetricEigen symmetric_eigen(const Mat3& input)
{
    SymmetricEigen out;
    out.values = symmetric_eigenvalues(input);
    const double scale = input.cwiseAbs().maxCoeff();
    if (scale == 0.0) {
        out.vectors.setIdentity();
        out.group[1] = out.group[2] = 0;
        return out;
    }
    // Null vectors are computed on the unit-scaled matrix.
    const Mat3 a = 0.5 * (input + input.transpose()) / scale;
    const Vec3 l = out.values / scale;

    const double spread = std::max(std::abs(l[0]), std::abs(l[2]));
    const double gap = kEigenDegeneracyGap * std::max(spread, 1e-300);
    const bool same01 = (l[0] - l[1]) < gap;
    const bool same12 = (l[1] - l[2]) < gap;

    if (same01 && same12) {
        out.vectors.setIdentity();
        out.group[0] = out.group[1] = out.group[2] = 0;
        return out;
    }
    if (same01 || same12) {
        const int lone = same01 ? 2 : 0;
        const Vec3 v = null_vector(a, l[lone]);
        Vec3 b1, b2;
        complement_basis(v, b1, b2);
        out.vectors.col(lone) = v;
        if (same01) {
            out.vectors.col(0) = b1;
            out.vectors.col(1) = b2;
            out.group[1] = 0;
        } else {
            out.vectors.col(1) = b1;
            out.vectors.col(2) = b2;
            out.group[2] = 1;
        }
        return out;
    }

    // Largest and smallest are computed directly; the middle one by
    // orthogonality keeps the basis orthonormal.
    const Vec3 v0 = null_vector(a, l[0]);
    Vec3 v2 = null_vector(a, l[2]);
    v2 = (v2 - v2.dot(v0) * v0).normalized();
    out.vectors.col(0) = v0;
    out.vectors.col(2) = v2;
    out.vectors.col(1) = v2.cross(v0);
    return out;
}

} // namespace sft
