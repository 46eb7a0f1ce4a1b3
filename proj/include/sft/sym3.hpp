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

#include <Eigen/Dense>

namespace sft {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Eigenvalues of the symmetric part of `a`, sorted descending. Trigonometric
/// closed form; no iteration.
Vec3 symmetric_eigenvalues(const Mat3& a);

struct SymmetricEigen
{
    Vec3 values;  // descending
    Mat3 vectors; // column k pairs with values[k]
    // group[k] is the smallest index sharing eigenvalue k (within the
    // degeneracy gap). Columns in a shared group only span the eigenspace.
    int group[3] = {0, 1, 2};
};

/// Relative gap below which two eigenvalues are treated as repeated.
inline constexpr double kEigenDegeneracyGap = 1e-8;

SymmetricEigen symmetric_eigen(const Mat3& a);

} // namespace sft
