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

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace sft {

struct GradcheckOptions
{
    int scenes = 20;
    std::uint64_t seed = 0;
    int image_size = 64;
    int grid_resolution = 8;
    std::string only; // family name, empty runs all
    double renderer_tolerance = 5e-3;
    double numeric_tolerance = 1e-4;
};

/// Families: rgb, silhouette, filters, inextensibility, network, data_loss, temporal.
const std::vector<std::string>& gradcheck_families();

struct GradcheckReport
{
    std::vector<ad::FdReport> checks;

    bool passed() const;
    std::size_t failure_count() const;
};

/// Runs every selected family on `scenes` seeded random scenes, logging one
/// line per check to `log`.
GradcheckReport run_gradcheck(const GradcheckOptions& options, std::ostream& log);

} // namespace sft
