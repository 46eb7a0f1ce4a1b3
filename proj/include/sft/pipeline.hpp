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
#include "sft/losses.hpp"
#include "sft/network.hpp"
#include "sft/optimizer.hpp"
#include "sft/renderer.hpp"
#include "sft/synthetic.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace sft {

/**
 * Dataset directory layout:
 *   template.obj, texture.png, camera.json,
 *   frames/####.png, masks/####.png,
 *   optional depth/####.png (16-bit mm) or depth/####.bin (float32 mm),
 *   optional gt_points/####.ply (ASCII), optional sequence.json.
 */
struct SequenceDataset
{
    std::filesystem::path directory;
    TemplateMesh mesh;
    CameraIntrinsics camera;
    std::vector<FrameObservation> frames;
    std::vector<std::string> names; // numeric file stems, e.g. "0001"
    std::uint64_t gt_point_seed = 0;
};

SequenceDataset load_sequence(const std::filesystem::path& directory);
void write_dataset(const std::filesystem::path& directory, const SyntheticSequence& sequence);

void write_ply(const std::filesystem::path& path, std::span<const Vec3> points);
Points read_ply(const std::filesystem::path& path);

void write_camera_json(const std::filesystem::path& path, const CameraIntrinsics& camera);
CameraIntrinsics read_camera_json(const std::filesystem::path& path);

struct RunConfig
{
    LossConfig loss;
    std::string preset = "base";
    bool vertex_offsets = false; // optimise raw per-vertex offsets instead of a network
    StrategyConfig strategy;
    AdamWConfig adam;
    RenderSettings render;
    std::filesystem::path output;
    std::uint64_t seed = 0;
    int dump_renders = 0; // every N iterations, 0 disables

    void validate() const;
};

/// Reads a JSON config; absent keys keep their defaults. Unknown keys are errors.
RunConfig load_run_config(const std::filesystem::path& path);

DeformationState initial_state(const TemplateMesh& mesh, const RunConfig& config);

/// Runs the configured strategy and writes recon/####.obj, params/####.bin,
/// losses.csv and run.json under config.output.
OptimizationRun reconstruct(const SequenceDataset& dataset, const RunConfig& config);

/// losses.csv body: one row per frame and iteration.
void write_losses_csv(std::ostream& out, const OptimizationRun& run, const std::vector<std::string>& names);

struct FrameMetrics
{
    std::string name;
    std::optional<double> chamfer_e4; // Chamfer x 10^4
    std::optional<double> depth_rmse_mm;
};

struct EvaluationTable
{
    std::vector<FrameMetrics> frames;
    std::optional<double> mean_chamfer_e4;
    std::optional<double> mean_depth_rmse_mm;
    std::vector<std::string> notices;
};

/// Point clouds for reconstructed meshes use the dataset's per-frame sampling
/// seed so that ground truth evaluated against itself scores exactly zero.
EvaluationTable evaluate_meshes(const SequenceDataset& dataset, const std::vector<Points>& meshes);

/// Loads recon/####.obj from `run_directory` and writes metrics.csv and
/// summary.txt next to them.
EvaluationTable evaluate(const std::filesystem::path& run_directory, const SequenceDataset& dataset);

/// Keeps large freed buffers in the heap instead of returning them to the OS;
/// optimisation loops reallocate the same tensor sizes every iteration.
void tune_allocator();

void write_metrics_csv(std::ostream& out, const EvaluationTable& table);
void write_summary(std::ostream& out, const EvaluationTable& table);

} // namespace sft
