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
#include "sft/renderer.hpp"

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace sft {

struct AdamWConfig
{
    double learning_rate = 1e-4;
    double weight_decay = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    void validate() const;
};

struct OptimizerState
{
    AdamWConfig config;
    std::vector<double> first_moment;
    std::vector<double> second_moment;
    long step_count = 0;

    OptimizerState() = default;
    OptimizerState(const AdamWConfig& cfg, std::size_t size);
};

/// One decoupled-weight-decay Adam update. Throws ad::GradientError on a
/// non-finite gradient without touching params or state.
void adamw_step(std::span<double> params, std::span<const double> grads, OptimizerState& state);

enum class StrategyKind
{
    FrameWise,
    WindowWise,
    Adaptive,
};

std::string to_string(StrategyKind kind);
StrategyKind parse_strategy(const std::string& name);

struct StrategyConfig
{
    StrategyKind kind = StrategyKind::FrameWise;
    int warmup_iters = 500;
    int iters_per_frame = 200;
    int window_size = 3;
    int iters_per_window = 600;
    double tolerance = 1e-6;
    int max_iters_per_frame = 5000;
    bool cold_restart = false;

    void validate() const;
};

/// Everything a strategy needs besides its own budgets. Targets are
/// precomputed once per frame.
class ReconstructionProblem
{
public:
    ReconstructionProblem(const TemplateMesh& mesh, const CameraIntrinsics& camera,
                          std::span<const FrameObservation> frames, const LossConfig& loss,
                          const RenderSettings& render);

    const TemplateMesh& mesh() const noexcept { return *mesh_; }
    const CameraIntrinsics& camera() const noexcept { return camera_; }
    const LossConfig& loss() const noexcept { return loss_; }
    const RenderSettings& render_settings() const noexcept { return render_; }
    std::size_t frame_count() const noexcept { return targets_.size(); }
    const LossTargets& targets(std::size_t frame) const { return targets_.at(frame); }

private:
    const TemplateMesh* mesh_;
    CameraIntrinsics camera_;
    LossConfig loss_;
    RenderSettings render_;
    std::vector<LossTargets> targets_;
};

struct IterationRecord
{
    int frame = 0; // zero-based
    int iteration = 0;
    LossBreakdown breakdown;
    double objective = 0.0; // value that was minimised (window sum in window mode)
};

struct FrameSummary
{
    int frame = 0;
    int iterations = 0;
    double initial_loss = 0.0;
    double final_loss = 0.0;     // loss of the kept (lowest-objective) iterate
    int selected_iteration = 0;  // iteration whose parameters were kept
    bool budget_capped = false;
    bool failed = false;
    std::string error;
    double seconds = 0.0;
};

struct RunLedger
{
    std::vector<IterationRecord> iterations;
    std::vector<FrameSummary> frames;
    long renders = 0;
    double warmup_seconds = 0.0;
    double total_seconds = 0.0;
    LossCounters counters;

    int failure_count() const;
};

struct OptimizationRun
{
    StrategyKind kind = StrategyKind::FrameWise;
    RunLedger ledger;
    std::vector<DeformationState> states; // final parameters per frame
    std::vector<Points> vertices;         // final x_t per frame
};

struct RunHooks
{
    /// Called every `render_every` iterations (0 disables) with the frame's render.
    int render_every = 0;
    std::function<void(int frame, int iteration, const RenderOutput&)> on_render;
};

/// Result of one joint loss evaluation over a window of frames.
struct WindowEvaluation
{
    double objective = 0.0;
    std::vector<LossBreakdown> breakdowns;
    std::vector<std::vector<double>> gradients;
    std::vector<Points> vertices;
    std::vector<RenderOutput> renders;
};

/// Renders each frame in `frames` from its own state, adds temporal terms for
/// interior triples and back-propagates into every state's parameters.
WindowEvaluation evaluate_window(const ReconstructionProblem& problem, std::span<const int> frames,
                                 std::span<const DeformationState> states, LossCounters* counters = nullptr);

struct FrameBudget
{
    int iterations = 1;
    double tolerance = 0.0; // > 0 enables the |ΔL| < τ stop
    // Loss of the handed-off parameters on the previous frame. Its iteration
    // precedes this frame's first one, so the τ test also applies at it = 0.
    std::optional<double> preceding_loss;
};

/// Optimises a single frame in place, appending to the ledger. The state ends
/// at the evaluated iterate with the lowest loss.
FrameSummary optimize_frame(const ReconstructionProblem& problem, int frame, DeformationState& state,
                            const FrameBudget& budget, const AdamWConfig& adam, RunLedger& ledger,
                            const RunHooks& hooks = {});

OptimizationRun run_frame_wise(const ReconstructionProblem& problem, const DeformationState& initial,
                               const StrategyConfig& strategy, const AdamWConfig& adam = {},
                               const RunHooks& hooks = {});
OptimizationRun run_window_wise(const ReconstructionProblem& problem, const DeformationState& initial,
                                const StrategyConfig& strategy, const AdamWConfig& adam = {},
                                const RunHooks& hooks = {});
OptimizationRun run_adaptive(const ReconstructionProblem& problem, const DeformationState& initial,
                             const StrategyConfig& strategy, const AdamWConfig& adam = {},
                             const RunHooks& hooks = {});
OptimizationRun run_strategy(const ReconstructionProblem& problem, const DeformationState& initial,
                             const StrategyConfig& strategy, const AdamWConfig& adam = {},
                             const RunHooks& hooks = {});

/// Reference harness that re-renders frames 1..t for every update while
/// optimising frame t. Exists to measure its render count.
RunLedger run_incremental_baseline(const ReconstructionProblem& problem, const DeformationState& initial,
                                   int iters_per_stage, const AdamWConfig& adam = {});

/// Closed-form render counts.
long expected_frame_wise_renders(int frames, int warmup, int iters);
long expected_incremental_renders(int frames, int iters);

} // namespace sft
