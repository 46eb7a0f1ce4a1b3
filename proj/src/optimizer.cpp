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
#include "sft/optimizer.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace sft {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start)
{
    return std::chrono::duration<double>(Clock::now() - start).count();
}

void notify_render(const RunHooks& hooks, int frame, int iteration, const RenderOutput& output)
{
    if (hooks.on_render && hooks.render_every > 0 && iteration % hooks.render_every == 0)
        hooks.on_render(frame, iteration, output);
}

} // namespace

void AdamWConfig::validate() const
{
    if (!(learning_rate > 0.0) || weight_decay < 0.0 || !(epsilon > 0.0))
        throw std::invalid_argument("AdamW needs learning_rate > 0, weight_decay >= 0, epsilon > 0");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
        throw std::invalid_argument("AdamW betas must lie in [0, 1)");
}

OptimizerState::OptimizerState(const AdamWConfig& cfg, std::size_t size)
    : config(cfg), first_moment(size, 0.0), second_moment(size, 0.0)
{
    cfg.validate();
}

void adamw_step(std::span<double> params, std::span<const double> grads, OptimizerState& state)
{
    const std::size_t n = params.size();
    if (grads.size() != n || state.first_moment.size() != n || state.second_moment.size() != n)
        throw std::invalid_argument("adamw_step: parameter, gradient and moment sizes differ");
    for (std::size_t i = 0; i < n; ++i)
        if (!std::isfinite(grads[i]))
            throw ad::GradientError("adamw_step: non-finite gradient at parameter " + std::to_string(i));

    const AdamWConfig& c = state.config;
    ++state.step_count;
    const double t = static_cast<double>(state.step_count);
    const double bias1 = 1.0 - std::pow(c.beta1, t);
    const double bias2 = 1.0 - std::pow(c.beta2, t);
    for (std::size_t i = 0; i < n; ++i) {
        double& m = state.first_moment[i];
        double& v = state.second_moment[i];
        m = c.beta1 * m + (1.0 - c.beta1) * grads[i];
        v = c.beta2 * v + (1.0 - c.beta2) * grads[i] * grads[i];
        const double m_hat = m / bias1;
        const double v_hat = v / bias2;
        params[i] -= c.learning_rate * (m_hat / (std::sqrt(v_hat) + c.epsilon) + c.weight_decay * params[i]);
    }
}

std::string to_string(StrategyKind kind)
{
    switch (kind) {
    case StrategyKind::FrameWise:
        return "frame";
    case StrategyKind::WindowWise:
        return "window";
    case StrategyKind::Adaptive:
        return "adaptive";
    }
    return "frame";
}

StrategyKind parse_strategy(const std::string& name)
{
    if (name == "frame")
        return StrategyKind::FrameWise;
    if (name == "window")
        return StrategyKind::WindowWise;
    if (name == "adaptive")
        return StrategyKind::Adaptive;
    throw std::invalid_argument("unknown strategy '" + name + "' (frame, window, adaptive)");
}

void StrategyConfig::validate() const
{
    if (warmup_iters < 1 || iters_per_frame < 1 || iters_per_window < 1 || max_iters_per_frame < 1)
        throw std::invalid_argument("iteration counts must be >= 1");
    if (!(tolerance > 0.0))
        throw std::invalid_argument("tolerance must be > 0");
    if (window_size < 1)
        throw std::invalid_argument("window size must be >= 1");
}

ReconstructionProblem::ReconstructionProblem(const TemplateMesh& mesh, const CameraIntrinsics& camera,
                                             std::span<const FrameObservation> frames, const LossConfig& loss,
                                             const RenderSettings& render)
    : mesh_(&mesh), camera_(camera), loss_(loss), render_(render)
{
    camera.validate();
    loss.validate();
    if (frames.empty())
        throw std::invalid_argument("reconstruction needs at least one frame");
    targets_.reserve(frames.size());
    for (const FrameObservation& f : frames) {
        validate_frame(f, camera);
        targets_.push_back(prepare_targets(f, loss, render.blur_sigma));
    }
}

int RunLedger::failure_count() const
{
    int n = 0;
    for (const FrameSummary& f : frames)
        n += f.failed ? 1 : 0;
    return n;
}

WindowEvaluation evaluate_window(const ReconstructionProblem& problem, std::span<const int> frames,
                                 std::span<const DeformationState> states, LossCounters* counters)
{
    if (frames.size() != states.size() || frames.empty())
        throw std::invalid_argument("evaluate_window: one state per frame required");
    const TemplateMesh& mesh = problem.mesh();
    const LossConfig& cfg = problem.loss();
    const double blur = problem.render_settings().blur_sigma;

    ad::Tape tape;
    std::vector<ad::Var> params, verts;
    WindowEvaluation out;
    std::vector<ad::Var> totals;
    for (std::size_t k = 0; k < frames.size(); ++k) {
        const DeformationState& s = states[k];
        params.push_back(tape.variable(Tensor({s.parameters.size()}, s.parameters.values), "theta"));
        verts.push_back(forward(tape, s, mesh.vertices, params.back()));
        RenderVars r = render(tape, verts.back(), mesh, problem.camera(), problem.render_settings());
        FrameLoss fl = total_loss(r, problem.targets(static_cast<std::size_t>(frames[k])), verts.back(), mesh, cfg,
                                  blur, counters);
        totals.push_back(fl.total);
        out.breakdowns.push_back(fl.breakdown);
        out.renders.push_back(std::move(r.output));
        out.vertices.push_back(tensor_to_points(verts.back().value()));
    }
    ad::Var objective = totals[0];
    for (std::size_t k = 1; k < totals.size(); ++k)
        objective = objective + totals[k];
    for (std::size_t k = 1; k + 1 < verts.size(); ++k) {
        ad::Var temporal = cfg.temporal_weight * temporal_loss(verts[k - 1], verts[k], verts[k + 1]);
        objective = objective + temporal;
        LossBreakdown& b = out.breakdowns[k];
        b.temporal = temporal.value()[0];
        b.total += b.temporal;
    }
    out.objective = objective.value()[0];
    if (std::isfinite(out.objective)) {
        tape.backward(objective);
        for (ad::Var p : params)
            out.gradients.push_back(p.gradient().storage());
    }
    return out;
}

FrameSummary optimize_frame(const ReconstructionProblem& problem, int frame, DeformationState& state,
                            const FrameBudget& budget, const AdamWConfig& adam, RunLedger& ledger,
                            const RunHooks& hooks)
{
    const auto start = Clock::now();
    FrameSummary summary;
    summary.frame = frame;
    OptimizerState opt(adam, state.parameters.size());
    DeformationState good = state;
    DeformationState best = state;
    double best_loss = std::numeric_limits<double>::infinity();
    const int frames[1] = {frame};
    double previous = 0.0;
    for (int it = 0; it < budget.iterations; ++it) {
        WindowEvaluation ev;
        try {
            ev = evaluate_window(problem, frames, std::span<const DeformationState>(&state, 1), &ledger.counters);
        }
        catch (const std::exception& e) {
            summary.failed = true;
            summary.error = e.what();
            state = good;
            break;
        }
        ++ledger.renders;
        notify_render(hooks, frame, it, ev.renders[0]);
        ledger.iterations.push_back({frame, it, ev.breakdowns[0], ev.objective});
        summary.iterations = it + 1;
        if (!std::isfinite(ev.objective)) {
            summary.failed = true;
            summary.error = "non-finite loss at iteration " + std::to_string(it);
            state = good;
            break;
        }
        good = state;
        if (it == 0)
            summary.initial_loss = ev.objective;
        if (ev.objective < best_loss) {
            best_loss = ev.objective;
            best = state;
            summary.final_loss = ev.objective;
            summary.selected_iteration = it;
        }
        if (it == 0 && budget.preceding_loss)
            previous = *budget.preceding_loss;
        if (budget.tolerance > 0.0 && (it > 0 || budget.preceding_loss) &&
            std::abs(ev.objective - previous) < budget.tolerance)
            break;
        previous = ev.objective;
        if (it + 1 == budget.iterations) {
            summary.budget_capped = budget.tolerance > 0.0;
            break;
        }
        try {
            adamw_step(state.parameters.values, ev.gradients[0], opt);
        }
        catch (const std::exception& e) {
            summary.failed = true;
            summary.error = e.what();
            state = good;
            break;
        }
    }
    if (std::isfinite(best_loss))
        state = std::move(best);
    summary.seconds = seconds_since(start);
    ledger.frames.push_back(summary);
    return summary;
}

namespace {

OptimizationRun run_per_frame(const ReconstructionProblem& problem, const DeformationState& initial,
                              const StrategyConfig& strategy, const AdamWConfig& adam, const RunHooks& hooks,
                              StrategyKind kind)
{
    strategy.validate();
    const auto start = Clock::now();
    OptimizationRun run;
    run.kind = kind;
    DeformationState state = initial;
    for (std::size_t t = 0; t < problem.frame_count(); ++t) {
        if (t > 0 && strategy.cold_restart)
            state = initial;
        FrameBudget budget;
        if (t == 0) {
            budget.iterations = strategy.warmup_iters;
        }
        else if (kind == StrategyKind::Adaptive) {
            budget.iterations = strategy.max_iters_per_frame;
            budget.tolerance = strategy.tolerance;
            if (!strategy.cold_restart && !run.ledger.frames.back().failed)
                budget.preceding_loss = run.ledger.frames.back().final_loss;
        }
        else {
            budget.iterations = strategy.iters_per_frame;
        }
        const FrameSummary s = optimize_frame(problem, static_cast<int>(t), state, budget, adam, run.ledger, hooks);
        if (t == 0)
            run.ledger.warmup_seconds = s.seconds;
        run.states.push_back(state);
        run.vertices.push_back(deform(state, problem.mesh().vertices));
        state = transfer_parameters(state);
    }
    run.ledger.total_seconds = seconds_since(start);
    return run;
}

} // namespace

OptimizationRun run_frame_wise(const ReconstructionProblem& problem, const DeformationState& initial,
                               const StrategyConfig& strategy, const AdamWConfig& adam, const RunHooks& hooks)
{
    return run_per_frame(problem, initial, strategy, adam, hooks, StrategyKind::FrameWise);
}

OptimizationRun run_adaptive(const ReconstructionProblem& problem, const DeformationState& initial,
                             const StrategyConfig& strategy, const AdamWConfig& adam, const RunHooks& hooks)
{
    return run_per_frame(problem, initial, strategy, adam, hooks, StrategyKind::Adaptive);
}

OptimizationRun run_window_wise(const ReconstructionProblem& problem, const DeformationState& initial,
                                const StrategyConfig& strategy, const AdamWConfig& adam, const RunHooks& hooks)
{
    strategy.validate();
    const auto start = Clock::now();
    OptimizationRun run;
    run.kind = StrategyKind::WindowWise;
    const int total = static_cast<int>(problem.frame_count());
    const int w = strategy.window_size;
    DeformationState carry = initial;
    for (int first = 0; first < total; first += w) {
        const auto window_start = Clock::now();
        const int count = std::min(w, total - first);
        std::vector<int> frames;
        for (int k = 0; k < count; ++k)
            frames.push_back(first + k);
        const DeformationState seed = (first > 0 && strategy.cold_restart) ? initial : carry;
        std::vector<DeformationState> states(static_cast<std::size_t>(count), seed);
        std::vector<DeformationState> good = states;
        std::vector<DeformationState> best = states;
        double best_objective = std::numeric_limits<double>::infinity();
        std::vector<OptimizerState> opts;
        for (int k = 0; k < count; ++k)
            opts.emplace_back(adam, seed.parameters.size());
        std::vector<FrameSummary> summaries(static_cast<std::size_t>(count));
        for (int k = 0; k < count; ++k)
            summaries[static_cast<std::size_t>(k)].frame = first + k;

        const int iters = first == 0 ? std::max(strategy.warmup_iters, strategy.iters_per_window)
                                     : strategy.iters_per_window;
        std::string error;
        for (int it = 0; it < iters && error.empty(); ++it) {
            WindowEvaluation ev;
            try {
                ev = evaluate_window(problem, frames, states, &run.ledger.counters);
            }
            catch (const std::exception& e) {
                error = e.what();
                break;
            }
            run.ledger.renders += count;
            for (int k = 0; k < count; ++k) {
                const auto ku = static_cast<std::size_t>(k);
                notify_render(hooks, first + k, it, ev.renders[ku]);
                run.ledger.iterations.push_back({first + k, it, ev.breakdowns[ku], ev.objective});
                summaries[ku].iterations = it + 1;
                if (it == 0)
                    summaries[ku].initial_loss = ev.breakdowns[ku].total;
            }
            if (!std::isfinite(ev.objective)) {
                error = "non-finite loss at iteration " + std::to_string(it);
                break;
            }
            good = states;
            if (ev.objective < best_objective) {
                best_objective = ev.objective;
                best = states;
                for (int k = 0; k < count; ++k) {
                    const auto ku = static_cast<std::size_t>(k);
                    summaries[ku].final_loss = ev.breakdowns[ku].total;
                    summaries[ku].selected_iteration = it;
                }
            }
            if (it + 1 == iters)
                break;
            try {
                for (int k = 0; k < count; ++k) {
                    const auto ku = static_cast<std::size_t>(k);
                    adamw_step(states[ku].parameters.values, ev.gradients[ku], opts[ku]);
                }
            }
            catch (const std::exception& e) {
                error = e.what();
            }
        }
        if (!error.empty()) {
            for (FrameSummary& s : summaries) {
                s.failed = true;
                s.error = error;
            }
        }
        states = std::isfinite(best_objective) ? std::move(best) : std::move(good);
        const double secs = seconds_since(window_start);
        if (first == 0)
            run.ledger.warmup_seconds = secs;
        for (int k = 0; k < count; ++k) {
            const auto ku = static_cast<std::size_t>(k);
            summaries[ku].seconds = secs / count;
            run.ledger.frames.push_back(summaries[ku]);
            run.states.push_back(states[ku]);
            run.vertices.push_back(deform(states[ku], problem.mesh().vertices));
        }
        carry = transfer_parameters(states.back());
    }
    run.ledger.total_seconds = seconds_since(start);
    return run;
}

OptimizationRun run_strategy(const ReconstructionProblem& problem, const DeformationState& initial,
                             const StrategyConfig& strategy, const AdamWConfig& adam, const RunHooks& hooks)
{
    switch (strategy.kind) {
    case StrategyKind::FrameWise:
        return run_frame_wise(problem, initial, strategy, adam, hooks);
    case StrategyKind::WindowWise:
        return run_window_wise(problem, initial, strategy, adam, hooks);
    case StrategyKind::Adaptive:
        return run_adaptive(problem, initial, strategy, adam, hooks);
    }
    throw std::invalid_argument("unknown strategy");
}

RunLedger run_incremental_baseline(const ReconstructionProblem& problem, const DeformationState& initial,
                                   int iters_per_stage, const AdamWConfig& adam)
{
    if (iters_per_stage < 1)
        throw std::invalid_argument("iters_per_stage must be >= 1");
    const auto start = Clock::now();
    RunLedger ledger;
    std::vector<DeformationState> states;
    for (std::size_t t = 0; t < problem.frame_count(); ++t) {
        states.push_back(t == 0 ? initial : states.back());
        std::vector<int> frames;
        for (std::size_t k = 0; k <= t; ++k)
            frames.push_back(static_cast<int>(k));
        std::vector<OptimizerState> opts;
        for (const DeformationState& s : states)
            opts.emplace_back(adam, s.parameters.size());
        FrameSummary summary;
        summary.frame = static_cast<int>(t);
        const auto stage_start = Clock::now();
        for (int it = 0; it < iters_per_stage; ++it) {
            // All frames seen so far are re-rendered for every update.
            ad::Tape tape;
            ad::Var objective;
            std::vector<ad::Var> params;
            for (std::size_t k = 0; k <= t; ++k) {
                params.push_back(tape.variable(Tensor({states[k].parameters.size()}, states[k].parameters.values)));
                ad::Var x = forward(tape, states[k], problem.mesh().vertices, params.back());
                RenderVars r = render(tape, x, problem.mesh(), problem.camera(), problem.render_settings());
                ++ledger.renders;
                FrameLoss fl = total_loss(r, problem.targets(k), x, problem.mesh(), problem.loss(),
                                          problem.render_settings().blur_sigma, &ledger.counters);
                objective = k == 0 ? fl.total : objective + fl.total;
            }
            const double value = objective.value()[0];
            ledger.iterations.push_back({static_cast<int>(t), it, LossBreakdown{}, value});
            if (it == 0)
                summary.initial_loss = value;
            summary.final_loss = value;
            summary.iterations = it + 1;
            if (!std::isfinite(value)) {
                summary.failed = true;
                summary.error = "non-finite loss";
                break;
            }
            tape.backward(objective);
            for (std::size_t k = 0; k <= t; ++k)
                adamw_step(states[k].parameters.values, params[k].gradient().values(), opts[k]);
        }
        summary.seconds = seconds_since(stage_start);
        ledger.frames.push_back(summary);
    }
    ledger.total_seconds = seconds_since(start);
    return ledger;
}

long expected_frame_wise_renders(int frames, int warmup, int iters)
{
    return frames < 1 ? 0 : static_cast<long>(warmup) + static_cast<long>(frames - 1) * iters;
}

long expected_incremental_renders(int frames, int iters)
{
    return static_cast<long>(iters) * frames * (frames + 1) / 2;
}

} // namespace sft
