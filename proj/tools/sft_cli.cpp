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
#include "sft/gradcheck.hpp"
#include "sft/pipeline.hpp"
#include "sft/synthetic.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <optional>

namespace {

using sft::RunConfig;
using sft::ScenarioConfig;

struct ReconstructFlags
{
    std::string data, out, config, strategy, preset, inext;
    std::optional<double> alpha, sigma, tol, learning_rate, weight_decay, softness, blur;
    std::optional<int> warmup, iters, window, iters_per_window, max_iters, dump_renders;
    std::optional<std::uint64_t> seed;
    bool no_adaptive = false, no_image_grad = false, no_silhouette = false, cold_restart = false, offsets = false;
};

RunConfig build_run_config(const ReconstructFlags& f)
{
    RunConfig c = f.config.empty() ? RunConfig{} : sft::load_run_config(f.config);
    if (!f.strategy.empty())
        c.strategy.kind = sft::parse_strategy(f.strategy);
    if (!f.preset.empty())
        c.preset = f.preset;
    if (!f.inext.empty())
        c.loss.inext_variant = sft::parse_inext_variant(f.inext);
    if (f.alpha)
        c.loss.alpha = *f.alpha;
    if (f.sigma)
        c.loss.sigma = *f.sigma;
    if (f.no_adaptive)
        c.loss.use_adaptive = false;
    if (f.no_image_grad)
        c.loss.use_image_gradient = false;
    if (f.no_silhouette)
        c.loss.use_silhouette = false;
    if (f.warmup)
        c.strategy.warmup_iters = *f.warmup;
    if (f.iters)
        c.strategy.iters_per_frame = *f.iters;
    if (f.window)
        c.strategy.window_size = *f.window;
    if (f.iters_per_window)
        c.strategy.iters_per_window = *f.iters_per_window;
    if (f.tol)
        c.strategy.tolerance = *f.tol;
    if (f.max_iters)
        c.strategy.max_iters_per_frame = *f.max_iters;
    if (f.cold_restart)
        c.strategy.cold_restart = true;
    if (f.learning_rate)
        c.adam.learning_rate = *f.learning_rate;
    if (f.weight_decay)
        c.adam.weight_decay = *f.weight_decay;
    if (f.softness)
        c.render.silhouette_softness = *f.softness;
    if (f.blur)
        c.render.blur_sigma = *f.blur;
    if (f.seed)
        c.seed = *f.seed;
    if (f.dump_renders)
        c.dump_renders = *f.dump_renders;
    if (f.offsets)
        c.vertex_offsets = true;
    if (!f.out.empty())
        c.output = f.out;
    return c;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"framesft: frame-wise shape-from-template reconstruction"};
    app.require_subcommand(1);

    // synth
    ScenarioConfig scenario;
    std::string synth_out, family = "sine-bend", texture = "checkerboard", texture_file;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic deforming-sheet dataset");
    synth->add_option("--out", synth_out, "Output dataset directory")->required();
    synth->add_option("--frames", scenario.frame_count, "Number of frames T")->capture_default_str();
    synth->add_option("--grid", scenario.grid_resolution, "Vertices per sheet side")->capture_default_str();
    synth->add_option("--image-size", scenario.image_size, "Square image size in pixels")->capture_default_str();
    synth->add_option("--family", family, "sine-bend, corner-fold, compound or translate")->capture_default_str();
    synth->add_option("--amplitude", scenario.amplitude, "Deformation amplitude")->capture_default_str();
    synth->add_option("--frequency", scenario.frequency, "Cycles over the sheet")->capture_default_str();
    synth->add_option("--camera-distance", scenario.camera_distance, "Sheet distance")->capture_default_str();
    synth->add_option("--tilt", scenario.tilt_degrees, "Sheet tilt in degrees")->capture_default_str();
    synth->add_option("--texture", texture, "checkerboard, noise or image")->capture_default_str();
    synth->add_option("--texture-file", texture_file, "PNG used with --texture image");
    synth->add_option("--brightness-ramp", scenario.brightness_ramp, "Frame t scaled by 1 + ramp t/T")
        ->capture_default_str();
    synth->add_option("--points", scenario.gt_point_count, "Ground-truth points per frame")->capture_default_str();
    synth->add_option("--seed", scenario.seed, "Random seed")->capture_default_str();

    // reconstruct
    ReconstructFlags rf;
    auto* rec = app.add_subcommand("reconstruct", "Reconstruct every frame of a dataset");
    rec->add_option("--data", rf.data, "Dataset directory")->required();
    rec->add_option("--out", rf.out, "Output directory");
    rec->add_option("--config", rf.config, "JSON config; flags override its values");
    rec->add_option("--strategy", rf.strategy, "frame, window or adaptive");
    rec->add_option("--preset", rf.preset, "small, base or large");
    rec->add_flag("--offsets", rf.offsets, "Optimise per-vertex offsets instead of a network");
    rec->add_option("--alpha", rf.alpha, "Adaptive loss scale");
    rec->add_option("--sigma", rf.sigma, "Adaptive loss temperature");
    rec->add_flag("--no-adaptive-loss", rf.no_adaptive, "Plain l_p data terms");
    rec->add_flag("--no-image-grad", rf.no_image_grad, "Drop the image-gradient loss");
    rec->add_flag("--no-silhouette", rf.no_silhouette, "Drop the silhouette loss");
    rec->add_option("--inext", rf.inext, "eig or literal");
    rec->add_option("--warmup", rf.warmup, "Iterations for the first frame");
    rec->add_option("--iters", rf.iters, "Iterations per later frame");
    rec->add_option("--window", rf.window, "Window size");
    rec->add_option("--iters-per-window", rf.iters_per_window, "Iterations per window");
    rec->add_option("--tol", rf.tol, "Adaptive stopping tolerance");
    rec->add_option("--max-iters", rf.max_iters, "Adaptive per-frame cap");
    rec->add_option("--lr", rf.learning_rate, "AdamW learning rate");
    rec->add_option("--weight-decay", rf.weight_decay, "AdamW decoupled weight decay");
    rec->add_option("--sil-softness", rf.softness, "Silhouette sigmoid scale in pixels");
    rec->add_option("--blur-sigma", rf.blur, "Silhouette blur in pixels");
    rec->add_option("--seed", rf.seed, "Random seed");
    rec->add_option("--dump-renders", rf.dump_renders, "Write renders every N iterations");
    rec->add_flag("--cold-restart", rf.cold_restart, "Re-initialise parameters for every frame");

    // evaluate
    std::string eval_data, eval_run;
    auto* eval = app.add_subcommand("evaluate", "Score reconstructions against ground truth");
    eval->add_option("--data", eval_data, "Dataset directory")->required();
    eval->add_option("--run", eval_run, "Reconstruction output directory")->required();

    // gradcheck
    sft::GradcheckOptions gc;
    auto* grad = app.add_subcommand("gradcheck", "Finite-difference gradient validation");
    grad->add_option("--scenes", gc.scenes, "Random scenes")->capture_default_str();
    grad->add_option("--seed", gc.seed, "Scene seed")->capture_default_str();
    grad->add_option("--image-size", gc.image_size, "Scene image size")->capture_default_str();
    grad->add_option("--only", gc.only, "Run one family: rgb, silhouette, filters, inextensibility, network, "
                                        "data_loss, temporal");

    CLI11_PARSE(app, argc, argv);
    sft::tune_allocator();

    try {
        if (*synth) {
            scenario.family = sft::parse_family(family);
            scenario.texture = sft::parse_texture_kind(texture);
            scenario.texture_file = texture_file;
            const sft::SyntheticSequence seq = sft::generate_sequence(scenario);
            sft::write_dataset(synth_out, seq);
            std::cout << "wrote " << seq.frames.size() << " frames to " << synth_out << '\n';
            return 0;
        }
        if (*rec) {
            RunConfig cfg = build_run_config(rf);
            if (cfg.output.empty())
                cfg.output = "run";
            const sft::SequenceDataset ds = sft::load_sequence(rf.data);
            const sft::OptimizationRun run = sft::reconstruct(ds, cfg);
            const int failures = run.ledger.failure_count();
            std::cout << "reconstructed " << run.vertices.size() << " frames, " << run.ledger.renders
                      << " renders, " << failures << " failed frames; outputs in " << cfg.output.string() << '\n';
            return std::min(failures, 125);
        }
        if (*eval) {
            const sft::SequenceDataset ds = sft::load_sequence(eval_data);
            const sft::EvaluationTable table = sft::evaluate(eval_run, ds);
            sft::write_summary(std::cout, table);
            return 0;
        }
        if (*grad) {
            const sft::GradcheckReport report = sft::run_gradcheck(gc, std::cout);
            return report.passed() ? 0 : 1;
        }
    }
    catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
