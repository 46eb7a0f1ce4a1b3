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
#include "sft/pipeline.hpp"

#include "sft/image_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

namespace sft {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kDepthToMillimetres = 1000.0;

std::string format_number(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string frame_name(std::size_t one_based)
{
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04zu", one_based);
    return buf;
}

bool is_numeric(const std::string& s)
{
    return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c) != 0; });
}

json read_json(const fs::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot read " + path.string());
    try {
        return json::parse(in);
    }
    catch (const json::exception& e) {
        throw std::runtime_error("malformed JSON in " + path.string() + ": " + e.what());
    }
}

void write_text(const fs::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot write " + path.string());
    out << text;
}

Tensor single_channel(const Tensor& image)
{
    if (image.dim(2) == 1)
        return image;
    Tensor out({image.dim(0), image.dim(1), 1});
    for (std::size_t k = 0; k < out.size(); ++k)
        out[k] = image[k * image.dim(2)];
    return out;
}

Tensor render_depth_mm(std::span<const Vec3> vertices, const TemplateMesh& mesh, const CameraIntrinsics& camera)
{
    Tensor depth = rasterize(vertices, mesh, camera).depth;
    for (double& v : depth.storage())
        v = static_cast<double>(static_cast<float>(v * kDepthToMillimetres));
    return depth;
}

} // namespace

// ---- dataset files -----------------------------------------------------------

void write_ply(const fs::path& path, std::span<const Vec3> points)
{
    std::ostringstream out;
    out << "ply\nformat ascii 1.0\nelement vertex " << points.size()
        << "\nproperty double x\nproperty double y\nproperty double z\nend_header\n";
    for (const Vec3& p : points)
        out << format_number(p.x()) << ' ' << format_number(p.y()) << ' ' << format_number(p.z()) << '\n';
    write_text(path, out.str());
}

Points read_ply(const fs::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot read point cloud " + path.string());
    std::string line;
    std::size_t count = 0;
    bool ascii = false;
    std::getline(in, line);
    if (line.rfind("ply", 0) != 0)
        throw std::runtime_error("not a PLY file: " + path.string());
    while (std::getline(in, line) && line.rfind("end_header", 0) != 0) {
        std::istringstream ls(line);
        std::string key, a, b;
        ls >> key >> a >> b;
        if (key == "format")
            ascii = a == "ascii";
        else if (key == "element" && a == "vertex")
            count = std::stoul(b);
    }
    if (!ascii)
        throw std::runtime_error("only ASCII PLY is supported: " + path.string());
    Points pts;
    pts.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        if (!std::getline(in, line))
            throw std::runtime_error("truncated PLY " + path.string());
        const char* s = line.c_str();
        char* end = nullptr;
        Vec3 p;
        for (int c = 0; c < 3; ++c) {
            p[c] = std::strtod(s, &end);
            if (end == s)
                throw std::runtime_error("bad PLY vertex line " + std::to_string(i) + " in " + path.string());
            s = end;
        }
        pts.push_back(p);
    }
    return pts;
}

void write_camera_json(const fs::path& path, const CameraIntrinsics& c)
{
    json j = {{"fx", c.fx}, {"fy", c.fy}, {"cx", c.cx}, {"cy", c.cy}, {"width", c.width}, {"height", c.height}};
    write_text(path, j.dump(2) + "\n");
}

CameraIntrinsics read_camera_json(const fs::path& path)
{
    if (!fs::exists(path))
        throw std::runtime_error("missing camera file " + path.string() + " (fx, fy, cx, cy, width, height)");
    const json j = read_json(path);
    CameraIntrinsics c;
    try {
        c.fx = j.at("fx");
        c.fy = j.at("fy");
        c.cx = j.at("cx");
        c.cy = j.at("cy");
        c.width = j.at("width");
        c.height = j.at("height");
    }
    catch (const json::exception& e) {
        throw std::runtime_error("camera file " + path.string() + ": " + e.what());
    }
    c.validate();
    return c;
}

void write_dataset(const fs::path& dir, const SyntheticSequence& seq)
{
    fs::create_directories(dir / "frames");
    fs::create_directories(dir / "masks");
    fs::create_directories(dir / "depth");
    fs::create_directories(dir / "gt_points");
    fs::create_directories(dir / "gt_meshes");
    write_obj(dir / "template.obj", seq.mesh.vertices, seq.mesh);
    write_png(dir / "texture.png", seq.mesh.texture);
    write_camera_json(dir / "camera.json", seq.camera);
    const ScenarioConfig& c = seq.config;
    json meta = {{"gt_point_seed", seq.gt_point_seed},
                 {"generator",
                  {{"family", to_string(c.family)},
                   {"grid_resolution", c.grid_resolution},
                   {"amplitude", c.amplitude},
                   {"frequency", c.frequency},
                   {"frame_count", c.frame_count},
                   {"camera_distance", c.camera_distance},
                   {"image_size", c.image_size},
                   {"tilt_degrees", c.tilt_degrees},
                   {"brightness_ramp", c.brightness_ramp},
                   {"seed", c.seed}}}};
    write_text(dir / "sequence.json", meta.dump(2) + "\n");
    for (std::size_t t = 0; t < seq.frames.size(); ++t) {
        const std::string name = frame_name(t + 1);
        const FrameObservation& f = seq.frames[t];
        write_png(dir / "frames" / (name + ".png"), f.rgb);
        write_png(dir / "masks" / (name + ".png"), f.mask);
        if (f.depth)
            write_float_map(dir / "depth" / (name + ".bin"), *f.depth);
        if (f.gt_points)
            write_ply(dir / "gt_points" / (name + ".ply"), *f.gt_points);
        write_obj(dir / "gt_meshes" / (name + ".obj"), seq.gt_vertices[t], seq.mesh);
    }
}

SequenceDataset load_sequence(const fs::path& dir)
{
    if (!fs::is_directory(dir))
        throw std::runtime_error("dataset directory not found: " + dir.string());
    SequenceDataset ds;
    ds.directory = dir;
    for (const char* required : {"template.obj", "texture.png"})
        if (!fs::exists(dir / required))
            throw std::runtime_error("missing " + (dir / required).string());
    ds.mesh = load_template(dir / "template.obj", dir / "texture.png");
    ds.camera = read_camera_json(dir / "camera.json");
    if (fs::exists(dir / "sequence.json"))
        ds.gt_point_seed = read_json(dir / "sequence.json").value("gt_point_seed", std::uint64_t{0});

    const fs::path frames_dir = dir / "frames", masks_dir = dir / "masks";
    if (!fs::is_directory(frames_dir))
        throw std::runtime_error("missing frames directory " + frames_dir.string());
    if (!fs::is_directory(masks_dir))
        throw std::runtime_error("missing masks directory " + masks_dir.string() +
                                 "; masks must be produced by an external segmentation step");
    auto numbered = [](const fs::path& d, const std::string& ext) {
        std::vector<std::string> stems;
        for (const auto& e : fs::directory_iterator(d))
            if (e.is_regular_file() && e.path().extension() == ext && is_numeric(e.path().stem().string()))
                stems.push_back(e.path().stem().string());
        std::sort(stems.begin(), stems.end(), [](const std::string& a, const std::string& b) {
            return std::stoull(a) < std::stoull(b);
        });
        return stems;
    };
    ds.names = numbered(frames_dir, ".png");
    const std::vector<std::string> masks = numbered(masks_dir, ".png");
    if (ds.names.empty())
        throw std::runtime_error("no frames/####.png images in " + frames_dir.string());
    if (masks.size() != ds.names.size())
        throw std::runtime_error("frame/mask count mismatch: " + std::to_string(ds.names.size()) + " frames, " +
                                 std::to_string(masks.size()) + " masks in " + dir.string());
    for (std::size_t i = 0; i < ds.names.size(); ++i)
        if (std::stoull(ds.names[i]) == (i > 0 ? std::stoull(ds.names[i - 1]) : ~0ULL))
            throw std::runtime_error("duplicate frame index " + ds.names[i]);

    const auto h = static_cast<std::size_t>(ds.camera.height), w = static_cast<std::size_t>(ds.camera.width);
    for (const std::string& name : ds.names) {
        FrameObservation f;
        const fs::path mask_path = masks_dir / (name + ".png");
        if (!fs::exists(mask_path))
            throw std::runtime_error("missing mask " + mask_path.string());
        f.rgb = read_png(frames_dir / (name + ".png"));
        if (f.rgb.dim(2) == 1) {
            Tensor rgb({f.rgb.dim(0), f.rgb.dim(1), 3});
            for (std::size_t k = 0; k < f.rgb.size(); ++k)
                for (std::size_t c = 0; c < 3; ++c)
                    rgb[k * 3 + c] = f.rgb[k];
            f.rgb = std::move(rgb);
        }
        f.mask = single_channel(read_png(mask_path));
        for (double& v : f.mask.storage())
            v = v >= 0.5 ? 1.0 : 0.0;
        const fs::path depth_bin = dir / "depth" / (name + ".bin"), depth_png = dir / "depth" / (name + ".png");
        if (fs::exists(depth_bin))
            f.depth = read_float_map(depth_bin, h, w);
        else if (fs::exists(depth_png))
            f.depth = read_png_raw(depth_png);
        const fs::path ply = dir / "gt_points" / (name + ".ply");
        if (fs::exists(ply))
            f.gt_points = read_ply(ply);
        try {
            validate_frame(f, ds.camera);
        }
        catch (const std::exception& e) {
            throw std::runtime_error("frame " + name + ": " + e.what());
        }
        ds.frames.push_back(std::move(f));
    }
    return ds;
}

// ---- configuration -----------------------------------------------------------

void RunConfig::validate() const
{
    loss.validate();
    strategy.validate();
    adam.validate();
    if (!vertex_offsets)
        NetworkConfig::from_preset(preset, seed).validate();
    if (!(render.silhouette_softness > 0.0) || !(render.blur_sigma > 0.0))
        throw std::invalid_argument("silhouette_softness and blur_sigma must be > 0");
    if (dump_renders < 0)
        throw std::invalid_argument("dump_renders must be >= 0");
}

RunConfig load_run_config(const fs::path& path)
{
    const json j = read_json(path);
    if (!j.is_object())
        throw std::runtime_error("config " + path.string() + " must be a JSON object");
    RunConfig c;
    const std::map<std::string, std::function<void(const json&)>> keys = {
        {"strategy", [&](const json& v) { c.strategy.kind = parse_strategy(v.get<std::string>()); }},
        {"preset", [&](const json& v) { c.preset = v.get<std::string>(); }},
        {"vertex_offsets", [&](const json& v) { c.vertex_offsets = v.get<bool>(); }},
        {"alpha", [&](const json& v) { c.loss.alpha = v.get<double>(); }},
        {"sigma", [&](const json& v) { c.loss.sigma = v.get<double>(); }},
        {"p", [&](const json& v) { c.loss.p = v.get<int>(); }},
        {"adaptive_loss", [&](const json& v) { c.loss.use_adaptive = v.get<bool>(); }},
        {"image_gradient", [&](const json& v) { c.loss.use_image_gradient = v.get<bool>(); }},
        {"silhouette", [&](const json& v) { c.loss.use_silhouette = v.get<bool>(); }},
        {"inext", [&](const json& v) { c.loss.inext_variant = parse_inext_variant(v.get<std::string>()); }},
        {"inext_weight",
         [&](const json& v) {
             c.loss.inext_weight_mode = InextWeightMode::Fixed;
             c.loss.inext_weight = v.get<double>();
         }},
        {"temporal_weight", [&](const json& v) { c.loss.temporal_weight = v.get<double>(); }},
        {"sobel_normalized", [&](const json& v) { c.loss.sobel_normalized = v.get<bool>(); }},
        {"warmup", [&](const json& v) { c.strategy.warmup_iters = v.get<int>(); }},
        {"iters", [&](const json& v) { c.strategy.iters_per_frame = v.get<int>(); }},
        {"window", [&](const json& v) { c.strategy.window_size = v.get<int>(); }},
        {"iters_per_window", [&](const json& v) { c.strategy.iters_per_window = v.get<int>(); }},
        {"tol", [&](const json& v) { c.strategy.tolerance = v.get<double>(); }},
        {"max_iters", [&](const json& v) { c.strategy.max_iters_per_frame = v.get<int>(); }},
        {"cold_restart", [&](const json& v) { c.strategy.cold_restart = v.get<bool>(); }},
        {"learning_rate", [&](const json& v) { c.adam.learning_rate = v.get<double>(); }},
        {"weight_decay", [&](const json& v) { c.adam.weight_decay = v.get<double>(); }},
        {"silhouette_softness", [&](const json& v) { c.render.silhouette_softness = v.get<double>(); }},
        {"blur_sigma", [&](const json& v) { c.render.blur_sigma = v.get<double>(); }},
        {"output", [&](const json& v) { c.output = v.get<std::string>(); }},
        {"seed", [&](const json& v) { c.seed = v.get<std::uint64_t>(); }},
        {"dump_renders", [&](const json& v) { c.dump_renders = v.get<int>(); }},
    };
    for (const auto& [key, value] : j.items()) {
        const auto it = keys.find(key);
        if (it == keys.end())
            throw std::runtime_error("unknown config key '" + key + "' in " + path.string());
        try {
            it->second(value);
        }
        catch (const json::exception& e) {
            throw std::runtime_error("config key '" + key + "': " + e.what());
        }
    }
    return c;
}

DeformationState initial_state(const TemplateMesh& mesh, const RunConfig& config)
{
    if (config.vertex_offsets)
        return make_offset_state(mesh);
    return make_network_state(mesh, NetworkConfig::from_preset(config.preset, config.seed));
}

// ---- reconstruction ----------------------------------------------------------

void write_losses_csv(std::ostream& out, const OptimizationRun& run, const std::vector<std::string>& names)
{
    out << "frame,iteration,rgb,silhouette,image_gradient,inextensibility,temporal,total,objective\n";
    for (const IterationRecord& r : run.ledger.iterations) {
        const LossBreakdown& b = r.breakdown;
        out << names.at(static_cast<std::size_t>(r.frame)) << ',' << r.iteration << ',' << format_number(b.rgb)
            << ',' << format_number(b.silhouette) << ',' << format_number(b.image_gradient) << ','
            << format_number(b.inextensibility) << ',' << format_number(b.temporal) << ',' << format_number(b.total)
            << ',' << format_number(r.objective) << '\n';
    }
}

OptimizationRun reconstruct(const SequenceDataset& dataset, const RunConfig& config)
{
    config.validate();
    if (config.output.empty())
        throw std::invalid_argument("reconstruct needs an output directory");
    const fs::path out = config.output;
    fs::create_directories(out / "recon");
    fs::create_directories(out / "params");

    const ReconstructionProblem problem(dataset.mesh, dataset.camera, dataset.frames, config.loss, config.render);
    const DeformationState init = initial_state(dataset.mesh, config);

    RunHooks hooks;
    if (config.dump_renders > 0) {
        fs::create_directories(out / "renders");
        hooks.render_every = config.dump_renders;
        hooks.on_render = [&](int frame, int iteration, const RenderOutput& r) {
            char suffix[32];
            std::snprintf(suffix, sizeof suffix, "_iter%05d", iteration);
            dump_render(r, out / "renders" / (dataset.names[static_cast<std::size_t>(frame)] + suffix));
        };
    }

    OptimizationRun run = run_strategy(problem, init, config.strategy, config.adam, hooks);

    for (std::size_t t = 0; t < run.vertices.size(); ++t) {
        write_obj(out / "recon" / (dataset.names[t] + ".obj"), run.vertices[t], dataset.mesh);
        save_parameters(out / "params" / (dataset.names[t] + ".bin"), run.states[t]);
    }
    {
        std::ofstream csv(out / "losses.csv", std::ios::binary);
        write_losses_csv(csv, run, dataset.names);
    }

    const StrategyConfig& s = config.strategy;
    const RunLedger& L = run.ledger;
    json frames = json::array();
    for (const FrameSummary& f : L.frames) {
        json fj = {{"frame", dataset.names[static_cast<std::size_t>(f.frame)]},
                   {"iterations", f.iterations},
                   {"initial_loss", f.initial_loss},
                   {"final_loss", f.final_loss},
                   {"selected_iteration", f.selected_iteration},
                   {"budget_capped", f.budget_capped},
                   {"failed", f.failed},
                   {"seconds", f.seconds}};
        if (f.failed)
            fj["error"] = f.error;
        frames.push_back(fj);
    }
    json summary = {
        {"strategy", to_string(s.kind)},
        {"dataset", dataset.directory.string()},
        {"frames", dataset.frames.size()},
        {"model", config.vertex_offsets ? "offsets" : config.preset},
        {"parameter_count", init.parameters.size()},
        {"seed", config.seed},
        {"budgets",
         {{"warmup", s.warmup_iters},
          {"iters_per_frame", s.iters_per_frame},
          {"window", s.window_size},
          {"iters_per_window", s.iters_per_window},
          {"tolerance", s.tolerance},
          {"max_iters_per_frame", s.max_iters_per_frame},
          {"cold_restart", s.cold_restart}}},
        {"loss",
         {{"alpha", config.loss.alpha},
          {"sigma", config.loss.sigma},
          {"p", config.loss.p},
          {"adaptive", config.loss.use_adaptive},
          {"image_gradient", config.loss.use_image_gradient},
          {"silhouette", config.loss.use_silhouette},
          {"inext", to_string(config.loss.inext_variant)},
          {"inext_weight", inextensibility_weight(dataset.mesh, config.loss)},
          {"temporal_weight", config.loss.temporal_weight}}},
        {"optimizer", {{"learning_rate", config.adam.learning_rate}, {"weight_decay", config.adam.weight_decay}}},
        {"renders", L.renders},
        {"seconds_total", L.total_seconds},
        {"seconds_excluding_warmup", L.total_seconds - L.warmup_seconds},
        {"weight_clamps", L.counters.weight_clamps},
        {"skipped_vertices", L.counters.skipped_vertices},
        {"failures", L.failure_count()},
        {"per_frame", frames},
    };
    if (s.kind == StrategyKind::FrameWise)
        summary["expected_renders"] = expected_frame_wise_renders(static_cast<int>(dataset.frames.size()),
                                                                  s.warmup_iters, s.iters_per_frame);
    write_text(out / "run.json", summary.dump(2) + "\n");
    return run;
}

// ---- evaluation --------------------------------------------------------------

EvaluationTable evaluate_meshes(const SequenceDataset& dataset, const std::vector<Points>& meshes)
{
    if (meshes.size() != dataset.frames.size())
        throw std::invalid_argument("evaluate: " + std::to_string(meshes.size()) + " meshes for " +
                                    std::to_string(dataset.frames.size()) + " frames");
    EvaluationTable table;
    double chamfer_sum = 0.0, rmse_sum = 0.0;
    std::size_t chamfer_n = 0, rmse_n = 0;
    for (std::size_t t = 0; t < meshes.size(); ++t) {
        const FrameObservation& f = dataset.frames[t];
        FrameMetrics m;
        m.name = dataset.names[t];
        if (f.gt_points && !f.gt_points->empty()) {
            const Points pred = sample_points(meshes[t], dataset.mesh.faces, f.gt_points->size(),
                                              frame_point_seed(dataset.gt_point_seed, t));
            m.chamfer_e4 = chamfer(pred, *f.gt_points) * 1e4;
            chamfer_sum += *m.chamfer_e4;
            ++chamfer_n;
        }
        if (f.depth) {
            try {
                m.depth_rmse_mm = depth_rmse(render_depth_mm(meshes[t], dataset.mesh, dataset.camera), *f.depth,
                                             f.mask);
                rmse_sum += *m.depth_rmse_mm;
                ++rmse_n;
            }
            catch (const std::exception& e) {
                table.notices.push_back("frame " + m.name + ": depth RMSE skipped (" + e.what() + ")");
            }
        }
        table.frames.push_back(m);
    }
    if (chamfer_n > 0)
        table.mean_chamfer_e4 = chamfer_sum / static_cast<double>(chamfer_n);
    else
        table.notices.push_back("no gt_points: Chamfer skipped");
    if (rmse_n > 0)
        table.mean_depth_rmse_mm = rmse_sum / static_cast<double>(rmse_n);
    else
        table.notices.push_back("no depth maps: depth RMSE skipped");
    return table;
}

EvaluationTable evaluate(const fs::path& run_directory, const SequenceDataset& dataset)
{
    std::vector<Points> meshes;
    for (const std::string& name : dataset.names) {
        const fs::path p = run_directory / "recon" / (name + ".obj");
        if (!fs::exists(p))
            throw std::runtime_error("missing reconstruction " + p.string());
        ObjMesh obj = read_obj(p);
        if (obj.vertices.size() != dataset.mesh.vertex_count())
            throw std::runtime_error(p.string() + " has " + std::to_string(obj.vertices.size()) +
                                     " vertices, template has " + std::to_string(dataset.mesh.vertex_count()));
        meshes.push_back(std::move(obj.vertices));
    }
    EvaluationTable table = evaluate_meshes(dataset, meshes);
    {
        std::ofstream csv(run_directory / "metrics.csv", std::ios::binary);
        write_metrics_csv(csv, table);
    }
    std::ofstream txt(run_directory / "summary.txt", std::ios::binary);
    write_summary(txt, table);
    return table;
}

void tune_allocator()
{
#if defined(__GLIBC__)
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

void write_metrics_csv(std::ostream& out, const EvaluationTable& table)
{
    auto cell = [](const std::optional<double>& v) { return v ? format_number(*v) : std::string(); };
    out << "frame,chamfer_e4,depth_rmse_mm\n";
    for (const FrameMetrics& m : table.frames)
        out << m.name << ',' << cell(m.chamfer_e4) << ',' << cell(m.depth_rmse_mm) << '\n';
    out << "mean," << cell(table.mean_chamfer_e4) << ',' << cell(table.mean_depth_rmse_mm) << '\n';
}

void write_summary(std::ostream& out, const EvaluationTable& table)
{
    auto cell = [](const std::optional<double>& v) {
        char buf[32];
        if (!v)
            return std::string("-");
        std::snprintf(buf, sizeof buf, "%.4f", *v);
        return std::string(buf);
    };
    char line[128];
    std::snprintf(line, sizeof line, "%-8s %14s %14s\n", "frame", "chamfer x1e4", "depth rmse mm");
    out << line;
    for (const FrameMetrics& m : table.frames) {
        std::snprintf(line, sizeof line, "%-8s %14s %14s\n", m.name.c_str(), cell(m.chamfer_e4).c_str(),
                      cell(m.depth_rmse_mm).c_str());
        out << line;
    }
    std::snprintf(line, sizeof line, "%-8s %14s %14s\n", "mean", cell(table.mean_chamfer_e4).c_str(),
                  cell(table.mean_depth_rmse_mm).c_str());
    out << line;
    for (const std::string& n : table.notices)
        out << "note: " << n << '\n';
}

} // namespace sft
