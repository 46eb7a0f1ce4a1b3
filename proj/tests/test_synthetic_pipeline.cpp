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
#include "sft/renderer.hpp"
#include "sft/synthetic.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace sft {
namespace {

namespace fs = std::filesystem;

ScenarioConfig small_scenario()
{
    ScenarioConfig c;
    c.grid_resolution = 6;
    c.image_size = 48;
    c.frame_count = 4;
    c.gt_point_count = 300;
    return c;
}

fs::path fresh_dir(const std::string& name)
{
    const fs::path d = fs::temp_directory_path() / ("framesft_pipeline_" + name);
    fs::remove_all(d);
    return d;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

double mask_area(const Tensor& mask)
{
    double s = 0.0;
    for (double v : mask.storage())
        s += v;
    return s;
}

TEST(Synthetic, ZeroAmplitudeFramesEqualTemplateRender)
{
    ScenarioConfig c = small_scenario();
    c.amplitude = 0.0;
    const SyntheticSequence s = generate_sequence(c);
    for (std::size_t t = 0; t < s.frames.size(); ++t) {
        EXPECT_EQ(s.gt_vertices[t], s.mesh.vertices);
        EXPECT_EQ(s.frames[t].rgb.storage(), s.frames[0].rgb.storage());
        EXPECT_EQ(s.frames[t].mask.storage(), s.frames[0].mask.storage());
    }
}

TEST(Synthetic, ChamferToTemplateGrowsWithTime)
{
    ScenarioConfig c = small_scenario();
    c.frame_count = 6;
    const SyntheticSequence s = generate_sequence(c);
    const Points tpl = sample_points(s.mesh.vertices, s.mesh.faces, 2000, 1);
    double previous = 0.0;
    for (const Points& v : s.gt_vertices) {
        const double d = chamfer(sample_points(v, s.mesh.faces, 2000, 1), tpl);
        EXPECT_GT(d, previous);
        previous = d;
    }
}

TEST(Synthetic, MaskAreaStaysNearTemplateArea)
{
    // The bound counts foreshortening only; a shallow bend keeps perspective
    // magnification of the lifted part inside the one-pixel boundary term.
    ScenarioConfig c = small_scenario();
    c.amplitude = 0.2;
    const SyntheticSequence s = generate_sequence(c);
    const RenderOutput tpl = rasterize(s.mesh.vertices, s.mesh, s.camera);
    double tpl_area = 0.0, perimeter = 0.0;
    const std::size_t n = static_cast<std::size_t>(c.image_size);
    for (std::size_t y = 0; y < n; ++y)
        for (std::size_t x = 0; x < n; ++x) {
            const bool in = tpl.raster.covered(y * n + x);
            tpl_area += in ? 1.0 : 0.0;
            if (in && (x == 0 || y == 0 || !tpl.raster.covered(y * n + x - 1) || !tpl.raster.covered((y - 1) * n + x)))
                perimeter += 1.0;
        }
    for (const FrameObservation& f : s.frames)
        EXPECT_LE(mask_area(f.mask), tpl_area + perimeter);
}

TEST(Synthetic, NoProjectedFaceFlips)
{
    const ScenarioConfig c = ScenarioConfig{};
    const SyntheticSequence s = generate_sequence(c);
    auto orientation = [&](const Points& v) {
        const Projection p = project(v, s.camera);
        std::vector<int> sign;
        for (const Face& f : s.mesh.faces) {
            const Vec2 a = p.pixels[static_cast<std::size_t>(f[1])] - p.pixels[static_cast<std::size_t>(f[0])];
            const Vec2 b = p.pixels[static_cast<std::size_t>(f[2])] - p.pixels[static_cast<std::size_t>(f[0])];
            sign.push_back(a.x() * b.y() - a.y() * b.x() > 0 ? 1 : -1);
        }
        return sign;
    };
    const std::vector<int> reference = orientation(s.mesh.vertices);
    for (const Points& v : s.gt_vertices)
        EXPECT_EQ(orientation(v), reference);
}

TEST(Synthetic, RegenerationIsBitIdentical)
{
    ScenarioConfig c = small_scenario();
    c.family = DeformationFamily::Compound;
    c.brightness_ramp = 0.2;
    const SyntheticSequence a = generate_sequence(c), b = generate_sequence(c);
    for (std::size_t t = 0; t < a.frames.size(); ++t) {
        EXPECT_EQ(a.frames[t].rgb.storage(), b.frames[t].rgb.storage());
        EXPECT_EQ(a.frames[t].depth->storage(), b.frames[t].depth->storage());
        EXPECT_EQ(*a.frames[t].gt_points, *b.frames[t].gt_points);
        EXPECT_EQ(a.gt_vertices[t], b.gt_vertices[t]);
    }
}

TEST(Synthetic, BrightnessRampScalesLaterFrames)
{
    ScenarioConfig c = small_scenario();
    c.amplitude = 0.0;
    c.brightness_ramp = 0.2;
    const SyntheticSequence s = generate_sequence(c);
    auto mean = [](const Tensor& t) {
        double v = 0.0;
        for (double x : t.storage())
            v += x;
        return v;
    };
    const double first = mean(s.frames.front().rgb), last = mean(s.frames.back().rgb);
    EXPECT_GT(last, first * 1.1);
}

TEST(Synthetic, SheetOutOfViewSuggestsDistance)
{
    ScenarioConfig c = small_scenario();
    c.camera_distance = 0.6;
    try {
        generate_sequence(c);
        FAIL();
    }
    catch (const GeometryError& e) {
        EXPECT_NE(std::string(e.what()).find("distance"), std::string::npos);
    }
}

TEST(Synthetic, FamilyNamesRoundTrip)
{
    for (const char* n : {"sine-bend", "corner-fold", "compound", "translate"})
        EXPECT_EQ(to_string(parse_family(n)), n);
    EXPECT_THROW(parse_family("twist"), std::invalid_argument);
}

TEST(Dataset, WriteThenLoadIsLossless)
{
    const SyntheticSequence s = generate_sequence(small_scenario());
    const fs::path d = fresh_dir("roundtrip");
    write_dataset(d, s);
    const SequenceDataset ds = load_sequence(d);
    ASSERT_EQ(ds.frames.size(), s.frames.size());
    EXPECT_EQ(ds.names.front(), "0001");
    EXPECT_EQ(ds.mesh.vertices, s.mesh.vertices);
    EXPECT_EQ(ds.mesh.faces, s.mesh.faces);
    EXPECT_EQ(ds.mesh.texture.storage(), s.mesh.texture.storage());
    EXPECT_EQ(ds.camera.fx, s.camera.fx);
    EXPECT_EQ(ds.camera.cx, s.camera.cx);
    EXPECT_EQ(ds.camera.width, s.camera.width);
    EXPECT_EQ(ds.gt_point_seed, s.gt_point_seed);
    for (std::size_t t = 0; t < s.frames.size(); ++t) {
        EXPECT_EQ(ds.frames[t].rgb.storage(), s.frames[t].rgb.storage());
        EXPECT_EQ(ds.frames[t].mask.storage(), s.frames[t].mask.storage());
        ASSERT_TRUE(ds.frames[t].depth.has_value());
        EXPECT_EQ(ds.frames[t].depth->storage(), s.frames[t].depth->storage());
        EXPECT_EQ(*ds.frames[t].gt_points, *s.frames[t].gt_points);
    }
}

TEST(Dataset, MissingMasksPointToExternalSegmentation)
{
    const SyntheticSequence s = generate_sequence(small_scenario());
    const fs::path d = fresh_dir("nomasks");
    write_dataset(d, s);
    fs::remove_all(d / "masks");
    try {
        load_sequence(d);
        FAIL();
    }
    catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("segmentation"), std::string::npos);
    }
}

TEST(Dataset, FrameMaskCountMismatchIsReported)
{
    const SyntheticSequence s = generate_sequence(small_scenario());
    const fs::path d = fresh_dir("mismatch");
    write_dataset(d, s);
    fs::remove(d / "masks" / "0004.png");
    EXPECT_THROW(load_sequence(d), std::runtime_error);
}

TEST(Dataset, MissingCameraIsReported)
{
    const SyntheticSequence s = generate_sequence(small_scenario());
    const fs::path d = fresh_dir("nocamera");
    write_dataset(d, s);
    fs::remove(d / "camera.json");
    try {
        load_sequence(d);
        FAIL();
    }
    catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("camera.json"), std::string::npos);
    }
}

TEST(Dataset, PlyRoundTrip)
{
    const fs::path d = fresh_dir("ply");
    fs::create_directories(d);
    const Points p = {{1.0 / 3.0, -2.5, 1e-7}, {4.0, 5.0, 6.0}};
    write_ply(d / "p.ply", p);
    EXPECT_EQ(read_ply(d / "p.ply"), p);
}

TEST(Evaluate, GroundTruthAgainstItselfIsZero)
{
    const SyntheticSequence s = generate_sequence(small_scenario());
    const fs::path d = fresh_dir("evalgt");
    write_dataset(d, s);
    const SequenceDataset ds = load_sequence(d);
    const EvaluationTable t = evaluate_meshes(ds, s.gt_vertices);
    ASSERT_TRUE(t.mean_chamfer_e4.has_value());
    ASSERT_TRUE(t.mean_depth_rmse_mm.has_value());
    EXPECT_EQ(*t.mean_chamfer_e4, 0.0);
    EXPECT_EQ(*t.mean_depth_rmse_mm, 0.0);
}

TEST(Evaluate, MissingGroundTruthIsSkippedWithNotice)
{
    SyntheticSequence s = generate_sequence(small_scenario());
    for (FrameObservation& f : s.frames) {
        f.gt_points.reset();
        f.depth.reset();
    }
    const fs::path d = fresh_dir("evalnogt");
    write_dataset(d, s);
    const SequenceDataset ds = load_sequence(d);
    const EvaluationTable t = evaluate_meshes(ds, s.gt_vertices);
    EXPECT_FALSE(t.mean_chamfer_e4.has_value());
    EXPECT_FALSE(t.notices.empty());
}

TEST(Config, JsonKeysOverrideDefaults)
{
    const fs::path d = fresh_dir("config");
    fs::create_directories(d);
    {
        std::ofstream out(d / "c.json");
        out << R"({"strategy": "window", "preset": "small", "alpha": 5, "inext": "literal", "window": 4,
                  "tol": 1e-5, "silhouette_softness": 0.5, "adaptive_loss": false, "seed": 9})";
    }
    const RunConfig c = load_run_config(d / "c.json");
    EXPECT_EQ(c.strategy.kind, StrategyKind::WindowWise);
    EXPECT_EQ(c.preset, "small");
    EXPECT_EQ(c.loss.alpha, 5.0);
    EXPECT_EQ(c.loss.inext_variant, InextVariant::LiteralDeterminant);
    EXPECT_EQ(c.strategy.window_size, 4);
    EXPECT_EQ(c.strategy.tolerance, 1e-5);
    EXPECT_EQ(c.render.silhouette_softness, 0.5);
    EXPECT_FALSE(c.loss.use_adaptive);
    EXPECT_EQ(c.seed, 9u);
    EXPECT_EQ(c.strategy.iters_per_frame, 200);
}

TEST(Config, UnknownKeyIsAnError)
{
    const fs::path d = fresh_dir("badconfig");
    fs::create_directories(d);
    {
        std::ofstream out(d / "c.json");
        out << R"({"learning_rat": 0.1})";
    }
    try {
        load_run_config(d / "c.json");
        FAIL();
    }
    catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("learning_rat"), std::string::npos);
    }
}

class SmallReconstruction : public ::testing::Test
{
protected:
    static void SetUpTestSuite()
    {
        data_ = fresh_dir("recon_data");
        write_dataset(data_, generate_sequence(small_scenario()));
    }
    RunConfig config(const std::string& name) const
    {
        RunConfig c;
        c.preset = "small";
        c.strategy.warmup_iters = 8;
        c.strategy.iters_per_frame = 4;
        c.output = fresh_dir(name);
        return c;
    }
    static fs::path data_;
};

fs::path SmallReconstruction::data_;

TEST_F(SmallReconstruction, WritesArtifactsThatReloadExactly)
{
    const SequenceDataset ds = load_sequence(data_);
    const RunConfig c = config("recon_a");
    const OptimizationRun run = reconstruct(ds, c);
    for (const char* f : {"losses.csv", "run.json"})
        EXPECT_TRUE(fs::exists(c.output / f)) << f;
    for (std::size_t t = 0; t < ds.frames.size(); ++t) {
        const ObjMesh m = read_obj(c.output / "recon" / (ds.names[t] + ".obj"));
        ASSERT_EQ(m.vertices.size(), run.vertices[t].size());
        for (std::size_t i = 0; i < m.vertices.size(); ++i)
            EXPECT_LT((m.vertices[i] - run.vertices[t][i]).cwiseAbs().maxCoeff(), 1e-6);
        EXPECT_EQ(m.faces, ds.mesh.faces);
        const DeformationState p = load_parameters(c.output / "params" / (ds.names[t] + ".bin"));
        EXPECT_EQ(deform(p, ds.mesh.vertices), run.vertices[t]);
    }
    const std::string csv = slurp(c.output / "losses.csv");
    EXPECT_EQ(csv.substr(0, csv.find('\n')),
              "frame,iteration,rgb,silhouette,image_gradient,inextensibility,temporal,total,objective");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 8 + 3 * 4);
}

TEST_F(SmallReconstruction, RepeatedRunsAreByteIdentical)
{
    const SequenceDataset ds = load_sequence(data_);
    const RunConfig a = config("recon_b"), b = config("recon_c");
    reconstruct(ds, a);
    reconstruct(ds, b);
    EXPECT_EQ(slurp(a.output / "losses.csv"), slurp(b.output / "losses.csv"));
    for (const std::string& n : ds.names)
        EXPECT_EQ(slurp(a.output / "recon" / (n + ".obj")), slurp(b.output / "recon" / (n + ".obj")));
}

TEST_F(SmallReconstruction, EvaluateIsDeterministic)
{
    const SequenceDataset ds = load_sequence(data_);
    const RunConfig c = config("recon_d");
    reconstruct(ds, c);
    const EvaluationTable t1 = evaluate(c.output, ds);
    const std::string first = slurp(c.output / "metrics.csv") + slurp(c.output / "summary.txt");
    const EvaluationTable t2 = evaluate(c.output, ds);
    EXPECT_EQ(first, slurp(c.output / "metrics.csv") + slurp(c.output / "summary.txt"));
    ASSERT_TRUE(t1.mean_chamfer_e4.has_value());
    EXPECT_EQ(*t1.mean_chamfer_e4, *t2.mean_chamfer_e4);
}

TEST_F(SmallReconstruction, VertexOffsetModeRuns)
{
    const SequenceDataset ds = load_sequence(data_);
    RunConfig c = config("recon_offsets");
    c.vertex_offsets = true;
    const OptimizationRun run = reconstruct(ds, c);
    EXPECT_EQ(run.ledger.failure_count(), 0);
    EXPECT_EQ(run.states.front().parameters.size(), ds.mesh.vertex_count() * 3);
}

} // namespace
} // namespace sft
