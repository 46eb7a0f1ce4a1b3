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
#include "oracles.hpp"

#include "sft/geometry.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

namespace sft {
namespace {

Tensor flat_texture(double r = 0.5, double g = 0.5, double b = 0.5)
{
    Tensor t({2, 2, 3});
    for (std::size_t i = 0; i < 4; ++i) {
        t[3 * i] = r;
        t[3 * i + 1] = g;
        t[3 * i + 2] = b;
    }
    return t;
}

TemplateMesh unit_square()
{
    Points v = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}};
    std::vector<Face> f = {{0, 1, 2}, {0, 2, 3}};
    std::vector<Vec2> uv = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
    return build_template(v, f, uv, f, flat_texture());
}

std::filesystem::path temp_dir(const std::string& name)
{
    const auto dir = std::filesystem::temp_directory_path() / ("framesft_geometry_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

TEST(Template, UnitSquareHasMedianEdgeOne)
{
    const TemplateMesh m = unit_square();
    EXPECT_EQ(m.vertex_count(), 4u);
    EXPECT_EQ(m.face_count(), 2u);
    EXPECT_EQ(m.edges.size(), 5u);
    EXPECT_DOUBLE_EQ(m.delta_hat, 1.0);
}

TEST(Template, TriangleOneRingHasTwoNeighbours)
{
    Points v = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
    std::vector<Face> f = {{0, 1, 2}};
    std::vector<Vec2> uv = {{0, 0}, {1, 0}, {0, 1}};
    const TemplateMesh m = build_template(v, f, uv, f, flat_texture());
    for (std::size_t i = 0; i < 3; ++i) {
        // The neighbourhood lists the centre first, then its 1-ring.
        ASSERT_EQ(m.neighborhoods[i].size(), 3u);
        EXPECT_EQ(m.neighborhoods[i][0], static_cast<int>(i));
    }
}

TEST(Template, MissingUvsAreRejected)
{
    Points v = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
    std::vector<Face> f = {{0, 1, 2}};
    try {
        build_template(v, f, {}, {}, flat_texture());
        FAIL();
    }
    catch (const GeometryError& e) {
        EXPECT_NE(std::string(e.what()).find("template not textured"), std::string::npos);
    }
}

TEST(Template, DegenerateFaceIsReportedByIndex)
{
    Points v = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {2, 0, 0}};
    std::vector<Face> f = {{0, 1, 2}, {0, 1, 3}};
    std::vector<Vec2> uv = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
    try {
        build_template(v, f, uv, f, flat_texture());
        FAIL();
    }
    catch (const GeometryError& e) {
        EXPECT_NE(std::string(e.what()).find("degenerate (zero-area) face 1"), std::string::npos);
    }
}

TEST(Template, NonManifoldEdgeIsRejected)
{
    Points v = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}};
    std::vector<Face> f = {{0, 1, 2}, {1, 0, 3}, {0, 1, 4}};
    std::vector<Vec2> uv = {{0, 0}, {1, 0}, {0, 1}, {1, 1}, {0.5, 0.5}};
    try {
        build_template(v, f, uv, f, flat_texture());
        FAIL();
    }
    catch (const GeometryError& e) {
        EXPECT_NE(std::string(e.what()).find("non-manifold edge at face 2"), std::string::npos);
    }
}

TEST(Template, QuadFaceIsFanTriangulated)
{
    const auto dir = temp_dir("quad");
    {
        std::ofstream obj(dir / "quad.obj");
        obj << "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvt 0 0\nvt 1 0\nvt 1 1\nvt 0 1\nf 1/1 2/2 3/3 4/4\n";
    }
    const ObjMesh m = read_obj(dir / "quad.obj");
    ASSERT_EQ(m.faces.size(), 2u);
    EXPECT_EQ(m.faces[0], (Face{0, 1, 2}));
    EXPECT_EQ(m.faces[1], (Face{0, 2, 3}));
}

TEST(Template, ObjRoundTripIsExact)
{
    const auto dir = temp_dir("roundtrip");
    TemplateMesh m = unit_square();
    Points moved = m.vertices;
    for (Vec3& p : moved)
        p += Vec3(0.1234567890123, -1.0 / 3.0, std::sqrt(2.0));
    write_obj(dir / "m.obj", moved, m);
    const ObjMesh back = read_obj(dir / "m.obj");
    ASSERT_EQ(back.vertices.size(), moved.size());
    for (std::size_t i = 0; i < moved.size(); ++i)
        EXPECT_EQ(back.vertices[i], moved[i]);
    EXPECT_EQ(back.faces, m.faces);
}

TEST(Covariance, CrossNeighbourhood)
{
    const Points pts = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}};
    const Mat3 c = vertex_covariance(pts);
    EXPECT_TRUE(c.isApprox(Vec3(0.5, 0.5, 0.0).asDiagonal().toDenseMatrix(), 1e-15));
}

TEST(Covariance, IdenticalPointsGiveZero)
{
    const Points pts(4, Vec3(0.3, -2.0, 5.0));
    EXPECT_EQ(vertex_covariance(pts), Mat3::Zero());
}

TEST(Covariance, FewerThanTwoPointsIsDegenerate)
{
    const Points one = {{1, 2, 3}};
    EXPECT_THROW(vertex_covariance(one), GeometryError);
}

TEST(Covariance, RotationEquivariant)
{
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        Points pts;
        for (int i = 0; i < 6; ++i)
            pts.emplace_back(n(rng), n(rng), n(rng));
        const Mat3 r = testing::random_rotation(rng);
        Points rotated;
        for (const Vec3& p : pts)
            rotated.push_back(r * p);
        const Mat3 expected = r * vertex_covariance(pts) * r.transpose();
        EXPECT_LT((vertex_covariance(rotated) - expected).cwiseAbs().maxCoeff(), 1e-10);
    }
}

TEST(Covariance, PlanarOneRingHasZeroThirdEigenvalue)
{
    const TemplateMesh m = unit_square();
    for (const Vec3& l : m.lambda0) {
        EXPECT_NEAR(l[2], 0.0, 1e-12);
        EXPECT_GE(l[0], l[1]);
        EXPECT_GE(l[1], l[2]);
    }
}

TEST(Covariance, TemplateEigenInvariantUnderRigidMotion)
{
    std::mt19937_64 rng(8);
    std::normal_distribution<double> n(0.0, 0.1);
    const int m = 5;
    Points v;
    std::vector<Vec2> uv;
    for (int j = 0; j < m; ++j)
        for (int i = 0; i < m; ++i) {
            v.emplace_back(i, j, n(rng));
            uv.emplace_back(i / 4.0, j / 4.0);
        }
    std::vector<Face> f;
    for (int j = 0; j + 1 < m; ++j)
        for (int i = 0; i + 1 < m; ++i) {
            const int a = j * m + i;
            f.push_back({a, a + 1, a + m + 1});
            f.push_back({a, a + m + 1, a + m});
        }
    const TemplateMesh base = build_template(v, f, uv, f, flat_texture());
    const Mat3 r = testing::random_rotation(rng);
    Points moved;
    for (const Vec3& p : v)
        moved.push_back(r * p + Vec3(3, -2, 7));
    const TemplateMesh rigid = build_template(moved, f, uv, f, flat_texture());
    for (std::size_t i = 0; i < base.lambda0.size(); ++i)
        EXPECT_LT((base.lambda0[i] - rigid.lambda0[i]).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Sampling, UnitSquareMean)
{
    const TemplateMesh m = unit_square();
    const Points p = sample_points(m.vertices, m.faces, 1000, 42);
    Vec3 mean = Vec3::Zero();
    for (const Vec3& q : p)
        mean += q;
    mean /= 1000.0;
    EXPECT_NEAR(mean.x(), 0.5, 0.02);
    EXPECT_NEAR(mean.y(), 0.5, 0.02);
    EXPECT_EQ(mean.z(), 0.0);
}

TEST(Sampling, SingleFaceContainment)
{
    const Points v = {{0, 0, 0}, {2, 0, 0}, {0, 1, 0}};
    const std::vector<Face> f = {{0, 1, 2}};
    for (const Vec3& q : sample_points(v, f, 500, 3)) {
        EXPECT_GE(q.x(), 0.0);
        EXPECT_GE(q.y(), 0.0);
        EXPECT_LE(q.x() / 2.0 + q.y(), 1.0 + 1e-12);
    }
}

TEST(Sampling, DeterministicPerSeed)
{
    const TemplateMesh m = unit_square();
    EXPECT_EQ(sample_points(m.vertices, m.faces, 64, 9), sample_points(m.vertices, m.faces, 64, 9));
    EXPECT_NE(sample_points(m.vertices, m.faces, 64, 9), sample_points(m.vertices, m.faces, 64, 10));
}

TEST(Sampling, AreaUniformChiSquare)
{
    // Face areas 0.5 and 1.5: expected hit ratio 1:3.
    const Points v = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {2, 0, 0}, {5, 0, 0}, {2, 1, 0}};
    const std::vector<Face> f = {{0, 1, 2}, {3, 4, 5}};
    const std::size_t n = 4000;
    std::size_t small = 0;
    for (const Vec3& q : sample_points(v, f, n, 2024))
        small += q.x() <= 1.0 ? 1 : 0;
    const double e0 = n * 0.25, e1 = n * 0.75;
    const double o0 = static_cast<double>(small), o1 = static_cast<double>(n - small);
    const double chi2 = (o0 - e0) * (o0 - e0) / e0 + (o1 - e1) * (o1 - e1) / e1;
    EXPECT_LT(chi2, 10.83); // p = 0.001, one degree of freedom
}

TEST(Chamfer, IdenticalSetsAreZero)
{
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n;
    Points a;
    for (int i = 0; i < 50; ++i)
        a.emplace_back(n(rng), n(rng), n(rng));
    EXPECT_EQ(chamfer(a, a), 0.0);
}

TEST(Chamfer, TwoSinglePoints)
{
    const Points a = {{0, 0, 0}}, b = {{1, 0, 0}};
    EXPECT_DOUBLE_EQ(chamfer(a, b), 1.0);
}

TEST(Chamfer, MatchesBruteForceAndIsSymmetric)
{
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        Points a, b;
        for (int i = 0; i < 100; ++i)
            a.emplace_back(u(rng), u(rng), u(rng));
        for (int i = 0; i < 80 + trial; ++i)
            b.emplace_back(u(rng), u(rng), u(rng));
        EXPECT_NEAR(chamfer(a, b), testing::brute_chamfer(a, b), 1e-12);
        EXPECT_NEAR(chamfer(a, b), chamfer(b, a), 1e-15);
    }
}

TEST(DepthRmse, IdenticalMapsAreZero)
{
    std::mt19937_64 rng(2);
    const Tensor d = testing::random_tensor({8, 8, 1}, rng, 500.0, 900.0);
    EXPECT_EQ(depth_rmse(d, d, Tensor({8, 8, 1}, 1.0)), 0.0);
}

TEST(DepthRmse, ConstantOffset)
{
    std::mt19937_64 rng(3);
    const Tensor gt = testing::random_tensor({8, 8, 1}, rng, 500.0, 900.0);
    Tensor pred = gt;
    for (double& v : pred.storage())
        v += 3.0;
    Tensor mask({8, 8, 1}, 0.0);
    for (std::size_t i = 0; i < 20; ++i)
        mask[i] = 1.0;
    EXPECT_NEAR(depth_rmse(pred, gt, mask), 3.0, 1e-12);
}

TEST(DepthRmse, MatchesHandLoop)
{
    std::mt19937_64 rng(5);
    const Tensor a = testing::random_tensor({16, 12, 1}, rng, 100.0, 2000.0);
    const Tensor b = testing::random_tensor({16, 12, 1}, rng, 100.0, 2000.0);
    const Tensor mask = testing::random_tensor({16, 12, 1}, rng, 0.0, 1.0);
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (mask[i] >= 0.5) {
            s += (a[i] - b[i]) * (a[i] - b[i]);
            ++n;
        }
    EXPECT_NEAR(depth_rmse(a, b, mask), std::sqrt(s / static_cast<double>(n)), 1e-9);
}

TEST(Projection, PrincipalAxis)
{
    CameraIntrinsics c{100, 100, 32, 32, 64, 64};
    const Points p = {{0, 0, 1}};
    const Projection pr = project(p, c);
    EXPECT_EQ(pr.pixels[0], Vec2(32, 32));
    EXPECT_EQ(pr.depths[0], 1.0);
}

TEST(Projection, FormulaExample)
{
    CameraIntrinsics c{100, 100, 32, 32, 64, 64};
    const Points p = {{1, 0, 2}};
    EXPECT_DOUBLE_EQ(project(p, c).pixels[0].x(), 82.0);
}

TEST(Projection, PositiveScaleInvariance)
{
    CameraIntrinsics c{120, 90, 31.5, 20.25, 64, 48};
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(-1.0, 1.0), z(0.5, 3.0), s(0.1, 10.0);
    for (int i = 0; i < 50; ++i) {
        const Points p = {{u(rng), u(rng), z(rng)}};
        const double k = s(rng);
        const Points q = {k * p[0]};
        EXPECT_LT((project(p, c).pixels[0] - project(q, c).pixels[0]).norm(), 1e-12);
    }
}

TEST(Projection, BehindCameraNamesTheVertex)
{
    CameraIntrinsics c{100, 100, 32, 32, 64, 64};
    const Points p = {{0, 0, 1}, {0, 0, -1}};
    try {
        project(p, c);
        FAIL();
    }
    catch (const GeometryError& e) {
        EXPECT_NE(std::string(e.what()).find("index 1"), std::string::npos);
    }
}

TEST(Camera, InvalidIntrinsicsAreRejected)
{
    EXPECT_THROW((CameraIntrinsics{0, 1, 1, 1, 4, 4}.validate()), GeometryError);
    EXPECT_THROW((CameraIntrinsics{1, 1, 4, 1, 4, 4}.validate()), GeometryError);
    EXPECT_NO_THROW((CameraIntrinsics{1, 1, 2, 2, 4, 4}.validate()));
}

} // namespace
} // namespace sft
