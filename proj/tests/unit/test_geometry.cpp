#include "avatar/geometry/grid.hpp"
#include "avatar/geometry/humanoid.hpp"
#include "avatar/geometry/mesh.hpp"
#include "avatar/geometry/skinning.hpp"
#include "avatar/geometry/strands.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

using namespace avatar;
using avatar::testing::random_rotation;
using avatar::testing::random_vec;

namespace {

// Two-joint chain along x with one vertex per joint region.
SkinnedBody two_joint_body() {
    std::vector<Vec3> v = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}};
    std::vector<Face> f = {{0, 1, 2}, {1, 3, 2}};
    std::vector<Joint> joints = {{"root", -1, {0, 0, 0}}, {"child", 0, {1, 0, 0}}};
    std::vector<VertexWeights> w = {{{0, 1.0}}, {{1, 1.0}}, {{0, 0.5}, {1, 0.5}}, {{1, 1.0}}};
    return SkinnedBody(TriangleMesh(v, f), joints, w, {0});
}

const SkinnedBody& humanoid() {
    static const SkinnedBody body = make_capsule_humanoid();
    return body;
}

}  // namespace

TEST(TriangleMesh, RejectsBadIndicesAndDegenerateFaces) {
    EXPECT_THROW(TriangleMesh({{0, 0, 0}, {1, 0, 0}}, {{0, 1, 2}}), InvalidArgument);
    EXPECT_THROW(TriangleMesh({{0, 0, 0}, {1, 0, 0}, {2, 0, 0}}, {{0, 1, 2}}), InvalidArgument);
    EXPECT_THROW(TriangleMesh({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}, {{0, 0, 2}}), InvalidArgument);
}

TEST(TriangleMesh, NormalsAreUnit) {
    const SkinnedBody& body = humanoid();
    for (const Vec3& n : body.rest_mesh().normals()) EXPECT_NEAR(n.norm(), 1.0, 1e-6);
}

TEST(TriangleMesh, ObjRoundTripIsExact) {
    const TriangleMesh mesh = make_capsule_mesh({0, 0, 0}, {0, 0, 1}, 0.3, 9, 3);
    std::stringstream ss;
    write_obj(ss, mesh);
    const TriangleMesh back = read_obj(ss);
    ASSERT_EQ(back.num_vertices(), mesh.num_vertices());
    EXPECT_EQ(back.vertices(), mesh.vertices());
    EXPECT_EQ(back.faces(), mesh.faces());
}

TEST(TriangleMesh, CapsuleIsClosedAndOutward) {
    const TriangleMesh mesh = make_capsule_mesh({0, 0, 0}, {1, 0, 0}, 0.2);
    EXPECT_EQ(count_boundary_loops(mesh), 0);
    double volume = 0.0;
    for (const Face& f : mesh.faces()) volume += mesh.vertex(f[0]).dot(mesh.vertex(f[1]).cross(mesh.vertex(f[2])));
    volume /= 6.0;
    const double analytic = M_PI * 0.04 * 1.0 + 4.0 / 3.0 * M_PI * 0.008;
    EXPECT_GT(volume, 0.9 * analytic);
    EXPECT_LT(volume, analytic);
}

TEST(WeldAndCompact, MergesDuplicateVertex) {
    RawMesh raw;
    raw.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 0, 0}, {1, 1, 0}};
    raw.faces = {{0, 1, 2}, {3, 4, 2}};
    const RawMesh out = weld_and_compact(raw, 1e-7);
    EXPECT_EQ(out.vertices.size(), 4u);
    EXPECT_EQ(out.faces[1][0], 1);
}

TEST(Isosurface, SphereIsClosed) {
    const GridSpec grid = GridSpec::spanning({Vec3::Constant(-1), Vec3::Constant(1)}, {21, 21, 21});
    std::vector<double> values(grid.num_nodes());
    for (int k = 0; k < 21; ++k)
        for (int j = 0; j < 21; ++j)
            for (int i = 0; i < 21; ++i) values[grid.index(i, j, k)] = grid.node(i, j, k).norm() - 0.63;
    const RawMesh raw = weld_and_compact(extract_isosurface(grid, values), 1e-12);
    const TriangleMesh mesh(raw.vertices, raw.faces);
    EXPECT_EQ(count_boundary_loops(mesh), 0);
    for (const Vec3& v : mesh.vertices()) EXPECT_NEAR(v.norm(), 0.63, 0.1);
}

TEST(Trilinear, ReproducesLinearFunctions) {
    const GridSpec grid = GridSpec::spanning({Vec3(-1, -2, 0), Vec3(1, 2, 3)}, {5, 7, 4});
    std::vector<double> values(grid.num_nodes());
    const Vec3 a(0.3, -1.2, 2.0);
    for (int k = 0; k < 4; ++k)
        for (int j = 0; j < 7; ++j)
            for (int i = 0; i < 5; ++i) values[grid.index(i, j, k)] = a.dot(grid.node(i, j, k)) + 0.5;
    Rng rng(3);
    for (int t = 0; t < 50; ++t) {
        const Vec3 p(std::uniform_real_distribution<double>(-1, 1)(rng), std::uniform_real_distribution<double>(-2, 2)(rng),
                     std::uniform_real_distribution<double>(0, 3)(rng));
        Vec3 g;
        EXPECT_NEAR(trilinear(grid, values, p, &g), a.dot(p) + 0.5, 1e-12);
        EXPECT_LT((g - a).norm(), 1e-12);
    }
}

TEST(Humanoid, IsValidSingleClosedSurface) {
    const SkinnedBody& body = humanoid();
    EXPECT_EQ(body.num_joints(), 19u);
    EXPECT_EQ(count_boundary_loops(body.rest_mesh()), 0);
    int components = 0;
    face_components(body.rest_mesh().num_vertices(), body.rest_mesh().faces(), &components);
    EXPECT_EQ(components, 1);
    EXPECT_FALSE(body.scalp_faces().empty());
    const auto box = body.rest_mesh().bounds();
    EXPECT_NEAR(box.max().z(), 1.75 + 0.05, 0.06);
    EXPECT_LT(box.min().z(), 0.02);
}

TEST(Lbs, IdentityPoseIsExact) {
    const SkinnedBody& body = humanoid();
    const TriangleMesh posed = lbs_skin(body, BodyPose::identity(body.num_joints()));
    EXPECT_EQ(posed.vertices(), body.rest_mesh().vertices());
    EXPECT_EQ(posed.faces(), body.rest_mesh().faces());
}

TEST(Lbs, RigidTranslationOfSingleJoint) {
    std::vector<Vec3> v = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
    SkinnedBody body(TriangleMesh(v, {{0, 1, 2}}), {{"root", -1, {0, 0, 0}}},
                     {{{0, 1.0}}, {{0, 1.0}}, {{0, 1.0}}});
    BodyPose pose = BodyPose::identity(1);
    pose.root_translation = Vec3(0, 1, 0);
    const TriangleMesh posed = lbs_skin(body, pose);
    for (int i = 0; i < 3; ++i) EXPECT_LT((posed.vertex(i) - (v[i] + Vec3(0, 1, 0))).norm(), 1e-15);
}

TEST(Lbs, HalfHalfBlend) {
    const Vec3 vertex(0.3, -0.2, 0.7);
    Eigen::Isometry3d t1 = Eigen::Isometry3d::Identity(), t2 = Eigen::Isometry3d::Identity();
    t1.translation() = Vec3(1, 0, 0);
    t2.translation() = Vec3(0, 0, 1);
    const std::vector<Vec3> verts = {vertex};
    const std::vector<VertexWeights> weights = {{{0, 0.5}, {1, 0.5}}};
    const std::vector<Eigen::Isometry3d> transforms = {t1, t2};
    const auto out = blend_vertices(verts, weights, transforms);
    EXPECT_LT((out[0] - (vertex + Vec3(0.5, 0, 0.5))).norm(), 1e-15);
}

TEST(Lbs, JointCountMismatchThrows) {
    EXPECT_THROW(lbs_skin(two_joint_body(), BodyPose::identity(3)), InvalidArgument);
}

TEST(Lbs, RigidEquivariance) {
    const SkinnedBody& body = humanoid();
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        BodyPose pose = BodyPose::identity(body.num_joints());
        for (auto& q : pose.rotations) q = Quat::Identity().slerp(0.3, random_rotation(rng));
        pose.root_translation = random_vec(rng, -0.5, 0.5);
        const Quat qr = random_rotation(rng);
        const Vec3 qt = random_vec(rng, -2, 2);
        BodyPose moved = pose;
        const Vec3 rr = body.joints()[0].rest_position;
        moved.rotations[0] = qr * pose.rotations[0];
        moved.root_translation = qr * (rr + pose.root_translation) + qt - rr;
        const TriangleMesh a = lbs_skin(body, pose);
        const TriangleMesh b = lbs_skin(body, moved);
        double worst = 0.0;
        for (std::size_t i = 0; i < a.num_vertices(); ++i)
            worst = std::max(worst, (qr * a.vertex(static_cast<int>(i)) + qt - b.vertex(static_cast<int>(i))).norm());
        EXPECT_LT(worst, 1e-6);
    }
}

TEST(Lbs, ShapeBasisOffsetsRestVertices) {
    SkinnedBody body = two_joint_body();
    std::vector<Vec3> offset(4, Vec3(0, 0, 0.1));
    body.set_shape_basis({offset}, {2.0});
    const TriangleMesh posed = lbs_skin(body, BodyPose::identity(2));
    EXPECT_NEAR(posed.vertex(3).z(), 0.2, 1e-15);
}

TEST(SkinnedBody, RejectsInvalidWeightsAndTrees) {
    std::vector<Vec3> v = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
    const TriangleMesh mesh(v, {{0, 1, 2}});
    EXPECT_THROW(SkinnedBody(mesh, {{"a", -1, {}}}, {{{0, 0.9}}, {{0, 1.0}}, {{0, 1.0}}}), InvalidArgument);
    EXPECT_THROW(SkinnedBody(mesh, {{"a", -1, {}}, {"b", -1, {}}}, {{{0, 1.0}}, {{0, 1.0}}, {{0, 1.0}}}),
                 InvalidArgument);
    EXPECT_THROW(SkinnedBody(mesh, {{"a", 1, {}}, {"b", 0, {}}}, {{{0, 1.0}}, {{0, 1.0}}, {{0, 1.0}}}),
                 InvalidArgument);
}

TEST(BodyIo, JsonRoundTrip) {
    const auto dir = avatar::testing::scratch_dir("body_io");
    SkinnedBody body = two_joint_body();
    body.set_shape_basis({std::vector<Vec3>(4, Vec3(0.1, 0.2, 0.3))}, {0.7});
    write_body((dir / "body.json").string(), body);
    const SkinnedBody back = read_body((dir / "body.json").string());
    EXPECT_EQ(back.rest_mesh().vertices(), body.rest_mesh().vertices());
    EXPECT_EQ(back.joints().size(), 2u);
    EXPECT_EQ(back.scalp_faces(), body.scalp_faces());
    EXPECT_EQ(back.shaped_vertices(), body.shaped_vertices());

    PoseSequence seq;
    seq.frame_interval = 0.04;
    BodyPose p = BodyPose::identity(2);
    p.rotations[1] = Quat(Eigen::AngleAxisd(0.4, Vec3::UnitZ()));
    seq.frames = {BodyPose::identity(2), p};
    write_pose_sequence((dir / "poses.json").string(), seq);
    const PoseSequence seq_back = read_pose_sequence((dir / "poses.json").string());
    ASSERT_EQ(seq_back.frames.size(), 2u);
    EXPECT_EQ(seq_back.frame_interval, 0.04);
    EXPECT_EQ(seq_back.frames[1].rotations[1].coeffs(), p.rotations[1].coeffs());
}

TEST(PoseSequence, Validation) {
    PoseSequence seq;
    EXPECT_THROW(seq.validate(), InvalidArgument);
    seq.frames = {BodyPose::identity(2)};
    seq.frame_interval = 0.0;
    EXPECT_THROW(seq.validate(), InvalidArgument);
    BodyPose bad = BodyPose::identity(1);
    bad.rotations[0] = Quat(2, 0, 0, 0);
    EXPECT_THROW(bad.validate(), InvalidArgument);
}

TEST(Strands, BarycentricRootEvaluation) {
    const SkinnedBody body = two_joint_body();
    HairStrands strands(1, 1, {{0, 0, 0}, {0, 0, 1}}, {{0, Vec3(1, 0, 0)}});
    BodyPose pose = BodyPose::identity(2);
    pose.rotations[0] = Quat(Eigen::AngleAxisd(0.7, Vec3::UnitY()));
    pose.root_translation = Vec3(0.2, 0.1, -0.3);
    const TriangleMesh posed = lbs_skin(body, pose);
    const HairStrands out = strand_roots_follow(strands, body.rest_mesh(), posed);
    EXPECT_EQ(out.point(0, 0), posed.vertex(0));
}

TEST(Strands, IdentityAndTranslationFollow) {
    const SkinnedBody& body = humanoid();
    const ScalpRegion scalp{&body.rest_mesh(), body.scalp_faces()};
    const HairStrands strands = procedural_strand_gen(scalp, 30, 8, 0.2, {false, 0.3, 10.0, 0.5}, 5);
    const HairStrands same = strand_roots_follow(strands, body.rest_mesh(),
                                                 lbs_skin(body, BodyPose::identity(body.num_joints())));
    EXPECT_EQ(same.points(), strands.points());

    BodyPose pose = BodyPose::identity(body.num_joints());
    pose.root_translation = Vec3(0.3, -0.1, 0.05);
    const HairStrands moved = strand_roots_follow(strands, body.rest_mesh(), lbs_skin(body, pose));
    for (std::size_t i = 0; i < strands.points().size(); ++i)
        EXPECT_LT((moved.points()[i] - strands.points()[i] - pose.root_translation).norm(), 1e-9);
    EXPECT_EQ(moved.num_segments(), strands.num_segments());
}

TEST(Strands, InvalidFaceThrows) {
    const SkinnedBody body = two_joint_body();
    HairStrands strands(1, 1, {{0, 0, 0}, {0, 0, 1}}, {{5, Vec3(1, 0, 0)}});
    EXPECT_THROW(strand_roots_follow(strands, body.rest_mesh(), body.rest_mesh()), InvalidArgument);
}

TEST(ProceduralStrands, SingleStraightStrandAlongNormal) {
    const SkinnedBody& body = humanoid();
    const ScalpRegion scalp{&body.rest_mesh(), body.scalp_faces()};
    const HairStrands s = procedural_strand_gen(scalp, 1, 1, 0.1, {}, 1);
    ASSERT_EQ(s.points().size(), 2u);
    const Vec3 n = body.rest_mesh().face_normal(s.bindings()[0].face);
    EXPECT_LT(((s.point(0, 1) - s.point(0, 0)) / 0.1 - n).norm(), 1e-9);
}

TEST(ProceduralStrands, DeterministicAndExactLengths) {
    const SkinnedBody& body = humanoid();
    const ScalpRegion scalp{&body.rest_mesh(), body.scalp_faces()};
    const CurlParams curl{false, 0.4, 12.0, 0.7};
    const HairStrands a = procedural_strand_gen(scalp, 100, 32, 0.3, curl, 42);
    const HairStrands b = procedural_strand_gen(scalp, 100, 32, 0.3, curl, 42);
    EXPECT_EQ(a.points(), b.points());
    for (int s = 0; s < a.num_strands(); ++s) {
        EXPECT_NEAR(a.strand_length(s), 0.3, 1e-6);
        for (int k = 0; k < 32; ++k) EXPECT_NEAR((a.point(s, k + 1) - a.point(s, k)).norm(), 0.3 / 32, 1e-6);
    }
}

TEST(ProceduralStrands, RootsAreAreaUniform) {
    // Two faces with areas 1:3; root counts follow the area ratio.
    std::vector<Vec3> v = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {3, 0, 0}, {4, 0, 0}, {3, 3, 0}};
    const TriangleMesh mesh(v, {{0, 1, 2}, {3, 4, 5}});
    const HairStrands s = procedural_strand_gen({&mesh, {0, 1}}, 4000, 1, 0.1, {}, 9);
    int first = 0;
    for (const auto& b : s.bindings()) first += b.face == 0;
    const double expected = 1000.0, var = 4000 * 0.25 * 0.75;
    EXPECT_LT(std::abs(first - expected), 4.0 * std::sqrt(var));
}

TEST(ProceduralStrands, EmptyScalpThrows) {
    const SkinnedBody body = two_joint_body();
    EXPECT_THROW(procedural_strand_gen({&body.rest_mesh(), {}}, 1, 1, 0.1, {}, 1), InvalidArgument);
    EXPECT_THROW(procedural_strand_gen({&body.rest_mesh(), {0}}, 0, 1, 0.1, {}, 1), InvalidArgument);
}

TEST(StrandIo, BinaryRoundTrip) {
    const SkinnedBody& body = humanoid();
    const HairStrands s = procedural_strand_gen({&body.rest_mesh(), body.scalp_faces()}, 7, 4, 0.2, {}, 3);
    std::stringstream ss;
    write_strands(ss, s);
    EXPECT_EQ(ss.str().size(), 8u + 7u * 5u * 12u);
    const HairStrands back = read_strands(ss);
    EXPECT_EQ(back.num_strands(), 7);
    EXPECT_EQ(back.num_segments(), 4);
    for (std::size_t i = 0; i < s.points().size(); ++i)
        for (int c = 0; c < 3; ++c) EXPECT_EQ(back.points()[i][c], static_cast<double>(static_cast<float>(s.points()[i][c])));
}
