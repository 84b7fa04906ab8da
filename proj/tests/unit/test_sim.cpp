#include "avatar/geometry/humanoid.hpp"
#include "avatar/sim/cloth.hpp"
#include "avatar/sim/hair.hpp"
#include "avatar/sim/proximity.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>

using namespace avatar;
using avatar::testing::random_vec;

namespace {

double capsule_distance(const Vec3& p, const Vec3& a, const Vec3& b, double r) {
    const Vec3 ab = b - a;
    const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
    return (p - (a + t * ab)).norm() - r;
}

// One strand of nl segments leaving the lowest face of body along dir.
HairStrands strand_from_lowest_face(const TriangleMesh& body, int nl, double length, const Vec3& dir) {
    int best = 0;
    for (int f = 1; f < static_cast<int>(body.num_faces()); ++f)
        if (body.face_centroid(f).z() < body.face_centroid(best).z()) best = f;
    RootBinding b{best, Vec3::Constant(1.0 / 3.0)};
    std::vector<Vec3> pts;
    const Vec3 root = evaluate_root(body, b);
    for (int k = 0; k <= nl; ++k) pts.push_back(root + (length * k / nl) * dir.normalized());
    return HairStrands(1, nl, pts, {b});
}

}  // namespace

TEST(Proximity, TriangleClosestPointMatchesSampling) {
    Rng rng(1);
    for (int trial = 0; trial < 50; ++trial) {
        const Vec3 a = random_vec(rng), b = random_vec(rng), c = random_vec(rng), p = random_vec(rng, -2, 2);
        const TrianglePoint tp = closest_point_on_triangle(p, a, b, c);
        // Dense barycentric lattice, boundary included.
        double best = 1e9;
        constexpr int n = 300;
        for (int i = 0; i <= n; ++i)
            for (int j = 0; i + j <= n; ++j)
                best = std::min(best, (p - (a + (double(i) / n) * (b - a) + (double(j) / n) * (c - a))).norm());
        EXPECT_LE((p - tp.point).norm(), best + 1e-12);
        EXPECT_NEAR((p - tp.point).norm(), best, 1e-2);
    }
    EXPECT_EQ(closest_point_on_triangle(Vec3(-1, -1, 0), Vec3::Zero(), Vec3::UnitX(), Vec3::UnitY()).feature, 0);
    EXPECT_EQ(closest_point_on_triangle(Vec3(0.5, -1, 0), Vec3::Zero(), Vec3::UnitX(), Vec3::UnitY()).feature, 3);
    EXPECT_EQ(closest_point_on_triangle(Vec3(0.2, 0.2, 1), Vec3::Zero(), Vec3::UnitX(), Vec3::UnitY()).feature, 6);
}

TEST(Proximity, BucketQueryMatchesBruteForce) {
    const TriangleMesh mesh = make_capsule_mesh(Vec3(0, 0, 0), Vec3(0, 0, 0.4), 0.1);
    const MeshProximity prox(mesh, 0.03);
    Rng rng(2);
    for (int i = 0; i < 500; ++i) {
        const Vec3 p = random_vec(rng, -0.2, 0.6);
        const MeshHit brute = prox.closest_brute_force(p);
        const auto hit = prox.closest(p, 0.05);
        if (brute.distance <= 0.05) {
            ASSERT_TRUE(hit.has_value());
            EXPECT_EQ(hit->face, brute.face);
            EXPECT_EQ(hit->distance, brute.distance);
        } else {
            EXPECT_FALSE(hit.has_value());
        }
    }
}

TEST(BodySdf, MatchesAnalyticCapsule) {
    const Vec3 a(0, 0, 0), b(0, 0, 0.4);
    const TriangleMesh mesh = make_capsule_mesh(a, b, 0.1, 32, 12);
    const BodySdf sdf(mesh, 48);
    Rng rng(3);
    for (int i = 0; i < 2000; ++i) {
        const Vec3 p = random_vec(rng, -0.25, 0.65);
        const double analytic = capsule_distance(p, a, b, 0.1);
        const SignedDistance q = sdf.query(p);
        // The tessellation sits inside the analytic surface by at most its sagitta.
        if (q.exact) {
            EXPECT_NEAR(q.distance, analytic, 3e-3);
            EXPECT_EQ(q.distance, sdf.exact_signed_distance(p));
        }
        if (std::abs(analytic) > 0.01) EXPECT_EQ(q.distance > 0, analytic > 0) << p.transpose();
        if (std::abs(analytic) > 0.01 && q.normal.squaredNorm() > 0) {
            const Vec3 radial = (p - (a + std::clamp(p.z() / 0.4, 0.0, 1.0) * (b - a))).normalized();
            EXPECT_GT(q.normal.dot(radial), 0.5);
        }
    }
    EXPECT_LT(sdf.query(Vec3(0, 0, 0.2)).distance, -0.05);
    EXPECT_GT(sdf.query(Vec3(5, 0, 0.2)).distance, 1.0);
}

TEST(BodySdf, PenetrationMatchesBruteForce) {
    const SkinnedBody body = make_capsule_humanoid();
    const BodySdf sdf(body.rest_mesh(), 32);
    Rng rng(11);
    const Eigen::AlignedBox3d box = sdf.grid().bounds();
    int inside = 0;
    for (int i = 0; i < 3000; ++i) {
        const Vec3 p = box.min() + random_vec(rng, 0.0, 1.0).cwiseProduct(box.sizes());
        const double brute = std::max(0.0, -sdf.exact_signed_distance(p));
        EXPECT_EQ(sdf.penetration(p), brute) << p.transpose();
        inside += brute > 0.0;
    }
    EXPECT_GT(inside, 20);
    EXPECT_EQ(sdf.penetration(box.max() + Vec3::Ones()), 0.0);
}

TEST(Cloth, DihedralGradientMatchesFiniteDifferences) {
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        std::array<Vec3, 4> x = {random_vec(rng), random_vec(rng), random_vec(rng), random_vec(rng)};
        std::array<Vec3, 4> g;
        dihedral_angle(x[0], x[1], x[2], x[3], &g);
        for (int i = 0; i < 4; ++i)
            for (int c = 0; c < 3; ++c) {
                auto p = x, m = x;
                p[static_cast<std::size_t>(i)][c] += 1e-6;
                m[static_cast<std::size_t>(i)][c] -= 1e-6;
                const double fd = (dihedral_angle(p[0], p[1], p[2], p[3]) - dihedral_angle(m[0], m[1], m[2], m[3])) / 2e-6;
                EXPECT_NEAR(g[static_cast<std::size_t>(i)][c], fd, 1e-5 * std::max(1.0, std::abs(fd)));
            }
    }
    // Flat pair is zero; folding the second triangle up gives +-90 degrees.
    const Vec3 e0(0, 0, 0), e1(1, 0, 0);
    EXPECT_NEAR(dihedral_angle(Vec3(0.5, 1, 0), Vec3(0.5, -1, 0), e0, e1), 0.0, 1e-12);
    EXPECT_NEAR(std::abs(dihedral_angle(Vec3(0.5, 1, 0), Vec3(0.5, 0, 1), e0, e1)), M_PI / 2, 1e-12);
}

TEST(Cloth, ColoringSeparatesSharedVertices) {
    const TriangleMesh sheet = make_rectangular_sheet(Vec3::Zero(), 1, 1, 6, 5);
    const ClothTopology topo = ClothTopology::from_mesh(sheet, 0.2);
    std::vector<std::array<int, 4>> verts;
    for (const auto& b : topo.bends) verts.push_back({b.o0, b.o1, b.e0, b.e1});
    const auto colors = color_constraints(sheet.num_vertices(), verts);
    std::size_t total = 0;
    for (const auto& color : colors) {
        std::set<int> seen;
        for (int c : color)
            for (int v : verts[static_cast<std::size_t>(c)]) EXPECT_TRUE(seen.insert(v).second);
        total += color.size();
    }
    EXPECT_EQ(total, verts.size());
    // Interior edges of a 6x5 grid of split quads.
    EXPECT_EQ(topo.bends.size(), sheet.edges().size() - 2 * (6 + 5));
}

TEST(Cloth, EquilibriumWithoutGravityIsStationary) {
    const TriangleMesh sheet = make_rectangular_sheet(Vec3(0, 0, 1.0), 0.4, 0.3, 8, 6);
    const TriangleMesh body = make_capsule_mesh(Vec3(0, 0, 0), Vec3(0, 0, 0.3), 0.1);
    ClothSettings settings;
    settings.gravity = Vec3::Zero();
    const std::vector<TriangleMesh> bodies(10, body);
    const auto frames = simulate_garment(sheet, bodies, {}, settings);
    ASSERT_EQ(frames.size(), 10u);
    for (const auto& f : frames) {
        EXPECT_EQ(f.faces(), sheet.faces());
        for (std::size_t i = 0; i < sheet.num_vertices(); ++i) EXPECT_LT((f.vertices()[i] - sheet.vertices()[i]).norm(), 1e-6);
    }
}

TEST(Cloth, FreeFallFollowsBallisticCurve) {
    const TriangleMesh sheet = make_rectangular_sheet(Vec3(0, 0, 5.0), 0.4, 0.3, 8, 6);
    const TriangleMesh body = make_capsule_mesh(Vec3(0, 0, 0), Vec3(0, 0, 0.3), 0.1);
    const auto frames = simulate_garment(sheet, std::vector<TriangleMesh>(31, body));
    const double z0 = sheet.centroid().z();
    for (std::size_t t = 1; t < frames.size(); ++t) {
        const double time = t / 60.0;
        const double expected = 0.5 * 9.81 * time * time;
        const double fallen = z0 - frames[t].centroid().z();
        EXPECT_NEAR(fallen, expected, 0.01 * expected) << "frame " << t;
    }
}

TEST(Cloth, TwoParticleEdgeConverges) {
    ClothTopology topo;
    topo.rest_positions = {Vec3(0, 0, 0), Vec3(1, 0, 0)};
    topo.inverse_mass = {1.0, 1.0};
    topo.edges = {{0, 1, 1.0}};
    ClothSettings settings;
    settings.gravity = Vec3::Zero();
    settings.iterations = 1;
    ClothSolver solver(topo, {}, settings);
    solver.set_positions({Vec3(0, 0, 0), Vec3(1.1, 0, 0)});
    double previous = 0.1;
    for (int s = 0; s < settings.substeps; ++s) {
        solver.substep(nullptr);
        const double err = std::abs((solver.positions()[1] - solver.positions()[0]).norm() - 1.0);
        EXPECT_LE(err, previous);
        previous = err;
    }
    EXPECT_LT(previous, 1e-3);
}

TEST(Cloth, DrapeOnCapsuleStaysOutside) {
    // Sheet dropped onto a horizontal capsule.
    const TriangleMesh body = make_capsule_mesh(Vec3(-0.3, 0, 0), Vec3(0.3, 0, 0), 0.08, 24, 8);
    const TriangleMesh sheet = make_rectangular_sheet(Vec3(0, 0, 0.12), 0.5, 0.5, 16, 16);
    const ClothMaterial material;
    const auto frames = simulate_garment(sheet, std::vector<TriangleMesh>(60, body), material);
    const BodySdf sdf(body);
    ClothSolver check(ClothTopology::from_mesh(sheet, material.density), material, {});
    for (std::size_t t = 0; t < frames.size(); t += 10) EXPECT_LE(max_penetration(frames[t], sdf), 2e-3);
    check.set_positions(frames.back().vertices());
    EXPECT_LT(check.max_edge_strain(), 0.05);
    // The sheet hangs over the capsule.
    EXPECT_LT(frames.back().bounds().min().z(), 0.0);
}

TEST(Cloth, DeterministicAndValidated) {
    const TriangleMesh body = make_capsule_mesh(Vec3(-0.3, 0, 0), Vec3(0.3, 0, 0), 0.08);
    const TriangleMesh sheet = make_rectangular_sheet(Vec3(0, 0, 0.1), 0.3, 0.3, 6, 6);
    const std::vector<TriangleMesh> bodies(5, body);
    const auto a = simulate_garment(sheet, bodies), b = simulate_garment(sheet, bodies);
    for (std::size_t t = 0; t < a.size(); ++t) EXPECT_EQ(a[t].vertices(), b[t].vertices());
    ClothSettings bad;
    bad.dt = 0;
    EXPECT_THROW(simulate_garment(sheet, bodies, {}, bad), InvalidArgument);
    EXPECT_THROW(simulate_garment(sheet, std::vector<TriangleMesh>{}), InvalidArgument);
    ClothSettings wild;
    wild.gravity = Vec3(0, 0, -1e308);
    try {
        simulate_garment(sheet, std::vector<TriangleMesh>(400, body), {}, wild);
        FAIL() << "expected a simulation error";
    } catch (const SimulationError& e) {
        EXPECT_GT(e.frame(), 0);
        EXPECT_NE(std::string(e.what()).find(std::to_string(e.frame())), std::string::npos);
    }
}

TEST(Cloth, AttachedRingFollowsBody) {
    // Vertical sheet in front of a standing capsule, its top row pinned to the body.
    const TriangleMesh body = make_capsule_mesh(Vec3(0, 0, 0.6), Vec3(0, 0, 1.2), 0.1, 24, 8);
    const TriangleMesh flat = make_rectangular_sheet(Vec3::Zero(), 0.2, 0.3, 8, 12);
    std::vector<Vec3> v = flat.vertices();
    for (Vec3& p : v) p = Vec3(p.x(), -0.11, 1.0 + p.y());
    const TriangleMesh sheet = flat.with_vertices(v);

    const std::vector<int> top = top_boundary_vertices(sheet, 1e-6);
    ASSERT_EQ(top.size(), 9u);
    for (int i : top) EXPECT_NEAR(sheet.vertex(i).z(), 1.15, 1e-12);
    const auto pins = attach_to_body(sheet, top, body);
    for (const ClothAttachment& a : pins)
        EXPECT_LT((attachment_position(a, body) - sheet.vertex(a.vertex)).norm(), 1e-12);

    GarmentSimulation sim(sheet, {}, {}, pins);
    for (int t = 0; t < 20; ++t) {
        std::vector<Vec3> moved = body.vertices();
        for (Vec3& p : moved) p += Vec3(0.01 * t, 0, 0.002 * t);
        const TriangleMesh posed = body.with_vertices(moved);
        const TriangleMesh g = sim.advance(posed, BodySdf(posed));
        for (const ClothAttachment& a : pins)
            EXPECT_LT((g.vertex(a.vertex) - attachment_position(a, posed)).norm(), 1e-12) << "frame " << t;
        if (t == 19) EXPECT_GT(g.bounds().center().x(), 0.1);
    }
    EXPECT_THROW(top_boundary_vertices(sheet, -1.0), InvalidArgument);
}

TEST(Hair, StaticWithoutGravity) {
    const TriangleMesh body = make_capsule_mesh(Vec3(0, 0, 0), Vec3(0, 0, 0.1), 0.05);
    const HairStrands h0 = strand_from_lowest_face(body, 8, 0.2, Vec3(1, 0.2, -0.3));
    HairParams params;
    params.gravity = Vec3::Zero();
    const std::vector<TriangleMesh> bodies(20, body), garments(20);
    const auto frames = simulate_hair(h0, body, bodies, garments, params);
    ASSERT_EQ(frames.size(), 20u);
    for (const auto& f : frames)
        for (std::size_t i = 0; i < h0.points().size(); ++i) EXPECT_LT((f.points()[i] - h0.points()[i]).norm(), 1e-6);
}

TEST(Hair, PinnedStrandHangsStraightDown) {
    const TriangleMesh body = make_capsule_mesh(Vec3(0, 0, 0), Vec3(0, 0, 0.1), 0.05);
    const HairStrands h0 = strand_from_lowest_face(body, 10, 0.25, Vec3(1, 0, 0));
    const std::vector<TriangleMesh> bodies(121, body), garments(121);
    const auto frames = simulate_hair(h0, body, bodies, garments);
    const HairStrands& last = frames.back();
    for (int k = 0; k < last.num_segments(); ++k) {
        const Vec3 d = (last.point(0, k + 1) - last.point(0, k)).normalized();
        EXPECT_LT(std::acos(std::clamp(-d.z(), -1.0, 1.0)) * 180.0 / M_PI, 1.0) << "segment " << k;
    }
    for (const auto& f : frames) {
        EXPECT_LT(max_segment_drift(f, h0), 1e-3);
        EXPECT_EQ(f.point(0, 0), evaluate_root(body, h0.bindings()[0]));
    }
}

TEST(Hair, RootsFollowMovingBodyExactly) {
    const TriangleMesh body = make_capsule_mesh(Vec3(0, 0, 0), Vec3(0, 0, 0.1), 0.05);
    const HairStrands h0 = strand_from_lowest_face(body, 6, 0.15, Vec3(0.3, 0, -1));
    std::vector<TriangleMesh> bodies, garments(30);
    for (int t = 0; t < 30; ++t) {
        std::vector<Vec3> v = body.vertices();
        for (Vec3& p : v) p += Vec3(0.01 * t, 0, 0.005 * t);
        bodies.push_back(body.with_vertices(v));
    }
    const auto frames = simulate_hair(h0, body, bodies, garments);
    for (std::size_t t = 0; t < frames.size(); ++t) {
        EXPECT_EQ(frames[t].point(0, 0), evaluate_root(bodies[t], h0.bindings()[0]));
        EXPECT_LT(max_segment_drift(frames[t], h0), 1e-3);
        const BodySdf sdf(bodies[t]);
        for (const Vec3& p : frames[t].points()) EXPECT_GT(sdf.query(p).distance, -2e-3);
    }
}

TEST(Hair, GarmentPushesPointsOut) {
    const TriangleMesh body = make_capsule_mesh(Vec3(0, 0, 0), Vec3(0, 0, 0.1), 0.05);
    const HairStrands h0 = strand_from_lowest_face(body, 10, 0.3, Vec3(1, 0, 0));
    // Horizontal sheet under the body catches the falling strand.
    const TriangleMesh floor = make_rectangular_sheet(Vec3(0.1, 0, -0.15), 0.8, 0.8, 8, 8);
    const std::vector<TriangleMesh> bodies(60, body), garments(60, floor);
    const auto frames = simulate_hair(h0, body, bodies, garments);
    for (const Vec3& p : frames.back().points()) EXPECT_GT(p.z(), -0.15 - 1e-3);
}

TEST(Hair, Errors) {
    const TriangleMesh body = make_capsule_mesh(Vec3(0, 0, 0), Vec3(0, 0, 0.1), 0.05);
    const HairStrands h0 = strand_from_lowest_face(body, 4, 0.1, Vec3(1, 0, 0));
    EXPECT_THROW(simulate_hair(h0, body, std::vector<TriangleMesh>(3, body), std::vector<TriangleMesh>(2)), InvalidArgument);
    const HairStrands unbound(1, 4, h0.points());
    EXPECT_THROW(simulate_hair(unbound, body, std::vector<TriangleMesh>(2, body), std::vector<TriangleMesh>(2)),
                 InvalidArgument);
}
