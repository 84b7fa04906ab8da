#include "avatar/sim/proximity.hpp"
#include "avatar/udf/udf.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <chrono>
#include <cmath>

using namespace avatar;
using avatar::testing::random_vec;

namespace {

// Two-level dense sampling of a template surface in (angle, height) parameters.
double sampled_distance(const GarmentTemplate& t, const Vec3& p) {
    const double r_bottom = t.kind == GarmentKind::skirt ? t.bottom_radius : t.top_radius;
    const double arc = t.kind == GarmentKind::cape ? t.arc_degrees * M_PI / 180.0 : 2.0 * M_PI;
    const double phi0 = t.kind == GarmentKind::cape ? 0.5 * M_PI - 0.5 * arc : 0.0;
    auto surface = [&](double u, double v) {
        const double phi = phi0 + u * arc;
        const double r = t.top_radius + v * (r_bottom - t.top_radius);
        return Vec3(t.center.x() + r * std::cos(phi), t.center.y() + r * std::sin(phi), t.top_z - v * t.length);
    };
    double best = std::numeric_limits<double>::infinity(), bu = 0, bv = 0;
    const int n = 400;
    for (int a = 0; a <= n; ++a)
        for (int b = 0; b <= n; ++b) {
            const double u = static_cast<double>(a) / n, v = static_cast<double>(b) / n;
            const double d = (surface(u, v) - p).norm();
            if (d < best) best = d, bu = u, bv = v;
        }
    const double w = 2.0 / n;
    for (int a = 0; a <= n; ++a)
        for (int b = 0; b <= n; ++b) {
            const double u = std::clamp(bu - w + 2 * w * a / n, 0.0, 1.0);
            const double v = std::clamp(bv - w + 2 * w * b / n, 0.0, 1.0);
            best = std::min(best, (surface(u, v) - p).norm());
        }
    return best;
}

UdfGrid plane_udf(int n) {
    UdfGrid udf;
    // The z range is offset so that no node lies on the plane.
    udf.grid = GridSpec::spanning(Eigen::AlignedBox3d(Vec3(-0.5, -0.5, -0.37), Vec3(0.5, 0.5, 0.41)), {n, n, n});
    udf.values.resize(udf.grid.num_nodes());
    for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) udf.values[udf.grid.index(i, j, k)] = std::abs(udf.grid.node(i, j, k).z());
    compute_gradients(udf);
    return udf;
}

TriangleMesh grid_sheet(int n, const Vec3& offset) {
    std::vector<Vec3> v;
    std::vector<Face> f;
    for (int j = 0; j <= n; ++j)
        for (int i = 0; i <= n; ++i) v.push_back(offset + Vec3(i * 0.1, j * 0.1, 0));
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            const int a = j * (n + 1) + i;
            f.push_back({a, a + 1, a + n + 2});
            f.push_back({a, a + n + 2, a + n + 1});
        }
    return TriangleMesh(v, f);
}

}  // namespace

TEST(UdfPoints, ExamplesAndErrors) {
    const std::vector<Vec3> cloud{Vec3::Zero()};
    const UdfGrid udf = udf_from_points(cloud, Eigen::AlignedBox3d(Vec3(0, 0, 0), Vec3(4, 4, 1)), {5, 5, 2});
    udf.validate();
    EXPECT_DOUBLE_EQ(udf.values[udf.grid.index(0, 0, 0)], 0.0);
    EXPECT_DOUBLE_EQ(udf.values[udf.grid.index(3, 4, 0)], 5.0);
    EXPECT_EQ(udf.gradients.size(), udf.values.size());
    EXPECT_THROW(udf_from_points({}, Eigen::AlignedBox3d(Vec3::Zero(), Vec3::Ones()), {4, 4, 4}), InvalidArgument);
    EXPECT_THROW(udf_from_points(cloud, Eigen::AlignedBox3d(Vec3::Zero(), Vec3::Ones()), {1, 4, 4}), InvalidArgument);
}

TEST(UdfPoints, AcceleratedMatchesBruteForce) {
    Rng rng(3);
    std::vector<Vec3> cloud;
    for (int i = 0; i < 500; ++i) cloud.push_back(random_vec(rng, -0.3, 0.3) + Vec3(0.1, 0, 0));
    cloud.push_back(Vec3(2, 2, 2));  // isolated far point
    const Eigen::AlignedBox3d box(Vec3(-1, -1, -1), Vec3(1, 1, 1));
    const UdfGrid fast = udf_from_points(cloud, box, {17, 13, 11}, true);
    const UdfGrid slow = udf_from_points(cloud, box, {17, 13, 11}, false);
    ASSERT_EQ(fast.values.size(), slow.values.size());
    for (std::size_t i = 0; i < fast.values.size(); ++i) EXPECT_EQ(fast.values[i], slow.values[i]);
}

TEST(UdfPoints, RefinementNeverIncreasesSphereError) {
    Rng rng(5);
    const double radius = 0.6;
    std::vector<Vec3> cloud;
    std::normal_distribution<double> n(0.0, 1.0);
    for (int i = 0; i < 40000; ++i) cloud.push_back(radius * Vec3(n(rng), n(rng), n(rng)).normalized());
    std::vector<Vec3> queries;
    for (int i = 0; i < 2000; ++i) queries.push_back(random_vec(rng, -0.95, 0.95));
    const Eigen::AlignedBox3d box(Vec3(-1, -1, -1), Vec3(1, 1, 1));
    double previous = std::numeric_limits<double>::infinity();
    for (int res : {9, 17, 33, 65}) {
        const UdfGrid udf = udf_from_points(cloud, box, {res, res, res});
        double worst = 0.0;
        for (const Vec3& q : queries)
            worst = std::max(worst, std::abs(trilinear(udf.grid, udf.values, q) - std::abs(q.norm() - radius)));
        EXPECT_LE(worst, previous) << "resolution " << res;
        previous = worst;
    }
}

TEST(UdfTemplate, CylinderValues) {
    GarmentTemplate t;
    t.kind = GarmentKind::tube_top;
    t.center = Vec2(0.05, -0.02);
    EXPECT_NEAR(t.distance(Vec3(0.05, -0.02, t.top_z - 0.1)), t.top_radius, 1e-15);
    EXPECT_NEAR(t.distance(Vec3(0.05 + t.top_radius, -0.02, t.top_z - 0.1)), 0.0, 1e-15);
    EXPECT_NEAR(t.distance(Vec3(0.05, -0.02 + t.top_radius, t.top_z - 0.2)), 0.0, 1e-15);
    // Beyond the open rim the distance is to the rim circle.
    EXPECT_NEAR(t.distance(Vec3(0.05 + t.top_radius, -0.02, t.top_z + 0.03)), 0.03, 1e-15);
    const UdfGrid udf = udf_from_template(t, 48);
    udf.validate();
    for (std::size_t i = 0; i < udf.values.size(); i += 97) {
        const Vec3 p = udf.grid.node(static_cast<int>(i % udf.grid.dims[0]),
                                     static_cast<int>((i / udf.grid.dims[0]) % udf.grid.dims[1]),
                                     static_cast<int>(i / (udf.grid.dims[0] * udf.grid.dims[1])));
        EXPECT_DOUBLE_EQ(udf.values[i], t.distance(p));
    }
}

TEST(UdfTemplate, MatchesDenseSampling) {
    Rng rng(11);
    GarmentTemplate skirt;
    skirt.kind = GarmentKind::skirt;
    skirt.top_z = 1.0;
    skirt.length = 0.5;
    skirt.top_radius = 0.15;
    skirt.bottom_radius = 0.3;
    GarmentTemplate cape;
    cape.kind = GarmentKind::cape;
    cape.arc_degrees = 150.0;
    for (const GarmentTemplate* t : {&skirt, &cape}) {
        const Eigen::AlignedBox3d b = t->bounds();
        std::uniform_real_distribution<double> u(0.0, 1.0);
        const int count = t == &skirt ? 1000 : 300;
        for (int i = 0; i < count; ++i) {
            const Vec3 s(u(rng), u(rng), u(rng));
            const Vec3 p = b.min() - Vec3::Constant(0.1) + s.cwiseProduct(b.sizes() + Vec3::Constant(0.2));
            EXPECT_NEAR(t->distance(p), sampled_distance(*t, p), 1e-4) << garment_kind_name(t->kind) << " " << p.transpose();
        }
    }
}

TEST(UdfTemplate, ParsingAndValidation) {
    EXPECT_EQ(parse_garment_kind("skirt"), GarmentKind::skirt);
    EXPECT_EQ(parse_garment_kind("tube_top"), GarmentKind::tube_top);
    EXPECT_EQ(parse_garment_kind(garment_kind_name(GarmentKind::cape)), GarmentKind::cape);
    EXPECT_THROW(parse_garment_kind("poncho"), InvalidArgument);
    GarmentTemplate t;
    t.length = 0.0;
    EXPECT_THROW(udf_from_template(t), InvalidArgument);
    t.length = 0.3;
    t.top_radius = -1.0;
    EXPECT_THROW(udf_from_template(t), InvalidArgument);
    t.top_radius = 0.1;
    t.kind = GarmentKind::skirt;
    t.bottom_radius = 0.0;
    EXPECT_THROW(udf_from_template(t), InvalidArgument);
    t.kind = GarmentKind::cape;
    t.arc_degrees = 400.0;
    EXPECT_THROW(udf_from_template(t), InvalidArgument);
}

TEST(UdfExtract, PlaneIsFlatAndOpen) {
    const UdfGrid udf = plane_udf(24);
    const TriangleMesh mesh = extract_open_mesh(udf);
    ASSERT_FALSE(mesh.empty());
    double worst = 0.0;
    for (const Vec3& v : mesh.vertices()) worst = std::max(worst, std::abs(v.z()));
    EXPECT_LT(worst, 0.5 * udf.cell_size());
    EXPECT_EQ(count_boundary_loops(mesh), 1);
    EXPECT_NEAR(mesh.total_area(), 1.0, 1e-9);
}

TEST(UdfExtract, CylinderTube) {
    GarmentTemplate t;
    t.kind = GarmentKind::tube_top;
    const auto start = std::chrono::steady_clock::now();
    const UdfGrid udf = udf_from_template(t, 96);
    const TriangleMesh mesh = extract_open_mesh(udf);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    EXPECT_LT(seconds, 30.0);
    ASSERT_FALSE(mesh.empty());
    EXPECT_EQ(count_boundary_loops(mesh), 2);
    const double h = udf.cell_size();
    double forward = 0.0;
    for (const Vec3& v : mesh.vertices()) forward = std::max(forward, t.distance(v));
    EXPECT_LT(forward, 2.0 * h);
    const MeshProximity prox(mesh, 2.0 * h);
    double backward = 0.0;
    for (int a = 0; a < 200; ++a)
        for (int b = 0; b <= 30; ++b) {
            const double phi = 2.0 * M_PI * a / 200.0;
            const Vec3 p(t.top_radius * std::cos(phi), t.top_radius * std::sin(phi), t.top_z - t.length * b / 30.0);
            const auto hit = prox.closest(p, 10.0 * h);
            backward = std::max(backward, hit ? hit->distance : 10.0 * h);
        }
    EXPECT_LT(backward, 2.0 * h);
}

TEST(UdfExtract, TemplatesStayNearSurface) {
    for (GarmentKind kind : {GarmentKind::skirt, GarmentKind::cape}) {
        GarmentTemplate t;
        t.kind = kind;
        t.bottom_radius = 0.24;
        const UdfGrid udf = udf_from_template(t, 64);
        const TriangleMesh mesh = extract_open_mesh(udf);
        ASSERT_FALSE(mesh.empty()) << garment_kind_name(kind);
        EXPECT_EQ(count_boundary_loops(mesh), kind == GarmentKind::skirt ? 2 : 1);
        for (const Vec3& v : mesh.vertices()) EXPECT_LT(t.distance(v), udf.grid.cell_diagonal());
        const TriangleMesh again = extract_open_mesh(udf);
        EXPECT_EQ(again.vertices(), mesh.vertices());
        EXPECT_EQ(again.faces(), mesh.faces());
    }
}

TEST(UdfExtract, FarFieldGivesEmptyMesh) {
    UdfGrid udf;
    udf.grid = GridSpec::spanning(Eigen::AlignedBox3d(Vec3::Zero(), Vec3::Ones()), {8, 8, 8});
    udf.values.resize(udf.grid.num_nodes());
    for (int k = 0; k < 8; ++k)
        for (int j = 0; j < 8; ++j)
            for (int i = 0; i < 8; ++i) udf.values[udf.grid.index(i, j, k)] = 5.0 + (udf.grid.node(i, j, k) - Vec3(0.5, 0.5, 0.5)).norm();
    compute_gradients(udf);
    EXPECT_TRUE(extract_open_mesh(udf).empty());
    udf.gradients.clear();
    EXPECT_THROW(extract_open_mesh(udf), InvalidArgument);
}

TEST(UdfCleanup, Examples) {
    const TriangleMesh sheet = grid_sheet(5, Vec3::Zero());
    const TriangleMesh same = cleanup_mesh(sheet);
    EXPECT_EQ(same.vertices(), sheet.vertices());
    EXPECT_EQ(same.faces(), sheet.faces());

    // Split one interior vertex of the sheet into two coincident copies.
    std::vector<Vec3> v = sheet.vertices();
    std::vector<Face> f = sheet.faces();
    const int target = 2 * 6 + 2;
    v.push_back(v[static_cast<std::size_t>(target)]);
    int replaced = 0;
    for (Face& face : f)
        for (int& idx : face)
            if (idx == target && replaced++ % 2 == 0) idx = static_cast<int>(v.size()) - 1;
    const TriangleMesh split(v, f);
    const TriangleMesh welded = cleanup_mesh(split);
    EXPECT_EQ(welded.num_vertices(), split.num_vertices() - 1);
    EXPECT_EQ(welded.num_faces(), split.num_faces());
    EXPECT_EQ(count_boundary_loops(welded), 1);

    // A 10-face floater is dropped; the 50-face sheet stays.
    std::vector<Vec3> cv = sheet.vertices();
    std::vector<Face> cf = sheet.faces();
    const int base = static_cast<int>(cv.size());
    const TriangleMesh strip = [] {
        std::vector<Vec3> sv;
        std::vector<Face> sf;
        for (int i = 0; i <= 5; ++i) sv.push_back(Vec3(i * 0.1, 0, 3)), sv.push_back(Vec3(i * 0.1, 0.1, 3));
        for (int i = 0; i < 5; ++i) sf.push_back({2 * i, 2 * i + 2, 2 * i + 3}), sf.push_back({2 * i, 2 * i + 3, 2 * i + 1});
        return TriangleMesh(sv, sf);
    }();
    ASSERT_EQ(strip.num_faces(), 10u);
    for (const Vec3& p : strip.vertices()) cv.push_back(p);
    for (Face face : strip.faces()) cf.push_back({face[0] + base, face[1] + base, face[2] + base});
    const TriangleMesh filtered = cleanup_mesh(TriangleMesh(cv, cf));
    EXPECT_EQ(filtered.num_faces(), sheet.num_faces());
    EXPECT_EQ(filtered.num_vertices(), sheet.num_vertices());
}

TEST(UdfCleanup, SmoothingKeepsBoundaryAndCounts) {
    TriangleMesh sheet = grid_sheet(6, Vec3::Zero());
    std::vector<Vec3> v = sheet.vertices();
    Rng rng(2);
    for (Vec3& p : v) p.z() += 0.01 * random_vec(rng).z();
    const TriangleMesh noisy = sheet.with_vertices(v);
    CleanupOptions opts;
    opts.smooth = true;
    const TriangleMesh smooth = cleanup_mesh(noisy, opts);
    ASSERT_EQ(smooth.num_vertices(), noisy.num_vertices());
    ASSERT_EQ(smooth.num_faces(), noisy.num_faces());
    double rough_before = 0.0, rough_after = 0.0;
    for (int j = 0; j <= 6; ++j)
        for (int i = 0; i <= 6; ++i) {
            const std::size_t id = static_cast<std::size_t>(j * 7 + i);
            const bool border = i == 0 || j == 0 || i == 6 || j == 6;
            if (border) {
                EXPECT_EQ(smooth.vertices()[id], noisy.vertices()[id]);
            } else {
                rough_before += std::abs(noisy.vertices()[id].z());
                rough_after += std::abs(smooth.vertices()[id].z());
            }
        }
    EXPECT_LT(rough_after, rough_before);
}
