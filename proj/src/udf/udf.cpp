#include "avatar/udf/udf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <iterator>
#include <unordered_map>

#include <boost/geometry.hpp>
#include <boost/geometry/index/rtree.hpp>

namespace avatar {

namespace bg = boost::geometry;
namespace bgi = boost::geometry::index;
using BoostPoint = bg::model::point<double, 3, bg::cs::cartesian>;

void UdfGrid::validate() const {
    for (int a = 0; a < 3; ++a) require(grid.dims[a] >= 2, "UDF grid resolution must be >= 2 per axis");
    require(values.size() == grid.num_nodes(), "UDF value count does not match the grid");
    require(gradients.empty() || gradients.size() == grid.num_nodes(), "UDF gradient count does not match the grid");
    for (double v : values) require(v >= 0.0 && std::isfinite(v), "UDF values must be finite and non-negative");
}

void compute_gradients(UdfGrid& udf) {
    const GridSpec& g = udf.grid;
    udf.gradients.assign(g.num_nodes(), Vec3::Zero());
    parallel_for(static_cast<std::size_t>(g.dims[2]), [&](std::size_t kk) {
        const int k = static_cast<int>(kk);
        for (int j = 0; j < g.dims[1]; ++j)
            for (int i = 0; i < g.dims[0]; ++i) {
                const std::array<int, 3> n{i, j, k};
                const double u = udf.values[g.index(i, j, k)];
                Vec3 grad;
                for (int a = 0; a < 3; ++a) {
                    std::array<int, 3> lo = n, hi = n;
                    lo[a] = std::max(0, n[a] - 1);
                    hi[a] = std::min(g.dims[a] - 1, n[a] + 1);
                    const double u_lo = udf.values[g.index(lo[0], lo[1], lo[2])];
                    const double u_hi = udf.values[g.index(hi[0], hi[1], hi[2])];
                    const double h = g.spacing[a];
                    if (lo[a] < n[a] && hi[a] > n[a] && u_lo > u && u_hi > u) {
                        // A local minimum along the axis straddles the surface; the central difference
                        // would cancel, so take the steeper one-sided slope.
                        const double forward = (u_hi - u) / h, backward = (u - u_lo) / h;
                        grad[a] = forward >= -backward ? forward : backward;
                    } else {
                        grad[a] = (u_hi - u_lo) / ((hi[a] - lo[a]) * h);
                    }
                }
                udf.gradients[g.index(i, j, k)] = grad;
            }
    });
}

UdfGrid udf_from_points(std::span<const Vec3> points, const Eigen::AlignedBox3d& box, std::array<int, 3> resolution,
                        bool accelerated) {
    if (points.empty()) throw InvalidArgument("cannot build a UDF from an empty point cloud");
    for (const Vec3& p : points) require(p.allFinite(), "UDF point cloud contains a non-finite point");
    UdfGrid udf;
    udf.grid = GridSpec::spanning(box, resolution);
    const GridSpec& g = udf.grid;
    udf.values.assign(g.num_nodes(), 0.0);

    std::vector<BoostPoint> indexed;
    indexed.reserve(points.size());
    for (const Vec3& p : points) indexed.emplace_back(p.x(), p.y(), p.z());
    const bgi::rtree<BoostPoint, bgi::quadratic<16>> tree(indexed.begin(), indexed.end());

    parallel_for(static_cast<std::size_t>(g.dims[2]), [&](std::size_t kk) {
        const int k = static_cast<int>(kk);
        std::vector<BoostPoint> hit;
        for (int j = 0; j < g.dims[1]; ++j)
            for (int i = 0; i < g.dims[0]; ++i) {
                const Vec3 q = g.node(i, j, k);
                double best = std::numeric_limits<double>::infinity();
                if (!accelerated) {
                    for (const Vec3& p : points) best = std::min(best, (q - p).norm());
                } else {
                    hit.clear();
                    tree.query(bgi::nearest(BoostPoint(q.x(), q.y(), q.z()), 1), std::back_inserter(hit));
                    const BoostPoint& p = hit.front();
                    best = (q - Vec3(bg::get<0>(p), bg::get<1>(p), bg::get<2>(p))).norm();
                }
                udf.values[g.index(i, j, k)] = best;
            }
    });
    compute_gradients(udf);
    return udf;
}

GarmentKind parse_garment_kind(const std::string& name) {
    if (name == "skirt") return GarmentKind::skirt;
    if (name == "tube_top" || name == "tube-top") return GarmentKind::tube_top;
    if (name == "cape") return GarmentKind::cape;
    throw InvalidArgument("unknown garment template '" + name + "' (expected skirt, tube_top or cape)");
}

std::string garment_kind_name(GarmentKind kind) {
    switch (kind) {
        case GarmentKind::skirt: return "skirt";
        case GarmentKind::tube_top: return "tube_top";
        case GarmentKind::cape: return "cape";
    }
    return "unknown";
}

void GarmentTemplate::validate() const {
    require(length > 0.0, "garment template length must be positive");
    require(top_radius > 0.0, "garment template top radius must be positive");
    if (kind == GarmentKind::skirt) require(bottom_radius > 0.0, "skirt bottom radius must be positive");
    if (kind == GarmentKind::cape)
        require(arc_degrees > 0.0 && arc_degrees <= 360.0, "cape arc must lie in (0, 360] degrees");
    require(center.allFinite() && std::isfinite(top_z), "garment template placement must be finite");
}

namespace {

double segment_distance_2d(const Vec2& p, const Vec2& a, const Vec2& b) {
    const Vec2 ab = b - a;
    const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
    return (p - (a + t * ab)).norm();
}

double segment_distance_3d(const Vec3& p, const Vec3& a, const Vec3& b) {
    const Vec3 ab = b - a;
    const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
    return (p - (a + t * ab)).norm();
}

}  // namespace

double GarmentTemplate::distance(const Vec3& p) const {
    const double r_bottom = kind == GarmentKind::skirt ? bottom_radius : top_radius;
    const double bottom_z = top_z - length;
    const Vec2 d = p.head<2>() - center;
    const double rho = d.norm();
    // Surface of revolution: the nearest point lies in the meridian half-plane of p.
    const double meridian = segment_distance_2d(Vec2(rho, p.z()), Vec2(top_radius, top_z), Vec2(r_bottom, bottom_z));
    if (kind != GarmentKind::cape || arc_degrees >= 360.0 || rho < 1e-15) return meridian;
    const double half = 0.5 * arc_degrees * M_PI / 180.0;
    double offset = std::atan2(d.y(), d.x()) - 0.5 * M_PI;
    offset = std::remainder(offset, 2.0 * M_PI);
    if (std::abs(offset) <= half) return meridian;
    // Outside the sector: the nearest point is on one of the two straight borders.
    double best = std::numeric_limits<double>::infinity();
    for (double phi : {0.5 * M_PI - half, 0.5 * M_PI + half}) {
        const Vec3 dir(std::cos(phi), std::sin(phi), 0.0);
        const Vec3 c(center.x(), center.y(), 0.0);
        const Vec3 a = c + top_radius * dir + Vec3(0, 0, top_z);
        const Vec3 b = c + r_bottom * dir + Vec3(0, 0, bottom_z);
        best = std::min(best, segment_distance_3d(p, a, b));
    }
    return best;
}

Eigen::AlignedBox3d GarmentTemplate::bounds() const {
    const double r = std::max(top_radius, kind == GarmentKind::skirt ? bottom_radius : top_radius);
    return {Vec3(center.x() - r, center.y() - r, top_z - length), Vec3(center.x() + r, center.y() + r, top_z)};
}

UdfGrid udf_from_template(const GarmentTemplate& garment, int max_nodes, double padding_cells) {
    garment.validate();
    require(max_nodes >= 8, "template UDF needs at least 8 nodes on the longest axis");
    UdfGrid udf;
    udf.grid = GridSpec::covering(garment.bounds(), max_nodes, padding_cells);
    const GridSpec& g = udf.grid;
    udf.values.assign(g.num_nodes(), 0.0);
    parallel_for(static_cast<std::size_t>(g.dims[2]), [&](std::size_t kk) {
        const int k = static_cast<int>(kk);
        for (int j = 0; j < g.dims[1]; ++j)
            for (int i = 0; i < g.dims[0]; ++i) udf.values[g.index(i, j, k)] = garment.distance(g.node(i, j, k));
    });
    compute_gradients(udf);
    return udf;
}

TriangleMesh extract_open_mesh(const UdfGrid& udf) {
    udf.validate();
    require(udf.gradients.size() == udf.grid.num_nodes(), "open-surface extraction needs UDF gradients");
    const GridSpec& g = udf.grid;
    const double diag = g.cell_diagonal();

    struct SlabFace {
        std::array<std::uint64_t, 3> keys;
    };
    std::vector<std::vector<SlabFace>> slabs(static_cast<std::size_t>(std::max(0, g.dims[2] - 1)));
    parallel_for(slabs.size(), [&](std::size_t kk) {
        const int k = static_cast<int>(kk);
        std::vector<Face> local;
        for (int j = 0; j + 1 < g.dims[1]; ++j)
            for (int i = 0; i + 1 < g.dims[0]; ++i) {
                std::array<double, 8> u;
                std::array<Vec3, 8> grad;
                int ref = 0;
                for (int c = 0; c < 8; ++c) {
                    const auto& o = marching_cubes::kCorners[static_cast<std::size_t>(c)];
                    const std::size_t idx = g.index(i + o[0], j + o[1], k + o[2]);
                    u[static_cast<std::size_t>(c)] = udf.values[idx];
                    grad[static_cast<std::size_t>(c)] = udf.gradients[idx];
                    if (u[static_cast<std::size_t>(c)] < u[static_cast<std::size_t>(ref)]) ref = c;
                }
                if (u[static_cast<std::size_t>(ref)] >= diag) continue;
                int cube = 0;
                for (int c = 0; c < 8; ++c)
                    if (grad[static_cast<std::size_t>(c)].dot(grad[static_cast<std::size_t>(ref)]) < 0.0) cube |= 1 << c;
                if (cube == 0) continue;
                bool consistent = true;
                for (int e = 0; e < 12 && consistent; ++e) {
                    const int a = marching_cubes::kEdges[static_cast<std::size_t>(e)][0];
                    const int b = marching_cubes::kEdges[static_cast<std::size_t>(e)][1];
                    const bool change = ((cube >> a) & 1) != ((cube >> b) & 1);
                    if (!change) continue;
                    const bool crossing =
                        grad[static_cast<std::size_t>(a)].dot(grad[static_cast<std::size_t>(b)]) < 0.0 &&
                        std::min(u[static_cast<std::size_t>(a)], u[static_cast<std::size_t>(b)]) < diag;
                    consistent = crossing;
                }
                if (!consistent) continue;
                local.clear();
                marching_cubes::emit_triangles(cube, [](int e) { return e; }, local);
                for (const Face& f : local) {
                    SlabFace sf;
                    for (int c = 0; c < 3; ++c) {
                        const auto le = marching_cubes::cell_edge(i, j, k, f[static_cast<std::size_t>(c)]);
                        sf.keys[static_cast<std::size_t>(c)] = marching_cubes::edge_key(g, le[0], le[1], le[2], le[3]);
                    }
                    slabs[kk].push_back(sf);
                }
            }
    });

    RawMesh raw;
    std::unordered_map<std::uint64_t, int> vertex_of;
    auto vertex_for = [&](std::uint64_t key) {
        const auto it = vertex_of.find(key);
        if (it != vertex_of.end()) return it->second;
        const int axis = static_cast<int>(key % 3);
        const std::size_t node = key / 3;
        const int i = static_cast<int>(node % g.dims[0]);
        const int j = static_cast<int>((node / g.dims[0]) % g.dims[1]);
        const int k = static_cast<int>(node / (static_cast<std::size_t>(g.dims[0]) * g.dims[1]));
        std::array<int, 3> b{i, j, k};
        b[static_cast<std::size_t>(axis)] += 1;
        const double ua = udf.values[node];
        const double ub = udf.values[g.index(b[0], b[1], b[2])];
        const double t = ua + ub > 0.0 ? ua / (ua + ub) : 0.5;
        const Vec3 pa = g.node(i, j, k), pb = g.node(b[0], b[1], b[2]);
        const int id = static_cast<int>(raw.vertices.size());
        raw.vertices.push_back(pa + t * (pb - pa));
        vertex_of.emplace(key, id);
        return id;
    };
    for (const auto& slab : slabs)
        for (const SlabFace& f : slab) raw.faces.push_back({vertex_for(f.keys[0]), vertex_for(f.keys[1]), vertex_for(f.keys[2])});

    RawMesh clean = weld_and_compact(raw, 1e-12 * std::max(1.0, g.bounds().sizes().maxCoeff()));
    orient_consistently(clean.faces, clean.vertices.size());
    return TriangleMesh(std::move(clean.vertices), std::move(clean.faces));
}

TriangleMesh cleanup_mesh(const TriangleMesh& mesh, const CleanupOptions& options) {
    require(options.weld_radius >= 0.0, "weld radius must be non-negative");
    require(options.min_component_faces >= 0, "component size threshold must be non-negative");
    RawMesh raw{mesh.vertices(), mesh.faces()};
    RawMesh welded = weld_and_compact(raw, options.weld_radius);

    int count = 0;
    const std::vector<int> comp = face_components(welded.vertices.size(), welded.faces, &count);
    std::vector<int> sizes(static_cast<std::size_t>(count), 0);
    for (int c : comp) ++sizes[static_cast<std::size_t>(c)];
    RawMesh kept;
    kept.vertices = welded.vertices;
    for (std::size_t f = 0; f < welded.faces.size(); ++f)
        if (sizes[static_cast<std::size_t>(comp[f])] >= options.min_component_faces) kept.faces.push_back(welded.faces[f]);
    RawMesh out = weld_and_compact(kept, 0.0);

    if (options.smooth && !out.faces.empty()) {
        require(options.smooth_lambda >= 0.0 && options.smooth_lambda <= 1.0, "smoothing lambda must lie in [0, 1]");
        const TriangleMesh topo(out.vertices, out.faces);
        std::vector<std::vector<int>> neighbors(out.vertices.size());
        for (const auto& e : topo.edges()) {
            neighbors[static_cast<std::size_t>(e[0])].push_back(e[1]);
            neighbors[static_cast<std::size_t>(e[1])].push_back(e[0]);
        }
        std::unordered_map<std::uint64_t, int> edge_faces;
        for (const Face& f : out.faces)
            for (int c = 0; c < 3; ++c) {
                const auto [a, b] = std::minmax(f[static_cast<std::size_t>(c)], f[static_cast<std::size_t>((c + 1) % 3)]);
                ++edge_faces[static_cast<std::uint64_t>(a) << 32 | static_cast<std::uint32_t>(b)];
            }
        std::vector<char> boundary(out.vertices.size(), 0);
        for (const auto& [key, n] : edge_faces)
            if (n == 1) boundary[key >> 32] = boundary[key & 0xffffffffu] = 1;
        for (int it = 0; it < options.smooth_iterations; ++it) {
            std::vector<Vec3> next = out.vertices;
            for (std::size_t v = 0; v < next.size(); ++v) {
                if (boundary[v] || neighbors[v].empty()) continue;
                Vec3 avg = Vec3::Zero();
                for (int n : neighbors[v]) avg += out.vertices[static_cast<std::size_t>(n)];
                avg /= static_cast<double>(neighbors[v].size());
                next[v] = out.vertices[v] + options.smooth_lambda * (avg - out.vertices[v]);
            }
            out.vertices = std::move(next);
        }
        out = weld_and_compact(out, 0.0);
    }
    return TriangleMesh(std::move(out.vertices), std::move(out.faces));
}

}  // namespace avatar
