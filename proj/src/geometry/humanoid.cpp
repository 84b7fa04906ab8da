#include "avatar/geometry/humanoid.hpp"

#include "avatar/geometry/grid.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace avatar {

namespace {

double signed_volume(const std::vector<Vec3>& v, const std::vector<Face>& faces) {
    double vol = 0.0;
    for (const Face& f : faces) vol += v[f[0]].dot(v[f[1]].cross(v[f[2]]));
    return vol / 6.0;
}

void flip_all(std::vector<Face>& faces) {
    for (Face& f : faces) std::swap(f[1], f[2]);
}

double segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
    const Vec3 ab = b - a;
    const double len2 = ab.squaredNorm();
    const double t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
    return (p - (a + t * ab)).norm();
}

struct Bone {
    Vec3 a;
    Vec3 b;
    double radius;
    int joint;
};

double smooth_min(double a, double b, double k) {
    const double h = std::max(k - std::abs(a - b), 0.0) / k;
    return std::min(a, b) - h * h * k * 0.25;
}

}  // namespace

TriangleMesh make_capsule_mesh(const Vec3& a, const Vec3& b, double radius, int segments, int rings) {
    require(radius > 0.0, "capsule radius must be positive");
    require(segments >= 3 && rings >= 1, "capsule needs >= 3 segments and >= 1 ring");
    require((b - a).norm() > 1e-9, "capsule axis must have positive length");
    const Vec3 w = (b - a).normalized();
    const Vec3 u = w.unitOrthogonal();
    const Vec3 v = w.cross(u);

    std::vector<Vec3> verts;
    verts.push_back(b + radius * w);
    auto add_ring = [&](const Vec3& center, double phi) {
        for (int s = 0; s < segments; ++s) {
            const double theta = 2.0 * M_PI * s / segments;
            verts.push_back(center + radius * (std::cos(phi) * w +
                                               std::sin(phi) * (std::cos(theta) * u + std::sin(theta) * v)));
        }
    };
    for (int i = 1; i <= rings; ++i) add_ring(b, 0.5 * M_PI * i / rings);
    for (int i = 0; i < rings; ++i) add_ring(a, 0.5 * M_PI + 0.5 * M_PI * i / rings);
    const int bottom = static_cast<int>(verts.size());
    verts.push_back(a - radius * w);

    std::vector<Face> faces;
    const int total_rings = 2 * rings;
    auto ring_vertex = [&](int ring, int s) { return 1 + ring * segments + (s % segments); };
    for (int s = 0; s < segments; ++s) faces.push_back({0, ring_vertex(0, s), ring_vertex(0, s + 1)});
    for (int r = 0; r + 1 < total_rings; ++r) {
        for (int s = 0; s < segments; ++s) {
            const int p0 = ring_vertex(r, s), p1 = ring_vertex(r, s + 1);
            const int q0 = ring_vertex(r + 1, s), q1 = ring_vertex(r + 1, s + 1);
            faces.push_back({p0, q0, q1});
            faces.push_back({p0, q1, p1});
        }
    }
    for (int s = 0; s < segments; ++s)
        faces.push_back({bottom, ring_vertex(total_rings - 1, s + 1), ring_vertex(total_rings - 1, s)});
    if (signed_volume(verts, faces) < 0.0) flip_all(faces);
    return TriangleMesh(std::move(verts), std::move(faces));
}

int find_joint(const SkinnedBody& body, std::string_view name) {
    for (std::size_t j = 0; j < body.num_joints(); ++j)
        if (body.joints()[j].name == name) return static_cast<int>(j);
    throw InvalidArgument("body has no joint named '" + std::string(name) + "'");
}

SkinnedBody make_capsule_humanoid(const HumanoidParams& params) {
    require(params.height > 0.0, "humanoid height must be positive");
    require(params.cell_size > 0.0, "humanoid cell size must be positive");
    const double s = params.height / 1.75;

    std::vector<Joint> joints = {
        {"pelvis", -1, {0, 0, 0.95}},         {"spine", 0, {0, 0, 1.10}},
        {"chest", 1, {0, 0, 1.30}},           {"neck", 2, {0, 0, 1.48}},
        {"head", 3, {0, 0, 1.58}},            {"l_clavicle", 2, {0.04, 0, 1.42}},
        {"l_upperarm", 5, {0.17, 0, 1.43}},   {"l_forearm", 6, {0.44, 0, 1.43}},
        {"l_hand", 7, {0.69, 0, 1.43}},       {"r_clavicle", 2, {-0.04, 0, 1.42}},
        {"r_upperarm", 9, {-0.17, 0, 1.43}},  {"r_forearm", 10, {-0.44, 0, 1.43}},
        {"r_hand", 11, {-0.69, 0, 1.43}},     {"l_thigh", 0, {0.10, 0, 0.92}},
        {"l_shin", 13, {0.10, 0, 0.50}},      {"l_foot", 14, {0.10, 0, 0.09}},
        {"r_thigh", 0, {-0.10, 0, 0.92}},     {"r_shin", 16, {-0.10, 0, 0.50}},
        {"r_foot", 17, {-0.10, 0, 0.09}},
    };
    for (auto& j : joints) j.rest_position *= s;

    std::vector<Bone> bones = {
        {{-0.07, 0, 0.93}, {0.07, 0, 0.93}, 0.115, 0},
        {{0, 0, 0.97}, {0, 0, 1.20}, 0.12, 1},
        {{0, 0, 1.22}, {0, 0, 1.38}, 0.135, 2},
        {{0, 0, 1.46}, {0, 0, 1.58}, 0.05, 3},
        {{0, 0, 1.65}, {0, 0, 1.71}, 0.095, 4},
    };
    for (int side = 0; side < 2; ++side) {
        const double x = side == 0 ? 1.0 : -1.0;
        const int arm = side == 0 ? 5 : 9;
        const int leg = side == 0 ? 13 : 16;
        bones.push_back({{x * 0.05, 0, 1.40}, {x * 0.17, 0, 1.43}, 0.06, arm});
        bones.push_back({{x * 0.17, 0, 1.43}, {x * 0.44, 0, 1.43}, 0.05, arm + 1});
        bones.push_back({{x * 0.44, 0, 1.43}, {x * 0.69, 0, 1.43}, 0.04, arm + 2});
        bones.push_back({{x * 0.69, 0, 1.43}, {x * 0.79, 0, 1.43}, 0.035, arm + 3});
        bones.push_back({{x * 0.10, 0, 0.90}, {x * 0.10, 0, 0.50}, 0.075, leg});
        bones.push_back({{x * 0.10, 0, 0.50}, {x * 0.10, 0, 0.10}, 0.055, leg + 1});
        bones.push_back({{x * 0.10, 0.01, 0.07}, {x * 0.10, -0.13, 0.05}, 0.045, leg + 2});
    }
    for (auto& b : bones) {
        b.a *= s;
        b.b *= s;
        b.radius *= s;
    }

    const double h = params.cell_size * s;
    const double k = params.blend_radius * s;
    auto sdf = [&](const Vec3& p) {
        double d = segment_distance(p, bones[0].a, bones[0].b) - bones[0].radius;
        for (std::size_t i = 1; i < bones.size(); ++i)
            d = smooth_min(d, segment_distance(p, bones[i].a, bones[i].b) - bones[i].radius, k);
        return d;
    };

    Eigen::AlignedBox3d box;
    for (const auto& b : bones) {
        box.extend(b.a - Vec3::Constant(b.radius));
        box.extend(b.a + Vec3::Constant(b.radius));
        box.extend(b.b - Vec3::Constant(b.radius));
        box.extend(b.b + Vec3::Constant(b.radius));
    }
    GridSpec grid;
    grid.spacing = Vec3::Constant(h);
    grid.origin = box.min() - Vec3::Constant(2.0 * h);
    for (int a = 0; a < 3; ++a) grid.dims[a] = static_cast<int>(std::ceil(box.sizes()[a] / h)) + 5;

    std::vector<double> values(grid.num_nodes());
    parallel_for(static_cast<std::size_t>(grid.dims[2]), [&](std::size_t kz) {
        const int z = static_cast<int>(kz);
        for (int y = 0; y < grid.dims[1]; ++y)
            for (int x = 0; x < grid.dims[0]; ++x) values[grid.index(x, y, z)] = sdf(grid.node(x, y, z));
    });

    RawMesh raw = weld_and_compact(extract_isosurface(grid, values), 1e-9 * s);
    int count = 0;
    const std::vector<int> comp = face_components(raw.vertices.size(), raw.faces, &count);
    if (count > 1) {
        std::vector<int> sizes(count, 0);
        for (int c : comp) ++sizes[c];
        const int keep = static_cast<int>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
        RawMesh filtered{raw.vertices, {}};
        for (std::size_t f = 0; f < raw.faces.size(); ++f)
            if (comp[f] == keep) filtered.faces.push_back(raw.faces[f]);
        raw = weld_and_compact(filtered, 0.0);
    }
    orient_consistently(raw.faces, raw.vertices.size());
    if (signed_volume(raw.vertices, raw.faces) < 0.0) flip_all(raw.faces);
    TriangleMesh mesh(std::move(raw.vertices), std::move(raw.faces));

    // Inverse-distance weights over the three nearest joints' bones.
    const double eps = std::pow(0.01 * s, 4);
    std::vector<VertexWeights> weights(mesh.num_vertices());
    for (std::size_t v = 0; v < mesh.num_vertices(); ++v) {
        const Vec3& p = mesh.vertex(static_cast<int>(v));
        std::map<int, double> best;
        for (const auto& b : bones) {
            const double d = std::abs(segment_distance(p, b.a, b.b) - b.radius);
            auto it = best.find(b.joint);
            if (it == best.end() || d < it->second) best[b.joint] = d;
        }
        std::vector<std::pair<double, int>> ranked;
        for (const auto& [j, d] : best) ranked.emplace_back(d, j);
        std::sort(ranked.begin(), ranked.end());
        ranked.resize(std::min<std::size_t>(3, ranked.size()));
        double total = 0.0;
        for (const auto& [d, j] : ranked) total += 1.0 / (std::pow(d, 4) + eps);
        for (const auto& [d, j] : ranked) weights[v].push_back({j, (1.0 / (std::pow(d, 4) + eps)) / total});
        std::sort(weights[v].begin(), weights[v].end(),
                  [](const SkinWeight& x, const SkinWeight& y) { return x.joint < y.joint; });
    }

    const Vec3 head_center = 0.5 * (bones[4].a + bones[4].b);
    const double head_radius = bones[4].radius;
    std::vector<int> scalp;
    for (int f = 0; f < static_cast<int>(mesh.num_faces()); ++f) {
        const Vec3 offset = mesh.face_centroid(f) - head_center;
        if (offset.norm() > 1.5 * head_radius) continue;
        const Vec3 dir = offset.normalized();
        if (dir.z() > 0.15 || (dir.y() > 0.35 && dir.z() > -0.4)) scalp.push_back(f);
    }
    return SkinnedBody(std::move(mesh), std::move(joints), std::move(weights), std::move(scalp));
}

}  // namespace avatar
