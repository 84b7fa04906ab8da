#include "avatar/sim/proximity.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <map>

namespace avatar {

TrianglePoint closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
    const Vec3 ab = b - a, ac = c - a, ap = p - a;
    const double d1 = ab.dot(ap), d2 = ac.dot(ap);
    if (d1 <= 0.0 && d2 <= 0.0) return {a, 0};
    const Vec3 bp = p - b;
    const double d3 = ab.dot(bp), d4 = ac.dot(bp);
    if (d3 >= 0.0 && d4 <= d3) return {b, 1};
    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return {a + (d1 / (d1 - d3)) * ab, 3};
    const Vec3 cp = p - c;
    const double d5 = ab.dot(cp), d6 = ac.dot(cp);
    if (d6 >= 0.0 && d5 <= d6) return {c, 2};
    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return {a + (d2 / (d2 - d6)) * ac, 5};
    const double va = d3 * d6 - d5 * d4;
    if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0)
        return {b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b), 4};
    const double denom = 1.0 / (va + vb + vc);
    return {a + ab * (vb * denom) + ac * (vc * denom), 6};
}

namespace {

MeshHit hit_face(const TriangleMesh& mesh, int f, const Vec3& p) {
    const Face& t = mesh.face(f);
    const TrianglePoint tp = closest_point_on_triangle(p, mesh.vertex(t[0]), mesh.vertex(t[1]), mesh.vertex(t[2]));
    return {tp.point, (p - tp.point).norm(), f, tp.feature};
}

bool better(const MeshHit& a, const MeshHit& b) {
    return a.distance < b.distance || (a.distance == b.distance && a.face < b.face);
}

}  // namespace

MeshProximity::MeshProximity(const TriangleMesh& mesh, double cell_size) : mesh_(&mesh) {
    require(cell_size > 0.0, "proximity cell size must be positive");
    require(!mesh.empty(), "proximity structure needs a non-empty mesh");
    const Eigen::AlignedBox3d box = mesh.bounds();
    const Vec3 size = box.sizes();
    cell_ = std::max(cell_size, size.maxCoeff() / 256.0);
    origin_ = box.min();
    constexpr double kMaxCells = 1 << 21;
    for (;;) {
        double total = 1.0;
        for (int a = 0; a < 3; ++a) {
            dims_[a] = std::max(1, static_cast<int>(std::ceil(size[a] / cell_)));
            total *= dims_[a];
        }
        if (total <= kMaxCells) break;
        cell_ *= 1.25;
    }
    auto cell_range = [&](const Eigen::AlignedBox3d& b, std::array<int, 3>& lo, std::array<int, 3>& hi) {
        for (int a = 0; a < 3; ++a) {
            lo[a] = std::clamp(static_cast<int>(std::floor((b.min()[a] - origin_[a]) / cell_)), 0, dims_[a] - 1);
            hi[a] = std::clamp(static_cast<int>(std::floor((b.max()[a] - origin_[a]) / cell_)), 0, dims_[a] - 1);
        }
    };
    const std::size_t ncells = static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2];
    std::vector<int> counts(ncells + 1, 0);
    std::vector<std::pair<std::array<int, 3>, std::array<int, 3>>> ranges(mesh.num_faces());
    for (std::size_t f = 0; f < mesh.num_faces(); ++f) {
        const Face& t = mesh.faces()[f];
        Eigen::AlignedBox3d b(mesh.vertex(t[0]));
        b.extend(mesh.vertex(t[1]));
        b.extend(mesh.vertex(t[2]));
        cell_range(b, ranges[f].first, ranges[f].second);
        const auto& [lo, hi] = ranges[f];
        for (int k = lo[2]; k <= hi[2]; ++k)
            for (int j = lo[1]; j <= hi[1]; ++j)
                for (int i = lo[0]; i <= hi[0]; ++i) ++counts[(static_cast<std::size_t>(k) * dims_[1] + j) * dims_[0] + i + 1];
    }
    for (std::size_t c = 0; c < ncells; ++c) counts[c + 1] += counts[c];
    cell_start_ = counts;
    cell_faces_.resize(static_cast<std::size_t>(counts[ncells]));
    std::vector<int> fill(counts.begin(), counts.end() - 1);
    for (std::size_t f = 0; f < mesh.num_faces(); ++f) {
        const auto& [lo, hi] = ranges[f];
        for (int k = lo[2]; k <= hi[2]; ++k)
            for (int j = lo[1]; j <= hi[1]; ++j)
                for (int i = lo[0]; i <= hi[0]; ++i)
                    cell_faces_[static_cast<std::size_t>(fill[(static_cast<std::size_t>(k) * dims_[1] + j) * dims_[0] + i]++)] =
                        static_cast<int>(f);
    }
}

std::optional<MeshHit> MeshProximity::closest(const Vec3& p, double max_distance) const {
    std::array<int, 3> lo{}, hi{};
    for (int a = 0; a < 3; ++a) {
        const double l = std::floor((p[a] - max_distance - origin_[a]) / cell_);
        const double h = std::floor((p[a] + max_distance - origin_[a]) / cell_);
        if (h < 0.0 || l > dims_[a] - 1) return std::nullopt;
        lo[a] = static_cast<int>(std::max(l, 0.0));
        hi[a] = static_cast<int>(std::min(h, static_cast<double>(dims_[a] - 1)));
    }
    std::optional<MeshHit> best;
    for (int k = lo[2]; k <= hi[2]; ++k)
        for (int j = lo[1]; j <= hi[1]; ++j)
            for (int i = lo[0]; i <= hi[0]; ++i) {
                const std::size_t c = (static_cast<std::size_t>(k) * dims_[1] + j) * dims_[0] + i;
                for (int s = cell_start_[c]; s < cell_start_[c + 1]; ++s) {
                    const MeshHit h = hit_face(*mesh_, cell_faces_[static_cast<std::size_t>(s)], p);
                    if (h.distance <= max_distance && (!best || better(h, *best))) best = h;
                }
            }
    return best;
}

MeshHit MeshProximity::closest_brute_force(const Vec3& p) const {
    MeshHit best = hit_face(*mesh_, 0, p);
    for (int f = 1; f < static_cast<int>(mesh_->num_faces()); ++f) {
        const MeshHit h = hit_face(*mesh_, f, p);
        if (better(h, best)) best = h;
    }
    return best;
}

BodySdf::BodySdf(const TriangleMesh& closed_mesh, int resolution, double exact_radius)
    : mesh_(closed_mesh), exact_radius_(exact_radius) {
    require(resolution >= 8, "body distance grid needs at least 8 cells per axis");
    require(exact_radius > 0.0, "exact query radius must be positive");
    proximity_ = MeshProximity(mesh_, exact_radius);

    const std::size_t nf = mesh_.num_faces();
    face_normals_.resize(nf);
    vertex_normals_.assign(mesh_.num_vertices(), Vec3::Zero());
    face_edges_.resize(nf);
    std::map<std::pair<int, int>, int> edge_ids;
    for (std::size_t f = 0; f < nf; ++f) {
        const Face& t = mesh_.faces()[f];
        const Vec3 n = mesh_.face_normal(static_cast<int>(f));
        face_normals_[f] = n;
        for (int c = 0; c < 3; ++c) {
            const Vec3& p = mesh_.vertex(t[c]);
            const Vec3 e1 = (mesh_.vertex(t[(c + 1) % 3]) - p).normalized();
            const Vec3 e2 = (mesh_.vertex(t[(c + 2) % 3]) - p).normalized();
            vertex_normals_[static_cast<std::size_t>(t[c])] += std::acos(std::clamp(e1.dot(e2), -1.0, 1.0)) * n;
            const std::pair<int, int> key = std::minmax(t[c], t[(c + 1) % 3]);
            auto [it, inserted] = edge_ids.try_emplace(key, static_cast<int>(edge_normals_.size()));
            if (inserted) edge_normals_.push_back(Vec3::Zero());
            edge_normals_[static_cast<std::size_t>(it->second)] += n;
            face_edges_[f][c] = it->second;
        }
    }

    grid_ = GridSpec::covering(mesh_.bounds(), resolution + 1, 3.0);
    const double h = grid_.max_spacing();
    const double band = 1.5 * h;
    const std::size_t nn = grid_.num_nodes();
    const double far = std::numeric_limits<double>::infinity();
    values_.assign(nn, far);
    std::vector<MeshHit> hits(nn);
    for (std::size_t f = 0; f < nf; ++f) {
        const Face& t = mesh_.faces()[f];
        Eigen::AlignedBox3d b(mesh_.vertex(t[0]));
        b.extend(mesh_.vertex(t[1]));
        b.extend(mesh_.vertex(t[2]));
        std::array<int, 3> lo{}, hi{};
        for (int a = 0; a < 3; ++a) {
            lo[a] = std::max(0, static_cast<int>(std::ceil((b.min()[a] - band - grid_.origin[a]) / grid_.spacing[a])));
            hi[a] = std::min(grid_.dims[a] - 1,
                             static_cast<int>(std::floor((b.max()[a] + band - grid_.origin[a]) / grid_.spacing[a])));
        }
        for (int k = lo[2]; k <= hi[2]; ++k)
            for (int j = lo[1]; j <= hi[1]; ++j)
                for (int i = lo[0]; i <= hi[0]; ++i) {
                    const std::size_t idx = grid_.index(i, j, k);
                    const MeshHit hit = hit_face(mesh_, static_cast<int>(f), grid_.node(i, j, k));
                    if (hit.distance <= band && hit.distance < values_[idx]) {
                        values_[idx] = hit.distance;
                        hits[idx] = hit;
                    }
                }
    }

    // Far nodes reachable from the lattice boundary without crossing the band are outside.
    std::vector<std::uint8_t> outside(nn, 0);
    std::deque<std::array<int, 3>> queue;
    const auto& d = grid_.dims;
    auto seed = [&](int i, int j, int k) {
        const std::size_t idx = grid_.index(i, j, k);
        if (!outside[idx] && std::isinf(values_[idx])) {
            outside[idx] = 1;
            queue.push_back({i, j, k});
        }
    };
    for (int k = 0; k < d[2]; ++k)
        for (int j = 0; j < d[1]; ++j)
            for (int i = 0; i < d[0]; ++i)
                if (i == 0 || j == 0 || k == 0 || i == d[0] - 1 || j == d[1] - 1 || k == d[2] - 1) seed(i, j, k);
    while (!queue.empty()) {
        const auto [i, j, k] = queue.front();
        queue.pop_front();
        if (i > 0) seed(i - 1, j, k);
        if (i + 1 < d[0]) seed(i + 1, j, k);
        if (j > 0) seed(i, j - 1, k);
        if (j + 1 < d[1]) seed(i, j + 1, k);
        if (k > 0) seed(i, j, k - 1);
        if (k + 1 < d[2]) seed(i, j, k + 1);
    }

    // Chamfer propagation of magnitudes away from the exact band.
    std::vector<double> mag(values_);
    const double w1 = h, w2 = h * std::sqrt(2.0), w3 = h * std::sqrt(3.0);
    auto relax = [&](int i, int j, int k, int dir) {
        double& m = mag[grid_.index(i, j, k)];
        for (int dk = -1; dk <= 0; ++dk)
            for (int dj = -1; dj <= 1; ++dj)
                for (int di = -1; di <= 1; ++di) {
                    if (dk == 0 && (dj > 0 || (dj == 0 && di >= 0))) continue;
                    const int ii = i + dir * di, jj = j + dir * dj, kk = k + dir * dk;
                    if (ii < 0 || jj < 0 || kk < 0 || ii >= d[0] || jj >= d[1] || kk >= d[2]) continue;
                    const int order = std::abs(di) + std::abs(dj) + std::abs(dk);
                    const double w = order == 1 ? w1 : order == 2 ? w2 : w3;
                    m = std::min(m, mag[grid_.index(ii, jj, kk)] + w);
                }
    };
    for (int k = 0; k < d[2]; ++k)
        for (int j = 0; j < d[1]; ++j)
            for (int i = 0; i < d[0]; ++i) relax(i, j, k, 1);
    for (int k = d[2] - 1; k >= 0; --k)
        for (int j = d[1] - 1; j >= 0; --j)
            for (int i = d[0] - 1; i >= 0; --i) relax(i, j, k, -1);

    for (std::size_t idx = 0; idx < nn; ++idx) {
        if (std::isinf(values_[idx])) {
            const double m = std::isinf(mag[idx]) ? band : mag[idx];
            values_[idx] = outside[idx] ? m : -m;
        } else {
            const auto [i, j, k] = std::array<int, 3>{static_cast<int>(idx % d[0]), static_cast<int>((idx / d[0]) % d[1]),
                                                      static_cast<int>(idx / (static_cast<std::size_t>(d[0]) * d[1]))};
            values_[idx] *= sign_of(grid_.node(i, j, k), hits[idx]);
        }
    }
}

Vec3 BodySdf::pseudonormal(const MeshHit& hit) const {
    const Face& t = mesh_.face(hit.face);
    if (hit.feature < 3) return vertex_normals_[static_cast<std::size_t>(t[hit.feature])];
    if (hit.feature < 6) return edge_normals_[static_cast<std::size_t>(face_edges_[hit.face][hit.feature - 3])];
    return face_normals_[static_cast<std::size_t>(hit.face)];
}

double BodySdf::sign_of(const Vec3& p, const MeshHit& hit) const {
    return (p - hit.point).dot(pseudonormal(hit)) >= 0.0 ? 1.0 : -1.0;
}

SignedDistance BodySdf::query(const Vec3& p) const {
    if (!p.allFinite()) return {std::numeric_limits<double>::quiet_NaN(), Vec3::Zero(), false};
    Vec3 grad;
    const double v = trilinear(grid_, values_, p, &grad);
    const Eigen::AlignedBox3d box = grid_.bounds();
    if (!box.contains(p)) {
        const double outside = box.exteriorDistance(p);
        return {std::max(v, 0.0) + outside, (p - box.center()).normalized(), false};
    }
    if (v <= exact_radius_ + grid_.cell_diagonal()) {
        if (const auto hit = proximity_.closest(p, exact_radius_)) {
            const double s = sign_of(p, *hit);
            Vec3 n = p - hit->point;
            if (hit->distance > 1e-12)
                n = s * n / hit->distance;
            else
                n = pseudonormal(*hit).normalized();
            return {s * hit->distance, n, true};
        }
    }
    const double g = grad.norm();
    return {v, g > 0.0 ? Vec3(grad / g) : Vec3::Zero(), false};
}

double BodySdf::penetration(const Vec3& p) const {
    if (!grid_.bounds().contains(p)) return 0.0;
    const SignedDistance sd = query(p);
    if (sd.exact) return std::max(0.0, -sd.distance);
    // Nodes off the exact band are more than 1.5 cells from the surface and store an
    // upper bound of their distance. The nearest node is within half a cell diagonal,
    // so a positive node beyond that leaves p outside, and otherwise the closest face
    // lies within |value| + half a diagonal of p.
    std::array<int, 3> n{};
    for (int a = 0; a < 3; ++a)
        n[a] = std::clamp(static_cast<int>(std::lround((p[a] - grid_.origin[a]) / grid_.spacing[a])), 0, grid_.dims[a] - 1);
    const double node = values_[grid_.index(n[0], n[1], n[2])];
    const double half_diagonal = 0.5 * grid_.cell_diagonal();
    if (node > half_diagonal) return 0.0;
    if (const auto hit = proximity_.closest(p, (std::abs(node) + half_diagonal) * (1.0 + 1e-9)))
        return std::max(0.0, -sign_of(p, *hit) * hit->distance);
    return std::max(0.0, -exact_signed_distance(p));
}

double BodySdf::exact_signed_distance(const Vec3& p) const {
    const MeshHit hit = proximity_.closest_brute_force(p);
    return sign_of(p, hit) * hit.distance;
}

}  // namespace avatar
