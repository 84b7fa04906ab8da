#include "avatar/geometry/mesh.hpp"

#include "text_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <queue>
#include <sstream>
#include <unordered_map>

namespace avatar {

Mat3 triangle_basis(const Vec3& v0, const Vec3& v1, const Vec3& v2) {
    const Vec3 e1 = (v1 - v0).normalized();
    const Vec3 n = (v1 - v0).cross(v2 - v0).normalized();
    Mat3 r;
    r.col(0) = e1;
    r.col(1) = n;
    r.col(2) = e1.cross(n);
    return r;
}

double triangle_area(const Vec3& v0, const Vec3& v1, const Vec3& v2) {
    return 0.5 * (v1 - v0).cross(v2 - v0).norm();
}

TriangleMesh::TriangleMesh(std::vector<Vec3> vertices, std::vector<Face> faces)
    : vertices_(std::move(vertices)), faces_(std::move(faces)) {
    const auto n = static_cast<int>(vertices_.size());
    for (std::size_t f = 0; f < faces_.size(); ++f) {
        const Face& tri = faces_[f];
        for (int idx : tri) {
            if (idx < 0 || idx >= n)
                throw InvalidArgument("face " + std::to_string(f) + " references vertex " +
                                      std::to_string(idx) + " of " + std::to_string(n));
        }
        if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2])
            throw InvalidArgument("face " + std::to_string(f) + " repeats a vertex");
        if (triangle_area(vertices_[tri[0]], vertices_[tri[1]], vertices_[tri[2]]) <= kDegenerateArea)
            throw InvalidArgument("face " + std::to_string(f) + " is degenerate");
    }
    for (const auto& v : vertices_)
        if (!v.allFinite()) throw InvalidArgument("mesh has a non-finite vertex");
    compute_normals();
}

TriangleMesh TriangleMesh::with_vertices(std::vector<Vec3> vertices) const {
    require(vertices.size() == vertices_.size(), "with_vertices: vertex count mismatch");
    TriangleMesh out;
    out.vertices_ = std::move(vertices);
    out.faces_ = faces_;
    out.compute_normals();
    return out;
}

void TriangleMesh::compute_normals() {
    normals_.assign(vertices_.size(), Vec3::Zero());
    for (const Face& f : faces_) {
        // Unnormalized cross product is twice the area times the unit normal.
        const Vec3 n = (vertices_[f[1]] - vertices_[f[0]]).cross(vertices_[f[2]] - vertices_[f[0]]);
        for (int idx : f) normals_[idx] += n;
    }
    for (auto& n : normals_) {
        const double len = n.norm();
        n = len > 0.0 ? Vec3(n / len) : Vec3(0, 0, 1);
    }
}

Vec3 TriangleMesh::face_normal(int f) const {
    const Face& t = face(f);
    return (vertex(t[1]) - vertex(t[0])).cross(vertex(t[2]) - vertex(t[0])).normalized();
}

double TriangleMesh::face_area(int f) const {
    const Face& t = face(f);
    return triangle_area(vertex(t[0]), vertex(t[1]), vertex(t[2]));
}

Vec3 TriangleMesh::face_centroid(int f) const {
    const Face& t = face(f);
    return (vertex(t[0]) + vertex(t[1]) + vertex(t[2])) / 3.0;
}

double TriangleMesh::total_area() const {
    double a = 0.0;
    for (int f = 0; f < static_cast<int>(faces_.size()); ++f) a += face_area(f);
    return a;
}

Vec3 TriangleMesh::point_on_face(int f, const Vec3& bary) const {
    const Face& t = face(f);
    return bary[0] * vertex(t[0]) + bary[1] * vertex(t[1]) + bary[2] * vertex(t[2]);
}

Eigen::AlignedBox3d TriangleMesh::bounds() const {
    Eigen::AlignedBox3d box;
    for (const auto& v : vertices_) box.extend(v);
    return box;
}

Vec3 TriangleMesh::centroid() const {
    Vec3 c = Vec3::Zero();
    for (const auto& v : vertices_) c += v;
    return vertices_.empty() ? c : Vec3(c / static_cast<double>(vertices_.size()));
}

std::vector<std::array<int, 2>> TriangleMesh::edges() const {
    std::vector<std::array<int, 2>> out;
    out.reserve(faces_.size() * 3);
    for (const Face& f : faces_) {
        for (int k = 0; k < 3; ++k) {
            int a = f[k], b = f[(k + 1) % 3];
            if (a > b) std::swap(a, b);
            out.push_back({a, b});
        }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

int count_boundary_loops(const TriangleMesh& mesh) {
    std::map<std::array<int, 2>, int> use;
    for (const Face& f : mesh.faces()) {
        for (int k = 0; k < 3; ++k) {
            int a = f[k], b = f[(k + 1) % 3];
            if (a > b) std::swap(a, b);
            ++use[{a, b}];
        }
    }
    // Boundary edges form a graph; each connected piece of it is one loop.
    std::vector<int> parent(mesh.num_vertices());
    std::iota(parent.begin(), parent.end(), 0);
    std::function<int(int)> find = [&](int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    std::vector<char> on_boundary(mesh.num_vertices(), 0);
    for (const auto& [edge, count] : use) {
        if (count != 1) continue;
        on_boundary[edge[0]] = on_boundary[edge[1]] = 1;
        parent[find(edge[0])] = find(edge[1]);
    }
    int loops = 0;
    for (std::size_t v = 0; v < on_boundary.size(); ++v)
        if (on_boundary[v] && find(static_cast<int>(v)) == static_cast<int>(v)) ++loops;
    return loops;
}

std::vector<int> face_components(std::size_t num_vertices, std::span<const Face> faces, int* count) {
    std::vector<int> parent(num_vertices);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (const Face& f : faces) {
        parent[find(f[0])] = find(f[1]);
        parent[find(f[1])] = find(f[2]);
    }
    std::vector<int> label(num_vertices, -1);
    std::vector<int> out(faces.size());
    int next = 0;
    for (std::size_t i = 0; i < faces.size(); ++i) {
        const int root = find(faces[i][0]);
        if (label[root] < 0) label[root] = next++;
        out[i] = label[root];
    }
    if (count) *count = next;
    return out;
}

void orient_consistently(std::vector<Face>& faces, std::size_t /*num_vertices*/) {
    // Directed edge -> face. A consistent neighbour traverses the edge reversed.
    std::map<std::array<int, 2>, std::vector<int>> by_edge;
    for (std::size_t f = 0; f < faces.size(); ++f) {
        for (int k = 0; k < 3; ++k) {
            int a = faces[f][k], b = faces[f][(k + 1) % 3];
            by_edge[{std::min(a, b), std::max(a, b)}].push_back(static_cast<int>(f));
        }
    }
    std::vector<char> visited(faces.size(), 0);
    auto has_directed = [](const Face& f, int a, int b) {
        for (int k = 0; k < 3; ++k)
            if (f[k] == a && f[(k + 1) % 3] == b) return true;
        return false;
    };
    for (std::size_t seed = 0; seed < faces.size(); ++seed) {
        if (visited[seed]) continue;
        visited[seed] = 1;
        std::queue<int> queue;
        queue.push(static_cast<int>(seed));
        while (!queue.empty()) {
            const int f = queue.front();
            queue.pop();
            for (int k = 0; k < 3; ++k) {
                const int a = faces[f][k], b = faces[f][(k + 1) % 3];
                const auto& adj = by_edge[{std::min(a, b), std::max(a, b)}];
                if (adj.size() != 2) continue;  // boundary or non-manifold
                const int g = adj[0] == f ? adj[1] : adj[0];
                if (visited[g]) continue;
                visited[g] = 1;
                if (has_directed(faces[g], a, b)) std::swap(faces[g][1], faces[g][2]);
                queue.push(g);
            }
        }
    }
}

RawMesh weld_and_compact(const RawMesh& mesh, double weld_radius, double min_area) {
    const std::size_t n = mesh.vertices.size();
    std::vector<int> remap(n);
    std::vector<Vec3> kept;
    if (weld_radius > 0.0) {
        // Hash cells of size weld_radius; a match can only sit in the 27 neighbouring cells.
        auto cell_of = [&](const Vec3& p) {
            return Eigen::Vector3i(static_cast<int>(std::floor(p.x() / weld_radius)),
                                   static_cast<int>(std::floor(p.y() / weld_radius)),
                                   static_cast<int>(std::floor(p.z() / weld_radius)));
        };
        auto key_of = [](const Eigen::Vector3i& c) {
            return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(c.x())) * 73856093ull) ^
                   (static_cast<std::uint64_t>(static_cast<std::uint32_t>(c.y())) * 19349663ull) ^
                   (static_cast<std::uint64_t>(static_cast<std::uint32_t>(c.z())) * 83492791ull);
        };
        std::unordered_map<std::uint64_t, std::vector<int>> buckets;
        for (std::size_t i = 0; i < n; ++i) {
            const Vec3& p = mesh.vertices[i];
            const Eigen::Vector3i c = cell_of(p);
            int match = -1;
            for (int dz = -1; dz <= 1 && match < 0; ++dz)
                for (int dy = -1; dy <= 1 && match < 0; ++dy)
                    for (int dx = -1; dx <= 1 && match < 0; ++dx) {
                        auto it = buckets.find(key_of(c + Eigen::Vector3i(dx, dy, dz)));
                        if (it == buckets.end()) continue;
                        for (int k : it->second)
                            if ((kept[k] - p).norm() <= weld_radius && (match < 0 || k < match)) match = k;
                    }
            if (match < 0) {
                match = static_cast<int>(kept.size());
                kept.push_back(p);
                buckets[key_of(c)].push_back(match);
            }
            remap[i] = match;
        }
    } else {
        kept = mesh.vertices;
        std::iota(remap.begin(), remap.end(), 0);
    }

    std::vector<Face> faces;
    faces.reserve(mesh.faces.size());
    for (const Face& f : mesh.faces) {
        const Face g{remap[f[0]], remap[f[1]], remap[f[2]]};
        if (g[0] == g[1] || g[1] == g[2] || g[0] == g[2]) continue;
        if (triangle_area(kept[g[0]], kept[g[1]], kept[g[2]]) <= min_area) continue;
        faces.push_back(g);
    }

    std::vector<int> used(kept.size(), -1);
    for (const Face& f : faces)
        for (int v : f) used[v] = 0;
    RawMesh out;
    for (std::size_t v = 0; v < kept.size(); ++v) {
        if (used[v] < 0) continue;
        used[v] = static_cast<int>(out.vertices.size());
        out.vertices.push_back(kept[v]);
    }
    for (Face& f : faces)
        for (int& v : f) v = used[v];
    out.faces = std::move(faces);
    return out;
}

TriangleMesh read_obj(std::istream& in) {
    std::vector<Vec3> vertices;
    std::vector<Face> faces;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag)) continue;
        if (tag == "v") {
            Vec3 v;
            if (!(ls >> v.x() >> v.y() >> v.z()))
                throw IoError("obj line " + std::to_string(line_no) + ": malformed vertex");
            vertices.push_back(v);
        } else if (tag == "f") {
            std::vector<int> poly;
            std::string tok;
            while (ls >> tok) {
                int idx = 0;
                try {
                    idx = std::stoi(tok.substr(0, tok.find('/')));
                } catch (const std::exception&) {
                    throw IoError("obj line " + std::to_string(line_no) + ": malformed face index");
                }
                poly.push_back(idx > 0 ? idx - 1 : static_cast<int>(vertices.size()) + idx);
            }
            if (poly.size() < 3) throw IoError("obj line " + std::to_string(line_no) + ": face with < 3 vertices");
            for (std::size_t k = 1; k + 1 < poly.size(); ++k) faces.push_back({poly[0], poly[k], poly[k + 1]});
        }
    }
    return TriangleMesh(std::move(vertices), std::move(faces));
}

TriangleMesh read_obj(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    return read_obj(in);
}

void write_obj(std::ostream& out, const TriangleMesh& mesh) {
    for (const auto& v : mesh.vertices())
        out << "v " << detail::format_double(v.x()) << ' ' << detail::format_double(v.y()) << ' '
            << detail::format_double(v.z()) << '\n';
    for (const Face& f : mesh.faces()) out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
}

void write_obj(const std::string& path, const TriangleMesh& mesh) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    write_obj(out, mesh);
}

}  // namespace avatar
