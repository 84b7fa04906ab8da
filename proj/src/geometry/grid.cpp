#include "avatar/geometry/grid.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace avatar {

namespace {
#include "mc_tables.inc"
}  // namespace

GridSpec GridSpec::covering(const Eigen::AlignedBox3d& box, int max_nodes_per_axis, double padding_cells) {
    require(max_nodes_per_axis >= 2, "grid needs at least 2 nodes per axis");
    require(!box.isEmpty(), "cannot cover an empty box");
    const Vec3 size = box.sizes();
    const double longest = std::max(size.maxCoeff(), 1e-9);
    // Cell edge h such that the padded longest axis spans max_nodes_per_axis nodes.
    const double h = longest / (max_nodes_per_axis - 1 - 2.0 * padding_cells);
    GridSpec g;
    g.spacing = Vec3::Constant(h);
    for (int a = 0; a < 3; ++a) {
        const int cells = std::max(1, static_cast<int>(std::ceil(size[a] / h + 2.0 * padding_cells)));
        g.dims[a] = std::min(cells + 1, max_nodes_per_axis);
        const double span = (g.dims[a] - 1) * h;
        g.origin[a] = box.center()[a] - 0.5 * span;
    }
    return g;
}

GridSpec GridSpec::spanning(const Eigen::AlignedBox3d& box, std::array<int, 3> nodes_per_axis) {
    GridSpec g;
    g.origin = box.min();
    g.dims = nodes_per_axis;
    for (int a = 0; a < 3; ++a) {
        require(nodes_per_axis[a] >= 2, "grid resolution must be >= 2 per axis");
        g.spacing[a] = (box.max()[a] - box.min()[a]) / (nodes_per_axis[a] - 1);
        require(g.spacing[a] > 0.0, "grid box must have positive extent");
    }
    return g;
}

Eigen::AlignedBox3d GridSpec::bounds() const {
    return {origin, node(dims[0] - 1, dims[1] - 1, dims[2] - 1)};
}

double trilinear(const GridSpec& grid, std::span<const double> values, const Vec3& p, Vec3* gradient) {
    require(p.allFinite(), "grid interpolation at a non-finite position");
    std::array<int, 3> base{};
    Vec3 frac;
    for (int a = 0; a < 3; ++a) {
        const double u = (p[a] - grid.origin[a]) / grid.spacing[a];
        const double clamped = std::clamp(u, 0.0, static_cast<double>(grid.dims[a] - 1));
        int i = static_cast<int>(std::floor(clamped));
        i = std::min(i, grid.dims[a] - 2);
        base[a] = i;
        frac[a] = clamped - i;
    }
    double c[2][2][2];
    for (int dz = 0; dz < 2; ++dz)
        for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx)
                c[dx][dy][dz] = values[grid.index(base[0] + dx, base[1] + dy, base[2] + dz)];
    const double fx = frac.x(), fy = frac.y(), fz = frac.z();
    const double c00 = c[0][0][0] * (1 - fx) + c[1][0][0] * fx;
    const double c10 = c[0][1][0] * (1 - fx) + c[1][1][0] * fx;
    const double c01 = c[0][0][1] * (1 - fx) + c[1][0][1] * fx;
    const double c11 = c[0][1][1] * (1 - fx) + c[1][1][1] * fx;
    const double c0 = c00 * (1 - fy) + c10 * fy;
    const double c1 = c01 * (1 - fy) + c11 * fy;
    if (gradient) {
        const double dx00 = c[1][0][0] - c[0][0][0], dx10 = c[1][1][0] - c[0][1][0];
        const double dx01 = c[1][0][1] - c[0][0][1], dx11 = c[1][1][1] - c[0][1][1];
        const double gx = ((dx00 * (1 - fy) + dx10 * fy) * (1 - fz) + (dx01 * (1 - fy) + dx11 * fy) * fz);
        const double gy = ((c10 - c00) * (1 - fz) + (c11 - c01) * fz);
        const double gz = c1 - c0;
        *gradient = Vec3(gx / grid.spacing.x(), gy / grid.spacing.y(), gz / grid.spacing.z());
    }
    return c0 * (1 - fz) + c1 * fz;
}

namespace marching_cubes {

int edge_mask(int cube_index) { return kEdgeTable[cube_index]; }

void emit_triangles(int cube_index, const std::function<int(int)>& edge_vertex, std::vector<Face>& out) {
    const int* row = kTriTable[cube_index];
    for (int t = 0; row[t] != -1; t += 3) out.push_back({edge_vertex(row[t]), edge_vertex(row[t + 1]), edge_vertex(row[t + 2])});
}

std::uint64_t edge_key(const GridSpec& grid, int i, int j, int k, int axis) {
    return static_cast<std::uint64_t>(grid.index(i, j, k)) * 3u + static_cast<std::uint64_t>(axis);
}

std::array<int, 4> cell_edge(int i, int j, int k, int e) {
    const auto& a = kCorners[kEdges[e][0]];
    const auto& b = kCorners[kEdges[e][1]];
    int axis = 0;
    for (int d = 0; d < 3; ++d)
        if (a[d] != b[d]) axis = d;
    return {i + std::min(a[0], b[0]), j + std::min(a[1], b[1]), k + std::min(a[2], b[2]), axis};
}

}  // namespace marching_cubes

RawMesh extract_isosurface(const GridSpec& grid, std::span<const double> values, double iso) {
    require(values.size() == grid.num_nodes(), "grid value count mismatch");
    RawMesh mesh;
    std::unordered_map<std::uint64_t, int> edge_vertices;
    for (int k = 0; k + 1 < grid.dims[2]; ++k) {
        for (int j = 0; j + 1 < grid.dims[1]; ++j) {
            for (int i = 0; i + 1 < grid.dims[0]; ++i) {
                int cube = 0;
                for (int c = 0; c < 8; ++c) {
                    const auto& o = marching_cubes::kCorners[c];
                    if (values[grid.index(i + o[0], j + o[1], k + o[2])] < iso) cube |= 1 << c;
                }
                if (cube == 0 || cube == 255) continue;
                auto vertex_for = [&](int e) {
                    const auto le = marching_cubes::cell_edge(i, j, k, e);
                    const auto key = marching_cubes::edge_key(grid, le[0], le[1], le[2], le[3]);
                    auto it = edge_vertices.find(key);
                    if (it != edge_vertices.end()) return it->second;
                    std::array<int, 3> b{le[0], le[1], le[2]};
                    std::array<int, 3> c = b;
                    c[le[3]] += 1;
                    const double va = values[grid.index(b[0], b[1], b[2])];
                    const double vb = values[grid.index(c[0], c[1], c[2])];
                    const double t = std::clamp((iso - va) / (vb - va), 0.0, 1.0);
                    const Vec3 pa = grid.node(b[0], b[1], b[2]);
                    const Vec3 pb = grid.node(c[0], c[1], c[2]);
                    const int id = static_cast<int>(mesh.vertices.size());
                    mesh.vertices.push_back(pa + t * (pb - pa));
                    edge_vertices.emplace(key, id);
                    return id;
                };
                marching_cubes::emit_triangles(cube, vertex_for, mesh.faces);
            }
        }
    }
    return mesh;
}

}  // namespace avatar
