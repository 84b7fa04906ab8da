#pragma once

#include "avatar/common.hpp"
#include "avatar/geometry/mesh.hpp"

#include <array>
#include <functional>
#include <span>

namespace avatar {

// Regular lattice of nodes: node (i, j, k) sits at origin + (i, j, k) * spacing.
struct GridSpec {
    Vec3 origin = Vec3::Zero();
    Vec3 spacing = Vec3::Ones();
    std::array<int, 3> dims{2, 2, 2};

    // Nodes per axis for cubic cells of the given edge length covering box.
    static GridSpec covering(const Eigen::AlignedBox3d& box, int max_nodes_per_axis, double padding_cells = 2.0);
    // Exactly nodes_per_axis nodes along every axis spanning box.
    static GridSpec spanning(const Eigen::AlignedBox3d& box, std::array<int, 3> nodes_per_axis);

    std::size_t num_nodes() const {
        return static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(dims[2]);
    }
    std::size_t index(int i, int j, int k) const {
        return (static_cast<std::size_t>(k) * static_cast<std::size_t>(dims[1]) + static_cast<std::size_t>(j)) *
                   static_cast<std::size_t>(dims[0]) +
               static_cast<std::size_t>(i);
    }
    Vec3 node(int i, int j, int k) const { return origin + Vec3(i * spacing.x(), j * spacing.y(), k * spacing.z()); }
    double cell_diagonal() const { return spacing.norm(); }
    double max_spacing() const { return spacing.maxCoeff(); }
    Eigen::AlignedBox3d bounds() const;
};

// Trilinear interpolation of node values; positions outside are clamped to the box.
double trilinear(const GridSpec& grid, std::span<const double> values, const Vec3& p, Vec3* gradient = nullptr);

namespace marching_cubes {

// Corner offsets in the standard table order.
inline constexpr std::array<std::array<int, 3>, 8> kCorners = {{{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                                                                  {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}}};
inline constexpr std::array<std::array<int, 2>, 12> kEdges = {
    {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6}, {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}}};

// Bit e set when table edge e carries a vertex for this corner configuration.
int edge_mask(int cube_index);

// Appends the triangles of one cell; edge_vertex maps a local edge to a vertex id.
void emit_triangles(int cube_index, const std::function<int(int)>& edge_vertex, std::vector<Face>& out);

// Stable key for the lattice edge leaving node (i, j, k) along axis.
std::uint64_t edge_key(const GridSpec& grid, int i, int j, int k, int axis);

// Lattice edge (base node, axis) for local edge e of cell (i, j, k).
std::array<int, 4> cell_edge(int i, int j, int k, int e);

}  // namespace marching_cubes

// Classic signed iso-surface extraction (values < iso are inside). Vertices on
// shared lattice edges are shared between cells.
RawMesh extract_isosurface(const GridSpec& grid, std::span<const double> values, double iso = 0.0);

}  // namespace avatar
