#pragma once

#include "avatar/common.hpp"

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace avatar {

constexpr double kDegenerateArea = 1e-12;

// Triangle soup with no invariants; the output format of extraction stages
// before cleanup.
struct RawMesh {
    std::vector<Vec3> vertices;
    std::vector<Face> faces;
};

// Orthonormal basis of a triangle: columns are the normalized first edge
// (v1 - v0), the unit normal, and their cross product.
Mat3 triangle_basis(const Vec3& v0, const Vec3& v1, const Vec3& v2);

double triangle_area(const Vec3& v0, const Vec3& v1, const Vec3& v2);

class TriangleMesh {
public:
    TriangleMesh() = default;

    // Validates index bounds and rejects degenerate faces.
    TriangleMesh(std::vector<Vec3> vertices, std::vector<Face> faces);

    // Same topology, new positions. Skips the degeneracy check so simulated
    // frames with crushed triangles stay representable.
    TriangleMesh with_vertices(std::vector<Vec3> vertices) const;

    const std::vector<Vec3>& vertices() const { return vertices_; }
    const std::vector<Face>& faces() const { return faces_; }
    const std::vector<Vec3>& normals() const { return normals_; }

    std::size_t num_vertices() const { return vertices_.size(); }
    std::size_t num_faces() const { return faces_.size(); }
    bool empty() const { return faces_.empty(); }

    const Vec3& vertex(int i) const { return vertices_[static_cast<std::size_t>(i)]; }
    const Face& face(int i) const { return faces_[static_cast<std::size_t>(i)]; }

    Vec3 face_normal(int f) const;
    double face_area(int f) const;
    Vec3 face_centroid(int f) const;
    double total_area() const;
    // Barycentric evaluation on face f.
    Vec3 point_on_face(int f, const Vec3& bary) const;

    Eigen::AlignedBox3d bounds() const;
    Vec3 centroid() const;

    // Unique undirected edges, sorted lexicographically.
    std::vector<std::array<int, 2>> edges() const;

private:
    void compute_normals();

    std::vector<Vec3> vertices_;
    std::vector<Face> faces_;
    std::vector<Vec3> normals_;
};

// Number of closed boundary-edge cycles (edges with exactly one incident face).
int count_boundary_loops(const TriangleMesh& mesh);

// Connected components over shared vertices; returns a component id per face.
std::vector<int> face_components(std::size_t num_vertices, std::span<const Face> faces, int* count);

// Flips faces so that adjacent faces traverse shared edges in opposite
// directions wherever the surface is orientable.
void orient_consistently(std::vector<Face>& faces, std::size_t num_vertices);

// Merges vertices closer than weld_radius (first occurrence wins), drops faces
// that collapse or have area <= min_area, and removes unreferenced vertices.
// Surviving vertices and faces keep their relative order.
RawMesh weld_and_compact(const RawMesh& mesh, double weld_radius, double min_area = kDegenerateArea);

TriangleMesh read_obj(const std::string& path);
TriangleMesh read_obj(std::istream& in);
void write_obj(const std::string& path, const TriangleMesh& mesh);
void write_obj(std::ostream& out, const TriangleMesh& mesh);

}  // namespace avatar
