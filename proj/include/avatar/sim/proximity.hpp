#pragma once

#include "avatar/geometry/grid.hpp"
#include "avatar/geometry/mesh.hpp"

#include <optional>
#include <vector>

namespace avatar {

// Closest-point feature on a triangle: vertex 0..2, edge 3..5 (v0v1, v1v2, v2v0), interior 6.
struct TrianglePoint {
    Vec3 point;
    int feature;
};

TrianglePoint closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

struct MeshHit {
    Vec3 point;
    double distance;
    int face;
    int feature;
};

// Uniform bucket grid over a mesh's faces for exact bounded closest-point queries.
class MeshProximity {
public:
    MeshProximity() = default;
    MeshProximity(const TriangleMesh& mesh, double cell_size);

    // Exact closest point among faces within max_distance of p (ties: lowest face index).
    std::optional<MeshHit> closest(const Vec3& p, double max_distance) const;

    // Exhaustive search over every face.
    MeshHit closest_brute_force(const Vec3& p) const;

    const TriangleMesh& mesh() const { return *mesh_; }
    double cell_size() const { return cell_; }

private:
    const TriangleMesh* mesh_ = nullptr;
    Vec3 origin_ = Vec3::Zero();
    double cell_ = 1.0;
    std::array<int, 3> dims_{1, 1, 1};
    std::vector<int> cell_start_;
    std::vector<int> cell_faces_;
};

struct SignedDistance {
    double distance;  // negative inside
    Vec3 normal;      // outward direction of steepest ascent; zero if unknown
    bool exact;       // false when the query fell outside the exact search radius
};

// Signed distance to a closed mesh: a lattice (default 64 cells on the longest axis)
// holds exact values in a band around the surface and flood-filled signs elsewhere;
// queries near the surface are answered exactly, signed with angle-weighted pseudonormals.
class BodySdf {
public:
    BodySdf(const TriangleMesh& closed_mesh, int resolution = 64, double exact_radius = 0.02);
    // The proximity index points into the owned mesh.
    BodySdf(const BodySdf&) = delete;
    BodySdf& operator=(const BodySdf&) = delete;

    SignedDistance query(const Vec3& p) const;
    // Exact signed distance by exhaustive search (audit oracle).
    double exact_signed_distance(const Vec3& p) const;
    // Exact depth inside the mesh, 0 outside. The nearest lattice node bounds the
    // closest-face search radius or proves p is outside.
    double penetration(const Vec3& p) const;

    const GridSpec& grid() const { return grid_; }
    const std::vector<double>& values() const { return values_; }
    const TriangleMesh& mesh() const { return mesh_; }

private:
    double sign_of(const Vec3& p, const MeshHit& hit) const;
    Vec3 pseudonormal(const MeshHit& hit) const;

    TriangleMesh mesh_;
    MeshProximity proximity_;
    double exact_radius_;
    GridSpec grid_;
    std::vector<double> values_;
    std::vector<Vec3> face_normals_;
    std::vector<Vec3> vertex_normals_;
    std::vector<std::array<int, 3>> face_edges_;  // per face, index into edge_normals_
    std::vector<Vec3> edge_normals_;
};

}  // namespace avatar
