#pragma once

#include "avatar/geometry/mesh.hpp"
#include "avatar/sim/proximity.hpp"

#include <memory>
#include <span>
#include <vector>

namespace avatar {

struct ClothMaterial {
    double stretch_compliance = 0.0;  // m/N, 0 is inextensible
    double bend_compliance = 1e3;     // 1/(N m), per radian
    double density = 0.25;            // kg/m^2
    double friction = 0.3;            // Coulomb coefficient against the body
    double damping = 0.0;             // 1/s, linear velocity damping

    void validate() const;
};

struct ClothSettings {
    double dt = 1.0 / 60.0;
    int substeps = 8;
    int iterations = 10;
    Vec3 gravity = Vec3(0, 0, -9.81);
    double collision_margin = 0.004;  // kept between garment vertices and the body surface
    int sdf_resolution = 64;

    void validate() const;
};

struct DistanceConstraint {
    int a, b;
    double rest;
};

// Dihedral angle across the shared edge (e0, e1) between opposite vertices o0, o1.
struct BendConstraint {
    int o0, o1, e0, e1;
    double rest;
};

struct ClothTopology {
    std::vector<Vec3> rest_positions;
    std::vector<double> inverse_mass;
    std::vector<DistanceConstraint> edges;
    std::vector<BendConstraint> bends;

    static ClothTopology from_mesh(const TriangleMesh& mesh, double density);
};

// Signed dihedral angle (0 for a flat pair) and its gradient w.r.t. (o0, o1, e0, e1).
double dihedral_angle(const Vec3& o0, const Vec3& o1, const Vec3& e0, const Vec3& e1,
                      std::array<Vec3, 4>* gradient = nullptr);

// Greedy coloring: constraints sharing a vertex never share a color.
std::vector<std::vector<int>> color_constraints(std::size_t num_vertices, std::span<const std::array<int, 4>> vertices);

class ClothSolver {
public:
    ClothSolver(ClothTopology topology, const ClothMaterial& material, const ClothSettings& settings);

    void set_positions(std::vector<Vec3> positions);
    void set_velocities(std::vector<Vec3> velocities);
    const std::vector<Vec3>& positions() const { return x_; }
    const std::vector<Vec3>& velocities() const { return v_; }
    const ClothTopology& topology() const { return topo_; }
    const ClothSettings& settings() const { return settings_; }

    void substep(const BodySdf* body);
    // Moves vertices with zero inverse mass; they are not affected by the solve.
    void place_kinematic(std::span<const int> vertices, std::span<const Vec3> positions);
    // One output frame worth of substeps.
    void step(const BodySdf* body);
    // Pushes penetrating vertices (distance < 0) to the collision margin.
    void resolve_penetrations(const BodySdf& body);

    double max_edge_strain() const;

private:
    void project_distance(const DistanceConstraint& c, double& lambda, double alpha);
    void project_bend(const BendConstraint& c, double& lambda, double alpha);
    void collide(const BodySdf& body);

    ClothTopology topo_;
    ClothMaterial material_;
    ClothSettings settings_;
    std::vector<Vec3> x_, v_, prev_;
    std::vector<std::vector<int>> edge_colors_, bend_colors_;
};

// A garment vertex carried rigidly by one body face: its offset is stored in the
// face's orthonormal frame (triangle_basis) about the face centroid.
struct ClothAttachment {
    int vertex = 0;
    int face = 0;
    Vec3 local = Vec3::Zero();
};

// Binds each listed garment vertex to its closest face of body.
std::vector<ClothAttachment> attach_to_body(const TriangleMesh& garment, std::span<const int> vertices,
                                            const TriangleMesh& body);
Vec3 attachment_position(const ClothAttachment& a, const TriangleMesh& body);

// Boundary vertices within band of the garment's highest point (waistband or neckline).
std::vector<int> top_boundary_vertices(const TriangleMesh& garment, double band);

// Frame-by-frame driver. The first advance() resolves penetrations of the initial
// garment; each later call advances one dt against the given body. Attached vertices
// are kinematic and move linearly over the substeps to their place on the new body.
class GarmentSimulation {
public:
    GarmentSimulation(const TriangleMesh& g0, const ClothMaterial& material, const ClothSettings& settings,
                      std::vector<ClothAttachment> attachments = {});

    // body_sdf must describe body. Throws SimulationError on a non-finite state.
    TriangleMesh advance(const TriangleMesh& body, const BodySdf& body_sdf);
    int frames() const { return frame_; }
    const ClothSolver& solver() const { return solver_; }

private:
    TriangleMesh g0_;
    std::vector<ClothAttachment> attachments_;
    ClothSolver solver_;
    int frame_ = 0;
};

// Frame 0 is g0 with penetrations into bodies[0] resolved; frame t > 0 advances one dt
// against bodies[t]. Faces are copied from g0 on every frame.
std::vector<TriangleMesh> simulate_garment(const TriangleMesh& g0, std::span<const TriangleMesh> bodies,
                                           const ClothMaterial& material = {}, const ClothSettings& settings = {});

// Horizontal nx x ny quad sheet (two triangles per quad), normals +z.
TriangleMesh make_rectangular_sheet(const Vec3& center, double width, double depth, int nx, int ny);

// Largest exact penetration depth (positive when inside) of any vertex.
double max_penetration(const TriangleMesh& garment, const BodySdf& body);

}  // namespace avatar
