#pragma once

#include "avatar/geometry/grid.hpp"
#include "avatar/geometry/mesh.hpp"

#include <span>
#include <string>
#include <vector>

namespace avatar {

struct UdfGrid {
    GridSpec grid;
    std::vector<double> values;     // unsigned distance per node
    std::vector<Vec3> gradients;    // central differences; one-sided on the border and at axis minima

    void validate() const;
    double cell_size() const { return grid.max_spacing(); }
};

// Fills gradients from values.
void compute_gradients(UdfGrid& udf);

// Exact nearest-point distance per node. The R-tree search returns the same
// values as the exhaustive one.
UdfGrid udf_from_points(std::span<const Vec3> points, const Eigen::AlignedBox3d& box, std::array<int, 3> resolution,
                        bool accelerated = true);

enum class GarmentKind { skirt, tube_top, cape };

GarmentKind parse_garment_kind(const std::string& name);
std::string garment_kind_name(GarmentKind kind);

// Open surfaces of revolution about a vertical axis through (center.x, center.y).
// skirt: frustum from top_radius at top_z to bottom_radius at top_z - length.
// tube_top: cylinder of top_radius. cape: cylinder sector of arc_degrees centered on +y (the back).
struct GarmentTemplate {
    GarmentKind kind = GarmentKind::tube_top;
    Vec2 center = Vec2::Zero();
    double top_z = 1.35;
    double length = 0.3;
    double top_radius = 0.16;
    double bottom_radius = 0.16;
    double arc_degrees = 180.0;

    void validate() const;
    double distance(const Vec3& p) const;
    Eigen::AlignedBox3d bounds() const;
};

// Analytic UDF sampled on a lattice with max_nodes nodes on the longest padded axis.
UdfGrid udf_from_template(const GarmentTemplate& garment, int max_nodes = 96, double padding_cells = 3.0);

// Gradient-based open-surface extraction. An edge crosses the surface when its endpoint
// gradients point in opposite directions and the smaller endpoint distance is below the
// cell diagonal. Each cell takes the corner with the smallest distance as positive and
// signs the other corners by the dot product of their gradients with that corner's;
// cells whose sign changes disagree with the declared crossings are skipped. Vertices sit
// at u_a / (u_a + u_b) along their edge and are shared through the lattice edge key.
TriangleMesh extract_open_mesh(const UdfGrid& udf);

struct CleanupOptions {
    double weld_radius = 1e-7;
    int min_component_faces = 20;
    bool smooth = false;
    double smooth_lambda = 0.3;
    int smooth_iterations = 5;
};

// Welds, drops degenerate faces and small components, then optionally applies
// uniform Laplacian smoothing to interior vertices.
TriangleMesh cleanup_mesh(const TriangleMesh& mesh, const CleanupOptions& options = {});

}  // namespace avatar
