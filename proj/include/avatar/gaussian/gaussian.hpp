#pragma once

#include "avatar/geometry/mesh.hpp"
#include "avatar/geometry/strands.hpp"

#include <variant>
#include <vector>

namespace avatar {

struct FaceBinding {
    int face = 0;
    bool operator==(const FaceBinding&) const = default;
};

struct SegmentBinding {
    int strand = 0;
    int segment = 0;
    bool operator==(const SegmentBinding&) const = default;
};

using Binding = std::variant<FaceBinding, SegmentBinding>;

inline bool is_face_bound(const Binding& b) { return std::holds_alternative<FaceBinding>(b); }

// Number of colour feature values for a spherical-harmonic degree (3 per coefficient).
constexpr int feature_dim(int sh_degree) { return 3 * (sh_degree + 1) * (sh_degree + 1); }

constexpr double kStrandThickness = 0.001;

// Local attributes are in face-frame units for face-bound primitives; strand-bound
// primitives derive their pose from the segment and ignore them.
struct GaussianPrimitive {
    Vec3 position = Vec3::Zero();
    Quat rotation = Quat::Identity();
    Vec3 scale = Vec3::Constant(0.1);
    Eigen::VectorXd features = Eigen::VectorXd::Constant(3, 0.5);
    double opacity = 0.5;
    Binding binding = FaceBinding{};

    void validate() const;
};

struct FaceFrame {
    Vec3 origin = Vec3::Zero();
    Mat3 rotation = Mat3::Identity();
    double scale = 1.0;
};

struct GaussianPose {
    Vec3 mean = Vec3::Zero();
    Quat rotation = Quat::Identity();
    Vec3 scale = Vec3::Ones();
};

FaceFrame face_frame(const TriangleMesh& mesh, int face);

// mean = k R p + P, rotation = q(R) r, scale = k s.
GaussianPose globalize_mesh_gaussian(const GaussianPrimitive& g, const FaceFrame& frame);

// Midpoint mean, scale (len/2, gamma, gamma), rotation carrying +x onto the segment.
GaussianPose globalize_strand_gaussian(const HairStrands& strands, int strand, int segment,
                                       double gamma = kStrandThickness);

// Shortest-arc quaternion from +x to the unit vector d; a 180 degree turn about z
// when d points along -x.
Quat rotation_from_x_axis(const Vec3& d);

// World pose plus the shading normal (mesh) or strand direction (hair).
struct PlacedGaussian {
    GaussianPose pose;
    Vec3 normal = Vec3::UnitZ();
    bool strand = false;
};

// Globalizes every primitive of one layer against its bound geometry. Exactly one
// of mesh / strands is consulted per primitive depending on its binding.
std::vector<PlacedGaussian> place_gaussians(std::span<const GaussianPrimitive> gaussians, const TriangleMesh* mesh,
                                            const HairStrands* strands, double gamma = kStrandThickness);

// Global isotropic scale of initialized mesh primitives relative to sqrt(area / count).
constexpr double kInitScaleFactor = 0.5;

// Area-weighted sampling of count primitives: o = 0.5, mid-gray colour, identity
// local rotation, isotropic world scale kInitScaleFactor * sqrt(area / count).
std::vector<GaussianPrimitive> init_mesh_gaussians(const TriangleMesh& mesh, int count, std::uint64_t seed,
                                                   int sh_degree = 0);

// One primitive per strand segment with the same initial appearance.
std::vector<GaussianPrimitive> init_strand_gaussians(const HairStrands& strands, int sh_degree = 0);

struct DensifyStats {
    double footprint = 0.0;      // projected radius in pixels
    double gradient_norm = 0.0;  // colour/opacity gradient magnitude
};

struct DensifyPolicy {
    double footprint_threshold = 8.0;
    double gradient_threshold = 1e-4;
    double prune_opacity = 0.01;
    double jitter = 0.5;  // in-plane offset of split children, in units of the parent scale
    std::uint64_t seed = 0;
};

// Splits large face-bound primitives with significant gradient into two children
// (half scale, in-plane jitter, same face) and prunes low-opacity ones. A face's
// last primitive is never pruned, so face coverage only grows. Strand-bound
// primitives pass through unchanged.
std::vector<GaussianPrimitive> densify(std::span<const GaussianPrimitive> gaussians,
                                       std::span<const DensifyStats> stats, const DensifyPolicy& policy);

// Checks every binding against the bound geometry.
void validate_bindings(std::span<const GaussianPrimitive> gaussians, const TriangleMesh* mesh,
                       const HairStrands* strands);

}  // namespace avatar
