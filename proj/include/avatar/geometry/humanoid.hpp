#pragma once

#include "avatar/geometry/skinning.hpp"

namespace avatar {

// Closed capsule around segment a-b: hemispherical caps joined by a cylinder.
TriangleMesh make_capsule_mesh(const Vec3& a, const Vec3& b, double radius, int segments = 24, int rings = 8);

struct HumanoidParams {
    double height = 1.75;        // approximate standing height in meters
    double cell_size = 0.02;     // iso-surface grid spacing at height 1.75
    double blend_radius = 0.015; // smooth-union blend width
};

// T-pose capsule humanoid (z up, facing -y, left side at +x) with 19 joints,
// distance-based skin weights, and a scalp face set on the upper back of the head.
SkinnedBody make_capsule_humanoid(const HumanoidParams& params = {});

// Named joint lookup; throws when absent.
int find_joint(const SkinnedBody& body, std::string_view name);

}  // namespace avatar
