#pragma once

#include "avatar/geometry/strands.hpp"
#include "avatar/sim/proximity.hpp"

#include <span>
#include <vector>

namespace avatar {

struct HairParams {
    double dt = 1.0 / 60.0;
    int substeps = 8;
    Vec3 gravity = Vec3(0, 0, -9.81);
    double damping = 5.0;           // 1/s, linear velocity damping (air drag stand-in)
    double bend_stiffness = 0.1;    // fraction of the skip-one length error corrected per substep
    double ftl_damping = 0.9;       // velocity correction factor of the follow-the-leader step
    double collision_radius = 0.003;
    int sdf_resolution = 64;

    void validate() const;
};

// Strand state advanced with follow-the-leader inextensibility. Segment lengths and
// skip-one lengths (bending) come from the rest strands.
class HairSolver {
public:
    HairSolver(const HairStrands& rest, const HairParams& params);

    const HairStrands& state() const { return strands_; }
    void set_state(const HairStrands& strands);

    // Advances one dt; roots move linearly from their current position to the bound
    // point on body and end exactly on it.
    void step(const TriangleMesh& body, const BodySdf* body_sdf, const MeshProximity* garment);

private:
    void collide(Vec3& p, const Vec3& previous, const BodySdf* body_sdf, const MeshProximity* garment) const;

    HairParams params_;
    HairStrands strands_;
    std::vector<Vec3> velocities_;
    std::vector<double> rest_lengths_;  // per strand, per segment
    std::vector<double> skip_lengths_;  // per strand, per interior point
};

// Frame-by-frame driver. The first advance() carries h0 onto the body (unchanged when
// it equals the reference); each later call advances one dt with the body and the
// already simulated garment of that frame as obstacles.
class HairSimulation {
public:
    HairSimulation(const HairStrands& h0, const TriangleMesh& reference_body, const HairParams& params);

    // body_sdf must describe body; an empty garment is ignored.
    HairStrands advance(const TriangleMesh& body, const BodySdf& body_sdf, const TriangleMesh& garment);
    int frames() const { return frame_; }

private:
    HairStrands h0_;
    TriangleMesh reference_;
    HairParams params_;
    HairSolver solver_;
    int frame_ = 0;
};

// Frame 0 carries h0 onto bodies[0] (unchanged when bodies[0] equals the reference);
// frame t > 0 advances one dt with bodies[t] and garments[t] as obstacles.
std::vector<HairStrands> simulate_hair(const HairStrands& h0, const TriangleMesh& reference_body,
                                       std::span<const TriangleMesh> bodies, std::span<const TriangleMesh> garments,
                                       const HairParams& params = {});

// Largest |segment length / rest - 1| over all segments.
double max_segment_drift(const HairStrands& strands, const HairStrands& rest);

}  // namespace avatar
