#pragma once

#include "avatar/geometry/mesh.hpp"

#include <span>
#include <string>
#include <vector>

namespace avatar {

// Rest transform is a pure translation to the joint pivot; joint rotations are
// expressed relative to the rest frame (identity in rest).
struct Joint {
    std::string name;
    int parent = -1;
    Vec3 rest_position = Vec3::Zero();
};

struct SkinWeight {
    int joint = 0;
    double weight = 0.0;
};

using VertexWeights = std::vector<SkinWeight>;

struct BodyPose {
    std::vector<Quat> rotations;  // one local rotation per joint
    Vec3 root_translation = Vec3::Zero();

    static BodyPose identity(std::size_t joints);
    bool is_identity() const;
    void validate() const;
};

struct PoseSequence {
    std::vector<BodyPose> frames;
    double frame_interval = 1.0 / 30.0;

    void validate() const;
};

class SkinnedBody {
public:
    SkinnedBody() = default;
    SkinnedBody(TriangleMesh rest, std::vector<Joint> joints, std::vector<VertexWeights> weights,
                std::vector<int> scalp_faces = {});

    const TriangleMesh& rest_mesh() const { return rest_; }
    const std::vector<Joint>& joints() const { return joints_; }
    const std::vector<VertexWeights>& weights() const { return weights_; }
    const std::vector<int>& scalp_faces() const { return scalp_faces_; }
    std::size_t num_joints() const { return joints_.size(); }

    // Per-vertex displacement basis; coefficients play the role of shape parameters.
    void set_shape_basis(std::vector<std::vector<Vec3>> basis, std::vector<double> coefficients);
    const std::vector<std::vector<Vec3>>& shape_basis() const { return shape_basis_; }
    const std::vector<double>& shape_coefficients() const { return shape_coefficients_; }

    // Rest vertices plus the weighted shape displacement.
    std::vector<Vec3> shaped_vertices() const;

    // Joints ordered so every parent precedes its children.
    const std::vector<int>& topological_order() const { return order_; }

private:
    TriangleMesh rest_;
    std::vector<Joint> joints_;
    std::vector<VertexWeights> weights_;
    std::vector<int> scalp_faces_;
    std::vector<std::vector<Vec3>> shape_basis_;
    std::vector<double> shape_coefficients_;
    std::vector<int> order_;
};

// Global per-joint skinning transforms (posed global * inverse rest global).
std::vector<Eigen::Isometry3d> joint_transforms(const SkinnedBody& body, const BodyPose& pose);

// Posed joint pivot positions.
std::vector<Vec3> posed_joint_positions(const SkinnedBody& body, const BodyPose& pose);

// v' = sum_j w_j T_j v for every vertex.
std::vector<Vec3> blend_vertices(std::span<const Vec3> vertices, std::span<const VertexWeights> weights,
                                 std::span<const Eigen::Isometry3d> transforms);

TriangleMesh lbs_skin(const SkinnedBody& body, const BodyPose& pose);

// Structured-text (JSON) formats.
SkinnedBody read_body(const std::string& path);
void write_body(const std::string& path, const SkinnedBody& body);
PoseSequence read_pose_sequence(const std::string& path);
void write_pose_sequence(const std::string& path, const PoseSequence& poses);

}  // namespace avatar
