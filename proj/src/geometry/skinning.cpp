#include "avatar/geometry/skinning.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>

namespace avatar {

using nlohmann::json;

BodyPose BodyPose::identity(std::size_t joints) {
    BodyPose pose;
    pose.rotations.assign(joints, Quat::Identity());
    return pose;
}

bool BodyPose::is_identity() const {
    if (root_translation != Vec3::Zero()) return false;
    for (const Quat& q : rotations)
        if (q.w() != 1.0 || q.x() != 0.0 || q.y() != 0.0 || q.z() != 0.0) return false;
    return true;
}

void BodyPose::validate() const {
    for (std::size_t j = 0; j < rotations.size(); ++j) {
        if (std::abs(rotations[j].norm() - 1.0) > 1e-6)
            throw InvalidArgument("pose rotation " + std::to_string(j) + " is not unit-norm");
    }
    if (!root_translation.allFinite()) throw InvalidArgument("pose root translation is not finite");
}

void PoseSequence::validate() const {
    require(!frames.empty(), "pose sequence has no frames");
    require(frame_interval > 0.0, "pose sequence frame interval must be positive");
    for (const auto& f : frames) f.validate();
}

SkinnedBody::SkinnedBody(TriangleMesh rest, std::vector<Joint> joints, std::vector<VertexWeights> weights,
                         std::vector<int> scalp_faces)
    : rest_(std::move(rest)),
      joints_(std::move(joints)),
      weights_(std::move(weights)),
      scalp_faces_(std::move(scalp_faces)) {
    require(!joints_.empty(), "skinned body needs at least one joint");
    require(weights_.size() == rest_.num_vertices(), "skin weights must cover every vertex");
    const int nj = static_cast<int>(joints_.size());

    int roots = 0;
    for (int j = 0; j < nj; ++j) {
        const int p = joints_[j].parent;
        if (p < 0) {
            ++roots;
        } else if (p >= nj || p == j) {
            throw InvalidArgument("joint " + std::to_string(j) + " has invalid parent");
        }
    }
    if (roots != 1) throw InvalidArgument("joint tree must have exactly one root");

    // Depth by walking parents; a walk longer than the joint count means a cycle.
    std::vector<int> depth(nj, 0);
    for (int j = 0; j < nj; ++j) {
        int steps = 0;
        for (int p = joints_[j].parent; p >= 0; p = joints_[p].parent) {
            if (++steps > nj) throw InvalidArgument("joint tree contains a cycle");
        }
        depth[j] = steps;
    }
    order_.resize(nj);
    for (int j = 0; j < nj; ++j) order_[j] = j;
    std::stable_sort(order_.begin(), order_.end(), [&](int a, int b) { return depth[a] < depth[b]; });

    for (std::size_t v = 0; v < weights_.size(); ++v) {
        double sum = 0.0;
        for (const auto& w : weights_[v]) {
            if (w.joint < 0 || w.joint >= nj)
                throw InvalidArgument("vertex " + std::to_string(v) + " weights an unknown joint");
            if (!(w.weight >= 0.0)) throw InvalidArgument("vertex " + std::to_string(v) + " has a negative weight");
            sum += w.weight;
        }
        if (std::abs(sum - 1.0) > 1e-6)
            throw InvalidArgument("vertex " + std::to_string(v) + " weights sum to " + std::to_string(sum));
    }
    for (int f : scalp_faces_)
        if (f < 0 || f >= static_cast<int>(rest_.num_faces())) throw InvalidArgument("scalp face out of range");
}

void SkinnedBody::set_shape_basis(std::vector<std::vector<Vec3>> basis, std::vector<double> coefficients) {
    require(basis.size() == coefficients.size(), "shape basis / coefficient count mismatch");
    for (const auto& b : basis) require(b.size() == rest_.num_vertices(), "shape basis vector has wrong length");
    shape_basis_ = std::move(basis);
    shape_coefficients_ = std::move(coefficients);
}

std::vector<Vec3> SkinnedBody::shaped_vertices() const {
    std::vector<Vec3> v = rest_.vertices();
    for (std::size_t k = 0; k < shape_basis_.size(); ++k) {
        const double c = shape_coefficients_[k];
        if (c == 0.0) continue;
        for (std::size_t i = 0; i < v.size(); ++i) v[i] += c * shape_basis_[k][i];
    }
    return v;
}

namespace {

void check_pose(const SkinnedBody& body, const BodyPose& pose) {
    if (pose.rotations.size() != body.num_joints())
        throw InvalidArgument("pose has " + std::to_string(pose.rotations.size()) + " joint rotations, body has " +
                              std::to_string(body.num_joints()) + " joints");
    pose.validate();
}

struct GlobalPose {
    std::vector<Quat> rotation;
    std::vector<Vec3> position;
};

GlobalPose compose(const SkinnedBody& body, const BodyPose& pose) {
    const auto& joints = body.joints();
    GlobalPose g;
    g.rotation.resize(joints.size());
    g.position.resize(joints.size());
    for (int j : body.topological_order()) {
        const Quat local = pose.rotations[j].normalized();
        const int p = joints[j].parent;
        if (p < 0) {
            g.rotation[j] = local;
            g.position[j] = joints[j].rest_position + pose.root_translation;
        } else {
            g.rotation[j] = g.rotation[p] * local;
            g.position[j] = g.position[p] + g.rotation[p] * (joints[j].rest_position - joints[p].rest_position);
        }
    }
    return g;
}

}  // namespace

std::vector<Eigen::Isometry3d> joint_transforms(const SkinnedBody& body, const BodyPose& pose) {
    check_pose(body, pose);
    const GlobalPose g = compose(body, pose);
    std::vector<Eigen::Isometry3d> out(body.num_joints());
    for (std::size_t j = 0; j < out.size(); ++j) {
        Eigen::Isometry3d t = Eigen::Isometry3d::Identity();
        t.linear() = g.rotation[j].toRotationMatrix();
        t.translation() = g.position[j] - t.linear() * body.joints()[j].rest_position;
        out[j] = t;
    }
    return out;
}

std::vector<Vec3> posed_joint_positions(const SkinnedBody& body, const BodyPose& pose) {
    check_pose(body, pose);
    return compose(body, pose).position;
}

std::vector<Vec3> blend_vertices(std::span<const Vec3> vertices, std::span<const VertexWeights> weights,
                                 std::span<const Eigen::Isometry3d> transforms) {
    require(vertices.size() == weights.size(), "blend_vertices: weight count mismatch");
    std::vector<Vec3> out(vertices.size());
    for (std::size_t i = 0; i < vertices.size(); ++i) {
        Vec3 acc = Vec3::Zero();
        for (const auto& w : weights[i]) {
            require(w.joint >= 0 && static_cast<std::size_t>(w.joint) < transforms.size(),
                    "blend_vertices: joint index out of range");
            acc += w.weight * (transforms[w.joint] * vertices[i]);
        }
        out[i] = acc;
    }
    return out;
}

TriangleMesh lbs_skin(const SkinnedBody& body, const BodyPose& pose) {
    check_pose(body, pose);
    std::vector<Vec3> shaped = body.shaped_vertices();
    if (pose.is_identity()) return body.rest_mesh().with_vertices(std::move(shaped));
    const auto transforms = joint_transforms(body, pose);
    return body.rest_mesh().with_vertices(blend_vertices(shaped, body.weights(), transforms));
}

// ---------------------------------------------------------------------------
// JSON formats

namespace {

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 json_vec(const json& j) {
    if (!j.is_array() || j.size() != 3) throw IoError("expected a 3-vector");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw IoError(path + ": " + e.what());
    }
}

void write_json(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << j.dump(1) << '\n';
}

}  // namespace

SkinnedBody read_body(const std::string& path) {
    const json j = read_json(path);
    try {
        std::vector<Vec3> vertices;
        for (const auto& v : j.at("vertices")) vertices.push_back(json_vec(v));
        std::vector<Face> faces;
        for (const auto& f : j.at("faces")) faces.push_back({f.at(0).get<int>(), f.at(1).get<int>(), f.at(2).get<int>()});
        std::vector<Joint> joints;
        for (const auto& jt : j.at("joints"))
            joints.push_back({jt.value("name", std::string()), jt.at("parent").get<int>(), json_vec(jt.at("rest_position"))});
        std::vector<VertexWeights> weights;
        for (const auto& vw : j.at("weights")) {
            VertexWeights w;
            for (const auto& pair : vw) w.push_back({pair.at(0).get<int>(), pair.at(1).get<double>()});
            weights.push_back(std::move(w));
        }
        std::vector<int> scalp = j.value("scalp_faces", std::vector<int>{});
        SkinnedBody body(TriangleMesh(std::move(vertices), std::move(faces)), std::move(joints), std::move(weights),
                         std::move(scalp));
        if (j.contains("shape_basis")) {
            std::vector<std::vector<Vec3>> basis;
            for (const auto& b : j.at("shape_basis")) {
                std::vector<Vec3> vb;
                for (const auto& v : b) vb.push_back(json_vec(v));
                basis.push_back(std::move(vb));
            }
            body.set_shape_basis(std::move(basis), j.at("shape_coefficients").get<std::vector<double>>());
        }
        return body;
    } catch (const json::exception& e) {
        throw IoError(path + ": " + e.what());
    }
}

void write_body(const std::string& path, const SkinnedBody& body) {
    json j;
    json verts = json::array();
    for (const auto& v : body.rest_mesh().vertices()) verts.push_back(vec_json(v));
    j["vertices"] = std::move(verts);
    json faces = json::array();
    for (const auto& f : body.rest_mesh().faces()) faces.push_back({f[0], f[1], f[2]});
    j["faces"] = std::move(faces);
    json joints = json::array();
    for (const auto& jt : body.joints())
        joints.push_back({{"name", jt.name}, {"parent", jt.parent}, {"rest_position", vec_json(jt.rest_position)}});
    j["joints"] = std::move(joints);
    json weights = json::array();
    for (const auto& vw : body.weights()) {
        json w = json::array();
        for (const auto& s : vw) w.push_back({s.joint, s.weight});
        weights.push_back(std::move(w));
    }
    j["weights"] = std::move(weights);
    j["scalp_faces"] = body.scalp_faces();
    if (!body.shape_basis().empty()) {
        json basis = json::array();
        for (const auto& b : body.shape_basis()) {
            json vb = json::array();
            for (const auto& v : b) vb.push_back(vec_json(v));
            basis.push_back(std::move(vb));
        }
        j["shape_basis"] = std::move(basis);
        j["shape_coefficients"] = body.shape_coefficients();
    }
    write_json(path, j);
}

PoseSequence read_pose_sequence(const std::string& path) {
    const json j = read_json(path);
    PoseSequence seq;
    try {
        seq.frame_interval = j.at("frame_interval").get<double>();
        for (const auto& f : j.at("frames")) {
            BodyPose pose;
            for (const auto& q : f.at("rotations"))
                pose.rotations.emplace_back(q.at(0).get<double>(), q.at(1).get<double>(), q.at(2).get<double>(),
                                            q.at(3).get<double>());
            pose.root_translation = json_vec(f.at("root_translation"));
            seq.frames.push_back(std::move(pose));
        }
    } catch (const json::exception& e) {
        throw IoError(path + ": " + e.what());
    }
    seq.validate();
    return seq;
}

void write_pose_sequence(const std::string& path, const PoseSequence& poses) {
    json j;
    j["frame_interval"] = poses.frame_interval;
    json frames = json::array();
    for (const auto& p : poses.frames) {
        json rot = json::array();
        for (const auto& q : p.rotations) rot.push_back({q.w(), q.x(), q.y(), q.z()});
        frames.push_back({{"rotations", std::move(rot)}, {"root_translation", vec_json(p.root_translation)}});
    }
    j["frames"] = std::move(frames);
    write_json(path, j);
}

}  // namespace avatar
