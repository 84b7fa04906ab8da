#include "avatar/gaussian/gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <unordered_map>

namespace avatar {

void GaussianPrimitive::validate() const {
    if (!(opacity >= 0.0 && opacity <= 1.0)) throw InvalidArgument("gaussian opacity outside [0, 1]");
    if (!(scale.minCoeff() > 0.0)) throw InvalidArgument("gaussian scale must be positive");
    if (std::abs(rotation.norm() - 1.0) > 1e-6) throw InvalidArgument("gaussian rotation is not unit-norm");
    if (features.size() < 3 || features.size() % 3 != 0) throw InvalidArgument("gaussian features must be RGB triples");
}

FaceFrame face_frame(const TriangleMesh& mesh, int face) {
    if (face < 0 || face >= static_cast<int>(mesh.num_faces()))
        throw InvalidArgument("face index " + std::to_string(face) + " out of range");
    const Face& f = mesh.face(face);
    const Vec3& a = mesh.vertex(f[0]);
    const Vec3& b = mesh.vertex(f[1]);
    const Vec3& c = mesh.vertex(f[2]);
    if (triangle_area(a, b, c) <= kDegenerateArea)
        throw InvalidArgument("face " + std::to_string(face) + " is degenerate");
    FaceFrame frame;
    frame.origin = (a + b + c) / 3.0;
    frame.rotation = triangle_basis(a, b, c);
    frame.scale = ((b - a).norm() + (c - b).norm() + (a - c).norm()) / 3.0;
    return frame;
}

GaussianPose globalize_mesh_gaussian(const GaussianPrimitive& g, const FaceFrame& frame) {
    if (!is_face_bound(g.binding)) throw InvalidArgument("globalize_mesh_gaussian needs a face-bound primitive");
    GaussianPose out;
    out.mean = frame.scale * (frame.rotation * g.position) + frame.origin;
    out.rotation = (Quat(frame.rotation) * g.rotation).normalized();
    out.scale = frame.scale * g.scale;
    return out;
}

Quat rotation_from_x_axis(const Vec3& d) {
    const Vec3 u = Vec3::UnitX();
    const Vec3 axis = u.cross(d);
    Quat q(1.0 + u.dot(d), axis.x(), axis.y(), axis.z());
    const double n = q.norm();
    if (n < 1e-12) return Quat(0.0, 0.0, 0.0, 1.0);
    q.coeffs() /= n;
    return q;
}

GaussianPose globalize_strand_gaussian(const HairStrands& strands, int strand, int segment, double gamma) {
    if (strand < 0 || strand >= strands.num_strands() || segment < 0 || segment >= strands.num_segments())
        throw InvalidArgument("segment binding (" + std::to_string(strand) + ", " + std::to_string(segment) +
                              ") out of range");
    const Vec3& a = strands.point(strand, segment);
    const Vec3& b = strands.point(strand, segment + 1);
    const double len = (b - a).norm();
    if (!(len > 1e-9)) throw InvalidArgument("strand segment has near-zero length");
    GaussianPose out;
    out.mean = 0.5 * (a + b);
    out.scale = Vec3(0.5 * len, gamma, gamma);
    out.rotation = rotation_from_x_axis((b - a) / len);
    return out;
}

std::vector<PlacedGaussian> place_gaussians(std::span<const GaussianPrimitive> gaussians, const TriangleMesh* mesh,
                                            const HairStrands* strands, double gamma) {
    std::vector<PlacedGaussian> out(gaussians.size());
    std::unordered_map<int, FaceFrame> frames;
    if (mesh) {
        for (const auto& g : gaussians)
            if (const auto* fb = std::get_if<FaceBinding>(&g.binding)) {
                if (!frames.count(fb->face)) frames.emplace(fb->face, face_frame(*mesh, fb->face));
            }
    }
    parallel_for(gaussians.size(), [&](std::size_t i) {
        const GaussianPrimitive& g = gaussians[i];
        if (const auto* fb = std::get_if<FaceBinding>(&g.binding)) {
            if (!mesh) throw InvalidArgument("face-bound primitive without a mesh");
            const FaceFrame& frame = frames.at(fb->face);
            out[i].pose = globalize_mesh_gaussian(g, frame);
            out[i].normal = frame.rotation.col(1);
        } else {
            const auto& sb = std::get<SegmentBinding>(g.binding);
            if (!strands) throw InvalidArgument("segment-bound primitive without strands");
            out[i].pose = globalize_strand_gaussian(*strands, sb.strand, sb.segment, gamma);
            out[i].normal = out[i].pose.rotation * Vec3::UnitX();
            out[i].strand = true;
        }
    });
    return out;
}

std::vector<GaussianPrimitive> init_mesh_gaussians(const TriangleMesh& mesh, int count, std::uint64_t seed,
                                                   int sh_degree) {
    require(count >= 1, "gaussian count must be >= 1");
    if (mesh.empty()) throw InvalidArgument("cannot initialize gaussians on an empty mesh");
    require(sh_degree >= 0 && sh_degree <= 3, "sh degree must be in [0, 3]");

    std::vector<double> cumulative(mesh.num_faces());
    double total = 0.0;
    for (std::size_t f = 0; f < mesh.num_faces(); ++f) {
        total += mesh.face_area(static_cast<int>(f));
        cumulative[f] = total;
    }
    const double world_scale = kInitScaleFactor * std::sqrt(total / count);

    Rng rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::vector<GaussianPrimitive> out(static_cast<std::size_t>(count));
    for (auto& g : out) {
        const double pick = uni(rng) * total;
        const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), pick);
        const int face = static_cast<int>(std::min<std::ptrdiff_t>(it - cumulative.begin(), cumulative.size() - 1));
        const double r1 = std::sqrt(uni(rng));
        const double r2 = uni(rng);
        const Vec3 bary(1.0 - r1, r1 * (1.0 - r2), r1 * r2);
        const FaceFrame frame = face_frame(mesh, face);
        g.position = frame.rotation.transpose() * (mesh.point_on_face(face, bary) - frame.origin) / frame.scale;
        g.rotation = Quat::Identity();
        g.scale = Vec3::Constant(world_scale / frame.scale);
        g.features = Eigen::VectorXd::Constant(feature_dim(sh_degree), 0.5);
        g.opacity = 0.5;
        g.binding = FaceBinding{face};
    }
    return out;
}

std::vector<GaussianPrimitive> init_strand_gaussians(const HairStrands& strands, int sh_degree) {
    std::vector<GaussianPrimitive> out;
    out.reserve(static_cast<std::size_t>(strands.num_strands()) * strands.num_segments());
    for (int s = 0; s < strands.num_strands(); ++s)
        for (int k = 0; k < strands.num_segments(); ++k) {
            GaussianPrimitive g;
            g.scale = Vec3::Ones();
            g.features = Eigen::VectorXd::Constant(feature_dim(sh_degree), 0.5);
            g.opacity = 0.5;
            g.binding = SegmentBinding{s, k};
            out.push_back(std::move(g));
        }
    return out;
}

std::vector<GaussianPrimitive> densify(std::span<const GaussianPrimitive> gaussians,
                                       std::span<const DensifyStats> stats, const DensifyPolicy& policy) {
    require(stats.size() == gaussians.size(), "densify stats must align with gaussians");
    std::unordered_map<int, int> survivors_per_face;
    std::unordered_map<int, int> kept_low;
    for (const auto& g : gaussians)
        if (const auto* fb = std::get_if<FaceBinding>(&g.binding))
            if (g.opacity >= policy.prune_opacity) ++survivors_per_face[fb->face];

    Rng rng(policy.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<GaussianPrimitive> out;
    out.reserve(gaussians.size());
    for (std::size_t i = 0; i < gaussians.size(); ++i) {
        const GaussianPrimitive& g = gaussians[i];
        const auto* fb = std::get_if<FaceBinding>(&g.binding);
        if (!fb) {
            out.push_back(g);
            continue;
        }
        if (g.opacity < policy.prune_opacity) {
            // Keep exactly one low-opacity primitive on faces that would otherwise go bare.
            if (survivors_per_face[fb->face] == 0 && kept_low[fb->face]++ == 0) out.push_back(g);
            continue;
        }
        if (stats[i].footprint > policy.footprint_threshold && stats[i].gradient_norm > policy.gradient_threshold) {
            const double step = policy.jitter * g.scale.maxCoeff();
            for (int child = 0; child < 2; ++child) {
                GaussianPrimitive c = g;
                c.scale = 0.5 * g.scale;
                // Local x and z span the face plane; y is the normal.
                c.position += step * Vec3(normal(rng), 0.0, normal(rng));
                out.push_back(std::move(c));
            }
            continue;
        }
        out.push_back(g);
    }
    return out;
}

void validate_bindings(std::span<const GaussianPrimitive> gaussians, const TriangleMesh* mesh,
                       const HairStrands* strands) {
    for (const auto& g : gaussians) {
        if (const auto* fb = std::get_if<FaceBinding>(&g.binding)) {
            if (!mesh || fb->face < 0 || fb->face >= static_cast<int>(mesh->num_faces()))
                throw InvalidArgument("face binding " + std::to_string(fb->face) + " is invalid");
        } else {
            const auto& sb = std::get<SegmentBinding>(g.binding);
            if (!strands || sb.strand < 0 || sb.strand >= strands->num_strands() || sb.segment < 0 ||
                sb.segment >= strands->num_segments())
                throw InvalidArgument("segment binding (" + std::to_string(sb.strand) + ", " +
                                      std::to_string(sb.segment) + ") is invalid");
        }
    }
}

}  // namespace avatar
