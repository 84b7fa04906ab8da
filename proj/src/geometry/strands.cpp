#include "avatar/geometry/strands.hpp"

#include "text_io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace avatar {

HairStrands::HairStrands(int num_strands, int num_segments, std::vector<Vec3> points,
                         std::vector<RootBinding> bindings)
    : num_strands_(num_strands), num_segments_(num_segments), points_(std::move(points)), bindings_(std::move(bindings)) {
    require(num_strands >= 0, "strand count must be non-negative");
    require(num_segments >= 1, "every strand needs at least 2 points");
    require(points_.size() == static_cast<std::size_t>(num_strands) * static_cast<std::size_t>(num_segments + 1),
            "strand point array has the wrong size");
    require(bindings_.empty() || bindings_.size() == static_cast<std::size_t>(num_strands),
            "root bindings must cover every strand");
    for (const auto& b : bindings_) {
        const Vec3& w = b.barycentric;
        if (w.minCoeff() < 0.0 || w.maxCoeff() > 1.0 || std::abs(w.sum() - 1.0) > 1e-9)
            throw InvalidArgument("root binding barycentric coordinates must lie in the simplex");
    }
}

HairStrands HairStrands::with_points(std::vector<Vec3> points) const {
    return HairStrands(num_strands_, num_segments_, std::move(points), bindings_);
}

double HairStrands::strand_length(int s) const {
    double len = 0.0;
    for (int k = 0; k < num_segments_; ++k) len += (point(s, k + 1) - point(s, k)).norm();
    return len;
}

Vec3 evaluate_root(const TriangleMesh& mesh, const RootBinding& binding) {
    if (binding.face < 0 || binding.face >= static_cast<int>(mesh.num_faces()))
        throw InvalidArgument("root binding references face " + std::to_string(binding.face) + " of " +
                              std::to_string(mesh.num_faces()));
    return mesh.point_on_face(binding.face, binding.barycentric);
}

HairStrands strand_roots_follow(const HairStrands& strands, const TriangleMesh& reference_body,
                                const TriangleMesh& posed_body) {
    require(strands.has_bindings(), "strand_roots_follow needs root bindings");
    require(reference_body.num_faces() == posed_body.num_faces(), "reference and posed body topology differ");
    std::vector<Vec3> out = strands.points();
    const int n = strands.points_per_strand();
    for (int s = 0; s < strands.num_strands(); ++s) {
        const RootBinding& b = strands.bindings()[s];
        const Vec3 root = evaluate_root(posed_body, b);
        const Face& f = posed_body.face(b.face);
        const bool unchanged = posed_body.vertex(f[0]) == reference_body.vertex(f[0]) &&
                               posed_body.vertex(f[1]) == reference_body.vertex(f[1]) &&
                               posed_body.vertex(f[2]) == reference_body.vertex(f[2]);
        const std::size_t base = static_cast<std::size_t>(s) * static_cast<std::size_t>(n);
        if (unchanged) {
            out[base] = root;
            continue;
        }
        const Vec3 ref_root = evaluate_root(reference_body, b);
        const Mat3 r_ref = triangle_basis(reference_body.vertex(f[0]), reference_body.vertex(f[1]),
                                          reference_body.vertex(f[2]));
        const Mat3 r_pose = triangle_basis(posed_body.vertex(f[0]), posed_body.vertex(f[1]), posed_body.vertex(f[2]));
        const Mat3 delta = r_pose * r_ref.transpose();
        out[base] = root;
        for (int k = 1; k < n; ++k) out[base + k] = root + delta * (strands.points()[base + k] - ref_root);
    }
    return strands.with_points(std::move(out));
}

HairStrands procedural_strand_gen(const ScalpRegion& scalp, int num_strands, int num_segments, double length,
                                  const CurlParams& curl, std::uint64_t seed) {
    require(num_strands >= 1, "need at least one strand");
    require(num_segments >= 1, "need at least one segment per strand");
    require(length > 0.0, "strand length must be positive");
    if (scalp.mesh == nullptr || scalp.faces.empty()) throw InvalidArgument("scalp region is empty");
    const TriangleMesh& mesh = *scalp.mesh;

    std::vector<double> cumulative;
    cumulative.reserve(scalp.faces.size());
    double total = 0.0;
    for (int f : scalp.faces) {
        require(f >= 0 && f < static_cast<int>(mesh.num_faces()), "scalp face out of range");
        total += mesh.face_area(f);
        cumulative.push_back(total);
    }

    Rng rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const double step = length / num_segments;
    const Vec3 down(0, 0, -1);

    std::vector<Vec3> points;
    points.reserve(static_cast<std::size_t>(num_strands) * (num_segments + 1));
    std::vector<RootBinding> bindings;
    bindings.reserve(num_strands);

    for (int s = 0; s < num_strands; ++s) {
        const double pick = uni(rng) * total;
        const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), pick);
        const std::size_t slot = std::min<std::size_t>(it - cumulative.begin(), cumulative.size() - 1);
        const int face = scalp.faces[slot];
        // Uniform barycentric sample via the square-root warp.
        const double r1 = std::sqrt(uni(rng));
        const double r2 = uni(rng);
        RootBinding binding{face, Vec3(1.0 - r1, r1 * (1.0 - r2), r1 * r2)};
        binding.barycentric[0] = 1.0 - binding.barycentric[1] - binding.barycentric[2];
        const double phase = 2.0 * M_PI * uni(rng);

        const Vec3 root = evaluate_root(mesh, binding);
        const Vec3 normal = mesh.face_normal(face);
        points.push_back(root);
        Vec3 p = root;
        for (int k = 0; k < num_segments; ++k) {
            Vec3 dir = normal;
            if (!curl.straight) {
                const double u = (k + 0.5) / num_segments;
                Vec3 axis = ((1.0 - curl.droop * u) * normal + curl.droop * u * down);
                if (axis.norm() < 1e-9) axis = down;
                axis.normalize();
                Vec3 b1 = axis.unitOrthogonal();
                Vec3 b2 = axis.cross(b1);
                const double angle = phase + 2.0 * M_PI * curl.turns_per_meter * (k + 0.5) * step;
                dir = std::cos(curl.amplitude) * axis +
                      std::sin(curl.amplitude) * (std::cos(angle) * b1 + std::sin(angle) * b2);
                dir.normalize();
            }
            p = p + step * dir;
            points.push_back(p);
        }
        bindings.push_back(binding);
    }
    return HairStrands(num_strands, num_segments, std::move(points), std::move(bindings));
}

void write_strands(std::ostream& out, const HairStrands& strands) {
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(strands.num_strands()));
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(strands.num_segments()));
    for (const auto& p : strands.points())
        for (int c = 0; c < 3; ++c) detail::write_le<float>(out, static_cast<float>(p[c]));
}

HairStrands read_strands(std::istream& in) {
    const auto ns = detail::read_le<std::uint32_t>(in);
    const auto nl = detail::read_le<std::uint32_t>(in);
    if (nl < 1) throw IoError("strand file declares zero segments");
    std::vector<Vec3> points(static_cast<std::size_t>(ns) * (nl + 1));
    for (auto& p : points)
        for (int c = 0; c < 3; ++c) p[c] = detail::read_le<float>(in);
    return HairStrands(static_cast<int>(ns), static_cast<int>(nl), std::move(points));
}

void write_strands(const std::string& path, const HairStrands& strands) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    write_strands(out, strands);
}

HairStrands read_strands(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    return read_strands(in);
}

void write_root_bindings(const std::string& path, std::span<const RootBinding> bindings) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& b : bindings)
        j.push_back({{"face", b.face}, {"barycentric", {b.barycentric.x(), b.barycentric.y(), b.barycentric.z()}}});
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << j.dump() << '\n';
}

std::vector<RootBinding> read_root_bindings(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::vector<RootBinding> out;
    try {
        for (const auto& b : nlohmann::json::parse(in)) {
            const auto& w = b.at("barycentric");
            out.push_back({b.at("face").get<int>(), Vec3(w.at(0).get<double>(), w.at(1).get<double>(), w.at(2).get<double>())});
        }
    } catch (const nlohmann::json::exception& e) {
        throw IoError(path + ": " + e.what());
    }
    return out;
}

}  // namespace avatar
