#pragma once

#include "avatar/geometry/mesh.hpp"

#include <span>
#include <string>
#include <vector>

namespace avatar {

struct RootBinding {
    int face = 0;
    Vec3 barycentric = Vec3(1, 0, 0);
};

// Ns strands of Nl segments each, stored as Ns x (Nl + 1) points, root first.
class HairStrands {
public:
    HairStrands() = default;
    HairStrands(int num_strands, int num_segments, std::vector<Vec3> points, std::vector<RootBinding> bindings = {});

    int num_strands() const { return num_strands_; }
    int num_segments() const { return num_segments_; }
    int points_per_strand() const { return num_segments_ + 1; }

    const std::vector<Vec3>& points() const { return points_; }
    std::vector<Vec3>& mutable_points() { return points_; }
    const std::vector<RootBinding>& bindings() const { return bindings_; }
    bool has_bindings() const { return !bindings_.empty(); }

    const Vec3& point(int strand, int k) const { return points_[index(strand, k)]; }
    Vec3& point(int strand, int k) { return points_[index(strand, k)]; }
    std::span<const Vec3> strand(int s) const {
        return {points_.data() + index(s, 0), static_cast<std::size_t>(points_per_strand())};
    }

    HairStrands with_points(std::vector<Vec3> points) const;

    double strand_length(int s) const;

private:
    std::size_t index(int strand, int k) const {
        return static_cast<std::size_t>(strand) * static_cast<std::size_t>(points_per_strand()) +
               static_cast<std::size_t>(k);
    }

    int num_strands_ = 0;
    int num_segments_ = 0;
    std::vector<Vec3> points_;
    std::vector<RootBinding> bindings_;
};

// Root of each strand placed at its binding on posed_body; the rest of the strand
// moves rigidly with the bound face's frame change relative to reference_body.
HairStrands strand_roots_follow(const HairStrands& strands, const TriangleMesh& reference_body,
                                const TriangleMesh& posed_body);

// Barycentric point on the bound face; the single source of truth for root positions.
Vec3 evaluate_root(const TriangleMesh& mesh, const RootBinding& binding);

struct ScalpRegion {
    const TriangleMesh* mesh = nullptr;
    std::vector<int> faces;
};

struct CurlParams {
    bool straight = true;
    double amplitude = 0.0;       // radians between segment direction and the curl axis
    double turns_per_meter = 0.0;
    double droop = 0.0;           // 0: along the scalp normal, 1: fully downward at the tip
};

// Deterministic in seed; roots area-uniform over the scalp faces, all segments
// exactly length / segments long.
HairStrands procedural_strand_gen(const ScalpRegion& scalp, int num_strands, int num_segments, double length,
                                  const CurlParams& curl, std::uint64_t seed);

// Binary format: uint32 Ns, uint32 Nl, then Ns*(Nl+1) float32 xyz triples (little-endian).
void write_strands(const std::string& path, const HairStrands& strands);
HairStrands read_strands(const std::string& path);
void write_strands(std::ostream& out, const HairStrands& strands);
HairStrands read_strands(std::istream& in);

void write_root_bindings(const std::string& path, std::span<const RootBinding> bindings);
std::vector<RootBinding> read_root_bindings(const std::string& path);

}  // namespace avatar
