#pragma once

#include "avatar/gaussian/gaussian.hpp"

#include <iosfwd>
#include <string>

namespace avatar {

// Zeroth-order spherical harmonic constant; DC colour = 0.5 + kSH0 * f_dc.
constexpr double kSH0 = 0.28209479177387814;

// One exported splat in world space.
struct SplatRecord {
    Vec3 mean = Vec3::Zero();
    Quat rotation = Quat::Identity();
    Vec3 scale = Vec3::Ones();
    Eigen::VectorXd features = Eigen::VectorXd::Constant(3, 0.5);
    double opacity = 0.5;
};

std::vector<SplatRecord> make_splat_records(std::span<const GaussianPrimitive> gaussians,
                                            std::span<const PlacedGaussian> placed);

// Header text for the binary little-endian splat layout.
std::string splat_ply_header(std::size_t count, int sh_degree);

// Properties: x y z, f_dc_0..2, f_rest_*, opacity (logit), scale_0..2 (log),
// rot_0..3 (w first), all float32.
void write_splat_ply(std::ostream& out, std::span<const SplatRecord> splats, int sh_degree);
void write_splat_ply(const std::string& path, std::span<const SplatRecord> splats, int sh_degree);
std::vector<SplatRecord> read_splat_ply(std::istream& in, int* sh_degree = nullptr);
std::vector<SplatRecord> read_splat_ply(const std::string& path, int* sh_degree = nullptr);

// Lossless text table of primitives with their bindings (shortest round-trip decimals).
void write_gaussian_table(std::ostream& out, std::span<const GaussianPrimitive> gaussians);
void write_gaussian_table(const std::string& path, std::span<const GaussianPrimitive> gaussians);
std::vector<GaussianPrimitive> read_gaussian_table(std::istream& in);
std::vector<GaussianPrimitive> read_gaussian_table(const std::string& path);

}  // namespace avatar
