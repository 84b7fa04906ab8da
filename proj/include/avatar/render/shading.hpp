#pragma once

#include "avatar/common.hpp"

namespace avatar {

struct LightSample {
    Vec3 position = Vec3(0, -3, 2);
    Vec3 color = Vec3::Ones();
    Vec3 ambient = Vec3::Constant(0.2);
};

struct LightRanges {
    double radius_min = 2.0;
    double radius_max = 5.0;
    double color_min = 0.5;
    double color_max = 1.0;
    double ambient_min = 0.1;
    double ambient_max = 0.4;

    void validate() const;
};

// f' = f * (max(0, n . (l_p - mu) / |l_p - mu|) * l_c + l_a).
Vec3 shade_gaussian(const Vec3& f, const Vec3& normal, const Vec3& mean, const LightSample& light);

// Per-channel multiplier applied to f, i.e. f' = f .* shading_factor(...).
Vec3 shading_factor(const Vec3& normal, const Vec3& mean, const LightSample& light);

// Strand variant: the normal is the normalized rejection of the light direction from
// the strand direction; a light parallel to the strand leaves ambient only.
Vec3 shade_strand_gaussian(const Vec3& f, const Vec3& direction, const Vec3& mean, const LightSample& light);
Vec3 strand_shading_factor(const Vec3& direction, const Vec3& mean, const LightSample& light);

// Light position uniform on the spherical shell [radius_min, radius_max] around center.
LightSample sample_light(const LightRanges& ranges, const Vec3& center, Rng& rng);

}  // namespace avatar
