#include "avatar/render/shading.hpp"

#include <cmath>

namespace avatar {

void LightRanges::validate() const {
    require(radius_min > 0.0 && radius_min <= radius_max, "light radius range must satisfy 0 < min <= max");
    require(color_min >= 0.0 && color_min <= color_max, "light colour range must satisfy 0 <= min <= max");
    require(ambient_min >= 0.0 && ambient_min <= ambient_max && ambient_max <= 1.0,
            "ambient range must lie in [0, 1] with min <= max");
}

namespace {

Vec3 light_direction(const Vec3& mean, const LightSample& light) {
    const Vec3 d = light.position - mean;
    const double n = d.norm();
    if (!(n > 1e-12)) throw InvalidArgument("light position coincides with the shaded point");
    return d / n;
}

}  // namespace

Vec3 shading_factor(const Vec3& normal, const Vec3& mean, const LightSample& light) {
    if (std::abs(normal.norm() - 1.0) > 1e-4) throw InvalidArgument("shading normal must be unit length");
    const double diffuse = std::max(0.0, normal.dot(light_direction(mean, light)));
    return diffuse * light.color + light.ambient;
}

Vec3 shade_gaussian(const Vec3& f, const Vec3& normal, const Vec3& mean, const LightSample& light) {
    return f.cwiseProduct(shading_factor(normal, mean, light));
}

Vec3 strand_shading_factor(const Vec3& direction, const Vec3& mean, const LightSample& light) {
    const Vec3 l = light_direction(mean, light);
    const Vec3 d = direction.normalized();
    const Vec3 rejection = l - l.dot(d) * d;
    const double n = rejection.norm();
    if (n < 1e-9) return light.ambient;
    const double diffuse = std::max(0.0, (rejection / n).dot(l));
    return diffuse * light.color + light.ambient;
}

Vec3 shade_strand_gaussian(const Vec3& f, const Vec3& direction, const Vec3& mean, const LightSample& light) {
    return f.cwiseProduct(strand_shading_factor(direction, mean, light));
}

LightSample sample_light(const LightRanges& ranges, const Vec3& center, Rng& rng) {
    ranges.validate();
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    Vec3 dir;
    do {
        dir = Vec3(normal(rng), normal(rng), normal(rng));
    } while (dir.norm() < 1e-12);
    dir.normalize();
    // Uniform in the shell volume.
    const double r3min = std::pow(ranges.radius_min, 3), r3max = std::pow(ranges.radius_max, 3);
    const double r = ranges.radius_min == ranges.radius_max ? ranges.radius_min : std::cbrt(r3min + uni(rng) * (r3max - r3min));
    auto lerp = [&](double lo, double hi) { return lo == hi ? lo : lo + uni(rng) * (hi - lo); };
    LightSample s;
    s.position = center + std::clamp(r, ranges.radius_min, ranges.radius_max) * dir;
    s.color = Vec3(lerp(ranges.color_min, ranges.color_max), lerp(ranges.color_min, ranges.color_max),
                   lerp(ranges.color_min, ranges.color_max));
    s.ambient = Vec3(lerp(ranges.ambient_min, ranges.ambient_max), lerp(ranges.ambient_min, ranges.ambient_max),
                     lerp(ranges.ambient_min, ranges.ambient_max));
    return s;
}

}  // namespace avatar
