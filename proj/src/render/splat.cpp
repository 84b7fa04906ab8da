#include "avatar/render/splat.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace avatar {

Mat3 covariance_from(const Quat& rotation, const Vec3& scale) {
    const Mat3 r = rotation.normalized().toRotationMatrix();
    const Mat3 s = scale.asDiagonal();
    return r * s * s.transpose() * r.transpose();
}

namespace {

struct Projected {
    int index;
    double depth;
    double mx, my;
    double ca, cb, cc;  // conic (inverse 2D covariance) entries
    double radius_x, radius_y;
    int xmin, xmax, ymin, ymax;
    Vec3 color;
    double opacity;
};

bool project(const RenderGaussian& g, int index, const Camera& cam, Projected& out) {
    if (g.opacity < kMinOpacity) return false;
    const Vec3 t = cam.world_to_camera * g.mean;
    if (!(t.z() >= cam.near && t.z() <= cam.far)) return false;
    const Mat3& w = cam.world_to_camera.linear();
    const Mat3 cov_cam = w * g.covariance * w.transpose();
    Eigen::Matrix<double, 2, 3> j;
    const double iz = 1.0 / t.z();
    j << cam.fx * iz, 0.0, -cam.fx * t.x() * iz * iz, 0.0, cam.fy * iz, -cam.fy * t.y() * iz * iz;
    Eigen::Matrix2d cov = j * cov_cam * j.transpose();
    cov(0, 0) += kCovarianceDilation;
    cov(1, 1) += kCovarianceDilation;
    const double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(1, 0);
    if (!(det > 0.0)) return false;
    out.index = index;
    out.depth = t.z();
    out.mx = cam.fx * t.x() * iz + cam.cx;
    out.my = cam.fy * t.y() * iz + cam.cy;
    out.ca = cov(1, 1) / det;
    out.cb = -0.5 * (cov(0, 1) + cov(1, 0)) / det;
    out.cc = cov(0, 0) / det;
    const double k = std::sqrt(kSupportMahalanobis2);
    out.radius_x = k * std::sqrt(cov(0, 0));
    out.radius_y = k * std::sqrt(cov(1, 1));
    // One pixel of margin around the exact 3-sigma extent.
    const double fx0 = std::floor(out.mx - out.radius_x), fx1 = std::ceil(out.mx + out.radius_x);
    const double fy0 = std::floor(out.my - out.radius_y), fy1 = std::ceil(out.my + out.radius_y);
    if (!std::isfinite(out.mx) || !std::isfinite(out.my)) return false;
    if (fx1 < 0.0 || fy1 < 0.0 || fx0 > cam.width - 1 || fy0 > cam.height - 1) return false;
    out.xmin = static_cast<int>(std::max(fx0, 0.0));
    out.xmax = static_cast<int>(std::min(fx1, static_cast<double>(cam.width - 1)));
    out.ymin = static_cast<int>(std::max(fy0, 0.0));
    out.ymax = static_cast<int>(std::min(fy1, static_cast<double>(cam.height - 1)));
    out.color = g.color;
    out.opacity = g.opacity;
    return true;
}

std::vector<Projected> project_all(std::span<const RenderGaussian> gaussians, const Camera& cam, LayerMask layers) {
    std::vector<Projected> out;
    out.reserve(gaussians.size());
    for (std::size_t i = 0; i < gaussians.size(); ++i) {
        const RenderGaussian& g = gaussians[i];
        if (!(layer_bit(g.layer) & layers)) continue;
        if (!g.mean.allFinite() || !g.covariance.allFinite() || !g.color.allFinite() || !std::isfinite(g.opacity))
            throw InvalidArgument("render input gaussian " + std::to_string(i) + " is not finite");
        Projected p;
        if (project(g, static_cast<int>(i), cam, p)) out.push_back(p);
    }
    std::sort(out.begin(), out.end(), [](const Projected& a, const Projected& b) {
        return a.depth < b.depth || (a.depth == b.depth && a.index < b.index);
    });
    return out;
}

// Shared per-pixel math: both renderers go through this function.
template <typename Range>
void shade_pixel(int x, int y, const Range& sorted, const std::vector<Projected>& proj, const Vec3& background,
                 bool keep, Vec3& color_out, double& alpha_out, double& bg_weight_out,
                 std::vector<Contributor>* contributors) {
    double transmittance = 1.0;
    Vec3 color = Vec3::Zero();
    for (int k : sorted) {
        const Projected& p = proj[static_cast<std::size_t>(k)];
        if (x < p.xmin || x > p.xmax || y < p.ymin || y > p.ymax) continue;
        const double dx = x - p.mx, dy = y - p.my;
        const double q = p.ca * dx * dx + 2.0 * p.cb * dx * dy + p.cc * dy * dy;
        if (q > kSupportMahalanobis2) continue;
        const double falloff = std::exp(-0.5 * q);
        double alpha = p.opacity * falloff;
        const bool clipped = alpha > kAlphaClip;
        if (clipped) alpha = kAlphaClip;
        if (keep) contributors->push_back({p.index, alpha, transmittance, falloff, clipped});
        color += (alpha * transmittance) * p.color;
        transmittance *= 1.0 - alpha;
    }
    color_out = color + transmittance * background;
    alpha_out = 1.0 - transmittance;
    bg_weight_out = transmittance;
}

RenderOutput make_output(const Camera& cam, const RenderOptions& options) {
    RenderOutput out;
    out.color = Image(cam.width, cam.height);
    const std::size_t n = static_cast<std::size_t>(cam.width) * cam.height;
    out.alpha.assign(n, 0.0);
    out.background_weight.assign(n, 1.0);
    out.background = options.background;
    out.has_contributors = options.keep_contributors;
    if (options.keep_contributors) out.contributors.resize(n);
    return out;
}

}  // namespace

RenderOutput render(std::span<const RenderGaussian> gaussians, const Camera& camera, const RenderOptions& options) {
    camera.validate();
    const std::vector<Projected> proj = project_all(gaussians, camera, options.layers);
    RenderOutput out = make_output(camera, options);

    const int tiles_x = (camera.width + kTileSize - 1) / kTileSize;
    const int tiles_y = (camera.height + kTileSize - 1) / kTileSize;
    std::vector<std::vector<int>> tile_lists(static_cast<std::size_t>(tiles_x) * tiles_y);
    for (std::size_t k = 0; k < proj.size(); ++k) {
        const Projected& p = proj[k];
        for (int ty = p.ymin / kTileSize; ty <= p.ymax / kTileSize; ++ty)
            for (int tx = p.xmin / kTileSize; tx <= p.xmax / kTileSize; ++tx)
                tile_lists[static_cast<std::size_t>(ty) * tiles_x + tx].push_back(static_cast<int>(k));
    }

    parallel_for(tile_lists.size(), [&](std::size_t t) {
        const int tx = static_cast<int>(t % tiles_x), ty = static_cast<int>(t / tiles_x);
        const int x1 = std::min(camera.width, (tx + 1) * kTileSize);
        const int y1 = std::min(camera.height, (ty + 1) * kTileSize);
        for (int y = ty * kTileSize; y < y1; ++y)
            for (int x = tx * kTileSize; x < x1; ++x) {
                const std::size_t pix = static_cast<std::size_t>(y) * camera.width + x;
                shade_pixel(x, y, tile_lists[t], proj, options.background, options.keep_contributors,
                            out.color.pixels[pix], out.alpha[pix], out.background_weight[pix],
                            options.keep_contributors ? &out.contributors[pix] : nullptr);
            }
    });
    return out;
}

RenderOutput render_reference(std::span<const RenderGaussian> gaussians, const Camera& camera,
                              const RenderOptions& options) {
    camera.validate();
    const std::vector<Projected> proj = project_all(gaussians, camera, options.layers);
    RenderOutput out = make_output(camera, options);
    std::vector<int> all(proj.size());
    std::iota(all.begin(), all.end(), 0);
    for (int y = 0; y < camera.height; ++y)
        for (int x = 0; x < camera.width; ++x) {
            const std::size_t pix = static_cast<std::size_t>(y) * camera.width + x;
            shade_pixel(x, y, all, proj, options.background, options.keep_contributors, out.color.pixels[pix],
                        out.alpha[pix], out.background_weight[pix],
                        options.keep_contributors ? &out.contributors[pix] : nullptr);
        }
    return out;
}

RenderGradients render_backward(const RenderOutput& forward, std::span<const RenderGaussian> gaussians,
                                std::span<const Vec3> d_image) {
    if (!forward.has_contributors) throw InvalidArgument("render_backward needs a forward pass with contributor lists");
    if (d_image.size() != forward.color.pixels.size())
        throw InvalidArgument("upstream image gradient size does not match the render");
    RenderGradients grad;
    grad.d_color.assign(gaussians.size(), Vec3::Zero());
    grad.d_opacity.assign(gaussians.size(), 0.0);
    for (std::size_t pix = 0; pix < d_image.size(); ++pix) {
        const Vec3& up = d_image[pix];
        const auto& list = forward.contributors[pix];
        // Colour contributed by everything behind the current entry, background included.
        Vec3 behind = forward.background_weight[pix] * forward.background;
        for (auto it = list.rbegin(); it != list.rend(); ++it) {
            const Vec3& c = gaussians[static_cast<std::size_t>(it->gaussian)].color;
            const double w = it->alpha * it->transmittance;
            grad.d_color[static_cast<std::size_t>(it->gaussian)] += w * up;
            if (!it->clipped) {
                const double d_alpha = up.dot(it->transmittance * c - behind / (1.0 - it->alpha));
                grad.d_opacity[static_cast<std::size_t>(it->gaussian)] += d_alpha * it->falloff;
            }
            behind += w * c;
        }
    }
    return grad;
}

std::vector<double> projected_radii(std::span<const RenderGaussian> gaussians, const Camera& camera) {
    camera.validate();
    std::vector<double> out(gaussians.size(), 0.0);
    for (std::size_t i = 0; i < gaussians.size(); ++i) {
        Projected p;
        if (project(gaussians[i], static_cast<int>(i), camera, p)) out[i] = std::max(p.radius_x, p.radius_y);
    }
    return out;
}

}  // namespace avatar
