#pragma once

#include "avatar/gaussian/gaussian.hpp"
#include "avatar/render/camera.hpp"

#include <span>
#include <vector>

namespace avatar {

constexpr int kTileSize = 16;
constexpr double kAlphaClip = 0.99;
constexpr double kMinOpacity = 1.0 / 255.0;
// Screen-space dilation added to every projected covariance (pixels squared).
constexpr double kCovarianceDilation = 0.3;
// A Gaussian touches a pixel only inside its 3-sigma ellipse (Mahalanobis^2 <= 9).
constexpr double kSupportMahalanobis2 = 9.0;

// A world-space splat ready for rasterization; color is the shaded DC colour.
struct RenderGaussian {
    Vec3 mean = Vec3::Zero();
    Mat3 covariance = Mat3::Identity() * 1e-4;
    Vec3 color = Vec3::Constant(0.5);
    double opacity = 0.5;
    Layer layer = Layer::body;
};

Mat3 covariance_from(const Quat& rotation, const Vec3& scale);

// One compositing event at a pixel, front to back.
struct Contributor {
    int gaussian;
    double alpha;
    double transmittance;  // before this contributor
    double falloff;        // exp(-q / 2)
    bool clipped;
};

struct RenderOutput {
    Image color;
    std::vector<double> alpha;  // accumulated opacity per pixel
    std::vector<double> background_weight;
    std::vector<std::vector<Contributor>> contributors;  // filled only in backward mode
    bool has_contributors = false;
    Vec3 background = Vec3::Zero();
};

struct RenderOptions {
    Vec3 background = Vec3::Zero();
    LayerMask layers = kAllLayersMask;
    bool keep_contributors = false;
};

// Tile-parallel rasterizer (16x16 tiles, global depth order with index ties).
RenderOutput render(std::span<const RenderGaussian> gaussians, const Camera& camera, const RenderOptions& options = {});

// Single-threaded oracle: every pixel visits every projected Gaussian.
RenderOutput render_reference(std::span<const RenderGaussian> gaussians, const Camera& camera,
                              const RenderOptions& options = {});

struct RenderGradients {
    std::vector<Vec3> d_color;
    std::vector<double> d_opacity;
};

// Exact reverse of the compositing for colour and opacity (falloff held constant).
RenderGradients render_backward(const RenderOutput& forward, std::span<const RenderGaussian> gaussians,
                                std::span<const Vec3> d_image);

// Projected 3-sigma radius in pixels per Gaussian (0 when culled); densification statistic.
std::vector<double> projected_radii(std::span<const RenderGaussian> gaussians, const Camera& camera);

}  // namespace avatar
