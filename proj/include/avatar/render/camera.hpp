#pragma once

#include "avatar/common.hpp"

#include <string>
#include <vector>

namespace avatar {

// Pinhole camera, OpenCV axes (+x right, +y down, +z forward). Pixel (i, j) is
// sampled at image coordinates (i, j).
struct Camera {
    double fx = 64.0;
    double fy = 64.0;
    double cx = 31.5;
    double cy = 31.5;
    int width = 64;
    int height = 64;
    Eigen::Isometry3d world_to_camera = Eigen::Isometry3d::Identity();
    double near = 0.01;
    double far = 100.0;

    void validate() const;

    Vec3 position() const { return world_to_camera.inverse().translation(); }

    // Symmetric principal point; fov_y in degrees.
    static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fov_y_deg, int width,
                          int height, double near = 0.01, double far = 100.0);
};

struct Image {
    int width = 0;
    int height = 0;
    std::vector<Vec3> pixels;  // row-major, RGB

    Image() = default;
    Image(int w, int h, const Vec3& fill = Vec3::Zero()) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

    Vec3& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    const Vec3& at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

// 8-bit RGB PNG; values are clamped to [0, 1] and rounded.
void write_png(const std::string& path, const Image& image);
Image read_png(const std::string& path);

double psnr(const Image& a, const Image& b);

}  // namespace avatar
