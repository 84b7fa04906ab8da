#include "avatar/render/camera.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace avatar {

void Camera::validate() const {
    require(fx > 0.0 && fy > 0.0, "camera focal lengths must be positive");
    require(width >= 1 && height >= 1, "camera image size must be at least 1x1");
    require(near > 0.0 && near < far, "camera planes must satisfy 0 < near < far");
    require(world_to_camera.matrix().allFinite(), "camera extrinsics must be finite");
}

Camera Camera::look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fov_y_deg, int width,
                       int height, double near, double far) {
    require(fov_y_deg > 0.0 && fov_y_deg < 180.0, "camera field of view must be in (0, 180) degrees");
    const Vec3 forward = target - eye;
    require(forward.norm() > 1e-12, "camera eye and target coincide");
    const Vec3 z = forward.normalized();
    Vec3 x = z.cross(up);
    if (x.norm() < 1e-9) x = z.unitOrthogonal();
    x.normalize();
    const Vec3 y = z.cross(x);
    Camera cam;
    cam.width = width;
    cam.height = height;
    cam.fy = 0.5 * height / std::tan(0.5 * fov_y_deg * M_PI / 180.0);
    cam.fx = cam.fy;
    cam.cx = 0.5 * (width - 1);
    cam.cy = 0.5 * (height - 1);
    cam.near = near;
    cam.far = far;
    Mat3 r;
    r.row(0) = x;
    r.row(1) = y;
    r.row(2) = z;
    cam.world_to_camera.linear() = r;
    cam.world_to_camera.translation() = -r * eye;
    cam.validate();
    return cam;
}

void write_png(const std::string& path, const Image& image) {
    require(image.width >= 1 && image.height >= 1, "cannot write an empty image");
    std::vector<unsigned char> bytes(static_cast<std::size_t>(image.width) * image.height * 3);
    for (std::size_t i = 0; i < image.pixels.size(); ++i)
        for (int c = 0; c < 3; ++c)
            bytes[3 * i + c] = static_cast<unsigned char>(std::lround(std::clamp(image.pixels[i][c], 0.0, 1.0) * 255.0));
    png_image png;
    std::memset(&png, 0, sizeof(png));
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(image.width);
    png.height = static_cast<png_uint_32>(image.height);
    png.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&png, path.c_str(), 0, bytes.data(), 0, nullptr))
        throw IoError("cannot write png " + path + ": " + png.message);
}

Image read_png(const std::string& path) {
    png_image png;
    std::memset(&png, 0, sizeof(png));
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&png, path.c_str())) throw IoError("cannot read png " + path + ": " + png.message);
    png.format = PNG_FORMAT_RGB;
    std::vector<unsigned char> bytes(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, bytes.data(), 0, nullptr)) {
        png_image_free(&png);
        throw IoError("cannot decode png " + path + ": " + png.message);
    }
    Image img(static_cast<int>(png.width), static_cast<int>(png.height));
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
        for (int c = 0; c < 3; ++c) img.pixels[i][c] = bytes[3 * i + c] / 255.0;
    return img;
}

double psnr(const Image& a, const Image& b) {
    require(a.width == b.width && a.height == b.height, "psnr needs images of equal size");
    double se = 0.0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) se += (a.pixels[i] - b.pixels[i]).squaredNorm();
    const double mse = se / (3.0 * a.pixels.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

}  // namespace avatar
