#include "avatar/render/camera.hpp"
#include "avatar/render/shading.hpp"
#include "avatar/render/splat.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

using namespace avatar;
using avatar::testing::random_scene;
using avatar::testing::test_camera;

namespace {

// Mean that lands exactly on pixel (px, py) at depth z.
Vec3 on_pixel(const Camera& cam, double px, double py, double z) {
    return {(px - cam.cx) / cam.fx * z, (py - cam.cy) / cam.fy * z, z};
}

double linear_loss(const RenderOutput& out, const std::vector<Vec3>& up) {
    double s = 0.0;
    for (std::size_t i = 0; i < up.size(); ++i) s += up[i].dot(out.color.pixels[i]);
    return s;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); }

}  // namespace

TEST(Shading, FullDiffuseUnitLight) {
    LightSample l{Vec3(0, 0, 5), Vec3::Ones(), Vec3::Zero()};
    const Vec3 f = shade_gaussian(Vec3::Constant(0.5), Vec3::UnitZ(), Vec3::Zero(), l);
    EXPECT_LT((f - Vec3::Constant(0.5)).norm(), 1e-12);
}

TEST(Shading, BackFacingIsAmbientOnly) {
    LightSample l{Vec3(0, 0, -5), Vec3::Ones(), Vec3::Constant(0.2)};
    const Vec3 f = shade_gaussian(Vec3(1.0, 0.5, 0.0), Vec3::UnitZ(), Vec3::Zero(), l);
    EXPECT_LT((f - Vec3(0.2, 0.1, 0.0)).norm(), 1e-12);
}

TEST(Shading, PureAmbientIsIdentity) {
    LightSample l{Vec3(1, 2, 3), Vec3::Zero(), Vec3::Ones()};
    const Vec3 f(0.3, 0.6, 0.9);
    EXPECT_EQ(shade_gaussian(f, Vec3::UnitX(), Vec3::Zero(), l), f);
}

TEST(Shading, Errors) {
    LightSample l{Vec3::Zero(), Vec3::Ones(), Vec3::Zero()};
    EXPECT_THROW(shade_gaussian(Vec3::Ones(), Vec3::UnitZ(), Vec3::Zero(), l), InvalidArgument);
    l.position = Vec3(0, 0, 1);
    EXPECT_THROW(shade_gaussian(Vec3::Ones(), Vec3(0, 0, 2), Vec3::Zero(), l), InvalidArgument);
}

TEST(Shading, StrandCases) {
    LightSample l{Vec3(0, 0, 3), Vec3::Ones(), Vec3::Constant(0.1)};
    // Perpendicular light.
    EXPECT_LT((strand_shading_factor(Vec3::UnitX(), Vec3::Zero(), l) - Vec3::Constant(1.1)).norm(), 1e-12);
    // Parallel light.
    EXPECT_EQ(strand_shading_factor(Vec3::UnitZ(), Vec3::Zero(), l), Vec3::Constant(0.1));
    // 45 degrees.
    l.ambient = Vec3::Zero();
    const Vec3 f = strand_shading_factor(Vec3(1, 0, 1).normalized(), Vec3::Zero(), l);
    EXPECT_NEAR(f.x(), std::sqrt(0.5), 1e-6);
}

TEST(Shading, NeverNegativeAndMonotone) {
    Rng rng(4);
    for (int i = 0; i < 200; ++i) {
        const Vec3 n = avatar::testing::random_vec(rng).normalized();
        LightSample l{avatar::testing::random_vec(rng, -3, 3), avatar::testing::random_vec(rng, 0, 1),
                      avatar::testing::random_vec(rng, 0, 1)};
        const Vec3 f = avatar::testing::random_vec(rng, 0, 1);
        const Vec3 a = shade_gaussian(f, n, Vec3::Zero(), l);
        EXPECT_GE(a.minCoeff(), 0.0);
        LightSample brighter = l;
        brighter.color += Vec3::Constant(0.1);
        brighter.ambient += Vec3::Constant(0.1);
        const Vec3 b = shade_gaussian(f, n, Vec3::Zero(), brighter);
        EXPECT_TRUE((b.array() >= a.array()).all());
    }
}

TEST(Shading, LightSampling) {
    LightRanges ranges;
    Rng a(11), b(11);
    const LightSample s1 = sample_light(ranges, Vec3(0, 0, 1), a);
    const LightSample s2 = sample_light(ranges, Vec3(0, 0, 1), b);
    EXPECT_EQ(s1.position, s2.position);
    EXPECT_EQ(s1.color, s2.color);
    Rng rng(5);
    for (int i = 0; i < 10000; ++i) {
        const LightSample s = sample_light(ranges, Vec3(0, 0, 1), rng);
        const double r = (s.position - Vec3(0, 0, 1)).norm();
        ASSERT_GE(r, 2.0 - 1e-12);
        ASSERT_LE(r, 5.0 + 1e-12);
        ASSERT_TRUE((s.color.array() >= 0.5).all() && (s.color.array() <= 1.0).all());
        ASSERT_TRUE((s.ambient.array() >= 0.1).all() && (s.ambient.array() <= 0.4).all());
    }
    LightRanges fixed{3, 3, 0.7, 0.7, 0.2, 0.2};
    const LightSample c = sample_light(fixed, Vec3::Zero(), rng);
    EXPECT_NEAR(c.position.norm(), 3.0, 1e-12);
    EXPECT_EQ(c.color, Vec3::Constant(0.7));
    EXPECT_EQ(c.ambient, Vec3::Constant(0.2));
    EXPECT_THROW(sample_light(LightRanges{5, 2, 0.5, 1, 0.1, 0.4}, Vec3::Zero(), rng), InvalidArgument);
}

TEST(Camera, LookAtAndValidation) {
    const Camera cam = Camera::look_at(Vec3(0, -3, 1), Vec3(0, 0, 1), Vec3::UnitZ(), 40, 64, 48);
    EXPECT_LT((cam.position() - Vec3(0, -3, 1)).norm(), 1e-12);
    const Vec3 t = cam.world_to_camera * Vec3(0, 0, 1);
    EXPECT_NEAR(t.x(), 0, 1e-12);
    EXPECT_NEAR(t.y(), 0, 1e-12);
    EXPECT_NEAR(t.z(), 3, 1e-12);
    // Up in the world is -y in the image.
    EXPECT_LT((cam.world_to_camera * Vec3(0, 0, 2)).y(), 0.0);
    // Left of the character (+x) appears on the image right when viewed from the front.
    EXPECT_GT((cam.world_to_camera * Vec3(1, 0, 1)).x(), 0.0);
    Camera bad = cam;
    bad.near = 200;
    EXPECT_THROW(bad.validate(), InvalidArgument);
    bad = cam;
    bad.fx = 0;
    EXPECT_THROW(render({}, bad), InvalidArgument);
}

TEST(Camera, PngRoundTrip) {
    const auto dir = avatar::testing::scratch_dir("png");
    Image img(5, 3);
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 5; ++x) img.at(x, y) = Vec3(x / 4.0, y / 2.0, 1.5);
    write_png((dir / "a.png").string(), img);
    const Image back = read_png((dir / "a.png").string());
    ASSERT_EQ(back.width, 5);
    ASSERT_EQ(back.height, 3);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        EXPECT_NEAR(back.pixels[i].x(), img.pixels[i].x(), 0.5 / 255 + 1e-12);
        EXPECT_EQ(back.pixels[i].z(), 1.0);
    }
    EXPECT_THROW(read_png((dir / "missing.png").string()), IoError);
    EXPECT_TRUE(std::isinf(psnr(img, img)));
}

TEST(Render, EmptySceneIsBackground) {
    const Camera cam = test_camera(20, 12);
    RenderOptions opt;
    opt.background = Vec3(0.2, 0.4, 0.6);
    for (const auto& out : {render({}, cam, opt), render_reference({}, cam, opt)})
        for (const Vec3& p : out.color.pixels) EXPECT_EQ(p, opt.background);
}

TEST(Render, TwoLayerCompositing) {
    const Camera cam = test_camera();
    std::vector<RenderGaussian> g(2);
    g[0].mean = on_pixel(cam, 32, 32, 1.0);
    g[0].color = Vec3(1, 0, 0);
    g[1].mean = on_pixel(cam, 32, 32, 2.0);
    g[1].color = Vec3(0, 0, 1);
    for (auto& x : g) {
        x.opacity = 0.5;
        x.covariance = Mat3::Identity() * 0.01;
    }
    // Input order must not matter.
    std::swap(g[0], g[1]);
    const RenderOutput out = render(g, cam);
    const Vec3 p = out.color.at(32, 32);
    EXPECT_NEAR(p.x(), 0.5, 1e-9);
    EXPECT_NEAR(p.y(), 0.0, 1e-12);
    EXPECT_NEAR(p.z(), 0.25, 1e-9);
    EXPECT_NEAR(out.alpha[32 * 64 + 32], 0.75, 1e-9);
}

TEST(Render, TileMatchesReferenceAndWeightsSumToOne) {
    Rng rng(1);
    const Camera cam = test_camera();
    for (int trial = 0; trial < 25; ++trial) {
        const auto scene = random_scene(rng, 1 + trial * 8);
        RenderOptions opt;
        opt.background = avatar::testing::random_vec(rng, 0, 1);
        opt.keep_contributors = true;
        const RenderOutput a = render(scene, cam, opt);
        const RenderOutput b = render_reference(scene, cam, opt);
        double max_diff = 0.0;
        for (std::size_t i = 0; i < a.color.pixels.size(); ++i)
            max_diff = std::max(max_diff, (a.color.pixels[i] - b.color.pixels[i]).cwiseAbs().maxCoeff());
        EXPECT_LE(max_diff, 1e-5);
        for (std::size_t i = 0; i < a.alpha.size(); ++i) {
            double w = a.background_weight[i];
            for (const Contributor& c : a.contributors[i]) w += c.alpha * c.transmittance;
            ASSERT_NEAR(w, 1.0, 1e-6);
            ASSERT_GE(a.alpha[i], 0.0);
            ASSERT_LE(a.alpha[i], 1.0);
        }
    }
}

TEST(Render, Deterministic) {
    Rng rng(2);
    const auto scene = random_scene(rng, 150);
    const Camera cam = test_camera();
    EXPECT_EQ(render(scene, cam).color.pixels, render(scene, cam).color.pixels);
}

TEST(Render, MaximumAtPrincipalPoint) {
    const Camera cam = test_camera(65, 65);
    RenderGaussian g;
    g.mean = Vec3(0, 0, 3);
    g.covariance = Mat3::Identity() * 0.04;
    g.opacity = 0.9;
    const RenderOutput out = render_reference(std::vector<RenderGaussian>{g}, cam);
    const auto it = std::max_element(out.alpha.begin(), out.alpha.end());
    const auto idx = static_cast<int>(it - out.alpha.begin());
    EXPECT_EQ(idx % 65, 32);
    EXPECT_EQ(idx / 65, 32);
}

TEST(Render, PermutationInvariant) {
    const Camera cam = test_camera();
    std::vector<RenderGaussian> g;
    for (int i = 0; i < 4; ++i) {
        RenderGaussian x;
        x.mean = on_pixel(cam, 10 + 14 * i, 10 + 12 * i, 2.0);
        x.covariance = Mat3::Identity() * 0.0004;
        x.color = Vec3(0.2 * i, 0.5, 1 - 0.2 * i);
        g.push_back(x);
    }
    const Image a = render_reference(g, cam).color;
    std::reverse(g.begin(), g.end());
    std::swap(g[0], g[2]);
    EXPECT_EQ(a.pixels, render_reference(g, cam).color.pixels);
    EXPECT_EQ(a.pixels, render(g, cam).color.pixels);
}

TEST(Render, CullingAndLayers) {
    const Camera cam = test_camera();
    RenderGaussian behind;
    behind.mean = Vec3(0, 0, -1);
    RenderGaussian faint;
    faint.mean = Vec3(0, 0, 2);
    faint.opacity = 0.5 / 255.0;
    RenderGaussian off;
    off.mean = Vec3(50, 0, 2);
    const std::vector<RenderGaussian> scene = {behind, faint, off};
    for (const Vec3& p : render(scene, cam).color.pixels) EXPECT_EQ(p, Vec3::Zero());
    EXPECT_EQ(projected_radii(scene, cam), std::vector<double>(3, 0.0));

    RenderGaussian hair;
    hair.mean = Vec3(0, 0, 2);
    hair.layer = Layer::hair;
    hair.covariance = Mat3::Identity() * 0.01;
    RenderOptions opt;
    opt.layers = layer_bit(Layer::body);
    for (const Vec3& p : render(std::vector<RenderGaussian>{hair}, cam, opt).color.pixels) EXPECT_EQ(p, Vec3::Zero());
    opt.layers = layer_bit(Layer::hair);
    EXPECT_GT(render(std::vector<RenderGaussian>{hair}, cam, opt).alpha[32 * 64 + 32], 0.1);

    RenderGaussian nan;
    nan.mean = Vec3(0, 0, std::nan(""));
    EXPECT_THROW(render(std::vector<RenderGaussian>{nan}, cam), InvalidArgument);
}

TEST(RenderBackward, RequiresContributors) {
    const Camera cam = test_camera(8, 8);
    const RenderOutput out = render({}, cam);
    std::vector<Vec3> up(64, Vec3::Ones());
    EXPECT_THROW(render_backward(out, {}, up), InvalidArgument);
}

TEST(RenderBackward, ZeroUpstreamGivesZero) {
    Rng rng(3);
    const auto scene = random_scene(rng, 20);
    const Camera cam = test_camera(32, 32);
    RenderOptions opt;
    opt.keep_contributors = true;
    const RenderOutput out = render(scene, cam, opt);
    const RenderGradients g = render_backward(out, scene, std::vector<Vec3>(32 * 32, Vec3::Zero()));
    for (std::size_t i = 0; i < scene.size(); ++i) {
        EXPECT_EQ(g.d_color[i], Vec3::Zero());
        EXPECT_EQ(g.d_opacity[i], 0.0);
    }
}

TEST(RenderBackward, SinglePixelColorGradientIsAlpha) {
    const Camera cam = test_camera(1, 1);
    RenderGaussian g;
    g.mean = on_pixel(cam, 0, 0, 2.0);
    g.covariance = Mat3::Identity() * 1e-6;
    g.opacity = 0.7;
    RenderOptions opt;
    opt.keep_contributors = true;
    const std::vector<RenderGaussian> scene = {g};
    const RenderOutput out = render(scene, cam, opt);
    const std::vector<Vec3> up = {Vec3(0.3, -1.2, 2.0)};
    const RenderGradients grad = render_backward(out, scene, up);
    EXPECT_LT((grad.d_color[0] - up[0] * 0.7).norm(), 1e-12);
    auto fd = [&](int c) {
        auto p = scene, m = scene;
        p[0].color[c] += 1e-3;
        m[0].color[c] -= 1e-3;
        return (linear_loss(render(p, cam), up) - linear_loss(render(m, cam), up)) / 2e-3;
    };
    for (int c = 0; c < 3; ++c) EXPECT_LT(rel_err(grad.d_color[0][c], fd(c)), 1e-3);
}

TEST(RenderBackward, MatchesFiniteDifferences) {
    Rng rng(9);
    const Camera cam = test_camera(32, 32);
    const double h = 1e-3;
    for (int trial = 0; trial < 3; ++trial) {
        // Opacity kept below the clip so alpha stays differentiable.
        const auto scene = random_scene(rng, 20, 0.95);
        RenderOptions opt;
        opt.background = avatar::testing::random_vec(rng, 0, 1);
        opt.keep_contributors = true;
        std::vector<Vec3> up(32 * 32);
        for (auto& u : up) u = avatar::testing::random_vec(rng);
        const RenderGradients g = render_backward(render(scene, cam, opt), scene, up);
        opt.keep_contributors = false;
        for (std::size_t i = 0; i < scene.size(); ++i) {
            auto p = scene, m = scene;
            p[i].opacity += h;
            m[i].opacity -= h;
            const double fd = (linear_loss(render(p, cam, opt), up) - linear_loss(render(m, cam, opt), up)) / (2 * h);
            EXPECT_LT(rel_err(g.d_opacity[i], fd), 1e-2) << "opacity " << i;
            for (int c = 0; c < 3; ++c) {
                p = scene;
                m = scene;
                p[i].color[c] += h;
                m[i].color[c] -= h;
                const double fdc =
                    (linear_loss(render(p, cam, opt), up) - linear_loss(render(m, cam, opt), up)) / (2 * h);
                EXPECT_LT(rel_err(g.d_color[i][c], fdc), 1e-2) << "color " << i;
            }
        }
    }
}

TEST(RenderBackward, ClippedAlphaHasNoOpacityGradient) {
    const Camera cam = test_camera(1, 1);
    RenderGaussian g;
    g.mean = on_pixel(cam, 0, 0, 2.0);
    g.opacity = 1.0;
    RenderOptions opt;
    opt.keep_contributors = true;
    const std::vector<RenderGaussian> scene = {g};
    const RenderGradients grad = render_backward(render(scene, cam, opt), scene, std::vector<Vec3>{Vec3::Ones()});
    EXPECT_EQ(grad.d_opacity[0], 0.0);
    EXPECT_LT((grad.d_color[0] - Vec3::Constant(0.99)).norm(), 1e-12);
}
