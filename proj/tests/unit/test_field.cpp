#include "avatar/appearance/field.hpp"
#include "avatar/geometry/humanoid.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace avatar;
using avatar::testing::random_vec;

namespace {

double weighted_output(const AppearanceField& f, std::span<const Vec3> x, const Eigen::MatrixXd& up) {
    return (f.eval(x).array() * up.array()).sum();
}

}  // namespace

TEST(AppearanceField, ZeroParametersGiveHalf) {
    AppearanceField f(Layer::body);
    std::fill(f.mutable_params().begin(), f.mutable_params().end(), 0.0);
    const std::vector<Vec3> x = {{0.1, 0.2, 0.3}, {-4, 2, 9}};
    const Eigen::MatrixXd out = f.eval(x);
    EXPECT_EQ(out.rows(), 4);
    for (Eigen::Index i = 0; i < out.size(); ++i) EXPECT_EQ(out.data()[i], 0.5);
}

TEST(AppearanceField, FreshFieldIsMidGray) {
    const AppearanceField f(Layer::garment, 3, 77);
    const std::vector<Vec3> x = {{0.3, -0.2, 1.1}};
    const Eigen::MatrixXd out = f.eval(x);
    for (Eigen::Index i = 0; i < out.size(); ++i) EXPECT_EQ(out.data()[i], 0.5);
    EXPECT_EQ(f.num_params(), 64u * 39u + 64u + 64u * 64u + 64u + 4u * 64u + 4u);
}

TEST(AppearanceField, DeterministicAndBatchEquivalent) {
    AppearanceField f(Layer::body);
    f.randomize(3);
    const std::vector<Vec3> both = {{0.1, 0.5, 1.2}, {-0.3, 0.0, 0.7}};
    const Eigen::MatrixXd batch = f.eval(both);
    EXPECT_EQ(batch, f.eval(both));
    for (int i = 0; i < 2; ++i) {
        const std::vector<Vec3> one = {both[i]};
        EXPECT_EQ(f.eval(one).col(0), batch.col(i));
    }
}

TEST(AppearanceField, OutputsBounded) {
    AppearanceField f(Layer::hair, 12);
    f.randomize(5, 3.0);
    Rng rng(5);
    std::vector<Vec3> x;
    for (int i = 0; i < 200; ++i) x.push_back(random_vec(rng, -50, 50));
    const Eigen::MatrixXd out = f.eval(x);
    EXPECT_GT(out.minCoeff(), 0.0);
    EXPECT_LT(out.maxCoeff(), 1.0);
}

TEST(AppearanceField, NonFiniteInputThrows) {
    const AppearanceField f(Layer::body);
    const std::vector<Vec3> x = {{0, std::nan(""), 0}};
    EXPECT_THROW(f.eval(x), InvalidArgument);
}

TEST(FieldBackward, ZeroUpstreamGivesZeroGradient) {
    AppearanceField f(Layer::body);
    f.randomize(1);
    const std::vector<Vec3> x = {{0.1, 0.2, 0.3}};
    EXPECT_EQ(f.backward(x, Eigen::MatrixXd::Zero(4, 1)).squaredNorm(), 0.0);
}

TEST(FieldBackward, ShapeMismatchThrows) {
    const AppearanceField f(Layer::body);
    const std::vector<Vec3> x = {{0.1, 0.2, 0.3}};
    EXPECT_THROW(f.backward(x, Eigen::MatrixXd::Zero(3, 1)), InvalidArgument);
    EXPECT_THROW(f.backward(x, Eigen::MatrixXd::Zero(4, 2)), InvalidArgument);
}

TEST(FieldBackward, MatchesCentralDifferences) {
    Rng rng(21);
    for (int trial = 0; trial < 3; ++trial) {
        AppearanceField f(Layer::body);
        f.randomize(100 + trial);
        const std::vector<Vec3> x = {random_vec(rng)};
        const Eigen::MatrixXd up = Eigen::MatrixXd::Random(4, 1);
        const Eigen::VectorXd g = f.backward(x, up);
        const double h = 1e-4;
        double worst = 0.0;
        for (std::size_t p = 0; p < f.num_params(); ++p) {
            AppearanceField plus = f, minus = f;
            plus.mutable_params()[p] += h;
            minus.mutable_params()[p] -= h;
            const double numeric = (weighted_output(plus, x, up) - weighted_output(minus, x, up)) / (2 * h);
            const double analytic = g[static_cast<Eigen::Index>(p)];
            worst = std::max(worst, std::abs(numeric - analytic) /
                                        std::max({std::abs(numeric), std::abs(analytic), 1e-6}));
        }
        EXPECT_LT(worst, 1e-3);
    }
}

TEST(FieldBackward, BatchGradientIsSumOfSingles) {
    AppearanceField f(Layer::body);
    f.randomize(8);
    const std::vector<Vec3> x = {{0.1, 0.2, 0.3}, {0.5, -0.4, 1.0}, {-1, 0.1, 0.2}};
    const Eigen::MatrixXd up = Eigen::MatrixXd::Random(4, 3);
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(f.num_params()));
    for (int i = 0; i < 3; ++i) {
        const std::vector<Vec3> one = {x[i]};
        sum += f.backward(one, up.col(i));
    }
    EXPECT_LT((f.backward(x, up) - sum).norm(), 1e-12 * (1.0 + sum.norm()));
}

TEST(FieldCheckpoint, RoundTripIsExact) {
    const auto dir = avatar::testing::scratch_dir("field_ckpt");
    AppearanceField f(Layer::hair, 3, 9);
    f.randomize(9);
    f.apply_gradient_step(Eigen::VectorXd::Constant(static_cast<Eigen::Index>(f.num_params()), 0.37), 0.001);
    save_field((dir / "hair.field").string(), f);
    const AppearanceField back = load_field((dir / "hair.field").string(), Layer::hair);
    EXPECT_EQ(back.params(), f.params());
    EXPECT_EQ(back.checksum(), f.checksum());
    EXPECT_EQ(std::filesystem::file_size(dir / "hair.field"), 12u + 4u * f.num_params());
}

TEST(QueryLayer, RespectsLayerAndCanonicalGeometry) {
    const SkinnedBody body = make_capsule_humanoid();
    CanonicalPose canonical;
    canonical.pose = BodyPose::identity(body.num_joints());
    canonical.body = body.rest_mesh();
    auto gs = init_mesh_gaussians(canonical.body, 50, 2);
    gs.push_back(gs[0]);

    AppearanceField field(Layer::body);
    field.randomize(4);
    query_layer(gs, Layer::body, field, canonical);
    EXPECT_EQ(gs.back().features, gs[0].features);
    EXPECT_EQ(gs.back().opacity, gs[0].opacity);

    const std::vector<Vec3> pos = canonical_positions(gs, Layer::body, canonical);
    const std::vector<Vec3> first = {pos[3]};
    EXPECT_EQ(gs[3].opacity, field.eval(first)(3, 0));

    AppearanceField wrong(Layer::garment);
    EXPECT_THROW(query_layer(gs, Layer::body, wrong, canonical), InvalidArgument);

    // Moving the bound face in the canonical mesh changes the queried value.
    const double before = gs[0].opacity;
    std::vector<Vec3> moved = canonical.body.vertices();
    const Face& f0 = canonical.body.face(std::get<FaceBinding>(gs[0].binding).face);
    for (int v : f0) moved[v] += Vec3(0.05, 0.0, 0.0);
    canonical.body = canonical.body.with_vertices(moved);
    query_layer(gs, Layer::body, field, canonical);
    EXPECT_NE(gs[0].opacity, before);
}
