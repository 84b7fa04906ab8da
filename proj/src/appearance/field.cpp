#include "avatar/appearance/field.hpp"

#include "text_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

namespace avatar {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatMap = Eigen::Map<const RowMat>;
using MatMap = Eigen::Map<RowMat>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

AppearanceField::AppearanceField(Layer layer, int feature_dim, std::uint64_t seed, int bands, int width)
    : layer_(layer), feature_dim_(feature_dim), bands_(bands), width_(width) {
    require(feature_dim >= 3 && feature_dim % 3 == 0, "field feature dimension must be a positive multiple of 3");
    require(bands >= 0 && width >= 1, "invalid field architecture");
    params_.assign(layout().total, 0.0);
    // Hidden layers Xavier-uniform, head zero: every output starts at logistic(0) = 0.5.
    Rng rng(seed);
    const Layout l = layout();
    auto fill = [&](std::size_t offset, int rows, int cols) {
        const double a = std::sqrt(6.0 / (rows + cols));
        std::uniform_real_distribution<double> u(-a, a);
        for (int i = 0; i < rows * cols; ++i) params_[offset + i] = u(rng);
    };
    fill(l.w1, width_, encoding_dim());
    fill(l.w2, width_, width_);
    round_to_float();
}

AppearanceField::Layout AppearanceField::layout() const {
    Layout l{};
    const std::size_t e = static_cast<std::size_t>(encoding_dim());
    const std::size_t w = static_cast<std::size_t>(width_);
    const std::size_t o = static_cast<std::size_t>(output_dim());
    l.w1 = 0;
    l.b1 = l.w1 + w * e;
    l.w2 = l.b1 + w;
    l.b2 = l.w2 + w * w;
    l.w3 = l.b2 + w;
    l.b3 = l.w3 + o * w;
    l.total = l.b3 + o;
    return l;
}

void AppearanceField::randomize(std::uint64_t seed, double gain) {
    Rng rng(seed);
    const Layout l = layout();
    auto fill = [&](std::size_t offset, int rows, int cols) {
        const double a = gain * std::sqrt(6.0 / (rows + cols));
        std::uniform_real_distribution<double> u(-a, a);
        for (int i = 0; i < rows * cols; ++i) params_[offset + i] = u(rng);
    };
    fill(l.w1, width_, encoding_dim());
    fill(l.b1, width_, 1);
    fill(l.w2, width_, width_);
    fill(l.b2, width_, 1);
    fill(l.w3, output_dim(), width_);
    fill(l.b3, output_dim(), 1);
    round_to_float();
}

void AppearanceField::round_to_float() {
    for (double& p : params_) p = static_cast<double>(static_cast<float>(p));
}

Eigen::MatrixXd AppearanceField::encode(std::span<const Vec3> positions) const {
    Eigen::MatrixXd enc(encoding_dim(), static_cast<Eigen::Index>(positions.size()));
    for (std::size_t i = 0; i < positions.size(); ++i) {
        const Vec3& x = positions[i];
        if (!x.allFinite()) throw InvalidArgument("field input position is not finite");
        auto col = enc.col(static_cast<Eigen::Index>(i));
        col.head<3>() = x;
        for (int k = 0; k < bands_; ++k) {
            const double f = std::ldexp(M_PI, k);
            for (int c = 0; c < 3; ++c) {
                col[3 + 6 * k + c] = std::sin(f * x[c]);
                col[3 + 6 * k + 3 + c] = std::cos(f * x[c]);
            }
        }
    }
    return enc;
}

Eigen::MatrixXd AppearanceField::eval(std::span<const Vec3> positions) const {
    const Layout l = layout();
    const ConstMatMap w1(params_.data() + l.w1, width_, encoding_dim());
    const ConstVecMap b1(params_.data() + l.b1, width_);
    const ConstMatMap w2(params_.data() + l.w2, width_, width_);
    const ConstVecMap b2(params_.data() + l.b2, width_);
    const ConstMatMap w3(params_.data() + l.w3, output_dim(), width_);
    const ConstVecMap b3(params_.data() + l.b3, output_dim());
    const Eigen::MatrixXd enc = encode(positions);
    Eigen::MatrixXd out(output_dim(), enc.cols());
    // Column-at-a-time products keep each output independent of the batch it came in.
    constexpr std::size_t kChunk = 256;
    const std::size_t n = positions.size();
    parallel_for((n + kChunk - 1) / kChunk, [&](std::size_t chunk) {
        Eigen::VectorXd h1(width_), h2(width_), z(output_dim());
        const std::size_t end = std::min(n, (chunk + 1) * kChunk);
        for (std::size_t i = chunk * kChunk; i < end; ++i) {
            const auto col = static_cast<Eigen::Index>(i);
            h1.noalias() = w1 * enc.col(col);
            h1 = (h1 + b1).array().tanh().matrix();
            h2.noalias() = w2 * h1;
            h2 = (h2 + b2).array().tanh().matrix();
            z.noalias() = w3 * h2;
            out.col(col) = (z + b3).unaryExpr([](double v) { return sigmoid(v); });
        }
    });
    return out;
}

Eigen::VectorXd AppearanceField::backward(std::span<const Vec3> positions, const Eigen::MatrixXd& upstream) const {
    if (upstream.rows() != output_dim() || upstream.cols() != static_cast<Eigen::Index>(positions.size()))
        throw InvalidArgument("field upstream gradient has shape " + std::to_string(upstream.rows()) + "x" +
                              std::to_string(upstream.cols()) + ", expected " + std::to_string(output_dim()) + "x" +
                              std::to_string(positions.size()));
    const Layout l = layout();
    const ConstMatMap w1(params_.data() + l.w1, width_, encoding_dim());
    const ConstVecMap b1(params_.data() + l.b1, width_);
    const ConstMatMap w2(params_.data() + l.w2, width_, width_);
    const ConstVecMap b2(params_.data() + l.b2, width_);
    const ConstMatMap w3(params_.data() + l.w3, output_dim(), width_);
    const ConstVecMap b3(params_.data() + l.b3, output_dim());

    const Eigen::MatrixXd enc = encode(positions);
    const Eigen::MatrixXd h1 = ((w1 * enc).colwise() + b1).array().tanh().matrix();
    const Eigen::MatrixXd h2 = ((w2 * h1).colwise() + b2).array().tanh().matrix();
    const Eigen::MatrixXd out = ((w3 * h2).colwise() + b3).unaryExpr([](double z) { return sigmoid(z); });

    const Eigen::MatrixXd dz3 = (upstream.array() * out.array() * (1.0 - out.array())).matrix();
    const Eigen::MatrixXd dz2 = ((w3.transpose() * dz3).array() * (1.0 - h2.array().square())).matrix();
    const Eigen::MatrixXd dz1 = ((w2.transpose() * dz2).array() * (1.0 - h1.array().square())).matrix();

    Eigen::VectorXd grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(l.total));
    MatMap(grad.data() + l.w1, width_, encoding_dim()) = dz1 * enc.transpose();
    grad.segment(static_cast<Eigen::Index>(l.b1), width_) = dz1.rowwise().sum();
    MatMap(grad.data() + l.w2, width_, width_) = dz2 * h1.transpose();
    grad.segment(static_cast<Eigen::Index>(l.b2), width_) = dz2.rowwise().sum();
    MatMap(grad.data() + l.w3, output_dim(), width_) = dz3 * h2.transpose();
    grad.segment(static_cast<Eigen::Index>(l.b3), output_dim()) = dz3.rowwise().sum();
    return grad;
}

void AppearanceField::apply_gradient_step(const Eigen::VectorXd& gradient, double learning_rate) {
    require(gradient.size() == static_cast<Eigen::Index>(params_.size()), "gradient size does not match field");
    for (std::size_t i = 0; i < params_.size(); ++i) params_[i] -= learning_rate * gradient[static_cast<Eigen::Index>(i)];
    round_to_float();
}

std::uint64_t AppearanceField::checksum() const {
    return fnv1a64(std::string_view(reinterpret_cast<const char*>(params_.data()), params_.size() * sizeof(double)));
}

void save_field(const std::string& path, const AppearanceField& field) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(field.bands()));
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(field.width()));
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(field.feature_dim()));
    for (double p : field.params()) detail::write_le<float>(out, static_cast<float>(p));
    if (!out) throw IoError("failed writing " + path);
}

AppearanceField load_field(const std::string& path, Layer layer) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    const auto bands = detail::read_le<std::uint32_t>(in);
    const auto width = detail::read_le<std::uint32_t>(in);
    const auto dc = detail::read_le<std::uint32_t>(in);
    if (bands > 16 || width < 1 || width > 4096 || dc < 3 || dc > 48)
        throw IoError(path + ": implausible field header");
    AppearanceField field(layer, static_cast<int>(dc), 0, static_cast<int>(bands), static_cast<int>(width));
    for (double& p : field.mutable_params()) p = detail::read_le<float>(in);
    if (in.peek() != std::char_traits<char>::eof()) throw IoError(path + ": trailing bytes after field parameters");
    return field;
}

const TriangleMesh* CanonicalPose::mesh_for(Layer layer) const {
    switch (layer) {
        case Layer::body: return &body;
        case Layer::garment: return &garment;
        case Layer::hair: return nullptr;
    }
    return nullptr;
}

const HairStrands* CanonicalPose::strands_for(Layer layer) const { return layer == Layer::hair ? &hair : nullptr; }

std::vector<Vec3> canonical_positions(std::span<const GaussianPrimitive> gaussians, Layer layer,
                                      const CanonicalPose& canonical) {
    const auto placed = place_gaussians(gaussians, canonical.mesh_for(layer), canonical.strands_for(layer));
    std::vector<Vec3> out(placed.size());
    for (std::size_t i = 0; i < placed.size(); ++i) out[i] = placed[i].pose.mean;
    return out;
}

void query_layer(std::vector<GaussianPrimitive>& gaussians, Layer layer, const AppearanceField& field,
                 const CanonicalPose& canonical) {
    if (field.layer() != layer)
        throw InvalidArgument("appearance field for layer " + std::string(layer_name(field.layer())) +
                              " queried for layer " + std::string(layer_name(layer)));
    const std::vector<Vec3> positions = canonical_positions(gaussians, layer, canonical);
    const Eigen::MatrixXd out = field.eval(positions);
    const int dc = field.feature_dim();
    for (std::size_t i = 0; i < gaussians.size(); ++i) {
        gaussians[i].features = out.col(static_cast<Eigen::Index>(i)).head(dc);
        gaussians[i].opacity = out(dc, static_cast<Eigen::Index>(i));
    }
}

}  // namespace avatar
