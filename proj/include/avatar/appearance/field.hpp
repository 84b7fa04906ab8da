#pragma once

#include "avatar/gaussian/gaussian.hpp"
#include "avatar/geometry/skinning.hpp"

#include <Eigen/Dense>

#include <span>
#include <string>
#include <vector>

namespace avatar {

constexpr int kFieldBands = 6;
constexpr int kFieldWidth = 64;

// Coordinate MLP: Fourier features [x, sin(2^k pi x), cos(2^k pi x)] for k < bands,
// two tanh hidden layers, logistic head producing feature_dim colours then opacity.
// Parameters are stored as doubles but kept float32-representable after
// initialization and every update, so binary checkpoints are lossless.
class AppearanceField {
public:
    AppearanceField(Layer layer, int feature_dim = 3, std::uint64_t seed = 0, int bands = kFieldBands,
                    int width = kFieldWidth);

    Layer layer() const { return layer_; }
    int bands() const { return bands_; }
    int width() const { return width_; }
    int feature_dim() const { return feature_dim_; }
    int output_dim() const { return feature_dim_ + 1; }
    int encoding_dim() const { return 3 + 6 * bands_; }

    std::size_t num_params() const { return params_.size(); }
    const std::vector<double>& params() const { return params_; }
    // Direct access for tests and loaders; callers that modify it should call
    // round_to_float() unless they need exact double perturbations.
    std::vector<double>& mutable_params() { return params_; }

    // Xavier-uniform on every layer including the head (used for randomized checks).
    void randomize(std::uint64_t seed, double gain = 1.0);
    void round_to_float();

    // Output matrix is output_dim x N, column i for positions[i].
    Eigen::MatrixXd eval(std::span<const Vec3> positions) const;

    // Gradient over parameters of sum_i <upstream.col(i), eval(positions).col(i)>.
    Eigen::VectorXd backward(std::span<const Vec3> positions, const Eigen::MatrixXd& upstream) const;

    // theta <- round_to_float(theta - lr * gradient).
    void apply_gradient_step(const Eigen::VectorXd& gradient, double learning_rate);

    // FNV-1a over the parameter bytes.
    std::uint64_t checksum() const;

private:
    struct Layout {
        std::size_t w1, b1, w2, b2, w3, b3, total;
    };
    Layout layout() const;
    Eigen::MatrixXd encode(std::span<const Vec3> positions) const;

    Layer layer_;
    int feature_dim_;
    int bands_;
    int width_;
    std::vector<double> params_;
};

// Binary checkpoint: uint32 bands, width, feature_dim, then float32 parameters (little-endian).
void save_field(const std::string& path, const AppearanceField& field);
AppearanceField load_field(const std::string& path, Layer layer);

// Canonical (T-pose, pre-simulation) geometry at which fields are queried.
struct CanonicalPose {
    BodyPose pose;
    TriangleMesh body;
    TriangleMesh garment;
    HairStrands hair;

    const TriangleMesh* mesh_for(Layer layer) const;
    const HairStrands* strands_for(Layer layer) const;
};

// Canonical world positions of a layer's primitives.
std::vector<Vec3> canonical_positions(std::span<const GaussianPrimitive> gaussians, Layer layer,
                                      const CanonicalPose& canonical);

// Writes field outputs (features, opacity) into every primitive of the layer.
void query_layer(std::vector<GaussianPrimitive>& gaussians, Layer layer, const AppearanceField& field,
                 const CanonicalPose& canonical);

}  // namespace avatar
