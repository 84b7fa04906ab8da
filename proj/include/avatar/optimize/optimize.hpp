#pragma once

#include "avatar/appearance/field.hpp"
#include "avatar/render/scene.hpp"

#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace avatar {

// The three appearance fields, indexed by Layer.
class FieldSet {
public:
    explicit FieldSet(std::uint64_t seed = 0, int feature_dim = 3);
    FieldSet(AppearanceField body, AppearanceField garment, AppearanceField hair);

    AppearanceField& operator[](Layer layer) { return fields_[static_cast<std::size_t>(layer)]; }
    const AppearanceField& operator[](Layer layer) const { return fields_[static_cast<std::size_t>(layer)]; }

private:
    std::vector<AppearanceField> fields_;
};

// Bound primitives and the canonical geometry they are queried and rendered at.
struct AvatarAssembly {
    CanonicalPose canonical;
    LayerGaussians gaussians;

    bool has_layer(Layer layer) const { return !layer_of(gaussians, layer).empty(); }
    LayerMask present_layers() const;
    FrameGeometry canonical_geometry() const;
};

// Writes field outputs into every present layer.
void query_all_layers(LayerGaussians& gaussians, const FieldSet& fields, const CanonicalPose& canonical);

// What a score provider sees. clean and noise are exposed only so oracle providers
// can be built; a real denoiser would use noisy, tag and t alone.
struct ScoreInput {
    const Image& noisy;
    const Image& clean;
    const Image& noise;
    std::string_view tag;
    double t;
    double sigma;
    double weight;
    std::uint64_t draw = 0;  // per-call key from the step's random stream
};

class ScoreProvider {
public:
    virtual ~ScoreProvider() = default;
    virtual std::string name() const = 0;
    // Predicted noise, same shape as input.noisy.
    virtual Image predict(const ScoreInput& input) = 0;
};

// eps_hat = eps.
std::unique_ptr<ScoreProvider> make_null_provider();
// eps_hat = eps + (I - target) / w(t); the SDS step becomes a photometric gradient step.
std::unique_ptr<ScoreProvider> make_photometric_provider(Image target);
// eps_hat = c everywhere.
std::unique_ptr<ScoreProvider> make_constant_provider(double value);
// eps_hat drawn from a standard normal stream keyed by input.draw, independent of eps.
std::unique_ptr<ScoreProvider> make_noise_provider(std::uint64_t seed);

// "null", "photometric:<png>", "constant:<c>" or "noise".
std::unique_ptr<ScoreProvider> parse_provider(const std::string& spec, std::uint64_t seed);

enum class HairRegVariant { as_written, hinge };

HairRegVariant parse_hair_reg_variant(const std::string& name);
std::string hair_reg_variant_name(HairRegVariant variant);

struct HairRegResult {
    double loss = 0.0;
    Eigen::MatrixXd gradient;
};

// opacities is Ns x Nl, root segment first. as_written: sum_j (o_{j-1} - o_j);
// hinge: sum_j max(0, o_j - o_{j-1}); both scaled by 1 / (Ns Nl).
HairRegResult hair_regularizer(const Eigen::MatrixXd& opacities, HairRegVariant variant);

// Hair layer opacities arranged by (strand, segment) binding.
Eigen::MatrixXd hair_opacity_matrix(std::span<const GaussianPrimitive> hair, int num_strands, int num_segments);

// Orbit about center; azimuth 0 looks at the front (the character faces -y), z up.
Camera orbit_camera(const Vec3& center, double distance, double azimuth_deg, double elevation_deg, double fov_y_deg,
                    int width, int height);

struct ZoomTarget {
    std::string name;
    Vec3 point = Vec3::Zero();
    double distance = 1.0;
};

struct CameraSampler {
    Vec3 center = Vec3(0, 0, 1);
    double distance = 3.0;
    double fov_y_deg = 40.0;
    int width = 64;
    int height = 64;
    double elevation_min_deg = -10.0;
    double elevation_max_deg = 30.0;
    double zoom_probability = 0.25;
    std::vector<ZoomTarget> zooms;
    std::optional<Camera> fixed;  // every sample returns this camera when set

    void validate() const;
    Camera sample(Rng& rng) const;
};

// Full-body orbit plus head, hand and lower-body zoom framings from the body's extents.
CameraSampler default_camera_sampler(const TriangleMesh& body, int width, int height);

// A render configuration and the tag routed to the provider.
struct RenderView {
    std::string tag;
    LayerMask layers = kAllLayersMask;
};

// phase 1: body, hair, body+hair. phase 2 adds garment and full.
std::vector<RenderView> phase_views(int phase);

struct SdsSettings {
    double t_min = 0.02;
    double t_max = 0.98;
    double weight = 1.0;                 // w(t), constant
    bool random_background = true;
    Vec3 background = Vec3::Zero();      // used when random_background is false
    std::optional<LightSample> fixed_light;
    LightRanges light_ranges;
    bool reference_renderer = false;

    void validate() const;
};

struct SdsStepResult {
    std::array<Eigen::VectorXd, 3> gradients;  // empty for layers not rendered
    double loss = 0.0;                         // 0.5 * sum of squared pixel residuals
    double t = 0.0;
    std::string tag;
    Image render;
};

// Caches canonical placements and query positions for repeated steps.
class AppearanceProblem {
public:
    explicit AppearanceProblem(const AvatarAssembly& assembly);

    const AvatarAssembly& assembly() const { return *assembly_; }
    Vec3 center() const { return center_; }

    // Primitives with field outputs written in, for the requested layers.
    LayerGaussians queried(const FieldSet& fields, LayerMask layers) const;
    SplatBatch splats(const LayerGaussians& queried, const LightSample* light, LayerMask layers) const;

    // Chains a per-splat colour/opacity gradient through shading and the fields.
    std::array<Eigen::VectorXd, 3> field_gradients(const FieldSet& fields, const SplatBatch& batch,
                                                   const RenderGradients& grads, LayerMask layers) const;

    // Gradient of the fields through the opacities of one layer.
    Eigen::VectorXd opacity_gradient(const FieldSet& fields, Layer layer, std::span<const double> d_opacity) const;

private:
    const AvatarAssembly* assembly_;
    std::array<std::vector<Vec3>, 3> positions_;
    std::array<std::vector<PlacedGaussian>, 3> placed_;
    Vec3 center_ = Vec3::Zero();
};

// One SDS sample: camera, light, view, background, t and eps; render, noise, query the
// provider, and backpropagate the residual w(t) (eps_hat - eps).
SdsStepResult sds_step(const AppearanceProblem& problem, const FieldSet& fields, const CameraSampler& cameras,
                       std::span<const RenderView> views, ScoreProvider& provider, const SdsSettings& settings,
                       Rng& rng);

struct OptimizationSchedule {
    int phase1_iterations = 200;
    int phase2_iterations = 300;
    double learning_rate = 1e-3;
    double lambda_hair = 1.0;
    HairRegVariant hair_variant = HairRegVariant::as_written;
    SdsSettings sds;

    void validate() const;
    int total_iterations() const { return phase1_iterations + phase2_iterations; }
};

struct LossRecord {
    int iteration = 0;
    int phase = 1;
    std::string tag;
    double l_sds = 0.0;
    double l_hair = 0.0;
    double total = 0.0;
};

class OptimizationError : public Error {
public:
    OptimizationError(const std::string& what, int iteration) : Error(what), iteration_(iteration) {}
    int iteration() const { return iteration_; }

private:
    int iteration_;
};

// Plain gradient descent on L = L_SDS + lambda_hair L_hair. Iteration k draws its
// randomness from split_seed(seed, k), so a run resumed at first_iteration with the
// fields saved there continues identically.
std::vector<LossRecord> run_schedule(const AvatarAssembly& assembly, FieldSet& fields,
                                     const OptimizationSchedule& schedule, ScoreProvider& provider,
                                     const CameraSampler& cameras, std::uint64_t seed, int first_iteration = 0,
                                     int last_iteration = -1);

// Columns: iteration, L_SDS, L_hair, total.
void write_loss_csv(std::ostream& out, std::span<const LossRecord> log);
void write_loss_csv(const std::string& path, std::span<const LossRecord> log);

}  // namespace avatar
