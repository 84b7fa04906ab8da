#include "avatar/optimize/optimize.hpp"

#include "text_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace avatar {

FieldSet::FieldSet(std::uint64_t seed, int feature_dim) {
    for (Layer layer : kAllLayers)
        fields_.emplace_back(layer, feature_dim, split_seed(seed, "field/" + std::string(layer_name(layer))));
}

FieldSet::FieldSet(AppearanceField body, AppearanceField garment, AppearanceField hair) {
    require(body.layer() == Layer::body && garment.layer() == Layer::garment && hair.layer() == Layer::hair,
            "field set expects body, garment and hair fields in that order");
    fields_.push_back(std::move(body));
    fields_.push_back(std::move(garment));
    fields_.push_back(std::move(hair));
}

LayerMask AvatarAssembly::present_layers() const {
    LayerMask mask = 0;
    for (Layer layer : kAllLayers)
        if (has_layer(layer)) mask |= layer_bit(layer);
    return mask;
}

FrameGeometry AvatarAssembly::canonical_geometry() const {
    return {&canonical.body, &canonical.garment, &canonical.hair};
}

void query_all_layers(LayerGaussians& gaussians, const FieldSet& fields, const CanonicalPose& canonical) {
    for (Layer layer : kAllLayers)
        if (!layer_of(gaussians, layer).empty()) query_layer(layer_of(gaussians, layer), layer, fields[layer], canonical);
}

// ---------------------------------------------------------------------------
// Score providers

namespace {

void check_shape(const Image& image, const ScoreInput& input, const std::string& who) {
    if (image.width != input.noisy.width || image.height != input.noisy.height)
        throw InvalidArgument(who + " image is " + std::to_string(image.width) + "x" + std::to_string(image.height) +
                              " but the render is " + std::to_string(input.noisy.width) + "x" +
                              std::to_string(input.noisy.height));
}

class NullProvider : public ScoreProvider {
public:
    std::string name() const override { return "null"; }
    Image predict(const ScoreInput& input) override { return input.noise; }
};

class PhotometricProvider : public ScoreProvider {
public:
    explicit PhotometricProvider(Image target) : target_(std::move(target)) {}
    std::string name() const override { return "photometric"; }
    Image predict(const ScoreInput& input) override {
        check_shape(target_, input, "photometric target");
        require(input.weight != 0.0, "photometric provider needs a non-zero weighting");
        Image out = input.noise;
        for (std::size_t i = 0; i < out.pixels.size(); ++i)
            out.pixels[i] += (input.clean.pixels[i] - target_.pixels[i]) / input.weight;
        return out;
    }

private:
    Image target_;
};

class ConstantProvider : public ScoreProvider {
public:
    explicit ConstantProvider(double value) : value_(value) {}
    std::string name() const override { return "constant"; }
    Image predict(const ScoreInput& input) override {
        return Image(input.noisy.width, input.noisy.height, Vec3::Constant(value_));
    }

private:
    double value_;
};

class NoiseProvider : public ScoreProvider {
public:
    explicit NoiseProvider(std::uint64_t seed) : seed_(seed) {}
    std::string name() const override { return "noise"; }
    Image predict(const ScoreInput& input) override {
        Rng rng(split_seed(seed_, input.draw));
        std::normal_distribution<double> n(0.0, 1.0);
        Image out(input.noisy.width, input.noisy.height);
        for (Vec3& p : out.pixels) p = Vec3(n(rng), n(rng), n(rng));
        return out;
    }

private:
    std::uint64_t seed_;
};

}  // namespace

std::unique_ptr<ScoreProvider> make_null_provider() { return std::make_unique<NullProvider>(); }

std::unique_ptr<ScoreProvider> make_photometric_provider(Image target) {
    require(target.width > 0 && target.height > 0, "photometric target image is empty");
    return std::make_unique<PhotometricProvider>(std::move(target));
}

std::unique_ptr<ScoreProvider> make_constant_provider(double value) {
    require(std::isfinite(value), "constant provider value must be finite");
    return std::make_unique<ConstantProvider>(value);
}

std::unique_ptr<ScoreProvider> make_noise_provider(std::uint64_t seed) { return std::make_unique<NoiseProvider>(seed); }

std::unique_ptr<ScoreProvider> parse_provider(const std::string& spec, std::uint64_t seed) {
    const auto colon = spec.find(':');
    const std::string kind = spec.substr(0, colon);
    const std::string arg = colon == std::string::npos ? "" : spec.substr(colon + 1);
    if (kind == "null" && arg.empty()) return make_null_provider();
    if (kind == "noise" && arg.empty()) return make_noise_provider(split_seed(seed, "provider/noise"));
    if (kind == "photometric" && !arg.empty()) return make_photometric_provider(read_png(arg));
    if (kind == "constant" && !arg.empty()) {
        try {
            return make_constant_provider(detail::parse_double(arg));
        } catch (const IoError&) {
            throw InvalidArgument("constant provider value '" + arg + "' is not a number");
        }
    }
    throw InvalidArgument("unknown score provider '" + spec +
                          "' (expected null, noise, photometric:<image.png> or constant:<value>)");
}

// ---------------------------------------------------------------------------
// Hair regularizer

HairRegVariant parse_hair_reg_variant(const std::string& name) {
    if (name == "as_written") return HairRegVariant::as_written;
    if (name == "hinge") return HairRegVariant::hinge;
    throw InvalidArgument("unknown hair regularizer variant '" + name + "' (expected as_written or hinge)");
}

std::string hair_reg_variant_name(HairRegVariant variant) {
    return variant == HairRegVariant::as_written ? "as_written" : "hinge";
}

HairRegResult hair_regularizer(const Eigen::MatrixXd& opacities, HairRegVariant variant) {
    const Eigen::Index ns = opacities.rows(), nl = opacities.cols();
    require(nl >= 2, "hair regularizer needs at least 2 segments per strand");
    require(ns >= 1, "hair regularizer needs at least one strand");
    HairRegResult r;
    r.gradient = Eigen::MatrixXd::Zero(ns, nl);
    for (Eigen::Index i = 0; i < ns; ++i)
        for (Eigen::Index j = 1; j < nl; ++j) {
            const double diff = opacities(i, j - 1) - opacities(i, j);
            if (variant == HairRegVariant::as_written) {
                r.loss += diff;
                r.gradient(i, j - 1) += 1.0;
                r.gradient(i, j) -= 1.0;
            } else if (diff < 0.0) {
                r.loss -= diff;
                r.gradient(i, j) += 1.0;
                r.gradient(i, j - 1) -= 1.0;
            }
        }
    const double scale = 1.0 / static_cast<double>(ns * nl);
    r.loss *= scale;
    r.gradient *= scale;
    return r;
}

Eigen::MatrixXd hair_opacity_matrix(std::span<const GaussianPrimitive> hair, int num_strands, int num_segments) {
    Eigen::MatrixXd o = Eigen::MatrixXd::Constant(num_strands, num_segments, std::nan(""));
    for (const GaussianPrimitive& g : hair) {
        const auto* sb = std::get_if<SegmentBinding>(&g.binding);
        require(sb && sb->strand >= 0 && sb->strand < num_strands && sb->segment >= 0 && sb->segment < num_segments,
                "hair layer primitive is not bound to a valid segment");
        o(sb->strand, sb->segment) = g.opacity;
    }
    require(o.allFinite(), "hair layer must carry exactly one primitive per segment");
    return o;
}

// ---------------------------------------------------------------------------
// Cameras and views

Camera orbit_camera(const Vec3& center, double distance, double azimuth_deg, double elevation_deg, double fov_y_deg,
                    int width, int height) {
    const double az = azimuth_deg * M_PI / 180.0, el = elevation_deg * M_PI / 180.0;
    const Vec3 eye = center + distance * Vec3(std::cos(el) * std::sin(az), -std::cos(el) * std::cos(az), std::sin(el));
    return Camera::look_at(eye, center, Vec3::UnitZ(), fov_y_deg, width, height);
}

void CameraSampler::validate() const {
    require(distance > 0.0, "camera distance must be positive");
    require(fov_y_deg > 0.0 && fov_y_deg < 180.0, "camera field of view must lie in (0, 180) degrees");
    require(width > 0 && height > 0, "camera resolution must be positive");
    require(elevation_min_deg <= elevation_max_deg && elevation_min_deg > -90.0 && elevation_max_deg < 90.0,
            "camera elevation range must lie in (-90, 90) degrees");
    require(zoom_probability >= 0.0 && zoom_probability <= 1.0, "zoom probability must lie in [0, 1]");
    for (const auto& z : zooms) require(z.distance > 0.0, "zoom distance must be positive");
}

Camera CameraSampler::sample(Rng& rng) const {
    if (fixed) return *fixed;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double azimuth = 360.0 * u(rng);
    const double elevation = elevation_min_deg + (elevation_max_deg - elevation_min_deg) * u(rng);
    const double pick = u(rng);
    if (!zooms.empty() && pick < zoom_probability) {
        const std::size_t k = std::min(zooms.size() - 1, static_cast<std::size_t>(u(rng) * zooms.size()));
        return orbit_camera(zooms[k].point, zooms[k].distance, azimuth, elevation, fov_y_deg, width, height);
    }
    return orbit_camera(center, distance, azimuth, elevation, fov_y_deg, width, height);
}

CameraSampler default_camera_sampler(const TriangleMesh& body, int width, int height) {
    require(!body.empty(), "camera framing needs a body mesh");
    const Eigen::AlignedBox3d box = body.bounds();
    const Vec3 size = box.sizes();
    CameraSampler s;
    s.width = width;
    s.height = height;
    s.center = box.center();
    const double half_tan = std::tan(0.5 * s.fov_y_deg * M_PI / 180.0);
    s.distance = 1.15 * 0.5 * std::max(size.z(), size.x()) / half_tan + 0.5 * size.y();
    const double top = box.max().z();
    s.zooms.push_back({"head", Vec3(s.center.x(), s.center.y(), top - 0.07 * size.z()), 0.3 * s.distance});
    // Hands: the vertices at the lateral extremes (T-pose arms).
    for (int side : {+1, -1}) {
        Vec3 sum = Vec3::Zero();
        int n = 0;
        const double edge = side > 0 ? box.max().x() : box.min().x();
        for (const Vec3& v : body.vertices())
            if (std::abs(v.x() - edge) < 0.06 * size.x()) sum += v, ++n;
        if (n > 0) s.zooms.push_back({side > 0 ? "left_hand" : "right_hand", sum / n, 0.25 * s.distance});
    }
    s.zooms.push_back({"lower_body", Vec3(s.center.x(), s.center.y(), box.min().z() + 0.3 * size.z()), 0.55 * s.distance});
    return s;
}

std::vector<RenderView> phase_views(int phase) {
    require(phase == 1 || phase == 2, "optimization phase must be 1 or 2");
    const LayerMask b = layer_bit(Layer::body), g = layer_bit(Layer::garment), h = layer_bit(Layer::hair);
    std::vector<RenderView> views{{"body", b}, {"hair", h}, {"body+hair", LayerMask(b | h)}};
    if (phase == 2) {
        views.push_back({"garment", g});
        views.push_back({"full", kAllLayersMask});
    }
    return views;
}

// ---------------------------------------------------------------------------
// SDS

void SdsSettings::validate() const {
    require(t_min > 0.0 && t_min <= t_max && t_max < 1.0, "noise level range must satisfy 0 < t_min <= t_max < 1");
    require(weight >= 0.0 && std::isfinite(weight), "SDS weighting must be finite and non-negative");
    require(background.allFinite(), "background colour must be finite");
    light_ranges.validate();
}

AppearanceProblem::AppearanceProblem(const AvatarAssembly& assembly) : assembly_(&assembly) {
    std::size_t count = 0;
    for (Layer layer : kAllLayers) {
        const auto& g = layer_of(assembly.gaussians, layer);
        if (g.empty()) continue;
        const auto i = static_cast<std::size_t>(layer);
        placed_[i] = place_gaussians(g, assembly.canonical.mesh_for(layer), assembly.canonical.strands_for(layer));
        positions_[i].resize(placed_[i].size());
        for (std::size_t k = 0; k < placed_[i].size(); ++k) {
            positions_[i][k] = placed_[i][k].pose.mean;
            center_ += positions_[i][k];
        }
        count += placed_[i].size();
    }
    require(count > 0, "appearance optimization needs at least one primitive");
    center_ /= static_cast<double>(count);
}

LayerGaussians AppearanceProblem::queried(const FieldSet& fields, LayerMask layers) const {
    LayerGaussians out;
    for (Layer layer : kAllLayers) {
        if (!(layers & layer_bit(layer)) || !assembly_->has_layer(layer)) continue;
        const auto i = static_cast<std::size_t>(layer);
        const AppearanceField& field = fields[layer];
        require(field.layer() == layer, "field set holds a field for the wrong layer");
        auto& g = out[i];
        g = layer_of(assembly_->gaussians, layer);
        const Eigen::MatrixXd eval = field.eval(positions_[i]);
        const int dc = field.feature_dim();
        for (std::size_t k = 0; k < g.size(); ++k) {
            g[k].features = eval.col(static_cast<Eigen::Index>(k)).head(dc);
            g[k].opacity = eval(dc, static_cast<Eigen::Index>(k));
        }
    }
    return out;
}

SplatBatch AppearanceProblem::splats(const LayerGaussians& queried, const LightSample* light, LayerMask layers) const {
    SplatBatch batch;
    for (Layer layer : kAllLayers) {
        if (!(layers & layer_bit(layer)) || layer_of(queried, layer).empty()) continue;
        append_layer_splats(batch, layer, layer_of(queried, layer), placed_[static_cast<std::size_t>(layer)], light);
    }
    return batch;
}

std::array<Eigen::VectorXd, 3> AppearanceProblem::field_gradients(const FieldSet& fields, const SplatBatch& batch,
                                                                  const RenderGradients& grads,
                                                                  LayerMask layers) const {
    require(grads.d_color.size() == batch.splats.size() && grads.d_opacity.size() == batch.splats.size(),
            "render gradients do not match the splat batch");
    std::array<Eigen::MatrixXd, 3> upstream;
    for (Layer layer : kAllLayers) {
        if (!(layers & layer_bit(layer)) || !assembly_->has_layer(layer)) continue;
        const auto i = static_cast<std::size_t>(layer);
        upstream[i] = Eigen::MatrixXd::Zero(fields[layer].output_dim(), static_cast<Eigen::Index>(positions_[i].size()));
    }
    for (std::size_t s = 0; s < batch.splats.size(); ++s) {
        const auto i = static_cast<std::size_t>(batch.layer[s]);
        if (upstream[i].size() == 0) continue;
        const auto col = static_cast<Eigen::Index>(batch.index[s]);
        upstream[i].block<3, 1>(0, col) += grads.d_color[s].cwiseProduct(batch.shading[s]);
        upstream[i](upstream[i].rows() - 1, col) += grads.d_opacity[s];
    }
    std::array<Eigen::VectorXd, 3> out;
    for (Layer layer : kAllLayers) {
        const auto i = static_cast<std::size_t>(layer);
        if (upstream[i].size() > 0) out[i] = fields[layer].backward(positions_[i], upstream[i]);
    }
    return out;
}

Eigen::VectorXd AppearanceProblem::opacity_gradient(const FieldSet& fields, Layer layer,
                                                    std::span<const double> d_opacity) const {
    const auto i = static_cast<std::size_t>(layer);
    require(d_opacity.size() == positions_[i].size(), "opacity gradient does not match the layer");
    Eigen::MatrixXd upstream = Eigen::MatrixXd::Zero(fields[layer].output_dim(), static_cast<Eigen::Index>(d_opacity.size()));
    for (std::size_t k = 0; k < d_opacity.size(); ++k) upstream(upstream.rows() - 1, static_cast<Eigen::Index>(k)) = d_opacity[k];
    return fields[layer].backward(positions_[i], upstream);
}

SdsStepResult sds_step(const AppearanceProblem& problem, const FieldSet& fields, const CameraSampler& cameras,
                       std::span<const RenderView> views, ScoreProvider& provider, const SdsSettings& settings,
                       Rng& rng) {
    settings.validate();
    cameras.validate();
    const LayerMask present = problem.assembly().present_layers();
    std::vector<RenderView> usable;
    for (const RenderView& v : views) {
        const LayerMask m = v.layers & present;
        if (m == 0) continue;
        if (std::any_of(usable.begin(), usable.end(), [&](const RenderView& u) { return u.layers == m; })) continue;
        usable.push_back({v.tag, m});
    }
    require(!usable.empty(), "no render view has a layer with primitives");

    std::uniform_real_distribution<double> u(0.0, 1.0);
    const RenderView& view = usable[std::min(usable.size() - 1, static_cast<std::size_t>(u(rng) * usable.size()))];
    const Camera camera = cameras.sample(rng);
    const LightSample light = settings.fixed_light ? *settings.fixed_light
                                                   : sample_light(settings.light_ranges, problem.center(), rng);
    RenderOptions options;
    options.layers = view.layers;
    options.keep_contributors = true;
    options.background = settings.random_background ? Vec3(u(rng), u(rng), u(rng)) : settings.background;
    const double t = settings.t_min + (settings.t_max - settings.t_min) * u(rng);
    const double sigma = t;

    const LayerGaussians queried = problem.queried(fields, view.layers);
    const SplatBatch batch = problem.splats(queried, &light, view.layers);
    const RenderOutput out = settings.reference_renderer ? render_reference(batch.splats, camera, options)
                                                         : render(batch.splats, camera, options);
    Image noise(out.color.width, out.color.height);
    std::normal_distribution<double> n(0.0, 1.0);
    for (Vec3& p : noise.pixels) p = Vec3(n(rng), n(rng), n(rng));
    Image noisy = out.color;
    for (std::size_t i = 0; i < noisy.pixels.size(); ++i) noisy.pixels[i] += sigma * noise.pixels[i];

    const Image predicted = provider.predict({noisy, out.color, noise, view.tag, t, sigma, settings.weight, rng()});
    if (predicted.width != out.color.width || predicted.height != out.color.height ||
        predicted.pixels.size() != out.color.pixels.size())
        throw InvalidArgument("score provider '" + provider.name() + "' returned a " + std::to_string(predicted.width) +
                              "x" + std::to_string(predicted.height) + " image for a " +
                              std::to_string(out.color.width) + "x" + std::to_string(out.color.height) + " render");

    SdsStepResult result;
    result.t = t;
    result.tag = view.tag;
    std::vector<Vec3> residual(noise.pixels.size());
    for (std::size_t i = 0; i < residual.size(); ++i) {
        residual[i] = settings.weight * (predicted.pixels[i] - noise.pixels[i]);
        result.loss += 0.5 * residual[i].squaredNorm();
    }
    const RenderGradients grads = render_backward(out, batch.splats, residual);
    result.gradients = problem.field_gradients(fields, batch, grads, view.layers);
    result.render = out.color;
    return result;
}

// ---------------------------------------------------------------------------
// Schedule

void OptimizationSchedule::validate() const {
    require(phase1_iterations >= 0 && phase2_iterations >= 0 && total_iterations() > 0,
            "optimization needs a positive number of iterations");
    require(learning_rate > 0.0 && std::isfinite(learning_rate), "learning rate must be positive");
    require(lambda_hair >= 0.0 && std::isfinite(lambda_hair), "hair regularizer weight must be non-negative");
    sds.validate();
}

std::vector<LossRecord> run_schedule(const AvatarAssembly& assembly, FieldSet& fields,
                                     const OptimizationSchedule& schedule, ScoreProvider& provider,
                                     const CameraSampler& cameras, std::uint64_t seed, int first_iteration,
                                     int last_iteration) {
    schedule.validate();
    const int end = last_iteration < 0 ? schedule.total_iterations() : last_iteration;
    require(first_iteration >= 0 && first_iteration <= end && end <= schedule.total_iterations(),
            "iteration window lies outside the schedule");
    const AppearanceProblem problem(assembly);
    const bool hair = assembly.has_layer(Layer::hair);
    const auto& strands = assembly.canonical.hair;
    const std::array<std::vector<RenderView>, 2> views{phase_views(1), phase_views(2)};

    std::vector<LossRecord> log;
    for (int it = first_iteration; it < end; ++it) {
        const int phase = it < schedule.phase1_iterations ? 1 : 2;
        Rng rng(split_seed(seed, static_cast<std::uint64_t>(it)));
        SdsStepResult step = sds_step(problem, fields, cameras, views[static_cast<std::size_t>(phase - 1)], provider,
                                      schedule.sds, rng);
        LossRecord rec;
        rec.iteration = it;
        rec.phase = phase;
        rec.tag = step.tag;
        rec.l_sds = step.loss;

        const auto hi = static_cast<std::size_t>(Layer::hair);
        if (hair && schedule.lambda_hair != 0.0) {
            const LayerGaussians q = problem.queried(fields, layer_bit(Layer::hair));
            const auto& hg = layer_of(q, Layer::hair);
            const HairRegResult reg = hair_regularizer(
                hair_opacity_matrix(hg, strands.num_strands(), strands.num_segments()), schedule.hair_variant);
            rec.l_hair = reg.loss;
            std::vector<double> d_opacity(hg.size());
            for (std::size_t k = 0; k < hg.size(); ++k) {
                const auto& sb = std::get<SegmentBinding>(hg[k].binding);
                d_opacity[k] = schedule.lambda_hair * reg.gradient(sb.strand, sb.segment);
            }
            const Eigen::VectorXd g = problem.opacity_gradient(fields, Layer::hair, d_opacity);
            if (step.gradients[hi].size() == 0) step.gradients[hi] = g;
            else step.gradients[hi] += g;
        }
        rec.total = rec.l_sds + schedule.lambda_hair * rec.l_hair;
        if (!std::isfinite(rec.total))
            throw OptimizationError("optimization loss became non-finite at iteration " + std::to_string(it), it);

        for (Layer layer : kAllLayers) {
            if (phase == 1 && layer == Layer::garment) continue;
            const Eigen::VectorXd& g = step.gradients[static_cast<std::size_t>(layer)];
            if (g.size() == 0) continue;
            if (!g.allFinite())
                throw OptimizationError("non-finite field gradient at iteration " + std::to_string(it), it);
            fields[layer].apply_gradient_step(g, schedule.learning_rate);
        }
        log.push_back(rec);
    }
    return log;
}

void write_loss_csv(std::ostream& out, std::span<const LossRecord> log) {
    out << "iteration,L_SDS,L_hair,total\n";
    for (const LossRecord& r : log)
        out << r.iteration << ',' << detail::format_double(r.l_sds) << ',' << detail::format_double(r.l_hair) << ','
            << detail::format_double(r.total) << '\n';
}

void write_loss_csv(const std::string& path, std::span<const LossRecord> log) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write loss log " + path);
    write_loss_csv(out, log);
    if (!out) throw IoError("failed writing loss log " + path);
}

}  // namespace avatar
