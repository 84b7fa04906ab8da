#pragma once

#include "avatar/geometry/humanoid.hpp"
#include "avatar/optimize/optimize.hpp"
#include "avatar/sim/cloth.hpp"
#include "avatar/sim/hair.hpp"
#include "avatar/udf/udf.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace avatar {

namespace fs = std::filesystem;

// Error raised by a pipeline command; what() is "<stage>: <cause>".
class PipelineError : public Error {
public:
    PipelineError(std::string stage, const std::string& cause, int frame = -1)
        : Error(cause.starts_with(stage + ": ") ? cause : stage + ": " + cause), stage_(std::move(stage)), frame_(frame) {}
    const std::string& stage() const { return stage_; }
    int frame() const { return frame_; }  // -1 when not tied to a frame

private:
    std::string stage_;
    int frame_;
};

struct BodySource {
    std::string source = "capsule";  // capsule | file
    fs::path path;                   // body JSON for source "file"
    HumanoidParams humanoid;
};

struct GarmentSource {
    std::string source = "template";  // template | points | obj | none
    GarmentTemplate shape;
    fs::path path;                    // point cloud (.xyz or .obj vertices) or OBJ mesh
    int resolution = 96;              // UDF nodes along the longest axis
    double padding_cells = 3.0;
    CleanupOptions cleanup;
    std::string attach = "top";       // top: the highest boundary ring follows the body; none
    double attach_band = 0.01;        // metres below the highest boundary point
};

struct HairSource {
    std::string source = "procedural";  // procedural | file | none
    int strands = 100;
    int segments = 8;
    double length = 0.25;
    CurlParams curl{true, 0.0, 0.0, 0.5};
    fs::path path;           // strand binary for source "file"
    fs::path bindings_path;  // root bindings for source "file"
};

struct GaussianCounts {
    int body = 2000;
    int garment = 800;
    int sh_degree = 0;
};

struct RenderSettings {
    int width = 256;
    int height = 256;
    double fov_y_deg = 40.0;
    double azimuth_deg = 0.0;
    double elevation_deg = 5.0;
    double distance = 0.0;  // 0 frames the whole body
    Vec3 background = Vec3::Ones();
    LightSample light;      // used with --fixed-light
    LightRanges light_ranges;
};

struct AnimationSettings {
    std::string poses = "idle";  // idle | translate | leg_raise, or a pose sequence file
    int frames = 30;
    double frame_interval = 1.0 / 60.0;  // built-in sequences; pose files carry their own
    double speed = 0.5;          // translate: metres per second along +x
    double angle_deg = 45.0;     // leg_raise: final hip flexion
    double ramp_seconds = 0.5;   // leg_raise: time to reach the final angle
};

struct PipelineConfig {
    std::uint64_t seed = 0;
    BodySource body;
    GarmentSource garment;
    HairSource hair;
    GaussianCounts gaussians;
    RenderSettings render;
    OptimizationSchedule schedule;
    int optimize_width = 64;
    int optimize_height = 64;
    std::string optimize_camera = "orbit";  // orbit: random framings; render: the render camera
    ClothMaterial cloth;
    ClothSettings cloth_settings;
    HairParams hair_params;
    AnimationSettings animation;

    // Relative paths resolve against base_dir. Unknown keys are rejected.
    static PipelineConfig parse(const std::string& json_text, const fs::path& base_dir = {});
    static PipelineConfig load(const fs::path& path);
    std::string to_json() const;

    // Checks every value and that referenced files exist.
    void validate() const;
    // FNV-1a over the seed and the asset-defining sections, with referenced files
    // hashed by content; 16 hex digits.
    std::string asset_hash() const;
};

// A generated avatar: skinned body, canonical layers, bound primitives and fields.
struct Bundle {
    PipelineConfig config;
    std::string config_hash;
    SkinnedBody body;
    AvatarAssembly assembly;
    FieldSet fields;
};

// Writes the bundle directory: manifest.json, config.json, body.json, body.obj,
// garment.obj, hair.strands, hair.roots, gaussians/<layer>.ply with a
// gaussians/<layer>.table sidecar, fields/<layer>.field.
void write_bundle(const fs::path& dir, const Bundle& bundle);
Bundle read_bundle(const fs::path& dir);
// Fields from <dir>/fields.
FieldSet read_fields(const fs::path& dir, int feature_dim);
void write_fields(const fs::path& dir, const FieldSet& fields);

// Builds every asset from the config without touching the disk (beyond reading sources).
Bundle build_bundle(const PipelineConfig& config);

// Per-command options shared by the CLI and tests.
struct CommandOptions {
    std::optional<fs::path> config;  // when set, must match the bundle's asset hash
    std::optional<std::uint64_t> seed;
    LayerMask layers = kAllLayersMask;
    bool fixed_light = false;
    bool reference = false;
    std::optional<fs::path> fields;  // directory holding fields/ to use instead of the bundle's
};

// Bundle config, or the given config after the drift check; seed overridden when set.
PipelineConfig effective_config(const Bundle& bundle, const CommandOptions& options);

// generate: config -> bundle directory. Returns the written bundle.
Bundle cmd_generate(const PipelineConfig& config, const fs::path& out);

// Canonical-pose camera and light used by render and animate.
Camera render_camera(const Bundle& bundle, const RenderSettings& render);
LightSample render_light(const Bundle& bundle, const PipelineConfig& config, bool fixed_light);

// Splats the given frame geometry with field appearance, shading and the render settings.
Image render_geometry(const Bundle& bundle, const FieldSet& fields, const FrameGeometry& geometry,
                      const PipelineConfig& config, const CommandOptions& options);

// render: canonical bundle -> <out>/render.png. Returns the image.
Image cmd_render(const fs::path& bundle_dir, const fs::path& out, const CommandOptions& options = {});

struct FrameStats {
    int frame = 0;
    Vec3 body_centroid = Vec3::Zero();
    Vec3 splat_centroid = Vec3::Zero();
    double garment_penetration = 0.0;  // deepest garment vertex inside the body, 0 if none
    double hair_penetration = 0.0;
};

// Built-in sequences (idle, translate, leg_raise) or a pose file.
PoseSequence make_pose_sequence(const SkinnedBody& body, const AnimationSettings& animation,
                                const fs::path& base_dir = {});

// animate: per frame skin the body, advance the garment against it, advance the hair
// against body and garment, place and render every layer. Writes
// frames/frame_NNNN.png, body/frame_NNNN.obj, garment/frame_NNNN.obj, hair.seq with
// hair.seq.index, and stats.csv. Frames already written stay on disk when a later
// frame fails.
std::vector<FrameStats> cmd_animate(const fs::path& bundle_dir, const fs::path& out, const CommandOptions& options = {},
                                    const std::optional<PoseSequence>& poses = std::nullopt);

struct OptimizeOptions {
    std::string provider = "null";
    bool resume = false;   // continue from <out>/checkpoint.json
    int until = -1;        // stop before this iteration; -1 runs the whole schedule
};

// optimize: trains the fields and writes <out>/fields, <out>/loss.csv and
// <out>/checkpoint.json. out may be the bundle directory itself.
std::vector<LossRecord> cmd_optimize(const fs::path& bundle_dir, const fs::path& out, const OptimizeOptions& optimize,
                                     const CommandOptions& options = {});

// export: ply (splats with field appearance plus binding table), obj (meshes) or
// strands (hair and root bindings) for the selected layers. Returns written paths.
std::vector<fs::path> cmd_export(const fs::path& bundle_dir, const fs::path& out, const std::string& format,
                                 const CommandOptions& options = {});

// Mask for "body", "garment", "hair" or "all".
LayerMask parse_layer_mask(const std::string& name);

}  // namespace avatar
