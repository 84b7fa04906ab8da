#include "avatar/pipeline/pipeline.hpp"

#include "avatar/gaussian/io.hpp"
#include "text_io.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace avatar {

using json = nlohmann::json;

namespace {

constexpr const char* kBundleFormat = "avatar-bundle";
constexpr int kBundleVersion = 1;

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("failed writing " + path.string());
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// Runs f, rethrowing any failure as a PipelineError tagged with the stage.
template <typename F>
auto stage(const std::string& name, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const PipelineError&) {
        throw;
    } catch (const SimulationError& e) {
        throw PipelineError(name, e.what(), e.frame());
    } catch (const std::exception& e) {
        throw PipelineError(name, e.what());
    }
}

// ---------------------------------------------------------------------------
// Config reading with key tracking

class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw InvalidArgument("config: " + path_ + " must be an object");
    }

    double number(const char* key, double fallback) {
        const json* v = take(key);
        if (!v) return fallback;
        if (!v->is_number()) fail(key, "a number");
        return v->get<double>();
    }

    int integer(const char* key, int fallback) {
        const json* v = take(key);
        if (!v) return fallback;
        if (!v->is_number_integer()) fail(key, "an integer");
        return v->get<int>();
    }

    std::uint64_t unsigned_integer(const char* key, std::uint64_t fallback) {
        const json* v = take(key);
        if (!v) return fallback;
        if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<long long>() >= 0))
            fail(key, "a non-negative integer");
        return v->get<std::uint64_t>();
    }

    bool flag(const char* key, bool fallback) {
        const json* v = take(key);
        if (!v) return fallback;
        if (!v->is_boolean()) fail(key, "true or false");
        return v->get<bool>();
    }

    std::string text(const char* key, const std::string& fallback) {
        const json* v = take(key);
        if (!v) return fallback;
        if (!v->is_string()) fail(key, "a string");
        return v->get<std::string>();
    }

    template <int N>
    Eigen::Matrix<double, N, 1> vec(const char* key, const Eigen::Matrix<double, N, 1>& fallback) {
        const json* v = take(key);
        if (!v) return fallback;
        if (!v->is_array() || v->size() != N) fail(key, "an array of " + std::to_string(N) + " numbers");
        Eigen::Matrix<double, N, 1> out;
        for (int i = 0; i < N; ++i) {
            if (!(*v)[static_cast<std::size_t>(i)].is_number()) fail(key, "an array of numbers");
            out[i] = (*v)[static_cast<std::size_t>(i)].get<double>();
        }
        return out;
    }

    Section child(const char* key) {
        const json* v = take(key);
        static const json empty = json::object();
        return Section(v ? *v : empty, path_.empty() ? key : path_ + "." + key);
    }

    // Rejects keys that were never read.
    void finish() const {
        for (const auto& [key, value] : j_.items())
            if (!used_.count(key))
                throw InvalidArgument("config: unknown key '" + (path_.empty() ? key : path_ + "." + key) + "'");
    }

private:
    const json* take(const char* key) {
        used_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    [[noreturn]] void fail(const char* key, const std::string& what) const {
        throw InvalidArgument("config: " + (path_.empty() ? std::string(key) : path_ + "." + key) + " must be " + what);
    }

    const json& j_;
    std::string path_;
    std::set<std::string> used_;
};

fs::path resolve(const fs::path& base, const std::string& p) {
    if (p.empty()) return {};
    fs::path path(p);
    if (path.is_relative() && !base.empty()) path = base / path;
    return path.lexically_normal();
}

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }
json vec_json(const Vec2& v) { return json::array({v.x(), v.y()}); }

json light_json(const LightSample& l) {
    return {{"position", vec_json(l.position)}, {"color", vec_json(l.color)}, {"ambient", vec_json(l.ambient)}};
}

LightSample parse_light(Section s) {
    LightSample l;
    l.position = s.vec<3>("position", l.position);
    l.color = s.vec<3>("color", l.color);
    l.ambient = s.vec<3>("ambient", l.ambient);
    s.finish();
    return l;
}

json ranges_json(const LightRanges& r) {
    return {{"radius_min", r.radius_min}, {"radius_max", r.radius_max}, {"color_min", r.color_min},
            {"color_max", r.color_max},   {"ambient_min", r.ambient_min}, {"ambient_max", r.ambient_max}};
}

LightRanges parse_ranges(Section s) {
    LightRanges r;
    r.radius_min = s.number("radius_min", r.radius_min);
    r.radius_max = s.number("radius_max", r.radius_max);
    r.color_min = s.number("color_min", r.color_min);
    r.color_max = s.number("color_max", r.color_max);
    r.ambient_min = s.number("ambient_min", r.ambient_min);
    r.ambient_max = s.number("ambient_max", r.ambient_max);
    s.finish();
    return r;
}

json path_json(const fs::path& p) { return p.empty() ? json("") : json(p.generic_string()); }

// Sections that define the assets; file paths are replaced by content hashes.
json asset_json(const PipelineConfig& c, bool hash_files) {
    const json full = json::parse(c.to_json());
    json a = {{"seed", full["seed"]},
              {"body", full["body"]},
              {"garment", full["garment"]},
              {"hair", full["hair"]},
              {"gaussians", full["gaussians"]}};
    if (hash_files) {
        auto replace = [](json& j, const char* key) {
            const std::string p = j[key].get<std::string>();
            if (!p.empty()) j[key] = "fnv1a64:" + hex64(fnv1a64(read_text(p)));
        };
        if (c.body.source == "file") replace(a["body"], "path");
        if (c.garment.source == "points" || c.garment.source == "obj") replace(a["garment"], "path");
        if (c.hair.source == "file") {
            replace(a["hair"], "path");
            replace(a["hair"], "bindings");
        }
    }
    return a;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

PipelineConfig PipelineConfig::parse(const std::string& json_text, const fs::path& base_dir) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw InvalidArgument(std::string("config: malformed JSON: ") + e.what());
    }
    PipelineConfig c;
    Section s(root, "");
    c.seed = s.unsigned_integer("seed", c.seed);

    {
        Section b = s.child("body");
        c.body.source = b.text("source", c.body.source);
        c.body.path = resolve(base_dir, b.text("path", ""));
        c.body.humanoid.height = b.number("height", c.body.humanoid.height);
        c.body.humanoid.cell_size = b.number("cell_size", c.body.humanoid.cell_size);
        c.body.humanoid.blend_radius = b.number("blend_radius", c.body.humanoid.blend_radius);
        b.finish();
    }
    {
        Section g = s.child("garment");
        GarmentSource& gs = c.garment;
        gs.source = g.text("source", gs.source);
        gs.shape.kind = parse_garment_kind(g.text("kind", garment_kind_name(gs.shape.kind)));
        gs.shape.center = g.vec<2>("center", gs.shape.center);
        gs.shape.top_z = g.number("top_z", gs.shape.top_z);
        gs.shape.length = g.number("length", gs.shape.length);
        gs.shape.top_radius = g.number("top_radius", gs.shape.top_radius);
        gs.shape.bottom_radius = g.number("bottom_radius", gs.shape.top_radius);
        gs.shape.arc_degrees = g.number("arc_degrees", gs.shape.arc_degrees);
        gs.path = resolve(base_dir, g.text("path", ""));
        gs.resolution = g.integer("resolution", gs.resolution);
        gs.padding_cells = g.number("padding_cells", gs.padding_cells);
        Section cl = g.child("cleanup");
        gs.cleanup.weld_radius = cl.number("weld_radius", gs.cleanup.weld_radius);
        gs.cleanup.min_component_faces = cl.integer("min_component_faces", gs.cleanup.min_component_faces);
        gs.cleanup.smooth = cl.flag("smooth", gs.cleanup.smooth);
        gs.cleanup.smooth_lambda = cl.number("smooth_lambda", gs.cleanup.smooth_lambda);
        gs.cleanup.smooth_iterations = cl.integer("smooth_iterations", gs.cleanup.smooth_iterations);
        cl.finish();
        gs.attach = g.text("attach", gs.attach);
        gs.attach_band = g.number("attach_band", gs.attach_band);
        g.finish();
    }
    {
        Section h = s.child("hair");
        HairSource& hs = c.hair;
        hs.source = h.text("source", hs.source);
        hs.strands = h.integer("strands", hs.strands);
        hs.segments = h.integer("segments", hs.segments);
        hs.length = h.number("length", hs.length);
        Section curl = h.child("curl");
        hs.curl.straight = curl.flag("straight", hs.curl.straight);
        hs.curl.amplitude = curl.number("amplitude", hs.curl.amplitude);
        hs.curl.turns_per_meter = curl.number("turns_per_meter", hs.curl.turns_per_meter);
        hs.curl.droop = curl.number("droop", hs.curl.droop);
        curl.finish();
        hs.path = resolve(base_dir, h.text("path", ""));
        hs.bindings_path = resolve(base_dir, h.text("bindings", ""));
        h.finish();
    }
    {
        Section g = s.child("gaussians");
        c.gaussians.body = g.integer("body", c.gaussians.body);
        c.gaussians.garment = g.integer("garment", c.gaussians.garment);
        c.gaussians.sh_degree = g.integer("sh_degree", c.gaussians.sh_degree);
        g.finish();
    }
    {
        Section r = s.child("render");
        RenderSettings& rs = c.render;
        rs.width = r.integer("width", rs.width);
        rs.height = r.integer("height", rs.height);
        rs.fov_y_deg = r.number("fov", rs.fov_y_deg);
        rs.azimuth_deg = r.number("azimuth", rs.azimuth_deg);
        rs.elevation_deg = r.number("elevation", rs.elevation_deg);
        rs.distance = r.number("distance", rs.distance);
        rs.background = r.vec<3>("background", rs.background);
        rs.light = parse_light(r.child("light"));
        rs.light_ranges = parse_ranges(r.child("light_ranges"));
        r.finish();
    }
    {
        Section o = s.child("optimize");
        OptimizationSchedule& sc = c.schedule;
        sc.phase1_iterations = o.integer("phase1_iterations", sc.phase1_iterations);
        sc.phase2_iterations = o.integer("phase2_iterations", sc.phase2_iterations);
        sc.learning_rate = o.number("learning_rate", sc.learning_rate);
        sc.lambda_hair = o.number("lambda_hair", sc.lambda_hair);
        sc.hair_variant = parse_hair_reg_variant(o.text("hair_variant", hair_reg_variant_name(sc.hair_variant)));
        c.optimize_width = o.integer("width", c.optimize_width);
        c.optimize_height = o.integer("height", c.optimize_height);
        c.optimize_camera = o.text("camera", c.optimize_camera);
        sc.sds.t_min = o.number("t_min", sc.sds.t_min);
        sc.sds.t_max = o.number("t_max", sc.sds.t_max);
        sc.sds.weight = o.number("weight", sc.sds.weight);
        sc.sds.random_background = o.flag("random_background", sc.sds.random_background);
        sc.sds.background = o.vec<3>("background", sc.sds.background);
        if (o.flag("fixed_light", false)) sc.sds.fixed_light = c.render.light;
        o.finish();
        sc.sds.light_ranges = c.render.light_ranges;
    }
    {
        Section cl = s.child("cloth");
        ClothMaterial& m = c.cloth;
        ClothSettings& st = c.cloth_settings;
        m.stretch_compliance = cl.number("stretch_compliance", m.stretch_compliance);
        m.bend_compliance = cl.number("bend_compliance", m.bend_compliance);
        m.density = cl.number("density", m.density);
        m.friction = cl.number("friction", m.friction);
        m.damping = cl.number("damping", m.damping);
        st.substeps = cl.integer("substeps", st.substeps);
        st.iterations = cl.integer("iterations", st.iterations);
        st.gravity = cl.vec<3>("gravity", st.gravity);
        st.collision_margin = cl.number("collision_margin", st.collision_margin);
        st.sdf_resolution = cl.integer("sdf_resolution", st.sdf_resolution);
        cl.finish();
    }
    {
        Section h = s.child("hair_sim");
        HairParams& p = c.hair_params;
        p.substeps = h.integer("substeps", p.substeps);
        p.gravity = h.vec<3>("gravity", p.gravity);
        p.damping = h.number("damping", p.damping);
        p.bend_stiffness = h.number("bend_stiffness", p.bend_stiffness);
        p.ftl_damping = h.number("ftl_damping", p.ftl_damping);
        p.collision_radius = h.number("collision_radius", p.collision_radius);
        p.sdf_resolution = h.integer("sdf_resolution", p.sdf_resolution);
        h.finish();
    }
    {
        Section a = s.child("animation");
        AnimationSettings& an = c.animation;
        an.poses = a.text("poses", an.poses);
        if (an.poses != "idle" && an.poses != "translate" && an.poses != "leg_raise")
            an.poses = resolve(base_dir, an.poses).generic_string();
        an.frames = a.integer("frames", an.frames);
        an.frame_interval = a.number("frame_interval", an.frame_interval);
        an.speed = a.number("speed", an.speed);
        an.angle_deg = a.number("angle", an.angle_deg);
        an.ramp_seconds = a.number("ramp_seconds", an.ramp_seconds);
        a.finish();
    }
    s.finish();
    return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
    const fs::path abs = fs::absolute(path);
    return parse(read_text(abs), abs.parent_path());
}

std::string PipelineConfig::to_json() const {
    json j;
    j["seed"] = seed;
    j["body"] = {{"source", body.source},
                 {"path", path_json(body.path)},
                 {"height", body.humanoid.height},
                 {"cell_size", body.humanoid.cell_size},
                 {"blend_radius", body.humanoid.blend_radius}};
    j["garment"] = {{"source", garment.source},
                    {"kind", garment_kind_name(garment.shape.kind)},
                    {"center", vec_json(garment.shape.center)},
                    {"top_z", garment.shape.top_z},
                    {"length", garment.shape.length},
                    {"top_radius", garment.shape.top_radius},
                    {"bottom_radius", garment.shape.bottom_radius},
                    {"arc_degrees", garment.shape.arc_degrees},
                    {"path", path_json(garment.path)},
                    {"resolution", garment.resolution},
                    {"padding_cells", garment.padding_cells},
                    {"cleanup",
                     {{"weld_radius", garment.cleanup.weld_radius},
                      {"min_component_faces", garment.cleanup.min_component_faces},
                      {"smooth", garment.cleanup.smooth},
                      {"smooth_lambda", garment.cleanup.smooth_lambda},
                      {"smooth_iterations", garment.cleanup.smooth_iterations}}},
                    {"attach", garment.attach},
                    {"attach_band", garment.attach_band}};
    j["hair"] = {{"source", hair.source},
                 {"strands", hair.strands},
                 {"segments", hair.segments},
                 {"length", hair.length},
                 {"curl",
                  {{"straight", hair.curl.straight},
                   {"amplitude", hair.curl.amplitude},
                   {"turns_per_meter", hair.curl.turns_per_meter},
                   {"droop", hair.curl.droop}}},
                 {"path", path_json(hair.path)},
                 {"bindings", path_json(hair.bindings_path)}};
    j["gaussians"] = {{"body", gaussians.body}, {"garment", gaussians.garment}, {"sh_degree", gaussians.sh_degree}};
    j["render"] = {{"width", render.width},
                   {"height", render.height},
                   {"fov", render.fov_y_deg},
                   {"azimuth", render.azimuth_deg},
                   {"elevation", render.elevation_deg},
                   {"distance", render.distance},
                   {"background", vec_json(render.background)},
                   {"light", light_json(render.light)},
                   {"light_ranges", ranges_json(render.light_ranges)}};
    j["optimize"] = {{"phase1_iterations", schedule.phase1_iterations},
                     {"phase2_iterations", schedule.phase2_iterations},
                     {"learning_rate", schedule.learning_rate},
                     {"lambda_hair", schedule.lambda_hair},
                     {"hair_variant", hair_reg_variant_name(schedule.hair_variant)},
                     {"width", optimize_width},
                     {"height", optimize_height},
                     {"camera", optimize_camera},
                     {"t_min", schedule.sds.t_min},
                     {"t_max", schedule.sds.t_max},
                     {"weight", schedule.sds.weight},
                     {"random_background", schedule.sds.random_background},
                     {"background", vec_json(schedule.sds.background)},
                     {"fixed_light", schedule.sds.fixed_light.has_value()}};
    j["cloth"] = {{"stretch_compliance", cloth.stretch_compliance},
                  {"bend_compliance", cloth.bend_compliance},
                  {"density", cloth.density},
                  {"friction", cloth.friction},
                  {"damping", cloth.damping},
                  {"substeps", cloth_settings.substeps},
                  {"iterations", cloth_settings.iterations},
                  {"gravity", vec_json(cloth_settings.gravity)},
                  {"collision_margin", cloth_settings.collision_margin},
                  {"sdf_resolution", cloth_settings.sdf_resolution}};
    j["hair_sim"] = {{"substeps", hair_params.substeps},
                     {"gravity", vec_json(hair_params.gravity)},
                     {"damping", hair_params.damping},
                     {"bend_stiffness", hair_params.bend_stiffness},
                     {"ftl_damping", hair_params.ftl_damping},
                     {"collision_radius", hair_params.collision_radius},
                     {"sdf_resolution", hair_params.sdf_resolution}};
    j["animation"] = {{"poses", animation.poses},
                      {"frames", animation.frames},
                      {"frame_interval", animation.frame_interval},
                      {"speed", animation.speed},
                      {"angle", animation.angle_deg},
                      {"ramp_seconds", animation.ramp_seconds}};
    return j.dump(2) + "\n";
}

void PipelineConfig::validate() const {
    auto need_file = [](const fs::path& p, const std::string& what) {
        if (p.empty()) throw InvalidArgument("config: " + what + " path is required");
        if (!fs::is_regular_file(p)) throw InvalidArgument("config: " + what + " file not found: " + p.string());
    };
    if (body.source == "capsule") {
        require(body.humanoid.height > 0.0 && body.humanoid.cell_size > 0.0 && body.humanoid.blend_radius >= 0.0,
                "config: body height and cell_size must be positive");
    } else if (body.source == "file") {
        need_file(body.path, "body.path");
    } else {
        throw InvalidArgument("config: body.source must be capsule or file, got '" + body.source + "'");
    }

    if (garment.source == "template") {
        garment.shape.validate();
    } else if (garment.source == "points" || garment.source == "obj") {
        need_file(garment.path, "garment.path");
    } else if (garment.source != "none") {
        throw InvalidArgument("config: garment.source must be template, points, obj or none, got '" +
                              garment.source + "'");
    }
    if (garment.source == "template" || garment.source == "points") {
        require(garment.resolution >= 8, "config: garment.resolution must be at least 8");
        require(garment.padding_cells >= 1.0, "config: garment.padding_cells must be at least 1");
    }
    require(garment.cleanup.weld_radius >= 0.0 && garment.cleanup.min_component_faces >= 0 &&
                garment.cleanup.smooth_iterations >= 0 && garment.cleanup.smooth_lambda >= 0.0 &&
                garment.cleanup.smooth_lambda <= 1.0,
            "config: garment.cleanup values out of range");
    require(garment.attach == "top" || garment.attach == "none", "config: garment.attach must be top or none");
    require(garment.attach_band >= 0.0, "config: garment.attach_band must be non-negative");

    if (hair.source == "procedural") {
        require(hair.strands >= 1, "config: hair.strands must be at least 1");
        require(hair.segments >= 1, "config: hair.segments must be at least 1");
        require(hair.length > 0.0, "config: hair.length must be positive");
        require(hair.curl.droop >= 0.0 && hair.curl.droop <= 1.0, "config: hair.curl.droop must lie in [0, 1]");
    } else if (hair.source == "file") {
        need_file(hair.path, "hair.path");
        need_file(hair.bindings_path, "hair.bindings");
    } else if (hair.source != "none") {
        throw InvalidArgument("config: hair.source must be procedural, file or none, got '" + hair.source + "'");
    }

    require(gaussians.body >= 1, "config: gaussians.body must be at least 1");
    require(garment.source == "none" || gaussians.garment >= 1, "config: gaussians.garment must be at least 1");
    require(gaussians.sh_degree >= 0 && gaussians.sh_degree <= 3, "config: gaussians.sh_degree must lie in [0, 3]");

    require(render.width >= 1 && render.height >= 1, "config: render size must be positive");
    require(render.fov_y_deg > 0.0 && render.fov_y_deg < 180.0, "config: render.fov must lie in (0, 180)");
    require(render.distance >= 0.0, "config: render.distance must be non-negative");
    render.light_ranges.validate();
    require(render.light.position.allFinite() && render.light.color.allFinite() && render.light.ambient.allFinite(),
            "config: render.light must be finite");

    schedule.validate();
    require(optimize_width >= 1 && optimize_height >= 1, "config: optimize size must be positive");
    require(optimize_camera == "orbit" || optimize_camera == "render", "config: optimize.camera must be orbit or render");

    cloth.validate();
    cloth_settings.validate();
    hair_params.validate();

    require(animation.frames >= 1, "config: animation.frames must be at least 1");
    require(animation.frame_interval > 0.0, "config: animation.frame_interval must be positive");
    require(std::isfinite(animation.speed) && std::isfinite(animation.angle_deg) && animation.ramp_seconds > 0.0,
            "config: animation parameters must be finite with a positive ramp");
    if (animation.poses != "idle" && animation.poses != "translate" && animation.poses != "leg_raise")
        need_file(animation.poses, "animation.poses");
}

std::string PipelineConfig::asset_hash() const { return hex64(fnv1a64(asset_json(*this, true).dump())); }

LayerMask parse_layer_mask(const std::string& name) {
    if (name == "all") return kAllLayersMask;
    return layer_bit(parse_layer(name));
}

// ---------------------------------------------------------------------------
// Asset construction

namespace {

std::vector<Vec3> read_point_cloud(const fs::path& path) {
    if (path.extension() == ".obj") {
        std::vector<Vec3> pts;
        std::istringstream in(read_text(path));
        std::string line;
        while (std::getline(in, line)) {
            std::istringstream ls(line);
            std::string tag;
            ls >> tag;
            if (tag != "v") continue;
            std::string x, y, z;
            ls >> x >> y >> z;
            pts.emplace_back(detail::parse_double(x), detail::parse_double(y), detail::parse_double(z));
        }
        return pts;
    }
    std::vector<Vec3> pts;
    std::istringstream in(read_text(path));
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string x, y, z;
        if (!(ls >> x >> y >> z)) throw IoError("malformed point line in " + path.string() + ": " + line);
        pts.emplace_back(detail::parse_double(x), detail::parse_double(y), detail::parse_double(z));
    }
    return pts;
}

TriangleMesh garment_from_udf(const UdfGrid& udf, const CleanupOptions& cleanup) {
    TriangleMesh mesh = cleanup_mesh(extract_open_mesh(udf), cleanup);
    if (mesh.empty()) throw Error("extraction produced no surface");
    return mesh;
}

TriangleMesh build_garment(const PipelineConfig& c, const TriangleMesh& body) {
    const GarmentSource& g = c.garment;
    TriangleMesh mesh;
    if (g.source == "template") {
        mesh = garment_from_udf(udf_from_template(g.shape, g.resolution, g.padding_cells), g.cleanup);
    } else if (g.source == "points") {
        const std::vector<Vec3> pts = read_point_cloud(g.path);
        require(!pts.empty(), "point cloud " + g.path.string() + " is empty");
        Eigen::AlignedBox3d box;
        for (const Vec3& p : pts) box.extend(p);
        const GridSpec spec = GridSpec::covering(box, g.resolution, g.padding_cells);
        mesh = garment_from_udf(udf_from_points(pts, spec.bounds(), spec.dims), g.cleanup);
    } else {
        mesh = read_obj(g.path.string());
        require(!mesh.empty(), "garment mesh " + g.path.string() + " has no faces");
    }
    // Start the garment outside the canonical body so animation frame 0 is a no-op.
    const BodySdf sdf(body, c.cloth_settings.sdf_resolution);
    GarmentSimulation sim(mesh, c.cloth, c.cloth_settings);
    return sim.advance(body, sdf);
}

HairStrands build_hair(const PipelineConfig& c, const SkinnedBody& body, const TriangleMesh& canonical) {
    const HairSource& h = c.hair;
    if (h.source == "file") {
        HairStrands s = read_strands(h.path.string());
        std::vector<RootBinding> bindings = read_root_bindings(h.bindings_path.string());
        require(static_cast<int>(bindings.size()) == s.num_strands(),
                "root binding count does not match the strand count");
        for (const RootBinding& b : bindings)
            require(b.face >= 0 && static_cast<std::size_t>(b.face) < canonical.num_faces(),
                    "root binding face out of range");
        return HairStrands(s.num_strands(), s.num_segments(), s.points(), std::move(bindings));
    }
    require(!body.scalp_faces().empty(), "body has no scalp faces for procedural hair");
    return procedural_strand_gen(ScalpRegion{&canonical, body.scalp_faces()}, h.strands, h.segments, h.length, h.curl,
                                 split_seed(c.seed, "hair"));
}

// Strands round-trip through float32 on disk; keep the in-memory copy identical.
HairStrands to_float(const HairStrands& s) {
    std::vector<Vec3> pts = s.points();
    for (Vec3& p : pts) p = p.cast<float>().cast<double>();
    return s.with_points(std::move(pts));
}

}  // namespace

Bundle build_bundle(const PipelineConfig& config) {
    stage("config", [&] { config.validate(); });
    Bundle b;
    b.config = config;
    b.config_hash = stage("config", [&] { return config.asset_hash(); });
    b.body = stage("body", [&] {
        return config.body.source == "file" ? read_body(config.body.path.string())
                                            : make_capsule_humanoid(config.body.humanoid);
    });
    CanonicalPose& canon = b.assembly.canonical;
    stage("body", [&] {
        canon.pose = BodyPose::identity(b.body.num_joints());
        canon.body = lbs_skin(b.body, canon.pose);
    });
    if (config.garment.source != "none")
        canon.garment = stage("garment", [&] { return build_garment(config, canon.body); });
    if (config.hair.source != "none")
        canon.hair = stage("hair", [&] { return to_float(build_hair(config, b.body, canon.body)); });

    stage("gaussians", [&] {
        const int sh = config.gaussians.sh_degree;
        layer_of(b.assembly.gaussians, Layer::body) =
            init_mesh_gaussians(canon.body, config.gaussians.body, split_seed(config.seed, "gaussians/body"), sh);
        if (!canon.garment.empty())
            layer_of(b.assembly.gaussians, Layer::garment) = init_mesh_gaussians(
                canon.garment, config.gaussians.garment, split_seed(config.seed, "gaussians/garment"), sh);
        if (canon.hair.num_strands() > 0)
            layer_of(b.assembly.gaussians, Layer::hair) = init_strand_gaussians(canon.hair, sh);
        b.fields = FieldSet(split_seed(config.seed, "fields"), feature_dim(sh));
    });
    return b;
}

// ---------------------------------------------------------------------------
// Bundle I/O

void write_fields(const fs::path& dir, const FieldSet& fields) {
    fs::create_directories(dir / "fields");
    for (Layer layer : kAllLayers)
        save_field((dir / "fields" / (std::string(layer_name(layer)) + ".field")).string(), fields[layer]);
}

FieldSet read_fields(const fs::path& dir, int feature_dim) {
    std::vector<AppearanceField> f;
    for (Layer layer : kAllLayers) {
        f.push_back(load_field((dir / "fields" / (std::string(layer_name(layer)) + ".field")).string(), layer));
        if (f.back().feature_dim() != feature_dim)
            throw IoError("field for layer " + std::string(layer_name(layer)) + " has feature dimension " +
                          std::to_string(f.back().feature_dim()) + ", expected " + std::to_string(feature_dim));
    }
    return FieldSet(std::move(f[0]), std::move(f[1]), std::move(f[2]));
}

namespace {

LayerGaussians queried_layers(const Bundle& b, const FieldSet& fields) {
    LayerGaussians q = b.assembly.gaussians;
    query_all_layers(q, fields, b.assembly.canonical);
    return q;
}

std::vector<SplatRecord> layer_records(const LayerGaussians& queried, const FrameGeometry& geometry, Layer layer) {
    const auto& g = layer_of(queried, layer);
    const auto placed = place_gaussians(g, geometry.mesh_for(layer), geometry.strands_for(layer));
    return make_splat_records(g, placed);
}

}  // namespace

void write_bundle(const fs::path& dir, const Bundle& b) {
    stage("bundle", [&] {
        fs::create_directories(dir / "gaussians");
        const CanonicalPose& canon = b.assembly.canonical;
        write_text(dir / "config.json", b.config.to_json());
        write_body((dir / "body.json").string(), b.body);
        write_obj((dir / "body.obj").string(), canon.body);
        json manifest;
        manifest["format"] = kBundleFormat;
        manifest["version"] = kBundleVersion;
        manifest["config_hash"] = b.config_hash;
        manifest["seed"] = b.config.seed;
        manifest["sh_degree"] = b.config.gaussians.sh_degree;
        manifest["body"] = {{"skinned", "body.json"},
                            {"mesh", "body.obj"},
                            {"vertices", canon.body.num_vertices()},
                            {"faces", canon.body.num_faces()},
                            {"joints", b.body.num_joints()}};
        if (!canon.garment.empty()) {
            write_obj((dir / "garment.obj").string(), canon.garment);
            manifest["garment"] = {{"mesh", "garment.obj"},
                                   {"vertices", canon.garment.num_vertices()},
                                   {"faces", canon.garment.num_faces()},
                                   {"boundary_loops", count_boundary_loops(canon.garment)}};
        } else {
            manifest["garment"] = nullptr;
        }
        if (canon.hair.num_strands() > 0) {
            write_strands((dir / "hair.strands").string(), canon.hair);
            write_root_bindings((dir / "hair.roots").string(), canon.hair.bindings());
            manifest["hair"] = {{"strands", "hair.strands"},
                                {"roots", "hair.roots"},
                                {"num_strands", canon.hair.num_strands()},
                                {"num_segments", canon.hair.num_segments()}};
        } else {
            manifest["hair"] = nullptr;
        }
        write_fields(dir, b.fields);
        const LayerGaussians queried = queried_layers(b, b.fields);
        const FrameGeometry geometry = b.assembly.canonical_geometry();
        json layers = json::object();
        for (Layer layer : kAllLayers) {
            if (!b.assembly.has_layer(layer)) continue;
            const std::string name(layer_name(layer));
            write_gaussian_table((dir / "gaussians" / (name + ".table")).string(), layer_of(b.assembly.gaussians, layer));
            write_splat_ply((dir / "gaussians" / (name + ".ply")).string(), layer_records(queried, geometry, layer),
                            b.config.gaussians.sh_degree);
            layers[name] = {{"count", layer_of(b.assembly.gaussians, layer).size()},
                            {"ply", "gaussians/" + name + ".ply"},
                            {"table", "gaussians/" + name + ".table"},
                            {"field", "fields/" + name + ".field"}};
        }
        manifest["layers"] = layers;
        write_text(dir / "manifest.json", manifest.dump(2) + "\n");
    });
}

Bundle read_bundle(const fs::path& dir) {
    return stage("bundle", [&] {
        if (!fs::is_regular_file(dir / "manifest.json"))
            throw IoError("not a bundle directory (no manifest.json): " + dir.string());
        json manifest;
        try {
            manifest = json::parse(read_text(dir / "manifest.json"));
        } catch (const json::exception& e) {
            throw IoError("malformed manifest: " + std::string(e.what()));
        }
        try {
            if (manifest.at("format") != kBundleFormat || manifest.at("version") != kBundleVersion)
                throw IoError("unsupported bundle format in " + dir.string());
            Bundle b;
            b.config = PipelineConfig::parse(read_text(dir / "config.json"), dir);
            b.config_hash = manifest.at("config_hash").get<std::string>();
            b.body = read_body((dir / "body.json").string());
            CanonicalPose& canon = b.assembly.canonical;
            canon.pose = BodyPose::identity(b.body.num_joints());
            canon.body = lbs_skin(b.body, canon.pose);
            if (!manifest.at("garment").is_null()) canon.garment = read_obj((dir / "garment.obj").string());
            if (!manifest.at("hair").is_null()) {
                const HairStrands s = read_strands((dir / "hair.strands").string());
                canon.hair = HairStrands(s.num_strands(), s.num_segments(), s.points(),
                                         read_root_bindings((dir / "hair.roots").string()));
            }
            for (const auto& [name, entry] : manifest.at("layers").items()) {
                const Layer layer = parse_layer(name);
                auto gaussians = read_gaussian_table((dir / entry.at("table").get<std::string>()).string());
                if (gaussians.size() != entry.at("count").get<std::size_t>())
                    throw IoError("gaussian table for " + name + " does not match the manifest count");
                validate_bindings(gaussians, canon.mesh_for(layer), canon.strands_for(layer));
                layer_of(b.assembly.gaussians, layer) = std::move(gaussians);
            }
            b.fields = read_fields(dir, feature_dim(manifest.at("sh_degree").get<int>()));
            return b;
        } catch (const json::exception& e) {
            throw IoError("malformed manifest: " + std::string(e.what()));
        }
    });
}

PipelineConfig effective_config(const Bundle& bundle, const CommandOptions& options) {
    PipelineConfig c = bundle.config;
    if (options.config) {
        c = stage("config", [&] { return PipelineConfig::load(*options.config); });
        if (options.seed) c.seed = *options.seed;
        stage("config", [&] {
            c.validate();
            const std::string hash = c.asset_hash();
            if (hash != bundle.config_hash)
                throw InvalidArgument(options.config->string() + " (asset hash " + hash +
                                      ") does not match the bundle (asset hash " + bundle.config_hash +
                                      "); regenerate the bundle or pass the config it was built from");
        });
    } else if (options.seed) {
        c.seed = *options.seed;
    }
    return c;
}

// ---------------------------------------------------------------------------
// Commands

Bundle cmd_generate(const PipelineConfig& config, const fs::path& out) {
    const Bundle built = build_bundle(config);
    write_bundle(out, built);
    return read_bundle(out);
}

namespace {

Vec3 body_center(const Bundle& b) { return b.assembly.canonical.body.bounds().center(); }

struct Loaded {
    Bundle bundle;
    PipelineConfig config;
    FieldSet fields;
};

Loaded load(const fs::path& bundle_dir, const CommandOptions& options) {
    Bundle b = read_bundle(bundle_dir);
    PipelineConfig c = effective_config(b, options);
    FieldSet fields = b.fields;
    if (options.fields)
        fields = stage("fields", [&] { return read_fields(*options.fields, feature_dim(c.gaussians.sh_degree)); });
    return {std::move(b), std::move(c), std::move(fields)};
}

struct RenderContext {
    LayerGaussians queried;
    Camera camera;
    LightSample light;
    RenderOptions options;
    bool reference = false;
};

RenderContext make_context(const Bundle& b, const FieldSet& fields, const PipelineConfig& c,
                           const CommandOptions& options) {
    RenderContext ctx;
    ctx.queried = queried_layers(b, fields);
    ctx.camera = render_camera(b, c.render);
    ctx.light = render_light(b, c, options.fixed_light);
    ctx.options.background = c.render.background;
    ctx.options.layers = options.layers;
    ctx.reference = options.reference;
    return ctx;
}

Image render_with(const RenderContext& ctx, const FrameGeometry& geometry) {
    const SplatBatch batch = build_splats(ctx.queried, geometry, &ctx.light, ctx.options.layers);
    return ctx.reference ? render_reference(batch.splats, ctx.camera, ctx.options).color
                         : render(batch.splats, ctx.camera, ctx.options).color;
}

}  // namespace

Camera render_camera(const Bundle& b, const RenderSettings& r) {
    const TriangleMesh& body = b.assembly.canonical.body;
    const double distance = r.distance > 0.0 ? r.distance : default_camera_sampler(body, r.width, r.height).distance;
    return orbit_camera(body_center(b), distance, r.azimuth_deg, r.elevation_deg, r.fov_y_deg, r.width, r.height);
}

LightSample render_light(const Bundle& b, const PipelineConfig& c, bool fixed_light) {
    if (fixed_light) return c.render.light;
    Rng rng(split_seed(c.seed, "render/light"));
    return sample_light(c.render.light_ranges, body_center(b), rng);
}

Image render_geometry(const Bundle& b, const FieldSet& fields, const FrameGeometry& geometry, const PipelineConfig& c,
                      const CommandOptions& options) {
    return render_with(make_context(b, fields, c, options), geometry);
}

Image cmd_render(const fs::path& bundle_dir, const fs::path& out, const CommandOptions& options) {
    const Loaded l = load(bundle_dir, options);
    const Image img = stage("render", [&] {
        return render_geometry(l.bundle, l.fields, l.bundle.assembly.canonical_geometry(), l.config, options);
    });
    stage("output", [&] {
        fs::create_directories(out);
        write_png((out / "render.png").string(), img);
    });
    return img;
}

PoseSequence make_pose_sequence(const SkinnedBody& body, const AnimationSettings& a, const fs::path& base_dir) {
    if (a.poses != "idle" && a.poses != "translate" && a.poses != "leg_raise") {
        PoseSequence seq = read_pose_sequence(resolve(base_dir, a.poses).string());
        seq.validate();
        for (const BodyPose& p : seq.frames)
            require(p.rotations.size() == body.num_joints(), "pose sequence joint count does not match the body");
        return seq;
    }
    require(a.frames >= 1, "animation needs at least one frame");
    PoseSequence seq;
    seq.frame_interval = a.frame_interval;
    const int thigh = a.poses == "leg_raise" ? find_joint(body, "l_thigh") : -1;
    for (int f = 0; f < a.frames; ++f) {
        const double t = f * a.frame_interval;
        BodyPose pose = BodyPose::identity(body.num_joints());
        if (a.poses == "translate") pose.root_translation = Vec3(a.speed * t, 0, 0);
        if (thigh >= 0) {
            const double s = std::min(1.0, t / a.ramp_seconds);
            const double smooth = s * s * (3.0 - 2.0 * s);
            // Negative rotation about +x swings the foot towards -y, the front.
            pose.rotations[static_cast<std::size_t>(thigh)] =
                Quat(Eigen::AngleAxisd(-a.angle_deg * M_PI / 180.0 * smooth, Vec3::UnitX()));
        }
        seq.frames.push_back(std::move(pose));
    }
    return seq;
}

namespace {

std::string frame_name(int f, const char* ext) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "frame_%04d.%s", f, ext);
    return buf;
}

double deepest(std::span<const Vec3> points, const BodySdf& sdf) {
    double worst = 0.0;
    for (const Vec3& p : points) worst = std::max(worst, sdf.penetration(p));
    return worst;
}

}  // namespace

std::vector<FrameStats> cmd_animate(const fs::path& bundle_dir, const fs::path& out, const CommandOptions& options,
                                    const std::optional<PoseSequence>& poses) {
    const Loaded l = load(bundle_dir, options);
    const Bundle& b = l.bundle;
    const CanonicalPose& canon = b.assembly.canonical;
    const PoseSequence seq = stage("poses", [&] {
        PoseSequence s = poses ? *poses : make_pose_sequence(b.body, l.config.animation);
        s.validate();
        for (const BodyPose& p : s.frames)
            require(p.rotations.size() == b.body.num_joints(), "pose sequence joint count does not match the body");
        return s;
    });
    const RenderContext ctx = stage("render", [&] { return make_context(b, l.fields, l.config, options); });

    ClothSettings cloth = l.config.cloth_settings;
    HairParams hair_params = l.config.hair_params;
    cloth.dt = hair_params.dt = seq.frame_interval;
    const bool has_garment = !canon.garment.empty();
    const bool has_hair = canon.hair.num_strands() > 0;
    std::optional<GarmentSimulation> garment_sim;
    std::optional<HairSimulation> hair_sim;
    if (has_garment) {
        std::vector<ClothAttachment> attachments;
        if (l.config.garment.attach == "top")
            attachments = attach_to_body(canon.garment, top_boundary_vertices(canon.garment, l.config.garment.attach_band),
                                         canon.body);
        garment_sim.emplace(canon.garment, l.config.cloth, cloth, std::move(attachments));
    }
    if (has_hair) hair_sim.emplace(canon.hair, canon.body, hair_params);

    stage("output", [&] {
        for (const char* sub : {"frames", "body", "garment"}) fs::create_directories(out / sub);
    });
    std::ofstream hair_seq, hair_index, stats_csv;
    stage("output", [&] {
        stats_csv.open(out / "stats.csv");
        if (!stats_csv) throw IoError("cannot write " + (out / "stats.csv").string());
        stats_csv << "frame,body_x,body_y,body_z,splat_x,splat_y,splat_z,garment_penetration,hair_penetration\n";
        if (has_hair) {
            hair_seq.open(out / "hair.seq", std::ios::binary);
            hair_index.open(out / "hair.seq.index");
            if (!hair_seq || !hair_index) throw IoError("cannot write the hair sequence in " + out.string());
            hair_index << "frame offset bytes\n";
        }
    });

    std::vector<FrameStats> stats;
    for (int f = 0; f < static_cast<int>(seq.frames.size()); ++f) {
        const std::string tag = "frame " + std::to_string(f);
        const TriangleMesh body = stage("skin", [&] { return lbs_skin(b.body, seq.frames[static_cast<std::size_t>(f)]); });
        const BodySdf sdf(body, cloth.sdf_resolution);
        std::unique_ptr<BodySdf> hair_sdf;
        if (has_hair && hair_params.sdf_resolution != cloth.sdf_resolution)
            hair_sdf = std::make_unique<BodySdf>(body, hair_params.sdf_resolution);
        TriangleMesh garment;
        HairStrands hair;
        try {
            if (has_garment) garment = garment_sim->advance(body, sdf);
            if (has_hair) hair = hair_sim->advance(body, hair_sdf ? *hair_sdf : sdf, garment);
        } catch (const SimulationError& e) {
            throw PipelineError("simulate", tag + ": " + e.what(), f);
        } catch (const std::exception& e) {
            throw PipelineError("simulate", tag + ": " + e.what(), f);
        }
        FrameGeometry geometry{&body, has_garment ? &garment : nullptr, has_hair ? &hair : nullptr};
        const SplatBatch batch = stage("render", [&] { return build_splats(ctx.queried, geometry, &ctx.light, ctx.options.layers); });
        const Image img = stage("render", [&] {
            return ctx.reference ? render_reference(batch.splats, ctx.camera, ctx.options).color
                                 : render(batch.splats, ctx.camera, ctx.options).color;
        });
        FrameStats st;
        st.frame = f;
        st.body_centroid = body.centroid();
        st.splat_centroid = splat_centroid(batch.splats);
        if (has_garment) st.garment_penetration = deepest(garment.vertices(), sdf);
        if (has_hair) st.hair_penetration = deepest(hair.points(), sdf);
        stage("output", [&] {
            write_png((out / "frames" / frame_name(f, "png")).string(), img);
            write_obj((out / "body" / frame_name(f, "obj")).string(), body);
            if (has_garment) write_obj((out / "garment" / frame_name(f, "obj")).string(), garment);
            if (has_hair) {
                const auto offset = static_cast<long long>(hair_seq.tellp());
                write_strands(hair_seq, hair);
                hair_seq.flush();
                hair_index << f << ' ' << offset << ' ' << static_cast<long long>(hair_seq.tellp()) - offset << '\n';
                hair_index.flush();
            }
            stats_csv << f;
            for (const Vec3* v : {&st.body_centroid, &st.splat_centroid})
                for (int k = 0; k < 3; ++k) stats_csv << ',' << detail::format_double((*v)[k]);
            stats_csv << ',' << detail::format_double(st.garment_penetration) << ','
                      << detail::format_double(st.hair_penetration) << '\n';
            stats_csv.flush();
            if (!stats_csv || (has_hair && (!hair_seq || !hair_index)))
                throw IoError("failed writing frame outputs in " + out.string());
        });
        stats.push_back(st);
    }
    return stats;
}

namespace {

struct Checkpoint {
    int iteration = 0;
    std::string provider;
    std::uint64_t seed = 0;
    std::string config_hash;
};

void write_checkpoint(const fs::path& path, const Checkpoint& c) {
    const json j = {{"iteration", c.iteration}, {"provider", c.provider}, {"seed", c.seed}, {"config_hash", c.config_hash}};
    write_text(path, j.dump(2) + "\n");
}

Checkpoint read_checkpoint(const fs::path& path) {
    try {
        const json j = json::parse(read_text(path));
        return {j.at("iteration").get<int>(), j.at("provider").get<std::string>(), j.at("seed").get<std::uint64_t>(),
                j.at("config_hash").get<std::string>()};
    } catch (const json::exception& e) {
        throw IoError("malformed checkpoint " + path.string() + ": " + e.what());
    }
}

// Data rows of an existing loss log with iteration < before.
std::string loss_rows_before(const fs::path& path, int before) {
    if (!fs::is_regular_file(path)) return {};
    std::istringstream in(read_text(path));
    std::string line, rows;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (std::stoi(line.substr(0, line.find(','))) < before) rows += line + "\n";
    }
    return rows;
}

}  // namespace

std::vector<LossRecord> cmd_optimize(const fs::path& bundle_dir, const fs::path& out, const OptimizeOptions& optimize,
                                     const CommandOptions& options) {
    Loaded l = load(bundle_dir, options);
    const PipelineConfig& c = l.config;
    const fs::path checkpoint_path = out / "checkpoint.json";
    int first = 0;
    if (optimize.resume) {
        const Checkpoint ck = stage("resume", [&] {
            if (!fs::is_regular_file(checkpoint_path))
                throw IoError("no checkpoint to resume from in " + out.string());
            Checkpoint k = read_checkpoint(checkpoint_path);
            if (k.provider != optimize.provider)
                throw InvalidArgument("checkpoint was trained with provider '" + k.provider + "', not '" +
                                      optimize.provider + "'");
            if (k.seed != c.seed) throw InvalidArgument("checkpoint was trained with a different seed");
            if (k.config_hash != l.bundle.config_hash) throw InvalidArgument("checkpoint belongs to a different bundle");
            return k;
        });
        first = ck.iteration;
        l.fields = stage("resume", [&] { return read_fields(out, feature_dim(c.gaussians.sh_degree)); });
    }
    const int until = optimize.until < 0 ? c.schedule.total_iterations() : optimize.until;
    const std::vector<LossRecord> log = stage("optimize", [&] {
        require(until >= first && until <= c.schedule.total_iterations(),
                "--until must lie between the resume iteration and the schedule length");
        auto provider = parse_provider(optimize.provider, split_seed(c.seed, "provider"));
        CameraSampler cameras =
            default_camera_sampler(l.bundle.assembly.canonical.body, c.optimize_width, c.optimize_height);
        if (c.optimize_camera == "render") {
            RenderSettings r = c.render;
            r.width = c.optimize_width;
            r.height = c.optimize_height;
            cameras.fixed = render_camera(l.bundle, r);
        }
        return run_schedule(l.bundle.assembly, l.fields, c.schedule, *provider, cameras, split_seed(c.seed, "optimize"),
                            first, until);
    });
    stage("output", [&] {
        fs::create_directories(out);
        write_fields(out, l.fields);
        std::ostringstream csv;
        write_loss_csv(csv, log);
        std::string text = csv.str();
        const std::size_t header_end = text.find('\n') + 1;
        const std::string previous = first > 0 ? loss_rows_before(out / "loss.csv", first) : std::string();
        write_text(out / "loss.csv", text.substr(0, header_end) + previous + text.substr(header_end));
        write_checkpoint(checkpoint_path, {until, optimize.provider, c.seed, l.bundle.config_hash});
    });
    return log;
}

std::vector<fs::path> cmd_export(const fs::path& bundle_dir, const fs::path& out, const std::string& format,
                                 const CommandOptions& options) {
    if (format != "ply" && format != "obj" && format != "strands" && format != "all")
        throw PipelineError("export", "unknown format '" + format + "' (expected ply, obj, strands or all)");
    const Loaded l = load(bundle_dir, options);
    const Bundle& b = l.bundle;
    const CanonicalPose& canon = b.assembly.canonical;
    std::vector<fs::path> written;
    stage("export", [&] {
        fs::create_directories(out);
        const bool all = format == "all";
        const auto wanted = [&](Layer layer) { return (options.layers & layer_bit(layer)) != 0; };
        if (all || format == "ply") {
            const LayerGaussians queried = queried_layers(b, l.fields);
            const FrameGeometry geometry = b.assembly.canonical_geometry();
            for (Layer layer : kAllLayers) {
                if (!wanted(layer) || !b.assembly.has_layer(layer)) continue;
                const std::string name(layer_name(layer));
                const fs::path ply = out / (name + ".ply"), table = out / (name + ".table");
                write_splat_ply(ply.string(), layer_records(queried, geometry, layer), b.config.gaussians.sh_degree);
                write_gaussian_table(table.string(), layer_of(queried, layer));
                written.push_back(ply);
                written.push_back(table);
            }
        }
        if (all || format == "obj") {
            if (wanted(Layer::body)) {
                write_obj((out / "body.obj").string(), canon.body);
                written.push_back(out / "body.obj");
            }
            if (wanted(Layer::garment) && !canon.garment.empty()) {
                write_obj((out / "garment.obj").string(), canon.garment);
                written.push_back(out / "garment.obj");
            }
        }
        if ((all || format == "strands") && wanted(Layer::hair) && canon.hair.num_strands() > 0) {
            write_strands((out / "hair.strands").string(), canon.hair);
            write_root_bindings((out / "hair.roots").string(), canon.hair.bindings());
            written.push_back(out / "hair.strands");
            written.push_back(out / "hair.roots");
        }
        if (written.empty())
            throw InvalidArgument("nothing to export: format '" + format + "' has no assets for the selected layers");
    });
    return written;
}

}  // namespace avatar
