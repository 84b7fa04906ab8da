#include "avatar/gaussian/io.hpp"

#include "text_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace avatar {

namespace {

int sh_degree_for(int features) {
    for (int d = 0; d <= 3; ++d)
        if (feature_dim(d) == features) return d;
    throw InvalidArgument("feature count " + std::to_string(features) + " is not a spherical-harmonic size");
}

std::vector<std::string> property_names(int sh_degree) {
    std::vector<std::string> names = {"x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2"};
    const int rest = feature_dim(sh_degree) - 3;
    for (int i = 0; i < rest; ++i) names.push_back("f_rest_" + std::to_string(i));
    names.push_back("opacity");
    for (int i = 0; i < 3; ++i) names.push_back("scale_" + std::to_string(i));
    for (int i = 0; i < 4; ++i) names.push_back("rot_" + std::to_string(i));
    return names;
}

double logit(double o) {
    const double p = std::clamp(o, 1e-7, 1.0 - 1e-7);
    return std::log(p / (1.0 - p));
}

}  // namespace

std::vector<SplatRecord> make_splat_records(std::span<const GaussianPrimitive> gaussians,
                                            std::span<const PlacedGaussian> placed) {
    require(gaussians.size() == placed.size(), "placed gaussians must align with primitives");
    std::vector<SplatRecord> out(gaussians.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i].mean = placed[i].pose.mean;
        out[i].rotation = placed[i].pose.rotation;
        out[i].scale = placed[i].pose.scale;
        out[i].features = gaussians[i].features;
        out[i].opacity = gaussians[i].opacity;
    }
    return out;
}

std::string splat_ply_header(std::size_t count, int sh_degree) {
    std::ostringstream h;
    h << "ply\nformat binary_little_endian 1.0\nelement vertex " << count << '\n';
    for (const auto& name : property_names(sh_degree)) h << "property float " << name << '\n';
    h << "end_header\n";
    return h.str();
}

void write_splat_ply(std::ostream& out, std::span<const SplatRecord> splats, int sh_degree) {
    const int dim = feature_dim(sh_degree);
    const int coeffs = dim / 3;
    out << splat_ply_header(splats.size(), sh_degree);
    for (const auto& s : splats) {
        if (s.features.size() != dim) throw InvalidArgument("splat feature count does not match sh degree");
        auto put = [&](double v) { detail::write_le<float>(out, static_cast<float>(v)); };
        put(s.mean.x());
        put(s.mean.y());
        put(s.mean.z());
        for (int c = 0; c < 3; ++c) put((s.features[c] - 0.5) / kSH0);
        // Channel-major rest coefficients, as written by common splat trainers.
        for (int c = 0; c < 3; ++c)
            for (int k = 1; k < coeffs; ++k) put(s.features[3 * k + c]);
        put(logit(s.opacity));
        for (int a = 0; a < 3; ++a) put(std::log(s.scale[a]));
        const Quat& q = s.rotation;
        put(q.w());
        put(q.x());
        put(q.y());
        put(q.z());
    }
    if (!out) throw IoError("failed writing splat ply");
}

void write_splat_ply(const std::string& path, std::span<const SplatRecord> splats, int sh_degree) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    write_splat_ply(out, splats, sh_degree);
}

std::vector<SplatRecord> read_splat_ply(std::istream& in, int* sh_degree_out) {
    std::string line;
    if (!std::getline(in, line) || line != "ply") throw IoError("not a ply file");
    std::size_t count = 0;
    std::vector<std::string> names;
    bool little = false;
    while (std::getline(in, line)) {
        if (line == "end_header") break;
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "format") {
            std::string fmt;
            ls >> fmt;
            little = fmt == "binary_little_endian";
        } else if (tag == "element") {
            std::string what;
            ls >> what >> count;
            if (what != "vertex") throw IoError("unexpected ply element '" + what + "'");
        } else if (tag == "property") {
            std::string type, name;
            ls >> type >> name;
            if (type != "float") throw IoError("only float ply properties are supported");
            names.push_back(name);
        }
    }
    if (!little) throw IoError("only binary_little_endian ply files are supported");
    std::map<std::string, std::size_t> slot;
    for (std::size_t i = 0; i < names.size(); ++i) slot[names[i]] = i;
    int rest = 0;
    while (slot.count("f_rest_" + std::to_string(rest))) ++rest;
    const int sh_degree = sh_degree_for(rest + 3);
    for (const auto& required : property_names(sh_degree))
        if (!slot.count(required)) throw IoError("ply is missing property " + required);
    if (sh_degree_out) *sh_degree_out = sh_degree;

    const int coeffs = feature_dim(sh_degree) / 3;
    std::vector<SplatRecord> out(count);
    std::vector<float> row(names.size());
    for (auto& s : out) {
        for (auto& v : row) v = detail::read_le<float>(in);
        auto get = [&](const std::string& n) { return static_cast<double>(row[slot.at(n)]); };
        s.mean = Vec3(get("x"), get("y"), get("z"));
        s.features.resize(feature_dim(sh_degree));
        for (int c = 0; c < 3; ++c) s.features[c] = 0.5 + kSH0 * get("f_dc_" + std::to_string(c));
        for (int c = 0; c < 3; ++c)
            for (int k = 1; k < coeffs; ++k)
                s.features[3 * k + c] = get("f_rest_" + std::to_string(c * (coeffs - 1) + (k - 1)));
        s.opacity = 1.0 / (1.0 + std::exp(-get("opacity")));
        s.scale = Vec3(std::exp(get("scale_0")), std::exp(get("scale_1")), std::exp(get("scale_2")));
        s.rotation = Quat(get("rot_0"), get("rot_1"), get("rot_2"), get("rot_3"));
    }
    return out;
}

std::vector<SplatRecord> read_splat_ply(const std::string& path, int* sh_degree) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    return read_splat_ply(in, sh_degree);
}

void write_gaussian_table(std::ostream& out, std::span<const GaussianPrimitive> gaussians) {
    using detail::format_double;
    out << "gaussians " << gaussians.size() << '\n';
    for (const auto& g : gaussians) {
        if (const auto* fb = std::get_if<FaceBinding>(&g.binding)) {
            out << "face " << fb->face;
        } else {
            const auto& sb = std::get<SegmentBinding>(g.binding);
            out << "segment " << sb.strand << ' ' << sb.segment;
        }
        for (int c = 0; c < 3; ++c) out << ' ' << format_double(g.position[c]);
        out << ' ' << format_double(g.rotation.w()) << ' ' << format_double(g.rotation.x()) << ' '
            << format_double(g.rotation.y()) << ' ' << format_double(g.rotation.z());
        for (int c = 0; c < 3; ++c) out << ' ' << format_double(g.scale[c]);
        out << ' ' << format_double(g.opacity) << ' ' << g.features.size();
        for (Eigen::Index c = 0; c < g.features.size(); ++c) out << ' ' << format_double(g.features[c]);
        out << '\n';
    }
    if (!out) throw IoError("failed writing gaussian table");
}

void write_gaussian_table(const std::string& path, std::span<const GaussianPrimitive> gaussians) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    write_gaussian_table(out, gaussians);
}

std::vector<GaussianPrimitive> read_gaussian_table(std::istream& in) {
    std::string tag;
    std::size_t count = 0;
    if (!(in >> tag >> count) || tag != "gaussians") throw IoError("not a gaussian table");
    std::vector<GaussianPrimitive> out(count);
    auto next = [&]() {
        std::string tok;
        if (!(in >> tok)) throw IoError("gaussian table truncated");
        return tok;
    };
    auto number = [&]() { return detail::parse_double(next()); };
    auto integer = [&]() {
        const std::string tok = next();
        try {
            return std::stoi(tok);
        } catch (const std::exception&) {
            throw IoError("malformed integer '" + tok + "' in gaussian table");
        }
    };
    for (auto& g : out) {
        const std::string kind = next();
        if (kind == "face") {
            g.binding = FaceBinding{integer()};
        } else if (kind == "segment") {
            const int s = integer();
            g.binding = SegmentBinding{s, integer()};
        } else {
            throw IoError("unknown binding kind '" + kind + "'");
        }
        for (int c = 0; c < 3; ++c) g.position[c] = number();
        const double w = number(), x = number(), y = number(), z = number();
        g.rotation = Quat(w, x, y, z);
        for (int c = 0; c < 3; ++c) g.scale[c] = number();
        g.opacity = number();
        const int dim = integer();
        if (dim < 3) throw IoError("gaussian table feature count too small");
        g.features.resize(dim);
        for (int c = 0; c < dim; ++c) g.features[c] = number();
    }
    return out;
}

std::vector<GaussianPrimitive> read_gaussian_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    return read_gaussian_table(in);
}

}  // namespace avatar
