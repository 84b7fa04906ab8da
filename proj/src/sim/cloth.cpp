#include "avatar/sim/cloth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace avatar {

void ClothMaterial::validate() const {
    require(stretch_compliance >= 0.0 && bend_compliance >= 0.0, "cloth compliances must be non-negative");
    require(density > 0.0, "cloth density must be positive");
    require(friction >= 0.0, "cloth friction must be non-negative");
    require(damping >= 0.0, "cloth damping must be non-negative");
}

void ClothSettings::validate() const {
    require(dt > 0.0, "cloth time step must be positive");
    require(substeps >= 1 && iterations >= 1, "cloth substeps and iterations must be at least 1");
    require(collision_margin >= 0.0, "collision margin must be non-negative");
    require(gravity.allFinite(), "gravity must be finite");
}

double dihedral_angle(const Vec3& o0, const Vec3& o1, const Vec3& e0, const Vec3& e1, std::array<Vec3, 4>* gradient) {
    const Vec3 e = e1 - e0;
    const Vec3 n1 = (o0 - e0).cross(o0 - e1);
    const Vec3 n2 = (o1 - e1).cross(o1 - e0);
    const double len = e.norm();
    const double q1 = n1.squaredNorm(), q2 = n2.squaredNorm();
    if (len < 1e-12 || q1 < 1e-24 || q2 < 1e-24) {
        if (gradient) gradient->fill(Vec3::Zero());
        return 0.0;
    }
    const Vec3 u1 = n1.normalized(), u2 = n2.normalized();
    const double theta = std::atan2(u1.cross(u2).dot(e / len), u1.dot(u2));
    if (gradient) {
        const Vec3 a = n1 / q1, b = n2 / q2;
        (*gradient)[0] = -len * a;
        (*gradient)[1] = -len * b;
        (*gradient)[2] = -((o0 - e1).dot(e) / len * a + (o1 - e1).dot(e) / len * b);
        (*gradient)[3] = (o0 - e0).dot(e) / len * a + (o1 - e0).dot(e) / len * b;
    }
    return theta;
}

ClothTopology ClothTopology::from_mesh(const TriangleMesh& mesh, double density) {
    require(density > 0.0, "cloth density must be positive");
    ClothTopology t;
    t.rest_positions = mesh.vertices();
    std::vector<double> mass(mesh.num_vertices(), 0.0);
    for (int f = 0; f < static_cast<int>(mesh.num_faces()); ++f)
        for (int v : mesh.face(f)) mass[static_cast<std::size_t>(v)] += density * mesh.face_area(f) / 3.0;
    t.inverse_mass.resize(mass.size());
    for (std::size_t i = 0; i < mass.size(); ++i) t.inverse_mass[i] = mass[i] > 0.0 ? 1.0 / mass[i] : 0.0;
    for (const auto& e : mesh.edges())
        t.edges.push_back({e[0], e[1], (mesh.vertex(e[0]) - mesh.vertex(e[1])).norm()});

    // Directed edge (a -> b) to the face and its opposite vertex.
    std::map<std::pair<int, int>, int> opposite;
    for (const Face& f : mesh.faces())
        for (int c = 0; c < 3; ++c) opposite[{f[c], f[(c + 1) % 3]}] = f[(c + 2) % 3];
    for (const auto& [key, o0] : opposite) {
        const auto [a, b] = key;
        if (a > b) continue;
        const auto it = opposite.find({b, a});
        if (it == opposite.end()) continue;
        BendConstraint c{o0, it->second, a, b, 0.0};
        c.rest = dihedral_angle(mesh.vertex(c.o0), mesh.vertex(c.o1), mesh.vertex(c.e0), mesh.vertex(c.e1));
        t.bends.push_back(c);
    }
    return t;
}

std::vector<std::vector<int>> color_constraints(std::size_t num_vertices, std::span<const std::array<int, 4>> vertices) {
    std::vector<std::vector<int>> vertex_colors(num_vertices);
    std::vector<std::vector<int>> colors;
    std::vector<char> used;
    for (std::size_t c = 0; c < vertices.size(); ++c) {
        used.assign(colors.size() + 1, 0);
        for (int v : vertices[c])
            if (v >= 0)
                for (int col : vertex_colors[static_cast<std::size_t>(v)]) used[static_cast<std::size_t>(col)] = 1;
        const int color = static_cast<int>(std::find(used.begin(), used.end(), 0) - used.begin());
        if (color == static_cast<int>(colors.size())) colors.emplace_back();
        colors[static_cast<std::size_t>(color)].push_back(static_cast<int>(c));
        for (int v : vertices[c])
            if (v >= 0) vertex_colors[static_cast<std::size_t>(v)].push_back(color);
    }
    return colors;
}

namespace {

// Constraints of one color touch disjoint vertices, so any execution order gives the same result.
template <typename F>
void for_color(const std::vector<int>& items, F&& body) {
    constexpr std::size_t kParallelThreshold = 2048;
    if (items.size() < kParallelThreshold) {
        for (int i : items) body(i);
        return;
    }
    parallel_for(items.size(), [&](std::size_t k) { body(items[k]); });
}

double wrap_angle(double a) {
    while (a > M_PI) a -= 2.0 * M_PI;
    while (a < -M_PI) a += 2.0 * M_PI;
    return a;
}

}  // namespace

ClothSolver::ClothSolver(ClothTopology topology, const ClothMaterial& material, const ClothSettings& settings)
    : topo_(std::move(topology)), material_(material), settings_(settings) {
    material_.validate();
    settings_.validate();
    require(topo_.inverse_mass.size() == topo_.rest_positions.size(), "cloth masses must match the vertex count");
    for (const auto& e : topo_.edges) require(e.rest > 0.0, "cloth rest lengths must be positive");
    x_ = topo_.rest_positions;
    v_.assign(x_.size(), Vec3::Zero());
    std::vector<std::array<int, 4>> ev, bv;
    for (const auto& e : topo_.edges) ev.push_back({e.a, e.b, -1, -1});
    for (const auto& b : topo_.bends) bv.push_back({b.o0, b.o1, b.e0, b.e1});
    edge_colors_ = color_constraints(x_.size(), ev);
    bend_colors_ = color_constraints(x_.size(), bv);
}

void ClothSolver::set_positions(std::vector<Vec3> positions) {
    require(positions.size() == x_.size(), "cloth position count mismatch");
    x_ = std::move(positions);
}

void ClothSolver::set_velocities(std::vector<Vec3> velocities) {
    require(velocities.size() == v_.size(), "cloth velocity count mismatch");
    v_ = std::move(velocities);
}

void ClothSolver::project_distance(const DistanceConstraint& c, double& lambda, double alpha) {
    const double wa = topo_.inverse_mass[static_cast<std::size_t>(c.a)];
    const double wb = topo_.inverse_mass[static_cast<std::size_t>(c.b)];
    const double wsum = wa + wb + alpha;
    if (wsum <= 0.0) return;
    Vec3& pa = x_[static_cast<std::size_t>(c.a)];
    Vec3& pb = x_[static_cast<std::size_t>(c.b)];
    const Vec3 d = pa - pb;
    const double len = d.norm();
    if (len < 1e-12) return;
    const double constraint = len - c.rest;
    const double dl = (-constraint - alpha * lambda) / wsum;
    lambda += dl;
    const Vec3 n = d / len;
    pa += wa * dl * n;
    pb -= wb * dl * n;
}

void ClothSolver::project_bend(const BendConstraint& c, double& lambda, double alpha) {
    const std::array<int, 4> ids = {c.o0, c.o1, c.e0, c.e1};
    std::array<Vec3, 4> grad;
    const double theta = dihedral_angle(x_[static_cast<std::size_t>(c.o0)], x_[static_cast<std::size_t>(c.o1)],
                                        x_[static_cast<std::size_t>(c.e0)], x_[static_cast<std::size_t>(c.e1)], &grad);
    double denom = alpha;
    for (int k = 0; k < 4; ++k) denom += topo_.inverse_mass[static_cast<std::size_t>(ids[k])] * grad[k].squaredNorm();
    if (denom < 1e-12) return;
    const double constraint = wrap_angle(theta - c.rest);
    const double dl = (-constraint - alpha * lambda) / denom;
    lambda += dl;
    for (int k = 0; k < 4; ++k)
        x_[static_cast<std::size_t>(ids[k])] += topo_.inverse_mass[static_cast<std::size_t>(ids[k])] * dl * grad[k];
}

void ClothSolver::collide(const BodySdf& body) {
    const double margin = settings_.collision_margin;
    for (std::size_t i = 0; i < x_.size(); ++i) {
        if (topo_.inverse_mass[i] == 0.0) continue;
        const SignedDistance sd = body.query(x_[i]);
        if (sd.distance >= margin || sd.normal.squaredNorm() == 0.0) continue;
        const double depth = margin - sd.distance;
        x_[i] += depth * sd.normal;
        const Vec3 dx = x_[i] - prev_[i];
        const Vec3 tangential = dx - dx.dot(sd.normal) * sd.normal;
        const double t = tangential.norm();
        const double limit = material_.friction * depth;
        if (t <= limit)
            x_[i] -= tangential;
        else
            x_[i] -= tangential * (limit / t);
    }
}

void ClothSolver::substep(const BodySdf* body) {
    const double h = settings_.dt / settings_.substeps;
    prev_ = x_;
    const double keep = std::max(0.0, 1.0 - material_.damping * h);
    for (std::size_t i = 0; i < x_.size(); ++i) {
        if (topo_.inverse_mass[i] == 0.0) continue;
        // Exact for constant acceleration; the half-step velocity term is added back below.
        v_[i] *= keep;
        x_[i] += h * v_[i] + 0.5 * h * h * settings_.gravity;
    }
    std::vector<double> edge_lambda(topo_.edges.size(), 0.0), bend_lambda(topo_.bends.size(), 0.0);
    const double alpha_stretch = material_.stretch_compliance / (h * h);
    const double alpha_bend = material_.bend_compliance / (h * h);
    for (int it = 0; it < settings_.iterations; ++it) {
        for (const auto& color : edge_colors_)
            for_color(color, [&](int c) {
                project_distance(topo_.edges[static_cast<std::size_t>(c)], edge_lambda[static_cast<std::size_t>(c)],
                                 alpha_stretch);
            });
        for (const auto& color : bend_colors_)
            for_color(color, [&](int c) {
                project_bend(topo_.bends[static_cast<std::size_t>(c)], bend_lambda[static_cast<std::size_t>(c)],
                             alpha_bend);
            });
    }
    if (body) collide(*body);
    for (std::size_t i = 0; i < x_.size(); ++i)
        if (topo_.inverse_mass[i] != 0.0) v_[i] = (x_[i] - prev_[i]) / h + 0.5 * h * settings_.gravity;
}

void ClothSolver::place_kinematic(std::span<const int> vertices, std::span<const Vec3> positions) {
    require(vertices.size() == positions.size(), "kinematic vertex and position counts differ");
    for (std::size_t k = 0; k < vertices.size(); ++k) {
        const auto i = static_cast<std::size_t>(vertices[k]);
        require(i < x_.size() && topo_.inverse_mass[i] == 0.0, "only zero-mass cloth vertices can be placed");
        x_[i] = positions[k];
    }
}

void ClothSolver::step(const BodySdf* body) {
    for (int s = 0; s < settings_.substeps; ++s) substep(body);
}

void ClothSolver::resolve_penetrations(const BodySdf& body) {
    for (std::size_t i = 0; i < x_.size(); ++i) {
        const SignedDistance sd = body.query(x_[i]);
        if (sd.distance < 0.0 && sd.normal.squaredNorm() > 0.0)
            x_[i] += (settings_.collision_margin - sd.distance) * sd.normal;
    }
}

double ClothSolver::max_edge_strain() const {
    double worst = 0.0;
    for (const auto& e : topo_.edges)
        worst = std::max(worst, std::abs((x_[static_cast<std::size_t>(e.a)] - x_[static_cast<std::size_t>(e.b)]).norm() /
                                             e.rest -
                                         1.0));
    return worst;
}

namespace {

Mat3 face_basis(const TriangleMesh& m, int f) {
    const Face& t = m.face(f);
    return triangle_basis(m.vertex(t[0]), m.vertex(t[1]), m.vertex(t[2]));
}

ClothTopology attached_topology(const TriangleMesh& g0, double density, std::span<const ClothAttachment> attachments) {
    ClothTopology t = ClothTopology::from_mesh(g0, density);
    for (const ClothAttachment& a : attachments) {
        require(a.vertex >= 0 && static_cast<std::size_t>(a.vertex) < g0.num_vertices(),
                "attachment vertex out of range");
        t.inverse_mass[static_cast<std::size_t>(a.vertex)] = 0.0;
    }
    return t;
}

}  // namespace

std::vector<ClothAttachment> attach_to_body(const TriangleMesh& garment, std::span<const int> vertices,
                                            const TriangleMesh& body) {
    require(!body.empty(), "garment attachment needs a body mesh");
    const MeshProximity proximity(body, 0.02);
    std::vector<ClothAttachment> out;
    out.reserve(vertices.size());
    for (int v : vertices) {
        require(v >= 0 && static_cast<std::size_t>(v) < garment.num_vertices(), "attachment vertex out of range");
        const Vec3& p = garment.vertex(v);
        const MeshHit hit = proximity.closest_brute_force(p);
        out.push_back({v, hit.face, face_basis(body, hit.face).transpose() * (p - body.face_centroid(hit.face))});
    }
    return out;
}

Vec3 attachment_position(const ClothAttachment& a, const TriangleMesh& body) {
    require(a.face >= 0 && static_cast<std::size_t>(a.face) < body.num_faces(), "attachment face out of range");
    return body.face_centroid(a.face) + face_basis(body, a.face) * a.local;
}

std::vector<int> top_boundary_vertices(const TriangleMesh& garment, double band) {
    require(band >= 0.0, "attachment band must be non-negative");
    std::map<std::pair<int, int>, int> uses;
    for (const Face& f : garment.faces())
        for (int c = 0; c < 3; ++c) ++uses[std::minmax(f[c], f[(c + 1) % 3])];
    std::vector<char> boundary(garment.num_vertices(), 0);
    for (const auto& [e, n] : uses)
        if (n == 1) boundary[static_cast<std::size_t>(e.first)] = boundary[static_cast<std::size_t>(e.second)] = 1;
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < boundary.size(); ++i)
        if (boundary[i]) top = std::max(top, garment.vertices()[i].z());
    std::vector<int> out;
    for (std::size_t i = 0; i < boundary.size(); ++i)
        if (boundary[i] && garment.vertices()[i].z() >= top - band) out.push_back(static_cast<int>(i));
    return out;
}

GarmentSimulation::GarmentSimulation(const TriangleMesh& g0, const ClothMaterial& material,
                                     const ClothSettings& settings, std::vector<ClothAttachment> attachments)
    : g0_(g0),
      attachments_(std::move(attachments)),
      solver_(attached_topology(g0, material.density, attachments_), material, settings) {}

TriangleMesh GarmentSimulation::advance(const TriangleMesh& body, const BodySdf& body_sdf) {
    require(body_sdf.mesh().num_vertices() == body.num_vertices(), "body SDF does not match the body mesh");
    if (frame_ == 0) {
        solver_.resolve_penetrations(body_sdf);
    } else if (attachments_.empty()) {
        solver_.step(&body_sdf);
    } else {
        std::vector<int> ids;
        std::vector<Vec3> from, to, at(attachments_.size());
        for (const ClothAttachment& a : attachments_) {
            ids.push_back(a.vertex);
            from.push_back(solver_.positions()[static_cast<std::size_t>(a.vertex)]);
            to.push_back(attachment_position(a, body));
        }
        const int substeps = solver_.settings().substeps;
        for (int s = 1; s <= substeps; ++s) {
            const double w = static_cast<double>(s) / substeps;
            for (std::size_t k = 0; k < at.size(); ++k) at[k] = s == substeps ? to[k] : (1.0 - w) * from[k] + w * to[k];
            solver_.place_kinematic(ids, at);
            solver_.substep(&body_sdf);
        }
    }
    for (const Vec3& p : solver_.positions())
        if (!p.allFinite())
            throw SimulationError("garment simulation became non-finite at frame " + std::to_string(frame_), frame_);
    ++frame_;
    return g0_.with_vertices(solver_.positions());
}

std::vector<TriangleMesh> simulate_garment(const TriangleMesh& g0, std::span<const TriangleMesh> bodies,
                                           const ClothMaterial& material, const ClothSettings& settings) {
    require(!bodies.empty(), "garment simulation needs at least one body frame");
    settings.validate();
    GarmentSimulation sim(g0, material, settings);
    std::vector<TriangleMesh> out;
    out.reserve(bodies.size());
    std::unique_ptr<BodySdf> sdf;
    for (std::size_t t = 0; t < bodies.size(); ++t) {
        if (!sdf || sdf->mesh().vertices() != bodies[t].vertices())
            sdf = std::make_unique<BodySdf>(bodies[t], settings.sdf_resolution);
        out.push_back(sim.advance(bodies[t], *sdf));
    }
    return out;
}

TriangleMesh make_rectangular_sheet(const Vec3& center, double width, double depth, int nx, int ny) {
    require(width > 0.0 && depth > 0.0 && nx >= 1 && ny >= 1, "sheet needs positive size and at least one quad");
    std::vector<Vec3> v;
    std::vector<Face> f;
    for (int j = 0; j <= ny; ++j)
        for (int i = 0; i <= nx; ++i)
            v.push_back(center + Vec3((static_cast<double>(i) / nx - 0.5) * width, (static_cast<double>(j) / ny - 0.5) * depth, 0));
    auto id = [&](int i, int j) { return j * (nx + 1) + i; };
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            // Alternate the diagonal so the sheet has no preferred fold direction.
            if ((i + j) % 2 == 0) {
                f.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
                f.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
            } else {
                f.push_back({id(i, j), id(i + 1, j), id(i, j + 1)});
                f.push_back({id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)});
            }
        }
    return TriangleMesh(std::move(v), std::move(f));
}

double max_penetration(const TriangleMesh& garment, const BodySdf& body) {
    double worst = 0.0;
    for (const Vec3& p : garment.vertices()) worst = std::max(worst, body.penetration(p));
    return worst;
}

}  // namespace avatar
