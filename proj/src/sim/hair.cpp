#include "avatar/sim/hair.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace avatar {

void HairParams::validate() const {
    require(dt > 0.0, "hair time step must be positive");
    require(substeps >= 1, "hair substeps must be at least 1");
    require(damping >= 0.0, "hair damping must be non-negative");
    require(bend_stiffness >= 0.0 && bend_stiffness <= 1.0, "hair bend stiffness must lie in [0, 1]");
    require(ftl_damping >= 0.0 && ftl_damping <= 1.0, "follow-the-leader damping must lie in [0, 1]");
    require(collision_radius >= 0.0, "hair collision radius must be non-negative");
}

HairSolver::HairSolver(const HairStrands& rest, const HairParams& params) : params_(params), strands_(rest) {
    params_.validate();
    require(rest.has_bindings(), "hair simulation needs root bindings");
    const int ns = rest.num_strands(), nl = rest.num_segments();
    velocities_.assign(rest.points().size(), Vec3::Zero());
    rest_lengths_.resize(static_cast<std::size_t>(ns) * nl);
    skip_lengths_.resize(static_cast<std::size_t>(ns) * std::max(0, nl - 1));
    for (int s = 0; s < ns; ++s) {
        for (int k = 0; k < nl; ++k) {
            const double l = (rest.point(s, k + 1) - rest.point(s, k)).norm();
            require(l > 0.0, "hair rest segment lengths must be positive");
            rest_lengths_[static_cast<std::size_t>(s) * nl + k] = l;
        }
        for (int k = 1; k < nl; ++k)
            skip_lengths_[static_cast<std::size_t>(s) * (nl - 1) + k - 1] = (rest.point(s, k + 1) - rest.point(s, k - 1)).norm();
    }
}

void HairSolver::set_state(const HairStrands& strands) {
    require(strands.num_strands() == strands_.num_strands() && strands.num_segments() == strands_.num_segments(),
            "hair state dimensions do not match the rest strands");
    strands_ = strands;
    std::fill(velocities_.begin(), velocities_.end(), Vec3::Zero());
}

void HairSolver::collide(Vec3& p, const Vec3& previous, const BodySdf* body_sdf, const MeshProximity* garment) const {
    const double r = params_.collision_radius;
    if (garment) {
        // The side of the open garment is taken from the previous position so fast points cannot tunnel.
        const double reach = r + (p - previous).norm();
        const auto before = garment->closest(previous, reach);
        if (before && before->distance > 1e-12) {
            const Vec3 n = (previous - before->point) / before->distance;
            const double s = (p - before->point).dot(n);
            if (s < r) p += (r - s) * n;
        } else if (const auto hit = garment->closest(p, r)) {
            Vec3 n = p - hit->point;
            n = hit->distance > 1e-12 ? Vec3(n / hit->distance) : garment->mesh().face_normal(hit->face);
            p = hit->point + r * n;
        }
    }
    if (body_sdf) {
        const SignedDistance sd = body_sdf->query(p);
        if (sd.distance < r && sd.normal.squaredNorm() > 0.0) p += (r - sd.distance) * sd.normal;
    }
}

void HairSolver::step(const TriangleMesh& body, const BodySdf* body_sdf, const MeshProximity* garment) {
    const int ns = strands_.num_strands(), nl = strands_.num_segments(), np = nl + 1;
    const int substeps = params_.substeps;
    const double h = params_.dt / substeps;
    const double keep = std::max(0.0, 1.0 - params_.damping * h);
    const double stiffness = params_.bend_stiffness;
    std::vector<Vec3>& points = strands_.mutable_points();

    parallel_for(static_cast<std::size_t>(ns), [&](std::size_t s) {
        const std::size_t base = s * static_cast<std::size_t>(np);
        Vec3* x = points.data() + base;
        Vec3* v = velocities_.data() + base;
        const double* rest = rest_lengths_.data() + s * static_cast<std::size_t>(nl);
        const double* skip = skip_lengths_.data() + s * static_cast<std::size_t>(std::max(0, nl - 1));
        const Vec3 root_start = x[0];
        const Vec3 root_end = evaluate_root(body, strands_.bindings()[s]);
        std::vector<Vec3> p(static_cast<std::size_t>(np)), correction(static_cast<std::size_t>(np) + 1, Vec3::Zero());
        for (int sub = 0; sub < substeps; ++sub) {
            const double a = static_cast<double>(sub + 1) / substeps;
            p[0] = sub + 1 == substeps ? root_end : Vec3(root_start + a * (root_end - root_start));
            for (int k = 1; k < np; ++k) {
                v[k] += h * params_.gravity;
                v[k] *= keep;
                p[static_cast<std::size_t>(k)] = x[k] + h * v[k];
            }
            // Skip-one distance constraints hold the rest angle between consecutive segments.
            for (int k = 1; k < nl; ++k) {
                Vec3& a0 = p[static_cast<std::size_t>(k - 1)];
                Vec3& a1 = p[static_cast<std::size_t>(k + 1)];
                const Vec3 d = a1 - a0;
                const double len = d.norm();
                if (len < 1e-12) continue;
                const Vec3 corr = stiffness * (len - skip[k - 1]) / len * d;
                if (k - 1 == 0) {
                    a1 -= corr;
                } else {
                    a0 += 0.5 * corr;
                    a1 -= 0.5 * corr;
                }
            }
            for (int k = 1; k < np; ++k) collide(p[static_cast<std::size_t>(k)], x[k], body_sdf, garment);
            // Follow the leader: exact segment lengths from the root outward.
            for (int k = 1; k < np; ++k) {
                const Vec3 d = p[static_cast<std::size_t>(k)] - p[static_cast<std::size_t>(k - 1)];
                const double len = d.norm();
                const Vec3 dir = len > 1e-12 ? Vec3(d / len) : Vec3(0, 0, -1);
                const Vec3 placed = p[static_cast<std::size_t>(k - 1)] + rest[k - 1] * dir;
                correction[static_cast<std::size_t>(k)] = placed - p[static_cast<std::size_t>(k)];
                p[static_cast<std::size_t>(k)] = placed;
            }
            for (int k = 1; k < np; ++k)
                v[k] = (p[static_cast<std::size_t>(k)] - x[k]) / h -
                       params_.ftl_damping * correction[static_cast<std::size_t>(k) + 1] / h;
            for (int k = 0; k < np; ++k) x[k] = p[static_cast<std::size_t>(k)];
        }
    });
}

HairSimulation::HairSimulation(const HairStrands& h0, const TriangleMesh& reference_body, const HairParams& params)
    : h0_(h0), reference_(reference_body), params_(params), solver_(h0, params) {}

HairStrands HairSimulation::advance(const TriangleMesh& body, const BodySdf& body_sdf, const TriangleMesh& garment) {
    require(body_sdf.mesh().num_vertices() == body.num_vertices(), "body SDF does not match the body mesh");
    if (frame_ == 0) {
        const HairStrands first = body.vertices() == reference_.vertices() ? h0_ : strand_roots_follow(h0_, reference_, body);
        solver_.set_state(first);
    } else {
        std::unique_ptr<MeshProximity> proximity;
        if (!garment.empty())
            proximity = std::make_unique<MeshProximity>(garment, std::max(4.0 * params_.collision_radius, 0.01));
        solver_.step(body, &body_sdf, proximity.get());
        for (const Vec3& p : solver_.state().points())
            if (!p.allFinite())
                throw SimulationError("hair simulation became non-finite at frame " + std::to_string(frame_), frame_);
    }
    ++frame_;
    return solver_.state();
}

std::vector<HairStrands> simulate_hair(const HairStrands& h0, const TriangleMesh& reference_body,
                                       std::span<const TriangleMesh> bodies, std::span<const TriangleMesh> garments,
                                       const HairParams& params) {
    require(!bodies.empty(), "hair simulation needs at least one body frame");
    if (bodies.size() != garments.size())
        throw InvalidArgument("hair simulation got " + std::to_string(bodies.size()) + " body frames but " +
                              std::to_string(garments.size()) + " garment frames");
    HairSimulation sim(h0, reference_body, params);
    std::vector<HairStrands> out;
    out.reserve(bodies.size());
    std::unique_ptr<BodySdf> sdf;
    for (std::size_t t = 0; t < bodies.size(); ++t) {
        if (!sdf || sdf->mesh().vertices() != bodies[t].vertices())
            sdf = std::make_unique<BodySdf>(bodies[t], params.sdf_resolution);
        out.push_back(sim.advance(bodies[t], *sdf, garments[t]));
    }
    return out;
}

double max_segment_drift(const HairStrands& strands, const HairStrands& rest) {
    require(strands.num_strands() == rest.num_strands() && strands.num_segments() == rest.num_segments(),
            "strand sets have different dimensions");
    double worst = 0.0;
    for (int s = 0; s < strands.num_strands(); ++s)
        for (int k = 0; k < strands.num_segments(); ++k) {
            const double l = (strands.point(s, k + 1) - strands.point(s, k)).norm();
            const double l0 = (rest.point(s, k + 1) - rest.point(s, k)).norm();
            worst = std::max(worst, std::abs(l / l0 - 1.0));
        }
    return worst;
}

}  // namespace avatar
