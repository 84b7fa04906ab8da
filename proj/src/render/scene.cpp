#include "avatar/render/scene.hpp"

namespace avatar {

const TriangleMesh* FrameGeometry::mesh_for(Layer layer) const {
    switch (layer) {
        case Layer::body: return body;
        case Layer::garment: return garment;
        case Layer::hair: return nullptr;
    }
    return nullptr;
}

const HairStrands* FrameGeometry::strands_for(Layer layer) const { return layer == Layer::hair ? hair : nullptr; }

void append_layer_splats(SplatBatch& batch, Layer layer, std::span<const GaussianPrimitive> gaussians,
                         std::span<const PlacedGaussian> placed, const LightSample* light) {
    require(gaussians.size() == placed.size(), "placed poses do not match the primitives");
    const std::size_t base = batch.splats.size();
    const std::size_t n = gaussians.size();
    batch.splats.resize(base + n);
    batch.shading.resize(base + n);
    batch.layer.resize(base + n, layer);
    batch.index.resize(base + n);
    parallel_for(n, [&](std::size_t i) {
        const GaussianPrimitive& g = gaussians[i];
        const PlacedGaussian& p = placed[i];
        Vec3 factor = Vec3::Ones();
        if (light)
            factor = p.strand ? strand_shading_factor(p.normal, p.pose.mean, *light)
                              : shading_factor(p.normal, p.pose.mean, *light);
        RenderGaussian& s = batch.splats[base + i];
        s.mean = p.pose.mean;
        s.covariance = covariance_from(p.pose.rotation, p.pose.scale);
        s.color = g.features.head<3>().cwiseProduct(factor);
        s.opacity = g.opacity;
        s.layer = layer;
        batch.shading[base + i] = factor;
        batch.layer[base + i] = layer;
        batch.index[base + i] = static_cast<int>(i);
    });
}

SplatBatch build_splats(const LayerGaussians& gaussians, const FrameGeometry& geometry, const LightSample* light,
                        LayerMask layers) {
    SplatBatch batch;
    for (Layer layer : kAllLayers) {
        if (!(layers & layer_bit(layer))) continue;
        const auto& g = layer_of(gaussians, layer);
        if (g.empty()) continue;
        const auto placed = place_gaussians(g, geometry.mesh_for(layer), geometry.strands_for(layer));
        append_layer_splats(batch, layer, g, placed, light);
    }
    return batch;
}

Vec3 splat_centroid(std::span<const RenderGaussian> splats) {
    if (splats.empty()) return Vec3::Zero();
    Vec3 sum = Vec3::Zero();
    for (const auto& s : splats) sum += s.mean;
    return sum / static_cast<double>(splats.size());
}

}  // namespace avatar
