#pragma once

#include "avatar/render/shading.hpp"
#include "avatar/render/splat.hpp"

#include <array>
#include <span>
#include <vector>

namespace avatar {

// Per-layer Gaussian sets indexed by Layer.
using LayerGaussians = std::array<std::vector<GaussianPrimitive>, 3>;

inline std::vector<GaussianPrimitive>& layer_of(LayerGaussians& g, Layer layer) {
    return g[static_cast<std::size_t>(layer)];
}
inline const std::vector<GaussianPrimitive>& layer_of(const LayerGaussians& g, Layer layer) {
    return g[static_cast<std::size_t>(layer)];
}

// Geometry the layers are bound to in one frame.
struct FrameGeometry {
    const TriangleMesh* body = nullptr;
    const TriangleMesh* garment = nullptr;
    const HairStrands* hair = nullptr;

    const TriangleMesh* mesh_for(Layer layer) const;
    const HairStrands* strands_for(Layer layer) const;
};

// Splats plus the bookkeeping needed to route render gradients back to primitives.
struct SplatBatch {
    std::vector<RenderGaussian> splats;
    std::vector<Vec3> shading;  // colour = features.head(3) .* shading
    std::vector<Layer> layer;
    std::vector<int> index;     // primitive index within its layer
};

// Appends one layer. A null light leaves colours unshaded (factor 1).
void append_layer_splats(SplatBatch& batch, Layer layer, std::span<const GaussianPrimitive> gaussians,
                         std::span<const PlacedGaussian> placed, const LightSample* light);

// Places every masked layer against geometry and appends it in body, garment, hair order.
SplatBatch build_splats(const LayerGaussians& gaussians, const FrameGeometry& geometry, const LightSample* light,
                        LayerMask layers = kAllLayersMask);

// Mean of all primitive centres; the orbit centre for cameras and lights.
Vec3 splat_centroid(std::span<const RenderGaussian> splats);

}  // namespace avatar
