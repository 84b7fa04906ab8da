#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace avatar {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;
using Face = std::array<int, 3>;

// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Raised when a simulator state becomes non-finite; carries the frame index.
class SimulationError : public Error {
public:
    SimulationError(const std::string& what, int frame) : Error(what), frame_(frame) {}
    int frame() const { return frame_; }

private:
    int frame_;
};

inline void require(bool condition, const std::string& message) {
    if (!condition) throw InvalidArgument(message);
}

inline bool is_finite(const Vec3& v) { return v.allFinite(); }

enum class Layer : std::uint8_t { body = 0, garment = 1, hair = 2 };

constexpr std::array<Layer, 3> kAllLayers = {Layer::body, Layer::garment, Layer::hair};

using LayerMask = std::uint8_t;
constexpr LayerMask kAllLayersMask = 0b111;

constexpr LayerMask layer_bit(Layer layer) { return LayerMask(1u << static_cast<unsigned>(layer)); }

std::string_view layer_name(Layer layer);
Layer parse_layer(std::string_view name);

using Rng = std::mt19937_64;

// Derives an independent stream seed from a master seed and a stage label.
std::uint64_t split_seed(std::uint64_t master, std::string_view stage);
std::uint64_t split_seed(std::uint64_t master, std::uint64_t index);

// 64-bit FNV-1a, stable across platforms; used for content hashes.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ull);

// Runs body(i) for i in [0, count) across worker threads; deterministic as long
// as iterations write disjoint outputs.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace avatar
