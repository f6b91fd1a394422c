#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "anchorloc/errors.hpp"

namespace anchorloc {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
    friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
    friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
    friend bool operator==(Vec2, Vec2) = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
inline double squared_norm(Vec2 a) { return a.x * a.x + a.y * a.y; }

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    Vec2 xy() const { return {x, y}; }
    friend Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
    friend bool operator==(Vec3, Vec3) = default;
};

inline double norm(Vec3 a) { return std::sqrt(a.x * a.x + a.y * a.y + a.z * a.z); }

// Quaternion stored in (w, x, y, z) order.
struct Quat {
    double w = 1.0;
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }
    friend bool operator==(Quat, Quat) = default;

    static Quat from_yaw(double yaw) { return {std::cos(0.5 * yaw), 0.0, 0.0, std::sin(0.5 * yaw)}; }

    // Heading about +z of the rotated +x axis.
    double yaw() const { return std::atan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z)); }
};

inline double dot(const Quat& a, const Quat& b) { return a.w * b.w + a.x * b.x + a.y * b.y + a.z * b.z; }

inline Quat normalized(const Quat& q) {
    const double n = q.norm();
    if (!(n > 1e-12) || !std::isfinite(n)) throw DegenerateOrientation("quaternion norm is zero or non-finite");
    return {q.w / n, q.x / n, q.y / n, q.z / n};
}

class Pose {
public:
    Pose() = default;

    // Normalizes the orientation; throws on non-finite position or a
    // zero-norm quaternion.
    Pose(Vec3 position, const Quat& orientation) : position_(position), orientation_(normalized(orientation)) {
        if (!std::isfinite(position.x) || !std::isfinite(position.y) || !std::isfinite(position.z)) {
            throw InvalidInput("pose position must be finite");
        }
    }

    const Vec3& position() const { return position_; }
    const Quat& orientation() const { return orientation_; }

    friend bool operator==(const Pose&, const Pose&) = default;

    // Adopts an orientation that is already unit within 1e-12 without
    // renormalizing, so that parse/serialize stays bit-stable.
    static Pose exact(Vec3 position, const Quat& orientation) {
        Pose p;
        p.position_ = position;
        p.orientation_ = std::abs(orientation.norm() - 1.0) <= 1e-12 ? orientation : normalized(orientation);
        if (!std::isfinite(position.x) || !std::isfinite(position.y) || !std::isfinite(position.z)) {
            throw InvalidInput("pose position must be finite");
        }
        return p;
    }

private:
    Vec3 position_{};
    Quat orientation_{};
};

inline constexpr double kDuplicateAnchorTolerance = 1e-9;

class AnchorMap {
public:
    AnchorMap(std::vector<Vec2> anchors, std::size_t frame_interval, std::string source_scene = {})
        : anchors_(std::move(anchors)), frame_interval_(frame_interval), source_scene_(std::move(source_scene)) {
        if (anchors_.empty()) throw InvalidInput("anchor map must not be empty");
        if (frame_interval_ < 1) throw InvalidInput("anchor frame interval must be >= 1");
        for (std::size_t i = 0; i < anchors_.size(); ++i) {
            if (!std::isfinite(anchors_[i].x) || !std::isfinite(anchors_[i].y)) {
                throw InvalidInput("anchor coordinates must be finite");
            }
            for (std::size_t j = 0; j < i; ++j) {
                if (norm(anchors_[i] - anchors_[j]) <= kDuplicateAnchorTolerance) {
                    throw InvalidInput("duplicate anchors at indices " + std::to_string(j) + " and " +
                                       std::to_string(i));
                }
            }
        }
    }

    std::span<const Vec2> anchors() const { return anchors_; }
    const Vec2& operator[](std::size_t i) const { return anchors_[i]; }
    std::size_t size() const { return anchors_.size(); }
    std::size_t frame_interval() const { return frame_interval_; }
    const std::string& source_scene() const { return source_scene_; }

    friend bool operator==(const AnchorMap&, const AnchorMap&) = default;

private:
    std::vector<Vec2> anchors_;
    std::size_t frame_interval_;
    std::string source_scene_;
};

struct OffsetTable {
    std::vector<Vec2> offsets;

    std::size_t size() const { return offsets.size(); }
    const Vec2& operator[](std::size_t i) const { return offsets[i]; }
};

// Anchors are the (x, y) of every k-th pose starting at index 0. Positions
// repeating an earlier anchor (within 1e-9) are skipped.
inline AnchorMap build_anchor_map(std::span<const Pose> poses, std::size_t k, std::string source_scene = {}) {
    if (poses.empty()) throw InvalidInput("cannot build an anchor map from an empty pose list");
    if (k < 1) throw InvalidInput("frame interval k must be >= 1");

    std::vector<Vec2> anchors;
    std::size_t picked = 0;
    for (std::size_t i = 0; i < poses.size(); i += k) {
        ++picked;
        const Vec2 candidate = poses[i].position().xy();
        const bool duplicate = std::any_of(anchors.begin(), anchors.end(), [&](Vec2 a) {
            return norm(candidate - a) <= kDuplicateAnchorTolerance;
        });
        if (!duplicate) anchors.push_back(candidate);
    }
    if (anchors.size() < 2) {
        throw DegenerateMap("anchor map collapses to a single point (" + std::to_string(picked) +
                            " frames sampled with k=" + std::to_string(k) + ")");
    }
    return AnchorMap(std::move(anchors), k, std::move(source_scene));
}

inline OffsetTable relative_offsets(Vec3 position, const AnchorMap& map) {
    OffsetTable table;
    table.offsets.reserve(map.size());
    for (const Vec2& a : map.anchors()) table.offsets.push_back({position.x - a.x, position.y - a.y});
    return table;
}

// Lowest index wins ties.
inline std::size_t nearest_anchor(Vec3 position, const AnchorMap& map) {
    std::size_t best = 0;
    double best_d2 = squared_norm(position.xy() - map[0]);
    for (std::size_t i = 1; i < map.size(); ++i) {
        const double d2 = squared_norm(position.xy() - map[i]);
        if (d2 < best_d2) {
            best_d2 = d2;
            best = i;
        }
    }
    return best;
}

// Geodesic angle between two rotations in degrees; q and -q are the same
// rotation. This is 2 acos|a.b| written as 4 atan2(|a - s b|, |a + s b|)
// with s = sign(a.b), which stays accurate near 0 and 180 degrees where acos
// loses half the digits.
inline double quat_angle_deg(const Quat& a, const Quat& b) {
    if (std::abs(a.norm() - 1.0) > 1e-6 || std::abs(b.norm() - 1.0) > 1e-6) {
        throw InvalidInput("quat_angle_deg expects unit quaternions");
    }
    const double s = dot(a, b) < 0.0 ? -1.0 : 1.0;
    const Quat diff{a.w - s * b.w, a.x - s * b.x, a.y - s * b.y, a.z - s * b.z};
    const Quat sum{a.w + s * b.w, a.x + s * b.x, a.y + s * b.y, a.z + s * b.z};
    return 4.0 * std::atan2(diff.norm(), sum.norm()) * 180.0 / std::numbers::pi;
}

}  // namespace anchorloc
