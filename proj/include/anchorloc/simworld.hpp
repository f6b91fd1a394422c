#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "anchorloc/errors.hpp"
#include "anchorloc/geometry.hpp"

namespace anchorloc {

struct Landmark {
    int id = 0;
    Vec2 position;

    friend bool operator==(const Landmark&, const Landmark&) = default;
};

struct Segment {
    Vec2 a;
    Vec2 b;

    friend bool operator==(const Segment&, const Segment&) = default;
};

// One record of a dataset. visible_landmarks is ground truth kept for
// analysis; it is never part of the feature vector.
struct Sample {
    std::string frame_id;
    std::vector<double> feature;
    Pose pose;
    std::vector<int> visible_landmarks;
};

struct WorldSpec {
    std::vector<Vec2> route;
    std::vector<Landmark> landmarks;
    std::vector<Segment> obstacles;
    double fov_half_angle_deg = 60.0;

    // z(s) = z_base + z_amplitude * (sum of three seeded sinusoids along the
    // route arc length s) / 3
    double z_base = 0.0;
    double z_amplitude = 0.0;
    double z_wavelength = 10.0;

    double heading_offset_deg = 0.0;  // camera yaw relative to the route tangent
    double lateral_jitter = 0.0;      // uniform half-width, meters
    double heading_jitter_deg = 0.0;  // standard deviation, degrees
    double noise_sigma = 0.0;         // added to bearing and distance channels
    double colocation_radius = 1.0;   // landmark <-> anchor association, meters
    std::uint64_t seed = 0;

    friend bool operator==(const WorldSpec&, const WorldSpec&) = default;

    void validate() const {
        if (route.size() < 2) throw InvalidSpec("route needs at least two waypoints");
        if (!(fov_half_angle_deg > 0.0 && fov_half_angle_deg < 180.0)) {
            throw InvalidSpec("fov_half_angle must lie in (0, 180) degrees");
        }
        if (!std::isfinite(heading_offset_deg)) throw InvalidSpec("heading_offset must be finite");
        for (double v : {lateral_jitter, heading_jitter_deg, noise_sigma, colocation_radius}) {
            if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidSpec("jitter, noise and radii must be non-negative");
        }
        if (!(z_wavelength > 0.0)) throw InvalidSpec("z_wavelength must be positive");
        for (std::size_t i = 0; i < landmarks.size(); ++i) {
            for (std::size_t j = 0; j < i; ++j) {
                if (landmarks[i].id == landmarks[j].id) throw InvalidSpec("duplicate landmark id");
            }
        }
    }

    std::size_t feature_dim() const { return 3 * landmarks.size(); }
};

// ---------------------------------------------------------------------------
// Segment tests.

inline constexpr double kOrientationEpsilon = 1e-12;

inline int orientation_sign(Vec2 a, Vec2 b, Vec2 c) {
    const double v = cross(b - a, c - a);
    if (v > kOrientationEpsilon) return 1;
    if (v < -kOrientationEpsilon) return -1;
    return 0;
}

namespace detail {

inline bool within_box(Vec2 a, Vec2 b, Vec2 p) {
    return p.x >= std::min(a.x, b.x) - kOrientationEpsilon && p.x <= std::max(a.x, b.x) + kOrientationEpsilon &&
           p.y >= std::min(a.y, b.y) - kOrientationEpsilon && p.y <= std::max(a.y, b.y) + kOrientationEpsilon;
}

}  // namespace detail

// True when the closed segments pq and ab share a point. Touching and
// collinear overlap count as intersecting.
inline bool segments_intersect(Vec2 p, Vec2 q, Vec2 a, Vec2 b) {
    const int o1 = orientation_sign(p, q, a);
    const int o2 = orientation_sign(p, q, b);
    const int o3 = orientation_sign(a, b, p);
    const int o4 = orientation_sign(a, b, q);
    if (o1 * o2 < 0 && o3 * o4 < 0) return true;
    if (o1 == 0 && detail::within_box(p, q, a)) return true;
    if (o2 == 0 && detail::within_box(p, q, b)) return true;
    if (o3 == 0 && detail::within_box(a, b, p)) return true;
    if (o4 == 0 && detail::within_box(a, b, q)) return true;
    return false;
}

// ---------------------------------------------------------------------------
// Visibility and feature encoding.

struct Observation {
    bool visible = false;
    double bearing = 0.0;   // radians in (-pi, pi], relative to the camera heading
    double distance = 0.0;  // meters
};

inline double wrap_angle(double a) {
    a = std::remainder(a, 2.0 * std::numbers::pi);
    if (a <= -std::numbers::pi) a += 2.0 * std::numbers::pi;
    return a;
}

inline Observation visibility(const Pose& pose, Vec2 landmark, const WorldSpec& spec) {
    const Vec2 cam = pose.position().xy();
    const Vec2 d = landmark - cam;
    Observation obs;
    obs.distance = norm(d);
    obs.bearing = wrap_angle(std::atan2(d.y, d.x) - pose.orientation().yaw());
    const double fov = spec.fov_half_angle_deg * std::numbers::pi / 180.0;
    if (std::abs(obs.bearing) > fov) return obs;
    for (const Segment& s : spec.obstacles) {
        if (segments_intersect(cam, landmark, s.a, s.b)) return obs;
    }
    obs.visible = true;
    return obs;
}

// Per landmark: [visible, bearing / pi, 1 / (1 + distance)]; all three are
// zero when the landmark is not visible.
inline constexpr std::size_t kChannelsPerLandmark = 3;

inline double encode_bearing(double bearing) { return bearing / std::numbers::pi; }
inline double decode_bearing(double channel) { return channel * std::numbers::pi; }
inline double encode_distance(double distance) { return 1.0 / (1.0 + distance); }
inline double decode_distance(double channel) { return 1.0 / channel - 1.0; }

// ---------------------------------------------------------------------------
// Route parametrization.

class RoutePath {
public:
    explicit RoutePath(std::span<const Vec2> waypoints) : points_(waypoints.begin(), waypoints.end()) {
        cumulative_.push_back(0.0);
        for (std::size_t i = 1; i < points_.size(); ++i) {
            cumulative_.push_back(cumulative_.back() + norm(points_[i] - points_[i - 1]));
        }
    }

    double length() const { return cumulative_.back(); }

    struct Point {
        Vec2 position;
        double heading;
    };

    // Position and tangent heading at arc length s, clamped to the route.
    Point at(double s) const {
        s = std::clamp(s, 0.0, length());
        std::size_t i = 1;
        while (i + 1 < cumulative_.size() && (cumulative_[i] < s || cumulative_[i] == cumulative_[i - 1])) ++i;
        const Vec2 a = points_[i - 1];
        const Vec2 b = points_[i];
        const double seg = cumulative_[i] - cumulative_[i - 1];
        const double t = seg > 0.0 ? (s - cumulative_[i - 1]) / seg : 0.0;
        return {a + t * (b - a), std::atan2(b.y - a.y, b.x - a.x)};
    }

private:
    std::vector<Vec2> points_;
    std::vector<double> cumulative_;
};

namespace detail {

inline std::mt19937_64 stream(std::uint64_t seed, std::uint32_t tag) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), tag};
    return std::mt19937_64(seq);
}

enum StreamTag : std::uint32_t { kZProfile = 1, kTrainPoses = 2, kTestPoses = 3, kTrainNoise = 4, kTestNoise = 5 };

struct ZProfile {
    std::array<double, 3> phase{};
    std::array<double, 3> scale{1.0, 0.5, 0.25};

    double operator()(const WorldSpec& spec, double s) const {
        double acc = 0.0;
        for (std::size_t j = 0; j < 3; ++j) {
            acc += std::sin(2.0 * std::numbers::pi * s / (spec.z_wavelength * scale[j]) + phase[j]);
        }
        return spec.z_base + spec.z_amplitude * acc / 3.0;
    }
};

inline ZProfile make_z_profile(const WorldSpec& spec) {
    auto rng = stream(spec.seed, kZProfile);
    std::uniform_real_distribution<double> u(0.0, 2.0 * std::numbers::pi);
    ZProfile z;
    for (double& p : z.phase) p = u(rng);
    return z;
}

}  // namespace detail

inline std::vector<double> encode_features(const Pose& pose, const WorldSpec& spec, std::mt19937_64* noise_rng,
                                           std::vector<int>* visible_ids) {
    std::vector<double> f(spec.feature_dim(), 0.0);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (std::size_t i = 0; i < spec.landmarks.size(); ++i) {
        const Observation obs = visibility(pose, spec.landmarks[i].position, spec);
        if (!obs.visible) continue;
        if (visible_ids != nullptr) visible_ids->push_back(spec.landmarks[i].id);
        double nb = 0.0;
        double nd = 0.0;
        if (noise_rng != nullptr && spec.noise_sigma > 0.0) {
            nb = spec.noise_sigma * noise(*noise_rng);
            nd = spec.noise_sigma * noise(*noise_rng);
        }
        f[kChannelsPerLandmark * i] = 1.0;
        f[kChannelsPerLandmark * i + 1] = encode_bearing(obs.bearing) + nb;
        f[kChannelsPerLandmark * i + 2] = encode_distance(obs.distance) + nd;
    }
    return f;
}

struct WorldSplit {
    std::vector<Sample> train;
    std::vector<Sample> test;
};

// Training frames are ordered along the route like a video; test frames are
// independent uniform draws along the route. Both use their own seeded
// streams, so the two splits never share a draw.
inline WorldSplit generate(const WorldSpec& spec, std::size_t n_train, std::size_t n_test) {
    spec.validate();
    const RoutePath path(spec.route);
    if (!(path.length() > 1e-12)) throw InvalidSpec("route has zero length");
    const auto z_of = detail::make_z_profile(spec);
    const double heading_sigma = spec.heading_jitter_deg * std::numbers::pi / 180.0;
    const double heading_offset = spec.heading_offset_deg * std::numbers::pi / 180.0;

    auto make_sample = [&](double s, std::mt19937_64& pose_rng, std::mt19937_64& noise_rng, std::string id) {
        std::uniform_real_distribution<double> lateral(-spec.lateral_jitter, spec.lateral_jitter);
        std::normal_distribution<double> heading(0.0, 1.0);
        const auto pt = path.at(s);
        const double side = spec.lateral_jitter > 0.0 ? lateral(pose_rng) : 0.0;
        const double dh = heading_sigma > 0.0 ? heading_sigma * heading(pose_rng) : 0.0;
        const Vec2 normal{-std::sin(pt.heading), std::cos(pt.heading)};
        const Vec2 xy = pt.position + side * normal;
        Sample out;
        out.frame_id = std::move(id);
        out.pose = Pose({xy.x, xy.y, z_of(spec, s)}, Quat::from_yaw(wrap_angle(pt.heading + heading_offset + dh)));
        out.feature = encode_features(out.pose, spec, &noise_rng, &out.visible_landmarks);
        return out;
    };

    WorldSplit split;
    {
        auto pose_rng = detail::stream(spec.seed, detail::kTrainPoses);
        auto noise_rng = detail::stream(spec.seed, detail::kTrainNoise);
        const double step = path.length() / static_cast<double>(std::max<std::size_t>(n_train, 1));
        std::uniform_real_distribution<double> along(-0.5, 0.5);
        split.train.reserve(n_train);
        for (std::size_t i = 0; i < n_train; ++i) {
            const double s = (static_cast<double>(i) + 0.5 + 0.5 * along(pose_rng)) * step;
            split.train.push_back(make_sample(s, pose_rng, noise_rng, "train_" + std::to_string(i)));
        }
    }
    {
        auto pose_rng = detail::stream(spec.seed, detail::kTestPoses);
        auto noise_rng = detail::stream(spec.seed, detail::kTestNoise);
        std::uniform_real_distribution<double> u(0.0, path.length());
        split.test.reserve(n_test);
        for (std::size_t i = 0; i < n_test; ++i) {
            const double s = u(pose_rng);
            split.test.push_back(make_sample(s, pose_rng, noise_rng, "test_" + std::to_string(i)));
        }
    }
    return split;
}

// Recomputes the ground-truth visible set of a pose (used when a dataset is
// read back from disk).
inline std::vector<int> visible_landmarks(const Pose& pose, const WorldSpec& spec) {
    std::vector<int> ids;
    for (const auto& l : spec.landmarks) {
        if (visibility(pose, l.position, spec).visible) ids.push_back(l.id);
    }
    return ids;
}

// For every anchor, the id of the landmark co-located with it: each landmark
// belongs to its nearest anchor when that anchor lies within
// colocation_radius.
inline std::vector<std::optional<int>> colocated_landmarks(const AnchorMap& map, std::span<const Landmark> landmarks,
                                                           double radius) {
    std::vector<std::optional<int>> out(map.size());
    std::vector<double> best(map.size(), radius);
    for (const Landmark& l : landmarks) {
        const std::size_t i = nearest_anchor({l.position.x, l.position.y, 0.0}, map);
        const double d = norm(l.position - map[i]);
        if (d <= best[i]) {
            best[i] = d;
            out[i] = l.id;
        }
    }
    return out;
}

// The default world: a 20 m walk past a facade with four landmarks, the
// camera looking at the facade. A short tree hides the first landmark from
// close by and a wall hides the middle two.
inline WorldSpec default_world() {
    WorldSpec w;
    w.route = {{0.0, 0.0}, {20.0, 0.0}};
    w.landmarks = {{1, {2.5, 3.0}}, {2, {7.5, 3.0}}, {3, {12.5, 3.0}}, {4, {17.5, 3.0}}};
    w.obstacles = {{{1.5, 1.5}, {3.5, 1.5}}, {{6.5, 1.5}, {13.5, 1.5}}};
    w.fov_half_angle_deg = 60.0;
    w.z_amplitude = 0.3;
    w.heading_offset_deg = 90.0;
    w.lateral_jitter = 0.5;
    w.heading_jitter_deg = 10.0;
    w.noise_sigma = 0.005;
    w.colocation_radius = 3.5;
    w.seed = 0;
    return w;
}

}  // namespace anchorloc
