#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include "anchorloc/geometry.hpp"
#include "support.hpp"

using namespace anchorloc;
using testing_support::uniform;

namespace {

std::vector<Pose> line_poses(int n) {
    std::vector<Pose> poses;
    for (int i = 0; i < n; ++i) poses.emplace_back(Vec3{double(i), 0.0, 0.0}, Quat{1, 0, 0, 0});
    return poses;
}

AnchorMap random_map(std::mt19937_64& rng, std::size_t n) {
    std::vector<Vec2> a;
    for (std::size_t i = 0; i < n; ++i) a.push_back({uniform(rng, -50, 50), uniform(rng, -50, 50)});
    return AnchorMap(a, 1);
}

}  // namespace

TEST(Pose, ConstructorNormalizesOrientation) {
    const Pose p({1, 2, 3}, Quat{2, 0, 0, 0});
    EXPECT_EQ(p.orientation(), (Quat{1, 0, 0, 0}));
    const Pose r({0, 0, 0}, Quat{1, 2, 3, 4});
    EXPECT_NEAR(r.orientation().norm(), 1.0, 1e-9);
}

TEST(Pose, RejectsNonFinitePositionAndZeroQuaternion) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(Pose({nan, 0, 0}, Quat{1, 0, 0, 0}), InvalidInput);
    EXPECT_THROW(Pose({0, 0, 0}, Quat{0, 0, 0, 0}), DegenerateOrientation);
}

TEST(Pose, ExactKeepsNearUnitQuaternionBits) {
    const Quat q{0.70710678118654757, 0, 0, 0.70710678118654757};
    EXPECT_EQ(Pose::exact({0, 0, 0}, q).orientation(), q);
}

TEST(AnchorMap, ValidatesInput) {
    EXPECT_THROW(AnchorMap({}, 1), InvalidInput);
    EXPECT_THROW(AnchorMap({{0, 0}, {1, 1}}, 0), InvalidInput);
    EXPECT_THROW(AnchorMap({{0, 0}, {0, 1e-10}}, 1), InvalidInput);
    EXPECT_THROW(AnchorMap({{0, std::numeric_limits<double>::infinity()}}, 1), InvalidInput);
}

TEST(BuildAnchorMap, EveryKthFrame) {
    const auto poses = line_poses(10);
    const AnchorMap map = build_anchor_map(poses, 3);
    ASSERT_EQ(map.size(), 4u);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(map[i], (Vec2{3.0 * i, 0.0}));
    EXPECT_EQ(map.frame_interval(), 3u);
}

TEST(BuildAnchorMap, IntervalOneGivesOneAnchorPerUniquePosition) {
    auto poses = line_poses(6);
    poses.insert(poses.begin() + 3, poses[1]);  // repeated position
    const AnchorMap map = build_anchor_map(poses, 1);
    ASSERT_EQ(map.size(), 6u);
    for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(map[i].x, double(i));
}

TEST(BuildAnchorMap, Errors) {
    EXPECT_THROW(build_anchor_map(std::vector<Pose>{}, 1), InvalidInput);
    const std::vector<Pose> same(5, Pose({1, 1, 0}, Quat{1, 0, 0, 0}));
    EXPECT_THROW(build_anchor_map(same, 1), DegenerateMap);
    EXPECT_THROW(build_anchor_map(line_poses(10), 10), DegenerateMap);
    EXPECT_THROW(build_anchor_map(line_poses(10), 0), InvalidInput);
}

TEST(RelativeOffsets, ChangeOfOrigin) {
    const AnchorMap map({{0, 0}, {10, 0}}, 1);
    const auto t = relative_offsets({3, 4, 7}, map);
    ASSERT_EQ(t.size(), 2u);
    EXPECT_EQ(t[0], (Vec2{3, 4}));
    EXPECT_EQ(t[1], (Vec2{-7, 4}));
    EXPECT_EQ(relative_offsets({10, 0, 1}, map)[1], (Vec2{0, 0}));
}

TEST(RelativeOffsets, RoundTripRandom) {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 1000; ++trial) {
        const AnchorMap map = random_map(rng, 1 + trial % 12);
        const Vec3 p{uniform(rng, -80, 80), uniform(rng, -80, 80), uniform(rng, -3, 3)};
        const auto t = relative_offsets(p, map);
        for (std::size_t i = 0; i < map.size(); ++i) {
            EXPECT_NEAR(map[i].x + t[i].x, p.x, 1e-12);
            EXPECT_NEAR(map[i].y + t[i].y, p.y, 1e-12);
        }
    }
}

TEST(NearestAnchor, Examples) {
    const AnchorMap map({{0, 0}, {1, 0}}, 1);
    EXPECT_EQ(nearest_anchor({0.4, 0, 0}, map), 0u);
    EXPECT_EQ(nearest_anchor({0.5, 0, 0}, map), 0u);
    EXPECT_EQ(nearest_anchor({0.6, 0, 5}, map), 1u);
}

TEST(NearestAnchor, MatchesExhaustiveScan) {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 1000; ++trial) {
        const AnchorMap map = random_map(rng, 1 + trial % 30);
        const Vec3 p{uniform(rng, -60, 60), uniform(rng, -60, 60), 0.0};
        std::size_t best = 0;
        long double best_d = std::numeric_limits<long double>::max();
        for (std::size_t i = 0; i < map.size(); ++i) {
            const long double dx = (long double)p.x - map[i].x;
            const long double dy = (long double)p.y - map[i].y;
            const long double d = std::sqrt(dx * dx + dy * dy);
            if (d < best_d) {
                best_d = d;
                best = i;
            }
        }
        EXPECT_EQ(nearest_anchor(p, map), best);
    }
}

TEST(QuatAngle, Examples) {
    const Quat id{1, 0, 0, 0};
    std::mt19937_64 rng(3);
    const Quat q = testing_support::random_unit_quat(rng);
    EXPECT_EQ(quat_angle_deg(q, q), 0.0);
    EXPECT_EQ(quat_angle_deg(q, {-q.w, -q.x, -q.y, -q.z}), 0.0);
    const Quat z90{std::cos(std::numbers::pi / 4), 0, 0, std::sin(std::numbers::pi / 4)};
    EXPECT_NEAR(quat_angle_deg(id, z90), 90.0, 1e-9);
    EXPECT_THROW(quat_angle_deg(id, {1.1, 0, 0, 0}), InvalidInput);
}

// Independent oracle: angle of the relative rotation from the trace of its
// rotation matrix.
TEST(QuatAngle, MatchesRotationMatrixTrace) {
    std::mt19937_64 rng(4);
    auto matrix = [](const Quat& q) {
        const double w = q.w, x = q.x, y = q.y, z = q.z;
        return std::array<double, 9>{1 - 2 * (y * y + z * z), 2 * (x * y - w * z),     2 * (x * z + w * y),
                                     2 * (x * y + w * z),     1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
                                     2 * (x * z - w * y),     2 * (y * z + w * x),     1 - 2 * (x * x + y * y)};
    };
    for (int trial = 0; trial < 500; ++trial) {
        const Quat a = testing_support::random_unit_quat(rng);
        const Quat b = testing_support::random_unit_quat(rng);
        const auto ra = matrix(a);
        const auto rb = matrix(b);
        double trace = 0.0;  // trace(ra^T rb)
        for (int i = 0; i < 3; ++i) {
            for (int k = 0; k < 3; ++k) trace += ra[k * 3 + i] * rb[k * 3 + i];
        }
        const double expected = std::acos(std::clamp((trace - 1.0) / 2.0, -1.0, 1.0)) * 180.0 / std::numbers::pi;
        // acos is ill-conditioned near 0 and 180 degrees
        EXPECT_NEAR(quat_angle_deg(a, b), expected, 1e-5);
    }
}

TEST(Quat, YawRoundTrip) {
    for (double yaw : {-3.0, -1.0, 0.0, 0.5, 2.9}) EXPECT_NEAR(Quat::from_yaw(yaw).yaw(), yaw, 1e-12);
}
