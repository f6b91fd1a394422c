#pragma once

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "anchorloc/geometry.hpp"

namespace testing_support {

inline std::filesystem::path fixture(const std::string& name) { return std::filesystem::path(ANCHORLOC_FIXTURE_DIR) / name; }

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline anchorloc::Quat random_unit_quat(std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    for (;;) {
        anchorloc::Quat q{n(rng), n(rng), n(rng), n(rng)};
        const double len = q.norm();
        if (len > 1e-3) return {q.w / len, q.x / len, q.y / len, q.z / len};
    }
}

// Relative error with an absolute floor so that tiny true values do not
// blow up the ratio.
inline double rel_error(double a, double b) { return std::abs(a - b) / std::max(1e-6, std::max(std::abs(a), std::abs(b))); }

// Fresh scratch directory under the system temp path.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("anchorloc_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace testing_support
