#pragma once

#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "anchorloc/errors.hpp"
#include "anchorloc/geometry.hpp"
#include "anchorloc/loss.hpp"
#include "anchorloc/optim.hpp"
#include "anchorloc/simworld.hpp"
#include "anchorloc/text.hpp"

namespace anchorloc {

// ---------------------------------------------------------------------------
// Pose text files: one "frame_id tx ty tz qw qx qy qz" record per line,
// '#' starts a comment line. Numbers are written with 17 significant digits.

struct PoseRecord {
    std::string frame_id;
    Pose pose;

    friend bool operator==(const PoseRecord&, const PoseRecord&) = default;
};

inline constexpr double kQuaternionUnitTolerance = 1e-3;

inline std::vector<PoseRecord> read_pose_text(std::istream& is) {
    std::vector<PoseRecord> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const auto trimmed = text::trim(line);
        if (trimmed.empty() || trimmed.front() == '#') continue;
        const auto tok = text::split_ws(trimmed);
        if (tok.size() != 8) {
            throw ParseError(line_no, "expected 8 fields (frame_id tx ty tz qw qx qy qz), got " +
                                          std::to_string(tok.size()));
        }
        double v[7];
        for (int i = 0; i < 7; ++i) {
            auto d = text::parse_double(tok[i + 1]);
            if (!d || !std::isfinite(*d)) throw ParseError(line_no, "bad number '" + std::string(tok[i + 1]) + "'");
            v[i] = *d;
        }
        const Quat q{v[3], v[4], v[5], v[6]};
        if (std::abs(q.norm() - 1.0) > kQuaternionUnitTolerance) {
            throw DataIntegrity("line " + std::to_string(line_no) + ": quaternion norm " +
                                text::format_shortest(q.norm()) + " is not within 1e-3 of unit");
        }
        out.push_back({std::string(tok[0]), Pose::exact({v[0], v[1], v[2]}, q)});
    }
    return out;
}

inline void write_pose_text(std::ostream& os, std::span<const PoseRecord> records) {
    for (const auto& r : records) {
        const Vec3& p = r.pose.position();
        const Quat& q = r.pose.orientation();
        os << r.frame_id;
        for (double v : {p.x, p.y, p.z, q.w, q.x, q.y, q.z}) os << ' ' << text::format17(v);
        os << '\n';
    }
}

inline std::vector<PoseRecord> load_pose_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open pose file '" + path.string() + "'");
    return read_pose_text(is);
}

inline void save_pose_file(const std::filesystem::path& path, std::span<const PoseRecord> records) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
    write_pose_text(os, records);
    if (!os) throw IoError("failed writing '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// Feature files (binary, little-endian):
//
//   bytes 0-7   magic "ALFEAT\0\0"
//   u32         version (1)
//   u64         frame_count
//   u64         dim
//   then per row:
//     u32       frame_id length L
//     L bytes   frame_id (UTF-8, no terminator)
//     dim x f64 values

struct FeatureRow {
    std::string frame_id;
    std::vector<double> values;

    friend bool operator==(const FeatureRow&, const FeatureRow&) = default;
};

struct FeatureTable {
    std::size_t dim = 0;
    std::vector<FeatureRow> rows;

    friend bool operator==(const FeatureTable&, const FeatureTable&) = default;
};

inline constexpr char kFeatureMagic[8] = {'A', 'L', 'F', 'E', 'A', 'T', '\0', '\0'};
inline constexpr std::uint32_t kFeatureVersion = 1;

namespace detail {

template <typename T>
void put_le(std::ostream& os, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::istream& is) {
    unsigned char bytes[sizeof(T)];
    if (!is.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw DataIntegrity("truncated feature file");
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    T v;
    std::memcpy(&v, bytes, sizeof(T));
    return v;
}

}  // namespace detail

inline void write_features(std::ostream& os, const FeatureTable& table) {
    os.write(kFeatureMagic, sizeof(kFeatureMagic));
    detail::put_le<std::uint32_t>(os, kFeatureVersion);
    detail::put_le<std::uint64_t>(os, table.rows.size());
    detail::put_le<std::uint64_t>(os, table.dim);
    for (const auto& row : table.rows) {
        if (row.values.size() != table.dim) {
            throw InvalidInput("feature row '" + row.frame_id + "' has wrong dimension");
        }
        detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(row.frame_id.size()));
        os.write(row.frame_id.data(), static_cast<std::streamsize>(row.frame_id.size()));
        for (double v : row.values) detail::put_le<double>(os, v);
    }
}

inline FeatureTable read_features(std::istream& is) {
    char magic[sizeof(kFeatureMagic)];
    if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kFeatureMagic, sizeof(magic)) != 0) {
        throw DataIntegrity("not a feature file (bad magic)");
    }
    const auto version = detail::get_le<std::uint32_t>(is);
    if (version != kFeatureVersion) throw DataIntegrity("unsupported feature file version " + std::to_string(version));
    const auto count = detail::get_le<std::uint64_t>(is);
    FeatureTable table;
    table.dim = detail::get_le<std::uint64_t>(is);
    for (std::uint64_t r = 0; r < count; ++r) {
        FeatureRow row;
        const auto len = detail::get_le<std::uint32_t>(is);
        row.frame_id.resize(len);
        if (!is.read(row.frame_id.data(), len)) throw DataIntegrity("truncated feature file");
        row.values.resize(table.dim);
        for (auto& v : row.values) v = detail::get_le<double>(is);
        table.rows.push_back(std::move(row));
    }
    if (is.peek() != std::char_traits<char>::eof()) throw DataIntegrity("trailing bytes after feature rows");
    return table;
}

inline FeatureTable load_feature_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open feature file '" + path.string() + "'");
    return read_features(is);
}

inline void save_feature_file(const std::filesystem::path& path, const FeatureTable& table) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
    write_features(os, table);
    if (!os) throw IoError("failed writing '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// Dataset directories: poses_train.txt, poses_test.txt, features_train.bin,
// features_test.bin.

namespace dataset_files {
inline constexpr const char* kPosesTrain = "poses_train.txt";
inline constexpr const char* kPosesTest = "poses_test.txt";
inline constexpr const char* kFeaturesTrain = "features_train.bin";
inline constexpr const char* kFeaturesTest = "features_test.bin";
}  // namespace dataset_files

struct RawSplit {
    std::vector<PoseRecord> poses;
    FeatureTable features;
};

struct RawDataset {
    RawSplit train;
    RawSplit test;
};

inline RawDataset load_dataset_dir(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw IoError("dataset directory '" + dir.string() + "' does not exist");
    RawDataset raw;
    raw.train.poses = load_pose_file(dir / dataset_files::kPosesTrain);
    raw.test.poses = load_pose_file(dir / dataset_files::kPosesTest);
    raw.train.features = load_feature_file(dir / dataset_files::kFeaturesTrain);
    raw.test.features = load_feature_file(dir / dataset_files::kFeaturesTest);
    return raw;
}

inline RawSplit to_raw(std::span<const Sample> samples, std::size_t dim) {
    RawSplit split;
    split.features.dim = dim;
    for (const auto& s : samples) {
        split.poses.push_back({s.frame_id, s.pose});
        split.features.rows.push_back({s.frame_id, s.feature});
    }
    return split;
}

inline void save_dataset_dir(const std::filesystem::path& dir, const RawDataset& raw) {
    std::filesystem::create_directories(dir);
    save_pose_file(dir / dataset_files::kPosesTrain, raw.train.poses);
    save_pose_file(dir / dataset_files::kPosesTest, raw.test.poses);
    save_feature_file(dir / dataset_files::kFeaturesTrain, raw.train.features);
    save_feature_file(dir / dataset_files::kFeaturesTest, raw.test.features);
}

// Joins pose records with feature rows by frame_id, preserving pose order.
inline std::vector<Sample> join_samples(const RawSplit& split) {
    if (split.poses.size() != split.features.rows.size()) {
        throw InvalidInput(std::to_string(split.poses.size()) + " poses but " +
                           std::to_string(split.features.rows.size()) + " feature rows");
    }
    std::unordered_map<std::string, std::size_t> by_id;
    for (std::size_t i = 0; i < split.features.rows.size(); ++i) {
        if (!by_id.emplace(split.features.rows[i].frame_id, i).second) {
            throw DataIntegrity("duplicate feature frame_id '" + split.features.rows[i].frame_id + "'");
        }
    }
    std::vector<Sample> out;
    out.reserve(split.poses.size());
    for (const auto& rec : split.poses) {
        auto it = by_id.find(rec.frame_id);
        if (it == by_id.end()) throw DataIntegrity("no feature row for frame '" + rec.frame_id + "'");
        out.push_back({rec.frame_id, split.features.rows[it->second].values, rec.pose, {}});
    }
    return out;
}

// ---------------------------------------------------------------------------

struct SceneDataset {
    std::string name;
    std::vector<Sample> train;
    std::vector<Sample> test;
    AnchorMap anchor_map;
    std::vector<OffsetTable> train_offsets;
    std::vector<OffsetTable> test_offsets;
    std::vector<std::size_t> nearest_labels;       // per training sample
    std::vector<std::size_t> test_nearest_labels;  // per test sample
};

inline SceneDataset assemble_with_map(std::string name, std::vector<Sample> train, std::vector<Sample> test,
                                      AnchorMap map) {
    const std::size_t dim = !train.empty() ? train.front().feature.size() : 0;
    for (const auto* split : {&train, &test}) {
        for (const auto& s : *split) {
            if (s.feature.size() != dim) throw InvalidInput("inconsistent feature dimensions in '" + s.frame_id + "'");
        }
    }
    SceneDataset ds{std::move(name), std::move(train), std::move(test), std::move(map), {}, {}, {}, {}};
    for (const auto& s : ds.train) {
        ds.train_offsets.push_back(relative_offsets(s.pose.position(), ds.anchor_map));
        ds.nearest_labels.push_back(nearest_anchor(s.pose.position(), ds.anchor_map));
    }
    for (const auto& s : ds.test) {
        ds.test_offsets.push_back(relative_offsets(s.pose.position(), ds.anchor_map));
        ds.test_nearest_labels.push_back(nearest_anchor(s.pose.position(), ds.anchor_map));
    }
    return ds;
}

// Builds the anchor map from the training poses only, then materializes the
// per-sample offset tables and nearest-anchor labels for both splits.
inline SceneDataset assemble(std::string name, std::vector<Sample> train, std::vector<Sample> test, std::size_t k) {
    std::vector<Pose> poses;
    poses.reserve(train.size());
    for (const auto& s : train) poses.push_back(s.pose);
    AnchorMap map = build_anchor_map(poses, k, name);
    return assemble_with_map(std::move(name), std::move(train), std::move(test), std::move(map));
}

// Single-anchor map at the centroid of the training positions. With it the
// three-head network degenerates to a direct pose regressor on centered
// targets (the classifier has one class and receives no gradient).
inline AnchorMap centroid_map(std::span<const Sample> train, std::string name = "direct") {
    if (train.empty()) throw InvalidInput("centroid of an empty training set");
    Vec2 c{};
    for (const auto& s : train) c = c + s.pose.position().xy();
    c = (1.0 / static_cast<double>(train.size())) * c;
    return AnchorMap({c}, 1, std::move(name));
}

inline std::vector<TrainingExample> training_examples(const SceneDataset& ds) {
    std::vector<TrainingExample> out;
    out.reserve(ds.train.size());
    for (std::size_t i = 0; i < ds.train.size(); ++i) {
        const Pose& p = ds.train[i].pose;
        out.push_back({ds.train[i].feature,
                       LossTarget{ds.train_offsets[i], p.position().z, p.orientation(), ds.nearest_labels[i]}});
    }
    return out;
}

}  // namespace anchorloc
