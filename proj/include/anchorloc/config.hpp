#pragma once

// Run configuration as INI text. Every value a run depends on lives here so
// that the snapshot written next to the outputs reproduces the run.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "anchorloc/errors.hpp"
#include "anchorloc/eval.hpp"
#include "anchorloc/model.hpp"
#include "anchorloc/optim.hpp"
#include "anchorloc/simworld.hpp"
#include "anchorloc/text.hpp"

namespace anchorloc {

struct RunConfig {
    // [network]
    std::vector<std::size_t> hidden_layers = {64, 64};
    Activation activation = Activation::relu;
    std::uint64_t network_seed = 0;

    // [train] and [loss]
    TrainConfig train;
    bool direct_regression = false;

    // [anchors]
    std::size_t frame_interval = 100;

    // [world]
    WorldSpec world = default_world();
    std::size_t n_train = 2000;
    std::size_t n_test = 500;

    // [data]
    std::string data_dir;
    std::string scene = "simworld";

    // [eval]
    InferenceRule inference = InferenceRule::argmax;

    // [sweep]
    std::vector<std::size_t> sweep_k = {1, 5, 10, 20};

    friend bool operator==(const RunConfig&, const RunConfig&) = default;

    // The global --seed flag: one number drives world, init and shuffling.
    void set_seed(std::uint64_t s) {
        world.seed = s;
        network_seed = s;
        train.shuffle_seed = s;
    }

    NetworkSpec network_template() const {
        NetworkSpec spec;
        spec.hidden_layers = hidden_layers;
        spec.activation = activation;
        spec.seed = network_seed;
        return spec;
    }

    void validate() const {
        train.validate();
        world.validate();
        if (frame_interval < 1) throw InvalidSpec("frame_interval must be >= 1");
        for (std::size_t w : hidden_layers) {
            if (w == 0) throw InvalidSpec("hidden layer width must be positive");
        }
        for (std::size_t k : sweep_k) {
            if (k < 1) throw InvalidSpec("sweep k values must be >= 1");
        }
    }
};

namespace config_detail {

using boost::property_tree::ptree;

inline std::string fmt(double v) { return text::format_shortest(v); }

inline double to_double(const std::string& key, std::string_view s) {
    auto v = text::parse_double(text::trim(s));
    if (!v) throw InvalidSpec("config key '" + key + "': not a number: '" + std::string(s) + "'");
    return *v;
}

template <typename Int>
Int to_int(const std::string& key, std::string_view s) {
    auto v = text::parse_int<Int>(text::trim(s));
    if (!v) throw InvalidSpec("config key '" + key + "': not an integer: '" + std::string(s) + "'");
    return *v;
}

inline bool to_bool(const std::string& key, std::string_view s) {
    s = text::trim(s);
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw InvalidSpec("config key '" + key + "': expected true/false");
}

inline std::string join_sizes(const std::vector<std::size_t>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(v[i]);
    }
    return out;
}

inline std::vector<std::size_t> parse_sizes(const std::string& key, std::string_view s) {
    std::vector<std::size_t> out;
    if (text::trim(s).empty()) return out;
    for (auto tok : text::split(s, ',')) out.push_back(to_int<std::size_t>(key, tok));
    return out;
}

// Multi-record values separate records with ';' and numbers with ','.
inline std::vector<std::vector<std::string_view>> records(std::string_view s) {
    std::vector<std::vector<std::string_view>> out;
    if (text::trim(s).empty()) return out;
    for (auto rec : text::split(s, ';')) out.push_back(text::split(rec, ','));
    return out;
}

inline std::string join_points(const std::vector<Vec2>& pts) {
    std::string out;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (i) out += "; ";
        out += fmt(pts[i].x) + ',' + fmt(pts[i].y);
    }
    return out;
}

inline std::vector<Vec2> parse_points(const std::string& key, std::string_view s) {
    std::vector<Vec2> out;
    for (const auto& r : records(s)) {
        if (r.size() != 2) throw InvalidSpec("config key '" + key + "': expected 'x,y' records");
        out.push_back({to_double(key, r[0]), to_double(key, r[1])});
    }
    return out;
}

inline std::string join_landmarks(const std::vector<Landmark>& lms) {
    std::string out;
    for (std::size_t i = 0; i < lms.size(); ++i) {
        if (i) out += "; ";
        out += std::to_string(lms[i].id) + ',' + fmt(lms[i].position.x) + ',' + fmt(lms[i].position.y);
    }
    return out;
}

inline std::vector<Landmark> parse_landmarks(const std::string& key, std::string_view s) {
    std::vector<Landmark> out;
    for (const auto& r : records(s)) {
        if (r.size() != 3) throw InvalidSpec("config key '" + key + "': expected 'id,x,y' records");
        out.push_back({to_int<int>(key, r[0]), {to_double(key, r[1]), to_double(key, r[2])}});
    }
    return out;
}

inline std::string join_segments(const std::vector<Segment>& segs) {
    std::string out;
    for (std::size_t i = 0; i < segs.size(); ++i) {
        if (i) out += "; ";
        out += fmt(segs[i].a.x) + ',' + fmt(segs[i].a.y) + ',' + fmt(segs[i].b.x) + ',' + fmt(segs[i].b.y);
    }
    return out;
}

inline std::vector<Segment> parse_segments(const std::string& key, std::string_view s) {
    std::vector<Segment> out;
    for (const auto& r : records(s)) {
        if (r.size() != 4) throw InvalidSpec("config key '" + key + "': expected 'ax,ay,bx,by' records");
        out.push_back({{to_double(key, r[0]), to_double(key, r[1])}, {to_double(key, r[2]), to_double(key, r[3])}});
    }
    return out;
}

// Walks one section, handing every key to `apply`, which returns false for
// keys it does not know.
template <typename Apply>
void read_section(const ptree& tree, const std::string& section, Apply&& apply) {
    auto child = tree.get_child_optional(section);
    if (!child) return;
    for (const auto& [key, node] : *child) {
        const std::string full = section + "." + key;
        if (!apply(key, node.data(), full)) throw InvalidSpec("unknown config key '" + full + "'");
    }
}

inline void put_world(ptree& t, const WorldSpec& w) {
    t.put("world.route", join_points(w.route));
    t.put("world.landmarks", join_landmarks(w.landmarks));
    t.put("world.obstacles", join_segments(w.obstacles));
    t.put("world.fov_half_angle_deg", fmt(w.fov_half_angle_deg));
    t.put("world.z_base", fmt(w.z_base));
    t.put("world.z_amplitude", fmt(w.z_amplitude));
    t.put("world.z_wavelength", fmt(w.z_wavelength));
    t.put("world.heading_offset_deg", fmt(w.heading_offset_deg));
    t.put("world.lateral_jitter", fmt(w.lateral_jitter));
    t.put("world.heading_jitter_deg", fmt(w.heading_jitter_deg));
    t.put("world.noise_sigma", fmt(w.noise_sigma));
    t.put("world.colocation_radius", fmt(w.colocation_radius));
    t.put("world.seed", std::to_string(w.seed));
}

inline bool apply_world(WorldSpec& w, const std::string& key, const std::string& v, const std::string& full) {
    if (key == "route") w.route = parse_points(full, v);
    else if (key == "landmarks") w.landmarks = parse_landmarks(full, v);
    else if (key == "obstacles") w.obstacles = parse_segments(full, v);
    else if (key == "fov_half_angle_deg") w.fov_half_angle_deg = to_double(full, v);
    else if (key == "z_base") w.z_base = to_double(full, v);
    else if (key == "z_amplitude") w.z_amplitude = to_double(full, v);
    else if (key == "z_wavelength") w.z_wavelength = to_double(full, v);
    else if (key == "heading_offset_deg") w.heading_offset_deg = to_double(full, v);
    else if (key == "lateral_jitter") w.lateral_jitter = to_double(full, v);
    else if (key == "heading_jitter_deg") w.heading_jitter_deg = to_double(full, v);
    else if (key == "noise_sigma") w.noise_sigma = to_double(full, v);
    else if (key == "colocation_radius") w.colocation_radius = to_double(full, v);
    else if (key == "seed") w.seed = to_int<std::uint64_t>(full, v);
    else return false;
    return true;
}

inline ptree parse_ini(std::istream& is) {
    ptree tree;
    try {
        boost::property_tree::ini_parser::read_ini(is, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ParseError(e.line(), e.message());
    }
    static const std::set<std::string> known = {"network", "train", "loss",  "anchors", "world",
                                                "data",    "eval",  "sweep"};
    for (const auto& [section, node] : tree) {
        if (!known.contains(section)) throw InvalidSpec("unknown config section '" + section + "'");
        if (!node.data().empty()) throw InvalidSpec("config key '" + section + "' outside a section");
    }
    return tree;
}

inline void write_ini(std::ostream& os, const ptree& tree) {
    boost::property_tree::ini_parser::write_ini(os, tree);
}

}  // namespace config_detail

// Reads INI text on top of `base`; keys absent from the text keep their
// base values.
inline RunConfig read_config(std::istream& is, RunConfig base = {}) {
    using namespace config_detail;
    const ptree tree = parse_ini(is);
    RunConfig& c = base;
    read_section(tree, "network", [&](const std::string& k, const std::string& v, const std::string& f) {
        if (k == "hidden_layers") c.hidden_layers = parse_sizes(f, v);
        else if (k == "activation") c.activation = parse_activation(text::trim(v));
        else if (k == "seed") c.network_seed = to_int<std::uint64_t>(f, v);
        else return false;
        return true;
    });
    read_section(tree, "train", [&](const std::string& k, const std::string& v, const std::string& f) {
        TrainConfig& t = c.train;
        if (k == "lr") t.lr = to_double(f, v);
        else if (k == "beta1") t.beta1 = to_double(f, v);
        else if (k == "beta2") t.beta2 = to_double(f, v);
        else if (k == "epsilon") t.epsilon = to_double(f, v);
        else if (k == "batch_size") t.batch_size = to_int<std::size_t>(f, v);
        else if (k == "epochs") t.epochs = to_int<std::size_t>(f, v);
        else if (k == "lr_halving_period") t.lr_halving_period = to_int<std::size_t>(f, v);
        else if (k == "shuffle_seed") t.shuffle_seed = to_int<std::uint64_t>(f, v);
        else if (k == "checkpoint_every") t.checkpoint_every = to_int<std::size_t>(f, v);
        else if (k == "direct_regression") c.direct_regression = to_bool(f, v);
        else return false;
        return true;
    });
    read_section(tree, "loss", [&](const std::string& k, const std::string& v, const std::string& f) {
        LossWeights& w = c.train.weights;
        if (k == "alpha1") w.alpha1 = to_double(f, v);
        else if (k == "alpha2") w.alpha2 = to_double(f, v);
        else if (k == "alpha3") w.alpha3 = to_double(f, v);
        else if (k == "use_cross_entropy") w.use_cross_entropy = to_bool(f, v);
        else return false;
        return true;
    });
    read_section(tree, "anchors", [&](const std::string& k, const std::string& v, const std::string& f) {
        if (k == "frame_interval") c.frame_interval = to_int<std::size_t>(f, v);
        else return false;
        return true;
    });
    read_section(tree, "world", [&](const std::string& k, const std::string& v, const std::string& f) {
        if (k == "n_train") c.n_train = to_int<std::size_t>(f, v);
        else if (k == "n_test") c.n_test = to_int<std::size_t>(f, v);
        else return apply_world(c.world, k, v, f);
        return true;
    });
    read_section(tree, "data", [&](const std::string& k, const std::string& v, const std::string&) {
        if (k == "dir") c.data_dir = v;
        else if (k == "scene") c.scene = v;
        else return false;
        return true;
    });
    read_section(tree, "eval", [&](const std::string& k, const std::string& v, const std::string&) {
        if (k == "inference") c.inference = parse_inference_rule(text::trim(v));
        else return false;
        return true;
    });
    read_section(tree, "sweep", [&](const std::string& k, const std::string& v, const std::string& f) {
        if (k == "k_values") c.sweep_k = parse_sizes(f, v);
        else return false;
        return true;
    });
    return c;
}

inline void write_config(std::ostream& os, const RunConfig& c) {
    using namespace config_detail;
    ptree t;
    t.put("network.hidden_layers", join_sizes(c.hidden_layers));
    t.put("network.activation", to_string(c.activation));
    t.put("network.seed", std::to_string(c.network_seed));
    t.put("train.lr", fmt(c.train.lr));
    t.put("train.beta1", fmt(c.train.beta1));
    t.put("train.beta2", fmt(c.train.beta2));
    t.put("train.epsilon", fmt(c.train.epsilon));
    t.put("train.batch_size", std::to_string(c.train.batch_size));
    t.put("train.epochs", std::to_string(c.train.epochs));
    t.put("train.lr_halving_period", std::to_string(c.train.lr_halving_period));
    t.put("train.shuffle_seed", std::to_string(c.train.shuffle_seed));
    t.put("train.checkpoint_every", std::to_string(c.train.checkpoint_every));
    t.put("train.direct_regression", c.direct_regression ? "true" : "false");
    t.put("loss.alpha1", fmt(c.train.weights.alpha1));
    t.put("loss.alpha2", fmt(c.train.weights.alpha2));
    t.put("loss.alpha3", fmt(c.train.weights.alpha3));
    t.put("loss.use_cross_entropy", c.train.weights.use_cross_entropy ? "true" : "false");
    t.put("anchors.frame_interval", std::to_string(c.frame_interval));
    put_world(t, c.world);
    t.put("world.n_train", std::to_string(c.n_train));
    t.put("world.n_test", std::to_string(c.n_test));
    t.put("data.dir", c.data_dir);
    t.put("data.scene", c.scene);
    t.put("eval.inference", to_string(c.inference));
    t.put("sweep.k_values", join_sizes(c.sweep_k));
    write_ini(os, t);
}

inline RunConfig load_config(const std::filesystem::path& path, RunConfig base = {}) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    return read_config(in, std::move(base));
}

inline void save_config(const std::filesystem::path& path, const RunConfig& c) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write config " + path.string());
    write_config(out, c);
    if (!out) throw IoError("write failed for " + path.string());
}

// World spec files hold just the [world] section.
inline WorldSpec read_world(std::istream& is) {
    using namespace config_detail;
    const ptree tree = parse_ini(is);
    WorldSpec w;
    read_section(tree, "world", [&](const std::string& k, const std::string& v, const std::string& f) {
        return apply_world(w, k, v, f);
    });
    w.validate();
    return w;
}

inline void write_world(std::ostream& os, const WorldSpec& w) {
    using namespace config_detail;
    ptree t;
    put_world(t, w);
    write_ini(os, t);
}

inline WorldSpec load_world(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open world spec " + path.string());
    return read_world(in);
}

inline void save_world(const std::filesystem::path& path, const WorldSpec& w) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write world spec " + path.string());
    write_world(out, w);
}

}  // namespace anchorloc
