#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "anchorloc/errors.hpp"
#include "anchorloc/geometry.hpp"
#include "anchorloc/text.hpp"

namespace anchorloc {

enum class Activation { relu, tanh };

inline std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

inline Activation parse_activation(std::string_view s) {
    if (s == "relu") return Activation::relu;
    if (s == "tanh") return Activation::tanh;
    throw InvalidSpec("unknown activation '" + std::string(s) + "'");
}

// Output widths of the three heads.
inline constexpr std::size_t kAbsoluteOutputs = 5;  // z + 4 orientation components

struct NetworkSpec {
    std::size_t input_dim = 0;
    std::vector<std::size_t> hidden_layers;
    std::size_t num_anchors = 0;
    Activation activation = Activation::relu;
    std::uint64_t seed = 0;

    friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;

    void validate() const {
        if (input_dim == 0) throw InvalidSpec("input_dim must be positive");
        if (num_anchors == 0) throw InvalidSpec("num_anchors must be positive");
        for (std::size_t w : hidden_layers) {
            if (w == 0) throw InvalidSpec("hidden layer width must be positive");
        }
    }

    std::size_t trunk_width() const { return hidden_layers.empty() ? input_dim : hidden_layers.back(); }
};

// One dense layer y = W x + b inside the flat parameter vector. W is stored
// row-major (rows = outputs) and immediately followed by b.
struct DenseLayout {
    std::size_t in = 0;
    std::size_t out = 0;
    std::size_t offset = 0;

    std::size_t weight_offset() const { return offset; }
    std::size_t bias_offset() const { return offset + in * out; }
    std::size_t count() const { return in * out + out; }
};

struct NetworkLayout {
    std::vector<DenseLayout> trunk;
    DenseLayout classifier;
    DenseLayout offsets;
    DenseLayout absolute;
    std::size_t total = 0;

    explicit NetworkLayout(const NetworkSpec& spec) {
        spec.validate();
        std::size_t cursor = 0;
        std::size_t in = spec.input_dim;
        auto place = [&](std::size_t out) {
            DenseLayout l{in, out, cursor};
            cursor += l.count();
            return l;
        };
        for (std::size_t w : spec.hidden_layers) {
            trunk.push_back(place(w));
            in = w;
        }
        classifier = place(spec.num_anchors);
        offsets = place(2 * spec.num_anchors);
        absolute = place(kAbsoluteOutputs);
        total = cursor;
    }
};

inline std::size_t parameter_count(const NetworkSpec& spec) { return NetworkLayout(spec).total; }

struct Parameters {
    NetworkSpec spec;
    std::vector<double> values;

    friend bool operator==(const Parameters&, const Parameters&) = default;
};

// Raw network outputs. Gradients with respect to a prediction reuse the
// same layout (see PredictionGradient).
struct PosePrediction {
    std::vector<double> logits;
    std::vector<Vec2> offsets;
    double z_hat = 0.0;
    std::array<double, 4> orient_raw{};

    static PosePrediction zeros(std::size_t num_anchors) {
        PosePrediction p;
        p.logits.assign(num_anchors, 0.0);
        p.offsets.assign(num_anchors, Vec2{});
        return p;
    }

    std::size_t num_anchors() const { return logits.size(); }
    Quat orientation_raw() const { return {orient_raw[0], orient_raw[1], orient_raw[2], orient_raw[3]}; }

    friend bool operator==(const PosePrediction&, const PosePrediction&) = default;
};

using PredictionGradient = PosePrediction;

inline Parameters init(const NetworkSpec& spec) {
    const NetworkLayout layout(spec);
    Parameters params{spec, std::vector<double>(layout.total, 0.0)};
    std::mt19937_64 rng(spec.seed);
    auto fill = [&](const DenseLayout& l, double gain) {
        const double bound = std::sqrt(gain / static_cast<double>(l.in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (std::size_t i = 0; i < l.in * l.out; ++i) params.values[l.weight_offset() + i] = dist(rng);
    };
    const double hidden_gain = spec.activation == Activation::relu ? 6.0 : 3.0;
    for (const auto& l : layout.trunk) fill(l, hidden_gain);
    fill(layout.classifier, 3.0);
    fill(layout.offsets, 3.0);
    fill(layout.absolute, 3.0);
    // Orientation bias starts at the identity quaternion: an all-zero feature
    // would otherwise produce a zero-norm orientation.
    params.values[layout.absolute.bias_offset() + 1] = 1.0;
    return params;
}

namespace detail {

inline void dense_forward(std::span<const double> w, const DenseLayout& l, std::span<const double> x,
                          std::span<double> y) {
    const double* W = w.data() + l.weight_offset();
    const double* b = w.data() + l.bias_offset();
    for (std::size_t o = 0; o < l.out; ++o) {
        const double* row = W + o * l.in;
        double acc = 0.0;
        for (std::size_t i = 0; i < l.in; ++i) acc += row[i] * x[i];
        y[o] = acc + b[o];
    }
}

// Accumulates parameter gradients for one dense layer and, when dx is not
// empty, writes the gradient with respect to the layer input into dx.
inline void dense_backward(std::span<const double> w, const DenseLayout& l, std::span<const double> x,
                           std::span<const double> dy, std::span<double> grad, std::span<double> dx) {
    const double* W = w.data() + l.weight_offset();
    double* gW = grad.data() + l.weight_offset();
    double* gb = grad.data() + l.bias_offset();
    for (std::size_t o = 0; o < l.out; ++o) {
        const double d = dy[o];
        if (d == 0.0) continue;
        double* grow = gW + o * l.in;
        for (std::size_t i = 0; i < l.in; ++i) grow[i] += d * x[i];
        gb[o] += d;
    }
    if (dx.empty()) return;
    for (std::size_t o = 0; o < l.out; ++o) {
        const double d = dy[o];
        if (d == 0.0) continue;
        const double* row = W + o * l.in;
        for (std::size_t i = 0; i < l.in; ++i) dx[i] += d * row[i];
    }
}

inline double activate(Activation a, double z) { return a == Activation::relu ? (z > 0.0 ? z : 0.0) : std::tanh(z); }

inline double activate_grad(Activation a, double z, double y) {
    return a == Activation::relu ? (z > 0.0 ? 1.0 : 0.0) : 1.0 - y * y;
}

}  // namespace detail

// Intermediate values of one forward pass, kept so that backward does not
// have to recompute them.
struct ForwardTrace {
    std::vector<std::vector<double>> pre;   // per trunk layer, before activation
    std::vector<std::vector<double>> post;  // post[0] is the input
    PosePrediction prediction;

    std::span<const double> trunk_output() const { return post.back(); }
};

inline void check_parameters(const Parameters& params, const NetworkLayout& layout) {
    if (params.values.size() != layout.total) {
        throw InvalidInput("parameter vector has " + std::to_string(params.values.size()) + " entries, spec needs " +
                           std::to_string(layout.total));
    }
}

inline ForwardTrace forward_trace(const Parameters& params, std::span<const double> feature) {
    const NetworkSpec& spec = params.spec;
    const NetworkLayout layout(spec);
    check_parameters(params, layout);
    if (feature.size() != spec.input_dim) {
        throw InvalidInput("feature has dimension " + std::to_string(feature.size()) + ", network expects " +
                           std::to_string(spec.input_dim));
    }
    ForwardTrace t;
    t.post.emplace_back(feature.begin(), feature.end());
    for (const auto& l : layout.trunk) {
        std::vector<double> z(l.out);
        detail::dense_forward(params.values, l, t.post.back(), z);
        std::vector<double> a(l.out);
        for (std::size_t i = 0; i < l.out; ++i) a[i] = detail::activate(spec.activation, z[i]);
        t.pre.push_back(std::move(z));
        t.post.push_back(std::move(a));
    }
    const std::size_t n = spec.num_anchors;
    PosePrediction& p = t.prediction;
    p.logits.assign(n, 0.0);
    detail::dense_forward(params.values, layout.classifier, t.trunk_output(), p.logits);

    std::vector<double> off(2 * n);
    detail::dense_forward(params.values, layout.offsets, t.trunk_output(), off);
    p.offsets.resize(n);
    for (std::size_t i = 0; i < n; ++i) p.offsets[i] = {off[2 * i], off[2 * i + 1]};

    std::array<double, kAbsoluteOutputs> abs{};
    detail::dense_forward(params.values, layout.absolute, t.trunk_output(), abs);
    p.z_hat = abs[0];
    std::copy(abs.begin() + 1, abs.end(), p.orient_raw.begin());
    return t;
}

inline PosePrediction forward(const Parameters& params, std::span<const double> feature) {
    return forward_trace(params, feature).prediction;
}

// Adds d(loss)/d(params) for one sample into grad.
inline void accumulate_backward(const Parameters& params, const ForwardTrace& trace, const PredictionGradient& upstream,
                                std::span<double> grad) {
    const NetworkSpec& spec = params.spec;
    const NetworkLayout layout(spec);
    const std::size_t n = spec.num_anchors;
    if (upstream.logits.size() != n || upstream.offsets.size() != n) {
        throw InvalidInput("upstream gradient shape does not match the network's anchor count");
    }
    if (grad.size() != layout.total) throw InvalidInput("gradient buffer has the wrong length");

    const std::size_t width = spec.trunk_width();
    std::vector<double> d_trunk(width, 0.0);
    std::vector<double> d_off(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
        d_off[2 * i] = upstream.offsets[i].x;
        d_off[2 * i + 1] = upstream.offsets[i].y;
    }
    const std::array<double, kAbsoluteOutputs> d_abs{upstream.z_hat, upstream.orient_raw[0], upstream.orient_raw[1],
                                                     upstream.orient_raw[2], upstream.orient_raw[3]};
    const bool has_trunk = !layout.trunk.empty();
    std::span<double> dx = has_trunk ? std::span<double>(d_trunk) : std::span<double>();
    detail::dense_backward(params.values, layout.classifier, trace.trunk_output(), upstream.logits, grad, dx);
    detail::dense_backward(params.values, layout.offsets, trace.trunk_output(), d_off, grad, dx);
    detail::dense_backward(params.values, layout.absolute, trace.trunk_output(), d_abs, grad, dx);

    for (std::size_t li = layout.trunk.size(); li-- > 0;) {
        const auto& l = layout.trunk[li];
        std::vector<double> dz(l.out);
        for (std::size_t i = 0; i < l.out; ++i) {
            dz[i] = d_trunk[i] * detail::activate_grad(spec.activation, trace.pre[li][i], trace.post[li + 1][i]);
        }
        std::vector<double> d_in(li > 0 ? l.in : 0, 0.0);
        detail::dense_backward(params.values, l, trace.post[li], dz, grad, d_in);
        d_trunk = std::move(d_in);
    }
}

inline std::vector<double> backward(const Parameters& params, std::span<const double> feature,
                                    const PredictionGradient& upstream) {
    const ForwardTrace trace = forward_trace(params, feature);
    std::vector<double> grad(params.values.size(), 0.0);
    accumulate_backward(params, trace, upstream, grad);
    return grad;
}

// ---------------------------------------------------------------------------
// Checkpoint container.
//
//   anchorloc-checkpoint 1
//   input_dim <int>
//   hidden <w1> <w2> ...
//   num_anchors <int>
//   activation relu|tanh
//   seed <uint64>
//   frame_interval <int>
//   scene <name>
//   anchors <N>           followed by N lines "x y"
//   params <count>        followed by one value per line
//
// All doubles are written with 17 significant digits, so a load reproduces
// the bit pattern of every value.

inline constexpr std::string_view kCheckpointMagic = "anchorloc-checkpoint";
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
    Parameters params;
    AnchorMap anchors;

    friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

inline void write_checkpoint(std::ostream& os, const Checkpoint& ckpt) {
    const NetworkSpec& spec = ckpt.params.spec;
    os << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
    os << "input_dim " << spec.input_dim << '\n';
    os << "hidden";
    for (std::size_t w : spec.hidden_layers) os << ' ' << w;
    os << '\n';
    os << "num_anchors " << spec.num_anchors << '\n';
    os << "activation " << to_string(spec.activation) << '\n';
    os << "seed " << spec.seed << '\n';
    os << "frame_interval " << ckpt.anchors.frame_interval() << '\n';
    os << "scene " << ckpt.anchors.source_scene() << '\n';
    os << "anchors " << ckpt.anchors.size() << '\n';
    for (const Vec2& a : ckpt.anchors.anchors()) os << text::format17(a.x) << ' ' << text::format17(a.y) << '\n';
    os << "params " << ckpt.params.values.size() << '\n';
    for (double v : ckpt.params.values) os << text::format17(v) << '\n';
}

inline Checkpoint read_checkpoint(std::istream& is) {
    std::size_t line_no = 0;
    std::string line;
    auto next = [&]() -> std::vector<std::string_view> {
        if (!std::getline(is, line)) throw ParseError(line_no + 1, "unexpected end of checkpoint");
        ++line_no;
        return text::split_ws(line);
    };
    auto expect_key = [&](const std::vector<std::string_view>& tok, std::string_view key, std::size_t min_args) {
        if (tok.empty() || tok[0] != key || tok.size() < 1 + min_args) {
            throw ParseError(line_no, "expected '" + std::string(key) + "'");
        }
    };
    auto to_size = [&](std::string_view s) {
        auto v = text::parse_int<std::size_t>(s);
        if (!v) throw ParseError(line_no, "bad integer '" + std::string(s) + "'");
        return *v;
    };
    auto to_double = [&](std::string_view s) {
        auto v = text::parse_double(s);
        if (!v) throw ParseError(line_no, "bad number '" + std::string(s) + "'");
        return *v;
    };

    auto tok = next();
    if (tok.size() != 2 || tok[0] != kCheckpointMagic) throw ParseError(line_no, "not a checkpoint file");
    if (to_size(tok[1]) != kCheckpointVersion) throw ParseError(line_no, "unsupported checkpoint version");

    NetworkSpec spec;
    tok = next();
    expect_key(tok, "input_dim", 1);
    spec.input_dim = to_size(tok[1]);
    tok = next();
    expect_key(tok, "hidden", 0);
    for (std::size_t i = 1; i < tok.size(); ++i) spec.hidden_layers.push_back(to_size(tok[i]));
    tok = next();
    expect_key(tok, "num_anchors", 1);
    spec.num_anchors = to_size(tok[1]);
    tok = next();
    expect_key(tok, "activation", 1);
    spec.activation = parse_activation(tok[1]);
    tok = next();
    expect_key(tok, "seed", 1);
    auto seed = text::parse_int<std::uint64_t>(tok[1]);
    if (!seed) throw ParseError(line_no, "bad seed");
    spec.seed = *seed;
    tok = next();
    expect_key(tok, "frame_interval", 1);
    const std::size_t interval = to_size(tok[1]);
    tok = next();
    expect_key(tok, "scene", 0);
    std::string scene = tok.size() > 1 ? std::string(tok[1]) : std::string();
    tok = next();
    expect_key(tok, "anchors", 1);
    const std::size_t n_anchors = to_size(tok[1]);
    std::vector<Vec2> anchors;
    anchors.reserve(n_anchors);
    for (std::size_t i = 0; i < n_anchors; ++i) {
        tok = next();
        if (tok.size() != 2) throw ParseError(line_no, "expected 'x y' anchor line");
        anchors.push_back({to_double(tok[0]), to_double(tok[1])});
    }
    tok = next();
    expect_key(tok, "params", 1);
    const std::size_t count = to_size(tok[1]);
    std::vector<double> values;
    values.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        tok = next();
        if (tok.size() != 1) throw ParseError(line_no, "expected one parameter value");
        values.push_back(to_double(tok[0]));
    }
    if (spec.num_anchors != n_anchors) throw DataIntegrity("checkpoint anchor list does not match num_anchors");
    if (parameter_count(spec) != count) throw DataIntegrity("checkpoint parameter count does not match its spec");
    return Checkpoint{Parameters{std::move(spec), std::move(values)},
                      AnchorMap(std::move(anchors), interval, std::move(scene))};
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    write_checkpoint(os, ckpt);
    if (!os) throw IoError("failed writing '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint '" + path + "'");
    return read_checkpoint(is);
}

}  // namespace anchorloc
