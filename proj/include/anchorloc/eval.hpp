#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "anchorloc/data.hpp"
#include "anchorloc/errors.hpp"
#include "anchorloc/geometry.hpp"
#include "anchorloc/loss.hpp"
#include "anchorloc/model.hpp"
#include "anchorloc/optim.hpp"
#include "anchorloc/simworld.hpp"
#include "anchorloc/text.hpp"

namespace anchorloc {

inline constexpr double kAccuracyTranslationM = 2.0;
inline constexpr double kAccuracyRotationDeg = 5.0;

enum class InferenceRule {
    argmax,    // best-confidence anchor plus its own offset
    weighted,  // confidence-weighted average of anchor + offset
};

inline std::string to_string(InferenceRule r) { return r == InferenceRule::argmax ? "argmax" : "weighted"; }

inline InferenceRule parse_inference_rule(std::string_view s) {
    if (s == "argmax") return InferenceRule::argmax;
    if (s == "weighted") return InferenceRule::weighted;
    throw InvalidSpec("unknown inference rule '" + std::string(s) + "'");
}

// First maximum wins.
inline std::size_t argmax(std::span<const double> v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

inline Pose reconstruct_pose(const PosePrediction& pred, const AnchorMap& map,
                             InferenceRule rule = InferenceRule::argmax) {
    if (pred.num_anchors() != map.size() || pred.offsets.size() != map.size()) {
        throw InvalidInput("prediction has " + std::to_string(pred.num_anchors()) + " anchors, map has " +
                           std::to_string(map.size()));
    }
    if (!(pred.orientation_raw().norm() > kMinOrientationNorm)) {
        throw DegenerateOrientation("predicted orientation has (near) zero norm");
    }
    Vec2 xy;
    if (rule == InferenceRule::argmax) {
        const std::size_t j = argmax(pred.logits);
        xy = map[j] + pred.offsets[j];
    } else {
        const auto c = confidences(pred.logits);
        for (std::size_t i = 0; i < c.size(); ++i) xy = xy + c[i] * (map[i] + pred.offsets[i]);
    }
    return Pose({xy.x, xy.y, pred.z_hat}, pred.orientation_raw());
}

// Even-length lists use the mean of the two middle values.
inline double median(std::vector<double> values) {
    if (values.empty()) throw InvalidInput("median of an empty list");
    const std::size_t mid = values.size() / 2;
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
    const double upper = values[mid];
    if (values.size() % 2 == 1) return upper;
    const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lower + upper);
}

struct SampleError {
    double translation_m = 0.0;
    double rotation_deg = 0.0;
    std::size_t predicted_anchor = 0;
    std::size_t nearest_anchor = 0;
};

inline bool is_accurate(const SampleError& e) {
    return e.translation_m < kAccuracyTranslationM && e.rotation_deg < kAccuracyRotationDeg;
}

struct EvalReport {
    double median_translation_m = 0.0;
    double mean_translation_m = 0.0;
    double median_rotation_deg = 0.0;
    double accuracy_2m_5deg = 0.0;
    std::vector<SampleError> per_sample;
};

inline EvalReport summarize(std::vector<SampleError> per_sample) {
    if (per_sample.empty()) throw InvalidInput("cannot summarize an empty evaluation");
    EvalReport r;
    std::vector<double> t;
    std::vector<double> rot;
    std::size_t hits = 0;
    for (const auto& e : per_sample) {
        t.push_back(e.translation_m);
        rot.push_back(e.rotation_deg);
        if (is_accurate(e)) ++hits;
    }
    r.median_translation_m = median(t);
    r.mean_translation_m = std::accumulate(t.begin(), t.end(), 0.0) / static_cast<double>(t.size());
    r.median_rotation_deg = median(rot);
    r.accuracy_2m_5deg = static_cast<double>(hits) / static_cast<double>(per_sample.size());
    r.per_sample = std::move(per_sample);
    return r;
}

inline SampleError pose_error(const Pose& predicted, const Pose& truth) {
    SampleError e;
    e.translation_m = norm(predicted.position() - truth.position());
    e.rotation_deg = quat_angle_deg(predicted.orientation(), truth.orientation());
    return e;
}

inline EvalReport evaluate(const Parameters& params, std::span<const Sample> test, const AnchorMap& map,
                           InferenceRule rule = InferenceRule::argmax) {
    if (test.empty()) throw InvalidInput("test set is empty");
    if (params.spec.num_anchors != map.size()) {
        throw InvalidInput("network predicts " + std::to_string(params.spec.num_anchors) +
                           " anchors but the anchor map has " + std::to_string(map.size()));
    }
    std::vector<SampleError> errors;
    errors.reserve(test.size());
    for (const auto& s : test) {
        const PosePrediction pred = forward(params, s.feature);
        SampleError e = pose_error(reconstruct_pose(pred, map, rule), s.pose);
        e.predicted_anchor = argmax(pred.logits);
        e.nearest_anchor = nearest_anchor(s.pose.position(), map);
        errors.push_back(e);
    }
    return summarize(std::move(errors));
}

// ---------------------------------------------------------------------------
// Anchor discovery: among samples whose nearest anchor's co-located landmark
// is not visible, how often the selected anchor has a visible co-located
// landmark.

struct DiscoveryResult {
    double rate = 0.0;
    std::size_t qualifying = 0;
    std::size_t discovered = 0;
};

inline bool contains(std::span<const int> ids, int id) { return std::find(ids.begin(), ids.end(), id) != ids.end(); }

// True when the nearest anchor of s carries a landmark that s cannot see.
inline bool nearest_landmark_occluded(const Sample& s, const AnchorMap& map,
                                      std::span<const std::optional<int>> colocated) {
    const auto& lm = colocated[nearest_anchor(s.pose.position(), map)];
    return lm.has_value() && !contains(s.visible_landmarks, *lm);
}

inline DiscoveryResult discovery_rate(std::span<const std::size_t> selected, std::span<const Sample> samples,
                                      const AnchorMap& map, std::span<const std::optional<int>> colocated) {
    if (selected.size() != samples.size()) throw InvalidInput("one selected anchor per sample expected");
    if (colocated.size() != map.size()) throw InvalidInput("co-location table does not match the anchor map");
    DiscoveryResult r;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (!nearest_landmark_occluded(samples[i], map, colocated)) continue;
        ++r.qualifying;
        if (selected[i] >= colocated.size()) throw InvalidInput("selected anchor index out of range");
        const auto& lm = colocated[selected[i]];
        if (lm.has_value() && contains(samples[i].visible_landmarks, *lm)) ++r.discovered;
    }
    if (r.qualifying == 0) throw UndefinedRate("no sample has an occluded nearest-anchor landmark");
    r.rate = static_cast<double>(r.discovered) / static_cast<double>(r.qualifying);
    return r;
}

inline DiscoveryResult discovery_rate(const Parameters& params, std::span<const Sample> samples, const AnchorMap& map,
                                      std::span<const std::optional<int>> colocated) {
    std::vector<std::size_t> selected;
    selected.reserve(samples.size());
    for (const auto& s : samples) selected.push_back(argmax(forward(params, s.feature).logits));
    return discovery_rate(selected, samples, map, colocated);
}

// Selecting the nearest anchor never discovers anything by construction; kept
// as the explicit baseline.
inline DiscoveryResult nearest_anchor_discovery(std::span<const Sample> samples, const AnchorMap& map,
                                                std::span<const std::optional<int>> colocated) {
    std::vector<std::size_t> selected;
    for (const auto& s : samples) selected.push_back(nearest_anchor(s.pose.position(), map));
    return discovery_rate(selected, samples, map, colocated);
}

// ---------------------------------------------------------------------------
// Anchor-interval sweep.

struct SweepRow {
    std::size_t k = 0;
    std::size_t num_anchors = 0;
    double median_m = 0.0;
    double median_deg = 0.0;
    double accuracy = 0.0;

    friend bool operator==(const SweepRow&, const SweepRow&) = default;
};

// Network spec for a dataset: feature dimension and anchor count are taken
// from the data, everything else from the template.
inline NetworkSpec spec_for(const NetworkSpec& tmpl, const SceneDataset& ds) {
    NetworkSpec spec = tmpl;
    spec.input_dim = ds.train.front().feature.size();
    spec.num_anchors = ds.anchor_map.size();
    return spec;
}

struct RunResult {
    TrainReport training;
    EvalReport eval;
    SceneDataset dataset;
};

inline RunResult train_and_evaluate(SceneDataset ds, const NetworkSpec& tmpl, const TrainConfig& config,
                                    InferenceRule rule = InferenceRule::argmax) {
    const auto examples = training_examples(ds);
    TrainReport report = train(examples, spec_for(tmpl, ds), config);
    EvalReport eval = evaluate(report.params, ds.test, ds.anchor_map, rule);
    return {std::move(report), std::move(eval), std::move(ds)};
}

inline std::vector<SweepRow> sweep_anchor_interval(std::span<const Sample> train_samples,
                                                   std::span<const Sample> test_samples,
                                                   std::span<const std::size_t> k_values, const NetworkSpec& tmpl,
                                                   const TrainConfig& config,
                                                   InferenceRule rule = InferenceRule::argmax) {
    if (k_values.empty()) throw InvalidInput("sweep needs at least one k value");
    std::vector<SweepRow> rows;
    for (std::size_t k : k_values) {
        SceneDataset ds = assemble("sweep", {train_samples.begin(), train_samples.end()},
                                   {test_samples.begin(), test_samples.end()}, k);
        const RunResult run = train_and_evaluate(std::move(ds), tmpl, config, rule);
        rows.push_back({k, run.dataset.anchor_map.size(), run.eval.median_translation_m, run.eval.median_rotation_deg,
                        run.eval.accuracy_2m_5deg});
    }
    return rows;
}

inline void write_sweep_csv(std::ostream& os, std::span<const SweepRow> rows) {
    os << "k,N,median_m,median_deg,accuracy\n";
    for (const auto& r : rows) {
        os << r.k << ',' << r.num_anchors << ',' << text::format17(r.median_m) << ',' << text::format17(r.median_deg)
           << ',' << text::format17(r.accuracy) << '\n';
    }
}

// Two stacked panels (median translation error and accuracy against k),
// plain SVG.
inline void write_sweep_svg(std::ostream& os, std::span<const SweepRow> rows) {
    const double w = 480.0;
    const double h = 200.0;
    const double pad = 48.0;
    double max_m = 0.0;
    for (const auto& r : rows) max_m = std::max(max_m, r.median_m);
    if (!(max_m > 0.0)) max_m = 1.0;
    auto px = [&](std::size_t i) {
        return rows.size() == 1 ? pad + (w - 2 * pad) / 2
                                : pad + (w - 2 * pad) * static_cast<double>(i) / static_cast<double>(rows.size() - 1);
    };
    auto panel = [&](double top, const char* label, auto value, double vmax) {
        os << "<g transform=\"translate(0," << text::format_shortest(top) << ")\">\n";
        os << "<text x=\"" << pad << "\" y=\"16\" font-size=\"12\">" << label << "</text>\n";
        os << "<line x1=\"" << pad << "\" y1=\"" << h - pad / 2 << "\" x2=\"" << w - pad << "\" y2=\"" << h - pad / 2
           << "\" stroke=\"black\"/>\n";
        os << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const double y = (h - pad / 2) - (h - pad) * value(rows[i]) / vmax;
            os << text::format_shortest(px(i)) << ',' << text::format_shortest(y) << ' ';
        }
        os << "\"/>\n";
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const double y = (h - pad / 2) - (h - pad) * value(rows[i]) / vmax;
            os << "<circle cx=\"" << text::format_shortest(px(i)) << "\" cy=\"" << text::format_shortest(y)
               << "\" r=\"3\" fill=\"steelblue\"/>\n";
            os << "<text x=\"" << text::format_shortest(px(i)) << "\" y=\"" << h - pad / 2 + 14
               << "\" font-size=\"10\" text-anchor=\"middle\">k=" << rows[i].k << "</text>\n";
        }
        os << "</g>\n";
    };
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << 2 * h << "\">\n";
    panel(0.0, "median translation error (m)", [](const SweepRow& r) { return r.median_m; }, max_m);
    panel(h, "accuracy (<2 m, <5 deg)", [](const SweepRow& r) { return r.accuracy; }, 1.0);
    os << "</svg>\n";
}

// ---------------------------------------------------------------------------
// Report files.

inline nlohmann::ordered_json report_json(const EvalReport& r, const std::optional<DiscoveryResult>& discovery) {
    nlohmann::ordered_json j;
    j["median_translation_m"] = r.median_translation_m;
    j["mean_translation_m"] = r.mean_translation_m;
    j["median_rotation_deg"] = r.median_rotation_deg;
    j["accuracy_2m_5deg"] = r.accuracy_2m_5deg;
    if (discovery) {
        j["discovery_rate"] = discovery->rate;
        j["discovery_qualifying"] = discovery->qualifying;
        j["discovery_discovered"] = discovery->discovered;
    }
    j["samples"] = r.per_sample.size();
    return j;
}

inline void write_report_json(std::ostream& os, const EvalReport& r, const std::optional<DiscoveryResult>& discovery) {
    os << report_json(r, discovery).dump(2) << '\n';
}

inline void write_per_sample_csv(std::ostream& os, const EvalReport& r, std::span<const Sample> samples) {
    os << "frame_id,translation_m,rotation_deg,predicted_anchor,nearest_anchor\n";
    for (std::size_t i = 0; i < r.per_sample.size(); ++i) {
        const auto& e = r.per_sample[i];
        os << (i < samples.size() ? samples[i].frame_id : std::to_string(i)) << ','
           << text::format17(e.translation_m) << ',' << text::format17(e.rotation_deg) << ',' << e.predicted_anchor
           << ',' << e.nearest_anchor << '\n';
    }
}

}  // namespace anchorloc
