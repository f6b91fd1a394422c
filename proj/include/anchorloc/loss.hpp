#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "anchorloc/errors.hpp"
#include "anchorloc/geometry.hpp"
#include "anchorloc/model.hpp"

namespace anchorloc {

struct LossWeights {
    double alpha1 = 2.0;   // cross-entropy against the nearest anchor
    double alpha2 = 10.0;  // confidence-weighted offsets
    double alpha3 = 1.0;   // absolute z + orientation
    bool use_cross_entropy = false;

    friend bool operator==(const LossWeights&, const LossWeights&) = default;

    void validate() const {
        for (double a : {alpha1, alpha2, alpha3}) {
            if (!std::isfinite(a) || a < 0.0) throw InvalidSpec("loss weights must be finite and non-negative");
        }
    }
};

struct LossBreakdown {
    double offset_term = 0.0;
    double absolute_term = 0.0;
    double ce_term = 0.0;
    double total = 0.0;
};

// Ground truth for one sample, already expressed against a fixed anchor map.
struct LossTarget {
    OffsetTable offsets;
    double z = 0.0;
    Quat orientation;
    std::size_t nearest = 0;
};

inline constexpr double kMinOrientationNorm = 1e-12;

inline double log_sum_exp(std::span<const double> logits) {
    const double m = *std::max_element(logits.begin(), logits.end());
    double s = 0.0;
    for (double l : logits) s += std::exp(l - m);
    return m + std::log(s);
}

// Softmax with the maximum subtracted before exponentiation.
inline std::vector<double> confidences(std::span<const double> logits) {
    if (logits.empty()) throw InvalidInput("confidences of an empty logit vector");
    const double m = *std::max_element(logits.begin(), logits.end());
    std::vector<double> c(logits.size());
    double s = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        c[i] = std::exp(logits[i] - m);
        s += c[i];
    }
    for (double& v : c) v /= s;
    return c;
}

namespace detail {

inline void check_offsets(const PosePrediction& pred, const OffsetTable& gt) {
    if (pred.offsets.size() != gt.size() || pred.logits.size() != gt.size()) {
        throw InvalidInput("prediction has " + std::to_string(pred.logits.size()) + " anchors, ground truth has " +
                           std::to_string(gt.size()));
    }
}

inline double squared_residual(Vec2 gt, Vec2 pred) {
    const double dx = gt.x - pred.x;
    const double dy = gt.y - pred.y;
    return dx * dx + dy * dy;
}

}  // namespace detail

// sum_i [(X_i - Xhat_i)^2 + (Y_i - Yhat_i)^2] * softmax(logits)_i
inline double offset_loss(const PosePrediction& pred, const OffsetTable& gt) {
    detail::check_offsets(pred, gt);
    const auto c = confidences(pred.logits);
    double loss = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) loss += detail::squared_residual(gt[i], pred.offsets[i]) * c[i];
    return loss;
}

namespace detail {

// P / |P|, keeping P's bits when it is already unit to rounding precision so
// that a prediction equal to the ground truth has exactly zero loss.
inline std::array<double, 4> unit_orientation(const Quat& raw) {
    const double n = raw.norm();
    if (!(n > kMinOrientationNorm)) throw DegenerateOrientation("predicted orientation has (near) zero norm");
    if (std::abs(n - 1.0) <= 4.0 * std::numeric_limits<double>::epsilon()) return {raw.w, raw.x, raw.y, raw.z};
    return {raw.w / n, raw.x / n, raw.y / n, raw.z / n};
}

}  // namespace detail

// (z - zhat)^2 + || q - P / ||P|| ||^2. Deliberately not sign-invariant in q.
inline double absolute_loss(const PosePrediction& pred, double gt_z, const Quat& gt_orient) {
    const auto u = detail::unit_orientation(pred.orientation_raw());
    const double dz = gt_z - pred.z_hat;
    const double ew = gt_orient.w - u[0];
    const double ex = gt_orient.x - u[1];
    const double ey = gt_orient.y - u[2];
    const double ez = gt_orient.z - u[3];
    return dz * dz + ew * ew + ex * ex + ey * ey + ez * ez;
}

// -log softmax(logits)[nearest], evaluated as logsumexp - logit.
inline double cross_entropy_loss(std::span<const double> logits, std::size_t nearest) {
    if (nearest >= logits.size()) {
        throw InvalidInput("nearest anchor index " + std::to_string(nearest) + " out of range for " +
                           std::to_string(logits.size()) + " anchors");
    }
    return log_sum_exp(logits) - logits[nearest];
}

struct LossResult {
    LossBreakdown breakdown;
    PredictionGradient gradient;
};

// Weighted total and its exact gradient with respect to every prediction
// entry. The softmax is differentiated through, so the classifier learns from
// the offset residuals even when the cross-entropy term is off.
inline LossResult total_loss(const PosePrediction& pred, const LossTarget& target, const LossWeights& w) {
    detail::check_offsets(pred, target.offsets);
    const std::size_t n = pred.num_anchors();
    LossResult r;
    r.gradient = PredictionGradient::zeros(n);
    LossBreakdown& b = r.breakdown;

    const auto c = confidences(pred.logits);
    std::vector<double> residual(n);
    for (std::size_t i = 0; i < n; ++i) {
        residual[i] = detail::squared_residual(target.offsets[i], pred.offsets[i]);
        b.offset_term += residual[i] * c[i];
    }
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2 e = target.offsets[i] - pred.offsets[i];
        r.gradient.offsets[i] = {-2.0 * w.alpha2 * c[i] * e.x, -2.0 * w.alpha2 * c[i] * e.y};
        r.gradient.logits[i] = w.alpha2 * c[i] * (residual[i] - b.offset_term);
    }

    b.absolute_term = absolute_loss(pred, target.z, target.orientation);
    r.gradient.z_hat = -2.0 * w.alpha3 * (target.z - pred.z_hat);
    {
        const Quat raw = pred.orientation_raw();
        const double norm_p = raw.norm();
        const std::array<double, 4> u = detail::unit_orientation(raw);
        const std::array<double, 4> q{target.orientation.w, target.orientation.x, target.orientation.y,
                                      target.orientation.z};
        // dL/du = -2 (q - u); du/dP = (I - u u^T) / |P|
        std::array<double, 4> g{};
        double gu = 0.0;
        for (int k = 0; k < 4; ++k) {
            g[k] = -2.0 * (q[k] - u[k]);
            gu += g[k] * u[k];
        }
        for (int k = 0; k < 4; ++k) r.gradient.orient_raw[k] = w.alpha3 * (g[k] - gu * u[k]) / norm_p;
    }

    // The cross-entropy value is reported even when it is not part of the
    // objective.
    b.ce_term = cross_entropy_loss(pred.logits, target.nearest);
    if (w.use_cross_entropy) {
        for (std::size_t i = 0; i < n; ++i) {
            r.gradient.logits[i] += w.alpha1 * (c[i] - (i == target.nearest ? 1.0 : 0.0));
        }
    }

    b.total = (w.use_cross_entropy ? w.alpha1 * b.ce_term : 0.0) + w.alpha2 * b.offset_term +
              w.alpha3 * b.absolute_term;
    return r;
}

}  // namespace anchorloc
