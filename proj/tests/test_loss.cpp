#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "anchorloc/loss.hpp"
#include "support.hpp"

using namespace anchorloc;
using testing_support::rel_error;
using testing_support::uniform;

namespace {

long double ld_log_sum_exp(const std::vector<double>& v) {
    long double m = v[0];
    for (double x : v) m = std::max<long double>(m, x);
    long double s = 0;
    for (double x : v) s += std::exp((long double)x - m);
    return m + std::log(s);
}

struct Instance {
    PosePrediction pred;
    LossTarget target;
};

Instance random_instance(std::mt19937_64& rng, std::size_t n) {
    Instance in{PosePrediction::zeros(n), {}};
    for (std::size_t i = 0; i < n; ++i) {
        in.pred.logits[i] = uniform(rng, -3, 3);
        in.pred.offsets[i] = {uniform(rng, -2, 2), uniform(rng, -2, 2)};
        in.target.offsets.offsets.push_back({uniform(rng, -2, 2), uniform(rng, -2, 2)});
    }
    in.pred.z_hat = uniform(rng, -1, 1);
    for (double& q : in.pred.orient_raw) q = uniform(rng, -1, 1);
    in.target.z = uniform(rng, -1, 1);
    in.target.orientation = testing_support::random_unit_quat(rng);
    in.target.nearest = std::size_t(uniform(rng, 0, double(n))) % n;
    return in;
}

std::vector<double*> entries(PosePrediction& p) {
    std::vector<double*> out;
    for (double& l : p.logits) out.push_back(&l);
    for (Vec2& o : p.offsets) {
        out.push_back(&o.x);
        out.push_back(&o.y);
    }
    out.push_back(&p.z_hat);
    for (double& q : p.orient_raw) out.push_back(&q);
    return out;
}

}  // namespace

TEST(Confidences, Examples) {
    const auto a = confidences(std::vector<double>{0, 0});
    EXPECT_EQ(a[0], 0.5);
    EXPECT_EQ(a[1], 0.5);
    for (double c : {-1e6, 0.0, 3.5, 1e6}) {
        const auto u = confidences(std::vector<double>{c, c, c});
        for (double v : u) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
    }
}

TEST(Confidences, LargeLogitsAgainstHighPrecision) {
    const auto c = confidences(std::vector<double>{1000, 0});
    EXPECT_EQ(c[0], 1.0);
    EXPECT_NEAR(c[1], double(std::exp(-1000.0L)), 1e-300);
    EXPECT_TRUE(std::isfinite(c[1]));
}

TEST(Confidences, SumToOne) {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> l(1 + trial % 40);
        for (double& x : l) x = uniform(rng, -20, 20);
        const auto c = confidences(l);
        double s = 0;
        for (double v : c) {
            EXPECT_GT(v, 0.0);
            EXPECT_LT(v, 1.0 + 1e-15);
            s += v;
        }
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(OffsetLoss, HandEvaluation) {
    PosePrediction p = PosePrediction::zeros(2);
    const OffsetTable gt{{{1, 0}, {0, 2}}};
    EXPECT_DOUBLE_EQ(offset_loss(p, gt), 2.5);
}

TEST(OffsetLoss, OneHotConfidenceDegeneratesToSingleAnchor) {
    std::mt19937_64 rng(22);
    for (int trial = 0; trial < 100; ++trial) {
        Instance in = random_instance(rng, 5);
        const std::size_t j = trial % 5;
        for (double& l : in.pred.logits) l = 0.0;
        in.pred.logits[j] = 40.0;
        const Vec2 d = in.target.offsets[j] - in.pred.offsets[j];
        EXPECT_NEAR(offset_loss(in.pred, in.target.offsets), d.x * d.x + d.y * d.y, 1e-12);
    }
}

TEST(OffsetLoss, ZeroResidualsAndConvexity) {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 100; ++trial) {
        Instance in = random_instance(rng, 6);
        double lo = 1e300, hi = 0;
        for (std::size_t i = 0; i < 6; ++i) {
            const Vec2 d = in.target.offsets[i] - in.pred.offsets[i];
            lo = std::min(lo, d.x * d.x + d.y * d.y);
            hi = std::max(hi, d.x * d.x + d.y * d.y);
        }
        const double v = offset_loss(in.pred, in.target.offsets);
        EXPECT_GE(v, lo - 1e-12);
        EXPECT_LE(v, hi + 1e-12);
        in.pred.offsets = in.target.offsets.offsets;
        EXPECT_EQ(offset_loss(in.pred, in.target.offsets), 0.0);
    }
}

TEST(OffsetLoss, SizeMismatch) {
    EXPECT_THROW(offset_loss(PosePrediction::zeros(3), OffsetTable{{{0, 0}, {1, 1}}}), InvalidInput);
}

TEST(AbsoluteLoss, ScaleInvarianceAndDoubleCover) {
    std::mt19937_64 rng(24);
    for (int trial = 0; trial < 100; ++trial) {
        const Quat q = testing_support::random_unit_quat(rng);
        PosePrediction p = PosePrediction::zeros(1);
        p.z_hat = 0.7;
        const double c = std::exp(uniform(rng, -5, 5));
        p.orient_raw = {c * q.w, c * q.x, c * q.y, c * q.z};
        EXPECT_NEAR(absolute_loss(p, 0.7, q), 0.0, 1e-12);
        p.orient_raw = {-q.w, -q.x, -q.y, -q.z};
        EXPECT_NEAR(absolute_loss(p, 0.7, q), 4.0, 1e-12);
    }
}

TEST(AbsoluteLoss, OrientationTermInvariantToPositiveScaling) {
    std::mt19937_64 rng(25);
    for (int trial = 0; trial < 100; ++trial) {
        Instance in = random_instance(rng, 1);
        const double base = absolute_loss(in.pred, in.target.z, in.target.orientation);
        const double c = std::exp(uniform(rng, -3, 3));
        for (double& v : in.pred.orient_raw) v *= c;
        EXPECT_NEAR(absolute_loss(in.pred, in.target.z, in.target.orientation), base, 1e-12);
    }
}

TEST(AbsoluteLoss, MatchesHighPrecisionEvaluation) {
    std::mt19937_64 rng(26);
    for (int trial = 0; trial < 200; ++trial) {
        const Quat q = testing_support::random_unit_quat(rng);
        const Quat far = testing_support::random_unit_quat(rng);
        PosePrediction p = PosePrediction::zeros(1);
        p.z_hat = 1.0;
        p.orient_raw = {3 * far.w, 3 * far.x, 3 * far.y, 3 * far.z};
        long double n = 0;
        for (double v : p.orient_raw) n += (long double)v * v;
        n = std::sqrt(n);
        const long double dq[4] = {q.w - p.orient_raw[0] / n, q.x - p.orient_raw[1] / n, q.y - p.orient_raw[2] / n,
                                   q.z - p.orient_raw[3] / n};
        const long double want = 0.3L * 0.3L + dq[0] * dq[0] + dq[1] * dq[1] + dq[2] * dq[2] + dq[3] * dq[3];
        EXPECT_NEAR(absolute_loss(p, 1.3, q), double(want), 1e-12);
    }
}

TEST(AbsoluteLoss, DegenerateOrientationIsSignalled) {
    PosePrediction p = PosePrediction::zeros(1);
    EXPECT_THROW(absolute_loss(p, 0.0, Quat{1, 0, 0, 0}), DegenerateOrientation);
    p.orient_raw = {1e-13, 0, 0, 0};
    EXPECT_THROW(absolute_loss(p, 0.0, Quat{1, 0, 0, 0}), DegenerateOrientation);
}

TEST(CrossEntropy, Examples) {
    std::vector<double> l(5, 0.0);
    l[2] = 40.0;
    EXPECT_LT(cross_entropy_loss(l, 2), 1e-15);
    EXPECT_NEAR(cross_entropy_loss(std::vector<double>(4, 1.5), 1), std::log(4.0), 1e-15);
    EXPECT_THROW(cross_entropy_loss(std::vector<double>(4, 0.0), 4), InvalidInput);
}

TEST(CrossEntropy, MatchesHighPrecisionLogSumExp) {
    std::mt19937_64 rng(27);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> l(2 + trial % 30);
        for (double& x : l) x = uniform(rng, -50, 50);
        const std::size_t t = trial % l.size();
        const long double want = ld_log_sum_exp(l) - l[t];
        EXPECT_NEAR(cross_entropy_loss(l, t), double(want), 1e-12);
        EXPECT_NEAR(log_sum_exp(l), double(ld_log_sum_exp(l)), 1e-12);
    }
}

TEST(TotalLoss, BreakdownCombinesWeightedTerms) {
    std::mt19937_64 rng(28);
    for (int trial = 0; trial < 100; ++trial) {
        const Instance in = random_instance(rng, 4);
        LossWeights w{uniform(rng, 0, 3), uniform(rng, 0, 30), uniform(rng, 0, 2), trial % 2 == 0};
        const auto r = total_loss(in.pred, in.target, w).breakdown;
        const double want = (w.use_cross_entropy ? w.alpha1 * r.ce_term : 0.0) + w.alpha2 * r.offset_term +
                            w.alpha3 * r.absolute_term;
        EXPECT_NEAR(r.total, want, 1e-12);
        EXPECT_GE(r.offset_term, 0.0);
        EXPECT_GE(r.absolute_term, 0.0);
        EXPECT_GE(r.ce_term, 0.0);
    }
}

TEST(TotalLoss, ComponentIsolation) {
    std::mt19937_64 rng(29);
    for (int trial = 0; trial < 50; ++trial) {
        const Instance in = random_instance(rng, 4);
        const double ce = cross_entropy_loss(in.pred.logits, in.target.nearest);
        const double off = offset_loss(in.pred, in.target.offsets);
        const double abs = absolute_loss(in.pred, in.target.z, in.target.orientation);
        EXPECT_NEAR(total_loss(in.pred, in.target, {1.7, 0, 0, true}).breakdown.total, 1.7 * ce, 1e-12);
        EXPECT_NEAR(total_loss(in.pred, in.target, {0, 3.0, 0, false}).breakdown.total, 3.0 * off, 1e-12);
        EXPECT_NEAR(total_loss(in.pred, in.target, {0, 0, 0.4, false}).breakdown.total, 0.4 * abs, 1e-12);
        // alpha1 is ignored while the cross-entropy term is off
        EXPECT_EQ(total_loss(in.pred, in.target, {9.0, 3.0, 0.4, false}).breakdown.total,
                  total_loss(in.pred, in.target, {0.0, 3.0, 0.4, false}).breakdown.total);
    }
}

TEST(TotalLoss, HomogeneousInEachWeight) {
    std::mt19937_64 rng(30);
    const Instance in = random_instance(rng, 3);
    const auto one = total_loss(in.pred, in.target, {0, 5.0, 0, false}).breakdown.total;
    const auto two = total_loss(in.pred, in.target, {0, 10.0, 0, false}).breakdown.total;
    EXPECT_EQ(two, 2.0 * one);
}

TEST(TotalLoss, ZeroResidualsGiveZero) {
    std::mt19937_64 rng(31);
    Instance in = random_instance(rng, 4);
    in.pred.offsets = in.target.offsets.offsets;
    in.pred.z_hat = in.target.z;
    const Quat q = in.target.orientation;
    in.pred.orient_raw = {2 * q.w, 2 * q.x, 2 * q.y, 2 * q.z};
    const auto r = total_loss(in.pred, in.target, LossWeights{});
    EXPECT_NEAR(r.breakdown.total, 0.0, 1e-24);
    in.pred.orient_raw = {q.w, q.x, q.y, q.z};
    EXPECT_EQ(total_loss(in.pred, in.target, LossWeights{}).breakdown.total, 0.0);
}

TEST(TotalLoss, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(32);
    const double h = 1e-5;
    for (int trial = 0; trial < 100; ++trial) {
        Instance in = random_instance(rng, 1 + trial % 6);
        const LossWeights w{uniform(rng, 0.5, 3), uniform(rng, 1, 30), uniform(rng, 0.1, 2), trial % 2 == 1};
        PosePrediction grad = total_loss(in.pred, in.target, w).gradient;
        auto slots = entries(in.pred);
        auto gslots = entries(grad);
        for (std::size_t i = 0; i < slots.size(); ++i) {
            const double keep = *slots[i];
            *slots[i] = keep + h;
            const double up = total_loss(in.pred, in.target, w).breakdown.total;
            *slots[i] = keep - h;
            const double down = total_loss(in.pred, in.target, w).breakdown.total;
            *slots[i] = keep;
            EXPECT_LT(rel_error(*gslots[i], (up - down) / (2 * h)), 1e-4) << "entry " << i << " trial " << trial;
        }
    }
}
