#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "anchorloc/errors.hpp"
#include "anchorloc/loss.hpp"
#include "anchorloc/model.hpp"
#include "anchorloc/text.hpp"

namespace anchorloc {

struct TrainConfig {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::size_t batch_size = 32;
    std::size_t epochs = 120;
    std::size_t lr_halving_period = 30;
    std::uint64_t shuffle_seed = 0;
    std::size_t checkpoint_every = 0;  // 0 disables periodic checkpoints
    LossWeights weights;

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;

    void validate() const {
        if (!(lr > 0.0) || !std::isfinite(lr)) throw InvalidSpec("learning rate must be positive");
        if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
            throw InvalidSpec("Adam betas must lie in [0, 1)");
        }
        if (!(epsilon > 0.0)) throw InvalidSpec("Adam epsilon must be positive");
        if (batch_size < 1) throw InvalidSpec("batch_size must be >= 1");
        if (lr_halving_period < 1) throw InvalidSpec("lr_halving_period must be >= 1");
        weights.validate();
    }
};

// Step schedule: the base rate halves after every full period.
inline double lr_at(std::size_t epoch, const TrainConfig& config) {
    return config.lr * std::ldexp(1.0, -static_cast<int>(epoch / config.lr_halving_period));
}

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::uint64_t t = 0;

    static AdamState zeros(std::size_t n) { return {std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), 0}; }

    friend bool operator==(const AdamState&, const AdamState&) = default;
};

struct AdamHyper {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

class NonFiniteGradient : public Error {
public:
    explicit NonFiniteGradient(std::size_t index)
        : Error("non-finite gradient at parameter " + std::to_string(index)), index_(index) {}
    std::size_t index() const noexcept { return index_; }

private:
    std::size_t index_;
};

// Bias-corrected Adam update in place. The gradient is checked before
// anything is modified, so a throw leaves params and state untouched.
inline void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr,
                      const AdamHyper& hyper = {}) {
    if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
        throw InvalidInput("adam_step: parameter, gradient and state sizes differ");
    }
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (!std::isfinite(grads[i])) throw NonFiniteGradient(i);
    }
    ++state.t;
    const double t = static_cast<double>(state.t);
    const double c1 = 1.0 - std::pow(hyper.beta1, t);
    const double c2 = 1.0 - std::pow(hyper.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        state.m[i] = hyper.beta1 * state.m[i] + (1.0 - hyper.beta1) * g;
        state.v[i] = hyper.beta2 * state.v[i] + (1.0 - hyper.beta2) * g * g;
        const double m_hat = state.m[i] / c1;
        const double v_hat = state.v[i] / c2;
        params[i] -= lr * m_hat / (std::sqrt(v_hat) + hyper.epsilon);
    }
}

struct TrainingExample {
    std::vector<double> feature;
    LossTarget target;
};

struct EpochStats {
    std::size_t epoch = 0;
    double lr = 0.0;
    double total = 0.0;
    double offset = 0.0;
    double absolute = 0.0;
    double ce = 0.0;

    friend bool operator==(const EpochStats&, const EpochStats&) = default;
};

// Everything needed to continue a run exactly where it stopped.
struct TrainState {
    Parameters params;
    AdamState adam;
    std::size_t next_epoch = 0;
    std::vector<EpochStats> log;

    friend bool operator==(const TrainState&, const TrainState&) = default;
};

struct TrainReport {
    std::vector<EpochStats> epochs;
    Parameters params;
};

// Per-epoch permutation, derived from (shuffle_seed, epoch) only so that a
// resumed run reproduces the same order.
inline std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t shuffle_seed, std::size_t epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::seed_seq seq{static_cast<std::uint32_t>(shuffle_seed), static_cast<std::uint32_t>(shuffle_seed >> 32),
                      static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32)};
    std::mt19937_64 rng(seq);
    std::shuffle(order.begin(), order.end(), rng);
    return order;
}

// Called after every epoch with the up-to-date state; used for periodic
// checkpoints.
using EpochCallback = std::function<void(const TrainState&)>;

inline TrainState start_training(const NetworkSpec& spec) {
    Parameters params = init(spec);
    const std::size_t n = params.values.size();
    return TrainState{std::move(params), AdamState::zeros(n), 0, {}};
}

// Runs epochs [state.next_epoch, config.epochs). Batch gradients are the
// mean of per-sample gradients; the reported epoch losses are per-sample
// means evaluated before each batch update.
inline void continue_training(TrainState& state, std::span<const TrainingExample> data, const TrainConfig& config,
                              const EpochCallback& on_epoch = {}) {
    config.validate();
    if (data.empty()) throw InvalidInput("training set is empty");
    const NetworkSpec& spec = state.params.spec;
    for (const auto& ex : data) {
        if (ex.feature.size() != spec.input_dim) throw InvalidInput("training feature dimension mismatch");
        for (double v : ex.feature) {
            if (!std::isfinite(v)) throw InvalidInput("training feature contains a non-finite value");
        }
        if (ex.target.offsets.size() != spec.num_anchors) throw InvalidInput("training target anchor count mismatch");
    }
    const AdamHyper hyper{config.beta1, config.beta2, config.epsilon};
    std::vector<double> grad(state.params.values.size());

    for (std::size_t epoch = state.next_epoch; epoch < config.epochs; ++epoch) {
        const double lr = lr_at(epoch, config);
        const auto order = epoch_permutation(data.size(), config.shuffle_seed, epoch);
        EpochStats stats{epoch, lr, 0.0, 0.0, 0.0, 0.0};
        std::size_t batch = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch) {
            const std::size_t stop = std::min(order.size(), start + config.batch_size);
            std::fill(grad.begin(), grad.end(), 0.0);
            for (std::size_t j = start; j < stop; ++j) {
                const TrainingExample& ex = data[order[j]];
                const ForwardTrace trace = forward_trace(state.params, ex.feature);
                LossResult loss;
                try {
                    loss = total_loss(trace.prediction, ex.target, config.weights);
                } catch (const DegenerateOrientation& e) {
                    throw TrainingDivergence(epoch, batch, e.what());
                }
                if (!std::isfinite(loss.breakdown.total)) throw TrainingDivergence(epoch, batch, "non-finite loss");
                stats.total += loss.breakdown.total;
                stats.offset += loss.breakdown.offset_term;
                stats.absolute += loss.breakdown.absolute_term;
                stats.ce += loss.breakdown.ce_term;
                accumulate_backward(state.params, trace, loss.gradient, grad);
            }
            const double scale = 1.0 / static_cast<double>(stop - start);
            for (double& g : grad) g *= scale;
            try {
                adam_step(state.params.values, grad, state.adam, lr, hyper);
            } catch (const NonFiniteGradient& e) {
                throw TrainingDivergence(epoch, batch, e.what());
            }
        }
        const double inv = 1.0 / static_cast<double>(data.size());
        stats.total *= inv;
        stats.offset *= inv;
        stats.absolute *= inv;
        stats.ce *= inv;
        state.log.push_back(stats);
        state.next_epoch = epoch + 1;
        if (on_epoch) on_epoch(state);
    }
}

inline TrainReport train(std::span<const TrainingExample> data, const NetworkSpec& spec, const TrainConfig& config,
                         const EpochCallback& on_epoch = {}) {
    TrainState state = start_training(spec);
    if (config.epochs > 0) continue_training(state, data, config, on_epoch);
    return TrainReport{std::move(state.log), std::move(state.params)};
}

// ---------------------------------------------------------------------------
// Training log: CSV with header "epoch,lr,total,offset,absolute,ce".

inline void write_training_log(std::ostream& os, std::span<const EpochStats> log) {
    os << "epoch,lr,total,offset,absolute,ce\n";
    for (const auto& s : log) {
        os << s.epoch << ',' << text::format17(s.lr) << ',' << text::format17(s.total) << ','
           << text::format17(s.offset) << ',' << text::format17(s.absolute) << ',' << text::format17(s.ce) << '\n';
    }
}

// ---------------------------------------------------------------------------
// Resumable training state: a model checkpoint followed by
//
//   adam <t> <count>      then <count> lines "m v"
//   next_epoch <int>
//   log <rows>            then rows "epoch lr total offset absolute ce"

inline void write_train_state(std::ostream& os, const TrainState& state, const AnchorMap& anchors) {
    write_checkpoint(os, Checkpoint{state.params, anchors});
    os << "adam " << state.adam.t << ' ' << state.adam.m.size() << '\n';
    for (std::size_t i = 0; i < state.adam.m.size(); ++i) {
        os << text::format17(state.adam.m[i]) << ' ' << text::format17(state.adam.v[i]) << '\n';
    }
    os << "next_epoch " << state.next_epoch << '\n';
    os << "log " << state.log.size() << '\n';
    for (const auto& s : state.log) {
        os << s.epoch << ' ' << text::format17(s.lr) << ' ' << text::format17(s.total) << ' '
           << text::format17(s.offset) << ' ' << text::format17(s.absolute) << ' ' << text::format17(s.ce) << '\n';
    }
}

struct LoadedTrainState {
    TrainState state;
    AnchorMap anchors;
};

inline LoadedTrainState read_train_state(std::istream& is) {
    Checkpoint ckpt = read_checkpoint(is);
    std::string line;
    std::size_t row = 0;
    auto next = [&]() {
        if (!std::getline(is, line)) throw ParseError(row, "truncated training state");
        ++row;
        return text::split_ws(line);
    };
    auto num = [&](std::string_view s) {
        auto v = text::parse_double(s);
        if (!v) throw ParseError(row, "bad number in training state");
        return *v;
    };
    auto count = [&](std::string_view s) {
        auto v = text::parse_int<std::uint64_t>(s);
        if (!v) throw ParseError(row, "bad integer in training state");
        return *v;
    };
    TrainState st;
    st.params = std::move(ckpt.params);
    auto tok = next();
    if (tok.size() != 3 || tok[0] != "adam") throw ParseError(row, "expected 'adam'");
    st.adam.t = count(tok[1]);
    const std::size_t n = count(tok[2]);
    if (n != st.params.values.size()) throw DataIntegrity("Adam state size does not match parameters");
    st.adam.m.resize(n);
    st.adam.v.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        tok = next();
        if (tok.size() != 2) throw ParseError(row, "expected 'm v'");
        st.adam.m[i] = num(tok[0]);
        st.adam.v[i] = num(tok[1]);
    }
    tok = next();
    if (tok.size() != 2 || tok[0] != "next_epoch") throw ParseError(row, "expected 'next_epoch'");
    st.next_epoch = count(tok[1]);
    tok = next();
    if (tok.size() != 2 || tok[0] != "log") throw ParseError(row, "expected 'log'");
    const std::size_t rows = count(tok[1]);
    for (std::size_t i = 0; i < rows; ++i) {
        tok = next();
        if (tok.size() != 6) throw ParseError(row, "expected 6 log columns");
        st.log.push_back({count(tok[0]), num(tok[1]), num(tok[2]), num(tok[3]), num(tok[4]), num(tok[5])});
    }
    return {std::move(st), std::move(ckpt.anchors)};
}

}  // namespace anchorloc
