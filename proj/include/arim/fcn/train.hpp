#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "arim/fcn/adam.hpp"
#include "arim/fcn/model.hpp"
#include "arim/parallel.hpp"
#include "arim/rng.hpp"

namespace arim::fcn {

struct TrainConfig {
    std::size_t epochs = 100;
    std::size_t batch_size = 10;
    double learning_rate = 1e-5;
    double weight_decay = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t rng_seed = 0;
    std::size_t threads = 1;
    std::size_t cache_bytes = std::size_t{2} << 30;  // feature cache budget; beyond it features are recomputed

    void validate() const {
        if (epochs == 0 || batch_size == 0) throw std::invalid_argument("epochs and batch size must be positive");
        if (!(learning_rate > 0.0) || !(weight_decay >= 0.0) || !(epsilon > 0.0))
            throw std::invalid_argument("learning rate and epsilon must be positive, weight decay non-negative");
        if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
            throw std::invalid_argument("adam betas must lie in [0, 1)");
    }

    AdamConfig adam() const { return {learning_rate, weight_decay, beta1, beta2, epsilon}; }
};

struct EpochStats {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
    std::vector<EpochStats> history;  // entry 0 holds the losses of the untrained model
    std::size_t best_epoch = 0;
};

inline std::string history_csv(const TrainResult& r) {
    std::string out = "epoch,train_loss,val_loss\n";
    char line[96];
    for (const auto& e : r.history) {
        std::snprintf(line, sizeof line, "%zu,%.9g,%.9g\n", e.epoch, e.train_loss, e.val_loss);
        out += line;
    }
    return out;
}

/// Sets the model's input/target maps from the global dB min/max of a split.
inline void fit_normalization(FcnModel& model, std::span<const SampleRecord> records, std::size_t threads = 1) {
    if (records.empty()) throw std::invalid_argument("cannot normalize on an empty training split");
    struct Range {
        double in_lo, in_hi, out_lo, out_hi;
    };
    std::vector<Range> ranges(records.size());
    parallel_for(records.size(), threads, [&](std::size_t i) {
        const auto s = stft(to_signal(records[i].interfered), model.stft);
        const auto p = range_profile(to_signal(records[i].clean), model.output_len());
        const auto [a, b] = std::minmax_element(s.db_image.begin(), s.db_image.end());
        const auto [c, d] = std::minmax_element(p.magnitude_db.begin(), p.magnitude_db.end());
        ranges[i] = {*a, *b, *c, *d};
    });
    Range all = ranges.front();
    for (const auto& r : ranges) {
        all.in_lo = std::min(all.in_lo, r.in_lo);
        all.in_hi = std::max(all.in_hi, r.in_hi);
        all.out_lo = std::min(all.out_lo, r.out_lo);
        all.out_hi = std::max(all.out_hi, r.out_hi);
    }
    auto& n = model.normalization;
    std::tie(n.input_offset, n.input_scale) = Normalization::from_range(all.in_lo, all.in_hi);
    std::tie(n.target_offset, n.target_scale) = Normalization::from_range(all.out_lo, all.out_hi);
    n.validate();
}

namespace detail {

/// Normalized (input, target) pairs, cached when they fit the budget.
class FeatureSet {
public:
    FeatureSet(const FcnModel& model, std::span<const SampleRecord> records, std::size_t cache_bytes,
               std::size_t threads)
        : model_(model), records_(records) {
        const auto& a = model.architecture();
        const std::size_t per_sample = (a.input_height + 1) * a.width * sizeof(float);
        if (per_sample * records.size() <= cache_bytes) {
            inputs_.resize(records.size());
            targets_.resize(records.size());
            parallel_for(records.size(), threads, [&](std::size_t i) {
                inputs_[i] = model_input(model, to_signal(records[i].interfered));
                targets_[i] = model_target(model, to_signal(records[i].clean));
            });
        }
    }

    std::size_t size() const { return records_.size(); }

    template <typename Fn>
    void with(std::size_t i, Fn&& fn) const {
        if (!inputs_.empty()) {
            fn(inputs_[i], targets_[i]);
        } else {
            fn(model_input(model_, to_signal(records_[i].interfered)),
               model_target(model_, to_signal(records_[i].clean)));
        }
    }

private:
    const FcnModel& model_;
    std::span<const SampleRecord> records_;
    std::vector<Tensor<float>> inputs_;
    std::vector<std::vector<float>> targets_;
};

inline double mean_loss(const Network<float>& net, const FeatureSet& data, std::size_t threads) {
    if (data.size() == 0) return std::numeric_limits<double>::quiet_NaN();
    std::vector<double> losses(data.size());
    parallel_for(data.size(), threads, [&](std::size_t i) {
        data.with(i, [&](const Tensor<float>& x, const std::vector<float>& y) {
            const auto out = net.forward(x);
            losses[i] = mse_loss<float>(out.data, y);
        });
    });
    return std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(losses.size());
}

}  // namespace detail

/// Loss and parameter gradient of one mini-batch: the mean of the per-sample
/// MSE values. Per-sample gradients are reduced in ascending index order, so
/// the result depends neither on the order of `batch` nor on the thread count.
inline double batch_gradient(const Network<float>& net, const detail::FeatureSet& data,
                             std::vector<std::size_t> batch, std::vector<float>& grad, std::size_t threads) {
    std::sort(batch.begin(), batch.end());
    const std::size_t p = net.parameter_count();
    std::vector<std::vector<float>> per_sample(batch.size(), std::vector<float>(p, 0.0f));
    std::vector<double> losses(batch.size());
    const double scale = 1.0 / static_cast<double>(batch.size());
    parallel_for(batch.size(), threads, [&](std::size_t b) {
        data.with(batch[b], [&](const Tensor<float>& x, const std::vector<float>& y) {
            Workspace<float> ws;
            const auto& out = net.forward(x, ws);
            Tensor<float> g(out.channels, out.height, out.width);
            losses[b] = mse_loss<float>(out.data, y, g.data, scale);
            net.backward(ws, g, per_sample[b]);
        });
    });
    std::vector<double> acc(p, 0.0);
    for (const auto& s : per_sample)
        for (std::size_t i = 0; i < p; ++i) acc[i] += s[i];
    grad.resize(p);
    for (std::size_t i = 0; i < p; ++i) grad[i] = static_cast<float>(acc[i]);
    double loss = 0.0;
    for (double l : losses) loss += l;
    return loss * scale;
}

/// Mini-batch Adam training. Normalization is fitted on `train` first. The
/// model returned in place holds the parameters of the epoch with the lowest
/// validation loss (the last epoch when `validation` is empty).
inline TrainResult train(FcnModel& model, std::span<const SampleRecord> train_set,
                         std::span<const SampleRecord> validation, const TrainConfig& config,
                         const std::function<void(const EpochStats&)>& on_epoch = {}) {
    config.validate();
    if (train_set.empty()) throw std::invalid_argument("empty training split");
    fit_normalization(model, train_set, config.threads);
    const detail::FeatureSet train_data(model, train_set, config.cache_bytes, config.threads);
    const detail::FeatureSet val_data(model, validation, config.cache_bytes, config.threads);

    auto& net = model.network;
    TrainResult result;
    EpochStats initial{0, detail::mean_loss(net, train_data, config.threads),
                       detail::mean_loss(net, val_data, config.threads)};
    result.history.push_back(initial);
    if (on_epoch) on_epoch(initial);

    std::vector<float> best = {net.parameters().begin(), net.parameters().end()};
    double best_val = validation.empty() ? std::numeric_limits<double>::infinity() : initial.val_loss;

    const AdamConfig adam = config.adam();
    AdamState state;
    std::uint64_t step = 0;
    Rng rng(derive_seed(config.rng_seed, 0x7261696eULL));
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<float> grad;

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
        double sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                           order.begin() + static_cast<std::ptrdiff_t>(end));
            const double loss = batch_gradient(net, train_data, std::move(batch), grad, config.threads);
            if (!std::isfinite(loss))
                throw std::runtime_error("non-finite training loss at epoch " + std::to_string(epoch) +
                                         ", batch " + std::to_string(batches + 1));
            adam_step<float>(net.parameters(), grad, adam, state, ++step);
            sum += loss;
            ++batches;
        }
        EpochStats stats{epoch, sum / static_cast<double>(batches),
                         detail::mean_loss(net, val_data, config.threads)};
        result.history.push_back(stats);
        if (on_epoch) on_epoch(stats);
        if (validation.empty() || stats.val_loss < best_val) {
            best_val = validation.empty() ? best_val : stats.val_loss;
            best.assign(net.parameters().begin(), net.parameters().end());
            result.best_epoch = epoch;
        }
    }

    std::copy(best.begin(), best.end(), net.parameters().begin());
    model.metadata.epochs_seen += config.epochs;
    model.metadata.best_epoch = result.best_epoch;
    model.metadata.final_train_loss = result.history.back().train_loss;
    model.metadata.final_val_loss = validation.empty() ? 0.0 : result.history[result.best_epoch].val_loss;
    return result;
}

}  // namespace arim::fcn
