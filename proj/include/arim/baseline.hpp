#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "arim/dataset.hpp"
#include "arim/evaluation.hpp"
#include "arim/timefreq.hpp"

namespace arim {

/// Zeroing threshold, relative to the per-signal median modulus.
struct ZeroingConfig {
    double threshold_factor = 3.0;
    std::vector<double> search_grid = default_grid();

    /// k in {1.5, 2.0, ..., 6.0}
    static std::vector<double> default_grid() {
        std::vector<double> g;
        for (int i = 3; i <= 12; ++i) g.push_back(i / 2.0);
        return g;
    }
};

inline double median_modulus(std::span<const cplx> signal) {
    std::vector<double> mags(signal.size());
    for (std::size_t i = 0; i < signal.size(); ++i) mags[i] = std::abs(signal[i]);
    return detail::median(std::move(mags));
}

/// Replaces every sample with |x[n]| > k * median(|x|) by zero.
inline Signal zero_clip(std::span<const cplx> signal, double k) {
    if (!(k > 0.0)) throw std::invalid_argument("zeroing factor must be positive");
    Signal out(signal.begin(), signal.end());
    if (signal.empty()) return out;
    const double threshold = k * median_modulus(signal);
    for (auto& v : out)
        if (std::abs(v) > threshold) v = {0.0, 0.0};
    return out;
}

inline Method zeroing_method(double k) {
    return [k](const SampleRecord& r) {
        return range_profile(zero_clip(to_signal(r.interfered), k)).magnitude_db;
    };
}

/// Grid point with the highest mean validation AUC; ties go to the smaller k.
inline double tune_threshold(std::span<const SampleRecord> validation, std::vector<double> grid,
                             const DetectionConfig& detection = {}, std::size_t threads = 1) {
    if (validation.empty()) throw std::invalid_argument("empty validation set");
    if (grid.empty()) throw std::invalid_argument("empty threshold grid");
    std::sort(grid.begin(), grid.end());
    double best_k = grid.front();
    double best_auc = -1.0;
    for (double k : grid) {
        std::vector<double> per_sample(validation.size());
        const auto method = zeroing_method(k);
        parallel_for(validation.size(), threads, [&](std::size_t i) {
            per_sample[i] = auc(method(validation[i]), validation[i].label_bins(), detection);
        });
        double mean = 0.0;
        for (double a : per_sample) mean += a;
        mean /= static_cast<double>(per_sample.size());
        if (mean > best_auc) {
            best_auc = mean;
            best_k = k;
        }
    }
    return best_k;
}

/// Range profile of the stored clean copy: the upper bound any method can reach.
inline RangeProfile oracle_profile(const SampleRecord& record) {
    return range_profile(to_signal(record.clean));
}

}  // namespace arim
