#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "arim/dataset.hpp"
#include "arim/parallel.hpp"
#include "arim/timefreq.hpp"

namespace arim {

/// Detection geometry shared by all metrics.
struct DetectionConfig {
    std::size_t match_tolerance_bins = 1;  // a target counts if its +-tolerance window crosses the threshold
    std::size_t guard_band_bins = 3;       // bins within +-guard of a target are never false alarms
    std::size_t threshold_count = 512;     // 0 sweeps every distinct profile value instead
};

namespace detail {

inline std::pair<std::size_t, std::size_t> window(std::size_t center, std::size_t half,
                                                  std::size_t len) {
    const std::size_t lo = center >= half ? center - half : 0;
    const std::size_t hi = std::min(len - 1, center + half);
    return {lo, hi};
}

inline void check_bins(std::span<const std::uint32_t> bins, std::size_t len) {
    if (bins.empty()) throw std::invalid_argument("label has no targets");
    for (auto b : bins)
        if (b >= len) throw std::invalid_argument("label bin " + std::to_string(b) + " outside profile");
}

/// Bins that are not within +-guard of any target.
inline std::vector<bool> noise_mask(std::span<const std::uint32_t> bins, std::size_t len,
                                    std::size_t guard) {
    std::vector<bool> noise(len, true);
    for (auto b : bins) {
        const auto [lo, hi] = window(b, guard, len);
        for (std::size_t i = lo; i <= hi; ++i) noise[i] = false;
    }
    return noise;
}

inline std::size_t argmax_in(std::span<const double> p, std::size_t center, std::size_t half) {
    const auto [lo, hi] = window(center, half, p.size());
    std::size_t best = lo;
    for (std::size_t i = lo + 1; i <= hi; ++i)
        if (p[i] > p[best]) best = i;
    return best;
}

inline double median(std::vector<double> v) {
    if (v.empty()) throw std::invalid_argument("median of empty set");
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double upper = v[mid];
    if (v.size() % 2 == 1) return upper;
    const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lower + upper);
}

}  // namespace detail

/// Area under the ROC curve of a threshold sweep over one profile.
/// At each level t, TPR is the fraction of targets whose +-tolerance window
/// holds a value >= t and FPR the fraction of non-guard bins >= t. The curve
/// is closed with (0,0) and (1,1) and integrated with the trapezoid rule.
inline double auc(std::span<const double> profile, std::span<const std::uint32_t> label_bins,
                  const DetectionConfig& config = {}) {
    const std::size_t len = profile.size();
    detail::check_bins(label_bins, len);
    const auto noise = detail::noise_mask(label_bins, len, config.guard_band_bins);

    std::vector<double> target_peaks;
    for (auto b : label_bins)
        target_peaks.push_back(profile[detail::argmax_in(profile, b, config.match_tolerance_bins)]);
    std::vector<double> noise_values;
    for (std::size_t i = 0; i < len; ++i)
        if (noise[i]) noise_values.push_back(profile[i]);
    std::sort(target_peaks.begin(), target_peaks.end());
    std::sort(noise_values.begin(), noise_values.end());

    std::vector<double> levels;
    const auto [mn, mx] = std::minmax_element(profile.begin(), profile.end());
    if (config.threshold_count == 0) {
        levels.assign(profile.begin(), profile.end());
        std::sort(levels.begin(), levels.end());
        levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
    } else if (*mn == *mx) {
        levels.push_back(*mn);
    } else {
        const std::size_t n = config.threshold_count;
        for (std::size_t i = 0; i < n; ++i)
            levels.push_back(*mn + (*mx - *mn) * static_cast<double>(i) / static_cast<double>(n - 1));
        levels.back() = *mx;
    }

    auto fraction_at_least = [](const std::vector<double>& sorted, double t) {
        if (sorted.empty()) return 0.0;
        const auto it = std::lower_bound(sorted.begin(), sorted.end(), t);
        return static_cast<double>(sorted.end() - it) / static_cast<double>(sorted.size());
    };

    std::vector<std::pair<double, double>> roc;  // (fpr, tpr)
    roc.reserve(levels.size() + 2);
    roc.emplace_back(0.0, 0.0);
    for (double t : levels)
        roc.emplace_back(fraction_at_least(noise_values, t), fraction_at_least(target_peaks, t));
    roc.emplace_back(1.0, 1.0);
    std::sort(roc.begin(), roc.end());

    double area = 0.0;
    for (std::size_t i = 1; i < roc.size(); ++i)
        area += (roc[i].first - roc[i - 1].first) * 0.5 * (roc[i].second + roc[i - 1].second);
    return area;
}

/// Mean over targets of |pred_dB[b*] - clean_dB[b*]|, b* being the peak
/// within +-tolerance of the target bin on each profile separately.
inline double mae_db(std::span<const double> predicted_db, std::span<const double> clean_db,
                     std::span<const std::uint32_t> label_bins, const DetectionConfig& config = {}) {
    if (predicted_db.size() != clean_db.size())
        throw std::invalid_argument("profile lengths differ");
    detail::check_bins(label_bins, clean_db.size());
    double total = 0.0;
    for (auto b : label_bins) {
        const double p = predicted_db[detail::argmax_in(predicted_db, b, config.match_tolerance_bins)];
        const double c = clean_db[detail::argmax_in(clean_db, b, config.match_tolerance_bins)];
        total += std::abs(p - c);
    }
    return total / static_cast<double>(label_bins.size());
}

/// Peak dB near `bin` minus the median dB of the non-guard bins.
inline double profile_snr_db(std::span<const double> profile_db, std::uint32_t bin,
                             std::span<const std::uint32_t> label_bins,
                             const DetectionConfig& config = {}) {
    const auto noise = detail::noise_mask(label_bins, profile_db.size(), config.guard_band_bins);
    std::vector<double> floor;
    for (std::size_t i = 0; i < profile_db.size(); ++i)
        if (noise[i]) floor.push_back(profile_db[i]);
    const double peak = profile_db[detail::argmax_in(profile_db, bin, config.match_tolerance_bins)];
    return peak - detail::median(std::move(floor));
}

/// SNR gain of the strongest target: SNR(after) - SNR(before).
inline double delta_snr(std::span<const double> before_db, std::span<const double> after_db,
                        std::span<const StoredLabel> label, const DetectionConfig& config = {}) {
    if (label.empty()) throw std::invalid_argument("label has no targets");
    if (before_db.size() != after_db.size()) throw std::invalid_argument("profile lengths differ");
    std::vector<std::uint32_t> bins;
    for (const auto& l : label) bins.push_back(l.bin);
    detail::check_bins(bins, before_db.size());
    const auto strongest = std::max_element(label.begin(), label.end(), [](const auto& a, const auto& b) {
        return std::abs(a.value) < std::abs(b.value);
    });
    return profile_snr_db(after_db, strongest->bin, bins, config) -
           profile_snr_db(before_db, strongest->bin, bins, config);
}

// ---------------------------------------------------------------------------
// Batch evaluation
// ---------------------------------------------------------------------------

/// A mitigation method maps a record to a dB magnitude profile. The record is
/// passed whole so the oracle can reach the clean copy; every other method
/// only reads the interfered signal.
using Method = std::function<std::vector<double>(const SampleRecord&)>;

inline std::vector<double> interfered_profile_db(const SampleRecord& r) {
    return range_profile(to_signal(r.interfered)).magnitude_db;
}

inline std::vector<double> clean_profile_db(const SampleRecord& r) {
    return range_profile(to_signal(r.clean)).magnitude_db;
}

inline Method identity_method() { return interfered_profile_db; }
inline Method oracle_method() { return clean_profile_db; }

struct SampleMetrics {
    std::uint64_t sample_id = 0;
    double auc = 0.0;
    double mae_db = 0.0;
    double delta_snr_db = 0.0;
    bool operator==(const SampleMetrics&) const = default;
};

struct EvalReport {
    std::string method;
    std::string split;
    double mean_auc = 0.0;
    double mae_db = 0.0;
    double mean_delta_snr_db = 0.0;
    std::vector<SampleMetrics> samples;

    /// Recomputes the aggregates from the per-sample records.
    void finalize() {
        mean_auc = mae_db = mean_delta_snr_db = 0.0;
        if (samples.empty()) return;
        for (const auto& s : samples) {
            mean_auc += s.auc;
            mae_db += s.mae_db;
            mean_delta_snr_db += s.delta_snr_db;
        }
        const auto n = static_cast<double>(samples.size());
        mean_auc /= n;
        mae_db /= n;
        mean_delta_snr_db /= n;
    }
};

inline SampleMetrics score_sample(const SampleRecord& r, const std::vector<double>& output_db,
                                  const DetectionConfig& config) {
    const auto clean_db = clean_profile_db(r);
    const auto before_db = interfered_profile_db(r);
    if (output_db.size() != clean_db.size())
        throw std::runtime_error("method produced " + std::to_string(output_db.size()) +
                                 " bins, expected " + std::to_string(clean_db.size()));
    const auto bins = r.label_bins();
    SampleMetrics m;
    m.sample_id = r.sample_id;
    m.auc = auc(output_db, bins, config);
    m.mae_db = mae_db(output_db, clean_db, bins, config);
    m.delta_snr_db = delta_snr(before_db, output_db, r.label, config);
    return m;
}

inline EvalReport evaluate(const Method& method, std::span<const SampleRecord> records,
                           const DetectionConfig& config = {}, std::string method_name = "",
                           std::string split_name = "", std::size_t threads = 1) {
    EvalReport report;
    report.method = std::move(method_name);
    report.split = std::move(split_name);
    report.samples.resize(records.size());
    parallel_for(records.size(), threads, [&](std::size_t i) {
        const auto& r = records[i];
        try {
            report.samples[i] = score_sample(r, method(r), config);
        } catch (const std::exception& e) {
            throw std::runtime_error("sample " + std::to_string(r.sample_id) + ": " + e.what());
        }
    });
    report.finalize();
    return report;
}

inline void to_json(nlohmann::json& j, const SampleMetrics& m) {
    j = {{"sample_id", m.sample_id}, {"auc", m.auc}, {"mae_db", m.mae_db}, {"delta_snr_db", m.delta_snr_db}};
}

inline void from_json(const nlohmann::json& j, SampleMetrics& m) {
    j.at("sample_id").get_to(m.sample_id);
    j.at("auc").get_to(m.auc);
    j.at("mae_db").get_to(m.mae_db);
    j.at("delta_snr_db").get_to(m.delta_snr_db);
}

inline void to_json(nlohmann::json& j, const EvalReport& r) {
    j = {{"method", r.method},
         {"split", r.split},
         {"num_samples", r.samples.size()},
         {"mean_auc", r.mean_auc},
         {"mae_db", r.mae_db},
         {"mean_delta_snr_db", r.mean_delta_snr_db},
         {"samples", r.samples}};
}

inline void from_json(const nlohmann::json& j, EvalReport& r) {
    j.at("method").get_to(r.method);
    j.at("split").get_to(r.split);
    j.at("mean_auc").get_to(r.mean_auc);
    j.at("mae_db").get_to(r.mae_db);
    j.at("mean_delta_snr_db").get_to(r.mean_delta_snr_db);
    j.at("samples").get_to(r.samples);
}

inline std::string per_sample_csv(const EvalReport& r) {
    std::string out = "sample_id,auc,mae_db,delta_snr_db\n";
    char line[128];
    for (const auto& s : r.samples) {
        std::snprintf(line, sizeof line, "%llu,%.17g,%.17g,%.17g\n",
                      static_cast<unsigned long long>(s.sample_id), s.auc, s.mae_db, s.delta_snr_db);
        out += line;
    }
    return out;
}

}  // namespace arim
