#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "arim/fft.hpp"
#include "arim/radar.hpp"

namespace arim {

inline constexpr double kDbFloor = 1e-12;

inline double to_db(double magnitude) { return 20.0 * std::log10(std::abs(magnitude) + kDbFloor); }
inline double to_db(std::complex<double> v) { return to_db(std::abs(v)); }

template <typename T>
std::vector<double> to_db(std::span<const T> values) {
    std::vector<double> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = to_db(values[i]);
    return out;
}

template <typename T>
std::vector<double> to_db(const std::vector<T>& values) {
    return to_db(std::span<const T>(values));
}

enum class WindowKind { hamming };

/// Symmetric Hamming window, w[n] = 0.54 - 0.46 cos(2 pi n / (W - 1)).
inline std::vector<double> hamming_window(std::size_t len) {
    std::vector<double> w(len, 1.0);
    if (len == 1) return w;
    for (std::size_t n = 0; n < len; ++n)
        w[n] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) /
                                       static_cast<double>(len - 1));
    return w;
}

struct StftConfig {
    std::size_t window_len = 106;
    std::size_t hop = 6;
    std::size_t fft_len = 2048;
    WindowKind window_kind = WindowKind::hamming;
    std::size_t tail_pad = 0;
    std::size_t signal_len = 0;  // required input length; 0 accepts any

    /// 106-sample window, hop 6: 154 frames from 1024 samples.
    static StftConfig full_shallow() { return {106, 6, 2048, WindowKind::hamming, 0, 1024}; }
    /// 106-sample window, hop 1, 105 trailing zeros: 1024 frames.
    static StftConfig full_deep() { return {106, 1, 2048, WindowKind::hamming, 105, 1024}; }
    /// 256-sample sweeps, same 106-sample window (same resolution in Hz), hop 6: 26 frames.
    static StftConfig desk_shallow() { return {106, 6, 512, WindowKind::hamming, 0, 256}; }
    /// 256-sample sweeps, 106-sample window, hop 4, 2 trailing zeros: 39 frames.
    static StftConfig desk_deep() { return {106, 4, 512, WindowKind::hamming, 2, 256}; }

    void validate() const {
        if (!(hop >= 1 && hop <= window_len && window_len <= fft_len))
            throw std::invalid_argument("stft config needs 1 <= hop <= window_len <= fft_len");
    }

    std::size_t frame_count(std::size_t signal_size) const {
        validate();
        const std::size_t padded = signal_size + tail_pad;
        if (padded < window_len) return 0;
        return (padded - window_len) / hop + 1;
    }

    bool operator==(const StftConfig&) const = default;
};

struct Spectrogram {
    std::size_t frames = 0;
    std::size_t bins = 0;
    std::vector<std::complex<double>> stft;  // row-major, frames x bins
    std::vector<double> db_image;            // 20 log10(|stft| + eps)
    StftConfig config;

    std::complex<double> at(std::size_t frame, std::size_t bin) const {
        return stft[frame * bins + bin];
    }
    double db(std::size_t frame, std::size_t bin) const { return db_image[frame * bins + bin]; }
};

/// X(m, k) = sum_n x[n] w[n - mR] exp(-j 2 pi k n / N_x), windows laid
/// left-aligned on the tail-padded signal. The phase reference is the
/// absolute sample index n.
inline Spectrogram stft(std::span<const cplx> signal, const StftConfig& config) {
    config.validate();
    if (config.signal_len != 0 && signal.size() != config.signal_len)
        throw std::invalid_argument("stft expects " + std::to_string(config.signal_len) +
                                    " samples, got " + std::to_string(signal.size()));
    const std::size_t frames = config.frame_count(signal.size());
    const std::size_t nfft = config.fft_len;
    const auto window = hamming_window(config.window_len);
    const auto& plan = FftPlan::forward(nfft);

    // twiddle[i] = exp(-j 2 pi i / N_x), applied as the frame-offset phase ramp
    std::vector<std::complex<double>> twiddle(nfft);
    for (std::size_t i = 0; i < nfft; ++i)
        twiddle[i] = std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(i) /
                                         static_cast<double>(nfft));

    Spectrogram out;
    out.frames = frames;
    out.bins = nfft;
    out.config = config;
    out.stft.assign(frames * nfft, {0.0, 0.0});
    out.db_image.resize(frames * nfft);

    std::vector<std::complex<double>> frame(nfft);
    for (std::size_t m = 0; m < frames; ++m) {
        const std::size_t start = m * config.hop;
        std::fill(frame.begin(), frame.end(), std::complex<double>{0.0, 0.0});
        for (std::size_t i = 0; i < config.window_len; ++i) {
            const std::size_t n = start + i;
            if (n < signal.size()) frame[i] = signal[n] * window[i];
        }
        std::span<std::complex<double>> row(out.stft.data() + m * nfft, nfft);
        plan.execute(frame, row);
        const std::size_t shift = start % nfft;
        if (shift != 0) {
            for (std::size_t k = 0; k < nfft; ++k) row[k] *= twiddle[(k * shift) % nfft];
        }
        for (std::size_t k = 0; k < nfft; ++k) out.db_image[m * nfft + k] = to_db(row[k]);
    }
    return out;
}

struct RangeProfile {
    std::vector<std::complex<double>> bins;
    std::vector<double> magnitude_db;
};

/// Unwindowed FFT of the signal zero-padded to fft_len (default twice its length).
inline RangeProfile range_profile(std::span<const cplx> signal, std::size_t fft_len = 0) {
    if (fft_len == 0) fft_len = 2 * signal.size();
    if (signal.size() > fft_len) throw std::invalid_argument("signal longer than fft length");
    std::vector<std::complex<double>> padded(fft_len, {0.0, 0.0});
    std::copy(signal.begin(), signal.end(), padded.begin());
    RangeProfile profile;
    profile.bins.resize(fft_len);
    if (fft_len > 0) FftPlan::forward(fft_len).execute(padded, profile.bins);
    profile.magnitude_db = to_db(profile.bins);
    return profile;
}

template <typename T>
Signal to_signal(std::span<const std::complex<T>> values) {
    return Signal(values.begin(), values.end());
}

template <typename T>
Signal to_signal(const std::vector<std::complex<T>>& values) {
    return Signal(values.begin(), values.end());
}

}  // namespace arim
