#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "arim/rng.hpp"

namespace arim {

using cplx = std::complex<double>;
using Signal = std::vector<cplx>;

inline constexpr double kSpeedOfLight = 299'792'458.0;

/// Fixed FMCW sensor parameters. Construct through create() so that the
/// derived fields always agree with the primary ones.
struct RadarParams {
    double bandwidth_hz = 0.0;
    double sweep_time_s = 0.0;
    double sampling_freq_hz = 0.0;
    double center_freq_hz = 0.0;
    std::size_t num_samples = 0;
    double chirp_rate_hz_per_s = 0.0;

    static RadarParams create(double bandwidth_hz, double sweep_time_s, double sampling_freq_hz,
                              double center_freq_hz) {
        if (!(bandwidth_hz > 0.0) || !(sweep_time_s > 0.0) || !(sampling_freq_hz > 0.0) ||
            !(center_freq_hz > 0.0)) {
            throw std::invalid_argument("radar parameters must be strictly positive");
        }
        RadarParams p;
        p.bandwidth_hz = bandwidth_hz;
        p.sweep_time_s = sweep_time_s;
        p.sampling_freq_hz = sampling_freq_hz;
        p.center_freq_hz = center_freq_hz;
        p.num_samples = static_cast<std::size_t>(std::llround(sweep_time_s * sampling_freq_hz));
        p.chirp_rate_hz_per_s = bandwidth_hz / sweep_time_s;
        if (p.num_samples == 0) throw std::invalid_argument("sweep shorter than one sample");
        return p;
    }

    /// 1.6 GHz sweep over 25.6 us, 40 MHz sampling, 78 GHz carrier: 1024 samples.
    static RadarParams full() { return create(1.6e9, 25.6e-6, 40e6, 78e9); }

    /// Same chirp rate and sampling, a quarter of the sweep: 256 samples.
    static RadarParams desk() { return create(0.4e9, 6.4e-6, 40e6, 78e9); }

    /// Range profiles are the signal zero-padded to twice its length.
    std::size_t profile_len() const { return 2 * num_samples; }

    double beat_frequency(double distance_m) const {
        return chirp_rate_hz_per_s * 2.0 * distance_m / kSpeedOfLight;
    }

    double distance_of_frequency(double beat_hz) const {
        return beat_hz * kSpeedOfLight / (2.0 * chirp_rate_hz_per_s);
    }

    double bin_to_range(double bin) const {
        return distance_of_frequency(bin * sampling_freq_hz / static_cast<double>(profile_len()));
    }

    /// Profile bin of a beat frequency, rounded half away from zero.
    std::uint32_t frequency_to_bin(double beat_hz) const {
        const auto len = static_cast<long long>(profile_len());
        long long bin = std::llround(beat_hz * static_cast<double>(len) / sampling_freq_hz);
        bin %= len;
        if (bin < 0) bin += len;
        return static_cast<std::uint32_t>(bin);
    }

    bool operator==(const RadarParams&) const = default;
};

struct Target {
    double distance_m = 0.0;
    double amplitude = 0.0;
    double phase_rad = 0.0;

    bool operator==(const Target&) const = default;
};

struct InterferenceSpec {
    double relative_slope = 0.0;   // interferer chirp rate / radar chirp rate
    double sir_db = 0.0;
    double crossing_time_s = 0.0;  // when the mixed interference passes f_s/2

    bool operator==(const InterferenceSpec&) const = default;
};

struct Scenario {
    std::vector<Target> targets;
    double snr_db = std::numeric_limits<double>::infinity();  // +inf disables noise
    std::optional<InterferenceSpec> interference;
    std::uint64_t rng_seed = 0;

    double reference_amplitude() const {
        double a = 0.0;
        for (const auto& t : targets) a = std::max(a, t.amplitude);
        return a;
    }

    bool operator==(const Scenario&) const = default;
};

/// Bounds of the sampling distribution; scenarios outside them are rejected
/// by validate().
struct ScenarioBounds {
    double min_distance_m = 2.0;
    double max_distance_m = 95.0;
    double min_amplitude = 0.01;
    double max_amplitude = 1.0;
    double min_snr_db = 5.0;
    double max_snr_db = 40.0;
    double min_sir_db = -5.0;
    double max_sir_db = 40.0;
    double max_relative_slope = 1.5;
    std::size_t max_targets = 4;
};

inline void validate(const Target& t, const ScenarioBounds& b = {}) {
    if (!(t.distance_m >= b.min_distance_m && t.distance_m <= b.max_distance_m))
        throw std::invalid_argument("target distance " + std::to_string(t.distance_m) +
                                    " m outside [2, 95]");
    if (!(t.amplitude >= b.min_amplitude && t.amplitude <= b.max_amplitude))
        throw std::invalid_argument("target amplitude " + std::to_string(t.amplitude) +
                                    " outside [0.01, 1]");
    if (!(std::abs(t.phase_rad) <= std::numbers::pi))
        throw std::invalid_argument("target phase outside [-pi, pi]");
}

inline void validate(const InterferenceSpec& spec, const RadarParams& params,
                     const ScenarioBounds& b = {}) {
    if (!(spec.relative_slope >= 0.0 && spec.relative_slope <= b.max_relative_slope))
        throw std::invalid_argument("interference slope outside [0, 1.5]");
    if (!(spec.sir_db >= b.min_sir_db && spec.sir_db <= b.max_sir_db))
        throw std::invalid_argument("SIR outside [-5, 40] dB");
    if (!(spec.crossing_time_s >= 0.0 && spec.crossing_time_s <= params.sweep_time_s))
        throw std::invalid_argument("interference crossing time outside the sweep");
}

inline void validate(const Scenario& s, const RadarParams& params, const ScenarioBounds& b = {}) {
    if (s.targets.empty() || s.targets.size() > b.max_targets)
        throw std::invalid_argument("scenario needs 1..4 targets, got " +
                                    std::to_string(s.targets.size()));
    for (const auto& t : s.targets) validate(t, b);
    if (!std::isinf(s.snr_db) && !(s.snr_db >= b.min_snr_db && s.snr_db <= b.max_snr_db))
        throw std::invalid_argument("SNR outside [5, 40] dB");
    if (s.interference) validate(*s.interference, params, b);
}

/// exp(j 2 pi (f0 t + alpha t^2 / 2)) for t inside the sweep, 0 outside.
inline cplx chirp_value(const RadarParams& params, double t) {
    if (t < 0.0 || t > params.sweep_time_s) return {0.0, 0.0};
    const double cycles = params.center_freq_hz * t + 0.5 * params.chirp_rate_hz_per_s * t * t;
    // Reduce to one turn before scaling by 2 pi to keep the argument small.
    const double turn = cycles - std::floor(cycles);
    return std::polar(1.0, 2.0 * std::numbers::pi * turn);
}

inline Signal transmit_chirp(const RadarParams& params) {
    Signal s(params.num_samples);
    for (std::size_t n = 0; n < s.size(); ++n)
        s[n] = chirp_value(params, static_cast<double>(n) / params.sampling_freq_hz);
    return s;
}

/// Dechirped echo sum: s_TX(t) * conj(A e^{j phi} s_TX(t - tau)) per target.
/// The delayed copy is evaluated from the analytic chirp phase, so each target
/// yields a tone at alpha * tau over the whole sweep.
inline Signal beat_signal(std::span<const Target> targets, const RadarParams& params) {
    if (targets.empty()) throw std::invalid_argument("beat_signal needs at least one target");
    Signal out(params.num_samples, cplx{0.0, 0.0});
    const double f0 = params.center_freq_hz;
    const double alpha = params.chirp_rate_hz_per_s;
    for (const auto& target : targets) {
        const double tau = 2.0 * target.distance_m / kSpeedOfLight;
        if (params.beat_frequency(target.distance_m) >= params.sampling_freq_hz)
            throw std::invalid_argument("target at " + std::to_string(target.distance_m) +
                                        " m beats above the sampling frequency");
        const cplx gain = std::polar(target.amplitude, target.phase_rad);
        for (std::size_t n = 0; n < out.size(); ++n) {
            const double t = static_cast<double>(n) / params.sampling_freq_hz;
            // phase(t) - phase(t - tau), expanded to avoid cancellation
            const double diff = f0 * tau + alpha * tau * t - 0.5 * alpha * tau * tau;
            const cplx mixed = std::polar(1.0, 2.0 * std::numbers::pi * (diff - std::floor(diff)));
            out[n] += mixed * std::conj(gain);
        }
    }
    return out;
}

inline double interference_amplitude(double reference_amplitude, double sir_db) {
    return reference_amplitude * std::pow(10.0, -sir_db / 20.0);
}

/// Interferer after mixing: a beat-domain chirp centred on f_s/2 at the
/// crossing time with slope (r - 1) alpha, gated to the sampled band [0, f_s).
/// The rng supplies the interferer's initial phase.
inline Signal interference_signal(const InterferenceSpec& spec, const RadarParams& params,
                                  double reference_amplitude, Rng& rng) {
    if (!(reference_amplitude > 0.0))
        throw std::invalid_argument("reference amplitude must be positive");
    validate(spec, params);
    const double fs = params.sampling_freq_hz;
    const double slope = (spec.relative_slope - 1.0) * params.chirp_rate_hz_per_s;
    const double amp = interference_amplitude(reference_amplitude, spec.sir_db);
    const double phase0 = rng.uniform(-std::numbers::pi, std::numbers::pi);

    Signal out(params.num_samples, cplx{0.0, 0.0});
    for (std::size_t n = 0; n < out.size(); ++n) {
        const double dt = static_cast<double>(n) / fs - spec.crossing_time_s;
        const double freq = 0.5 * fs + slope * dt;
        if (freq < 0.0 || freq >= fs) continue;
        const double cycles = 0.5 * fs * dt + 0.5 * slope * dt * dt;
        out[n] = std::polar(amp, 2.0 * std::numbers::pi * (cycles - std::floor(cycles)) + phase0);
    }
    return out;
}

inline double noise_variance(double snr_db, double reference_amplitude) {
    if (std::isinf(snr_db) && snr_db > 0) return 0.0;
    return reference_amplitude * reference_amplitude * std::pow(10.0, -snr_db / 10.0);
}

/// Adds circular complex white Gaussian noise with E|n|^2 = ref^2 10^(-SNR/10).
/// snr_db = +inf leaves the signal untouched and consumes no randomness.
inline Signal add_noise(std::span<const cplx> signal, double snr_db, double reference_amplitude,
                        Rng& rng) {
    if (!(reference_amplitude > 0.0))
        throw std::invalid_argument("reference amplitude must be positive");
    Signal out(signal.begin(), signal.end());
    const double variance = noise_variance(snr_db, reference_amplitude);
    if (variance == 0.0) return out;
    const double sigma = std::sqrt(variance / 2.0);
    for (auto& v : out) {
        const double re = rng.normal();
        const double im = rng.normal();
        v += cplx{sigma * re, sigma * im};
    }
    return out;
}

struct LabelEntry {
    std::uint32_t bin = 0;
    std::complex<double> value;

    bool operator==(const LabelEntry&) const = default;
};

struct Sample {
    Signal clean;
    Signal interfered;
    std::vector<LabelEntry> label;  // sorted by bin, colliding targets summed
};

inline std::vector<LabelEntry> make_label(std::span<const Target> targets,
                                          const RadarParams& params) {
    std::vector<LabelEntry> label;
    for (const auto& t : targets) {
        const auto bin = params.frequency_to_bin(params.beat_frequency(t.distance_m));
        const auto value = std::polar(t.amplitude, t.phase_rad);
        auto it = std::find_if(label.begin(), label.end(),
                               [bin](const LabelEntry& e) { return e.bin == bin; });
        if (it != label.end()) {
            it->value += value;
        } else {
            label.push_back({bin, value});
        }
    }
    std::sort(label.begin(), label.end(),
              [](const LabelEntry& a, const LabelEntry& b) { return a.bin < b.bin; });
    return label;
}

/// Number of sweep samples whose interference beat frequency lies in [0, f_s).
inline std::size_t gated_sample_count(const InterferenceSpec& spec, const RadarParams& params) {
    const double fs = params.sampling_freq_hz;
    const double slope = (spec.relative_slope - 1.0) * params.chirp_rate_hz_per_s;
    std::size_t count = 0;
    for (std::size_t n = 0; n < params.num_samples; ++n) {
        const double freq = 0.5 * fs + slope * (static_cast<double>(n) / fs - spec.crossing_time_s);
        if (freq >= 0.0 && freq < fs) ++count;
    }
    return count;
}

/// Reference amplitudes that make SNR and SIR hold on the range profile of
/// the strongest target (amplitude A, sweep of N samples):
///   SNR = (N A)^2 / E|noise bin|^2         -> noise reference sqrt(N) A
///   SIR = (N A)^2 / E|interference bin|^2  -> interference reference N A / sqrt(L)
/// with L the number of in-band interference samples.
struct Calibration {
    double noise_reference = 0.0;
    double interference_reference = 0.0;
};

inline Calibration calibrate(const Scenario& scenario, const RadarParams& params) {
    const double a = scenario.reference_amplitude();
    const double n = static_cast<double>(params.num_samples);
    Calibration c;
    c.noise_reference = std::sqrt(n) * a;
    if (scenario.interference) {
        const auto gated = gated_sample_count(*scenario.interference, params);
        c.interference_reference = gated > 0 ? n * a / std::sqrt(static_cast<double>(gated)) : a;
    }
    return c;
}

/// Builds the (clean, interfered, label) triplet. Randomness is drawn from
/// scenario.rng_seed in a fixed order: interferer phase, then noise. Both
/// copies share the same noise realization.
inline Sample compose_sample(const Scenario& scenario, const RadarParams& params) {
    validate(scenario, params);
    Rng rng(scenario.rng_seed);
    const Calibration cal = calibrate(scenario, params);

    Signal interference;
    if (scenario.interference)
        interference = interference_signal(*scenario.interference, params, cal.interference_reference, rng);

    const Signal beat = beat_signal(scenario.targets, params);
    Sample sample;
    sample.clean = add_noise(beat, scenario.snr_db, cal.noise_reference, rng);
    sample.interfered = sample.clean;
    if (scenario.interference) {
        for (std::size_t n = 0; n < sample.interfered.size(); ++n)
            sample.interfered[n] += interference[n];
    }
    sample.label = make_label(scenario.targets, params);
    return sample;
}

}  // namespace arim
