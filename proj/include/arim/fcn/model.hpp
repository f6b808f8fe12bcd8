#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "arim/dataset.hpp"
#include "arim/evaluation.hpp"
#include "arim/fcn/network.hpp"
#include "arim/profile.hpp"
#include "arim/timefreq.hpp"

namespace arim::fcn {

/// Affine maps of input and target dB values: normalized = (dB - offset) * scale.
struct Normalization {
    double input_offset = 0.0;
    double input_scale = 1.0;
    double target_offset = 0.0;
    double target_scale = 1.0;

    void validate() const {
        for (double v : {input_offset, input_scale, target_offset, target_scale})
            if (!std::isfinite(v)) throw std::invalid_argument("normalization constants must be finite");
        if (input_scale == 0.0 || target_scale == 0.0)
            throw std::invalid_argument("normalization scale must be non-zero");
    }

    /// Maps [min, max] to [0, 1]; a degenerate range keeps scale 1.
    static std::pair<double, double> from_range(double lo, double hi) {
        return {lo, hi > lo ? 1.0 / (hi - lo) : 1.0};
    }

    bool operator==(const Normalization&) const = default;
};

struct TrainingMetadata {
    std::uint64_t init_seed = 0;
    std::uint64_t epochs_seen = 0;
    std::uint64_t best_epoch = 0;
    double final_train_loss = 0.0;
    double final_val_loss = 0.0;
    bool operator==(const TrainingMetadata&) const = default;
};

struct FcnModel {
    StftConfig stft;
    Network<float> network;
    Normalization normalization;
    TrainingMetadata metadata;

    const FcnArchitecture& architecture() const { return network.architecture(); }
    std::size_t signal_len() const { return stft.signal_len; }
    std::size_t output_len() const { return architecture().width; }

    /// Fresh model for the given architecture and scale, He-uniform initialized.
    static FcnModel build(ArchName name, const ScaleProfile& profile, std::uint64_t seed) {
        const StftConfig cfg = name == ArchName::shallow ? profile.shallow_stft : profile.deep_stft;
        if (cfg.signal_len != profile.radar.num_samples)
            throw std::invalid_argument("stft config does not match the radar sample count");
        FcnModel m;
        m.stft = cfg;
        m.network = Network<float>(
            make_architecture(name, cfg.frame_count(cfg.signal_len), cfg.fft_len, profile.channel_divisor));
        m.network.initialize(seed);
        m.metadata.init_seed = seed;
        return m;
    }

    bool operator==(const FcnModel&) const = default;
};

/// Normalized network input: dB spectrogram of the interfered signal.
inline Tensor<float> model_input(const FcnModel& model, std::span<const cplx> signal) {
    if (signal.size() != model.signal_len())
        throw std::invalid_argument("model expects " + std::to_string(model.signal_len()) +
                                    " samples, got " + std::to_string(signal.size()));
    const Spectrogram s = stft(signal, model.stft);
    const auto& arch = model.architecture();
    if (s.frames != arch.input_height || s.bins != arch.width)
        throw std::invalid_argument("spectrogram " + std::to_string(s.frames) + "x" + std::to_string(s.bins) +
                                    " does not fit architecture input " + std::to_string(arch.input_height) +
                                    "x" + std::to_string(arch.width));
    Tensor<float> t(1, s.frames, s.bins);
    const auto& n = model.normalization;
    for (std::size_t i = 0; i < s.db_image.size(); ++i)
        t.data[i] = static_cast<float>((s.db_image[i] - n.input_offset) * n.input_scale);
    return t;
}

/// Normalized training target: dB range profile of the clean signal.
inline std::vector<float> model_target(const FcnModel& model, std::span<const cplx> clean) {
    const auto profile = range_profile(clean, model.output_len());
    std::vector<float> t(profile.magnitude_db.size());
    const auto& n = model.normalization;
    for (std::size_t i = 0; i < t.size(); ++i)
        t[i] = static_cast<float>((profile.magnitude_db[i] - n.target_offset) * n.target_scale);
    return t;
}

/// Predicted clean range profile in dB.
inline std::vector<double> infer(const FcnModel& model, std::span<const cplx> signal) {
    const Tensor<float> out = model.network.forward(model_input(model, signal));
    const auto& n = model.normalization;
    std::vector<double> db(out.data.size());
    for (std::size_t i = 0; i < db.size(); ++i)
        db[i] = static_cast<double>(out.data[i]) / n.target_scale + n.target_offset;
    return db;
}

inline Method fcn_method(const FcnModel& model) {
    return [&model](const SampleRecord& r) { return infer(model, to_signal(r.interfered)); };
}

// ---------------------------------------------------------------------------
// Model file
// ---------------------------------------------------------------------------

inline constexpr char kModelMagic[7] = {'A', 'R', 'I', 'M', 'F', 'C', 'N'};
inline constexpr std::uint16_t kModelVersion = 1;

/// Layout, little-endian:
///   "ARIMFCN", u16 version, u8 arch id, u64 input_height, u64 width, u64 channel_divisor,
///   stft: u64 window_len, u64 hop, u64 fft_len, u8 window kind, u64 tail_pad, u64 signal_len,
///   f64 x 4 normalization (input offset/scale, target offset/scale),
///   u64 init_seed, u64 epochs_seen, u64 best_epoch, f64 final_train_loss, f64 final_val_loss,
///   u64 param_count, param_count x f32, u32 crc32 of all preceding bytes
inline std::vector<std::uint8_t> serialize(const FcnModel& m) {
    arim::detail::ByteWriter w;
    w.raw({reinterpret_cast<const std::uint8_t*>(kModelMagic), sizeof kModelMagic});
    w.u16(kModelVersion);
    const auto& a = m.architecture();
    w.u8(static_cast<std::uint8_t>(a.name));
    w.u64(a.input_height);
    w.u64(a.width);
    w.u64(a.channel_divisor);
    w.u64(m.stft.window_len);
    w.u64(m.stft.hop);
    w.u64(m.stft.fft_len);
    w.u8(static_cast<std::uint8_t>(m.stft.window_kind));
    w.u64(m.stft.tail_pad);
    w.u64(m.stft.signal_len);
    const auto& n = m.normalization;
    w.f64(n.input_offset);
    w.f64(n.input_scale);
    w.f64(n.target_offset);
    w.f64(n.target_scale);
    w.u64(m.metadata.init_seed);
    w.u64(m.metadata.epochs_seen);
    w.u64(m.metadata.best_epoch);
    w.f64(m.metadata.final_train_loss);
    w.f64(m.metadata.final_val_loss);
    const auto params = m.network.parameters();
    w.u64(params.size());
    for (float p : params) w.f32(p);
    w.u32(crc32_of(w.bytes()));
    return std::move(w.bytes());
}

/// Parses a model file. With `expected`, a file of another architecture is
/// rejected.
inline FcnModel deserialize(std::span<const std::uint8_t> bytes, std::optional<ArchName> expected = {}) {
    if (bytes.size() < sizeof kModelMagic + 2 + 4) throw std::runtime_error("model file truncated");
    if (std::memcmp(bytes.data(), kModelMagic, sizeof kModelMagic) != 0)
        throw std::runtime_error("not a model file (bad magic)");
    const auto body = bytes.first(bytes.size() - 4);
    arim::detail::ByteReader tail(bytes.last(4));
    if (tail.u32() != crc32_of(body)) throw std::runtime_error("model file corrupt or truncated (checksum mismatch)");

    arim::detail::ByteReader r(body);
    r.take(sizeof kModelMagic);
    if (const auto v = r.u16(); v != kModelVersion)
        throw std::runtime_error("unsupported model version " + std::to_string(v));
    const auto arch_id = r.u8();
    if (arch_id > 1) throw std::runtime_error("unknown architecture id " + std::to_string(arch_id));
    const auto arch = static_cast<ArchName>(arch_id);
    if (expected && *expected != arch)
        throw std::runtime_error("model file holds architecture " + to_string(arch) + " (id " +
                                 std::to_string(arch_id) + "), expected " + to_string(*expected) + " (id " +
                                 std::to_string(static_cast<int>(*expected)) + ")");
    const auto height = r.u64();
    const auto width = r.u64();
    const auto divisor = r.u64();

    FcnModel m;
    m.stft.window_len = r.u64();
    m.stft.hop = r.u64();
    m.stft.fft_len = r.u64();
    if (const auto k = r.u8(); k != 0) throw std::runtime_error("unknown window kind " + std::to_string(k));
    m.stft.window_kind = WindowKind::hamming;
    m.stft.tail_pad = r.u64();
    m.stft.signal_len = r.u64();
    m.normalization.input_offset = r.f64();
    m.normalization.input_scale = r.f64();
    m.normalization.target_offset = r.f64();
    m.normalization.target_scale = r.f64();
    m.normalization.validate();
    m.metadata.init_seed = r.u64();
    m.metadata.epochs_seen = r.u64();
    m.metadata.best_epoch = r.u64();
    m.metadata.final_train_loss = r.f64();
    m.metadata.final_val_loss = r.f64();

    m.stft.validate();
    if (m.stft.frame_count(m.stft.signal_len) != height || m.stft.fft_len != width)
        throw std::runtime_error("model stft config does not match its input shape");
    m.network = Network<float>(make_architecture(arch, height, width, divisor));
    const auto count = r.u64();
    if (count != m.network.parameter_count())
        throw std::runtime_error("model holds " + std::to_string(count) + " parameters, architecture needs " +
                                 std::to_string(m.network.parameter_count()));
    if (r.remaining() != count * 4) throw std::runtime_error("model parameter block has wrong length");
    auto params = m.network.parameters();
    for (auto& p : params) p = r.f32();
    return m;
}

inline void save(const FcnModel& model, const std::filesystem::path& path) {
    write_file_atomic(path, serialize(model));
}

inline FcnModel load(const std::filesystem::path& path, std::optional<ArchName> expected = {}) {
    try {
        return deserialize(read_file(path), expected);
    } catch (const std::runtime_error& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

}  // namespace arim::fcn
