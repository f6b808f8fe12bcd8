#pragma once

#include <algorithm>
#include <bit>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>
#include <zlib.h>

#include "arim/parallel.hpp"
#include "arim/profile.hpp"
#include "arim/radar.hpp"
#include "arim/rng.hpp"

namespace arim {

// ---------------------------------------------------------------------------
// Scenario sampling
// ---------------------------------------------------------------------------

/// Joint sampling distribution. Grid parameters are drawn uniformly over their
/// grid points (value = lo + i * step); continuous parameters uniformly over
/// their interval.
struct ParameterGrid {
    double snr_min_db = 5.0, snr_max_db = 40.0, snr_step_db = 5.0;
    double sir_min_db = -5.0, sir_max_db = 40.0, sir_step_db = 5.0;
    int slope_max_tenths = 15;  // slopes 0.0, 0.1, ..., 1.5
    std::size_t min_targets = 1, max_targets = 4;
    double min_amplitude = 0.01, max_amplitude = 1.0;
    double min_distance_m = 2.0, max_distance_m = 95.0;
    double min_phase_rad = -std::numbers::pi, max_phase_rad = std::numbers::pi;

    static std::vector<double> levels(double lo, double hi, double step) {
        std::vector<double> v;
        const auto count = static_cast<std::size_t>(std::llround((hi - lo) / step)) + 1;
        for (std::size_t i = 0; i < count; ++i) v.push_back(lo + static_cast<double>(i) * step);
        return v;
    }
    std::vector<double> snr_values() const { return levels(snr_min_db, snr_max_db, snr_step_db); }
    std::vector<double> sir_values() const { return levels(sir_min_db, sir_max_db, sir_step_db); }
    std::vector<double> slope_values() const {
        std::vector<double> v;
        for (int i = 0; i <= slope_max_tenths; ++i) v.push_back(i / 10.0);
        return v;
    }
};

/// Draw order: SNR, SIR, slope, crossing time, target count, then per target
/// (distance, amplitude, phase), then the waveform seed.
inline Scenario sample_scenario(const ParameterGrid& grid, const RadarParams& params, Rng& rng) {
    const auto snr = grid.snr_values();
    const auto sir = grid.sir_values();
    const auto slope = grid.slope_values();

    Scenario s;
    s.snr_db = snr[rng.index(snr.size())];
    InterferenceSpec spec;
    spec.sir_db = sir[rng.index(sir.size())];
    spec.relative_slope = slope[rng.index(slope.size())];
    spec.crossing_time_s = rng.uniform(0.0, params.sweep_time_s);
    s.interference = spec;

    const std::size_t n_targets =
        grid.min_targets + rng.index(grid.max_targets - grid.min_targets + 1);
    for (std::size_t i = 0; i < n_targets; ++i) {
        Target t;
        t.distance_m = rng.uniform(grid.min_distance_m, grid.max_distance_m);
        t.amplitude = rng.uniform(grid.min_amplitude, grid.max_amplitude);
        t.phase_rad = rng.uniform(grid.min_phase_rad, grid.max_phase_rad);
        s.targets.push_back(t);
    }
    s.rng_seed = rng.next_u64();
    return s;
}

// ---------------------------------------------------------------------------
// Records and their binary encoding
// ---------------------------------------------------------------------------

inline constexpr char kShardMagic[4] = {'A', 'R', 'I', 'M'};
inline constexpr std::uint16_t kFormatVersion = 1;

struct StoredLabel {
    std::uint32_t bin = 0;
    std::complex<float> value;
    bool operator==(const StoredLabel&) const = default;
};

struct SampleRecord {
    std::uint64_t sample_id = 0;
    Scenario scenario;
    std::vector<std::complex<float>> clean;
    std::vector<std::complex<float>> interfered;
    std::vector<StoredLabel> label;  // sorted by bin

    std::vector<std::uint32_t> label_bins() const {
        std::vector<std::uint32_t> bins;
        for (const auto& l : label) bins.push_back(l.bin);
        return bins;
    }

    bool operator==(const SampleRecord&) const = default;
};

inline SampleRecord make_record(std::uint64_t sample_id, const Scenario& scenario,
                                const RadarParams& params) {
    const Sample sample = compose_sample(scenario, params);
    SampleRecord r;
    r.sample_id = sample_id;
    r.scenario = scenario;
    r.clean.assign(sample.clean.begin(), sample.clean.end());
    r.interfered.assign(sample.interfered.begin(), sample.interfered.end());
    for (const auto& e : sample.label)
        r.label.push_back({e.bin, std::complex<float>(e.value)});
    return r;
}

/// Per-sample scenario for a corpus: the scenario stream of sample i is seeded
/// with derive_seed(global_seed, i).
inline SampleRecord generate_record(std::uint64_t global_seed, std::uint64_t sample_id,
                                    const RadarParams& params, const ParameterGrid& grid = {}) {
    Rng rng(derive_seed(global_seed, sample_id));
    return make_record(sample_id, sample_scenario(grid, params, rng), params);
}

namespace detail {

class ByteWriter {
public:
    void u8(std::uint8_t v) { bytes_.push_back(v); }
    void u16(std::uint16_t v) { put(v, 2); }
    void u32(std::uint32_t v) { put(v, 4); }
    void u64(std::uint64_t v) { put(v, 8); }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void raw(std::span<const std::uint8_t> b) { bytes_.insert(bytes_.end(), b.begin(), b.end()); }
    std::vector<std::uint8_t>& bytes() { return bytes_; }

private:
    void put(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    std::vector<std::uint8_t> bytes_;
};

class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> b) : bytes_(b) {}
    std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
    std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
    std::uint64_t u64() { return get(8); }
    float f32() { return std::bit_cast<float>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }
    std::span<const std::uint8_t> take(std::size_t n) {
        need(n);
        auto s = bytes_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    std::size_t remaining() const { return bytes_.size() - pos_; }
    std::size_t position() const { return pos_; }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw std::runtime_error("truncated record data");
    }
    std::uint64_t get(int n) {
        need(static_cast<std::size_t>(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += static_cast<std::size_t>(n);
        return v;
    }
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace detail

/// Record payload, little-endian:
///   u64 sample_id, u64 rng_seed, f64 snr_db,
///   u8 n_targets, n x (f64 distance, f64 amplitude, f64 phase),
///   u8 has_interference, [f64 slope, f64 sir_db, f64 crossing_time_s],
///   u32 n_samples, n x (f32 re, f32 im) clean, n x (f32 re, f32 im) interfered,
///   u32 n_label, n x (u32 bin, f32 re, f32 im)
inline std::vector<std::uint8_t> encode(const SampleRecord& r) {
    if (r.clean.size() != r.interfered.size())
        throw std::invalid_argument("clean and interfered lengths differ");
    detail::ByteWriter w;
    w.u64(r.sample_id);
    w.u64(r.scenario.rng_seed);
    w.f64(r.scenario.snr_db);
    w.u8(static_cast<std::uint8_t>(r.scenario.targets.size()));
    for (const auto& t : r.scenario.targets) {
        w.f64(t.distance_m);
        w.f64(t.amplitude);
        w.f64(t.phase_rad);
    }
    w.u8(r.scenario.interference ? 1 : 0);
    if (r.scenario.interference) {
        w.f64(r.scenario.interference->relative_slope);
        w.f64(r.scenario.interference->sir_db);
        w.f64(r.scenario.interference->crossing_time_s);
    }
    w.u32(static_cast<std::uint32_t>(r.clean.size()));
    for (const auto& v : r.clean) {
        w.f32(v.real());
        w.f32(v.imag());
    }
    for (const auto& v : r.interfered) {
        w.f32(v.real());
        w.f32(v.imag());
    }
    w.u32(static_cast<std::uint32_t>(r.label.size()));
    for (const auto& l : r.label) {
        w.u32(l.bin);
        w.f32(l.value.real());
        w.f32(l.value.imag());
    }
    return std::move(w.bytes());
}

inline SampleRecord decode(std::span<const std::uint8_t> bytes) {
    detail::ByteReader rd(bytes);
    SampleRecord r;
    r.sample_id = rd.u64();
    r.scenario.rng_seed = rd.u64();
    r.scenario.snr_db = rd.f64();
    const std::size_t n_targets = rd.u8();
    for (std::size_t i = 0; i < n_targets; ++i) {
        Target t;
        t.distance_m = rd.f64();
        t.amplitude = rd.f64();
        t.phase_rad = rd.f64();
        r.scenario.targets.push_back(t);
    }
    if (rd.u8() != 0) {
        InterferenceSpec spec;
        spec.relative_slope = rd.f64();
        spec.sir_db = rd.f64();
        spec.crossing_time_s = rd.f64();
        r.scenario.interference = spec;
    }
    const std::size_t n = rd.u32();
    if (rd.remaining() < n * 16) throw std::runtime_error("truncated record waveform");
    r.clean.resize(n);
    r.interfered.resize(n);
    for (auto& v : r.clean) {
        const float re = rd.f32();
        v = {re, rd.f32()};
    }
    for (auto& v : r.interfered) {
        const float re = rd.f32();
        v = {re, rd.f32()};
    }
    const std::size_t n_label = rd.u32();
    for (std::size_t i = 0; i < n_label; ++i) {
        StoredLabel l;
        l.bin = rd.u32();
        const float re = rd.f32();
        l.value = {re, rd.f32()};
        r.label.push_back(l);
    }
    if (rd.remaining() != 0) throw std::runtime_error("trailing bytes after record");
    return r;
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

enum class Split { train, validation, test };

inline std::string to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::validation: return "validation";
        case Split::test: return "test";
    }
    return "?";
}

inline Split parse_split(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "validation") return Split::validation;
    if (s == "test") return Split::test;
    throw std::invalid_argument("unknown split '" + s + "' (expected train|validation|test)");
}

struct ShardInfo {
    std::string file;
    std::uint64_t first_sample_id = 0;
    std::uint64_t count = 0;
    std::uint64_t bytes = 0;
    std::uint32_t crc32 = 0;
    bool operator==(const ShardInfo&) const = default;
};

struct SplitCounts {
    std::uint64_t train = 0;
    std::uint64_t test = 0;
};

/// Train gets floor(5/6 of the corpus), test the remainder: 40,000 / 8,000 at
/// 48,000 samples, 833 / 167 at 1,000.
inline SplitCounts split_counts(std::uint64_t total) {
    const std::uint64_t train = total * 5 / 6;
    return {train, total - train};
}

struct DatasetManifest {
    int format_version = kFormatVersion;
    std::string seed_mixer = "splitmix64";
    std::string profile = "full";
    std::uint64_t total_samples = 0;
    std::uint64_t global_seed = 0;
    RadarParams radar_params;
    std::uint64_t train_count = 0;
    std::uint64_t test_count = 0;
    double validation_fraction = 0.2;
    std::vector<ShardInfo> shards;

    std::uint64_t validation_count() const {
        return static_cast<std::uint64_t>(
            std::llround(validation_fraction * static_cast<double>(train_count)));
    }

    /// Half-open sample-id range of a split. Validation is the tail of the
    /// train ordering; test follows train.
    std::pair<std::uint64_t, std::uint64_t> range(Split s) const {
        const std::uint64_t val = validation_count();
        switch (s) {
            case Split::train: return {0, train_count - val};
            case Split::validation: return {train_count - val, train_count};
            case Split::test: return {train_count, total_samples};
        }
        return {0, 0};
    }

    bool operator==(const DatasetManifest&) const = default;
};

inline void to_json(nlohmann::json& j, const RadarParams& p) {
    j = {{"bandwidth_hz", p.bandwidth_hz},
         {"sweep_time_s", p.sweep_time_s},
         {"sampling_freq_hz", p.sampling_freq_hz},
         {"center_freq_hz", p.center_freq_hz},
         {"num_samples", p.num_samples},
         {"chirp_rate_hz_per_s", p.chirp_rate_hz_per_s}};
}

inline void from_json(const nlohmann::json& j, RadarParams& p) {
    p = RadarParams::create(j.at("bandwidth_hz").get<double>(), j.at("sweep_time_s").get<double>(),
                            j.at("sampling_freq_hz").get<double>(),
                            j.at("center_freq_hz").get<double>());
    if (j.contains("num_samples") && j.at("num_samples").get<std::size_t>() != p.num_samples)
        throw std::runtime_error("manifest num_samples disagrees with sweep_time * sampling_freq");
}

inline void to_json(nlohmann::json& j, const ShardInfo& s) {
    j = {{"file", s.file},
         {"first_sample_id", s.first_sample_id},
         {"count", s.count},
         {"bytes", s.bytes},
         {"crc32", s.crc32}};
}

inline void from_json(const nlohmann::json& j, ShardInfo& s) {
    j.at("file").get_to(s.file);
    j.at("first_sample_id").get_to(s.first_sample_id);
    j.at("count").get_to(s.count);
    j.at("bytes").get_to(s.bytes);
    j.at("crc32").get_to(s.crc32);
}

inline void to_json(nlohmann::json& j, const DatasetManifest& m) {
    j = {{"format_version", m.format_version},
         {"seed_mixer", m.seed_mixer},
         {"profile", m.profile},
         {"total_samples", m.total_samples},
         {"global_seed", m.global_seed},
         {"radar_params", m.radar_params},
         {"split",
          {{"train_count", m.train_count},
           {"test_count", m.test_count},
           {"validation_fraction", m.validation_fraction}}},
         {"shards", m.shards}};
}

inline void from_json(const nlohmann::json& j, DatasetManifest& m) {
    j.at("format_version").get_to(m.format_version);
    if (m.format_version != kFormatVersion)
        throw std::runtime_error("unsupported dataset format version " +
                                 std::to_string(m.format_version));
    j.at("seed_mixer").get_to(m.seed_mixer);
    j.at("profile").get_to(m.profile);
    j.at("total_samples").get_to(m.total_samples);
    j.at("global_seed").get_to(m.global_seed);
    j.at("radar_params").get_to(m.radar_params);
    const auto& split = j.at("split");
    split.at("train_count").get_to(m.train_count);
    split.at("test_count").get_to(m.test_count);
    split.at("validation_fraction").get_to(m.validation_fraction);
    j.at("shards").get_to(m.shards);
    if (m.train_count + m.test_count != m.total_samples)
        throw std::runtime_error("manifest split counts do not sum to total_samples");
}

inline std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
    uLong crc = ::crc32(0L, Z_NULL, 0);
    std::size_t pos = 0;
    while (pos < bytes.size()) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - pos, 1u << 30));
        crc = ::crc32(crc, bytes.data() + pos, chunk);
        pos += chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    in.seekg(0, std::ios::end);
    const auto size = static_cast<std::size_t>(in.tellg());
    in.seekg(0, std::ios::beg);
    std::vector<std::uint8_t> bytes(size);
    if (size > 0 && !in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size)))
        throw std::runtime_error("failed reading " + path.string());
    return bytes;
}

inline void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot create " + tmp.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) throw std::runtime_error("failed writing " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline constexpr const char* kManifestName = "manifest.json";

struct GenerateOptions {
    std::size_t shard_size = 1000;
    std::size_t threads = 1;
    ParameterGrid grid;
};

/// Writes shard_NNNNN.arim files and manifest.json into out_dir. The manifest
/// is written last, so a directory without one is an incomplete corpus; on
/// failure every file written by this call is removed.
inline DatasetManifest generate(std::uint64_t count, std::uint64_t global_seed,
                                const std::filesystem::path& out_dir, const ScaleProfile& profile,
                                const GenerateOptions& options = {}) {
    if (count == 0) throw std::invalid_argument("sample count must be at least 1");
    if (options.shard_size == 0) throw std::invalid_argument("shard size must be positive");
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    fs::remove(out_dir / kManifestName);

    DatasetManifest manifest;
    manifest.profile = profile.name;
    manifest.total_samples = count;
    manifest.global_seed = global_seed;
    manifest.radar_params = profile.radar;
    const auto split = split_counts(count);
    manifest.train_count = split.train;
    manifest.test_count = split.test;

    std::vector<fs::path> written;
    try {
        for (std::uint64_t first = 0; first < count; first += options.shard_size) {
            const std::uint64_t n = std::min<std::uint64_t>(options.shard_size, count - first);
            std::vector<std::vector<std::uint8_t>> payloads(n);
            parallel_for(n, options.threads, [&](std::size_t i) {
                payloads[i] = encode(generate_record(global_seed, first + i, profile.radar, options.grid));
            });

            detail::ByteWriter w;
            for (char c : kShardMagic) w.u8(static_cast<std::uint8_t>(c));
            w.u16(kFormatVersion);
            for (const auto& p : payloads) {
                w.u32(static_cast<std::uint32_t>(p.size()));
                w.raw(p);
            }

            char name[32];
            std::snprintf(name, sizeof name, "shard_%05llu.arim",
                          static_cast<unsigned long long>(manifest.shards.size()));
            const fs::path path = out_dir / name;
            write_file_atomic(path, w.bytes());
            written.push_back(path);
            manifest.shards.push_back({name, first, n, w.bytes().size(), crc32_of(w.bytes())});
        }
        const std::string text = nlohmann::json(manifest).dump(2) + "\n";
        write_file_atomic(out_dir / kManifestName,
                          std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
    } catch (const std::exception& e) {
        std::error_code ec;
        for (const auto& p : written) fs::remove(p, ec);
        throw std::runtime_error("dataset generation in " + out_dir.string() + " failed: " + e.what());
    }
    return manifest;
}

inline DatasetManifest read_manifest(const std::filesystem::path& dir) {
    const auto path = dir / kManifestName;
    std::ifstream in(path);
    if (!in) throw std::runtime_error("no manifest at " + path.string());
    try {
        return nlohmann::json::parse(in).get<DatasetManifest>();
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("invalid manifest " + path.string() + ": " + e.what());
    }
}

/// Read-only access to a generated corpus. Shards are verified against the
/// manifest checksum and every decoded scenario against the sampling bounds.
class DatasetReader {
public:
    explicit DatasetReader(std::filesystem::path dir)
        : dir_(std::move(dir)), manifest_(read_manifest(dir_)) {}

    const DatasetManifest& manifest() const { return manifest_; }
    const std::filesystem::path& directory() const { return dir_; }

    std::uint64_t size(Split s) const {
        const auto [b, e] = manifest_.range(s);
        return e - b;
    }

    /// Streams the records of a split in sample-id order, one shard in memory at a time.
    void for_each(Split s, const std::function<void(const SampleRecord&)>& fn) const {
        const auto [begin, end] = manifest_.range(s);
        for_each_in_range(begin, end, fn);
    }

    void for_each_in_range(std::uint64_t begin, std::uint64_t end,
                           const std::function<void(const SampleRecord&)>& fn) const {
        for (const auto& shard : manifest_.shards) {
            const std::uint64_t lo = shard.first_sample_id;
            const std::uint64_t hi = lo + shard.count;
            if (hi <= begin || lo >= end) continue;
            for (const auto& r : read_shard(shard)) {
                if (r.sample_id >= begin && r.sample_id < end) fn(r);
            }
        }
    }

    std::vector<SampleRecord> load(Split s) const {
        std::vector<SampleRecord> out;
        for_each(s, [&](const SampleRecord& r) { out.push_back(r); });
        return out;
    }

    SampleRecord record(std::uint64_t sample_id) const {
        if (sample_id >= manifest_.total_samples)
            throw std::out_of_range("sample id " + std::to_string(sample_id) +
                                    " outside manifest range [0, " +
                                    std::to_string(manifest_.total_samples) + ")");
        std::optional<SampleRecord> found;
        for_each_in_range(sample_id, sample_id + 1, [&](const SampleRecord& r) { found = r; });
        if (!found) throw std::runtime_error("sample " + std::to_string(sample_id) + " missing from shards");
        return *found;
    }

    std::vector<SampleRecord> read_shard(const ShardInfo& shard) const {
        const auto path = dir_ / shard.file;
        const auto bytes = read_file(path);
        if (bytes.size() != shard.bytes || crc32_of(bytes) != shard.crc32)
            throw std::runtime_error("checksum mismatch in shard " + path.string());
        detail::ByteReader rd(bytes);
        const auto magic = rd.take(4);
        if (std::memcmp(magic.data(), kShardMagic, 4) != 0)
            throw std::runtime_error("bad magic in shard " + path.string());
        if (const auto v = rd.u16(); v != kFormatVersion)
            throw std::runtime_error("shard " + path.string() + " has version " + std::to_string(v));
        std::vector<SampleRecord> records;
        records.reserve(shard.count);
        for (std::uint64_t i = 0; i < shard.count; ++i) {
            const std::size_t len = rd.u32();
            SampleRecord r = decode(rd.take(len));
            if (r.sample_id != shard.first_sample_id + i)
                throw std::runtime_error("unexpected sample id in shard " + path.string());
            try {
                validate(r.scenario, manifest_.radar_params);
            } catch (const std::exception& e) {
                throw std::runtime_error("sample " + std::to_string(r.sample_id) +
                                         " out of bounds: " + e.what());
            }
            records.push_back(std::move(r));
        }
        if (rd.remaining() != 0) throw std::runtime_error("trailing bytes in shard " + path.string());
        return records;
    }

private:
    std::filesystem::path dir_;
    DatasetManifest manifest_;
};

}  // namespace arim
