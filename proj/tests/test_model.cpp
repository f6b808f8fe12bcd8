#include <gtest/gtest.h>

#include <filesystem>

#include <unistd.h>

#include "arim/fcn/model.hpp"

using namespace arim;
using namespace arim::fcn;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
    return fs::temp_directory_path() / ("arim_model_" + name + "_" + std::to_string(::getpid()) + ".bin");
}

FcnModel trained_looking(ArchName name) {
    auto m = FcnModel::build(name, ScaleProfile::desk(), 5);
    m.normalization = {-240.0, 1.0 / 300.0, -80.0, 1.0 / 120.0};
    m.metadata.epochs_seen = 12;
    m.metadata.best_epoch = 9;
    m.metadata.final_train_loss = 0.0123;
    m.metadata.final_val_loss = 0.0145;
    return m;
}

}  // namespace

TEST(Model, BuildUsesProfileConfig) {
    const auto s = FcnModel::build(ArchName::shallow, ScaleProfile::desk(), 1);
    EXPECT_EQ(s.stft, StftConfig::desk_shallow());
    EXPECT_EQ(s.architecture().input_height, 26u);
    EXPECT_EQ(FcnModel::build(ArchName::deep, ScaleProfile::desk(), 1).architecture().input_height, 39u);
    const auto d = FcnModel::build(ArchName::deep, ScaleProfile::full(), 1);
    EXPECT_EQ(d.architecture().input_height, 1024u);
    EXPECT_EQ(d.output_len(), 2048u);
}

TEST(Model, SaveLoadIsBitwiseRoundTrip) {
    for (auto name : {ArchName::shallow, ArchName::deep}) {
        const auto m = trained_looking(name);
        const auto path = temp_file("rt");
        save(m, path);
        const auto loaded = load(path);
        EXPECT_EQ(loaded, m);
        EXPECT_EQ(serialize(loaded), serialize(m));
        fs::remove(path);
    }
}

TEST(Model, FileStartsWithMagicAndVersion) {
    const auto bytes = serialize(trained_looking(ArchName::shallow));
    EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 7), "ARIMFCN");
    EXPECT_EQ(bytes[7], 1);
    EXPECT_EQ(bytes[8], 0);
    EXPECT_EQ(bytes[9], 0);  // shallow
}

TEST(Model, TruncatedOrCorruptFileRejected) {
    const auto bytes = serialize(trained_looking(ArchName::deep));
    for (std::size_t keep : {std::size_t{0}, std::size_t{5}, std::size_t{40}, bytes.size() - 1}) {
        const std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(keep));
        EXPECT_THROW(deserialize(cut), std::runtime_error) << keep;
    }
    auto flipped = bytes;
    flipped[100] ^= 1;
    EXPECT_THROW(deserialize(flipped), std::runtime_error);
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    EXPECT_THROW(deserialize(bad_magic), std::runtime_error);
}

TEST(Model, VersionMismatchRejected) {
    auto bytes = serialize(trained_looking(ArchName::shallow));
    bytes[7] = 2;
    // re-seal so only the version differs
    const auto crc = crc32_of(std::span(bytes).first(bytes.size() - 4));
    for (int i = 0; i < 4; ++i) bytes[bytes.size() - 4 + i] = static_cast<std::uint8_t>(crc >> (8 * i));
    try {
        deserialize(bytes);
        FAIL();
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("version 2"), std::string::npos);
    }
}

TEST(Model, CrossArchitectureLoadNamesBothIds) {
    const auto path = temp_file("cross");
    save(trained_looking(ArchName::shallow), path);
    try {
        load(path, ArchName::deep);
        FAIL();
    } catch (const std::runtime_error& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("shallow (id 0)"), std::string::npos) << msg;
        EXPECT_NE(msg.find("deep (id 1)"), std::string::npos) << msg;
    }
    EXPECT_NO_THROW(load(path, ArchName::shallow));
    fs::remove(path);
}

TEST(Model, ZeroWeightModelOutputsDenormalizedBias) {
    auto m = FcnModel::build(ArchName::deep, ScaleProfile::desk(), 1);
    for (auto& p : m.network.parameters()) p = 0.0f;
    const auto& arch = m.architecture();
    const std::size_t last = arch.layers.size() - 1;
    m.network.parameters()[m.network.offset(last) + arch.layers[last].conv.weight_count()] = 0.25f;
    m.normalization = {-100.0, 0.01, -60.0, 0.02};
    const auto out = infer(m, to_signal(generate_record(1, 0, RadarParams::desk()).interfered));
    ASSERT_EQ(out.size(), 512u);
    for (double v : out) EXPECT_DOUBLE_EQ(v, 0.25f / 0.02 - 60.0);
}

TEST(Model, BothArchitecturesProduceFullProfiles) {
    const auto signal = to_signal(generate_record(2, 0, RadarParams::desk()).interfered);
    for (auto name : {ArchName::shallow, ArchName::deep}) {
        const auto m = FcnModel::build(name, ScaleProfile::desk(), 3);
        EXPECT_EQ(infer(m, signal).size(), 512u);
    }
    const auto m = FcnModel::build(ArchName::shallow, ScaleProfile::desk(), 3);
    EXPECT_THROW(infer(m, Signal(100)), std::invalid_argument);
}
