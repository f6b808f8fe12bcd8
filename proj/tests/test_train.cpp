#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "arim/fcn/train.hpp"

using namespace arim;
using namespace arim::fcn;

namespace {

std::vector<SampleRecord> records(std::uint64_t seed, std::size_t n) {
    std::vector<SampleRecord> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(generate_record(seed, i, RadarParams::desk()));
    return out;
}

TrainConfig quick(std::size_t epochs, std::size_t threads = 1) {
    TrainConfig c;
    c.epochs = epochs;
    c.batch_size = 3;
    c.learning_rate = 1e-3;
    c.rng_seed = 4;
    c.threads = threads;
    return c;
}

}  // namespace

TEST(TrainConfig, DefaultsAndValidation) {
    const TrainConfig c;
    EXPECT_EQ(c.epochs, 100u);
    EXPECT_EQ(c.batch_size, 10u);
    EXPECT_EQ(c.learning_rate, 1e-5);
    EXPECT_EQ(c.weight_decay, 1e-5);
    EXPECT_EQ(c.beta1, 0.9);
    EXPECT_EQ(c.beta2, 0.999);
    EXPECT_EQ(c.epsilon, 1e-8);
    TrainConfig bad;
    bad.batch_size = 0;
    EXPECT_THROW(bad.validate(), std::invalid_argument);
    bad = {};
    bad.learning_rate = -1;
    EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(Train, NormalizationMapsTrainingRangeToUnitInterval) {
    const auto data = records(1, 6);
    auto m = FcnModel::build(ArchName::shallow, ScaleProfile::desk(), 1);
    fit_normalization(m, data);
    double lo = 1e9, hi = -1e9;
    for (const auto& r : data) {
        const auto x = model_input(m, to_signal(r.interfered));
        const auto y = model_target(m, to_signal(r.clean));
        for (float v : x.data) lo = std::min<double>(lo, v), hi = std::max<double>(hi, v);
        for (float v : y) {
            EXPECT_GE(v, -1e-6f);
            EXPECT_LE(v, 1.0f + 1e-6f);
        }
    }
    EXPECT_NEAR(lo, 0.0, 1e-6);
    EXPECT_NEAR(hi, 1.0, 1e-6);
}

TEST(Train, EpochZeroIsTheUntrainedModel) {
    const auto data = records(2, 8);
    const std::span<const SampleRecord> tr(data.data(), 6), val(data.data() + 6, 2);
    auto m = FcnModel::build(ArchName::shallow, ScaleProfile::desk(), 9);
    auto fresh = m;
    const auto result = train(m, tr, val, quick(1));
    ASSERT_EQ(result.history.size(), 2u);
    EXPECT_EQ(result.history[0].epoch, 0u);

    fit_normalization(fresh, tr);
    double expect = 0;
    for (const auto& r : val) {
        const auto out = fresh.network.forward(model_input(fresh, to_signal(r.interfered)));
        expect += mse_loss<float>(out.data, model_target(fresh, to_signal(r.clean)));
    }
    EXPECT_NEAR(result.history[0].val_loss, expect / 2, 1e-12);
}

TEST(Train, SameSeedSameHistoryAndWeightsAcrossThreadCounts) {
    const auto data = records(3, 9);
    const std::span<const SampleRecord> tr(data.data(), 7), val(data.data() + 7, 2);
    auto a = FcnModel::build(ArchName::deep, ScaleProfile::desk(), 2);
    auto b = a, c = a;
    const auto ra = train(a, tr, val, quick(3, 1));
    const auto rb = train(b, tr, val, quick(3, 1));
    const auto rc = train(c, tr, val, quick(3, 3));
    for (std::size_t e = 0; e < ra.history.size(); ++e) {
        EXPECT_EQ(ra.history[e].train_loss, rb.history[e].train_loss);
        EXPECT_EQ(ra.history[e].val_loss, rb.history[e].val_loss);
        EXPECT_EQ(ra.history[e].train_loss, rc.history[e].train_loss);
    }
    EXPECT_EQ(a, b);
    EXPECT_EQ(a, c);
}

TEST(Train, BatchLossAndGradientIgnoreSampleOrder) {
    const auto data = records(4, 5);
    auto m = FcnModel::build(ArchName::shallow, ScaleProfile::desk(), 1);
    fit_normalization(m, data);
    const fcn::detail::FeatureSet fs(m, data, 1 << 30, 1);
    std::vector<float> g1, g2;
    const double l1 = batch_gradient(m.network, fs, {0, 1, 2, 3, 4}, g1, 1);
    const double l2 = batch_gradient(m.network, fs, {3, 0, 4, 2, 1}, g2, 2);
    EXPECT_EQ(l1, l2);
    EXPECT_EQ(g1, g2);
}

TEST(Train, UncachedFeaturesMatchCachedOnes) {
    const auto data = records(5, 4);
    auto m = FcnModel::build(ArchName::shallow, ScaleProfile::desk(), 1);
    fit_normalization(m, data);
    const fcn::detail::FeatureSet cached(m, data, 1 << 30, 1), streamed(m, data, 0, 1);
    std::vector<float> g1, g2;
    EXPECT_EQ(batch_gradient(m.network, cached, {0, 1, 2, 3}, g1, 1),
              batch_gradient(m.network, streamed, {0, 1, 2, 3}, g2, 1));
    EXPECT_EQ(g1, g2);
}

TEST(Train, LossDecreasesAndBestSnapshotIsKept) {
    const auto data = records(6, 12);
    const std::span<const SampleRecord> tr(data.data(), 10), val(data.data() + 10, 2);
    auto m = FcnModel::build(ArchName::shallow, ScaleProfile::desk(), 3);
    const auto result = train(m, tr, val, quick(8));
    EXPECT_LT(result.history.back().train_loss, result.history[1].train_loss);
    const auto best = std::min_element(result.history.begin(), result.history.end(),
                                       [](const auto& a, const auto& b) { return a.val_loss < b.val_loss; });
    EXPECT_EQ(result.best_epoch, best->epoch);
    EXPECT_EQ(m.metadata.best_epoch, best->epoch);
    EXPECT_EQ(m.metadata.epochs_seen, 8u);
    // the returned weights are the best epoch's
    const fcn::detail::FeatureSet fv(m, val, 1 << 30, 1);
    EXPECT_NEAR(fcn::detail::mean_loss(m.network, fv, 1), best->val_loss, 1e-12);
    const auto csv = history_csv(result);
    EXPECT_EQ(csv.rfind("epoch,train_loss,val_loss\n", 0), 0u);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 10);
}

TEST(Train, NonFiniteLossAbortsWithContext) {
    const auto data = records(7, 4);
    auto m = FcnModel::build(ArchName::shallow, ScaleProfile::desk(), 3);
    TrainConfig c = quick(2);
    c.learning_rate = 1e30;
    try {
        train(m, data, {}, c);
        FAIL() << "expected divergence";
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("non-finite training loss at epoch"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("batch"), std::string::npos);
    }
}
