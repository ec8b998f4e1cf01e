#include <gtest/gtest.h>

#include <cmath>

#include "dfcaptcha/catalog.hpp"
#include "dfcaptcha/detector.hpp"
#include "dfcaptcha/rng.hpp"

using namespace dfcaptcha;

namespace {

constexpr std::size_t kT = 32;
constexpr std::size_t kD = 16;

std::vector<ResponseSegment> clean_corpus(const ActivityTemplate& tmpl, double natural_std,
                                          int count, std::uint64_t seed) {
    const RngStream root = RngStream(seed).split("corpus");
    std::vector<ResponseSegment> out;
    for (int s = 0; s < count; ++s) {
        RngStream rng = root.split(static_cast<std::uint64_t>(s));
        ResponseSegment seg;
        seg.frames = tmpl.frames;
        for (Frame& f : seg.frames)
            for (double& v : f) v += natural_std * rng.next_gaussian();
        out.push_back(std::move(seg));
    }
    return out;
}

TrainConfig quick_config() {
    TrainConfig cfg;
    cfg.epochs = 8;
    cfg.batch_size = 32;
    return cfg;
}

ResponseSegment one_frame_segment(double value) {
    ResponseSegment seg;
    seg.frames = {Frame{value}};
    return seg;
}

// Model whose score is exactly |x| of a one-dimensional frame.
DetectorModel absolute_value_model(std::vector<double> calibration, double threshold) {
    DetectorModel m;
    m.baseline.mean = {0.0};
    m.baseline.variance = {1.0};
    m.baseline.epsilon = 0.0;
    m.combine = CombineRule::BaselineOnly;
    m.calibration = std::move(calibration);
    m.threshold = threshold;
    return m;
}

} // namespace

TEST(Percentile, PinnedRanks) {
    const std::vector<double> ten{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    // rank = ceil(p/100 * (n+1)) clamped to [1, n]
    EXPECT_EQ(percentile_of(ten, 50.0), 6.0);   // ceil(5.5) = 6
    EXPECT_EQ(percentile_of(ten, 99.0), 10.0);  // ceil(10.89) = 11 -> clamp 10
    EXPECT_EQ(percentile_of(ten, 10.0), 2.0);   // ceil(1.1) = 2
    EXPECT_EQ(percentile_of(ten, 100.0), 10.0);
    std::vector<double> thousand(1000);
    for (std::size_t i = 0; i < 1000; ++i) thousand[i] = static_cast<double>(i + 1);
    EXPECT_EQ(percentile_of(thousand, 99.0), 991.0); // ceil(0.99 * 1001) = 991
}

TEST(Detector, DegenerateCorpusRegularized) {
    // Identical segments of identical frames: zero variance in every dimension.
    ResponseSegment constant;
    constant.frames.assign(kT, Frame(kD, 1.5));
    std::vector<ResponseSegment> corpus(8, constant);
    const DetectorModel model = train_detector(corpus, quick_config());
    for (double v : model.baseline.variance) EXPECT_EQ(v, 0.0);
    const double score = score_segment(model, corpus.front());
    EXPECT_TRUE(std::isfinite(score));

    TrainConfig no_eps = quick_config();
    no_eps.epsilon = 0.0;
    try {
        train_detector(corpus, no_eps);
        FAIL() << "expected DegenerateDimension";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DegenerateDimension);
    }
}

TEST(Detector, TenSigmaClosedForm) {
    StatBaselineModel m;
    m.mean.assign(kD, 2.0);
    m.variance.assign(kD, 4.0); // sigma = 2
    m.epsilon = 1e-12;
    ResponseSegment seg;
    seg.frames.assign(kT, Frame(kD, 2.0 + 10.0 * 2.0)); // mu + 10 sigma elementwise
    EXPECT_NEAR(baseline_score(m, seg), 10.0 * std::sqrt(static_cast<double>(kD)), 1e-6);
    EXPECT_NEAR(baseline_score(m, seg), 40.0, 1e-6);

    ResponseSegment at_mean;
    at_mean.frames.assign(kT, Frame(kD, 2.0));
    EXPECT_EQ(baseline_score(m, at_mean), 0.0);
}

TEST(Detector, GradientMatchesFiniteDifferences) {
    RngStream rng(31415);
    const double h = 1e-5;
    for (int trial = 0; trial < 10; ++trial) {
        GroupAutoencoder g;
        g.begin = 0;
        g.end = 4;
        g.hidden = 3;
        g.w1.resize(12);
        g.b1.resize(3);
        g.w2.resize(12);
        g.b2.resize(4);
        for (double& w : g.w1) w = rng.next_gaussian() * 0.5;
        for (double& w : g.b1) w = rng.next_gaussian() * 0.5;
        for (double& w : g.w2) w = rng.next_gaussian() * 0.5;
        for (double& w : g.b2) w = rng.next_gaussian() * 0.5;
        const std::vector<double> x{rng.next_gaussian(), rng.next_gaussian(), rng.next_gaussian(),
                                    rng.next_gaussian()};

        const ae::Gradient analytic = ae::loss_gradient(g, x.data());
        auto check_block = [&](std::vector<double>& params, const std::vector<double>& grads) {
            for (std::size_t i = 0; i < params.size(); ++i) {
                const double keep = params[i];
                params[i] = keep + h;
                const double up = ae::frame_loss(g, x.data());
                params[i] = keep - h;
                const double down = ae::frame_loss(g, x.data());
                params[i] = keep;
                const double numeric = (up - down) / (2.0 * h);
                const double denom = std::max({std::fabs(numeric), std::fabs(grads[i]), 1e-8});
                EXPECT_LT(std::fabs(numeric - grads[i]) / denom, 1e-4);
            }
        };
        check_block(g.w1, analytic.w1);
        check_block(g.b1, analytic.b1);
        check_block(g.w2, analytic.w2);
        check_block(g.b2, analytic.b2);
    }
}

TEST(Detector, TrainingIsBitDeterministic) {
    const ActivityTemplate tmpl = synthetic_template("det-probe", kT, kD);
    const std::vector<ResponseSegment> corpus = clean_corpus(tmpl, 1.0, 24, 7);
    const DetectorModel a = train_detector(corpus, quick_config());
    const DetectorModel b = train_detector(corpus, quick_config());
    EXPECT_EQ(model_to_json_text(a), model_to_json_text(b));

    TrainConfig other = quick_config();
    other.seed = 43;
    const DetectorModel c = train_detector(corpus, other);
    EXPECT_NE(model_to_json_text(a), model_to_json_text(c));
}

TEST(Detector, ScoresNonnegativeAndRadiallyMonotone) {
    const ActivityTemplate tmpl = synthetic_template("radial-probe", kT, kD);
    const std::vector<ResponseSegment> corpus = clean_corpus(tmpl, 1.0, 32, 11);
    const DetectorModel model = train_detector(corpus, quick_config());

    RngStream rng(5150);
    for (int trial = 0; trial < 50; ++trial) {
        ResponseSegment seg;
        seg.frames.assign(kT, Frame(kD, 0.0));
        for (Frame& f : seg.frames)
            for (double& v : f) v = 10.0 * rng.next_gaussian();
        EXPECT_GE(score_segment(model, seg), 0.0);

        // Scale the deviation from the baseline mean by c >= 1.
        const double c = 1.0 + 3.0 * rng.next_unit();
        ResponseSegment scaled = seg;
        for (Frame& f : scaled.frames)
            for (std::size_t i = 0; i < kD; ++i)
                f[i] = model.baseline.mean[i] + c * (f[i] - model.baseline.mean[i]);
        EXPECT_GE(baseline_score(model.baseline, scaled) + 1e-12,
                  baseline_score(model.baseline, seg));
    }
}

TEST(Detector, LossNonIncreasingOrStableAfterHalving) {
    const ActivityTemplate tmpl = synthetic_template("loss-probe", kT, kD);
    const std::vector<ResponseSegment> corpus = clean_corpus(tmpl, 1.0, 32, 13);

    TrainConfig cfg;
    cfg.epochs = 20;
    auto monotone = [](const std::vector<double>& loss) {
        for (std::size_t i = 1; i < loss.size(); ++i)
            if (loss[i] > loss[i - 1] + 1e-9) return false;
        return true;
    };
    DetectorModel model = train_detector(corpus, cfg);
    if (!monotone(model.epoch_loss)) {
        cfg.learning_rate /= 2.0; // stability-bound probe
        model = train_detector(corpus, cfg);
        EXPECT_TRUE(monotone(model.epoch_loss));
    }
    EXPECT_LE(model.epoch_loss.back(), model.epoch_loss.front() + 1e-9);
}

TEST(Detector, DecideEndpointsAndMedian) {
    const DetectorModel m = absolute_value_model({1.0, 2.0, 3.0, 4.0}, 3.0);

    Verdict at_min = decide(m, one_frame_segment(1.0));
    EXPECT_EQ(at_min.outcome, VerdictOutcome::Pass);
    EXPECT_EQ(at_min.confidence, 1.0);

    Verdict above_max = decide(m, one_frame_segment(5.0));
    EXPECT_EQ(above_max.outcome, VerdictOutcome::Fail);
    EXPECT_EQ(above_max.confidence, 1.0);

    Verdict at_median = decide(m, one_frame_segment(3.0));
    EXPECT_EQ(at_median.outcome, VerdictOutcome::Pass); // not strictly above threshold
    EXPECT_EQ(at_median.confidence, 0.5);
    EXPECT_EQ(at_median.reason, VerdictReason::Scored);
    EXPECT_EQ(at_median.evidence.frames.size(), 1u);

    Verdict just_above = decide(m, one_frame_segment(3.5));
    EXPECT_EQ(just_above.outcome, VerdictOutcome::Fail);
    EXPECT_EQ(just_above.confidence, 0.75);
}

TEST(Detector, FailIffScoreAboveThresholdAndThresholdReproducible) {
    const ActivityTemplate tmpl = synthetic_template("thr-probe", kT, kD);
    const std::vector<ResponseSegment> corpus = clean_corpus(tmpl, 1.0, 64, 17);
    const DetectorModel model = train_detector(corpus, quick_config());
    EXPECT_EQ(model.threshold, percentile_of(model.calibration, model.trained_with.percentile));

    RngStream rng(23);
    for (int trial = 0; trial < 100; ++trial) {
        ResponseSegment seg;
        seg.frames = tmpl.frames;
        const double bump = rng.next_unit() * 3.0;
        for (Frame& f : seg.frames)
            for (double& v : f) v += bump + rng.next_gaussian();
        const Verdict v = decide(model, seg);
        EXPECT_EQ(v.outcome == VerdictOutcome::Fail, v.anomaly_score > model.threshold);
        EXPECT_EQ(v.anomaly_score, score_segment(model, seg));
    }
}

TEST(Detector, SerializationPreservesScoresExactly) {
    const ActivityTemplate tmpl = synthetic_template("ser-probe", kT, kD);
    const std::vector<ResponseSegment> corpus = clean_corpus(tmpl, 1.0, 24, 19);
    const DetectorModel model = train_detector(corpus, quick_config());
    const DetectorModel back = model_from_json_text(model_to_json_text(model));
    EXPECT_EQ(model_to_json_text(back), model_to_json_text(model));

    RngStream rng(29);
    for (int trial = 0; trial < 25; ++trial) {
        ResponseSegment seg;
        seg.frames = tmpl.frames;
        for (Frame& f : seg.frames)
            for (double& v : f) v += rng.next_gaussian() * 2.0;
        EXPECT_EQ(score_segment(model, seg), score_segment(back, seg));
    }
}

TEST(Detector, TamperedModelFilesRejected) {
    const ActivityTemplate tmpl = synthetic_template("tamper-probe", kT, kD);
    const DetectorModel model = train_detector(clean_corpus(tmpl, 1.0, 8, 5), quick_config());
    const std::string good = model_to_json_text(model);

    auto mutated = [&](auto&& mutate) {
        auto j = nlohmann::ordered_json::parse(good);
        mutate(j);
        return j.dump();
    };
    // Variance that the regularizer cannot rescue.
    EXPECT_THROW(model_from_json_text(mutated([](auto& j) {
                     j["baseline"]["variance"][0] = -1.0;
                     j["baseline"]["epsilon"] = 0.0;
                 })),
                 Error);
    // Weight shape no longer matches the group geometry.
    EXPECT_THROW(model_from_json_text(mutated([](auto& j) {
                     j["ensemble"]["groups"][0]["w1"].push_back(0.5);
                 })),
                 Error);
    // Unsorted calibration list.
    EXPECT_THROW(model_from_json_text(mutated([](auto& j) {
                     j["calibration"][0] = 1e9;
                 })),
                 Error);
    EXPECT_NO_THROW(model_from_json_text(good));
}

TEST(Detector, ErrorPaths) {
    EXPECT_THROW(train_detector({}, quick_config()), Error);

    const ActivityTemplate tmpl = synthetic_template("err-probe", kT, kD);
    const std::vector<ResponseSegment> corpus = clean_corpus(tmpl, 1.0, 8, 3);
    const DetectorModel model = train_detector(corpus, quick_config());

    ResponseSegment wrong;
    wrong.frames.assign(4, Frame(kD - 1, 0.0));
    EXPECT_THROW(score_segment(model, wrong), Error);
    EXPECT_THROW(score_segment(model, ResponseSegment{}), Error);

    TrainConfig bad = quick_config();
    bad.groups = static_cast<int>(kD) + 1;
    EXPECT_THROW(train_detector(corpus, bad), Error);
}

TEST(Detector, FreshCleanFailRateNearCalibrationTarget) {
    const ActivityTemplate tmpl = synthetic_template("cal-probe", kT, kD);
    const std::vector<ResponseSegment> corpus = clean_corpus(tmpl, 1.0, 512, 37);
    const DetectorModel model = train_detector(corpus, quick_config());

    const int n = 2000;
    const std::vector<ResponseSegment> fresh = clean_corpus(tmpl, 1.0, n, 38);
    int fails = 0;
    for (const ResponseSegment& seg : fresh)
        fails += decide(model, seg).outcome == VerdictOutcome::Fail;
    const double rate = static_cast<double>(fails) / n;
    EXPECT_GT(rate, 0.001);
    EXPECT_LT(rate, 0.035);
}
