#include <gtest/gtest.h>

#include <cmath>

#include "dfcaptcha/catalog.hpp"
#include "dfcaptcha/simulation.hpp"

using namespace dfcaptcha;

namespace {

ChallengeSpec make_challenge(const std::string& id, double coverage_prior = 0.2) {
    ChallengeSpec c;
    c.id = id;
    c.name = id;
    c.category = ChallengeCategory::Technology;
    c.modality = Modality::Video;
    c.burden = 0.3;
    c.coverage_prior = coverage_prior;
    c.response_window_s = 4.0;
    c.activity = synthetic_template(id);
    return c;
}

std::vector<ResponseSegment> clean_corpus(const ChallengeSpec& c, double natural_std, int count,
                                          std::uint64_t seed) {
    const RngStream root = RngStream(seed).split("corpus").split(c.id);
    std::vector<ResponseSegment> out;
    for (int s = 0; s < count; ++s) {
        RngStream rng = root.split(static_cast<std::uint64_t>(s));
        ResponseSegment seg;
        seg.frames = c.activity.frames;
        for (Frame& f : seg.frames)
            for (double& v : f) v += natural_std * rng.next_gaussian();
        out.push_back(std::move(seg));
    }
    return out;
}

Scenario make_scenario(const std::vector<ChallengeSpec>& challenges,
                       const std::set<std::string>& coverage, double artifact_amp,
                       bool discontinuity, const ChannelConfig& channel,
                       int train_segments = 128) {
    Scenario sc;
    sc.session.catalog = validate_catalog(challenges);
    sc.session.context.modality = Modality::Video;
    sc.session.context.quality = 0.9;
    sc.session.context.indicators.new_unverified_caller = true;
    sc.session.context.indicators.identity_masked = true;
    sc.session.context.indicators.liveness = 0.4;
    sc.genuine = GenuineAgentConfig{1.0, 2, 0.5};
    sc.deepfake.coverage = coverage;
    sc.deepfake.artifact_amp = artifact_amp;
    if (artifact_amp > 0) {
        sc.deepfake.artifact_dims.resize(16);
        for (std::size_t i = 0; i < 16; ++i) sc.deepfake.artifact_dims[i] = i;
    }
    sc.deepfake.discontinuity = discontinuity;
    sc.deepfake.reaction_latency_s = 0.5;
    sc.channel = channel;

    TrainConfig train;
    train.epochs = 6;
    for (const ChallengeSpec& c : sc.session.catalog.challenges)
        sc.models.emplace(c.id, train_detector(clean_corpus(c, 1.0, train_segments, 99), train));
    return sc;
}

} // namespace

// --- synthesis -------------------------------------------------------------

TEST(Synthesis, CoveredDeepfakeBitIdenticalToGenuine) {
    const ChallengeSpec c = make_challenge("cover-probe");
    const GenuineAgentConfig genuine{1.0, 2, 0.5};
    DeepfakeAgentConfig attacker;
    attacker.coverage = {"cover-probe"};
    attacker.artifact_amp = 10.0;
    attacker.artifact_dims = {0, 1, 2};
    attacker.discontinuity = true;
    attacker.reaction_latency_s = 0.5; // genuine-identical

    RngStream r1(42), r2(42);
    const FeatureStream a = synthesize_response(genuine, c, 25.0, r1);
    const FeatureStream b = synthesize_response(genuine, attacker, c, 25.0, r2);
    EXPECT_EQ(a.frames, b.frames);
}

TEST(Synthesis, NoArtifactConfigReducesToGenuineRule) {
    const ChallengeSpec c = make_challenge("null-probe");
    const GenuineAgentConfig genuine{1.0, 2, 0.5};
    DeepfakeAgentConfig attacker; // empty coverage
    attacker.artifact_amp = 0.0;
    attacker.discontinuity = false;
    attacker.reaction_latency_s = 0.5;

    RngStream r1(7), r2(7);
    const FeatureStream a = synthesize_response(genuine, c, 25.0, r1);
    const FeatureStream b = synthesize_response(genuine, attacker, c, 25.0, r2);
    EXPECT_EQ(a.frames, b.frames);
}

TEST(Synthesis, StreamShapeAndDeterminism) {
    const ChallengeSpec c = make_challenge("shape-probe");
    const GenuineAgentConfig genuine{1.0, 2, 0.5};
    RngStream r1(3), r2(3), r3(4);
    const FeatureStream a = synthesize_response(genuine, c, 25.0, r1);
    EXPECT_EQ(a.frames.size(), 100u + 32u); // window frames + T
    EXPECT_EQ(a.dim(), 16u);
    const FeatureStream b = synthesize_response(genuine, c, 25.0, r2);
    EXPECT_EQ(a.frames, b.frames);
    const FeatureStream other = synthesize_response(genuine, c, 25.0, r3);
    EXPECT_NE(a.frames, other.frames);
}

// --- channel -----------------------------------------------------------------

TEST(Channel, IdentityWhenAllParametersZero) {
    FeatureStream s;
    s.frames = {{0.1, -0.2}, {3.0, 4.0}, {-1.5, 0.0}};
    RngStream rng(1);
    const FeatureStream out = apply_channel(s, ChannelConfig{}, rng);
    EXPECT_EQ(out.frames, s.frames);
}

TEST(Channel, QuantizationTiesToEven) {
    FeatureStream s;
    s.frames = {{0.74, 0.75, 1.25, -0.25}};
    ChannelConfig ch;
    ch.quant_step = 0.5;
    RngStream rng(1);
    const FeatureStream out = apply_channel(s, ch, rng);
    EXPECT_EQ(out.frames[0][0], 0.5);  // 1.48 -> 1
    EXPECT_EQ(out.frames[0][1], 1.0);  // 1.5  -> 2 (even)
    EXPECT_EQ(out.frames[0][2], 1.0);  // 2.5  -> 2 (even)
    EXPECT_EQ(out.frames[0][3], 0.0);  // -0.5 -> -0 (even)
}

TEST(Channel, FirstFrameNeverDroppedAndHeldFramesRepeat) {
    FeatureStream s;
    s.frames = {{1.0}, {2.0}, {3.0}, {4.0}};
    ChannelConfig ch;
    ch.drop_prob = 1.0;
    RngStream rng(5);
    const FeatureStream out = apply_channel(s, ch, rng);
    for (const Frame& f : out.frames) EXPECT_EQ(f[0], 1.0);
}

TEST(Channel, QuantizationScorePerturbationBound) {
    // Brute force over a clean corpus: quantization at q = 0.1 moves each
    // value by at most q/2, so the baseline score moves by at most
    // (q/2) * sqrt(sum_i 1/(var_i + eps)); the combined score stays within
    // the measured bound, which is printed for the record.
    const ChallengeSpec c = make_challenge("quant-probe");
    const std::vector<ResponseSegment> corpus = clean_corpus(c, 1.0, 300, 77);
    TrainConfig train;
    train.epochs = 6;
    const DetectorModel model = train_detector(corpus, train);

    const double q = 0.1;
    double analytic = 0.0;
    for (double var : model.baseline.variance) analytic += 1.0 / (var + model.baseline.epsilon);
    analytic = (q / 2.0) * std::sqrt(analytic);

    double worst_baseline = 0.0, worst_combined = 0.0;
    for (const ResponseSegment& seg : corpus) {
        ResponseSegment quantized = seg;
        for (Frame& f : quantized.frames)
            for (double& v : f) v = q * std::nearbyint(v / q);
        worst_baseline = std::max(worst_baseline,
                                  std::fabs(baseline_score(model.baseline, quantized) -
                                            baseline_score(model.baseline, seg)));
        worst_combined = std::max(worst_combined, std::fabs(score_segment(model, quantized) -
                                                            score_segment(model, seg)));
    }
    EXPECT_LE(worst_baseline, analytic);
    EXPECT_LT(worst_combined, 0.2); // far below the clean-to-threshold gap
    std::printf("quantization q=%.2f score drift: baseline<=%.4f (analytic %.4f) combined<=%.4f\n",
                q, worst_baseline, analytic, worst_combined);
}

TEST(Channel, DeterministicGivenSubstream) {
    FeatureStream s;
    s.frames.assign(50, Frame(4, 1.0));
    ChannelConfig ch;
    ch.noise_std = 0.3;
    ch.drop_prob = 0.1;
    ch.quant_step = 0.05;
    RngStream r1(77), r2(77);
    EXPECT_EQ(apply_channel(s, ch, r1).frames, apply_channel(s, ch, r2).frames);
}

// --- episodes ------------------------------------------------------------------

TEST(Episode, TenSigmaArtifactMatchesBaselineOracle) {
    Scenario sc = make_scenario({make_challenge("only-one")}, {}, 10.0, false,
                                ChannelConfig{}); // noiseless channel
    sc.genuine.jitter_frames = 0;                 // exact alignment for the closed form
    const EpisodeOutcome out = run_episode(sc, TruthClass::Deepfake, 1234);
    ASSERT_EQ(out.rounds, 1);
    EXPECT_EQ(out.final, FinalOutcome::Rejected);
    const Verdict& v = out.round_details[0].verdict;
    const DetectorModel& model = sc.models.at("only-one");

    // Independent recomputation of the baseline formula on the evidence.
    double oracle = 0.0;
    for (const Frame& f : v.evidence.frames) {
        double sq = 0.0;
        for (std::size_t i = 0; i < f.size(); ++i) {
            const double dv = f[i] - model.baseline.mean[i];
            sq += dv * dv / (model.baseline.variance[i] + model.baseline.epsilon);
        }
        oracle += std::sqrt(sq);
    }
    oracle /= static_cast<double>(v.evidence.frames.size());
    EXPECT_NEAR(baseline_score(model.baseline, v.evidence), oracle, 1e-9);

    // Closed form for a 10-sigma-of-natural-noise shift on every dimension:
    // per-frame distance^2 concentrates at sum_i (A^2 + var_i) / var_i.
    double expected_sq = 0.0;
    for (double var : model.baseline.variance) expected_sq += (100.0 + var) / var;
    EXPECT_NEAR(oracle, std::sqrt(expected_sq), 0.1 * std::sqrt(expected_sq));

    // The combined verdict score can only sharpen the baseline's alarm.
    EXPECT_GE(v.anomaly_score, oracle - 1e-9);
    EXPECT_GT(v.anomaly_score, model.threshold);
}

TEST(Episode, SlowCallerTimesOut) {
    Scenario sc = make_scenario({make_challenge("slow-probe")}, {}, 5.0, false, ChannelConfig{});
    sc.deepfake.reaction_latency_s = 60.0; // far beyond window + grace
    const EpisodeOutcome out = run_episode(sc, TruthClass::Deepfake, 9);
    EXPECT_EQ(out.final, FinalOutcome::Rejected);
    ASSERT_GE(out.rounds, 1);
    for (const RoundRecord& r : out.round_details)
        EXPECT_EQ(r.verdict.reason, VerdictReason::Timeout);
}

TEST(Episode, GenuineCallerUsuallyAccepted) {
    ChannelConfig mild;
    mild.quant_step = 0.1;
    mild.noise_std = 0.1;
    mild.drop_prob = 0.02;
    const Scenario sc = make_scenario(
        {make_challenge("g-one"), make_challenge("g-two"), make_challenge("g-three")}, {}, 5.0,
        false, mild);
    int accepted = 0;
    const int n = 50;
    for (int i = 0; i < n; ++i)
        accepted += run_episode(sc, TruthClass::Genuine, 1000 + i).final == FinalOutcome::Accepted;
    EXPECT_GE(accepted, n - 2);
}

TEST(Episode, DeterministicGivenSeed) {
    ChannelConfig mild;
    mild.noise_std = 0.1;
    mild.drop_prob = 0.05;
    const Scenario sc =
        make_scenario({make_challenge("d-one"), make_challenge("d-two")}, {}, 3.0, true, mild);
    for (const TruthClass truth : {TruthClass::Genuine, TruthClass::Deepfake}) {
        EpisodeOutcome a = run_episode(sc, truth, 555);
        EpisodeOutcome b = run_episode(sc, truth, 555);
        a.index = b.index = 0;
        EXPECT_EQ(episode_to_json_line(a), episode_to_json_line(b));
    }
}

TEST(Synthesis, DiscontinuityRotatesSecondHalfOfResponse) {
    const ChallengeSpec c = make_challenge("jump-probe");
    const GenuineAgentConfig genuine{1.0, 0, 0.0}; // response starts at frame 0
    DeepfakeAgentConfig attacker;
    attacker.artifact_amp = 0.0;
    attacker.discontinuity = true;
    attacker.reaction_latency_s = 0.0;

    RngStream r1(12), r2(12);
    const FeatureStream plain = synthesize_response(genuine, c, 25.0, r1);
    const FeatureStream jumped = synthesize_response(genuine, attacker, c, 25.0, r2);
    ASSERT_EQ(plain.frames.size(), jumped.frames.size());

    const std::size_t T = c.activity.length(); // 32: second half [16,32) rotated left by 8
    for (std::size_t t = 0; t < T / 2; ++t) EXPECT_EQ(jumped.frames[t], plain.frames[t]);
    for (std::size_t t = T / 2; t < T; ++t) {
        const std::size_t src = T / 2 + (t - T / 2 + T / 4) % (T / 2);
        EXPECT_EQ(jumped.frames[t], plain.frames[src]) << "frame " << t;
    }
    for (std::size_t t = T; t < plain.frames.size(); ++t)
        EXPECT_EQ(jumped.frames[t], plain.frames[t]);
}

// --- experiments ------------------------------------------------------------------

TEST(Experiment, SingleEpisodeAucIsDegenerate) {
    const Scenario sc = make_scenario({make_challenge("x-one"), make_challenge("x-two")}, {}, 5.0,
                                      false, ChannelConfig{});
    const ExperimentResult r = run_experiment(sc, 1, 42);
    EXPECT_EQ(r.report.episodes_per_class, 1);
    EXPECT_TRUE(r.report.auc == 0.0 || r.report.auc == 0.5 || r.report.auc == 1.0);
    EXPECT_EQ(r.episodes.size(), 2u);
    EXPECT_EQ(r.episodes[0].truth, TruthClass::Genuine);
    EXPECT_EQ(r.episodes[1].truth, TruthClass::Deepfake);
    EXPECT_EQ(r.episodes[0].seed, 42u ^ 0u);
    EXPECT_EQ(r.episodes[1].seed, 42u ^ 1u);
}

TEST(Experiment, ParallelismDoesNotChangeResults) {
    ChannelConfig mild;
    mild.quant_step = 0.1;
    mild.noise_std = 0.1;
    mild.drop_prob = 0.02;
    const Scenario sc = make_scenario(
        {make_challenge("p-one"), make_challenge("p-two"), make_challenge("p-three")}, {}, 5.0,
        false, mild, 64);
    const ExperimentResult serial = run_experiment(sc, 20, 321, 1);
    const ExperimentResult parallel = run_experiment(sc, 20, 321, 4);
    EXPECT_EQ(report_to_json_text(serial.report), report_to_json_text(parallel.report));
    ASSERT_EQ(serial.episodes.size(), parallel.episodes.size());
    for (std::size_t i = 0; i < serial.episodes.size(); ++i)
        EXPECT_EQ(episode_to_json_line(serial.episodes[i]),
                  episode_to_json_line(parallel.episodes[i]));
}

TEST(Experiment, StrongArtifactsSeparateClasses) {
    ChannelConfig mild;
    mild.quant_step = 0.1;
    mild.noise_std = 0.1;
    mild.drop_prob = 0.02;
    const Scenario sc = make_scenario(
        {make_challenge("s-one"), make_challenge("s-two"), make_challenge("s-three")}, {}, 5.0,
        false, mild, 128);
    const ExperimentResult r = run_experiment(sc, 60, 777);
    EXPECT_GE(r.report.tpr, 0.95);
    EXPECT_LE(r.report.fpr, 0.05);
    EXPECT_GE(r.report.auc, 0.99);
    EXPECT_EQ(r.report.config_digest.size(), 16u);
    for (const EpisodeOutcome& e : r.episodes) {
        EXPECT_GE(e.rounds, 1);
        EXPECT_LE(e.rounds, sc.session.rechallenge_budget + 1);
        EXPECT_EQ(e.rounds, static_cast<int>(e.round_details.size()));
    }
}

TEST(Experiment, UtilitySelectorBeatsRandomUnderMixedCoverage) {
    ChannelConfig mild;
    mild.noise_std = 0.1;
    // Attacker covers the challenges with high coverage priors; the utility
    // selector prefers the low-prior (uncovered) ones. Enough uncovered
    // entries exist to fill every rechallenge round.
    std::vector<ChallengeSpec> mixed{
        make_challenge("covered-a", 0.9), make_challenge("covered-b", 0.85),
        make_challenge("open-a", 0.1),    make_challenge("open-b", 0.15),
        make_challenge("open-c", 0.2),    make_challenge("open-d", 0.25)};
    Scenario sc = make_scenario(mixed, {"covered-a", "covered-b"}, 5.0, false, mild, 64);

    Scenario random_sc = sc;
    random_sc.selection_mode = SelectionMode::UniformRandom;
    const ExperimentResult with_utility = run_experiment(sc, 60, 2468);
    const ExperimentResult with_random = run_experiment(random_sc, 60, 2468);
    EXPECT_GE(with_utility.report.tpr, with_random.report.tpr);
    EXPECT_GE(with_utility.report.tpr, 0.95);
    EXPECT_LT(with_random.report.tpr, 0.9); // random picks covered ones often
}

TEST(Experiment, ValidationCatchesBrokenScenarios) {
    Scenario sc = make_scenario({make_challenge("v-one")}, {}, 5.0, false, ChannelConfig{});
    sc.models.clear();
    EXPECT_THROW(run_experiment(sc, 2, 1), Error);

    Scenario quiet = make_scenario({make_challenge("v-two")}, {}, 5.0, false, ChannelConfig{});
    quiet.session.context.indicators = SuspicionIndicators{}; // nothing suspicious
    EXPECT_THROW(run_experiment(quiet, 2, 1), Error);

    const Scenario ok = make_scenario({make_challenge("v-three")}, {}, 5.0, false, ChannelConfig{});
    EXPECT_THROW(run_experiment(ok, 0, 1), Error);
}
