#include <gtest/gtest.h>

#include <cmath>

#include "dfcaptcha/catalog.hpp"
#include "dfcaptcha/extraction.hpp"
#include "dfcaptcha/rng.hpp"

using namespace dfcaptcha;

namespace {

ChallengeSpec probe_challenge(std::size_t T = 32, std::size_t d = 16) {
    ChallengeSpec c;
    c.id = "probe";
    c.name = "Probe";
    c.category = ChallengeCategory::Technology;
    c.modality = Modality::Video;
    c.burden = 0.3;
    c.coverage_prior = 0.2;
    c.response_window_s = 4.0;
    c.activity = synthetic_template("probe", T, d);
    return c;
}

FeatureStream zero_stream(std::size_t n, std::size_t d) {
    FeatureStream s;
    s.frames.assign(n, Frame(d, 0.0));
    return s;
}

void embed(FeatureStream& s, const ActivityTemplate& t, std::size_t offset) {
    for (std::size_t k = 0; k < t.length(); ++k) s.frames[offset + k] = t.frames[k];
}

// Independently coded exhaustive-search locator: two-pass means, explicit
// per-element loops. Must match extract_response exactly.
struct OracleResult {
    std::size_t offset;
    double score;
};

OracleResult oracle_locate(const FeatureStream& stream, const ActivityTemplate& tmpl) {
    const std::size_t T = tmpl.length();
    const std::size_t d = tmpl.dim();
    double best = -2.0;
    std::size_t best_offset = 0;
    for (std::size_t o = 0; o + T <= stream.frames.size(); ++o) {
        double wmean = 0.0, tmean = 0.0;
        for (std::size_t k = 0; k < T; ++k)
            for (std::size_t i = 0; i < d; ++i) {
                wmean += stream.frames[o + k][i];
                tmean += tmpl.frames[k][i];
            }
        wmean /= static_cast<double>(T * d);
        tmean /= static_cast<double>(T * d);
        double dot = 0.0, wn = 0.0, tn = 0.0;
        for (std::size_t k = 0; k < T; ++k)
            for (std::size_t i = 0; i < d; ++i) {
                const double w = stream.frames[o + k][i] - wmean;
                const double t = tmpl.frames[k][i] - tmean;
                dot += w * t;
                wn += w * w;
                tn += t * t;
            }
        double corr = 0.0;
        if (wn > 0.0 && tn > 0.0)
            corr = std::clamp(dot / (std::sqrt(wn) * std::sqrt(tn)), -1.0, 1.0);
        if (corr > best) {
            best = corr;
            best_offset = o;
        }
    }
    return {best_offset, best};
}

} // namespace

TEST(Extraction, ExactCopyFoundAtOffset17) {
    const ChallengeSpec c = probe_challenge();
    FeatureStream s = zero_stream(96, 16);
    embed(s, c.activity, 17);
    const LocalizationResult r = extract_response(s, c);
    EXPECT_EQ(r.segment.source_offset, 17u);
    EXPECT_NEAR(r.match_score, 1.0, 1e-12);
    EXPECT_EQ(r.segment.frames, c.activity.frames);

    const OracleResult o = oracle_locate(s, c.activity);
    EXPECT_EQ(o.offset, 17u);
}

TEST(Extraction, StreamTooShort) {
    const ChallengeSpec c = probe_challenge();
    try {
        extract_response(zero_stream(31, 16), c);
        FAIL() << "expected StreamTooShort";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::StreamTooShort);
    }
}

TEST(Extraction, DimensionMismatch) {
    const ChallengeSpec c = probe_challenge();
    try {
        extract_response(zero_stream(64, 8), c);
        FAIL() << "expected DimensionMismatch";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
    }
}

TEST(Extraction, FlatStreamScoresZeroAtEarliestOffset) {
    const ChallengeSpec c = probe_challenge();
    FeatureStream s;
    s.frames.assign(64, Frame(16, 3.5)); // constant everywhere -> zero variance
    const LocalizationResult r = extract_response(s, c);
    EXPECT_EQ(r.segment.source_offset, 0u);
    EXPECT_EQ(r.match_score, 0.0);
}

TEST(Extraction, NoActivityFloor) {
    const ChallengeSpec c = probe_challenge();
    FeatureStream s;
    s.frames.assign(64, Frame(16, 3.5));
    ExtractionOptions opt;
    opt.min_match = 0.5;
    try {
        extract_response(s, c, opt);
        FAIL() << "expected NoActivity";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NoActivity);
    }
}

TEST(Extraction, ShiftEquivariance) {
    const ChallengeSpec c = probe_challenge();
    RngStream rng(404);
    for (std::size_t k : {0u, 1u, 5u, 23u, 64u - 32u}) {
        FeatureStream s = zero_stream(64, 16);
        embed(s, c.activity, k);
        const LocalizationResult r = extract_response(s, c);
        EXPECT_EQ(r.segment.source_offset, k);
    }
}

TEST(Extraction, ConstantOffsetInvariance) {
    const ChallengeSpec c = probe_challenge();
    RngStream rng(555);
    FeatureStream s = zero_stream(80, 16);
    embed(s, c.activity, 11);
    for (Frame& f : s.frames)
        for (double& v : f) v += 0.2 * rng.next_gaussian();

    const LocalizationResult base = extract_response(s, c);
    FeatureStream shifted = s;
    for (Frame& f : shifted.frames)
        for (double& v : f) v += 42.75;
    const LocalizationResult moved = extract_response(shifted, c);
    EXPECT_EQ(moved.segment.source_offset, base.segment.source_offset);
    EXPECT_NEAR(moved.match_score, base.match_score, 1e-9);
}

TEST(Extraction, MatchesOracleOnRandomStreams) {
    RngStream rng(2025);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t T = 4 + rng.next_below(12);
        const std::size_t d = 1 + rng.next_below(6);
        ChallengeSpec c;
        c.id = "r-probe";
        c.name = "r";
        c.burden = 0.1;
        c.coverage_prior = 0.1;
        c.response_window_s = 2.0;
        c.activity.frames.assign(T, Frame(d, 0.0));
        for (Frame& f : c.activity.frames)
            for (double& v : f) v = rng.next_gaussian();

        const std::size_t n = T + rng.next_below(256 - T + 1);
        FeatureStream s;
        s.frames.assign(n, Frame(d, 0.0));
        for (Frame& f : s.frames)
            for (double& v : f) v = rng.next_gaussian();
        // Sometimes plant a noisy copy.
        if (rng.next_below(2)) {
            const std::size_t at = rng.next_below(n - T + 1);
            for (std::size_t k = 0; k < T; ++k)
                for (std::size_t i = 0; i < d; ++i)
                    s.frames[at + k][i] = c.activity.frames[k][i] + 0.3 * rng.next_gaussian();
        }

        const LocalizationResult got = extract_response(s, c);
        const OracleResult want = oracle_locate(s, c.activity);
        EXPECT_EQ(got.segment.source_offset, want.offset);
        EXPECT_DOUBLE_EQ(got.match_score, want.score);
    }
}
