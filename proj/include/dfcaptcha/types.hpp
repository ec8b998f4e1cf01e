#pragma once

// Shared domain model for the call-screening pipeline: challenges, call
// context, captured feature streams, and verdicts. Values are immutable
// after validation and safe to share across threads.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dfcaptcha/errors.hpp"

namespace dfcaptcha {

// Channels a call (or a challenge) uses. A challenge is only eligible when
// its channels are a subset of the call's channels.
enum class Modality { Audio, Video, AudioVideo };

enum class ChallengeCategory { Technology, OutOfDistribution, AudioChallenge };

enum class CallerStatus { Indoors, Outdoors, Seated, Standing, Unknown };

using Frame = std::vector<double>;

// The anticipated activity pattern for a challenge: T frames of d features.
struct ActivityTemplate {
    std::vector<Frame> frames;

    std::size_t length() const noexcept { return frames.size(); }
    std::size_t dim() const noexcept { return frames.empty() ? 0 : frames.front().size(); }
};

struct ChallengeSpec {
    std::string id;   // unique, lowercase kebab-case
    std::string name;
    ChallengeCategory category = ChallengeCategory::Technology;
    Modality modality = Modality::Video;
    double burden = 0.0;          // user effort cost in [0,1]
    double coverage_prior = 0.0;  // prior that a generic attacker renders it cleanly, [0,1]
    double response_window_s = 4.0;
    std::vector<CallerStatus> excluded_status; // optional eligibility exclusions
    ActivityTemplate activity;
};

struct SuspicionIndicators {
    bool new_unverified_caller = false;
    bool malicious_network_history = false;
    bool identity_masked = false;
    double liveness = 1.0; // 1 = fully live; clamped to [0,1] wherever consumed
    bool manual_request = false;
};

struct CallContext {
    Modality modality = Modality::AudioVideo;
    double quality = 1.0; // channel quality estimate, 1 = pristine
    CallerStatus caller_status = CallerStatus::Unknown;
    SuspicionIndicators indicators;
};

// Time-indexed feature vectors of the captured call.
struct FeatureStream {
    std::vector<Frame> frames;
    double frame_rate_hz = 25.0;

    std::size_t length() const noexcept { return frames.size(); }
    std::size_t dim() const noexcept { return frames.empty() ? 0 : frames.front().size(); }
};

// The extracted response window R: exactly T frames starting at
// source_offset in the parent stream. An empty segment is the pinned
// "no evidence" marker used by timeout and extraction-failure verdicts.
struct ResponseSegment {
    std::vector<Frame> frames;
    std::size_t source_offset = 0;

    std::size_t length() const noexcept { return frames.size(); }
    std::size_t dim() const noexcept { return frames.empty() ? 0 : frames.front().size(); }
    bool empty() const noexcept { return frames.empty(); }
};

enum class VerdictOutcome { Pass, Fail };
enum class VerdictReason { Scored, Timeout, ExtractionFailed };

struct Verdict {
    VerdictOutcome outcome = VerdictOutcome::Fail;
    double anomaly_score = 0.0;
    double confidence = 0.0; // in [0,1]
    ResponseSegment evidence;
    VerdictReason reason = VerdictReason::Scored;
};

// Fixed rule: a deadline miss is a Fail with full confidence and no evidence.
inline Verdict timeout_verdict() {
    return Verdict{VerdictOutcome::Fail, 0.0, 1.0, ResponseSegment{}, VerdictReason::Timeout};
}

inline Verdict extraction_failed_verdict() {
    return Verdict{VerdictOutcome::Fail, 0.0, 1.0, ResponseSegment{}, VerdictReason::ExtractionFailed};
}

// --- validation -------------------------------------------------------

namespace check {

inline void in_unit_range(double v, const char* field, const std::string& owner) {
    if (!(v >= 0.0 && v <= 1.0))
        throw Error(ErrorCode::InvariantViolation,
                    std::string(field) + " out of [0,1] in " + owner);
}

} // namespace check

inline void validate_template(const ActivityTemplate& t, const std::string& owner = "template") {
    if (t.frames.size() < 2)
        throw Error(ErrorCode::InvariantViolation, "template length < 2 in " + owner);
    const std::size_t d = t.frames.front().size();
    if (d == 0)
        throw Error(ErrorCode::InvariantViolation, "template dimension is 0 in " + owner);
    for (const Frame& f : t.frames)
        if (f.size() != d)
            throw Error(ErrorCode::InvariantViolation, "ragged template frames in " + owner);
}

inline void validate_challenge(const ChallengeSpec& c) {
    if (c.id.empty())
        throw Error(ErrorCode::InvariantViolation, "id empty");
    for (char ch : c.id)
        if (!((ch >= 'a' && ch <= 'z') || (ch >= '0' && ch <= '9') || ch == '-'))
            throw Error(ErrorCode::InvariantViolation, "id not lowercase kebab-case: " + c.id);
    check::in_unit_range(c.burden, "burden", c.id);
    check::in_unit_range(c.coverage_prior, "coverage_prior", c.id);
    if (!(c.response_window_s > 0.0))
        throw Error(ErrorCode::InvariantViolation, "response_window_s not > 0 in " + c.id);
    validate_template(c.activity, c.id);
}

inline void validate_call_context(const CallContext& ctx) {
    check::in_unit_range(ctx.quality, "quality", "call context");
}

inline void validate_stream(const FeatureStream& s) {
    if (!(s.frame_rate_hz > 0.0))
        throw Error(ErrorCode::InvariantViolation, "frame_rate_hz not > 0");
    if (s.frames.empty()) return;
    const std::size_t d = s.frames.front().size();
    for (const Frame& f : s.frames)
        if (f.size() != d)
            throw Error(ErrorCode::InvariantViolation, "ragged stream frames");
}

inline void validate_verdict(const Verdict& v) {
    if (!(v.anomaly_score >= 0.0))
        throw Error(ErrorCode::InvariantViolation, "anomaly_score negative");
    check::in_unit_range(v.confidence, "confidence", "verdict");
    if (v.reason != VerdictReason::Scored && v.outcome != VerdictOutcome::Fail)
        throw Error(ErrorCode::InvariantViolation,
                    "timeout/extraction-failed verdicts must have outcome Fail");
}

// --- small enum helpers ------------------------------------------------

inline bool has_audio(Modality m) { return m == Modality::Audio || m == Modality::AudioVideo; }
inline bool has_video(Modality m) { return m == Modality::Video || m == Modality::AudioVideo; }

// True when a challenge needing `wanted` can run over a call providing `call`.
inline bool modality_satisfied(Modality wanted, Modality call) {
    if (has_audio(wanted) && !has_audio(call)) return false;
    if (has_video(wanted) && !has_video(call)) return false;
    return true;
}

inline const char* to_string(Modality m) {
    switch (m) {
        case Modality::Audio: return "audio";
        case Modality::Video: return "video";
        case Modality::AudioVideo: return "audio_video";
    }
    return "?";
}

inline const char* to_string(ChallengeCategory c) {
    switch (c) {
        case ChallengeCategory::Technology: return "technology";
        case ChallengeCategory::OutOfDistribution: return "out_of_distribution";
        case ChallengeCategory::AudioChallenge: return "audio";
    }
    return "?";
}

inline const char* to_string(CallerStatus s) {
    switch (s) {
        case CallerStatus::Indoors: return "indoors";
        case CallerStatus::Outdoors: return "outdoors";
        case CallerStatus::Seated: return "seated";
        case CallerStatus::Standing: return "standing";
        case CallerStatus::Unknown: return "unknown";
    }
    return "?";
}

inline const char* to_string(VerdictOutcome o) {
    return o == VerdictOutcome::Pass ? "pass" : "fail";
}

inline const char* to_string(VerdictReason r) {
    switch (r) {
        case VerdictReason::Scored: return "scored";
        case VerdictReason::Timeout: return "timeout";
        case VerdictReason::ExtractionFailed: return "extraction_failed";
    }
    return "?";
}

inline std::optional<Modality> modality_from_string(std::string_view s) {
    if (s == "audio") return Modality::Audio;
    if (s == "video") return Modality::Video;
    if (s == "audio_video") return Modality::AudioVideo;
    return std::nullopt;
}

inline std::optional<ChallengeCategory> category_from_string(std::string_view s) {
    if (s == "technology") return ChallengeCategory::Technology;
    if (s == "out_of_distribution") return ChallengeCategory::OutOfDistribution;
    if (s == "audio") return ChallengeCategory::AudioChallenge;
    return std::nullopt;
}

inline std::optional<CallerStatus> caller_status_from_string(std::string_view s) {
    if (s == "indoors") return CallerStatus::Indoors;
    if (s == "outdoors") return CallerStatus::Outdoors;
    if (s == "seated") return CallerStatus::Seated;
    if (s == "standing") return CallerStatus::Standing;
    if (s == "unknown") return CallerStatus::Unknown;
    return std::nullopt;
}

inline std::optional<VerdictOutcome> outcome_from_string(std::string_view s) {
    if (s == "pass") return VerdictOutcome::Pass;
    if (s == "fail") return VerdictOutcome::Fail;
    return std::nullopt;
}

inline std::optional<VerdictReason> reason_from_string(std::string_view s) {
    if (s == "scored") return VerdictReason::Scored;
    if (s == "timeout") return VerdictReason::Timeout;
    if (s == "extraction_failed") return VerdictReason::ExtractionFailed;
    return std::nullopt;
}

} // namespace dfcaptcha
