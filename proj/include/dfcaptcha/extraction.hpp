#pragma once

// Stage 1 of the detector: locate the response window inside the captured
// stream by sliding the challenge's activity pattern over it and maximizing
// normalized cross-correlation of the mean-centered flattened windows.
// Zero-variance windows or templates define the correlation as 0 instead of
// dividing by zero; ties break to the earliest offset.

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "dfcaptcha/errors.hpp"
#include "dfcaptcha/types.hpp"

namespace dfcaptcha {

struct LocalizationResult {
    ResponseSegment segment;
    double match_score = 0.0; // normalized cross-correlation in [-1, 1]
};

struct ExtractionOptions {
    // When set, a best correlation below this floor raises NoActivity.
    // Disabled by default: a wrong window surfaces as an anomaly score
    // downstream rather than as a protocol error.
    std::optional<double> min_match;
};

namespace extraction_detail {

inline std::vector<double> centered_flat(const std::vector<Frame>& frames, std::size_t begin,
                                         std::size_t count) {
    std::vector<double> flat;
    flat.reserve(count * frames[begin].size());
    for (std::size_t t = begin; t < begin + count; ++t)
        flat.insert(flat.end(), frames[t].begin(), frames[t].end());
    double mean = 0.0;
    for (double v : flat) mean += v;
    mean /= static_cast<double>(flat.size());
    for (double& v : flat) v -= mean;
    return flat;
}

inline double norm(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

} // namespace extraction_detail

inline LocalizationResult extract_response(const FeatureStream& stream,
                                           const ChallengeSpec& challenge,
                                           const ExtractionOptions& options = {}) {
    const std::size_t T = challenge.activity.length();
    const std::size_t d = challenge.activity.dim();
    if (stream.length() < T)
        throw Error(ErrorCode::StreamTooShort, "stream shorter than template length");
    for (const Frame& f : stream.frames)
        if (f.size() != d)
            throw Error(ErrorCode::DimensionMismatch, "stream dimension differs from template");

    const std::vector<double> tmpl = extraction_detail::centered_flat(challenge.activity.frames, 0, T);
    const double tmpl_norm = extraction_detail::norm(tmpl);

    double best = -2.0; // below any reachable correlation
    std::size_t best_offset = 0;
    const std::size_t last = stream.length() - T;
    for (std::size_t offset = 0; offset <= last; ++offset) {
        const std::vector<double> window = extraction_detail::centered_flat(stream.frames, offset, T);
        const double window_norm = extraction_detail::norm(window);
        double corr = 0.0;
        if (tmpl_norm > 0.0 && window_norm > 0.0) {
            double dot = 0.0;
            for (std::size_t i = 0; i < window.size(); ++i) dot += window[i] * tmpl[i];
            corr = std::clamp(dot / (tmpl_norm * window_norm), -1.0, 1.0);
        }
        if (corr > best) { // strict: earliest offset wins ties
            best = corr;
            best_offset = offset;
        }
    }

    if (options.min_match && best < *options.min_match)
        throw Error(ErrorCode::NoActivity, "best correlation below configured floor");

    ResponseSegment seg;
    seg.source_offset = best_offset;
    seg.frames.assign(stream.frames.begin() + static_cast<std::ptrdiff_t>(best_offset),
                      stream.frames.begin() + static_cast<std::ptrdiff_t>(best_offset + T));
    return LocalizationResult{std::move(seg), best};
}

} // namespace dfcaptcha
