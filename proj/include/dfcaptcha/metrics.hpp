#pragma once

// Detection-quality metrics over simulated episodes: TPR/FPR, rank-statistic
// AUC over round-1 anomaly scores, score histograms, and the aggregate
// experiment report with its JSON form.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "dfcaptcha/errors.hpp"

namespace dfcaptcha {

// Mann-Whitney AUC: probability that a positive (deepfake) score ranks above
// a negative (genuine) one, ties counted half.
inline double auc_rank(const std::vector<double>& negatives, const std::vector<double>& positives) {
    if (negatives.empty() || positives.empty())
        throw Error(ErrorCode::InvariantViolation, "AUC needs scores from both classes");
    struct Entry {
        double score;
        bool positive;
    };
    std::vector<Entry> all;
    all.reserve(negatives.size() + positives.size());
    for (double s : negatives) all.push_back({s, false});
    for (double s : positives) all.push_back({s, true});
    std::sort(all.begin(), all.end(),
              [](const Entry& a, const Entry& b) { return a.score < b.score; });

    // Average ranks within tie groups, then sum the positives' ranks.
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < all.size()) {
        std::size_t j = i;
        while (j < all.size() && all[j].score == all[i].score) ++j;
        const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t k = i; k < j; ++k)
            if (all[k].positive) rank_sum_pos += avg_rank;
        i = j;
    }
    const double np = static_cast<double>(positives.size());
    const double nn = static_cast<double>(negatives.size());
    return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

// Two-proportion z statistic with a pooled standard error; 0 when both
// samples agree exactly (including the all-zero / all-one corners).
inline double two_proportion_z(std::int64_t k1, std::int64_t n1, std::int64_t k2, std::int64_t n2) {
    const double p1 = static_cast<double>(k1) / static_cast<double>(n1);
    const double p2 = static_cast<double>(k2) / static_cast<double>(n2);
    const double pooled = static_cast<double>(k1 + k2) / static_cast<double>(n1 + n2);
    const double se = std::sqrt(pooled * (1.0 - pooled) *
                                (1.0 / static_cast<double>(n1) + 1.0 / static_cast<double>(n2)));
    if (se == 0.0) return 0.0;
    return (p1 - p2) / se;
}

struct ScoreHistogram {
    double lo = 0.0;
    double hi = 1.0;
    std::vector<std::int64_t> counts;
};

// Fixed 20-bin histogram over [lo, hi]; values at or above hi land in the
// last bin so the binning is total.
inline ScoreHistogram make_histogram(const std::vector<double>& scores, double lo, double hi,
                                     int bins = 20) {
    ScoreHistogram h;
    h.lo = lo;
    h.hi = hi;
    h.counts.assign(static_cast<std::size_t>(bins), 0);
    const double width = (hi - lo) / static_cast<double>(bins);
    for (double s : scores) {
        auto idx = width > 0.0 ? static_cast<std::int64_t>((s - lo) / width) : 0;
        idx = std::clamp<std::int64_t>(idx, 0, bins - 1);
        h.counts[static_cast<std::size_t>(idx)] += 1;
    }
    return h;
}

struct ExperimentReport {
    std::int64_t episodes_per_class = 0;
    double tpr = 0.0; // deepfake episodes rejected
    double fpr = 0.0; // genuine episodes rejected
    double auc = 0.0; // over round-1 anomaly scores
    double mean_rounds = 0.0;
    ScoreHistogram hist_genuine;
    ScoreHistogram hist_deepfake;
    std::string config_digest;
};

// One row per episode; the minimum needed to rebuild every report metric.
struct EpisodeStatsRow {
    bool deepfake = false;
    bool rejected = false;
    int rounds = 0;
    double round1_score = 0.0;
};

inline ExperimentReport compute_report(const std::vector<EpisodeStatsRow>& rows,
                                       std::string config_digest) {
    std::vector<double> genuine_scores, deepfake_scores;
    std::int64_t genuine_rejected = 0, deepfake_rejected = 0;
    double rounds_total = 0.0;
    for (const EpisodeStatsRow& r : rows) {
        rounds_total += r.rounds;
        if (r.deepfake) {
            deepfake_scores.push_back(r.round1_score);
            deepfake_rejected += r.rejected;
        } else {
            genuine_scores.push_back(r.round1_score);
            genuine_rejected += r.rejected;
        }
    }
    if (genuine_scores.empty() || deepfake_scores.empty() ||
        genuine_scores.size() != deepfake_scores.size())
        throw Error(ErrorCode::InvariantViolation,
                    "report needs the same nonzero episode count per class");

    ExperimentReport rep;
    rep.episodes_per_class = static_cast<std::int64_t>(genuine_scores.size());
    rep.tpr = static_cast<double>(deepfake_rejected) / static_cast<double>(deepfake_scores.size());
    rep.fpr = static_cast<double>(genuine_rejected) / static_cast<double>(genuine_scores.size());
    rep.auc = auc_rank(genuine_scores, deepfake_scores);
    rep.mean_rounds = rounds_total / static_cast<double>(rows.size());

    double hi = 1.0;
    for (double s : genuine_scores) hi = std::max(hi, s);
    for (double s : deepfake_scores) hi = std::max(hi, s);
    rep.hist_genuine = make_histogram(genuine_scores, 0.0, hi);
    rep.hist_deepfake = make_histogram(deepfake_scores, 0.0, hi);
    rep.config_digest = std::move(config_digest);
    return rep;
}

inline nlohmann::ordered_json histogram_to_json(const ScoreHistogram& h) {
    return {{"lo", h.lo}, {"hi", h.hi}, {"counts", h.counts}};
}

inline std::string report_to_json_text(const ExperimentReport& r) {
    nlohmann::ordered_json j;
    j["version"] = 1;
    j["episodes_per_class"] = r.episodes_per_class;
    j["tpr"] = r.tpr;
    j["fpr"] = r.fpr;
    j["auc"] = r.auc;
    j["mean_rounds"] = r.mean_rounds;
    j["histogram"] = {{"genuine", histogram_to_json(r.hist_genuine)},
                      {"deepfake", histogram_to_json(r.hist_deepfake)}};
    j["config_digest"] = r.config_digest;
    return j.dump(2) + "\n";
}

inline ExperimentReport report_from_json_text(const std::string& text) {
    try {
        const auto j = nlohmann::ordered_json::parse(text);
        if (j.at("version").get<int>() != 1)
            throw Error(ErrorCode::ParseError, "unsupported report version");
        ExperimentReport r;
        r.episodes_per_class = j.at("episodes_per_class").get<std::int64_t>();
        r.tpr = j.at("tpr").get<double>();
        r.fpr = j.at("fpr").get<double>();
        r.auc = j.at("auc").get<double>();
        r.mean_rounds = j.at("mean_rounds").get<double>();
        auto hist = [](const nlohmann::ordered_json& h) {
            ScoreHistogram s;
            s.lo = h.at("lo").get<double>();
            s.hi = h.at("hi").get<double>();
            s.counts = h.at("counts").get<std::vector<std::int64_t>>();
            return s;
        };
        r.hist_genuine = hist(j.at("histogram").at("genuine"));
        r.hist_deepfake = hist(j.at("histogram").at("deepfake"));
        r.config_digest = j.at("config_digest").get<std::string>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("report file: ") + e.what());
    }
}

} // namespace dfcaptcha
