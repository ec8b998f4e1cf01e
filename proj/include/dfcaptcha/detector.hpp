#pragma once

// Stage 2 of the detector: one-class scoring of extracted response segments.
// Two scorers run side by side:
//
//  - a statistical baseline: per-dimension mean/variance, scored as the mean
//    over frames of the diagonal Mahalanobis distance
//    sqrt(sum_i (x_i - mu_i)^2 / (var_i + eps));
//
//  - an ensemble of small per-group autoencoders (contiguous feature groups,
//    hidden size ceil(0.75 * group), sigmoid hidden / identity output),
//    trained by mini-batch gradient descent on per-frame reconstruction MSE.
//    A segment's ensemble score is the RMS of its per-group reconstruction
//    RMSEs z-normalized against the training corpus (clamped at z >= 0).
//
// The decision threshold is an empirical percentile of the training scores.
// The percentile uses the exceedance-calibrated rank ceil(p/100 * (n+1)),
// clamped to [1, n], so a fresh clean segment exceeds the threshold with
// probability close to 1 - p/100.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "dfcaptcha/errors.hpp"
#include "dfcaptcha/rng.hpp"
#include "dfcaptcha/types.hpp"

namespace dfcaptcha {

enum class CombineRule { EnsembleOnly, BaselineOnly, Max };

struct TrainConfig {
    int epochs = 30;
    double learning_rate = 0.01;
    std::uint64_t seed = 42;
    int groups = 4;
    double percentile = 99.0;
    int batch_size = 32;
    double epsilon = 1e-6;
    CombineRule combine = CombineRule::Max;
};

inline void validate_train_config(const TrainConfig& cfg) {
    if (cfg.epochs < 1) throw Error(ErrorCode::ConfigInvalid, "epochs must be >= 1");
    if (!(cfg.learning_rate > 0.0)) throw Error(ErrorCode::ConfigInvalid, "learning_rate must be > 0");
    if (cfg.groups < 1) throw Error(ErrorCode::ConfigInvalid, "groups must be >= 1");
    if (!(cfg.percentile > 0.0 && cfg.percentile <= 100.0))
        throw Error(ErrorCode::ConfigInvalid, "percentile must be in (0,100]");
    if (cfg.batch_size < 1) throw Error(ErrorCode::ConfigInvalid, "batch_size must be >= 1");
    if (cfg.epsilon < 0.0) throw Error(ErrorCode::ConfigInvalid, "epsilon must be >= 0");
}

struct StatBaselineModel {
    std::vector<double> mean;
    std::vector<double> variance; // population variance, diagonal
    double epsilon = 1e-6;
};

struct GroupAutoencoder {
    std::size_t begin = 0, end = 0; // feature index range [begin, end)
    std::size_t hidden = 0;
    std::vector<double> w1, b1; // w1 row-major [hidden][n]
    std::vector<double> w2, b2; // w2 row-major [n][hidden]
    double err_mean = 0.0;      // training segment-RMSE normalizers
    double err_std = 0.0;

    std::size_t input_dim() const noexcept { return end - begin; }
};

struct AutoencoderEnsembleModel {
    std::vector<GroupAutoencoder> groups;
};

struct DetectorModel {
    StatBaselineModel baseline;
    AutoencoderEnsembleModel ensemble;
    std::vector<double> calibration; // sorted ascending, scores of the training segments
    double threshold = 0.0;
    CombineRule combine = CombineRule::Max;
    TrainConfig trained_with;        // provenance
    std::vector<double> epoch_loss;  // full-corpus loss after each epoch

    std::size_t dim() const noexcept { return baseline.mean.size(); }
};

// --- percentile ----------------------------------------------------------

// Nearest-rank percentile over n+1 slots; `sorted` must be ascending.
inline double percentile_of(const std::vector<double>& sorted, double p) {
    if (sorted.empty())
        throw Error(ErrorCode::InvariantViolation, "percentile of empty list");
    const double n = static_cast<double>(sorted.size());
    auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * (n + 1.0)));
    rank = std::clamp<std::size_t>(rank, 1, sorted.size());
    return sorted[rank - 1];
}

// --- autoencoder forward/backward -----------------------------------------

namespace ae {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// x points at the group's slice of a frame (g.input_dim() values).
inline void forward(const GroupAutoencoder& g, const double* x, std::vector<double>& hidden_act,
                    std::vector<double>& output) {
    const std::size_t n = g.input_dim(), h = g.hidden;
    hidden_act.assign(h, 0.0);
    output.assign(n, 0.0);
    for (std::size_t j = 0; j < h; ++j) {
        double pre = g.b1[j];
        const double* row = &g.w1[j * n];
        for (std::size_t i = 0; i < n; ++i) pre += row[i] * x[i];
        hidden_act[j] = sigmoid(pre);
    }
    for (std::size_t i = 0; i < n; ++i) {
        double out = g.b2[i];
        const double* row = &g.w2[i * h];
        for (std::size_t j = 0; j < h; ++j) out += row[j] * hidden_act[j];
        output[i] = out;
    }
}

// Per-frame reconstruction loss: (1/n) * ||output - x||^2.
inline double frame_loss(const GroupAutoencoder& g, const double* x) {
    std::vector<double> hidden_act, output;
    forward(g, x, hidden_act, output);
    const std::size_t n = g.input_dim();
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dv = output[i] - x[i];
        s += dv * dv;
    }
    return s / static_cast<double>(n);
}

struct Gradient {
    std::vector<double> w1, b1, w2, b2;
    double loss = 0.0;
};

// Analytic gradient of frame_loss with respect to all parameters.
inline Gradient loss_gradient(const GroupAutoencoder& g, const double* x) {
    const std::size_t n = g.input_dim(), h = g.hidden;
    std::vector<double> hidden_act, output;
    forward(g, x, hidden_act, output);

    Gradient grad;
    grad.w1.assign(h * n, 0.0);
    grad.b1.assign(h, 0.0);
    grad.w2.assign(n * h, 0.0);
    grad.b2.assign(n, 0.0);

    std::vector<double> dout(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double dv = output[i] - x[i];
        grad.loss += dv * dv;
        dout[i] = 2.0 * dv / static_cast<double>(n);
    }
    grad.loss /= static_cast<double>(n);

    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < h; ++j) grad.w2[i * h + j] = dout[i] * hidden_act[j];
        grad.b2[i] = dout[i];
    }
    for (std::size_t j = 0; j < h; ++j) {
        double dz = 0.0;
        for (std::size_t i = 0; i < n; ++i) dz += g.w2[i * h + j] * dout[i];
        const double dpre = dz * hidden_act[j] * (1.0 - hidden_act[j]);
        for (std::size_t i = 0; i < n; ++i) grad.w1[j * n + i] = dpre * x[i];
        grad.b1[j] = dpre;
    }
    return grad;
}

// Segment-level reconstruction RMSE of one group: sqrt of the mean squared
// reconstruction error over all frames and group dimensions.
inline double segment_rmse(const GroupAutoencoder& g, const ResponseSegment& seg) {
    const std::size_t n = g.input_dim();
    std::vector<double> hidden_act, output;
    double sq = 0.0;
    for (const Frame& f : seg.frames) {
        forward(g, f.data() + g.begin, hidden_act, output);
        for (std::size_t i = 0; i < n; ++i) {
            const double dv = output[i] - f[g.begin + i];
            sq += dv * dv;
        }
    }
    return std::sqrt(sq / static_cast<double>(seg.frames.size() * n));
}

} // namespace ae

// --- scoring ---------------------------------------------------------------

inline double baseline_score(const StatBaselineModel& m, const ResponseSegment& seg) {
    if (seg.empty() || seg.dim() != m.mean.size())
        throw Error(ErrorCode::DimensionMismatch, "segment does not match baseline dimensions");
    const std::size_t d = m.mean.size();
    double total = 0.0;
    for (const Frame& f : seg.frames) {
        double sq = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            const double dv = f[i] - m.mean[i];
            sq += dv * dv / (m.variance[i] + m.epsilon);
        }
        total += std::sqrt(sq);
    }
    return total / static_cast<double>(seg.frames.size());
}

inline double ensemble_score(const AutoencoderEnsembleModel& m, const ResponseSegment& seg,
                             double epsilon) {
    if (m.groups.empty())
        throw Error(ErrorCode::InvariantViolation, "ensemble has no groups");
    if (seg.empty() || seg.dim() != m.groups.back().end)
        throw Error(ErrorCode::DimensionMismatch, "segment does not match ensemble dimensions");
    double zsq = 0.0;
    for (const GroupAutoencoder& g : m.groups) {
        const double rmse = ae::segment_rmse(g, seg);
        const double denom = std::max(g.err_std, epsilon);
        const double z = std::max(0.0, (rmse - g.err_mean) / denom);
        zsq += z * z;
    }
    return std::sqrt(zsq / static_cast<double>(m.groups.size()));
}

inline double score_segment(const DetectorModel& model, const ResponseSegment& seg) {
    switch (model.combine) {
        case CombineRule::BaselineOnly:
            return baseline_score(model.baseline, seg);
        case CombineRule::EnsembleOnly:
            return ensemble_score(model.ensemble, seg, model.baseline.epsilon);
        case CombineRule::Max:
            return std::max(baseline_score(model.baseline, seg),
                            ensemble_score(model.ensemble, seg, model.baseline.epsilon));
    }
    throw Error(ErrorCode::ConfigInvalid, "unknown combine rule");
}

// Fail iff score > threshold; confidence is the empirical-CDF position of
// the score within the calibration list (fraction of clean scores strictly
// below it) for Fail, and one minus that fraction for Pass.
inline Verdict decide(const DetectorModel& model, const ResponseSegment& seg) {
    if (model.calibration.empty())
        throw Error(ErrorCode::InvariantViolation, "model is not calibrated");
    const double score = score_segment(model, seg);
    const auto below = static_cast<double>(
        std::lower_bound(model.calibration.begin(), model.calibration.end(), score) -
        model.calibration.begin());
    const double frac = below / static_cast<double>(model.calibration.size());

    Verdict v;
    v.outcome = score > model.threshold ? VerdictOutcome::Fail : VerdictOutcome::Pass;
    v.anomaly_score = score;
    v.confidence = v.outcome == VerdictOutcome::Fail ? frac : 1.0 - frac;
    v.evidence = seg;
    v.reason = VerdictReason::Scored;
    return v;
}

// --- training ----------------------------------------------------------------

namespace train_detail {

// Near-equal contiguous partition of d dimensions into k groups.
inline std::vector<std::pair<std::size_t, std::size_t>> partition(std::size_t d, std::size_t k) {
    std::vector<std::pair<std::size_t, std::size_t>> ranges;
    const std::size_t base = d / k, rem = d % k;
    std::size_t begin = 0;
    for (std::size_t g = 0; g < k; ++g) {
        const std::size_t size = base + (g < rem ? 1 : 0);
        ranges.emplace_back(begin, begin + size);
        begin += size;
    }
    return ranges;
}

inline GroupAutoencoder init_group(std::size_t begin, std::size_t end, RngStream rng) {
    GroupAutoencoder g;
    g.begin = begin;
    g.end = end;
    const std::size_t n = g.input_dim();
    g.hidden = (3 * n + 3) / 4; // ceil(0.75 * n), always >= 1
    const std::size_t h = g.hidden;

    auto uniform_pm = [&rng](double bound) { return (2.0 * rng.next_unit() - 1.0) * bound; };
    const double bound1 = 1.0 / std::sqrt(static_cast<double>(n)); // fan_in of layer 1
    const double bound2 = 1.0 / std::sqrt(static_cast<double>(h)); // fan_in of layer 2
    g.w1.resize(h * n);
    g.b1.resize(h);
    g.w2.resize(n * h);
    g.b2.resize(n);
    for (double& w : g.w1) w = uniform_pm(bound1);
    for (double& b : g.b1) b = uniform_pm(bound1);
    for (double& w : g.w2) w = uniform_pm(bound2);
    for (double& b : g.b2) b = uniform_pm(bound2);
    return g;
}

inline void apply_update(std::vector<double>& params, const std::vector<double>& grad_sum,
                         double scale) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= scale * grad_sum[i];
}

} // namespace train_detail

inline DetectorModel train_detector(const std::vector<ResponseSegment>& clean,
                                    const TrainConfig& cfg) {
    validate_train_config(cfg);
    if (clean.empty()) throw Error(ErrorCode::EmptyCorpus, "no clean segments to train on");
    const std::size_t d = clean.front().dim();
    if (d == 0) throw Error(ErrorCode::EmptyCorpus, "clean segments have no frames");
    for (const ResponseSegment& s : clean)
        if (s.empty() || s.dim() != d)
            throw Error(ErrorCode::DimensionMismatch, "clean corpus has inconsistent dimensions");
    const auto k = static_cast<std::size_t>(cfg.groups);
    if (k > d) throw Error(ErrorCode::ConfigInvalid, "more groups than feature dimensions");

    // Flatten the corpus into one frame table.
    std::vector<const Frame*> frames;
    for (const ResponseSegment& s : clean)
        for (const Frame& f : s.frames) frames.push_back(&f);
    const std::size_t n_frames = frames.size();

    DetectorModel model;
    model.combine = cfg.combine;
    model.trained_with = cfg;

    // Statistical baseline: per-dimension mean and population variance.
    model.baseline.epsilon = cfg.epsilon;
    model.baseline.mean.assign(d, 0.0);
    model.baseline.variance.assign(d, 0.0);
    for (const Frame* f : frames)
        for (std::size_t i = 0; i < d; ++i) model.baseline.mean[i] += (*f)[i];
    for (std::size_t i = 0; i < d; ++i) model.baseline.mean[i] /= static_cast<double>(n_frames);
    for (const Frame* f : frames)
        for (std::size_t i = 0; i < d; ++i) {
            const double dv = (*f)[i] - model.baseline.mean[i];
            model.baseline.variance[i] += dv * dv;
        }
    for (std::size_t i = 0; i < d; ++i) model.baseline.variance[i] /= static_cast<double>(n_frames);
    if (cfg.epsilon == 0.0 &&
        std::all_of(model.baseline.variance.begin(), model.baseline.variance.end(),
                    [](double v) { return v == 0.0; }))
        throw Error(ErrorCode::DegenerateDimension,
                    "zero variance in every dimension and no regularizer");

    // Ensemble: seeded init, then mini-batch gradient descent.
    const RngStream root(cfg.seed);
    for (const auto& [begin, end] : train_detail::partition(d, k))
        model.ensemble.groups.push_back(
            train_detail::init_group(begin, end, root.split("init").split(model.ensemble.groups.size())));

    std::vector<std::size_t> order(n_frames);
    for (std::size_t i = 0; i < n_frames; ++i) order[i] = i;
    const auto batch = static_cast<std::size_t>(cfg.batch_size);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        RngStream shuffle_rng = root.split("shuffle").split(static_cast<std::uint64_t>(epoch));
        for (std::size_t i = n_frames - 1; i > 0; --i)
            std::swap(order[i], order[shuffle_rng.next_below(i + 1)]);

        for (std::size_t start = 0; start < n_frames; start += batch) {
            const std::size_t stop = std::min(start + batch, n_frames);
            const double scale = cfg.learning_rate / static_cast<double>(stop - start);
            for (GroupAutoencoder& g : model.ensemble.groups) {
                ae::Gradient sum;
                sum.w1.assign(g.w1.size(), 0.0);
                sum.b1.assign(g.b1.size(), 0.0);
                sum.w2.assign(g.w2.size(), 0.0);
                sum.b2.assign(g.b2.size(), 0.0);
                for (std::size_t idx = start; idx < stop; ++idx) {
                    const ae::Gradient grad = ae::loss_gradient(g, frames[order[idx]]->data() + g.begin);
                    for (std::size_t i = 0; i < sum.w1.size(); ++i) sum.w1[i] += grad.w1[i];
                    for (std::size_t i = 0; i < sum.b1.size(); ++i) sum.b1[i] += grad.b1[i];
                    for (std::size_t i = 0; i < sum.w2.size(); ++i) sum.w2[i] += grad.w2[i];
                    for (std::size_t i = 0; i < sum.b2.size(); ++i) sum.b2[i] += grad.b2[i];
                }
                train_detail::apply_update(g.w1, sum.w1, scale);
                train_detail::apply_update(g.b1, sum.b1, scale);
                train_detail::apply_update(g.w2, sum.w2, scale);
                train_detail::apply_update(g.b2, sum.b2, scale);
            }
        }

        double loss = 0.0;
        for (const Frame* f : frames)
            for (const GroupAutoencoder& g : model.ensemble.groups)
                loss += ae::frame_loss(g, f->data() + g.begin);
        model.epoch_loss.push_back(loss / static_cast<double>(n_frames * k));
    }

    // Per-group z-score normalizers from the training segments.
    for (GroupAutoencoder& g : model.ensemble.groups) {
        std::vector<double> rmses;
        rmses.reserve(clean.size());
        for (const ResponseSegment& s : clean) rmses.push_back(ae::segment_rmse(g, s));
        double mean = 0.0;
        for (double r : rmses) mean += r;
        mean /= static_cast<double>(rmses.size());
        double var = 0.0;
        for (double r : rmses) var += (r - mean) * (r - mean);
        var /= static_cast<double>(rmses.size());
        g.err_mean = mean;
        g.err_std = std::sqrt(var);
    }

    // Calibration scores of the training segments under the final model.
    model.calibration.reserve(clean.size());
    for (const ResponseSegment& s : clean) model.calibration.push_back(score_segment(model, s));
    std::sort(model.calibration.begin(), model.calibration.end());
    model.threshold = percentile_of(model.calibration, cfg.percentile);
    return model;
}

// --- model file ----------------------------------------------------------------

inline const char* to_string(CombineRule r) {
    switch (r) {
        case CombineRule::EnsembleOnly: return "ensemble_only";
        case CombineRule::BaselineOnly: return "baseline_only";
        case CombineRule::Max: return "max";
    }
    return "?";
}

inline std::optional<CombineRule> combine_from_string(std::string_view s) {
    if (s == "ensemble_only") return CombineRule::EnsembleOnly;
    if (s == "baseline_only") return CombineRule::BaselineOnly;
    if (s == "max") return CombineRule::Max;
    return std::nullopt;
}

// Structural checks applied when a model arrives from the outside (files are
// one of the user-editable surfaces).
inline void validate_model(const DetectorModel& m) {
    const std::size_t d = m.baseline.mean.size();
    if (d == 0 || m.baseline.variance.size() != d)
        throw Error(ErrorCode::InvariantViolation, "baseline mean/variance sizes disagree");
    if (m.baseline.epsilon < 0)
        throw Error(ErrorCode::InvariantViolation, "baseline epsilon negative");
    for (double v : m.baseline.variance)
        if (!(v + m.baseline.epsilon > 0.0))
            throw Error(ErrorCode::InvariantViolation,
                        "baseline variance plus epsilon must be positive");
    std::size_t expected_begin = 0;
    for (const GroupAutoencoder& g : m.ensemble.groups) {
        if (g.begin != expected_begin || g.end <= g.begin || g.end > d)
            throw Error(ErrorCode::InvariantViolation, "ensemble groups do not partition dims");
        const std::size_t n = g.input_dim();
        if (g.hidden < 1 || g.w1.size() != g.hidden * n || g.b1.size() != g.hidden ||
            g.w2.size() != n * g.hidden || g.b2.size() != n)
            throw Error(ErrorCode::InvariantViolation, "ensemble weight shapes inconsistent");
        expected_begin = g.end;
    }
    if (!m.ensemble.groups.empty() && expected_begin != d)
        throw Error(ErrorCode::InvariantViolation, "ensemble groups do not cover all dims");
    if (m.calibration.empty() ||
        !std::is_sorted(m.calibration.begin(), m.calibration.end()))
        throw Error(ErrorCode::InvariantViolation, "calibration list missing or unsorted");
}

inline std::string model_to_json_text(const DetectorModel& m) {
    nlohmann::ordered_json j;
    j["version"] = 1;
    j["baseline"] = {{"mean", m.baseline.mean},
                     {"variance", m.baseline.variance},
                     {"epsilon", m.baseline.epsilon}};
    nlohmann::ordered_json groups = nlohmann::ordered_json::array();
    for (const GroupAutoencoder& g : m.ensemble.groups)
        groups.push_back(nlohmann::ordered_json{{"begin", g.begin},
                                                {"end", g.end},
                                                {"hidden", g.hidden},
                                                {"w1", g.w1},
                                                {"b1", g.b1},
                                                {"w2", g.w2},
                                                {"b2", g.b2},
                                                {"err_mean", g.err_mean},
                                                {"err_std", g.err_std}});
    j["ensemble"] = {{"groups", groups}};
    j["calibration"] = m.calibration;
    j["threshold"] = m.threshold;
    j["combine"] = to_string(m.combine);
    j["train_config"] = {{"epochs", m.trained_with.epochs},
                         {"learning_rate", m.trained_with.learning_rate},
                         {"seed", m.trained_with.seed},
                         {"groups", m.trained_with.groups},
                         {"percentile", m.trained_with.percentile},
                         {"batch_size", m.trained_with.batch_size},
                         {"epsilon", m.trained_with.epsilon},
                         {"combine", to_string(m.trained_with.combine)}};
    j["epoch_loss"] = m.epoch_loss;
    return j.dump(2) + "\n";
}

inline DetectorModel model_from_json_text(const std::string& text) {
    nlohmann::ordered_json j;
    try {
        j = nlohmann::ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::ParseError, e.what());
    }
    try {
        if (j.at("version").get<int>() != 1)
            throw Error(ErrorCode::ParseError, "unsupported model version");
        DetectorModel m;
        const auto& b = j.at("baseline");
        m.baseline.mean = b.at("mean").get<std::vector<double>>();
        m.baseline.variance = b.at("variance").get<std::vector<double>>();
        m.baseline.epsilon = b.at("epsilon").get<double>();
        for (const auto& gj : j.at("ensemble").at("groups")) {
            GroupAutoencoder g;
            g.begin = gj.at("begin").get<std::size_t>();
            g.end = gj.at("end").get<std::size_t>();
            g.hidden = gj.at("hidden").get<std::size_t>();
            g.w1 = gj.at("w1").get<std::vector<double>>();
            g.b1 = gj.at("b1").get<std::vector<double>>();
            g.w2 = gj.at("w2").get<std::vector<double>>();
            g.b2 = gj.at("b2").get<std::vector<double>>();
            g.err_mean = gj.at("err_mean").get<double>();
            g.err_std = gj.at("err_std").get<double>();
            m.ensemble.groups.push_back(std::move(g));
        }
        m.calibration = j.at("calibration").get<std::vector<double>>();
        m.threshold = j.at("threshold").get<double>();
        const auto combine = combine_from_string(j.at("combine").get<std::string>());
        if (!combine) throw Error(ErrorCode::ParseError, "bad combine rule");
        m.combine = *combine;
        const auto& tc = j.at("train_config");
        m.trained_with.epochs = tc.at("epochs").get<int>();
        m.trained_with.learning_rate = tc.at("learning_rate").get<double>();
        m.trained_with.seed = tc.at("seed").get<std::uint64_t>();
        m.trained_with.groups = tc.at("groups").get<int>();
        m.trained_with.percentile = tc.at("percentile").get<double>();
        m.trained_with.batch_size = tc.at("batch_size").get<int>();
        m.trained_with.epsilon = tc.at("epsilon").get<double>();
        const auto tcc = combine_from_string(tc.at("combine").get<std::string>());
        if (!tcc) throw Error(ErrorCode::ParseError, "bad combine rule in train_config");
        m.trained_with.combine = *tcc;
        m.epoch_loss = j.at("epoch_loss").get<std::vector<double>>();
        validate_model(m);
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("model file: ") + e.what());
    }
}

} // namespace dfcaptcha
