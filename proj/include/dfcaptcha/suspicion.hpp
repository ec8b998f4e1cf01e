#pragma once

// Trigger logic: fold the five suspicion indicators into one score and
// compare it with the trigger threshold. A manual request dominates
// everything else.

#include <algorithm>

#include "dfcaptcha/errors.hpp"
#include "dfcaptcha/types.hpp"

namespace dfcaptcha {

struct SuspicionConfig {
    double w_new = 0.30;
    double w_history = 0.25;
    double w_masked = 0.25;
    double w_liveness = 0.20;
    double trigger_threshold = 0.5; // in (0, 1]
};

inline void validate_suspicion_config(const SuspicionConfig& cfg) {
    if (cfg.w_new < 0 || cfg.w_history < 0 || cfg.w_masked < 0 || cfg.w_liveness < 0)
        throw Error(ErrorCode::InvariantViolation, "suspicion weights must be nonnegative");
    if (cfg.w_new + cfg.w_history + cfg.w_masked + cfg.w_liveness > 1.0 + 1e-12)
        throw Error(ErrorCode::InvariantViolation, "suspicion weights must sum to at most 1");
    if (!(cfg.trigger_threshold > 0.0 && cfg.trigger_threshold <= 1.0))
        throw Error(ErrorCode::InvariantViolation, "trigger_threshold must be in (0,1]");
}

inline double compute_suspicion(const SuspicionIndicators& ind, const SuspicionConfig& cfg) {
    if (ind.manual_request) return 1.0;
    const double liveness = std::clamp(ind.liveness, 0.0, 1.0);
    const double score = (ind.new_unverified_caller ? cfg.w_new : 0.0) +
                         (ind.malicious_network_history ? cfg.w_history : 0.0) +
                         (ind.identity_masked ? cfg.w_masked : 0.0) +
                         cfg.w_liveness * (1.0 - liveness);
    return std::clamp(score, 0.0, 1.0);
}

// Threshold comparison is inclusive.
inline bool should_trigger(double score, const SuspicionConfig& cfg) {
    return score >= cfg.trigger_threshold;
}

} // namespace dfcaptcha
