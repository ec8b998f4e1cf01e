#pragma once

// Challenge selection: restrict the catalog to what the current call can
// support, then pick the entry with the best expected discrimination.
//
// utility = (1 - coverage_prior) * (0.5 + 0.5 * suspicion) - lambda * burden
//
// Challenges a generic attacker likely cannot render score high; burden is
// traded off against how suspicious the call already is. Ties break to the
// lexicographically smallest id so selection is reproducible.

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "dfcaptcha/catalog.hpp"
#include "dfcaptcha/errors.hpp"
#include "dfcaptcha/types.hpp"

namespace dfcaptcha {

struct SelectionPolicy {
    double burden_weight = 0.2; // lambda, >= 0
    std::map<ChallengeCategory, double> min_quality; // absent category -> 0
    bool allow_repeat = false;
};

inline void validate_selection_policy(const SelectionPolicy& p) {
    if (p.burden_weight < 0.0)
        throw Error(ErrorCode::InvariantViolation, "burden_weight must be nonnegative");
    for (const auto& [cat, q] : p.min_quality)
        if (!(q >= 0.0 && q <= 1.0))
            throw Error(ErrorCode::InvariantViolation, "min_quality out of [0,1]");
}

inline double min_quality_for(const SelectionPolicy& p, ChallengeCategory cat) {
    const auto it = p.min_quality.find(cat);
    return it == p.min_quality.end() ? 0.0 : it->second;
}

// Entries whose modality fits the call, whose category quality gate passes,
// whose caller-status exclusions do not apply, and which have not been used
// yet (unless repeats are allowed). Output is ordered by id ascending.
inline std::vector<ChallengeSpec> filter_eligible(const Catalog& catalog, const CallContext& ctx,
                                                  const std::set<std::string>& used,
                                                  const SelectionPolicy& policy) {
    std::vector<ChallengeSpec> out;
    for (const ChallengeSpec& c : catalog.challenges) {
        if (!modality_satisfied(c.modality, ctx.modality)) continue;
        if (ctx.quality < min_quality_for(policy, c.category)) continue;
        if (std::find(c.excluded_status.begin(), c.excluded_status.end(), ctx.caller_status) !=
            c.excluded_status.end())
            continue;
        if (!policy.allow_repeat && used.count(c.id)) continue;
        out.push_back(c);
    }
    std::sort(out.begin(), out.end(),
              [](const ChallengeSpec& a, const ChallengeSpec& b) { return a.id < b.id; });
    return out;
}

inline double utility(const ChallengeSpec& c, double suspicion, const SelectionPolicy& policy) {
    const double suspicion_gain = 0.5 + 0.5 * suspicion;
    return (1.0 - c.coverage_prior) * suspicion_gain - policy.burden_weight * c.burden;
}

inline const ChallengeSpec& select_challenge(const std::vector<ChallengeSpec>& eligible,
                                             double suspicion, const SelectionPolicy& policy) {
    if (eligible.empty())
        throw Error(ErrorCode::NoEligibleChallenge, "no challenge is eligible in this context");
    const ChallengeSpec* best = &eligible.front();
    double best_u = utility(*best, suspicion, policy);
    for (const ChallengeSpec& c : eligible) {
        const double u = utility(c, suspicion, policy);
        if (u > best_u || (u == best_u && c.id < best->id)) {
            best = &c;
            best_u = u;
        }
    }
    return *best;
}

} // namespace dfcaptcha
