#pragma once

// Session state machine for one screened call. Sequential, single
// outstanding challenge; time is injected through Tick events so the engine
// never reads a wall clock. `advance` is a pure transition function:
// identical (config, state, event, now) yields identical results.
//
// Phases and transitions:
//
//   Idle            + Trigger(score >= threshold)  -> Triggered   [IssueChallenge]
//   Triggered       + ChallengeSent(pending id)    -> ChallengeIssued [BeginCapture]
//   ChallengeIssued + CaptureStarted               -> Capturing
//   Capturing       + StreamChunk                  -> Capturing
//   Capturing       + CaptureEnded                 -> Evaluating  [RunDetector]
//   ChallengeIssued/
//   Capturing       + Tick(now > deadline)         -> Decided     [NotifyUser(timeout Fail)]
//   Evaluating      + Scored(v)                    -> Decided     [NotifyUser(v)]
//   Decided         + UserDecision(Rechallenge)    -> Triggered   [IssueChallenge]  (budget > 0)
//   Decided         + UserDecision(Proceed)        -> Closed      [CloseSession(Accepted)]
//   Decided         + UserDecision(Terminate)      -> Closed      [CloseSession(Rejected)]
//
// A Trigger below the threshold is ignored in Idle; Tick is legal in every
// phase and is a no-op unless a deadline has passed. Anything else raises
// IllegalTransition. The deadline field is occupied exactly in the
// ChallengeIssued and Capturing phases.

#include <functional>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "dfcaptcha/catalog.hpp"
#include "dfcaptcha/errors.hpp"
#include "dfcaptcha/selector.hpp"
#include "dfcaptcha/suspicion.hpp"
#include "dfcaptcha/types.hpp"

namespace dfcaptcha {

enum class Phase { Idle, Triggered, ChallengeIssued, Capturing, Evaluating, Decided, Closed };

enum class UserChoice { Proceed, Rechallenge, Terminate };
enum class FinalOutcome { Accepted, Rejected };

// --- events ------------------------------------------------------------

namespace event {
struct Trigger { double score = 0.0; };
struct ChallengeSent { std::string id; };
struct CaptureStarted {};
struct StreamChunk { FeatureStream fragment; };
struct CaptureEnded {};
struct Scored { Verdict verdict; };
struct UserDecision { UserChoice choice = UserChoice::Proceed; };
struct Tick { double now = 0.0; };
} // namespace event

using Event = std::variant<event::Trigger, event::ChallengeSent, event::CaptureStarted,
                           event::StreamChunk, event::CaptureEnded, event::Scored,
                           event::UserDecision, event::Tick>;

// --- actions -----------------------------------------------------------

namespace action {
struct IssueChallenge { ChallengeSpec challenge; };
struct BeginCapture { double window_s = 0.0; };
struct RunDetector { std::string challenge_id; };
struct NotifyUser { Verdict verdict; };
struct CloseSession { FinalOutcome final = FinalOutcome::Rejected; };
} // namespace action

using Action = std::variant<action::IssueChallenge, action::BeginCapture, action::RunDetector,
                            action::NotifyUser, action::CloseSession>;

// --- state -------------------------------------------------------------

struct SessionState {
    Phase phase = Phase::Idle;
    std::vector<std::pair<std::string, double>> issued; // (challenge id, issue time)
    std::vector<Verdict> verdicts;
    std::optional<double> deadline; // seconds since session start
    int rechallenge_budget = 2;
    double trigger_score = 0.0;
    std::optional<FinalOutcome> final; // present exactly in Closed
};

struct SessionConfig {
    Catalog catalog;
    CallContext context;
    SuspicionConfig suspicion;
    SelectionPolicy policy;
    double grace_s = 2.0;
    int rechallenge_budget = 2;
    // Optional selection override (used by the simulator's random-selection
    // baseline); when empty the utility argmax picks. Part of the config, so
    // determinism is relative to it.
    std::function<const ChallengeSpec*(const std::vector<ChallengeSpec>&)> select_override;
};

inline SessionState initial_state(const SessionConfig& cfg) {
    SessionState s;
    s.rechallenge_budget = cfg.rechallenge_budget;
    return s;
}

inline const char* to_string(Phase p) {
    switch (p) {
        case Phase::Idle: return "idle";
        case Phase::Triggered: return "triggered";
        case Phase::ChallengeIssued: return "challenge_issued";
        case Phase::Capturing: return "capturing";
        case Phase::Evaluating: return "evaluating";
        case Phase::Decided: return "decided";
        case Phase::Closed: return "closed";
    }
    return "?";
}

inline const char* to_string(UserChoice c) {
    switch (c) {
        case UserChoice::Proceed: return "proceed";
        case UserChoice::Rechallenge: return "rechallenge";
        case UserChoice::Terminate: return "terminate";
    }
    return "?";
}

inline const char* to_string(FinalOutcome f) {
    return f == FinalOutcome::Accepted ? "accepted" : "rejected";
}

inline std::optional<UserChoice> user_choice_from_string(std::string_view s) {
    if (s == "proceed") return UserChoice::Proceed;
    if (s == "rechallenge") return UserChoice::Rechallenge;
    if (s == "terminate") return UserChoice::Terminate;
    return std::nullopt;
}

inline std::optional<FinalOutcome> final_outcome_from_string(std::string_view s) {
    if (s == "accepted") return FinalOutcome::Accepted;
    if (s == "rejected") return FinalOutcome::Rejected;
    return std::nullopt;
}

namespace protocol_detail {

inline const char* event_name(const Event& e) {
    struct Visitor {
        const char* operator()(const event::Trigger&) const { return "trigger"; }
        const char* operator()(const event::ChallengeSent&) const { return "challenge_sent"; }
        const char* operator()(const event::CaptureStarted&) const { return "capture_started"; }
        const char* operator()(const event::StreamChunk&) const { return "stream_chunk"; }
        const char* operator()(const event::CaptureEnded&) const { return "capture_ended"; }
        const char* operator()(const event::Scored&) const { return "scored"; }
        const char* operator()(const event::UserDecision&) const { return "user_decision"; }
        const char* operator()(const event::Tick&) const { return "tick"; }
    };
    return std::visit(Visitor{}, e);
}

[[noreturn]] inline void illegal(Phase phase, const Event& e) {
    throw Error(ErrorCode::IllegalTransition,
                std::string(event_name(e)) + " not legal in phase " + to_string(phase));
}

inline std::set<std::string> used_ids(const SessionState& s) {
    std::set<std::string> ids;
    for (const auto& [id, time] : s.issued) ids.insert(id);
    return ids;
}

// Pick the next challenge and move to Triggered.
inline std::vector<Action> issue_next(const SessionConfig& cfg, SessionState& s, double now) {
    const std::vector<ChallengeSpec> eligible =
        filter_eligible(cfg.catalog, cfg.context, used_ids(s), cfg.policy);
    const ChallengeSpec* chosen = nullptr;
    if (cfg.select_override) {
        if (eligible.empty())
            throw Error(ErrorCode::NoEligibleChallenge, "no challenge is eligible in this context");
        chosen = cfg.select_override(eligible);
    }
    if (chosen == nullptr) chosen = &select_challenge(eligible, s.trigger_score, cfg.policy);
    s.phase = Phase::Triggered;
    s.issued.emplace_back(chosen->id, now);
    return {action::IssueChallenge{*chosen}};
}

} // namespace protocol_detail

// Challenges still available for another round (for user-decision policies).
inline std::vector<ChallengeSpec> eligible_now(const SessionConfig& cfg, const SessionState& s) {
    return filter_eligible(cfg.catalog, cfg.context, protocol_detail::used_ids(s), cfg.policy);
}

inline std::pair<SessionState, std::vector<Action>> advance(const SessionConfig& cfg,
                                                            SessionState state, const Event& ev,
                                                            double now) {
    using namespace protocol_detail;
    std::vector<Action> actions;

    if (const auto* tick = std::get_if<event::Tick>(&ev)) {
        // Legal in every phase; only a missed deadline changes anything.
        if ((state.phase == Phase::ChallengeIssued || state.phase == Phase::Capturing) &&
            state.deadline && tick->now > *state.deadline) {
            state.phase = Phase::Decided;
            state.deadline.reset();
            const Verdict v = timeout_verdict();
            state.verdicts.push_back(v);
            actions.push_back(action::NotifyUser{v});
        }
        return {std::move(state), std::move(actions)};
    }

    switch (state.phase) {
        case Phase::Idle: {
            const auto* trig = std::get_if<event::Trigger>(&ev);
            if (!trig) illegal(state.phase, ev);
            if (should_trigger(trig->score, cfg.suspicion)) {
                state.trigger_score = trig->score;
                actions = issue_next(cfg, state, now);
            }
            // Sub-threshold triggers are ignored, not errors.
            return {std::move(state), std::move(actions)};
        }
        case Phase::Triggered: {
            const auto* sent = std::get_if<event::ChallengeSent>(&ev);
            if (!sent) illegal(state.phase, ev);
            if (state.issued.empty() || sent->id != state.issued.back().first)
                illegal(state.phase, ev);
            const ChallengeSpec* c = cfg.catalog.find(sent->id);
            state.phase = Phase::ChallengeIssued;
            state.deadline = now + c->response_window_s + cfg.grace_s;
            actions.push_back(action::BeginCapture{c->response_window_s});
            return {std::move(state), std::move(actions)};
        }
        case Phase::ChallengeIssued: {
            if (!std::holds_alternative<event::CaptureStarted>(ev)) illegal(state.phase, ev);
            state.phase = Phase::Capturing;
            return {std::move(state), std::move(actions)};
        }
        case Phase::Capturing: {
            if (std::holds_alternative<event::StreamChunk>(ev))
                return {std::move(state), std::move(actions)};
            if (std::holds_alternative<event::CaptureEnded>(ev)) {
                state.phase = Phase::Evaluating;
                state.deadline.reset();
                actions.push_back(action::RunDetector{state.issued.back().first});
                return {std::move(state), std::move(actions)};
            }
            illegal(state.phase, ev);
        }
        case Phase::Evaluating: {
            const auto* scored = std::get_if<event::Scored>(&ev);
            if (!scored) illegal(state.phase, ev);
            validate_verdict(scored->verdict);
            state.phase = Phase::Decided;
            state.verdicts.push_back(scored->verdict);
            actions.push_back(action::NotifyUser{scored->verdict});
            return {std::move(state), std::move(actions)};
        }
        case Phase::Decided: {
            const auto* decision = std::get_if<event::UserDecision>(&ev);
            if (!decision) illegal(state.phase, ev);
            switch (decision->choice) {
                case UserChoice::Proceed:
                    state.phase = Phase::Closed;
                    state.final = FinalOutcome::Accepted;
                    actions.push_back(action::CloseSession{FinalOutcome::Accepted});
                    return {std::move(state), std::move(actions)};
                case UserChoice::Terminate:
                    state.phase = Phase::Closed;
                    state.final = FinalOutcome::Rejected;
                    actions.push_back(action::CloseSession{FinalOutcome::Rejected});
                    return {std::move(state), std::move(actions)};
                case UserChoice::Rechallenge:
                    if (state.rechallenge_budget <= 0)
                        throw Error(ErrorCode::BudgetExhausted, "no rechallenge budget left");
                    state.rechallenge_budget -= 1;
                    actions = issue_next(cfg, state, now);
                    return {std::move(state), std::move(actions)};
            }
            illegal(state.phase, ev);
        }
        case Phase::Closed:
            illegal(state.phase, ev);
    }
    illegal(state.phase, ev);
}

} // namespace dfcaptcha
