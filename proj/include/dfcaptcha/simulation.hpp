#pragma once

// Adversarial call simulator: genuine and deepfake agents answer challenges
// through a lossy channel while a full protocol session screens them.
//
// A deepfake agent renders covered challenges exactly like a genuine caller.
// On uncovered challenges it produces the genuine response plus a structured
// artifact: a constant additive deviation of artifact_amp * natural_std on
// the artifact dimensions and, optionally, a temporal discontinuity
// (the second half of the response circularly shifted left by T/4 frames).
//
// Every stochastic draw comes from a labeled substream of the episode seed
// (jitter, response noise, channel drops, channel noise, selection), so runs
// are reproducible under any degree of parallelism and adding a draw to one
// purpose never perturbs another.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "dfcaptcha/catalog.hpp"
#include "dfcaptcha/detector.hpp"
#include "dfcaptcha/errors.hpp"
#include "dfcaptcha/extraction.hpp"
#include "dfcaptcha/metrics.hpp"
#include "dfcaptcha/protocol.hpp"
#include "dfcaptcha/rng.hpp"
#include "dfcaptcha/suspicion.hpp"
#include "dfcaptcha/types.hpp"

namespace dfcaptcha {

struct GenuineAgentConfig {
    double natural_std = 1.0;     // per-dimension response variability
    int jitter_frames = 2;        // uniform start-time offset in frames
    double reaction_latency_s = 0.5;
};

struct DeepfakeAgentConfig {
    std::set<std::string> coverage;    // challenge ids rendered artifact-free
    double artifact_amp = 5.0;         // in units of natural_std
    std::vector<std::size_t> artifact_dims;
    bool discontinuity = false;
    double reaction_latency_s = 0.5;
};

struct ChannelConfig {
    double quant_step = 0.0; // uniform quantization step; 0 disables
    double noise_std = 0.0;
    double drop_prob = 0.0;  // dropped frame replaced by the previous frame
};

enum class TruthClass { Genuine, Deepfake };
enum class SelectionMode { Utility, UniformRandom };

inline const char* to_string(TruthClass t) {
    return t == TruthClass::Genuine ? "genuine" : "deepfake";
}

inline std::optional<TruthClass> truth_from_string(std::string_view s) {
    if (s == "genuine") return TruthClass::Genuine;
    if (s == "deepfake") return TruthClass::Deepfake;
    return std::nullopt;
}

inline const char* to_string(SelectionMode m) {
    return m == SelectionMode::Utility ? "utility" : "uniform_random";
}

inline std::optional<SelectionMode> selection_mode_from_string(std::string_view s) {
    if (s == "utility") return SelectionMode::Utility;
    if (s == "uniform_random") return SelectionMode::UniformRandom;
    return std::nullopt;
}

inline void validate_genuine_config(const GenuineAgentConfig& g) {
    if (g.natural_std < 0 || g.jitter_frames < 0 || g.reaction_latency_s < 0)
        throw Error(ErrorCode::ConfigInvalid, "genuine agent parameters must be nonnegative");
}

inline void validate_deepfake_config(const DeepfakeAgentConfig& a) {
    if (a.artifact_amp < 0 || a.reaction_latency_s < 0)
        throw Error(ErrorCode::ConfigInvalid, "deepfake agent parameters must be nonnegative");
    if (a.artifact_amp > 0 && a.artifact_dims.empty())
        throw Error(ErrorCode::ConfigInvalid, "artifact_dims must be non-empty when artifact_amp > 0");
}

inline void validate_channel_config(const ChannelConfig& c) {
    if (c.quant_step < 0 || c.noise_std < 0)
        throw Error(ErrorCode::ConfigInvalid, "channel parameters must be nonnegative");
    if (!(c.drop_prob >= 0.0 && c.drop_prob <= 1.0))
        throw Error(ErrorCode::ConfigInvalid, "drop_prob must be in [0,1]");
}

// --- response synthesis ---------------------------------------------------

namespace sim_detail {

struct SynthesizedStream {
    FeatureStream stream;
    std::size_t response_offset = 0; // where the response landed
};

// Base generative rule shared by genuine callers and covered deepfakes:
// the activity pattern plus Gaussian natural variability, embedded at a
// latency- and jitter-determined offset in a noise-only padding stream.
inline SynthesizedStream genuine_like(const ChallengeSpec& c, double frame_rate_hz,
                                      double natural_std, int jitter_frames, double latency_s,
                                      RngStream& rng) {
    const std::size_t T = c.activity.length();
    const std::size_t d = c.activity.dim();
    const auto latency_frames = static_cast<std::size_t>(std::llround(latency_s * frame_rate_hz));
    std::size_t jitter = 0;
    if (jitter_frames > 0) {
        RngStream jr = rng.split("jitter");
        jitter = jr.next_below(static_cast<std::uint64_t>(jitter_frames) + 1);
    }
    const auto window_frames =
        static_cast<std::size_t>(std::llround(c.response_window_s * frame_rate_hz));
    const std::size_t total = window_frames + T;
    const std::size_t offset = std::min(latency_frames + jitter, total - T);

    RngStream noise = rng.split("noise");
    SynthesizedStream out;
    out.response_offset = offset;
    out.stream.frame_rate_hz = frame_rate_hz;
    out.stream.frames.assign(total, Frame(d, 0.0));
    for (std::size_t t = 0; t < total; ++t) {
        const bool in_response = t >= offset && t < offset + T;
        for (std::size_t i = 0; i < d; ++i) {
            const double base = in_response ? c.activity.frames[t - offset][i] : 0.0;
            out.stream.frames[t][i] = base + natural_std * noise.next_gaussian();
        }
    }
    return out;
}

} // namespace sim_detail

inline FeatureStream synthesize_response(const GenuineAgentConfig& agent, const ChallengeSpec& c,
                                         double frame_rate_hz, RngStream& rng) {
    return sim_detail::genuine_like(c, frame_rate_hz, agent.natural_std, agent.jitter_frames,
                                    agent.reaction_latency_s, rng)
        .stream;
}

inline FeatureStream synthesize_response(const GenuineAgentConfig& base,
                                         const DeepfakeAgentConfig& attacker,
                                         const ChallengeSpec& c, double frame_rate_hz,
                                         RngStream& rng) {
    sim_detail::SynthesizedStream synth = sim_detail::genuine_like(
        c, frame_rate_hz, base.natural_std, base.jitter_frames, attacker.reaction_latency_s, rng);
    if (attacker.coverage.count(c.id)) return std::move(synth.stream); // rendered cleanly

    const std::size_t T = c.activity.length();
    const std::size_t d = c.activity.dim();
    for (std::size_t i : attacker.artifact_dims)
        if (i >= d)
            throw Error(ErrorCode::ConfigInvalid, "artifact dimension out of range");

    const double amp = attacker.artifact_amp * base.natural_std;
    if (amp != 0.0)
        for (std::size_t t = synth.response_offset; t < synth.response_offset + T; ++t)
            for (std::size_t i : attacker.artifact_dims) synth.stream.frames[t][i] += amp;

    if (attacker.discontinuity && T >= 4) {
        const auto first = synth.stream.frames.begin() +
                           static_cast<std::ptrdiff_t>(synth.response_offset + T / 2);
        const auto last = synth.stream.frames.begin() +
                          static_cast<std::ptrdiff_t>(synth.response_offset + T);
        std::rotate(first, first + static_cast<std::ptrdiff_t>(T / 4), last);
    }
    return std::move(synth.stream);
}

// --- channel ---------------------------------------------------------------

// Per frame: maybe hold the previous (post-drop) frame, add Gaussian channel
// noise, quantize to the nearest multiple of quant_step (ties to even). The
// first frame is never dropped.
inline FeatureStream apply_channel(const FeatureStream& input, const ChannelConfig& ch,
                                   RngStream& rng) {
    validate_channel_config(ch);
    RngStream drop_rng = rng.split("drop");
    RngStream noise_rng = rng.split("noise");

    FeatureStream out;
    out.frame_rate_hz = input.frame_rate_hz;
    out.frames.reserve(input.frames.size());

    std::vector<Frame> resolved;
    resolved.reserve(input.frames.size());
    for (std::size_t t = 0; t < input.frames.size(); ++t) {
        const bool drop = t > 0 && drop_rng.next_unit() < ch.drop_prob;
        resolved.push_back(drop ? resolved.back() : input.frames[t]);
    }
    for (const Frame& f : resolved) {
        Frame g(f.size());
        for (std::size_t i = 0; i < f.size(); ++i) {
            double v = f[i] + ch.noise_std * noise_rng.next_gaussian();
            if (ch.quant_step > 0.0) v = ch.quant_step * std::nearbyint(v / ch.quant_step);
            g[i] = v;
        }
        out.frames.push_back(std::move(g));
    }
    return out;
}

// --- episodes ----------------------------------------------------------------

struct Scenario {
    SessionConfig session; // catalog, call context, suspicion, policy, grace, budget
    GenuineAgentConfig genuine;
    DeepfakeAgentConfig deepfake;
    ChannelConfig channel;
    std::map<std::string, DetectorModel> models; // per challenge id
    double frame_rate_hz = 25.0;
    SelectionMode selection_mode = SelectionMode::Utility;
};

struct RoundRecord {
    std::string challenge_id;
    Verdict verdict;
};

struct EpisodeOutcome {
    std::int64_t index = 0;
    TruthClass truth = TruthClass::Genuine;
    FinalOutcome final = FinalOutcome::Rejected;
    int rounds = 0;
    std::vector<RoundRecord> round_details;
    std::uint64_t seed = 0;
    std::optional<std::string> error;

    double round1_score() const {
        return round_details.empty() ? 0.0 : round_details.front().verdict.anomaly_score;
    }
};

inline void validate_scenario(const Scenario& sc) {
    validate_suspicion_config(sc.session.suspicion);
    validate_selection_policy(sc.session.policy);
    validate_call_context(sc.session.context);
    validate_genuine_config(sc.genuine);
    validate_deepfake_config(sc.deepfake);
    validate_channel_config(sc.channel);
    if (!(sc.frame_rate_hz > 0))
        throw Error(ErrorCode::ConfigInvalid, "frame_rate_hz must be > 0");
    if (!should_trigger(compute_suspicion(sc.session.context.indicators, sc.session.suspicion),
                        sc.session.suspicion))
        throw Error(ErrorCode::ConfigInvalid, "scenario suspicion never reaches the trigger threshold");
    for (const ChallengeSpec& c :
         filter_eligible(sc.session.catalog, sc.session.context, {}, sc.session.policy)) {
        const auto it = sc.models.find(c.id);
        if (it == sc.models.end())
            throw Error(ErrorCode::ConfigInvalid, "no detector model for challenge " + c.id);
        if (it->second.dim() != c.activity.dim())
            throw Error(ErrorCode::ConfigInvalid, "model dimension mismatch for challenge " + c.id);
    }
}

// Drives one full session: trigger, challenge selection, agent response,
// channel, extraction, scoring, and the scripted user policy (Proceed on
// Pass; Rechallenge on Fail while budget and eligible challenges remain;
// Terminate otherwise). Module errors are recorded on the outcome, never
// thrown.
inline EpisodeOutcome run_episode(const Scenario& sc, TruthClass truth, std::uint64_t seed) {
    EpisodeOutcome out;
    out.truth = truth;
    out.seed = seed;
    RngStream rng(seed);

    const SessionConfig* cfg = &sc.session;
    SessionConfig local;
    std::shared_ptr<RngStream> select_rng;
    if (sc.selection_mode == SelectionMode::UniformRandom) {
        local = sc.session;
        select_rng = std::make_shared<RngStream>(rng.split("selector"));
        local.select_override = [select_rng](const std::vector<ChallengeSpec>& eligible) {
            return &eligible[select_rng->next_below(eligible.size())];
        };
        cfg = &local;
    }

    SessionState state = initial_state(*cfg);
    std::vector<Action> actions;
    double now = 0.0;

    try {
        const double suspicion = compute_suspicion(cfg->context.indicators, cfg->suspicion);
        std::tie(state, actions) = advance(*cfg, std::move(state), event::Trigger{suspicion}, now);
        if (state.phase == Phase::Idle) {
            out.error = "suspicion below trigger threshold";
            out.final = FinalOutcome::Accepted;
            return out;
        }

        for (int round = 0;; ++round) {
            const auto& issued = std::get<action::IssueChallenge>(actions.front());
            const ChallengeSpec challenge = issued.challenge;
            RngStream round_rng = rng.split("round").split(static_cast<std::uint64_t>(round));
            out.rounds = round + 1;

            std::tie(state, actions) =
                advance(*cfg, std::move(state), event::ChallengeSent{challenge.id}, now);
            const double deadline = *state.deadline;
            const double latency = truth == TruthClass::Genuine ? sc.genuine.reaction_latency_s
                                                                : sc.deepfake.reaction_latency_s;

            Verdict verdict;
            if (now + latency > deadline) {
                now = deadline + 1.0;
                std::tie(state, actions) = advance(*cfg, std::move(state), event::Tick{now}, now);
                verdict = state.verdicts.back();
            } else {
                now += latency;
                std::tie(state, actions) =
                    advance(*cfg, std::move(state), event::CaptureStarted{}, now);
                RngStream agent_rng = round_rng.split("agent");
                FeatureStream raw =
                    truth == TruthClass::Genuine
                        ? synthesize_response(sc.genuine, challenge, sc.frame_rate_hz, agent_rng)
                        : synthesize_response(sc.genuine, sc.deepfake, challenge, sc.frame_rate_hz,
                                              agent_rng);
                RngStream channel_rng = round_rng.split("channel");
                FeatureStream received = apply_channel(raw, sc.channel, channel_rng);
                std::tie(state, actions) =
                    advance(*cfg, std::move(state), event::StreamChunk{received}, now);
                std::tie(state, actions) =
                    advance(*cfg, std::move(state), event::CaptureEnded{}, now);
                try {
                    const auto model = sc.models.find(challenge.id);
                    if (model == sc.models.end())
                        throw Error(ErrorCode::ConfigInvalid,
                                    "no detector model for challenge " + challenge.id);
                    const LocalizationResult loc = extract_response(received, challenge);
                    verdict = decide(model->second, loc.segment);
                } catch (const Error& e) {
                    out.error = e.what();
                    verdict = extraction_failed_verdict();
                }
                std::tie(state, actions) =
                    advance(*cfg, std::move(state), event::Scored{verdict}, now);
            }
            out.round_details.push_back(RoundRecord{challenge.id, verdict});

            UserChoice choice = UserChoice::Terminate;
            if (verdict.outcome == VerdictOutcome::Pass)
                choice = UserChoice::Proceed;
            else if (state.rechallenge_budget > 0 && !eligible_now(*cfg, state).empty())
                choice = UserChoice::Rechallenge;
            std::tie(state, actions) =
                advance(*cfg, std::move(state), event::UserDecision{choice}, now);
            if (state.phase == Phase::Closed) {
                out.final = *state.final;
                return out;
            }
        }
    } catch (const Error& e) {
        out.error = e.what();
        out.final = FinalOutcome::Rejected;
        return out;
    }
}

// --- experiment -----------------------------------------------------------------

struct ExperimentResult {
    ExperimentReport report;
    std::vector<EpisodeOutcome> episodes; // ordered by episode index
};

inline std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[v & 0xF];
        v >>= 4;
    }
    return s;
}

// Digest over everything that determines outcomes: catalog, models, agent
// and channel parameters, session settings, episode count and base seed.
inline std::string scenario_digest(const Scenario& sc, int n_episodes, std::uint64_t base_seed) {
    nlohmann::json j; // sorted keys -> canonical dump
    j["catalog"] = hex64(detail::fnv1a64(catalog_to_json_text(sc.session.catalog)));
    nlohmann::json models;
    for (const auto& [id, model] : sc.models)
        models[id] = hex64(detail::fnv1a64(model_to_json_text(model)));
    j["models"] = models;
    j["suspicion"] = {{"w_new", sc.session.suspicion.w_new},
                      {"w_history", sc.session.suspicion.w_history},
                      {"w_masked", sc.session.suspicion.w_masked},
                      {"w_liveness", sc.session.suspicion.w_liveness},
                      {"trigger_threshold", sc.session.suspicion.trigger_threshold}};
    nlohmann::json min_quality;
    for (const auto& [cat, q] : sc.session.policy.min_quality) min_quality[to_string(cat)] = q;
    j["policy"] = {{"burden_weight", sc.session.policy.burden_weight},
                   {"min_quality", min_quality},
                   {"allow_repeat", sc.session.policy.allow_repeat}};
    j["context"] = {{"modality", to_string(sc.session.context.modality)},
                    {"quality", sc.session.context.quality},
                    {"caller_status", to_string(sc.session.context.caller_status)},
                    {"new_unverified_caller", sc.session.context.indicators.new_unverified_caller},
                    {"malicious_network_history",
                     sc.session.context.indicators.malicious_network_history},
                    {"identity_masked", sc.session.context.indicators.identity_masked},
                    {"liveness", sc.session.context.indicators.liveness},
                    {"manual_request", sc.session.context.indicators.manual_request}};
    j["grace_s"] = sc.session.grace_s;
    j["rechallenge_budget"] = sc.session.rechallenge_budget;
    j["genuine"] = {{"natural_std", sc.genuine.natural_std},
                    {"jitter_frames", sc.genuine.jitter_frames},
                    {"reaction_latency_s", sc.genuine.reaction_latency_s}};
    j["deepfake"] = {{"coverage", sc.deepfake.coverage},
                     {"artifact_amp", sc.deepfake.artifact_amp},
                     {"artifact_dims", sc.deepfake.artifact_dims},
                     {"discontinuity", sc.deepfake.discontinuity},
                     {"reaction_latency_s", sc.deepfake.reaction_latency_s}};
    j["channel"] = {{"quant_step", sc.channel.quant_step},
                    {"noise_std", sc.channel.noise_std},
                    {"drop_prob", sc.channel.drop_prob}};
    j["frame_rate_hz"] = sc.frame_rate_hz;
    j["selection_mode"] = to_string(sc.selection_mode);
    j["n_episodes"] = n_episodes;
    j["base_seed"] = base_seed;
    return hex64(detail::fnv1a64(j.dump()));
}

// Runs n_episodes per truth class on independent seed substreams
// (episode i draws seed base_seed XOR i, genuine episodes first), optionally
// across worker threads. Results are identical for any jobs value.
inline ExperimentResult run_experiment(const Scenario& sc, int n_episodes, std::uint64_t base_seed,
                                       int jobs = 1) {
    if (n_episodes < 1) throw Error(ErrorCode::ConfigInvalid, "n_episodes must be >= 1");
    validate_scenario(sc);
    const std::size_t total = 2 * static_cast<std::size_t>(n_episodes);

    ExperimentResult result;
    result.episodes.assign(total, EpisodeOutcome{});

    auto run_index = [&](std::size_t i) {
        const TruthClass truth =
            i < static_cast<std::size_t>(n_episodes) ? TruthClass::Genuine : TruthClass::Deepfake;
        EpisodeOutcome out = run_episode(sc, truth, base_seed ^ static_cast<std::uint64_t>(i));
        out.index = static_cast<std::int64_t>(i);
        result.episodes[i] = std::move(out);
    };

    if (jobs <= 1) {
        for (std::size_t i = 0; i < total; ++i) run_index(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> workers;
        workers.reserve(static_cast<std::size_t>(jobs));
        for (int w = 0; w < jobs; ++w)
            workers.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < total; i = next.fetch_add(1))
                    run_index(i);
            });
        for (std::thread& t : workers) t.join();
    }

    std::vector<EpisodeStatsRow> rows;
    rows.reserve(total);
    for (const EpisodeOutcome& e : result.episodes)
        rows.push_back(EpisodeStatsRow{e.truth == TruthClass::Deepfake,
                                       e.final == FinalOutcome::Rejected, e.rounds,
                                       e.round1_score()});
    result.report = compute_report(rows, scenario_digest(sc, n_episodes, base_seed));
    return result;
}

// --- episode log records -----------------------------------------------------

// Newline-delimited JSON: one header record, then one record per episode.
inline std::string episode_log_header(const std::string& config_digest) {
    nlohmann::ordered_json j;
    j["t"] = "header";
    j["version"] = 1;
    j["config_digest"] = config_digest;
    return j.dump();
}

inline std::string episode_to_json_line(const EpisodeOutcome& e) {
    nlohmann::ordered_json j;
    j["t"] = "episode";
    j["index"] = e.index;
    j["truth"] = to_string(e.truth);
    j["seed"] = e.seed;
    j["final"] = to_string(e.final);
    j["rounds"] = e.rounds;
    nlohmann::ordered_json rounds = nlohmann::ordered_json::array();
    for (const RoundRecord& r : e.round_details)
        rounds.push_back({{"challenge_id", r.challenge_id},
                          {"outcome", to_string(r.verdict.outcome)},
                          {"anomaly_score", r.verdict.anomaly_score},
                          {"confidence", r.verdict.confidence},
                          {"reason", to_string(r.verdict.reason)}});
    j["rounds_detail"] = rounds;
    if (e.error) j["error"] = *e.error;
    return j.dump();
}

} // namespace dfcaptcha
