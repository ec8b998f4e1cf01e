#pragma once

// Line protocol for driving sessions over standard streams or a socket:
// one single-line JSON object per message, UTF-8, newline terminated, with
// a short "t" tag first. Both events and engine actions are encodable so
// external harnesses can speak either side of the session.
//
//   {"t":"trigger","score":0.7}
//
// Unknown tags and unknown or missing fields are rejected.

#include <string>
#include <variant>

#include <json.hpp>

#include "dfcaptcha/catalog.hpp"
#include "dfcaptcha/errors.hpp"
#include "dfcaptcha/protocol.hpp"
#include "dfcaptcha/types.hpp"

namespace dfcaptcha {

using WireMessage = std::variant<Event, Action>;

namespace wire_detail {

using json = nlohmann::ordered_json;

inline json verdict_to_json(const Verdict& v) {
    json evidence;
    evidence["source_offset"] = v.evidence.source_offset;
    evidence["frames"] = catalog_json::frames_to_json(v.evidence.frames);
    json j;
    j["outcome"] = to_string(v.outcome);
    j["anomaly_score"] = v.anomaly_score;
    j["confidence"] = v.confidence;
    j["reason"] = to_string(v.reason);
    j["evidence"] = evidence;
    return j;
}

inline Verdict verdict_from_json(const json& j, int line_no) {
    auto fail = [line_no](const std::string& cause) -> Error {
        return Error(ErrorCode::MalformedMessage,
                     "line " + std::to_string(line_no) + ": " + cause);
    };
    if (!j.is_object()) throw fail("verdict must be an object");
    catalog_json::require_keys(j, {"outcome", "anomaly_score", "confidence", "reason", "evidence"},
                               {"outcome", "anomaly_score", "confidence", "reason", "evidence"},
                               "verdict");
    Verdict v;
    const auto outcome =
        j["outcome"].is_string() ? outcome_from_string(j["outcome"].get<std::string>()) : std::nullopt;
    if (!outcome) throw fail("bad verdict outcome");
    v.outcome = *outcome;
    if (!j["anomaly_score"].is_number() || !j["confidence"].is_number())
        throw fail("verdict scores must be numbers");
    v.anomaly_score = j["anomaly_score"].get<double>();
    v.confidence = j["confidence"].get<double>();
    const auto reason =
        j["reason"].is_string() ? reason_from_string(j["reason"].get<std::string>()) : std::nullopt;
    if (!reason) throw fail("bad verdict reason");
    v.reason = *reason;
    const auto& ev = j["evidence"];
    if (!ev.is_object()) throw fail("verdict evidence must be an object");
    catalog_json::require_keys(ev, {"source_offset", "frames"}, {"source_offset", "frames"},
                               "evidence");
    if (!ev["source_offset"].is_number_unsigned() && !ev["source_offset"].is_number_integer())
        throw fail("bad evidence source_offset");
    v.evidence.source_offset = ev["source_offset"].get<std::size_t>();
    v.evidence.frames = catalog_json::frames_from_json(ev["frames"], "evidence");
    return v;
}

struct EventEncoder {
    json operator()(const event::Trigger& e) const {
        return {{"t", "trigger"}, {"score", e.score}};
    }
    json operator()(const event::ChallengeSent& e) const {
        return {{"t", "challenge"}, {"id", e.id}};
    }
    json operator()(const event::CaptureStarted&) const { return {{"t", "capture_start"}}; }
    json operator()(const event::StreamChunk& e) const {
        return {{"t", "chunk"},
                {"frame_rate_hz", e.fragment.frame_rate_hz},
                {"frames", catalog_json::frames_to_json(e.fragment.frames)}};
    }
    json operator()(const event::CaptureEnded&) const { return {{"t", "capture_end"}}; }
    json operator()(const event::Scored& e) const {
        return {{"t", "scored"}, {"verdict", verdict_to_json(e.verdict)}};
    }
    json operator()(const event::UserDecision& e) const {
        return {{"t", "decision"}, {"choice", to_string(e.choice)}};
    }
    json operator()(const event::Tick& e) const { return {{"t", "tick"}, {"now", e.now}}; }
};

struct ActionEncoder {
    json operator()(const action::IssueChallenge& a) const {
        return {{"t", "issue"}, {"challenge", challenge_to_json(a.challenge)}};
    }
    json operator()(const action::BeginCapture& a) const {
        return {{"t", "begin_capture"}, {"window_s", a.window_s}};
    }
    json operator()(const action::RunDetector& a) const {
        return {{"t", "run_detector"}, {"challenge_id", a.challenge_id}};
    }
    json operator()(const action::NotifyUser& a) const {
        return {{"t", "notify"}, {"verdict", verdict_to_json(a.verdict)}};
    }
    json operator()(const action::CloseSession& a) const {
        return {{"t", "close"}, {"final", to_string(a.final)}};
    }
};

} // namespace wire_detail

inline std::string encode_message(const Event& e) {
    return std::visit(wire_detail::EventEncoder{}, e).dump();
}

inline std::string encode_message(const Action& a) {
    return std::visit(wire_detail::ActionEncoder{}, a).dump();
}

inline std::string encode_message(const WireMessage& m) {
    return std::visit([](const auto& v) { return encode_message(v); }, m);
}

inline WireMessage decode_message(const std::string& line, int line_no = 0) {
    using wire_detail::json;
    auto fail = [line_no](const std::string& cause) -> Error {
        return Error(ErrorCode::MalformedMessage,
                     "line " + std::to_string(line_no) + ": " + cause);
    };

    json j;
    try {
        j = json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
        throw fail(e.what());
    }
    if (!j.is_object() || !j.contains("t") || !j["t"].is_string()) throw fail("missing tag");
    const std::string tag = j["t"].get<std::string>();

    auto keys = [&](std::initializer_list<std::string> fields) {
        std::set<std::string> all{"t"};
        for (const std::string& f : fields) all.insert(f);
        try {
            catalog_json::require_keys(j, all, all, "message \"" + tag + "\"");
        } catch (const Error& e) {
            throw fail(e.what());
        }
    };
    auto number = [&](const char* field) -> double {
        if (!j[field].is_number()) throw fail(std::string(field) + " must be a number");
        return j[field].get<double>();
    };
    auto string_field = [&](const char* field) -> std::string {
        if (!j[field].is_string()) throw fail(std::string(field) + " must be a string");
        return j[field].get<std::string>();
    };

    if (tag == "trigger") {
        keys({"score"});
        return Event{event::Trigger{number("score")}};
    }
    if (tag == "challenge") {
        keys({"id"});
        return Event{event::ChallengeSent{string_field("id")}};
    }
    if (tag == "capture_start") {
        keys({});
        return Event{event::CaptureStarted{}};
    }
    if (tag == "chunk") {
        keys({"frame_rate_hz", "frames"});
        FeatureStream s;
        s.frame_rate_hz = number("frame_rate_hz");
        s.frames = catalog_json::frames_from_json(j["frames"], "chunk");
        try {
            validate_stream(s);
        } catch (const Error& e) {
            throw fail(e.what());
        }
        return Event{event::StreamChunk{std::move(s)}};
    }
    if (tag == "capture_end") {
        keys({});
        return Event{event::CaptureEnded{}};
    }
    if (tag == "scored") {
        keys({"verdict"});
        return Event{event::Scored{wire_detail::verdict_from_json(j["verdict"], line_no)}};
    }
    if (tag == "decision") {
        keys({"choice"});
        const auto choice = user_choice_from_string(string_field("choice"));
        if (!choice) throw fail("bad decision choice");
        return Event{event::UserDecision{*choice}};
    }
    if (tag == "tick") {
        keys({"now"});
        return Event{event::Tick{number("now")}};
    }
    if (tag == "issue") {
        keys({"challenge"});
        try {
            return Action{action::IssueChallenge{challenge_from_json(j["challenge"])}};
        } catch (const Error& e) {
            throw fail(e.what());
        }
    }
    if (tag == "begin_capture") {
        keys({"window_s"});
        return Action{action::BeginCapture{number("window_s")}};
    }
    if (tag == "run_detector") {
        keys({"challenge_id"});
        return Action{action::RunDetector{string_field("challenge_id")}};
    }
    if (tag == "notify") {
        keys({"verdict"});
        return Action{action::NotifyUser{wire_detail::verdict_from_json(j["verdict"], line_no)}};
    }
    if (tag == "close") {
        keys({"final"});
        const auto f = final_outcome_from_string(string_field("final"));
        if (!f) throw fail("bad close outcome");
        return Action{action::CloseSession{*f}};
    }
    throw fail("unknown message kind \"" + tag + "\"");
}

} // namespace dfcaptcha
