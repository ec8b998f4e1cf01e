#pragma once

// Challenge catalog: validation, strict JSON (de)serialization, and the
// shipped default entries. The file schema is pinned:
//   {"version": 1, "challenges": [ {...}, ... ]}
// with template frames stored as nested arrays of numbers. Unknown fields
// are rejected to catch schema drift.

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "dfcaptcha/errors.hpp"
#include "dfcaptcha/rng.hpp"
#include "dfcaptcha/types.hpp"

namespace dfcaptcha {

struct Catalog {
    std::vector<ChallengeSpec> challenges;

    const ChallengeSpec* find(std::string_view id) const {
        for (const ChallengeSpec& c : challenges)
            if (c.id == id) return &c;
        return nullptr;
    }
    std::size_t size() const noexcept { return challenges.size(); }
};

// Returns a catalog iff every entry's invariants hold and ids are unique.
// Entry order is preserved.
inline Catalog validate_catalog(std::vector<ChallengeSpec> entries) {
    if (entries.empty())
        throw Error(ErrorCode::InvariantViolation, "catalog is empty");
    std::set<std::string> seen;
    for (const ChallengeSpec& c : entries) {
        validate_challenge(c);
        if (!seen.insert(c.id).second)
            throw Error(ErrorCode::DuplicateId, c.id);
    }
    return Catalog{std::move(entries)};
}

// --- JSON --------------------------------------------------------------

namespace catalog_json {

using json = nlohmann::ordered_json;

inline void require_keys(const json& obj, const std::set<std::string>& allowed,
                         const std::set<std::string>& required, const std::string& where) {
    for (const auto& item : obj.items())
        if (!allowed.count(item.key()))
            throw Error(ErrorCode::ParseError, "unknown field \"" + item.key() + "\" in " + where);
    for (const std::string& k : required)
        if (!obj.contains(k))
            throw Error(ErrorCode::ParseError, "missing field \"" + k + "\" in " + where);
}

inline std::vector<Frame> frames_from_json(const json& arr, const std::string& where) {
    if (!arr.is_array())
        throw Error(ErrorCode::ParseError, "frames must be an array in " + where);
    std::vector<Frame> frames;
    frames.reserve(arr.size());
    for (const json& row : arr) {
        if (!row.is_array())
            throw Error(ErrorCode::ParseError, "frame must be an array of numbers in " + where);
        Frame f;
        f.reserve(row.size());
        for (const json& v : row) {
            if (!v.is_number())
                throw Error(ErrorCode::ParseError, "non-numeric feature value in " + where);
            f.push_back(v.get<double>());
        }
        frames.push_back(std::move(f));
    }
    return frames;
}

inline json frames_to_json(const std::vector<Frame>& frames) {
    json arr = json::array();
    for (const Frame& f : frames) arr.push_back(f);
    return arr;
}

} // namespace catalog_json

inline nlohmann::ordered_json challenge_to_json(const ChallengeSpec& c) {
    nlohmann::ordered_json j;
    j["id"] = c.id;
    j["name"] = c.name;
    j["category"] = to_string(c.category);
    j["modality"] = to_string(c.modality);
    j["burden"] = c.burden;
    j["coverage_prior"] = c.coverage_prior;
    j["response_window_s"] = c.response_window_s;
    if (!c.excluded_status.empty()) {
        nlohmann::ordered_json arr = nlohmann::ordered_json::array();
        for (CallerStatus s : c.excluded_status) arr.push_back(to_string(s));
        j["excluded_status"] = arr;
    }
    j["template"] = nlohmann::ordered_json{{"frames", catalog_json::frames_to_json(c.activity.frames)}};
    return j;
}

inline ChallengeSpec challenge_from_json(const nlohmann::ordered_json& j) {
    using catalog_json::require_keys;
    if (!j.is_object())
        throw Error(ErrorCode::ParseError, "challenge entry must be an object");
    const std::string where =
        j.contains("id") && j["id"].is_string() ? "challenge \"" + j["id"].get<std::string>() + "\""
                                                : "challenge entry";
    require_keys(j,
                 {"id", "name", "category", "modality", "burden", "coverage_prior",
                  "response_window_s", "excluded_status", "template"},
                 {"id", "name", "category", "modality", "burden", "coverage_prior",
                  "response_window_s", "template"},
                 where);

    ChallengeSpec c;
    if (!j["id"].is_string()) throw Error(ErrorCode::ParseError, "id must be a string");
    c.id = j["id"].get<std::string>();
    if (!j["name"].is_string()) throw Error(ErrorCode::ParseError, "name must be a string in " + where);
    c.name = j["name"].get<std::string>();

    const auto cat = j["category"].is_string()
                         ? category_from_string(j["category"].get<std::string>())
                         : std::nullopt;
    if (!cat) throw Error(ErrorCode::ParseError, "bad category in " + where);
    c.category = *cat;

    const auto mod = j["modality"].is_string()
                         ? modality_from_string(j["modality"].get<std::string>())
                         : std::nullopt;
    if (!mod) throw Error(ErrorCode::ParseError, "bad modality in " + where);
    c.modality = *mod;

    for (const char* k : {"burden", "coverage_prior", "response_window_s"})
        if (!j[k].is_number())
            throw Error(ErrorCode::ParseError, std::string(k) + " must be a number in " + where);
    c.burden = j["burden"].get<double>();
    c.coverage_prior = j["coverage_prior"].get<double>();
    c.response_window_s = j["response_window_s"].get<double>();

    if (j.contains("excluded_status")) {
        if (!j["excluded_status"].is_array())
            throw Error(ErrorCode::ParseError, "excluded_status must be an array in " + where);
        for (const auto& v : j["excluded_status"]) {
            const auto st = v.is_string() ? caller_status_from_string(v.get<std::string>())
                                          : std::nullopt;
            if (!st) throw Error(ErrorCode::ParseError, "bad excluded_status value in " + where);
            c.excluded_status.push_back(*st);
        }
    }

    const auto& tmpl = j["template"];
    if (!tmpl.is_object())
        throw Error(ErrorCode::ParseError, "template must be an object in " + where);
    require_keys(tmpl, {"frames"}, {"frames"}, where + " template");
    c.activity.frames = catalog_json::frames_from_json(tmpl["frames"], where);
    return c;
}

inline std::string catalog_to_json_text(const Catalog& cat) {
    nlohmann::ordered_json j;
    j["version"] = 1;
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const ChallengeSpec& c : cat.challenges) arr.push_back(challenge_to_json(c));
    j["challenges"] = arr;
    return j.dump(2) + "\n";
}

inline Catalog catalog_from_json_text(const std::string& text) {
    nlohmann::ordered_json j;
    try {
        j = nlohmann::ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::ParseError, e.what());
    }
    if (!j.is_object())
        throw Error(ErrorCode::ParseError, "catalog file must be a JSON object");
    catalog_json::require_keys(j, {"version", "challenges"}, {"version", "challenges"}, "catalog");
    if (!j["version"].is_number_integer() || j["version"].get<int>() != 1)
        throw Error(ErrorCode::ParseError, "unsupported catalog version");
    if (!j["challenges"].is_array())
        throw Error(ErrorCode::ParseError, "challenges must be an array");
    std::vector<ChallengeSpec> entries;
    for (const auto& e : j["challenges"]) entries.push_back(challenge_from_json(e));
    return validate_catalog(std::move(entries));
}

// --- default entries ----------------------------------------------------

// Deterministic synthetic activity pattern for a challenge id: each feature
// dimension is a sinusoid whose frequency cycles through {2, 4, 8} periods
// per template and whose phase is derived from the id. High-frequency
// content keeps the localization peak sharp under noise.
inline ActivityTemplate synthetic_template(std::string_view id, std::size_t T = 32,
                                           std::size_t d = 16, double amplitude = 2.0) {
    ActivityTemplate t;
    t.frames.assign(T, Frame(d, 0.0));
    const std::uint64_t base = detail::fnv1a64(id);
    for (std::size_t i = 0; i < d; ++i) {
        static constexpr double kFreqs[3] = {2.0, 4.0, 8.0};
        const double freq = kFreqs[i % 3];
        const double phase =
            6.283185307179586 * (static_cast<double>(detail::mix64(base + i) >> 11) * 0x1.0p-53);
        for (std::size_t k = 0; k < T; ++k)
            t.frames[k][i] =
                amplitude * std::sin(6.283185307179586 * freq * static_cast<double>(k) /
                                         static_cast<double>(T) +
                                     phase);
    }
    return t;
}

namespace catalog_defaults {

inline ChallengeSpec entry(std::string id, std::string name, ChallengeCategory cat,
                           Modality mod, double burden, double coverage_prior,
                           std::vector<CallerStatus> excluded = {}) {
    ChallengeSpec c;
    c.id = std::move(id);
    c.name = std::move(name);
    c.category = cat;
    c.modality = mod;
    c.burden = burden;
    c.coverage_prior = coverage_prior;
    c.response_window_s = 4.0;
    c.excluded_status = std::move(excluded);
    c.activity = synthetic_template(c.id);
    return c;
}

} // namespace catalog_defaults

// The shipped video catalog: six simulation-stress challenges and six
// out-of-distribution challenges. Burden and coverage priors are
// hand-assigned metadata, not learned values.
inline Catalog default_catalog() {
    using catalog_defaults::entry;
    const auto T = ChallengeCategory::Technology;
    const auto O = ChallengeCategory::OutOfDistribution;
    const auto V = Modality::Video;
    std::vector<ChallengeSpec> cs;
    cs.push_back(entry("drop-object", "Drop object", T, V, 0.30, 0.15));
    cs.push_back(entry("bounce-object", "Bounce object", T, V, 0.35, 0.15));
    cs.push_back(entry("fold-shirt", "Fold shirt", T, V, 0.50, 0.20));
    cs.push_back(entry("stroke-hair", "Stroke hair", T, V, 0.25, 0.30));
    cs.push_back(entry("interact-background", "Interact with background scenery", T, V, 0.45,
                       0.10, {CallerStatus::Outdoors}));
    cs.push_back(entry("spill-water", "Spill water", T, V, 0.60, 0.10,
                       {CallerStatus::Outdoors, CallerStatus::Standing}));
    cs.push_back(entry("pick-up-object", "Pick up requested object", O, V, 0.40, 0.20));
    cs.push_back(entry("hand-expressions", "Hand expressions", O, V, 0.20, 0.25));
    cs.push_back(entry("tongue-motion", "Tongue motion", O, V, 0.15, 0.20));
    cs.push_back(entry("fold-ear", "Fold ear", O, V, 0.20, 0.15));
    cs.push_back(entry("face-occlusions", "Face occlusions", O, V, 0.25, 0.25));
    cs.push_back(entry("remove-glasses", "Remove glasses", O, V, 0.30, 0.35));
    return validate_catalog(std::move(cs));
}

// Voice challenges, shipped separately so audio-only deployments can merge
// them into a working catalog.
inline Catalog audio_challenge_catalog() {
    using catalog_defaults::entry;
    const auto A = ChallengeCategory::AudioChallenge;
    const auto M = Modality::Audio;
    std::vector<ChallengeSpec> cs;
    cs.push_back(entry("mimic-phrase", "Mimic phrase", A, M, 0.20, 0.30));
    cs.push_back(entry("hum-tune", "Hum tune", A, M, 0.25, 0.25));
    cs.push_back(entry("sing-song-part", "Sing part of song", A, M, 0.50, 0.15));
    cs.push_back(entry("repeat-accent", "Repeat accent", A, M, 0.40, 0.20));
    cs.push_back(entry("change-tone-speed", "Change tone or speed", A, M, 0.30, 0.25));
    cs.push_back(entry("clear-throat", "Clear throat", A, M, 0.10, 0.40));
    cs.push_back(entry("whistle", "Whistle", A, M, 0.30, 0.20));
    return validate_catalog(std::move(cs));
}

} // namespace dfcaptcha
