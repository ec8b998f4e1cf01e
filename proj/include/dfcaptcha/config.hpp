#pragma once

// Run configuration: one TOML file describing paths, suspicion weights,
// selection policy, training settings, protocol timing, and the simulation
// scenario. Unknown keys are rejected. Relative paths resolve against the
// config file's directory.

#include <filesystem>
#include <set>
#include <string>

#include "dfcaptcha/detector.hpp"
#include "dfcaptcha/errors.hpp"
#include "dfcaptcha/fsio.hpp"
#include "dfcaptcha/selector.hpp"
#include "dfcaptcha/simulation.hpp"
#include "dfcaptcha/suspicion.hpp"
#include "dfcaptcha/toml.hpp"
#include "dfcaptcha/types.hpp"

namespace dfcaptcha {

struct ScenarioConfig {
    std::string name = "default";
    int n_episodes = 1000;
    std::uint64_t base_seed = 1234;
    double frame_rate_hz = 25.0;
    SelectionMode selection_mode = SelectionMode::Utility;
    CallContext call;
    GenuineAgentConfig genuine;
    DeepfakeAgentConfig deepfake;
    ChannelConfig channel;
};

struct RunConfig {
    std::filesystem::path catalog_path;
    std::filesystem::path models_dir;
    std::filesystem::path output_dir;
    SuspicionConfig suspicion;
    SelectionPolicy policy;
    TrainConfig train;
    int train_segments_per_challenge = 256;
    // One model per challenge id by default; the shared mode trains a single
    // model on the union of every challenge's clean corpus and scores all
    // challenges with it.
    bool shared_model = false;
    double grace_s = 2.0;
    int rechallenge_budget = 2;
    ScenarioConfig scenario;
};

namespace config_detail {

// Tracks which keys a loader consumed so leftovers can be reported.
class Reader {
public:
    explicit Reader(const toml::Table& table) : table_(table) {}

    const toml::Value* find(const std::string& key) {
        consumed_.insert(key);
        const auto it = table_.find(key);
        return it == table_.end() ? nullptr : &it->second;
    }

    [[noreturn]] void fail(const std::string& key, const std::string& cause) const {
        throw Error(ErrorCode::ConfigInvalid, "config key \"" + key + "\": " + cause);
    }

    double number(const std::string& key, double fallback) {
        const toml::Value* v = find(key);
        if (!v) return fallback;
        if (!v->is_int() && !v->is_float()) fail(key, "expected a number");
        return v->as_double();
    }
    std::int64_t integer(const std::string& key, std::int64_t fallback) {
        const toml::Value* v = find(key);
        if (!v) return fallback;
        if (!v->is_int()) fail(key, "expected an integer");
        return v->as_int();
    }
    bool boolean(const std::string& key, bool fallback) {
        const toml::Value* v = find(key);
        if (!v) return fallback;
        if (!v->is_bool()) fail(key, "expected a boolean");
        return v->as_bool();
    }
    std::string text(const std::string& key, const std::string& fallback) {
        const toml::Value* v = find(key);
        if (!v) return fallback;
        if (!v->is_string()) fail(key, "expected a string");
        return v->as_string();
    }
    std::string required_text(const std::string& key) {
        const toml::Value* v = find(key);
        if (!v) fail(key, "missing");
        if (!v->is_string()) fail(key, "expected a string");
        return v->as_string();
    }
    std::vector<std::string> string_array(const std::string& key) {
        const toml::Value* v = find(key);
        std::vector<std::string> out;
        if (!v) return out;
        if (!v->is_array()) fail(key, "expected an array");
        for (const toml::Value& item : v->as_array()) {
            if (!item.is_string()) fail(key, "expected strings");
            out.push_back(item.as_string());
        }
        return out;
    }
    std::vector<std::size_t> index_array(const std::string& key) {
        const toml::Value* v = find(key);
        std::vector<std::size_t> out;
        if (!v) return out;
        if (!v->is_array()) fail(key, "expected an array");
        for (const toml::Value& item : v->as_array()) {
            if (!item.is_int() || item.as_int() < 0) fail(key, "expected nonnegative integers");
            out.push_back(static_cast<std::size_t>(item.as_int()));
        }
        return out;
    }

    void reject_unconsumed() const {
        for (const auto& [key, value] : table_)
            if (!consumed_.count(key))
                throw Error(ErrorCode::ConfigInvalid, "unknown config key \"" + key + "\"");
    }

private:
    const toml::Table& table_;
    std::set<std::string> consumed_;
};

} // namespace config_detail

inline RunConfig parse_run_config(const toml::Table& table,
                                  const std::filesystem::path& base_dir) {
    config_detail::Reader r(table);
    RunConfig cfg;

    auto resolve = [&base_dir](const std::string& p) {
        const std::filesystem::path path(p);
        return path.is_absolute() ? path : base_dir / path;
    };
    cfg.catalog_path = resolve(r.required_text("paths.catalog"));
    cfg.models_dir = resolve(r.text("paths.models_dir", "models"));
    cfg.output_dir = resolve(r.text("paths.output_dir", "out"));

    cfg.suspicion.w_new = r.number("suspicion.w_new", cfg.suspicion.w_new);
    cfg.suspicion.w_history = r.number("suspicion.w_history", cfg.suspicion.w_history);
    cfg.suspicion.w_masked = r.number("suspicion.w_masked", cfg.suspicion.w_masked);
    cfg.suspicion.w_liveness = r.number("suspicion.w_liveness", cfg.suspicion.w_liveness);
    cfg.suspicion.trigger_threshold =
        r.number("suspicion.trigger_threshold", cfg.suspicion.trigger_threshold);
    validate_suspicion_config(cfg.suspicion);

    cfg.policy.burden_weight = r.number("selection.burden_weight", cfg.policy.burden_weight);
    cfg.policy.allow_repeat = r.boolean("selection.allow_repeat", cfg.policy.allow_repeat);
    for (const auto& [name, cat] :
         {std::pair{"technology", ChallengeCategory::Technology},
          std::pair{"out_of_distribution", ChallengeCategory::OutOfDistribution},
          std::pair{"audio", ChallengeCategory::AudioChallenge}}) {
        const double q = r.number(std::string("selection.min_quality.") + name, 0.0);
        if (q != 0.0) cfg.policy.min_quality[cat] = q;
    }
    validate_selection_policy(cfg.policy);

    cfg.train.epochs = static_cast<int>(r.integer("train.epochs", cfg.train.epochs));
    cfg.train.learning_rate = r.number("train.learning_rate", cfg.train.learning_rate);
    cfg.train.seed = static_cast<std::uint64_t>(
        r.integer("train.seed", static_cast<std::int64_t>(cfg.train.seed)));
    cfg.train.groups = static_cast<int>(r.integer("train.groups", cfg.train.groups));
    cfg.train.percentile = r.number("train.percentile", cfg.train.percentile);
    cfg.train.batch_size = static_cast<int>(r.integer("train.batch_size", cfg.train.batch_size));
    cfg.train.epsilon = r.number("train.epsilon", cfg.train.epsilon);
    const std::string combine = r.text("train.combine", to_string(cfg.train.combine));
    const auto combine_rule = combine_from_string(combine);
    if (!combine_rule) r.fail("train.combine", "expected ensemble_only, baseline_only, or max");
    cfg.train.combine = *combine_rule;
    cfg.train_segments_per_challenge = static_cast<int>(
        r.integer("train.segments_per_challenge", cfg.train_segments_per_challenge));
    if (cfg.train_segments_per_challenge < 1)
        r.fail("train.segments_per_challenge", "must be >= 1");
    cfg.shared_model = r.boolean("train.shared_model", cfg.shared_model);
    validate_train_config(cfg.train);

    cfg.grace_s = r.number("protocol.grace_s", cfg.grace_s);
    cfg.rechallenge_budget =
        static_cast<int>(r.integer("protocol.rechallenge_budget", cfg.rechallenge_budget));
    if (cfg.grace_s < 0) r.fail("protocol.grace_s", "must be >= 0");
    if (cfg.rechallenge_budget < 0) r.fail("protocol.rechallenge_budget", "must be >= 0");

    ScenarioConfig& sc = cfg.scenario;
    sc.name = r.text("scenario.name", sc.name);
    sc.n_episodes = static_cast<int>(r.integer("scenario.n_episodes", sc.n_episodes));
    sc.base_seed = static_cast<std::uint64_t>(
        r.integer("scenario.base_seed", static_cast<std::int64_t>(sc.base_seed)));
    sc.frame_rate_hz = r.number("scenario.frame_rate_hz", sc.frame_rate_hz);
    const auto mode = selection_mode_from_string(
        r.text("scenario.selection_mode", to_string(sc.selection_mode)));
    if (!mode) r.fail("scenario.selection_mode", "expected utility or uniform_random");
    sc.selection_mode = *mode;
    if (sc.n_episodes < 1) r.fail("scenario.n_episodes", "must be >= 1");

    const auto modality = modality_from_string(r.text("scenario.call.modality", "audio_video"));
    if (!modality) r.fail("scenario.call.modality", "expected audio, video, or audio_video");
    sc.call.modality = *modality;
    sc.call.quality = r.number("scenario.call.quality", 0.9);
    const auto status = caller_status_from_string(r.text("scenario.call.caller_status", "seated"));
    if (!status) r.fail("scenario.call.caller_status", "bad caller status");
    sc.call.caller_status = *status;
    sc.call.indicators.new_unverified_caller =
        r.boolean("scenario.call.new_unverified_caller", true);
    sc.call.indicators.malicious_network_history =
        r.boolean("scenario.call.malicious_network_history", false);
    sc.call.indicators.identity_masked = r.boolean("scenario.call.identity_masked", true);
    sc.call.indicators.liveness = r.number("scenario.call.liveness", 0.4);
    sc.call.indicators.manual_request = r.boolean("scenario.call.manual_request", false);
    validate_call_context(sc.call);

    sc.genuine.natural_std = r.number("scenario.genuine.natural_std", sc.genuine.natural_std);
    sc.genuine.jitter_frames =
        static_cast<int>(r.integer("scenario.genuine.jitter_frames", sc.genuine.jitter_frames));
    sc.genuine.reaction_latency_s =
        r.number("scenario.genuine.reaction_latency_s", sc.genuine.reaction_latency_s);
    validate_genuine_config(sc.genuine);

    for (std::string& id : r.string_array("scenario.deepfake.coverage"))
        sc.deepfake.coverage.insert(std::move(id));
    sc.deepfake.artifact_amp =
        r.number("scenario.deepfake.artifact_amp", sc.deepfake.artifact_amp);
    sc.deepfake.artifact_dims = r.index_array("scenario.deepfake.artifact_dims");
    sc.deepfake.discontinuity =
        r.boolean("scenario.deepfake.discontinuity", sc.deepfake.discontinuity);
    sc.deepfake.reaction_latency_s =
        r.number("scenario.deepfake.reaction_latency_s", sc.deepfake.reaction_latency_s);
    validate_deepfake_config(sc.deepfake);

    sc.channel.quant_step = r.number("scenario.channel.quant_step", sc.channel.quant_step);
    sc.channel.noise_std = r.number("scenario.channel.noise_std", sc.channel.noise_std);
    sc.channel.drop_prob = r.number("scenario.channel.drop_prob", sc.channel.drop_prob);
    validate_channel_config(sc.channel);

    r.reject_unconsumed();
    return cfg;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    const std::string text = read_text_file(path);
    const toml::Table table = toml::parse_text(text);
    RunConfig cfg = parse_run_config(
        table, path.has_parent_path() ? path.parent_path() : std::filesystem::path("."));
    if (!std::filesystem::exists(cfg.catalog_path))
        throw Error(ErrorCode::ConfigInvalid,
                    "catalog file does not exist: " + cfg.catalog_path.string());
    std::error_code ec;
    std::filesystem::create_directories(cfg.output_dir, ec);
    if (ec || !std::filesystem::is_directory(cfg.output_dir))
        throw Error(ErrorCode::ConfigInvalid,
                    "output directory is not writable: " + cfg.output_dir.string());
    return cfg;
}

} // namespace dfcaptcha
