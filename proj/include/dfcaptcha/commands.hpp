#pragma once

// Operator commands behind the CLI: catalog management, detector training,
// simulation runs, and report recomputation. Each command is a deterministic
// composition of module operations; outputs are written atomically.

#include <filesystem>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dfcaptcha/catalog.hpp"
#include "dfcaptcha/config.hpp"
#include "dfcaptcha/detector.hpp"
#include "dfcaptcha/errors.hpp"
#include "dfcaptcha/fsio.hpp"
#include "dfcaptcha/metrics.hpp"
#include "dfcaptcha/simulation.hpp"
#include "dfcaptcha/wire.hpp"

namespace dfcaptcha {

// Exit codes: 0 ok, 2 domain/validation, 3 I/O, 4 configuration.
inline int exit_code_for(const Error& e) {
    switch (e.code()) {
        case ErrorCode::IoError: return 3;
        case ErrorCode::ConfigInvalid: return 4;
        default: return 2;
    }
}

namespace command_detail {

// Shortest round-trip decimal form, the same one the JSON writers use.
inline std::string format_double(double v) { return nlohmann::json(v).dump(); }

inline Catalog load_catalog_file(const std::filesystem::path& path) {
    return catalog_from_json_text(read_text_file(path));
}

// Clean training corpus for one challenge: the activity pattern plus natural
// variability, drawn from substreams labeled by challenge id.
inline std::vector<ResponseSegment> clean_corpus(const ChallengeSpec& c, double natural_std,
                                                 int segments, std::uint64_t seed) {
    const RngStream root = RngStream(seed).split("train-corpus").split(c.id);
    std::vector<ResponseSegment> out;
    out.reserve(static_cast<std::size_t>(segments));
    for (int s = 0; s < segments; ++s) {
        RngStream rng = root.split(static_cast<std::uint64_t>(s));
        ResponseSegment seg;
        seg.frames = c.activity.frames;
        for (Frame& f : seg.frames)
            for (double& v : f) v += natural_std * rng.next_gaussian();
        out.push_back(std::move(seg));
    }
    return out;
}

inline std::string csv_header() {
    return "index,truth,seed,final,rounds,round1_challenge,round1_score\n";
}

inline std::string episode_csv_row(const EpisodeOutcome& e) {
    std::ostringstream row;
    row << e.index << ',' << to_string(e.truth) << ',' << e.seed << ',' << to_string(e.final)
        << ',' << e.rounds << ','
        << (e.round_details.empty() ? "" : e.round_details.front().challenge_id) << ','
        << format_double(e.round1_score()) << '\n';
    return row.str();
}

inline void print_report_table(const ExperimentReport& r, std::ostream& out) {
    out << "episodes/class  " << r.episodes_per_class << "\n"
        << "TPR             " << format_double(r.tpr) << "\n"
        << "FPR             " << format_double(r.fpr) << "\n"
        << "AUC             " << format_double(r.auc) << "\n"
        << "mean rounds     " << format_double(r.mean_rounds) << "\n"
        << "config digest   " << r.config_digest << "\n";
}

inline Scenario build_scenario(const RunConfig& cfg, const Catalog& catalog,
                               std::map<std::string, DetectorModel> models) {
    Scenario sc;
    sc.session.catalog = catalog;
    sc.session.context = cfg.scenario.call;
    sc.session.suspicion = cfg.suspicion;
    sc.session.policy = cfg.policy;
    sc.session.grace_s = cfg.grace_s;
    sc.session.rechallenge_budget = cfg.rechallenge_budget;
    sc.genuine = cfg.scenario.genuine;
    sc.deepfake = cfg.scenario.deepfake;
    sc.channel = cfg.scenario.channel;
    sc.models = std::move(models);
    sc.frame_rate_hz = cfg.scenario.frame_rate_hz;
    sc.selection_mode = cfg.scenario.selection_mode;
    return sc;
}

} // namespace command_detail

// `dfcaptcha catalog <validate|list|add|init> FILE [--entry PATH] [--audio]`
inline int cmd_catalog(const std::string& action, const std::filesystem::path& file,
                       const std::filesystem::path& entry_file, bool audio_set,
                       std::ostream& out, std::ostream& err) {
    try {
        if (action == "validate") {
            const Catalog cat = command_detail::load_catalog_file(file);
            out << "ok: " << cat.size() << " challenges\n";
            return 0;
        }
        if (action == "list") {
            const Catalog cat = command_detail::load_catalog_file(file);
            for (const ChallengeSpec& c : cat.challenges)
                out << c.id << "\t" << to_string(c.category) << "\t" << to_string(c.modality)
                    << "\tburden=" << command_detail::format_double(c.burden)
                    << "\tcoverage_prior=" << command_detail::format_double(c.coverage_prior)
                    << "\n";
            return 0;
        }
        if (action == "add") {
            if (entry_file.empty())
                throw Error(ErrorCode::ConfigInvalid, "catalog add requires --entry FILE");
            Catalog cat = command_detail::load_catalog_file(file);
            nlohmann::ordered_json fragment;
            try {
                fragment = nlohmann::ordered_json::parse(read_text_file(entry_file));
            } catch (const nlohmann::json::parse_error& e) {
                throw Error(ErrorCode::ParseError, e.what());
            }
            cat.challenges.push_back(challenge_from_json(fragment));
            const Catalog validated = validate_catalog(std::move(cat.challenges));
            atomic_write_file(file, catalog_to_json_text(validated));
            out << "added: catalog now has " << validated.size() << " challenges\n";
            return 0;
        }
        if (action == "init") {
            const Catalog cat = audio_set ? audio_challenge_catalog() : default_catalog();
            atomic_write_file(file, catalog_to_json_text(cat));
            out << "wrote " << cat.size() << " challenges to " << file.string() << "\n";
            return 0;
        }
        throw Error(ErrorCode::ConfigInvalid, "unknown catalog action \"" + action + "\"");
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_code_for(e);
    }
}

// Trains one detector model per catalog challenge on synthesized clean
// responses and writes models plus a training summary.
inline int cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    try {
        const Catalog catalog = command_detail::load_catalog_file(cfg.catalog_path);
        nlohmann::ordered_json summary;
        summary["version"] = 1;
        summary["seed"] = cfg.train.seed;
        summary["shared_model"] = cfg.shared_model;
        nlohmann::ordered_json entries;
        if (cfg.shared_model) {
            std::vector<ResponseSegment> corpus;
            for (const ChallengeSpec& c : catalog.challenges) {
                std::vector<ResponseSegment> part = command_detail::clean_corpus(
                    c, cfg.scenario.genuine.natural_std, cfg.train_segments_per_challenge,
                    cfg.train.seed);
                corpus.insert(corpus.end(), std::make_move_iterator(part.begin()),
                              std::make_move_iterator(part.end()));
            }
            const DetectorModel model = train_detector(corpus, cfg.train);
            atomic_write_file(cfg.models_dir / "_shared.json", model_to_json_text(model));
            entries["_shared"] = {{"threshold", model.threshold},
                                  {"calibration_size", model.calibration.size()},
                                  {"final_loss", model.epoch_loss.back()}};
            out << "trained 1 shared model -> " << cfg.models_dir.string() << "\n";
        } else {
            for (const ChallengeSpec& c : catalog.challenges) {
                const std::vector<ResponseSegment> corpus = command_detail::clean_corpus(
                    c, cfg.scenario.genuine.natural_std, cfg.train_segments_per_challenge,
                    cfg.train.seed);
                const DetectorModel model = train_detector(corpus, cfg.train);
                atomic_write_file(cfg.models_dir / (c.id + ".json"), model_to_json_text(model));
                entries[c.id] = {{"threshold", model.threshold},
                                 {"calibration_size", model.calibration.size()},
                                 {"final_loss", model.epoch_loss.back()}};
            }
            out << "trained " << catalog.size() << " models -> " << cfg.models_dir.string()
                << "\n";
        }
        summary["challenges"] = entries;
        atomic_write_file(cfg.models_dir / "training_summary.json", summary.dump(2) + "\n");
        return 0;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_code_for(e);
    }
}

// Runs the configured experiment and writes the episode log (JSONL), the
// flat per-episode CSV, and the report JSON.
inline int cmd_simulate(const RunConfig& cfg, int jobs, std::ostream& out, std::ostream& err) {
    try {
        const Catalog catalog = command_detail::load_catalog_file(cfg.catalog_path);
        std::map<std::string, DetectorModel> models;
        if (cfg.shared_model) {
            const std::filesystem::path path = cfg.models_dir / "_shared.json";
            if (!std::filesystem::exists(path))
                throw Error(ErrorCode::IoError, "missing model file " + path.string() +
                                                    " (run `dfcaptcha train` first)");
            const DetectorModel shared = model_from_json_text(read_text_file(path));
            for (const ChallengeSpec& c :
                 filter_eligible(catalog, cfg.scenario.call, {}, cfg.policy))
                models.emplace(c.id, shared);
        } else {
            for (const ChallengeSpec& c :
                 filter_eligible(catalog, cfg.scenario.call, {}, cfg.policy)) {
                const std::filesystem::path path = cfg.models_dir / (c.id + ".json");
                if (!std::filesystem::exists(path))
                    throw Error(ErrorCode::IoError, "missing model file " + path.string() +
                                                        " (run `dfcaptcha train` first)");
                models.emplace(c.id, model_from_json_text(read_text_file(path)));
            }
        }
        const Scenario scenario = command_detail::build_scenario(cfg, catalog, std::move(models));
        const ExperimentResult result =
            run_experiment(scenario, cfg.scenario.n_episodes, cfg.scenario.base_seed, jobs);

        std::string log = episode_log_header(result.report.config_digest) + "\n";
        std::string csv = command_detail::csv_header();
        for (const EpisodeOutcome& e : result.episodes) {
            log += episode_to_json_line(e) + "\n";
            csv += command_detail::episode_csv_row(e);
        }
        atomic_write_file(cfg.output_dir / "episodes.jsonl", log);
        atomic_write_file(cfg.output_dir / "episodes.csv", csv);
        atomic_write_file(cfg.output_dir / "report.json", report_to_json_text(result.report));

        command_detail::print_report_table(result.report, out);
        out << "outputs -> " << cfg.output_dir.string() << "\n";
        return 0;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_code_for(e);
    }
}

// Serves one protocol session over standard streams: newline-delimited JSON
// events on the input, engine actions on the output, one message per line.
// With detector models loaded the process also answers RunDetector itself,
// extracting and scoring the frames accumulated from chunk events; without
// models the peer is expected to send a `scored` event. Returns when the
// session closes or the input ends.
inline int cmd_session(const SessionConfig& base, std::map<std::string, DetectorModel> models,
                       bool auto_score, std::istream& in, std::ostream& out, std::ostream& err) {
    try {
        SessionState state = initial_state(base);
        double now = 0.0;
        std::vector<Frame> captured;
        double captured_rate = 25.0;

        std::string line;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            const WireMessage message = decode_message(line, line_no);
            const Event* ev = std::get_if<Event>(&message);
            if (ev == nullptr)
                throw Error(ErrorCode::MalformedMessage,
                            "line " + std::to_string(line_no) + ": expected an event");
            if (const auto* tick = std::get_if<event::Tick>(ev)) now = tick->now;
            if (const auto* chunk = std::get_if<event::StreamChunk>(ev)) {
                captured_rate = chunk->fragment.frame_rate_hz;
                captured.insert(captured.end(), chunk->fragment.frames.begin(),
                                chunk->fragment.frames.end());
            }

            std::vector<Action> pending;
            {
                auto [next, actions] = advance(base, std::move(state), *ev, now);
                state = std::move(next);
                pending = std::move(actions);
            }
            for (std::size_t i = 0; i < pending.size(); ++i) {
                out << encode_message(pending[i]) << "\n" << std::flush;
                if (std::holds_alternative<action::IssueChallenge>(pending[i])) captured.clear();
                if (std::holds_alternative<action::CloseSession>(pending[i])) return 0;
                const auto* run = std::get_if<action::RunDetector>(&pending[i]);
                if (run != nullptr && auto_score) {
                    Verdict verdict;
                    try {
                        const ChallengeSpec* challenge = base.catalog.find(run->challenge_id);
                        const auto model = models.find(run->challenge_id);
                        if (challenge == nullptr || model == models.end())
                            throw Error(ErrorCode::ConfigInvalid,
                                        "no detector model for challenge " + run->challenge_id);
                        FeatureStream stream;
                        stream.frames = captured;
                        stream.frame_rate_hz = captured_rate;
                        verdict = decide(model->second, extract_response(stream, *challenge).segment);
                    } catch (const Error&) {
                        verdict = extraction_failed_verdict();
                    }
                    auto [next, actions] = advance(base, std::move(state),
                                                   event::Scored{std::move(verdict)}, now);
                    state = std::move(next);
                    pending.insert(pending.begin() + static_cast<std::ptrdiff_t>(i) + 1,
                                   actions.begin(), actions.end());
                }
            }
        }
        return 0;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_code_for(e);
    }
}

// Recomputes every metric from the episode log alone and prints the table;
// with an output directory it also writes metrics.json (same schema as the
// simulator's report) and metrics.csv (per-episode rows from the log).
inline int cmd_report(const std::filesystem::path& log_path,
                      const std::filesystem::path& out_dir, std::ostream& out,
                      std::ostream& err) {
    try {
        const std::string text = read_text_file(log_path);
        std::vector<EpisodeStatsRow> rows;
        std::string digest;
        std::string csv = command_detail::csv_header();

        std::istringstream lines(text);
        std::string line;
        int line_no = 0;
        while (std::getline(lines, line)) {
            ++line_no;
            if (line.empty()) continue;
            nlohmann::ordered_json j;
            try {
                j = nlohmann::ordered_json::parse(line);
            } catch (const nlohmann::json::parse_error& e) {
                throw Error(ErrorCode::ParseError,
                            "line " + std::to_string(line_no) + ": " + e.what());
            }
            const std::string tag = j.value("t", "");
            if (tag == "header") {
                digest = j.value("config_digest", "");
                continue;
            }
            if (tag != "episode")
                throw Error(ErrorCode::ParseError,
                            "line " + std::to_string(line_no) + ": unknown record \"" + tag + "\"");
            EpisodeStatsRow row;
            const auto truth = truth_from_string(j.at("truth").get<std::string>());
            const auto final_outcome = final_outcome_from_string(j.at("final").get<std::string>());
            if (!truth || !final_outcome)
                throw Error(ErrorCode::ParseError,
                            "line " + std::to_string(line_no) + ": bad episode record");
            row.deepfake = *truth == TruthClass::Deepfake;
            row.rejected = *final_outcome == FinalOutcome::Rejected;
            row.rounds = j.at("rounds").get<int>();
            const auto& details = j.at("rounds_detail");
            row.round1_score =
                details.empty() ? 0.0 : details.front().at("anomaly_score").get<double>();
            rows.push_back(row);

            csv += std::to_string(j.at("index").get<std::int64_t>()) + "," +
                   j.at("truth").get<std::string>() + "," +
                   std::to_string(j.at("seed").get<std::uint64_t>()) + "," +
                   j.at("final").get<std::string>() + "," + std::to_string(row.rounds) + "," +
                   (details.empty() ? ""
                                    : details.front().at("challenge_id").get<std::string>()) +
                   "," + command_detail::format_double(row.round1_score) + "\n";
        }
        if (rows.empty()) throw Error(ErrorCode::ParseError, "log contains no episode records");

        const ExperimentReport report = compute_report(rows, digest);
        command_detail::print_report_table(report, out);
        if (!out_dir.empty()) {
            atomic_write_file(out_dir / "metrics.json", report_to_json_text(report));
            atomic_write_file(out_dir / "metrics.csv", csv);
            out << "outputs -> " << out_dir.string() << "\n";
        }
        return 0;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_code_for(e);
    }
}

} // namespace dfcaptcha
