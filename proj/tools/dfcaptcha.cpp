// dfcaptcha: challenge-response call screening toolkit.
//
//   dfcaptcha catalog <validate|list|add|init> FILE [--entry PATH] [--audio]
//   dfcaptcha train    --config PATH [--seed N] [--out DIR]
//   dfcaptcha simulate --config PATH [--seed N] [--out DIR] [--jobs N]
//   dfcaptcha report   LOG [--out DIR]
//   dfcaptcha session  (--catalog FILE | --config PATH) [--models DIR]
//                      [--modality M] [--quality Q] [--status S]
//
// DFCAPTCHA_SEED overrides the config seed (train.seed for train,
// scenario.base_seed for simulate); a --seed flag overrides both.
// --jobs only parallelizes episode execution and never changes outputs.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "dfcaptcha/commands.hpp"
#include "dfcaptcha/config.hpp"

namespace {

std::optional<std::uint64_t> env_seed() {
    const char* raw = std::getenv("DFCAPTCHA_SEED");
    if (raw == nullptr || *raw == '\0') return std::nullopt;
    try {
        return static_cast<std::uint64_t>(std::stoull(raw));
    } catch (const std::exception&) {
        std::cerr << "error: DFCAPTCHA_SEED is not an integer\n";
        std::exit(4);
    }
}

struct SeedOverride {
    std::optional<std::uint64_t> flag;

    std::uint64_t apply(std::uint64_t from_config) const {
        if (flag) return *flag;
        if (const auto env = env_seed()) return *env;
        return from_config;
    }
};

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"deepfake call screening: challenge-response protocol, detector, and simulator"};
    app.require_subcommand(1);

    // catalog
    std::string catalog_action;
    std::string catalog_file;
    std::string entry_file;
    bool audio_set = false;
    CLI::App* catalog = app.add_subcommand("catalog", "validate, list, extend, or emit catalogs");
    catalog->add_option("action", catalog_action, "validate | list | add | init")->required();
    catalog->add_option("file", catalog_file, "catalog JSON file")->required();
    catalog->add_option("--entry", entry_file, "challenge JSON fragment for `add`");
    catalog->add_flag("--audio", audio_set, "emit the audio challenge set for `init`");

    // train / simulate
    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed_flag;
    int jobs = 1;

    CLI::App* train = app.add_subcommand("train", "train one detector model per challenge");
    train->add_option("--config", config_path, "run configuration (TOML)")->required();
    train->add_option("--seed", seed_flag, "override the training seed");
    train->add_option("--out", out_dir, "override the models directory");

    std::string sim_config_path;
    std::string sim_out_dir;
    std::optional<std::uint64_t> sim_seed_flag;
    CLI::App* simulate = app.add_subcommand("simulate", "run the configured experiment");
    simulate->add_option("--config", sim_config_path, "run configuration (TOML)")->required();
    simulate->add_option("--seed", sim_seed_flag, "override the experiment base seed");
    simulate->add_option("--out", sim_out_dir, "override the output directory");
    simulate->add_option("--jobs", jobs, "worker threads (outputs are identical for any value)")
        ->check(CLI::PositiveNumber);

    // report
    std::string log_path;
    std::string report_out_dir;
    CLI::App* report = app.add_subcommand("report", "recompute metrics from an episode log");
    report->add_option("log", log_path, "episodes.jsonl produced by simulate")->required();
    report->add_option("--out", report_out_dir, "directory for metrics.json / metrics.csv");

    // session
    std::string session_catalog;
    std::string session_config;
    std::string session_models;
    std::string session_modality = "audio_video";
    std::string session_status = "unknown";
    double session_quality = 1.0;
    CLI::App* session = app.add_subcommand(
        "session", "serve one protocol session over stdin/stdout (newline-delimited JSON)");
    session->add_option("--catalog", session_catalog, "catalog JSON file");
    session->add_option("--config", session_config, "run configuration (TOML)");
    session->add_option("--models", session_models,
                        "model directory; when given the session scores responses itself");
    session->add_option("--modality", session_modality, "call modality (audio|video|audio_video)");
    session->add_option("--quality", session_quality, "call quality in [0,1]");
    session->add_option("--status", session_status, "caller status (indoors|outdoors|seated|standing|unknown)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (catalog->parsed())
            return dfcaptcha::cmd_catalog(catalog_action, catalog_file, entry_file, audio_set,
                                          std::cout, std::cerr);
        if (train->parsed()) {
            dfcaptcha::RunConfig cfg = dfcaptcha::load_run_config(config_path);
            cfg.train.seed = SeedOverride{seed_flag}.apply(cfg.train.seed);
            if (!out_dir.empty()) cfg.models_dir = out_dir;
            return dfcaptcha::cmd_train(cfg, std::cout, std::cerr);
        }
        if (simulate->parsed()) {
            dfcaptcha::RunConfig cfg = dfcaptcha::load_run_config(sim_config_path);
            cfg.scenario.base_seed = SeedOverride{sim_seed_flag}.apply(cfg.scenario.base_seed);
            if (!sim_out_dir.empty()) cfg.output_dir = sim_out_dir;
            return dfcaptcha::cmd_simulate(cfg, jobs, std::cout, std::cerr);
        }
        if (report->parsed())
            return dfcaptcha::cmd_report(log_path, report_out_dir, std::cout, std::cerr);
        if (session->parsed()) {
            dfcaptcha::SessionConfig base;
            if (!session_config.empty()) {
                const dfcaptcha::RunConfig cfg = dfcaptcha::load_run_config(session_config);
                base.suspicion = cfg.suspicion;
                base.policy = cfg.policy;
                base.grace_s = cfg.grace_s;
                base.rechallenge_budget = cfg.rechallenge_budget;
                if (session_catalog.empty()) session_catalog = cfg.catalog_path.string();
                if (session_models.empty() && std::filesystem::exists(cfg.models_dir))
                    session_models = cfg.models_dir.string();
            }
            if (session_catalog.empty()) {
                std::cerr << "error: session needs --catalog or --config\n";
                return 4;
            }
            base.catalog = dfcaptcha::catalog_from_json_text(
                dfcaptcha::read_text_file(session_catalog));
            const auto modality = dfcaptcha::modality_from_string(session_modality);
            const auto status = dfcaptcha::caller_status_from_string(session_status);
            if (!modality || !status || session_quality < 0.0 || session_quality > 1.0) {
                std::cerr << "error: bad session context flags\n";
                return 4;
            }
            base.context.modality = *modality;
            base.context.caller_status = *status;
            base.context.quality = session_quality;

            std::map<std::string, dfcaptcha::DetectorModel> models;
            const bool auto_score = !session_models.empty();
            if (auto_score)
                for (const dfcaptcha::ChallengeSpec& c :
                     dfcaptcha::filter_eligible(base.catalog, base.context, {}, base.policy)) {
                    const std::filesystem::path path =
                        std::filesystem::path(session_models) / (c.id + ".json");
                    if (!std::filesystem::exists(path))
                        throw dfcaptcha::Error(dfcaptcha::ErrorCode::IoError,
                                               "missing model file " + path.string());
                    models.emplace(c.id, dfcaptcha::model_from_json_text(
                                             dfcaptcha::read_text_file(path)));
                }
            return dfcaptcha::cmd_session(base, std::move(models), auto_score, std::cin,
                                          std::cout, std::cerr);
        }
    } catch (const dfcaptcha::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return dfcaptcha::exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
