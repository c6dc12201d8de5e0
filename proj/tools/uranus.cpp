// uranus: train, predict, report, synthesise scenarios, analyse RF
// signatures and serve predictions to the operator console.
//
// Exit codes: 0 success, 2 configuration error, 3 data error, 4 model error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "uranus/console_http.hpp"
#include "uranus/pipeline.hpp"
#include "uranus/rfanalysis.hpp"
#include "uranus/synth.hpp"

namespace fs = std::filesystem;
using namespace uranus;

namespace {

int cmd_train(const fs::path& config_path, const fs::path& out, std::optional<std::size_t> threads) {
    auto config = pipeline::load_config(config_path);
    if (threads) config.threads = *threads;
    const auto result = pipeline::train(config);
    pipeline::save_bundle(result.bundle, out);

    std::cout << "trained on " << result.report.rows << " fused rows\n";
    for (const auto& tm : result.bundle.targets) {
        std::cout << tm.name << ": " << tm.features.size() << " features";
        if (tm.cv.contains("mean_r2") && !tm.cv["mean_r2"].is_null())
            std::cout << ", CV R2 " << tm.cv["mean_r2"].get<double>() << ", CV MAE " << tm.cv["mean_mae"].get<double>();
        if (tm.cv.contains("mean_accuracy")) std::cout << ", CV accuracy " << tm.cv["mean_accuracy"].get<double>();
        std::cout << "\n";
    }
    std::cout << "bundle written to " << out.string() << "\n";
    return 0;
}

int cmd_predict(const fs::path& model, const fs::path& scenario_dir, const fs::path& out) {
    const auto bundle = pipeline::load_bundle(model);
    const auto scenario = pipeline::run_stage("ingest", [&] { return load_scenario(scenario_dir); });
    const auto result = pipeline::predict(bundle, scenario);
    for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
    pipeline::write_predictions(out, result.rows);
    std::cout << result.rows.size() << " estimates written to " << out.string() << "\n";
    return 0;
}

int cmd_report(const fs::path& pred, const std::optional<fs::path>& truth, const std::optional<fs::path>& json_out) {
    const auto rows = pipeline::load_predictions(pred);
    std::optional<std::vector<LoggedRecord>> log;
    if (truth) log = load_drone_log_records(*truth);
    const auto rep = pipeline::report(rows, log);
    std::cout << rep.summary;
    if (json_out) pipeline::write_text(*json_out, rep.document.dump(2) + "\n");
    return 0;
}

int cmd_synth(const std::vector<std::string>& patterns, std::uint64_t seed, const fs::path& out, bool noiseless,
              bool no_log, std::int64_t sample_ms) {
    auto noise = noiseless ? synth::NoiseModel::noiseless(seed) : synth::NoiseModel::defaults(seed);
    noise.validate();
    std::vector<std::string> ids = patterns;
    if (ids.size() == 1 && ids.front() == "all") ids = synth::pattern_ids();
    if (ids.size() == 1 && ids.front() == "training") ids = synth::training_pattern_ids();
    for (const auto& id : ids) {
        const auto dir = synth::emit_scenario(out, id, noise, !no_log, sample_ms);
        std::cout << id << " -> " << dir.string() << "\n";
    }
    return 0;
}

int cmd_analyze_rf(const fs::path& data, const fs::path& out) {
    const auto dirs = list_scenarios(data);
    if (dirs.empty()) throw DataError("no scenarios under " + data.string());
    std::vector<Scenario> scenarios;
    for (const auto& d : dirs) scenarios.push_back(load_scenario(d));
    fs::create_directories(out);
    const auto analysis = pipeline::analyze(scenarios, pipeline::IqrScope{});
    pipeline::write_text(out / "rcs.json", analysis["rcs"].dump(2) + "\n");
    pipeline::write_text(out / "frequency.json", analysis["frequency"].dump(2) + "\n");
    for (const auto& sc : scenarios) {
        if (!sc.log) continue;
        std::map<int, std::vector<DroneLogRecord>> tracks;
        for (const auto& lr : *sc.log) tracks[lr.drone_id].push_back(lr.record);
        for (const auto& [id, track] : tracks) {
            for (auto s : {SensorName::Alvira, SensorName::Arcus}) {
                const auto series = rf::distance_series(track, sensor_spec(s));
                std::ofstream f(out / (sc.id + "_drone" + std::to_string(id) + "_" + std::string(to_string(s)) + ".csv"));
                rf::write_series_csv(f, series);
            }
        }
    }
    std::cout << "analysis of " << scenarios.size() << " scenarios written to " << out.string() << "\n";
    return 0;
}

int cmd_serve(const fs::path& predictions, const std::optional<fs::path>& model, const std::optional<fs::path>& ui,
              const std::string& host, int port) {
    const auto store = console::PredictionStore::load(predictions);
    console::ServiceOptions options;
    if (model) options.bundle = pipeline::load_bundle_metadata(*model);
    options.ui_dir = ui;
    auto server = console::make_server(store, options);
    std::cout << "serving " << store.size() << " scenarios on http://" << host << ":" << port << "\n" << std::flush;
    if (!server->listen(host, port)) throw ConfigError("cannot listen on " + host + ":" + std::to_string(port));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"URANUS drone detection pipeline"};
    app.require_subcommand(1);

    std::string config, out, model, scenario, pred, host = "127.0.0.1";
    std::optional<std::string> truth, json_out, ui, model_opt;
    std::optional<std::size_t> threads;
    std::vector<std::string> patterns;
    std::uint64_t seed = 0;
    bool noiseless = false, no_log = false;
    std::int64_t sample_ms = 1000;
    int port = 8080;

    auto* train = app.add_subcommand("train", "fit the five models from a JSON config");
    train->add_option("--config", config, "pipeline config (JSON)")->required()->check(CLI::ExistingFile);
    train->add_option("--out", out, "bundle output directory")->required();
    train->add_option("--threads", threads, "tree-level training threads");

    auto* predict = app.add_subcommand("predict", "estimate tracks for a test scenario");
    predict->add_option("--model", model, "bundle directory")->required();
    predict->add_option("--scenario", scenario, "scenario directory")->required();
    predict->add_option("--out", out, "prediction CSV")->required();

    auto* report = app.add_subcommand("report", "evaluate or describe a prediction file");
    report->add_option("--pred", pred, "prediction CSV")->required();
    report->add_option("--truth", truth, "drone log CSV with ground truth");
    report->add_option("--json", json_out, "write the report document here");

    auto* synth_cmd = app.add_subcommand("synth", "generate synthetic scenarios");
    synth_cmd->add_option("--pattern", patterns, "pattern ids, 'training' or 'all'")->required();
    synth_cmd->add_option("--seed", seed, "noise seed")->required();
    synth_cmd->add_option("--out", out, "dataset root")->required();
    synth_cmd->add_flag("--noiseless", noiseless, "exact sensor readings");
    synth_cmd->add_flag("--no-log", no_log, "omit the drone log (test scenario)");
    synth_cmd->add_option("--sample-ms", sample_ms, "flight log period in ms");

    auto* rf_cmd = app.add_subcommand("analyze-rf", "RCS fits, frequency likelihoods and distance series");
    rf_cmd->add_option("--data", config, "dataset root")->required();
    rf_cmd->add_option("--out", out, "output directory")->required();

    auto* serve = app.add_subcommand("serve", "replay predictions over HTTP");
    serve->add_option("--predictions", pred, "directory of prediction CSVs")->required();
    serve->add_option("--model", model_opt, "bundle directory for /model/info");
    serve->add_option("--ui", ui, "static console assets served under /ui/");
    serve->add_option("--host", host, "bind address");
    serve->add_option("--port", port, "TCP port");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*train) return cmd_train(config, out, threads);
        if (*predict) return cmd_predict(model, scenario, out);
        if (*report)
            return cmd_report(pred, truth ? std::optional<fs::path>(*truth) : std::nullopt,
                              json_out ? std::optional<fs::path>(*json_out) : std::nullopt);
        if (*synth_cmd) return cmd_synth(patterns, seed, out, noiseless, no_log, sample_ms);
        if (*rf_cmd) return cmd_analyze_rf(config, out);
        if (*serve)
            return cmd_serve(pred, model_opt ? std::optional<fs::path>(*model_opt) : std::nullopt,
                             ui ? std::optional<fs::path>(*ui) : std::nullopt, host, port);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const ModelError& e) {
        std::cerr << "model error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
