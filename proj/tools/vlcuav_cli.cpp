// Command-line front end: each subcommand runs one stage of the deployment
// procedure and leaves its artifact in the output directory, so stages can be
// re-run from their predecessor's files.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "vlcuav/vlcuav.hpp"

namespace fs = std::filesystem;
using namespace vlcuav;

namespace {

struct CommonOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out = "out";
    std::optional<int> epochs;
    std::optional<std::size_t> users;
};

ExperimentConfig effective_config(const CommonOptions& o)
{
    ExperimentConfig c = o.config_path.empty() ? ExperimentConfig{} : load_config(o.config_path);
    if (o.seed)
        c.set_seed(*o.seed);
    if (o.epochs)
        c.forecast.epochs = *o.epochs;
    if (o.users)
        c.scenario.n_users = *o.users;
    validate(c.scenario);
    return c;
}

void write_json(const fs::path& path, const nlohmann::json& j) { io::write_file_atomic(path, j.dump(2) + "\n"); }

std::vector<UserDemand> read_users(const fs::path& path) { return parse_users_csv(io::read_file(path)); }

Eigen::MatrixXd read_features(const fs::path& path) { return parse_series_csv(io::read_file(path)); }

void cmd_generate(const CommonOptions& o)
{
    const auto c = effective_config(o);
    const fs::path out = o.out;
    auto frames = generate_series(c.light, c.scenario, c.scenario.series_length + 1);
    const auto next = std::move(frames.back());
    frames.pop_back();
    write_json(out / "config.json", to_json(c));
    io::write_file_atomic(out / "users.csv", format_users_csv(place_users(c.scenario)));
    write_grid_series(out / "frames", frames);
    write_grid_csv(out / "holdout" / ("frame_" + std::to_string(frames.size() + 1) + ".csv"), next);
    std::cout << "wrote " << frames.size() << " frames, 1 held-out frame and " << c.scenario.n_users
              << " users to " << out << "\n";
}

void cmd_fit(const CommonOptions& o, const std::string& frames_dir)
{
    const auto c = effective_config(o);
    const fs::path out = o.out;
    const auto grids = read_grid_series(frames_dir.empty() ? out / "frames" : fs::path(frames_dir));
    const auto fit = fit_series(grids, c.scenario.components, em_config(c));
    io::write_file_atomic(out / "features.csv", format_series_csv(fit.features));
    std::cout << "fitted " << fit.frames.size() << " frames (" << fit.dark_frames << " dark, " << fit.clamped_frames
              << " with clamped spreads)\n";
}

void cmd_train(const CommonOptions& o, const std::string& features_path)
{
    const auto c = effective_config(o);
    const fs::path out = o.out;
    const auto q = read_features(features_path.empty() ? out / "features.csv" : fs::path(features_path));
    const auto forecast = train_forecaster(q, c.forecast, forecast_seed(c));
    checkpoint::write(out / "model.cbor", forecast.checkpoint);
    nlohmann::json summary = {{"train_frames", forecast.train_columns}, {"loss_history", forecast.loss_history}};
    summary["rmse_train"] = forecast.rmse_train;
    if (std::isfinite(forecast.rmse_test))
        summary["rmse_test"] = forecast.rmse_test;
    write_json(out / "training.json", summary);
    std::cout << "loss " << forecast.loss_history.front() << " -> " << forecast.loss_history.back() << "\n";
}

void cmd_predict(const CommonOptions& o, const std::string& model_path, const std::string& features_path)
{
    const auto c = effective_config(o);
    const fs::path out = o.out;
    const auto ckpt = checkpoint::read(model_path.empty() ? out / "model.cbor" : fs::path(model_path));
    const auto q = read_features(features_path.empty() ? out / "features.csv" : fs::path(features_path));
    const auto frame = predict_frame(ckpt, q, c.em.sigma_floor);
    write_json(out / "predicted_frame.json", to_json(frame));
    std::cout << "predicted amplitude " << frame.amplitude << "\n";
}

void cmd_deploy(const CommonOptions& o, const std::string& frame_path, const std::string& users_path)
{
    const auto c = effective_config(o);
    const fs::path out = o.out;
    const auto frame =
        frame_from_json(nlohmann::json::parse(io::read_file(frame_path.empty() ? out / "predicted_frame.json" : fs::path(frame_path))));
    const auto users = read_users(users_path.empty() ? out / "users.csv" : fs::path(users_path));
    const auto cells = partition_users(users, c.scenario.n_uavs, partition_seed(c));
    const auto placed = deploy(users, cells, field_of(frame), c.scenario.channel, c.solver);
    write_json(out / "deployment.json", {{"schema", report_schema},
                                         {"version", report_version},
                                         {"status", "ok"},
                                         {"cells", to_json(placed)},
                                         {"total_power_w", sum_power(placed)}});
    std::cout << "total power " << sum_power(placed) << " W over " << placed.size() << " UAVs\n";
}

void cmd_compare(const CommonOptions& o)
{
    const auto c = effective_config(o);
    const fs::path out = o.out;
    auto counts = c.sweep_users;
    if (o.users)
        counts = {*o.users};
    StageTimer timer;
    const auto rows = run_baseline_comparison(c, counts, timer);
    io::write_file_atomic(out / "compare.csv", format_comparison_csv(rows));
    write_json(out / "timings.json", timer.to_json());
    std::cout << format_comparison_csv(rows);
}

int cmd_pipeline(const CommonOptions& o)
{
    const auto c = effective_config(o);
    const fs::path out = o.out;
    const auto report = run_pipeline(c);
    if (report.status == "ok") {
        write_json(out / "config.json", to_json(c));
        io::write_file_atomic(out / "users.csv", format_users_csv(report.users));
        io::write_file_atomic(out / "features.csv", format_series_csv(report.features));
        checkpoint::write(out / "model.cbor", report.forecast.checkpoint);
        write_json(out / "predicted_frame.json", to_json(report.predicted_next));
    }
    write_json(out / "report.json", report.to_json());
    write_json(out / "timings.json", report.timings.to_json());
    if (report.status != "ok") {
        std::cerr << "pipeline failed: " << report.error.dump() << "\n";
        return 1;
    }
    std::cout << "total power " << report.total_power << " W (proposed " << report.comparison.proposed
              << ", agnostic " << report.comparison.agnostic << ", actual " << report.comparison.actual << ")\n";
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Illumination-aware placement and power control for VLC-enabled UAVs"};
    app.require_subcommand(1);

    CommonOptions opts;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", opts.config_path, "Experiment configuration (JSON)");
        sub->add_option("--seed", opts.seed, "Master seed");
        sub->add_option("--out", opts.out, "Output directory")->capture_default_str();
        sub->add_option("--epochs", opts.epochs, "GRU training epochs");
        sub->add_option("--users", opts.users, "Number of users");
    };

    std::string frames_dir, features_path, model_path, frame_path, users_path;

    auto* generate = app.add_subcommand("generate", "Synthesise the scenario and illumination series");
    auto* fit = app.add_subcommand("fit", "Fit a mixture to every frame and write the feature series");
    fit->add_option("--frames", frames_dir, "Directory of frame_<t>.csv files");
    auto* train = app.add_subcommand("train", "Train the forecaster on a feature series");
    train->add_option("--features", features_path, "Feature series CSV");
    auto* predict = app.add_subcommand("predict", "Forecast the next frame");
    predict->add_option("--model", model_path, "Model checkpoint");
    predict->add_option("--features", features_path, "Feature series CSV");
    auto* deploy_cmd = app.add_subcommand("deploy", "Place UAVs for a mixture frame");
    deploy_cmd->add_option("--frame", frame_path, "Mixture frame JSON");
    deploy_cmd->add_option("--users-file", users_path, "Users CSV");
    auto* compare = app.add_subcommand("compare", "Sweep user counts against the baselines");
    auto* pipeline = app.add_subcommand("pipeline", "Run every stage and write the report");
    for (auto* sub : {generate, fit, train, predict, deploy_cmd, compare, pipeline})
        add_common(sub);

    CLI11_PARSE(app, argc, argv);

    try {
        if (generate->parsed())
            cmd_generate(opts);
        else if (fit->parsed())
            cmd_fit(opts, frames_dir);
        else if (train->parsed())
            cmd_train(opts, features_path);
        else if (predict->parsed())
            cmd_predict(opts, model_path, features_path);
        else if (deploy_cmd->parsed())
            cmd_deploy(opts, frame_path, users_path);
        else if (compare->parsed())
            cmd_compare(opts);
        else if (pipeline->parsed())
            return cmd_pipeline(opts);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
