#pragma once

// End-to-end deployment: EM per frame -> feature series -> GRU forecast ->
// predicted field -> aerial cells -> per-UAV dual ascent -> total power.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "vlcuav/channel.hpp"
#include "vlcuav/checkpoint.hpp"
#include "vlcuav/deployment.hpp"
#include "vlcuav/error.hpp"
#include "vlcuav/gmm.hpp"
#include "vlcuav/grid.hpp"
#include "vlcuav/gru.hpp"
#include "vlcuav/io.hpp"
#include "vlcuav/scenario.hpp"

namespace vlcuav {

inline constexpr std::string_view report_schema = "vlcuav.report";
inline constexpr int report_version = 1;

struct ForecastSettings {
    Eigen::Index hidden = 64;
    int epochs = 100;
    double learning_rate = 0.01;
    double gradient_clip = 5.0;
    double train_fraction = 268.0 / 358.0;
};

struct ExperimentConfig {
    ScenarioConfig scenario;
    SyntheticLightSpec light = default_light_spec();
    EmConfig em;
    ForecastSettings forecast;
    SolverConfig solver;
    std::vector<std::size_t> sweep_users{10, 20, 30, 40, 50};

    std::uint64_t seed() const { return scenario.seed; }
    void set_seed(std::uint64_t s) { scenario.seed = s; }
};

// --- configuration -------------------------------------------------------

inline nlohmann::json to_json(const ExperimentConfig& c)
{
    return {
        {"scenario", to_json(c.scenario)},
        {"light", to_json(c.light)},
        {"em", {{"max_iters", c.em.max_iters}, {"tol", c.em.tol}, {"sigma_floor_m", c.em.sigma_floor}}},
        {"forecast",
         {{"hidden", c.forecast.hidden},
          {"epochs", c.forecast.epochs},
          {"learning_rate", c.forecast.learning_rate},
          {"gradient_clip", c.forecast.gradient_clip},
          {"train_fraction", c.forecast.train_fraction}}},
        {"solver",
         {{"step", c.solver.step},
          {"max_iters", c.solver.max_iters},
          {"tol_feas", c.solver.tol_feas},
          {"tol_obj", c.solver.tol_obj}}},
        {"sweep_users", c.sweep_users},
    };
}

inline ExperimentConfig experiment_from_json(const nlohmann::json& j)
{
    ExperimentConfig c;
    try {
        if (j.contains("scenario"))
            c.scenario = scenario_from_json(j.at("scenario"));
        if (j.contains("light"))
            c.light = light_from_json(j.at("light"));
        if (j.contains("em")) {
            const auto& e = j.at("em");
            c.em.max_iters = e.value("max_iters", c.em.max_iters);
            c.em.tol = e.value("tol", c.em.tol);
            c.em.sigma_floor = e.value("sigma_floor_m", c.em.sigma_floor);
        }
        if (j.contains("forecast")) {
            const auto& f = j.at("forecast");
            c.forecast.hidden = f.value("hidden", c.forecast.hidden);
            c.forecast.epochs = f.value("epochs", c.forecast.epochs);
            c.forecast.learning_rate = f.value("learning_rate", c.forecast.learning_rate);
            c.forecast.gradient_clip = f.value("gradient_clip", c.forecast.gradient_clip);
            c.forecast.train_fraction = f.value("train_fraction", c.forecast.train_fraction);
        }
        if (j.contains("solver")) {
            const auto& s = j.at("solver");
            c.solver.step = s.value("step", c.solver.step);
            c.solver.max_iters = s.value("max_iters", c.solver.max_iters);
            c.solver.tol_feas = s.value("tol_feas", c.solver.tol_feas);
            c.solver.tol_obj = s.value("tol_obj", c.solver.tol_obj);
        }
        if (j.contains("sweep_users"))
            c.sweep_users = j.at("sweep_users").get<std::vector<std::size_t>>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::io, std::string("malformed config: ") + e.what());
    }
    validate(c.scenario);
    validate(c.light);
    if (!(c.forecast.train_fraction > 0.0 && c.forecast.train_fraction <= 1.0))
        throw Error(ErrorKind::invalid_argument, "train_fraction must lie in (0, 1]");
    return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path)
{
    try {
        return experiment_from_json(nlohmann::json::parse(io::read_file(path)));
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorKind::io, std::string("malformed config: ") + e.what());
    }
}

inline nlohmann::json to_json(const GmmFrame& f)
{
    nlohmann::json comps = nlohmann::json::array();
    for (const auto& c : f.components)
        comps.push_back({{"weight", c.weight},
                         {"mu_x", c.mu_x},
                         {"mu_y", c.mu_y},
                         {"sigma_x", c.sigma_x},
                         {"sigma_y", c.sigma_y}});
    return {{"amplitude", f.amplitude}, {"components", comps}};
}

inline GmmFrame frame_from_json(const nlohmann::json& j)
{
    try {
        GmmFrame f;
        f.amplitude = j.at("amplitude").get<double>();
        for (const auto& c : j.at("components"))
            f.components.push_back({c.at("weight").get<double>(), c.at("mu_x").get<double>(),
                                    c.at("mu_y").get<double>(), c.at("sigma_x").get<double>(),
                                    c.at("sigma_y").get<double>()});
        validate(f);
        return f;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::io, std::string("malformed mixture frame: ") + e.what());
    }
}

// --- feature series --------------------------------------------------------

/// Feature matrix file: a header naming the features, then one row per time slot.
inline std::string format_series_csv(const Eigen::MatrixXd& q)
{
    const auto k = static_cast<std::size_t>((q.rows() - 1) / 5);
    std::ostringstream ss;
    ss << "A";
    for (std::size_t i = 1; i <= k; ++i)
        ss << ",w" << i << ",mu_x" << i << ",mu_y" << i << ",sigma_x" << i << ",sigma_y" << i;
    ss << '\n';
    for (Eigen::Index t = 0; t < q.cols(); ++t) {
        for (Eigen::Index f = 0; f < q.rows(); ++f) {
            if (f)
                ss << ',';
            ss << detail::format_double(q(f, t));
        }
        ss << '\n';
    }
    return ss.str();
}

inline Eigen::MatrixXd parse_series_csv(std::string_view text)
{
    std::vector<std::vector<double>> rows;
    std::size_t line_no = 0;
    while (!text.empty()) {
        auto nl = text.find('\n');
        auto line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (line_no == 1 || line.find_first_not_of(" \t\r") == std::string_view::npos)
            continue;
        rows.push_back(detail::parse_csv_row(line, line_no));
    }
    if (rows.empty())
        throw Error(ErrorKind::io, "feature series is empty");
    const auto dims = rows.front().size();
    if (dims < 6 || (dims - 1) % 5 != 0)
        throw Error(ErrorKind::shape_mismatch, "feature rows must have 5K + 1 columns");
    Eigen::MatrixXd q(static_cast<Eigen::Index>(dims), static_cast<Eigen::Index>(rows.size()));
    for (std::size_t t = 0; t < rows.size(); ++t) {
        if (rows[t].size() != dims)
            throw Error(ErrorKind::shape_mismatch, "ragged feature series");
        for (std::size_t f = 0; f < dims; ++f)
            q(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(t)) = rows[t][f];
    }
    return q;
}

struct SeriesFit {
    std::vector<GmmFrame> frames;
    Eigen::MatrixXd features; // D_q x T
    std::size_t dark_frames = 0;
    std::size_t clamped_frames = 0;
};

/// Fits every frame, aligns component order frame to frame and stacks the
/// flattened vectors as columns.
inline SeriesFit fit_series(const std::vector<IlluminationGrid>& grids, std::size_t k, const EmConfig& em)
{
    SeriesFit out;
    out.features.resize(static_cast<Eigen::Index>(feature_length(k)), static_cast<Eigen::Index>(grids.size()));
    for (std::size_t t = 0; t < grids.size(); ++t) {
        GmmFrame frame;
        try {
            auto fit = fit_gmm(grids[t], k, em);
            out.clamped_frames += fit.sigma_clamped ? 1 : 0;
            frame = std::move(fit.frame);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::no_illumination)
                throw;
            frame = dark_frame(grids[t], k, em.sigma_floor);
            ++out.dark_frames;
        }
        if (!out.frames.empty())
            frame = match_components(out.frames.back(), frame);
        const auto q = flatten(frame);
        for (std::size_t f = 0; f < q.size(); ++f)
            out.features(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(t)) = q[f];
        out.frames.push_back(std::move(frame));
    }
    return out;
}

// --- forecasting ---------------------------------------------------------

struct Forecast {
    checkpoint::Checkpoint checkpoint;
    std::vector<double> loss_history;
    Eigen::Index train_columns = 0;
    double rmse_train = 0.0; // normalised feature units
    double rmse_test = 0.0;  // NaN when there is no held-out window
};

inline Eigen::Index training_columns(Eigen::Index total, double fraction)
{
    const auto n = static_cast<Eigen::Index>(std::llround(fraction * static_cast<double>(total)));
    return std::clamp<Eigen::Index>(n, 2, total);
}

/// Trains on the leading window of the series; one-step errors are reported
/// for the training window and for the held-out remainder.
inline Forecast train_forecaster(const Eigen::MatrixXd& features, const ForecastSettings& settings,
                                 std::uint64_t seed)
{
    if (features.cols() < 2)
        throw Error(ErrorKind::series_too_short, "need at least two frames to train");
    Forecast out;
    out.train_columns = training_columns(features.cols(), settings.train_fraction);
    const Eigen::MatrixXd window = features.leftCols(out.train_columns);
    out.checkpoint.normalization = gru::Normalization::fit(window);
    const Eigen::MatrixXd scaled = out.checkpoint.normalization.apply(features);

    gru::TrainConfig tc{settings.learning_rate, settings.epochs, settings.gradient_clip, seed};
    auto trained = gru::train(gru::init_model(features.rows(), settings.hidden, seed), scaled.leftCols(out.train_columns), tc);
    out.checkpoint.model = std::move(trained.model);
    out.loss_history = std::move(trained.loss_history);

    const auto trace = gru::forward(out.checkpoint.model, scaled);
    out.rmse_train = gru::one_step_rmse(trace, scaled, 0, out.train_columns - 1);
    out.rmse_test = gru::one_step_rmse(trace, scaled, out.train_columns - 1, features.cols() - 1);
    return out;
}

inline GmmFrame predict_frame(const checkpoint::Checkpoint& ckpt, const Eigen::MatrixXd& features,
                              double sigma_floor = default_sigma_floor)
{
    const Eigen::VectorXd q = gru::predict_next(ckpt.model, features, ckpt.normalization);
    const auto k = static_cast<std::size_t>((q.size() - 1) / 5);
    return unflatten(std::span<const double>(q.data(), static_cast<std::size_t>(q.size())), k, sigma_floor);
}

// --- deployment ----------------------------------------------------------

struct CellDeployment {
    std::vector<std::size_t> users;
    DeploymentSolution solution;
};

using AmbientField = std::function<double(Point2)>;

inline AmbientField field_of(const GmmFrame& f)
{
    return [f](Point2 p) { return evaluate_gmm(f, p); };
}

inline AmbientField dark_field()
{
    return [](Point2) { return 0.0; };
}

inline CellProblem cell_problem(const std::vector<UserDemand>& users, const std::vector<std::size_t>& members,
                                const AmbientField& field, const ChannelParams& params)
{
    std::vector<UserDemand> subset;
    std::vector<double> ambient;
    for (auto j : members) {
        subset.push_back(users[j]);
        ambient.push_back(field(users[j].position));
    }
    return build_cell_problem(subset, ambient, params);
}

/// Places one UAV per cell against `field`.
inline std::vector<CellDeployment> deploy(const std::vector<UserDemand>& users,
                                          const std::vector<std::vector<std::size_t>>& cells,
                                          const AmbientField& field, const ChannelParams& params,
                                          const SolverConfig& solver)
{
    std::vector<CellDeployment> out;
    for (const auto& members : cells) {
        const auto problem = cell_problem(users, members, field, params);
        auto solution = solve_cell(problem, solver);
        check_fov(problem, solution.position);
        out.push_back({members, std::move(solution)});
    }
    return out;
}

/// Sum over cells of the power needed at the given UAV positions when the
/// ambient light is `field`.
inline double evaluate_deployment(const std::vector<UserDemand>& users, const std::vector<CellDeployment>& placed,
                                  const AmbientField& field, const ChannelParams& params)
{
    double total = 0.0;
    for (const auto& cell : placed)
        total += power_at(cell_problem(users, cell.users, field, params), cell.solution.position);
    return total;
}

inline double sum_power(const std::vector<CellDeployment>& placed)
{
    std::vector<DeploymentSolution> sols;
    for (const auto& c : placed)
        sols.push_back(c.solution);
    return total_power(sols);
}

inline nlohmann::json to_json(const std::vector<CellDeployment>& placed)
{
    nlohmann::json cells = nlohmann::json::array();
    for (std::size_t i = 0; i < placed.size(); ++i) {
        const auto& s = placed[i].solution;
        double max_slack = -std::numeric_limits<double>::infinity();
        for (double v : s.slack)
            max_slack = std::max(max_slack, v);
        cells.push_back({{"uav", i},
                         {"users", placed[i].users},
                         {"position_m", {s.position.x, s.position.y}},
                         {"power_w", s.power},
                         {"iterations", s.iterations},
                         {"duals", s.duals},
                         {"max_slack", max_slack},
                         {"complementary_slackness", complementary_slackness(s)}});
    }
    return cells;
}

// --- experiments ---------------------------------------------------------

struct StageTimer {
    std::vector<std::pair<std::string, double>> seconds;

    template <typename Fn>
    decltype(auto) run(const std::string& stage, Fn&& fn)
    {
        const auto start = std::chrono::steady_clock::now();
        struct Record {
            StageTimer* self;
            std::string name;
            std::chrono::steady_clock::time_point start;
            ~Record()
            {
                self->seconds.emplace_back(
                    name, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
            }
        } record{this, stage, start};
        return fn();
    }

    nlohmann::json to_json() const
    {
        nlohmann::json j = nlohmann::json::object();
        for (const auto& [k, v] : seconds)
            j[k] = v;
        return j;
    }
};

/// Shared front half of every experiment: the synthetic series (T frames plus
/// the held-out frame T+1), its mixture fits and the trained forecaster.
struct PreparedSeries {
    std::vector<IlluminationGrid> history;
    IlluminationGrid next_grid;
    SeriesFit fit;
    GmmFrame actual_next;
    Forecast forecast;
    GmmFrame predicted_next;
};

inline std::uint64_t stage_seed(std::uint64_t base, std::uint64_t stage) { return base * 0x9E3779B97F4A7C15ull + stage; }

/// EM settings with the per-experiment derived seed.
inline EmConfig em_config(const ExperimentConfig& config)
{
    EmConfig em = config.em;
    em.seed = stage_seed(config.seed(), 1);
    return em;
}

inline std::uint64_t forecast_seed(const ExperimentConfig& config) { return stage_seed(config.seed(), 2); }
inline std::uint64_t partition_seed(const ExperimentConfig& config) { return stage_seed(config.seed(), 3); }

/// Fits the held-out frame, aligned to the last fitted history frame.
inline GmmFrame fit_next_frame(const IlluminationGrid& grid, const GmmFrame& last, const EmConfig& em)
{
    try {
        return match_components(last, fit_gmm(grid, last.size(), em).frame);
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::no_illumination)
            throw;
        return dark_frame(grid, last.size(), em.sigma_floor);
    }
}

inline PreparedSeries prepare_series(const ExperimentConfig& config, StageTimer& timer)
{
    validate(config.scenario);
    PreparedSeries p;
    const auto k = config.scenario.components;
    const EmConfig em = em_config(config);
    timer.run("generate", [&] {
        auto frames = generate_series(config.light, config.scenario, config.scenario.series_length + 1);
        p.next_grid = std::move(frames.back());
        frames.pop_back();
        p.history = std::move(frames);
    });
    timer.run("fit", [&] {
        p.fit = fit_series(p.history, k, em);
        p.actual_next = fit_next_frame(p.next_grid, p.fit.frames.back(), em);
    });
    timer.run("train", [&] { p.forecast = train_forecaster(p.fit.features, config.forecast, forecast_seed(config)); });
    timer.run("predict", [&] { p.predicted_next = predict_frame(p.forecast.checkpoint, p.fit.features, em.sigma_floor); });
    return p;
}

struct ComparisonRow {
    std::size_t users = 0;
    double proposed = 0.0; // placement from the predicted field
    double agnostic = 0.0; // placement ignoring ambient light
    double actual = 0.0;   // placement from the true next-slot field
    std::size_t cells = 0;

    double reduction() const { return (agnostic - proposed) / agnostic; }
};

/// All three placements are scored against the true next-slot field.
inline ComparisonRow compare_placements(const ExperimentConfig& config, const PreparedSeries& series,
                                        const std::vector<UserDemand>& users)
{
    const auto& params = config.scenario.channel;
    const auto cells = partition_users(users, config.scenario.n_uavs, partition_seed(config));
    const auto actual_field = field_of(series.actual_next);
    const auto proposed = deploy(users, cells, field_of(series.predicted_next), params, config.solver);
    const auto agnostic = deploy(users, cells, dark_field(), params, config.solver);
    const auto actual = deploy(users, cells, actual_field, params, config.solver);
    ComparisonRow row;
    row.users = users.size();
    row.cells = cells.size();
    row.proposed = evaluate_deployment(users, proposed, actual_field, params);
    row.agnostic = evaluate_deployment(users, agnostic, actual_field, params);
    row.actual = evaluate_deployment(users, actual, actual_field, params);
    return row;
}

struct ExperimentReport {
    std::string status = "ok";
    nlohmann::json error;
    nlohmann::json config;
    std::vector<UserDemand> users;
    std::vector<CellDeployment> cells;
    double total_power = 0.0;
    ComparisonRow comparison;
    Forecast forecast;
    GmmFrame predicted_next;
    GmmFrame actual_next;
    Eigen::MatrixXd features;
    std::size_t fitted_frames = 0;
    std::size_t dark_frames = 0;
    std::size_t clamped_frames = 0;
    StageTimer timings;

    nlohmann::json to_json() const
    {
        nlohmann::json j = {
            {"schema", report_schema},
            {"version", report_version},
            {"status", status},
            {"config", config},
        };
        if (status != "ok") {
            j["error"] = error;
            return j;
        }
        const auto nan_to_null = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); };
        j["fit"] = {{"frames", fitted_frames},
                    {"dark_frames", dark_frames},
                    {"sigma_clamped_frames", clamped_frames}};
        j["forecast"] = {{"train_frames", forecast.train_columns},
                         {"epochs", forecast.loss_history.size()},
                         {"initial_loss", forecast.loss_history.front()},
                         {"final_loss", forecast.loss_history.back()},
                         {"rmse_train", nan_to_null(forecast.rmse_train)},
                         {"rmse_test", nan_to_null(forecast.rmse_test)},
                         {"units", "min-max normalised features"}};
        j["predicted_frame"] = vlcuav::to_json(predicted_next);
        j["actual_frame"] = vlcuav::to_json(actual_next);
        j["cells"] = vlcuav::to_json(cells);
        j["total_power_w"] = total_power;
        j["comparison_w"] = {{"proposed", comparison.proposed},
                             {"agnostic", comparison.agnostic},
                             {"actual", comparison.actual},
                             {"reduction_vs_agnostic", comparison.reduction()}};
        return j;
    }
};

/// The full deployment procedure for one scenario.
inline ExperimentReport run_pipeline(const ExperimentConfig& config)
{
    ExperimentReport report;
    report.config = to_json(config);
    std::string stage = "prepare";
    try {
        const auto series = prepare_series(config, report.timings);
        report.forecast = series.forecast;
        report.predicted_next = series.predicted_next;
        report.actual_next = series.actual_next;
        report.features = series.fit.features;
        report.fitted_frames = series.fit.frames.size();
        report.dark_frames = series.fit.dark_frames;
        report.clamped_frames = series.fit.clamped_frames;

        stage = "deploy";
        report.timings.run("deploy", [&] {
            report.users = place_users(config.scenario);
            const auto cells = partition_users(report.users, config.scenario.n_uavs, partition_seed(config));
            report.cells = deploy(report.users, cells, field_of(series.predicted_next), config.scenario.channel,
                                  config.solver);
            report.total_power = sum_power(report.cells);
        });
        stage = "compare";
        report.timings.run("compare", [&] { report.comparison = compare_placements(config, series, report.users); });
    } catch (const Error& e) {
        report.status = "failed";
        report.error = {{"stage", stage}, {"kind", to_string(e.kind())}, {"message", e.what()}};
    }
    return report;
}

/// Power of the three placements as the number of users varies.
inline std::vector<ComparisonRow> run_baseline_comparison(const ExperimentConfig& config,
                                                          const std::vector<std::size_t>& user_counts,
                                                          StageTimer& timer)
{
    const auto series = prepare_series(config, timer);
    std::vector<ComparisonRow> rows;
    timer.run("sweep", [&] {
        for (auto count : user_counts) {
            ExperimentConfig c = config;
            c.scenario.n_users = count;
            rows.push_back(compare_placements(c, series, place_users(c.scenario)));
        }
    });
    return rows;
}

inline std::string format_comparison_csv(const std::vector<ComparisonRow>& rows)
{
    std::ostringstream ss;
    ss << "users,cells,p_proposed_w,p_agnostic_w,p_actual_w,reduction_vs_agnostic\n";
    for (const auto& r : rows)
        ss << r.users << ',' << r.cells << ',' << detail::format_double(r.proposed) << ','
           << detail::format_double(r.agnostic) << ',' << detail::format_double(r.actual) << ','
           << detail::format_double(r.reduction()) << '\n';
    return ss.str();
}

} // namespace vlcuav
