// decwatt - command line front end: extract bit-stream features from traces,
// synthesize ground-truth datasets, fit and cross-validate the energy models,
// and render report tables.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "decwatt/errors.hpp"
#include "decwatt/eval.hpp"
#include "decwatt/fit.hpp"
#include "decwatt/io.hpp"
#include "decwatt/simlab.hpp"

namespace fs = std::filesystem;
using namespace decwatt;

namespace {

enum class LogLevel { Error = 0, Warn = 1, Info = 2, Debug = 3 };

LogLevel log_level() {
    static const LogLevel level = [] {
        const char* env = std::getenv("DECWATT_LOG");
        if (!env) return LogLevel::Warn;
        const std::string_view v(env);
        if (v == "error") return LogLevel::Error;
        if (v == "info") return LogLevel::Info;
        if (v == "debug") return LogLevel::Debug;
        return LogLevel::Warn;
    }();
    return level;
}

void log(LogLevel level, const std::string& msg) {
    if (level > log_level()) return;
    static constexpr const char* names[] = {"error", "warn", "info", "debug"};
    std::cerr << "decwatt " << names[static_cast<int>(level)] << ": " << msg << "\n";
}

models::ModelId parse_model(const std::string& name) {
    const auto id = models::model_from_string(name);
    if (!id)
        throw CLI::ValidationError("--model", "unknown model '" + name +
                                                  "' (expected FA, FS, PE, M, T, H1T, H2T, H2, H3)");
    return *id;
}

// ---------------------------------------------------------------------------

struct ExtractOptions {
    std::vector<std::string> inputs;
    std::string kind = "FA";
    bool fixed_point_log = false;
    std::string out_file;
    std::string out_dir = ".";
};

int run_extract(const ExtractOptions& opt) {
    const auto kind = opt.kind == "FA" ? features::FeatureKind::FA : features::FeatureKind::FS;
    if (!opt.out_file.empty() && opt.inputs.size() != 1)
        throw CLI::ValidationError("--out", "takes exactly one input trace; use --out-dir for batches");
    int failures = 0;
    for (const auto& input : opt.inputs) {
        try {
            const auto trace = io::read_trace_file(input);
            const auto vec = features::count_features(trace, kind, {opt.fixed_point_log});
            const fs::path out = opt.out_file.empty()
                                     ? fs::path(opt.out_dir) / (fs::path(input).stem().string() +
                                                                ".features.csv")
                                     : fs::path(opt.out_file);
            io::write_file(out, io::write_feature_csv(vec));
            log(LogLevel::Info, input + " -> " + out.string());
        } catch (const DataError& e) {
            ++failures;
            std::cerr << "decwatt error: " << input << ": " << e.what() << "\n";
        }
    }
    if (failures > 0) {
        std::cerr << "decwatt error: " << failures << " of " << opt.inputs.size()
                  << " trace(s) failed\n";
        return 2;
    }
    return 0;
}

// ---------------------------------------------------------------------------

struct SimulateOptions {
    std::string config_file;
    std::string model;
    std::optional<int> rows;
    std::optional<std::uint64_t> seed;
    std::optional<double> noise;
    std::optional<double> alpha;
    std::optional<double> beta;
    std::string out = "dataset.csv";
};

int run_simulate(const SimulateOptions& opt) {
    simlab::GeneratorConfig config;
    int rows = 100;
    bool seed_given = false;

    if (!opt.config_file.empty()) {
        const auto kv = io::parse_keyvalue(io::read_file(opt.config_file), opt.config_file);
        const auto get = [&kv](const char* key) -> std::optional<std::string> {
            const auto it = kv.find(key);
            if (it == kv.end()) return std::nullopt;
            return it->second;
        };
        for (const auto& [key, value] : kv) {
            static const std::set<std::string> known = {
                "model", "rows", "seed", "noise", "alpha", "beta", "min_events", "max_events",
                "qps", "frames_max", "ci_protocol", "ci_max_m", "drop_outliers"};
            if (!known.count(key))
                throw DataError(Errc::ConfigInvalid, opt.config_file + ": unknown key '" + key + "'");
            (void)value;
        }
        if (const auto v = get("model")) config.model_id = parse_model(*v);
        if (const auto v = get("rows")) rows = static_cast<int>(parse_int(*v, "rows"));
        if (const auto v = get("seed")) {
            config.seed = static_cast<std::uint64_t>(parse_int(*v, "seed"));
            seed_given = true;
        }
        if (const auto v = get("noise")) config.noise_rel_sigma = parse_double(*v, "noise");
        if (const auto v = get("alpha")) config.ci_alpha = parse_double(*v, "alpha");
        if (const auto v = get("beta")) config.ci_beta = parse_double(*v, "beta");
        if (const auto v = get("min_events"))
            config.trace_events_min = static_cast<int>(parse_int(*v, "min_events"));
        if (const auto v = get("max_events"))
            config.trace_events_max = static_cast<int>(parse_int(*v, "max_events"));
        if (const auto v = get("frames_max"))
            config.frames_max = static_cast<int>(parse_int(*v, "frames_max"));
        if (const auto v = get("ci_protocol"))
            config.use_measurement_protocol = *v == "1" || *v == "true";
        if (const auto v = get("ci_max_m"))
            config.ci_max_m = static_cast<int>(parse_int(*v, "ci_max_m"));
        if (const auto v = get("drop_outliers")) config.drop_outliers = *v == "1" || *v == "true";
        if (const auto v = get("qps")) {
            config.qps.clear();
            std::string cur;
            for (char c : *v + std::string(",")) {
                if (c == ',') {
                    if (!cur.empty()) config.qps.push_back(static_cast<int>(parse_int(cur, "qps")));
                    cur.clear();
                } else {
                    cur.push_back(c);
                }
            }
        }
    }
    // explicit flags win over the config file
    if (!opt.model.empty()) config.model_id = parse_model(opt.model);
    if (opt.rows) rows = *opt.rows;
    if (opt.seed) {
        config.seed = *opt.seed;
        seed_given = true;
    }
    if (opt.noise) config.noise_rel_sigma = *opt.noise;
    if (opt.alpha) config.ci_alpha = *opt.alpha;
    if (opt.beta) config.ci_beta = *opt.beta;
    if (!seed_given)
        throw CLI::ValidationError("--seed", "simulate is stochastic; a seed is required");

    const auto generated = simlab::generate_dataset(config, rows);
    const fs::path out(opt.out);
    io::write_file(out, io::write_dataset_csv(generated.dataset));

    const bool feature_model =
        config.model_id == models::ModelId::FA || config.model_id == models::ModelId::FS;
    if (feature_model) {
        std::vector<std::pair<std::string, features::FeatureVector>> matrix;
        for (const auto& row : generated.dataset.rows)
            matrix.emplace_back(row.stream_id, *row.features);
        const auto kind = config.model_id == models::ModelId::FA ? features::FeatureKind::FA
                                                                 : features::FeatureKind::FS;
        fs::path mpath = out;
        mpath.replace_extension();
        mpath += ".features.csv";
        io::write_file(mpath, io::write_features_matrix(matrix, kind));
        log(LogLevel::Info, "features matrix -> " + mpath.string());
    }
    fs::path tpath = out;
    tpath.replace_extension();
    tpath += ".truth.json";
    io::write_file(tpath, io::truth_to_json(generated.truth).dump(2) + "\n");
    log(LogLevel::Info, std::to_string(generated.dataset.rows.size()) + " rows -> " + out.string());
    return 0;
}

// ---------------------------------------------------------------------------

fit::Dataset load_dataset(const std::string& dataset_path, const std::string& features_path) {
    auto data = io::read_dataset_csv(io::read_file(dataset_path), dataset_path);
    if (!features_path.empty()) {
        const auto matrix = io::read_features_matrix(io::read_file(features_path), features_path);
        io::attach_features(data, matrix);
    }
    return data;
}

struct FitCmdOptions {
    std::string dataset;
    std::string features;
    std::string model = "FS";
    std::uint64_t seed = 0;
    bool absolute_residuals = false;
    int max_terms = 21;
    double gcv_penalty = 3.0;
    std::string out = "model.json";
};

int run_fit(const FitCmdOptions& opt) {
    const auto id = parse_model(opt.model);
    const auto csv = io::read_file(opt.dataset);
    auto data = io::read_dataset_csv(csv, opt.dataset);
    if (!opt.features.empty())
        io::attach_features(data, io::read_features_matrix(io::read_file(opt.features), opt.features));

    fit::FitOptions fopt;
    fopt.absolute_residuals = opt.absolute_residuals;
    fopt.max_terms = opt.max_terms;
    fopt.gcv_penalty = opt.gcv_penalty;
    auto result = fit::fit_model(data, id, fopt);
    result.model.provenance.seed = opt.seed;
    result.model.provenance.dataset_digest = io::dataset_digest(csv);
    io::write_file(opt.out, io::model_to_json(result.model).dump(2) + "\n");
    log(LogLevel::Info, std::string(models::to_string(id)) + ": objective " +
                            format_double(result.objective_value) + ", " +
                            (result.converged ? "converged" : "not converged") + " -> " + opt.out);
    if (!result.converged) log(LogLevel::Warn, "fit did not meet the convergence tolerances");
    return 0;
}

// ---------------------------------------------------------------------------

struct CvOptions {
    std::string dataset;
    std::string features;
    std::vector<std::string> model_names;
    std::optional<std::uint64_t> seed;
    int folds = 10;
    std::string system;
    bool frame_level = false;
    bool absolute_residuals = false;
    std::string out = "cv";
};

int run_cv(const CvOptions& opt) {
    if (!opt.seed)
        throw CLI::ValidationError("--seed", "cross-validation is stochastic; a seed is required");
    auto data = load_dataset(opt.dataset, opt.features);
    const std::string system =
        opt.system.empty() ? fs::path(opt.dataset).stem().string() : opt.system;
    if (opt.frame_level) {
        const auto diff = eval::frame_level_energies(data);
        if (diff.dropped_nonpositive > 0)
            log(LogLevel::Warn, std::to_string(diff.dropped_nonpositive) +
                                    " differenced row(s) dropped for non-positive energy");
        if (diff.negative_feature_deltas > 0)
            log(LogLevel::Warn, std::to_string(diff.negative_feature_deltas) +
                                    " negative feature delta(s) clamped");
        data = diff.dataset;
    }

    fit::FitOptions fopt;
    fopt.absolute_residuals = opt.absolute_residuals;
    std::vector<eval::ReportCell> cells;
    for (const auto& name : opt.model_names) {
        const auto id = parse_model(name);
        const auto report = eval::cross_validate(data, id, *opt.seed, opt.folds, fopt);
        const fs::path path = opt.out + "." + std::string(models::to_string(id)) + ".cv.json";
        io::write_file(path, io::cv_report_to_json(report, system).dump(2) + "\n");
        cells.push_back({system, id, report.mean_abs_error});
        log(LogLevel::Info, std::string(models::to_string(id)) + ": mean |eps| = " +
                                eval::format_percent(report.mean_abs_error) + "% -> " +
                                path.string());
    }
    io::write_file(opt.out + ".table.csv", eval::render_report_csv(cells));
    const auto table = eval::render_report_text(cells);
    io::write_file(opt.out + ".table.txt", table);
    std::cout << table;
    return 0;
}

// ---------------------------------------------------------------------------

struct EstimateOptions {
    std::string model_file;
    std::vector<std::string> feature_csvs;
    std::string dataset;
    std::string features_matrix;
};

int run_estimate(const EstimateOptions& opt) {
    const auto model = io::model_from_json(
        io::ordered_json::parse(io::read_file(opt.model_file)), opt.model_file);
    const bool feature_model = model.id == models::ModelId::FA || model.id == models::ModelId::FS;

    const auto print = [&model](const std::string& label, double energy) {
        std::printf("%s %s %.6g\n", label.c_str(), std::string(models::to_string(model.id)).c_str(),
                    energy);
    };

    if (!opt.feature_csvs.empty()) {
        if (!feature_model)
            throw DataError(Errc::DimensionMismatch,
                            std::string(models::to_string(model.id)) +
                                " takes dataset rows, not feature vectors");
        for (const auto& path : opt.feature_csvs) {
            const auto vec = io::read_feature_csv(io::read_file(path), path);
            models::BitstreamMeta meta;
            print(fs::path(path).stem().string(), models::predict(model, meta, &vec));
        }
        return 0;
    }
    if (opt.dataset.empty())
        throw CLI::ValidationError("estimate",
                                   "give feature CSV files or --dataset (with --features for FA/FS)");
    const auto data = load_dataset(opt.dataset, opt.features_matrix);
    for (const auto& row : data.rows) {
        if (feature_model && !row.features)
            throw DataError(Errc::MissingVariables,
                            "row '" + row.stream_id + "': no feature vector attached (--features)");
        print(row.stream_id,
              models::predict(model, row.meta, row.features ? &*row.features : nullptr));
    }
    return 0;
}

// ---------------------------------------------------------------------------

struct ReportOptions {
    std::vector<std::string> inputs;
    std::string out = "report";
};

int run_report(const ReportOptions& opt) {
    std::vector<eval::ReportCell> cells;
    for (const auto& path : opt.inputs) {
        const auto j = io::ordered_json::parse(io::read_file(path));
        try {
            eval::ReportCell cell;
            cell.system = j.at("system").get<std::string>();
            const auto id = models::model_from_string(j.at("model_id").get<std::string>());
            if (!id) throw DataError(Errc::ConfigInvalid, path + ": unknown model_id");
            cell.model = *id;
            cell.mean_abs_error = j.at("mean_abs_error").get<double>();
            cells.push_back(std::move(cell));
        } catch (const io::ordered_json::exception& e) {
            throw DataError(Errc::ConfigInvalid, path + ": not a cv report: " + e.what());
        }
    }
    io::write_file(opt.out + ".csv", eval::render_report_csv(cells));
    const auto table = eval::render_report_text(cells);
    io::write_file(opt.out + ".txt", table);
    std::cout << table;
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"decwatt - bit-stream feature based decoding-energy estimation toolkit"};
    app.require_subcommand(1);

    ExtractOptions extract;
    auto* cmd_extract = app.add_subcommand("extract", "count feature vectors from trace files");
    cmd_extract->add_option("traces", extract.inputs, "trace files")->required()->check(CLI::ExistingFile);
    cmd_extract->add_option("--kind", extract.kind, "feature set: FA or FS")
        ->check(CLI::IsMember({"FA", "FS"}));
    cmd_extract->add_flag("--fixed-point-log", extract.fixed_point_log,
                          "use the fixed-point log2 approximation for MVD/val");
    cmd_extract->add_option("--out", extract.out_file, "output file (single input only)");
    cmd_extract->add_option("--out-dir", extract.out_dir, "output directory for batches");

    SimulateOptions simulate;
    auto* cmd_simulate = app.add_subcommand("simulate", "generate a ground-truth dataset");
    cmd_simulate->add_option("--config", simulate.config_file, "key=value generator config")
        ->check(CLI::ExistingFile);
    cmd_simulate->add_option("--model", simulate.model, "hidden model id");
    cmd_simulate->add_option("--rows", simulate.rows, "number of rows");
    cmd_simulate->add_option("--seed", simulate.seed, "generator seed (required)");
    cmd_simulate->add_option("--noise", simulate.noise, "relative measurement noise sigma");
    cmd_simulate->add_option("--alpha", simulate.alpha, "CI protocol confidence level");
    cmd_simulate->add_option("--beta", simulate.beta, "CI protocol width fraction");
    cmd_simulate->add_option("--out", simulate.out, "dataset CSV path");

    FitCmdOptions fitcmd;
    auto* cmd_fit = app.add_subcommand("fit", "fit one model on a dataset");
    cmd_fit->add_option("--dataset", fitcmd.dataset, "dataset CSV")->required()->check(CLI::ExistingFile);
    cmd_fit->add_option("--features", fitcmd.features, "features matrix CSV (FA/FS)")
        ->check(CLI::ExistingFile);
    cmd_fit->add_option("--model", fitcmd.model, "model id")->required();
    cmd_fit->add_option("--seed", fitcmd.seed, "seed recorded in provenance");
    cmd_fit->add_flag("--absolute-residuals", fitcmd.absolute_residuals,
                      "MARS: train on absolute instead of relative residuals");
    cmd_fit->add_option("--max-terms", fitcmd.max_terms, "MARS: forward pass term budget");
    cmd_fit->add_option("--gcv-penalty", fitcmd.gcv_penalty, "MARS: GCV penalty per knot");
    cmd_fit->add_option("--out", fitcmd.out, "trained model JSON path");

    CvOptions cv;
    auto* cmd_cv = app.add_subcommand("cv", "k-fold cross-validation of one or more models");
    cmd_cv->add_option("--dataset", cv.dataset, "dataset CSV")->required()->check(CLI::ExistingFile);
    cmd_cv->add_option("--features", cv.features, "features matrix CSV (FA/FS)")
        ->check(CLI::ExistingFile);
    cmd_cv->add_option("--model", cv.model_names, "model id (repeatable)")->required();
    cmd_cv->add_option("--seed", cv.seed, "fold assignment seed (required)");
    cmd_cv->add_option("--folds", cv.folds, "number of folds");
    cmd_cv->add_option("--system", cv.system, "system label for the report");
    cmd_cv->add_flag("--frame-level", cv.frame_level, "difference to frame level before validating");
    cmd_cv->add_flag("--absolute-residuals", cv.absolute_residuals,
                     "MARS: train on absolute instead of relative residuals");
    cmd_cv->add_option("--out", cv.out, "output prefix");

    EstimateOptions estimate;
    auto* cmd_estimate = app.add_subcommand("estimate", "apply a trained model");
    cmd_estimate->add_option("--model-file", estimate.model_file, "trained model JSON")
        ->required()
        ->check(CLI::ExistingFile);
    cmd_estimate->add_option("inputs", estimate.feature_csvs, "feature CSV files (FA/FS models)");
    cmd_estimate->add_option("--dataset", estimate.dataset, "dataset CSV to score")
        ->check(CLI::ExistingFile);
    cmd_estimate->add_option("--features", estimate.features_matrix, "features matrix CSV")
        ->check(CLI::ExistingFile);

    ReportOptions report;
    auto* cmd_report = app.add_subcommand("report", "combine cv reports into a systems x models table");
    cmd_report->add_option("reports", report.inputs, "cv report JSON files")
        ->required()
        ->check(CLI::ExistingFile);
    cmd_report->add_option("--out", report.out, "output prefix");

    try {
        app.parse(argc, argv);
        if (app.got_subcommand(cmd_extract)) return run_extract(extract);
        if (app.got_subcommand(cmd_simulate)) return run_simulate(simulate);
        if (app.got_subcommand(cmd_fit)) return run_fit(fitcmd);
        if (app.got_subcommand(cmd_cv)) return run_cv(cv);
        if (app.got_subcommand(cmd_estimate)) return run_estimate(estimate);
        if (app.got_subcommand(cmd_report)) return run_report(report);
        return 1;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    } catch (const NumericError& e) {
        std::cerr << "decwatt numeric error: " << e.what() << "\n";
        return 3;
    } catch (const DataError& e) {
        std::cerr << "decwatt error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "decwatt internal error: " << e.what() << "\n";
        return 3;
    }
}
