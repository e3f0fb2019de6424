// Command-line front end; everything behind the C API.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cladecast.h"

namespace {

int fail(const std::string& msg) {
    std::cerr << "error: " << msg << "\n";
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"clade prevalence nowcasting pipeline"};
    app.fallthrough();
    app.require_subcommand(1, 0);  // one or more stages, run in the order given

    std::string config_path;
    app.add_option("--config", config_path, "pipeline config (JSON)")
        ->required()
        ->check(CLI::ExistingFile);

    std::uint64_t seed = 0;
    auto* seed_opt = app.add_option("--seed", seed, "override the master seed");
    int workers = 0;
    auto* workers_opt = app.add_option("--workers", workers, "override the worker thread count");
    std::string out_dir;
    auto* out_opt = app.add_option("--out-dir", out_dir, "override the output directory");
    std::vector<std::string> specs;
    auto* specs_opt = app.add_option("--specs", specs, "override the model list (or 'all')")
                          ->delimiter(',');
    std::string start_date;
    auto* start_opt =
        app.add_option("--start-date", start_date, "override the first submission Wednesday");
    int num_weeks = 0;
    auto* weeks_opt = app.add_option("--num-weeks", num_weeks, "override the schedule length");
    std::string norm;
    auto* norm_opt =
        app.add_option("--norm", norm, "energy-score norm: euclidean or paper");

    std::vector<std::string> steps;
    const std::pair<const char*, const char*> stages[] = {
        {"simulate", "generate a synthetic surveillance stream"},
        {"build", "assemble as-of training and evaluation datasets"},
        {"fit", "sample every (date, model) posterior"},
        {"predict", "turn fits into prevalence draws"},
        {"score", "energy and Brier scores against evaluation counts"},
        {"report", "aggregate scores by date, location and overall"},
        {"verify", "rehash recorded artifacts"},
    };
    for (const auto& [name, desc] : stages) {
        std::string stage = name;
        app.add_subcommand(stage, desc)->callback([&steps, stage] { steps.push_back(stage); });
    }

    CLI11_PARSE(app, argc, argv);

    nlohmann::json cfg;
    try {
        std::ifstream in(config_path);
        std::stringstream buf;
        buf << in.rdbuf();
        cfg = nlohmann::json::parse(buf.str());
    } catch (const std::exception& e) {
        return fail(config_path + ": " + e.what());
    }
    if (*seed_opt) cfg["seed"] = seed;
    if (*workers_opt) cfg["workers"] = workers;
    if (*out_opt) cfg["out_dir"] = out_dir;
    if (*specs_opt) cfg["specs"] = specs;
    if (*start_opt) cfg["schedule"]["start_date"] = start_date;
    if (*weeks_opt) cfg["schedule"]["num_weeks"] = num_weeks;
    if (*norm_opt) cfg["score"]["norm"] = norm;

    char* err = nullptr;
    cladecast_pipeline* pipe = cladecast_pipeline_open(cfg.dump().c_str(), &err);
    if (!pipe) {
        std::string msg = err ? err : "could not open pipeline";
        cladecast_string_free(err);
        return fail(msg);
    }

    int rc = 0;
    for (const auto& step : steps) {
        cladecast_status st = CLADECAST_OK;
        if (step == "simulate") st = cladecast_run_simulate(pipe);
        else if (step == "build") st = cladecast_run_build(pipe);
        else if (step == "fit") st = cladecast_run_fit(pipe);
        else if (step == "predict") st = cladecast_run_predict(pipe);
        else if (step == "score") st = cladecast_run_score(pipe);
        else if (step == "report") st = cladecast_run_report(pipe);
        else if (step == "verify") {
            int problems = 0;
            st = cladecast_run_verify(pipe, &problems);
            if (st == CLADECAST_OK) {
                std::cout << "[verify] " << problems << " problem(s)\n";
                if (problems > 0) rc = 1;
            }
        }
        if (st != CLADECAST_OK) {
            rc = fail(step + ": " + cladecast_last_error(pipe));
            break;
        }
    }
    cladecast_pipeline_close(pipe);
    return rc;
}
