#include "cladecast/pipeline.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "cladecast/predict.hpp"
#include "cladecast/util.hpp"

namespace cladecast {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& ctx) {
    for (const auto& [key, _] : j.items())
        if (!allowed.count(key))
            throw std::runtime_error("config: unknown key '" + key + "' in " + ctx);
}

std::string fmt(double v, const char* spec = "%.17g") {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

std::string opt_num(double v, const char* spec = "%.9g") {
    return std::isfinite(v) ? fmt(v, spec) : std::string{};
}

void split_csv(const std::string& line, std::vector<std::string>& out) {
    out.clear();
    std::size_t begin = 0;
    for (;;) {
        std::size_t comma = line.find(',', begin);
        if (comma == std::string::npos) {
            out.push_back(line.substr(begin));
            return;
        }
        out.push_back(line.substr(begin, comma - begin));
        begin = comma + 1;
    }
}

double parse_opt_double(const std::string& s) {
    if (s.empty()) return kNaN;
    return std::strtod(s.c_str(), nullptr);
}

// istream over a csv artifact, header validated
std::istringstream open_csv(const std::string& path, const std::string& header) {
    std::istringstream in(read_file(path));
    std::string line;
    if (!std::getline(in, line) || line != header)
        throw std::runtime_error("unexpected header in " + path);
    return in;
}

int resolve_workers(int configured) {
    if (configured > 0) return configured;
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

void run_tasks(int workers, std::vector<std::function<void()>>& tasks) {
    workers = resolve_workers(workers);
    if (workers <= 1 || tasks.size() <= 1) {
        for (auto& t : tasks) t();
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr err;
    std::mutex err_mu;
    auto worker = [&] {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= tasks.size()) return;
            try {
                tasks[i]();
            } catch (...) {
                std::lock_guard<std::mutex> g(err_mu);
                if (!err) err = std::current_exception();
            }
        }
    };
    std::vector<std::thread> threads;
    int n = std::min<int>(workers, static_cast<int>(tasks.size()));
    threads.reserve(n);
    for (int i = 0; i < n; ++i) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    if (err) std::rethrow_exception(err);
}

Date json_date(const json& j, const std::string& key, const std::string& ctx) {
    if (!j.contains(key)) throw std::runtime_error("config: missing " + ctx + "." + key);
    return parse_date(j.at(key).get<std::string>());
}

}  // namespace

PipelineConfig PipelineConfig::from_json_text(const std::string& text) {
    json j = json::parse(text);
    check_keys(j,
               {"out_dir", "seed", "workers", "metadata", "jurisdictions", "locations", "columns",
                "schedule", "specs", "sampler", "predict", "score", "synth"},
               "top level");
    PipelineConfig c;
    c.out_dir = j.value("out_dir", c.out_dir);
    c.seed = j.value("seed", c.seed);
    c.workers = j.value("workers", c.workers);
    c.metadata_path = j.value("metadata", c.metadata_path);
    c.jurisdictions = j.value("jurisdictions", c.jurisdictions);
    if (j.contains("locations")) c.locations = j.at("locations").get<std::vector<std::string>>();
    if (j.contains("columns")) {
        const json& col = j.at("columns");
        check_keys(col, {"collection_date", "report_date", "location", "clade", "host", "country"},
                   "columns");
        c.columns.collection_date = col.value("collection_date", c.columns.collection_date);
        c.columns.report_date = col.value("report_date", c.columns.report_date);
        c.columns.location = col.value("location", c.columns.location);
        c.columns.clade = col.value("clade", c.columns.clade);
        c.columns.host = col.value("host", c.columns.host);
        c.columns.country = col.value("country", c.columns.country);
    }
    if (j.contains("schedule")) {
        const json& s = j.at("schedule");
        check_keys(s, {"start_date", "num_weeks"}, "schedule");
        c.start_date = json_date(s, "start_date", "schedule");
        c.num_weeks = s.value("num_weeks", 1);
    }
    if (j.contains("specs")) c.specs = j.at("specs").get<std::vector<std::string>>();
    if (j.contains("sampler")) {
        const json& s = j.at("sampler");
        check_keys(s,
                   {"chains", "warmup", "samples", "target_accept", "max_treedepth",
                    "init_radius"},
                   "sampler");
        c.sampler.chains = s.value("chains", c.sampler.chains);
        c.sampler.warmup = s.value("warmup", c.sampler.warmup);
        c.sampler.samples = s.value("samples", c.sampler.samples);
        c.sampler.target_accept = s.value("target_accept", c.sampler.target_accept);
        c.sampler.max_treedepth = s.value("max_treedepth", c.sampler.max_treedepth);
        c.sampler.init_radius = s.value("init_radius", c.sampler.init_radius);
    }
    if (j.contains("predict")) {
        const json& p = j.at("predict");
        check_keys(p, {"draws", "sims_per_draw", "dm_sample_theta"}, "predict");
        c.predict.draws = p.value("draws", c.predict.draws);
        c.predict.sims_per_draw = p.value("sims_per_draw", c.predict.sims_per_draw);
        c.predict.dm_sample_theta = p.value("dm_sample_theta", c.predict.dm_sample_theta);
    }
    if (j.contains("score")) {
        const json& s = j.at("score");
        check_keys(s, {"norm", "pair_samples"}, "score");
        c.score.norm = parse_energy_norm(s.value("norm", std::string("euclidean")));
        c.score.pair_samples = s.value("pair_samples", c.score.pair_samples);
    }
    if (j.contains("synth")) {
        const json& s = j.at("synth");
        check_keys(s,
                   {"num_locations", "num_categories", "degree", "end_date", "history_days",
                    "forecast_days", "mean_daily_samples", "location_daily_samples", "kappa",
                    "report_delay_mean", "seed", "mu", "sigma", "locations"},
                   "synth");
        SynthConfig sc;
        sc.num_locations = s.value("num_locations", sc.num_locations);
        sc.num_categories = s.value("num_categories", sc.num_categories);
        sc.degree = s.value("degree", sc.degree);
        sc.end_date = json_date(s, "end_date", "synth");
        sc.history_days = s.value("history_days", sc.history_days);
        sc.forecast_days = s.value("forecast_days", sc.forecast_days);
        sc.mean_daily_samples = s.value("mean_daily_samples", sc.mean_daily_samples);
        if (s.contains("location_daily_samples"))
            sc.location_daily_samples =
                s.at("location_daily_samples").get<std::vector<double>>();
        sc.kappa = s.value("kappa", sc.kappa);
        sc.report_delay_mean = s.value("report_delay_mean", sc.report_delay_mean);
        sc.seed = s.value("seed", sc.seed);
        if (!s.contains("mu") || !s.contains("sigma"))
            throw std::runtime_error("config: synth.mu and synth.sigma are required");
        sc.mu = s.at("mu").get<std::vector<double>>();
        sc.sigma = s.at("sigma").get<std::vector<double>>();
        if (s.contains("locations"))
            sc.locations = s.at("locations").get<std::vector<std::string>>();
        c.synth = std::move(sc);
    }
    return c;
}

std::string PipelineConfig::to_json_text() const {
    // normalized semantic form: out_dir and workers do not affect artifacts
    ojson j;
    j["seed"] = seed;
    j["metadata"] = metadata_path;
    j["jurisdictions"] = jurisdictions;
    j["locations"] = locations;
    j["columns"] = {{"collection_date", columns.collection_date},
                    {"report_date", columns.report_date},
                    {"location", columns.location},
                    {"clade", columns.clade},
                    {"host", columns.host},
                    {"country", columns.country}};
    j["schedule"] = {{"start_date", start_date.iso()}, {"num_weeks", num_weeks}};
    j["specs"] = resolved_specs();
    j["sampler"] = {{"chains", sampler.chains},
                    {"warmup", sampler.warmup},
                    {"samples", sampler.samples},
                    {"target_accept", sampler.target_accept},
                    {"max_treedepth", sampler.max_treedepth},
                    {"init_radius", sampler.init_radius}};
    j["predict"] = {{"draws", predict.draws},
                    {"sims_per_draw", predict.sims_per_draw},
                    {"dm_sample_theta", predict.dm_sample_theta}};
    j["score"] = {{"norm", energy_norm_name(score.norm)}, {"pair_samples", score.pair_samples}};
    if (synth) {
        j["synth"] = {{"num_locations", synth->num_locations},
                      {"num_categories", synth->num_categories},
                      {"degree", synth->degree},
                      {"end_date", synth->end_date.iso()},
                      {"history_days", synth->history_days},
                      {"forecast_days", synth->forecast_days},
                      {"mean_daily_samples", synth->mean_daily_samples},
                      {"location_daily_samples", synth->location_daily_samples},
                      {"kappa", synth->kappa},
                      {"report_delay_mean", synth->report_delay_mean},
                      {"seed", synth->seed},
                      {"mu", synth->mu},
                      {"sigma", synth->sigma},
                      {"locations", synth->locations}};
    }
    return j.dump(2) + "\n";
}

std::vector<std::string> PipelineConfig::resolved_specs() const {
    std::vector<std::string> out;
    for (const auto& s : specs) {
        if (s == "all") {
            for (const auto& m : ModelSpec::all()) out.push_back(m.code());
        } else {
            out.push_back(ModelSpec::parse(s).code());  // validates
        }
    }
    std::vector<std::string> dedup;
    for (auto& s : out)
        if (std::find(dedup.begin(), dedup.end(), s) == dedup.end()) dedup.push_back(s);
    return dedup;
}

std::vector<std::string> PipelineConfig::resolved_locations() const {
    if (!locations.empty()) {
        auto out = locations;
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }
    if (synth) {
        if (!synth->locations.empty()) {
            auto out = synth->locations;
            std::sort(out.begin(), out.end());
            return out;
        }
        return synth_location_codes(synth->num_locations);
    }
    return jurisdiction_table().codes();
}

JurisdictionTable PipelineConfig::jurisdiction_table() const {
    if (!locations.empty() || synth) return JurisdictionTable::from_codes(resolved_locations());
    if (jurisdictions == "builtin") return JurisdictionTable::builtin();
    return JurisdictionTable::from_file(jurisdictions);
}

Manifest::Manifest(std::string dir, std::string config_hash, std::string run_info_json)
    : dir_(std::move(dir)), config_hash_(std::move(config_hash)),
      run_info_(std::move(run_info_json)) {
    load();
}

std::string Manifest::abs(const std::string& rel_path) const { return dir_ + "/" + rel_path; }

void Manifest::load() {
    const std::string path = abs("manifest.json");
    if (!file_exists(path)) return;
    json j = json::parse(read_file(path));
    if (j.value("config_hash", std::string{}) != config_hash_) return;  // different run setup
    for (const auto& [rel, hash] : j.at("artifacts").items())
        entries_[rel] = hash.get<std::string>();
}

void Manifest::persist() const {
    ojson j;
    j["config_hash"] = config_hash_;
    j["run"] = run_info_.empty() ? ojson::object() : ojson::parse(run_info_);
    ojson arts = ojson::object();
    for (const auto& [rel, hash] : entries_) arts[rel] = hash;  // map order = sorted
    j["artifacts"] = arts;
    atomic_write_file(abs("manifest.json"), j.dump(2) + "\n");
}

bool Manifest::is_current(const std::string& rel_path) const {
    auto it = entries_.find(rel_path);
    if (it == entries_.end()) return false;
    const std::string path = abs(rel_path);
    if (!file_exists(path)) return false;
    return sha256_file(path) == it->second;
}

void Manifest::record(const std::string& rel_path) {
    entries_[rel_path] = sha256_file(abs(rel_path));
    persist();
}

void Manifest::record_batch(const std::vector<std::string>& rel_paths) {
    for (const auto& rel : rel_paths) entries_[rel] = sha256_file(abs(rel));
    persist();
}

namespace {

std::string run_info_json(const PipelineConfig& cfg) {
    ojson info;
    info["version"] = "1.0.0";
    info["seed"] = cfg.seed;
    info["schedule"] = {{"start_date", cfg.start_date.iso()}, {"num_weeks", cfg.num_weeks}};
    TimeScale ts;
    info["time_scale"] = {{"center", ts.center}, {"scale", ts.scale}};
    return info.dump();
}

}  // namespace

Pipeline::Pipeline(PipelineConfig cfg)
    : cfg_(std::move(cfg)),
      manifest_(cfg_.out_dir, sha256_hex(cfg_.to_json_text()), run_info_json(cfg_)) {}

std::vector<Date> Pipeline::submission_dates() const {
    std::vector<Date> out;
    for (const auto& pair : build_schedule(cfg_.start_date, cfg_.num_weeks))
        out.push_back(pair.submission_date);
    return out;
}

std::string Pipeline::metadata_path() const {
    if (!cfg_.metadata_path.empty()) return cfg_.metadata_path;
    if (cfg_.synth) return manifest_.abs("synth/metadata.tsv");
    throw std::runtime_error("no metadata source: set `metadata` or a `synth` section");
}

std::vector<SequenceRecord> Pipeline::load_records() const {
    ParseFilter filter;
    filter.jurisdictions = cfg_.jurisdiction_table();
    return parse_metadata_file(metadata_path(), cfg_.columns, filter).records;
}

std::string Pipeline::require(const std::string& rel_path, const std::string& producer) const {
    const std::string path = manifest_.abs(rel_path);
    if (!file_exists(path))
        throw std::runtime_error("missing " + rel_path + "; run `" + producer + "` first");
    return path;
}

void Pipeline::simulate() {
    if (!cfg_.synth) throw std::runtime_error("config has no `synth` section");
    const std::string tsv_rel = "synth/metadata.tsv", truth_rel = "synth/truth.json";
    if (manifest_.is_current(tsv_rel) && manifest_.is_current(truth_rel)) {
        std::cout << "[simulate] up to date\n";
        return;
    }
    SynthResult r = generate_synth(*cfg_.synth);
    write_metadata_file(r.records, cfg_.columns, manifest_.abs(tsv_rel));

    const int J = cfg_.synth->num_categories - 1, P = cfg_.synth->degree;
    ojson truth;
    truth["locations"] = r.locations;
    truth["clades"] = r.clades;
    truth["degree"] = P;
    ojson gamma = ojson::array();
    for (std::size_t l = 0; l < r.locations.size(); ++l) {
        ojson per_loc = ojson::array();
        for (int j = 0; j < J; ++j) {
            ojson coefs = ojson::array();
            for (int p = 0; p < P; ++p)
                coefs.push_back(r.truth_gamma(static_cast<int>(l), j, p, J, P));
            per_loc.push_back(coefs);
        }
        gamma.push_back(per_loc);
    }
    truth["gamma"] = gamma;
    atomic_write_file(manifest_.abs(truth_rel), truth.dump(2) + "\n");
    manifest_.record_batch({tsv_rel, truth_rel});
    std::cout << "[simulate] " << r.records.size() << " records\n";
}

void Pipeline::build() {
    const auto locations = cfg_.resolved_locations();
    const auto dates = submission_dates();
    ParseResult parsed;
    bool loaded = false;
    auto ensure_loaded = [&] {
        if (loaded) return;
        ParseFilter filter;
        filter.jurisdictions = cfg_.jurisdiction_table();
        parsed = parse_metadata_file(metadata_path(), cfg_.columns, filter);
        loaded = true;
        std::cout << "[build] " << parsed.records.size() << " records kept, "
                  << parsed.drops.total() << " dropped\n";
    };
    for (Date s : dates) {
        const std::string base = "data/" + s.iso() + "/";
        const std::vector<std::string> outs = {base + "training.csv", base + "training.json",
                                               base + "eval.csv", base + "eval.json"};
        bool current = true;
        for (const auto& rel : outs) current = current && manifest_.is_current(rel);
        if (current) {
            std::cout << "[build] " << s.iso() << " up to date\n";
            continue;
        }
        ensure_loaded();
        CladeSet clades = select_clades(parsed.records, s);
        AsOfDataset training = build_asof_dataset(parsed.records, s, clades, locations);
        EvaluationDataset eval = build_eval_dataset(parsed.records, s, clades, locations);
        write_dataset_csv(training, manifest_.abs(outs[0]));
        write_dataset_sidecar(training, manifest_.abs(outs[1]), false, &parsed.drops);
        write_dataset_csv(eval, manifest_.abs(outs[2]));
        write_dataset_sidecar(eval, manifest_.abs(outs[3]), true, nullptr);
        manifest_.record_batch(outs);
        std::cout << "[build] " << s.iso() << " clades=" << clades.modeled.size()
                  << " sequences=" << training.total_sequences() << "\n";
    }
}

void Pipeline::fit() {
    const auto dates = submission_dates();
    const auto specs = cfg_.resolved_specs();
    std::mutex mu;
    std::vector<std::function<void()>> tasks;
    for (Date s : dates) {
        for (const auto& spec_code : specs) {
            tasks.push_back([this, s, spec_code, &mu] {
                const std::string date = s.iso();
                const std::string head_rel = "fits/" + date + "/" + spec_code + ".json";
                const std::string bin_rel = "fits/" + date + "/" + spec_code + ".f64";
                {
                    std::lock_guard<std::mutex> g(mu);
                    if (manifest_.is_current(head_rel) &&
                        (!file_exists(manifest_.abs(bin_rel)) || manifest_.is_current(bin_rel))) {
                        std::cout << "[fit] " << date << " " << spec_code << " up to date\n";
                        return;
                    }
                }
                CountDataset data =
                    read_dataset(require("data/" + date + "/training.csv", "build"),
                                 require("data/" + date + "/training.json", "build"));
                ojson head;
                head["model"] = spec_code;
                head["submission_date"] = date;
                head["locations"] = data.locations;
                head["clades"] = data.clades.modeled;
                if (data.clades.degenerate()) {
                    head["degenerate"] = true;
                    atomic_write_file(manifest_.abs(head_rel), head.dump(2) + "\n");
                    std::lock_guard<std::mutex> g(mu);
                    manifest_.record(head_rel);
                    std::cout << "[fit] " << date << " " << spec_code << " degenerate\n";
                    return;
                }
                head["degenerate"] = false;
                try {
                    ModelSpec spec = ModelSpec::parse(spec_code);
                    Posterior post(data, spec);
                    NutsSampler sampler(
                        post.dim(),
                        [&post](std::span<const double> q, std::span<double> g) {
                            return post.log_density(q, g);
                        },
                        cfg_.sampler);
                    const int C = std::max(1, cfg_.sampler.chains);
                    std::vector<SampleResult> chains;
                    chains.reserve(C);
                    std::vector<double> step_sizes;
                    for (int c = 0; c < C; ++c) {
                        Rng rng(derive_seed(cfg_.seed, "fit|" + date + "|" + spec_code +
                                                           "|chain" + std::to_string(c)));
                        std::vector<double> q0 = initial_point(post, rng);
                        chains.push_back(sampler.run(rng, q0));
                        step_sizes.push_back(chains.back().step_size_final);
                    }
                    ChainDiagnostics diag = summarize_chains(chains);

                    const int dim = chains[0].dim;
                    std::string bytes;
                    std::vector<double> logp;
                    for (const SampleResult& r : chains) {
                        const std::size_t sz = r.draws.size() * sizeof(double);
                        const std::size_t off = bytes.size();
                        bytes.resize(off + sz);
                        std::memcpy(bytes.data() + off, r.draws.data(), sz);
                        logp.insert(logp.end(), r.log_density.begin(), r.log_density.end());
                    }
                    head["dim"] = dim;
                    head["chains"] = C;
                    head["num_draws"] = static_cast<int>(logp.size());
                    head["draws_file"] = spec_code + ".f64";
                    head["step_size"] = step_sizes;
                    head["log_density"] = logp;
                    head["diagnostics"] = {{"divergences", diag.divergences},
                                           {"max_depth_hits", diag.max_depth_hits},
                                           {"depth_saturation", diag.depth_saturation},
                                           {"mean_accept", diag.mean_accept},
                                           {"ess_log_density", diag.ess_log_density},
                                           {"min_param_ess", diag.min_param_ess},
                                           {"max_param_rhat", diag.max_param_rhat}};
                    atomic_write_file(manifest_.abs(bin_rel), bytes);
                    atomic_write_file(manifest_.abs(head_rel), head.dump(2) + "\n");
                    std::lock_guard<std::mutex> g(mu);
                    manifest_.record_batch({head_rel, bin_rel});
                    std::cout << "[fit] " << date << " " << spec_code
                              << " accept=" << fmt(diag.mean_accept, "%.3f")
                              << " div=" << diag.divergences << "\n";
                } catch (const std::exception& e) {
                    // a sampler failure is recorded, not fatal to the run
                    head["failed"] = true;
                    head["error"] = e.what();
                    atomic_write_file(manifest_.abs(head_rel), head.dump(2) + "\n");
                    std::lock_guard<std::mutex> g(mu);
                    manifest_.record(head_rel);
                    std::cout << "[fit] " << date << " " << spec_code << " FAILED: " << e.what()
                              << "\n";
                }
            });
        }
    }
    run_tasks(cfg_.workers, tasks);
}

void Pipeline::predict() {
    const auto dates = submission_dates();
    const auto specs = cfg_.resolved_specs();
    std::mutex mu;
    std::vector<std::function<void()>> tasks;
    for (Date s : dates) {
        for (const auto& spec_code : specs) {
            tasks.push_back([this, s, spec_code, &mu] {
                const std::string date = s.iso();
                const std::string p_rel = "predictions/" + date + "/" + spec_code + ".csv";
                const std::string mean_rel =
                    "predictions/" + date + "/" + spec_code + "_mean.csv";
                {
                    std::lock_guard<std::mutex> g(mu);
                    if (manifest_.is_current(p_rel) && manifest_.is_current(mean_rel)) {
                        std::cout << "[predict] " << date << " " << spec_code << " up to date\n";
                        return;
                    }
                }
                json head =
                    json::parse(read_file(require("fits/" + date + "/" + spec_code + ".json",
                                                  "fit")));
                std::ostringstream draws_csv, mean_csv;
                draws_csv << "model,location,target_date,clade,draw,value\n";
                mean_csv << "model,location,target_date,clade,value\n";
                if (!head.value("degenerate", false) && !head.value("failed", false)) {
                    auto locations = head.at("locations").get<std::vector<std::string>>();
                    auto labels = head.at("clades").get<std::vector<std::string>>();
                    labels.emplace_back(kReferenceLabel);
                    const int L = static_cast<int>(locations.size());
                    const int V = static_cast<int>(labels.size());
                    std::string bytes = read_file(
                        require("fits/" + date + "/" + head.at("draws_file").get<std::string>(),
                                "fit"));
                    std::vector<double> draws(bytes.size() / sizeof(double));
                    std::memcpy(draws.data(), bytes.data(), draws.size() * sizeof(double));
                    const int dim = head.at("dim").get<int>();
                    const int total = static_cast<int>(draws.size()) / dim;
                    ModelSpec spec = ModelSpec::parse(spec_code);
                    PredictionGrid grid = PredictionGrid::standard(s);

                    // stored sample set: an evenly spaced subset of the chain
                    std::vector<int> keep = thin_indices(total, cfg_.predict.draws);
                    std::vector<double> sub(keep.size() * static_cast<std::size_t>(dim));
                    for (std::size_t i = 0; i < keep.size(); ++i)
                        std::memcpy(sub.data() + i * dim,
                                    draws.data() + static_cast<std::size_t>(keep[i]) * dim,
                                    static_cast<std::size_t>(dim) * sizeof(double));
                    PrevalenceSet prev = compute_prevalence(spec, L, V, sub, grid);
                    for (int l = 0; l < prev.L; ++l)
                        for (int h = 0; h < prev.H; ++h)
                            for (int d = 0; d < prev.num_draws; ++d)
                                for (int v = 0; v < prev.V; ++v)
                                    draws_csv << spec_code << ',' << locations[l] << ','
                                              << grid.dates[h].iso() << ',' << labels[v] << ','
                                              << d << ',' << fmt(prev.value(d, l, h, v)) << '\n';

                    // posterior mean over every retained draw, not the subset
                    std::vector<double> mean = mean_prevalence(spec, L, V, draws, grid);
                    for (int l = 0; l < L; ++l)
                        for (int h = 0; h < grid.size(); ++h)
                            for (int v = 0; v < V; ++v)
                                mean_csv << spec_code << ',' << locations[l] << ','
                                         << grid.dates[h].iso() << ',' << labels[v] << ','
                                         << fmt(mean[(static_cast<std::size_t>(l) * grid.size() +
                                                      h) * V + v])
                                         << '\n';
                }
                atomic_write_file(manifest_.abs(p_rel), draws_csv.str());
                atomic_write_file(manifest_.abs(mean_rel), mean_csv.str());
                std::lock_guard<std::mutex> g(mu);
                manifest_.record_batch({p_rel, mean_rel});
                std::cout << "[predict] " << date << " " << spec_code << " ok\n";
            });
        }
    }
    run_tasks(cfg_.workers, tasks);
}

void Pipeline::score() {
    const auto dates = submission_dates();
    const auto specs = cfg_.resolved_specs();
    std::mutex mu;
    std::vector<std::function<void()>> tasks;
    for (Date s : dates) {
        for (const auto& spec_code : specs) {
            tasks.push_back([this, s, spec_code, &mu] {
                const std::string date = s.iso();
                const std::string rel = "scores/" + date + "/" + spec_code + ".csv";
                {
                    std::lock_guard<std::mutex> g(mu);
                    if (manifest_.is_current(rel)) {
                        std::cout << "[score] " << date << " " << spec_code << " up to date\n";
                        return;
                    }
                }
                EvaluationDataset eval =
                    read_dataset(require("data/" + date + "/eval.csv", "build"),
                                 require("data/" + date + "/eval.json", "build"));
                PredictionGrid grid = PredictionGrid::standard(s);
                const int V = eval.num_categories();
                const int L = eval.num_locations();
                const int H = grid.size();

                auto locate = [&](const std::string& code) {
                    auto it =
                        std::lower_bound(eval.locations.begin(), eval.locations.end(), code);
                    if (it == eval.locations.end() || *it != code)
                        throw std::runtime_error("unknown location in predictions: " + code);
                    return static_cast<int>(it - eval.locations.begin());
                };
                auto horizon_of = [&](const std::string& iso) {
                    int h = static_cast<int>(parse_date(iso) - grid.dates.front());
                    if (h < 0 || h >= H)
                        throw std::runtime_error("prediction date out of range: " + iso);
                    return h;
                };

                // reload the stored prevalence draws
                std::string line;
                std::vector<std::string> f;
                std::istringstream in =
                    open_csv(require("predictions/" + date + "/" + spec_code + ".csv", "predict"),
                             "model,location,target_date,clade,draw,value");
                PrevalenceSet prev;
                prev.L = L;
                prev.H = H;
                prev.V = V;
                std::vector<std::tuple<int, int, int, int, double>> entries;
                int max_draw = -1;
                while (std::getline(in, line)) {
                    if (line.empty()) continue;
                    split_csv(line, f);
                    if (f.size() != 6)
                        throw std::runtime_error("bad prediction row for " + date + "/" +
                                                 spec_code);
                    int d = std::stoi(f[4]);
                    max_draw = std::max(max_draw, d);
                    entries.emplace_back(d, locate(f[1]), horizon_of(f[2]),
                                         eval.clades.category_of(f[3]),
                                         std::strtod(f[5].c_str(), nullptr));
                }
                const bool have_prev = max_draw >= 0;
                if (have_prev) {
                    prev.num_draws = max_draw + 1;
                    prev.values.assign(static_cast<std::size_t>(prev.num_draws) * L * H * V, 0.0);
                    for (const auto& [d, l, h, v, val] : entries) prev.at(d, l, h, v) += val;
                }

                // reload the posterior mean prevalences
                std::vector<double> mean(static_cast<std::size_t>(L) * H * V, 0.0);
                std::istringstream min = open_csv(
                    require("predictions/" + date + "/" + spec_code + "_mean.csv", "predict"),
                    "model,location,target_date,clade,value");
                while (std::getline(min, line)) {
                    if (line.empty()) continue;
                    split_csv(line, f);
                    if (f.size() != 5)
                        throw std::runtime_error("bad mean-prevalence row for " + date + "/" +
                                                 spec_code);
                    mean[(static_cast<std::size_t>(locate(f[1])) * H + horizon_of(f[2])) * V +
                         eval.clades.category_of(f[3])] += std::strtod(f[4].c_str(), nullptr);
                }

                std::ostringstream out;
                out << "model,location,submission_date,horizon,target_date,n_observed,"
                       "energy_score,brier_score\n";
                if (have_prev) {
                    ModelSpec spec = ModelSpec::parse(spec_code);
                    CountSimConfig sim;
                    sim.sims_per_draw = cfg_.predict.sims_per_draw;
                    sim.dm_sample_theta = cfg_.predict.dm_sample_theta &&
                                          spec.emission == Emission::DirichletMultinomial;
                    std::vector<std::int64_t> observed(V);
                    for (int l = 0; l < L; ++l) {
                        for (int h = 0; h < H; ++h) {
                            auto t = eval.day_index(grid.dates[h]);
                            std::int64_t n = 0;
                            for (int v = 0; v < V; ++v) {
                                observed[v] = t ? eval.count(l, *t, v) : 0;
                                n += observed[v];
                            }
                            if (n == 0) continue;  // outside the horizon set
                            const std::string cell = date + "|" + spec_code + "|" +
                                                     eval.locations[l] + "|" +
                                                     std::to_string(grid.horizons[h]);
                            Rng sim_rng(derive_seed(cfg_.seed, "sim|" + cell));
                            auto ensemble = simulate_cell_counts(prev, l, h, n, sim, sim_rng);
                            Rng pair_rng(derive_seed(cfg_.seed, "pairs|" + cell));
                            double es = energy_score(ensemble, V, observed, cfg_.score.norm,
                                                     cfg_.score.pair_samples, pair_rng);
                            std::span<const double> cell_mean(
                                mean.data() + (static_cast<std::size_t>(l) * H + h) * V,
                                static_cast<std::size_t>(V));
                            double bs = brier_score(cell_mean, observed);
                            out << spec_code << ',' << eval.locations[l] << ',' << date << ','
                                << grid.horizons[h] << ',' << grid.dates[h].iso() << ',' << n
                                << ',' << opt_num(es) << ',' << opt_num(bs) << '\n';
                        }
                    }
                }
                atomic_write_file(manifest_.abs(rel), out.str());
                std::lock_guard<std::mutex> g(mu);
                manifest_.record(rel);
                std::cout << "[score] " << date << " " << spec_code << " ok\n";
            });
        }
    }
    run_tasks(cfg_.workers, tasks);
}

void Pipeline::report() {
    const auto dates = submission_dates();
    const auto specs = cfg_.resolved_specs();

    struct Cell {
        std::vector<double> energy, brier;
    };
    std::map<std::string, std::map<std::string, Cell>> by_date;  // date -> model -> scores
    std::map<std::string, std::map<std::string, Cell>> by_loc;   // location -> model
    std::map<std::string, Cell> overall;                         // model

    std::string line;
    std::vector<std::string> f;
    for (Date s : dates) {
        for (const auto& spec_code : specs) {
            std::istringstream in = open_csv(
                require("scores/" + s.iso() + "/" + spec_code + ".csv", "score"),
                "model,location,submission_date,horizon,target_date,n_observed,energy_score,"
                "brier_score");
            while (std::getline(in, line)) {
                if (line.empty()) continue;
                split_csv(line, f);
                if (f.size() != 8) throw std::runtime_error("bad score row: " + line);
                double es = parse_opt_double(f[6]), bs = parse_opt_double(f[7]);
                auto& d = by_date[f[2]][f[0]];
                auto& l = by_loc[f[1]][f[0]];
                auto& o = overall[f[0]];
                d.energy.push_back(es);
                d.brier.push_back(bs);
                l.energy.push_back(es);
                l.brier.push_back(bs);
                o.energy.push_back(es);
                o.brier.push_back(bs);
            }
        }
    }

    auto log_rel = [](double a, double b) {
        if (!std::isfinite(a) || !std::isfinite(b) || a <= 0.0 || b <= 0.0) return kNaN;
        return std::log(a / b);
    };

    // per-location training volume orders the by-location report
    std::map<std::string, std::int64_t> train_totals;
    for (Date s : dates) {
        CountDataset training =
            read_dataset(require("data/" + s.iso() + "/training.csv", "build"),
                         require("data/" + s.iso() + "/training.json", "build"));
        for (int l = 0; l < training.num_locations(); ++l) {
            std::int64_t acc = 0;
            for (int t = 0; t < training.num_days; ++t) acc += training.total(l, t);
            train_totals[training.locations[l]] += acc;
        }
    }

    std::ostringstream date_csv;
    date_csv << "submission_date,model,mean_energy,median_energy,mean_brier,median_brier,"
                "log_rel_energy,log_rel_brier\n";
    std::ostringstream series_csv;
    series_csv << "submission_date,models,median_log_rel_energy,min_log_rel_energy,"
                  "max_log_rel_energy,median_log_rel_brier,min_log_rel_brier,"
                  "max_log_rel_brier\n";
    for (Date s : dates) {
        auto it = by_date.find(s.iso());
        if (it == by_date.end()) continue;
        double base_e = kNaN, base_b = kNaN;
        if (auto b = it->second.find("baseline"); b != it->second.end()) {
            base_e = finite_mean(b->second.energy);
            base_b = finite_mean(b->second.brier);
        }
        std::vector<double> rel_e, rel_b;
        for (const auto& spec_code : specs) {
            auto m = it->second.find(spec_code);
            if (m == it->second.end()) continue;
            double me = finite_mean(m->second.energy), mb = finite_mean(m->second.brier);
            double re = log_rel(me, base_e), rb = log_rel(mb, base_b);
            date_csv << s.iso() << ',' << spec_code << ',' << opt_num(me) << ','
                     << opt_num(finite_median(m->second.energy)) << ',' << opt_num(mb) << ','
                     << opt_num(finite_median(m->second.brier)) << ',' << opt_num(re) << ','
                     << opt_num(rb) << '\n';
            if (spec_code != "baseline") {
                rel_e.push_back(re);
                rel_b.push_back(rb);
            }
        }
        if (!rel_e.empty()) {
            auto fin_min = [](const std::vector<double>& v) {
                double out = kNaN;
                for (double x : v)
                    if (std::isfinite(x) && !(out < x)) out = std::isfinite(out) ? std::min(out, x) : x;
                return out;
            };
            auto fin_max = [](const std::vector<double>& v) {
                double out = kNaN;
                for (double x : v)
                    if (std::isfinite(x)) out = std::isfinite(out) ? std::max(out, x) : x;
                return out;
            };
            series_csv << s.iso() << ',' << rel_e.size() << ','
                       << opt_num(finite_median(rel_e)) << ',' << opt_num(fin_min(rel_e)) << ','
                       << opt_num(fin_max(rel_e)) << ',' << opt_num(finite_median(rel_b)) << ','
                       << opt_num(fin_min(rel_b)) << ',' << opt_num(fin_max(rel_b)) << '\n';
        }
    }

    std::vector<std::string> locs;
    for (const auto& [loc, _] : by_loc) locs.push_back(loc);
    std::sort(locs.begin(), locs.end(), [&](const std::string& a, const std::string& b) {
        std::int64_t ta = train_totals.count(a) ? train_totals.at(a) : 0;
        std::int64_t tb = train_totals.count(b) ? train_totals.at(b) : 0;
        if (ta != tb) return ta > tb;
        return a < b;
    });
    std::ostringstream loc_csv;
    loc_csv << "location,model,training_sequences,mean_energy,median_energy,mean_brier,"
               "median_brier,log_rel_energy,log_rel_brier\n";
    for (const auto& loc : locs) {
        const auto& models = by_loc.at(loc);
        double base_e = kNaN, base_b = kNaN;
        if (auto b = models.find("baseline"); b != models.end()) {
            base_e = finite_mean(b->second.energy);
            base_b = finite_mean(b->second.brier);
        }
        for (const auto& spec_code : specs) {
            auto m = models.find(spec_code);
            if (m == models.end()) continue;
            double me = finite_mean(m->second.energy), mb = finite_mean(m->second.brier);
            loc_csv << loc << ',' << spec_code << ','
                    << (train_totals.count(loc) ? train_totals.at(loc) : 0) << ',' << opt_num(me)
                    << ',' << opt_num(finite_median(m->second.energy)) << ',' << opt_num(mb)
                    << ',' << opt_num(finite_median(m->second.brier)) << ','
                    << opt_num(log_rel(me, base_e)) << ',' << opt_num(log_rel(mb, base_b))
                    << '\n';
        }
    }

    std::ostringstream all_csv;
    all_csv << "model,mean_energy,median_energy,mean_brier,median_brier,log_rel_energy,"
               "log_rel_brier\n";
    double base_e = kNaN, base_b = kNaN;
    if (auto b = overall.find("baseline"); b != overall.end()) {
        base_e = finite_mean(b->second.energy);
        base_b = finite_mean(b->second.brier);
    }
    for (const auto& spec_code : specs) {
        auto m = overall.find(spec_code);
        if (m == overall.end()) continue;
        double me = finite_mean(m->second.energy), mb = finite_mean(m->second.brier);
        all_csv << spec_code << ',' << opt_num(me) << ','
                << opt_num(finite_median(m->second.energy)) << ',' << opt_num(mb) << ','
                << opt_num(finite_median(m->second.brier)) << ',' << opt_num(log_rel(me, base_e))
                << ',' << opt_num(log_rel(mb, base_b)) << '\n';
    }

    atomic_write_file(manifest_.abs("report/by_date.csv"), date_csv.str());
    atomic_write_file(manifest_.abs("report/by_date_series.csv"), series_csv.str());
    atomic_write_file(manifest_.abs("report/by_location.csv"), loc_csv.str());
    atomic_write_file(manifest_.abs("report/overall.csv"), all_csv.str());
    manifest_.record_batch({"report/by_date.csv", "report/by_date_series.csv",
                            "report/by_location.csv", "report/overall.csv"});
    std::cout << "[report] " << locs.size() << " locations, " << by_date.size() << " dates\n";
}

int Pipeline::verify(std::ostream& log) const {
    int problems = 0;
    for (const auto& [rel, hash] : manifest_.entries()) {
        const std::string path = manifest_.abs(rel);
        if (!file_exists(path)) {
            log << "missing " << rel << "\n";
            ++problems;
        } else if (sha256_file(path) != hash) {
            log << "mismatch " << rel << "\n";
            ++problems;
        } else {
            log << "ok " << rel << "\n";
        }
    }
    return problems;
}

}  // namespace cladecast
