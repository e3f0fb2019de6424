#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "cladecast/dataset.hpp"
#include "cladecast/pipeline.hpp"
#include "cladecast/util.hpp"

using namespace cladecast;
namespace fs = std::filesystem;

namespace {

std::string smoke_config(const std::string& out_dir) {
    return R"({
  "out_dir": ")" + out_dir + R"(",
  "seed": 42,
  "workers": 2,
  "schedule": {"start_date": "2024-01-03", "num_weeks": 1},
  "specs": ["SLM", "baseline"],
  "sampler": {"warmup": 100, "samples": 120},
  "predict": {"draws": 10, "sims_per_draw": 10},
  "synth": {
    "num_locations": 2, "num_categories": 3, "degree": 2,
    "end_date": "2024-01-03", "history_days": 151, "forecast_days": 10,
    "mean_daily_samples": 25, "report_delay_mean": 3.0, "seed": 7,
    "mu": [0.5, -0.5, 1.0, -1.0], "sigma": [0.3, 0.3, 0.3, 0.3]
  }
})";
}

int count_lines(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    int n = 0;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) ++n;
    return n;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const char* name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
};

}  // namespace

TEST_CASE("config parsing and normalization") {
    PipelineConfig c = PipelineConfig::from_json_text(smoke_config("/tmp/x"));
    CHECK(c.out_dir == "/tmp/x");
    CHECK(c.seed == 42);
    CHECK(c.workers == 2);
    CHECK(c.start_date == Date(2024, 1, 3));
    CHECK(c.specs == std::vector<std::string>{"SLM", "baseline"});
    CHECK(c.sampler.warmup == 100);
    CHECK(c.sampler.chains == 1);
    CHECK(c.predict.draws == 10);
    CHECK(c.score.pair_samples == 500);
    REQUIRE(c.synth.has_value());
    CHECK(c.synth->num_locations == 2);

    // the semantic form drops out_dir and workers
    PipelineConfig c2 = PipelineConfig::from_json_text(smoke_config("/tmp/y"));
    c2.workers = 9;
    CHECK(c.to_json_text() == c2.to_json_text());

    // unknown keys are fatal at any level
    CHECK_THROWS_WITH_AS(PipelineConfig::from_json_text(R"({"outdir": "x"})"),
                         doctest::Contains("outdir"), std::runtime_error);
    CHECK_THROWS_AS(PipelineConfig::from_json_text(R"({"sampler": {"warmups": 1}})"),
                    std::runtime_error);
    CHECK_THROWS_AS(
        PipelineConfig::from_json_text(R"({"schedule": {"start_date": "2024-01-03 "}})"),
        std::invalid_argument);  // strict ISO dates

    // spec expansion and validation
    PipelineConfig all = PipelineConfig::from_json_text(R"({"specs": ["all"]})");
    CHECK(all.resolved_specs().size() == 13);
    CHECK_THROWS(PipelineConfig::from_json_text(R"({"specs": ["SLX"]})").resolved_specs());
    PipelineConfig dup = PipelineConfig::from_json_text(R"({"specs": ["SLM", "SLM", "ILD"]})");
    CHECK(dup.resolved_specs() == std::vector<std::string>{"SLM", "ILD"});

    // norm aliases
    PipelineConfig paper = PipelineConfig::from_json_text(R"({"score": {"norm": "paper"}})");
    CHECK(paper.score.norm == EnergyNorm::SumOfSquares);
}

TEST_CASE("resolved locations") {
    PipelineConfig c = PipelineConfig::from_json_text(smoke_config("/tmp/x"));
    CHECK(c.resolved_locations() == std::vector<std::string>{"AA", "AB"});
    PipelineConfig expl =
        PipelineConfig::from_json_text(R"({"locations": ["GA", "CA", "GA"]})");
    CHECK(expl.resolved_locations() == std::vector<std::string>{"CA", "GA"});
    PipelineConfig none = PipelineConfig::from_json_text("{}");
    CHECK(none.resolved_locations().size() == 52);  // built-in jurisdictions
}

TEST_CASE("manifest resume and config guard") {
    TempDir dir("cc_manifest_test");
    {
        Manifest m(dir.str(), "hash-a");
        atomic_write_file(m.abs("a.txt"), "hello");
        m.record("a.txt");
        CHECK(m.is_current("a.txt"));
        CHECK(!m.is_current("b.txt"));
    }
    {
        Manifest m(dir.str(), "hash-a");  // same config resumes
        CHECK(m.is_current("a.txt"));
        atomic_write_file(m.abs("a.txt"), "changed");
        CHECK(!m.is_current("a.txt"));  // content hash mismatch
    }
    {
        Manifest m(dir.str(), "hash-b");  // different config starts clean
        CHECK(!m.is_current("a.txt"));
    }
}

TEST_CASE("full pipeline on a tiny synthetic schedule") {
    TempDir dir("cc_pipe_e2e");
    Pipeline p(PipelineConfig::from_json_text(smoke_config(dir.str())));
    p.simulate();
    p.build();
    p.fit();
    p.predict();
    p.score();
    p.report();
    std::ostringstream log;
    CHECK(p.verify(log) == 0);

    const std::string date = "2024-01-03";
    // stored prevalence sets hold exactly `draws` draws per cell
    int rows = count_lines(dir.str() + "/predictions/" + date + "/SLM.csv") - 1;
    CHECK(rows == 2 * 42 * 3 * 10);  // L * H * V * draws
    int mean_rows = count_lines(dir.str() + "/predictions/" + date + "/SLM_mean.csv") - 1;
    CHECK(mean_rows == 2 * 42 * 3);
    // fit artifacts keep every retained draw
    std::string head = read_file(dir.str() + "/fits/" + date + "/SLM.json");
    CHECK(head.find("\"num_draws\": 120") != std::string::npos);
    // score rows only where sequences were observed
    int score_rows = count_lines(dir.str() + "/scores/" + date + "/SLM.csv") - 1;
    CHECK(score_rows > 0);
    CHECK(score_rows <= 2 * 42);
    // report artifacts exist with headers
    CHECK(count_lines(dir.str() + "/report/overall.csv") == 3);  // header + 2 models

    // a second run over the same directory is a no-op that stays verified
    Pipeline again(PipelineConfig::from_json_text(smoke_config(dir.str())));
    again.fit();
    again.score();
    std::ostringstream log2;
    CHECK(again.verify(log2) == 0);
}

TEST_CASE("zero-total days are excluded from the horizon set") {
    TempDir dir("cc_pipe_h");
    // tiny daily mean forces empty days inside the evaluation window
    std::string cfg = smoke_config(dir.str());
    cfg.replace(cfg.find("\"mean_daily_samples\": 25"), 24, "\"mean_daily_samples\": 0.8");
    Pipeline p(PipelineConfig::from_json_text(cfg));
    p.simulate();
    p.build();
    p.fit();
    p.predict();
    p.score();

    CountDataset eval = read_dataset(dir.str() + "/data/2024-01-03/eval.csv",
                                     dir.str() + "/data/2024-01-03/eval.json");
    int nonzero = 0;
    for (int l = 0; l < eval.num_locations(); ++l)
        for (int t = 0; t < eval.num_days; ++t)
            if (eval.total(l, t) > 0) ++nonzero;
    REQUIRE(nonzero < 2 * 42);  // the scenario actually has gaps
    int score_rows = count_lines(dir.str() + "/scores/2024-01-03/SLM.csv") - 1;
    CHECK(score_rows == nonzero);
}

TEST_CASE("degenerate dates flow through as flagged empties") {
    TempDir dir("cc_pipe_degen");
    // submission date long after the synthetic stream ends: no records in
    // the selection window, so no clades qualify
    std::string cfg = smoke_config(dir.str());
    cfg.replace(cfg.find("\"start_date\": \"2024-01-03\""), 26, "\"start_date\": \"2025-06-04\"");
    Pipeline p(PipelineConfig::from_json_text(cfg));
    p.simulate();
    p.build();
    p.fit();
    p.predict();
    p.score();
    p.report();
    std::string head = read_file(dir.str() + "/fits/2025-06-04/SLM.json");
    CHECK(head.find("\"degenerate\": true") != std::string::npos);
    CHECK(count_lines(dir.str() + "/predictions/2025-06-04/SLM.csv") == 1);  // header only
    CHECK(count_lines(dir.str() + "/scores/2025-06-04/SLM.csv") == 1);
    std::ostringstream log;
    CHECK(p.verify(log) == 0);
}

TEST_CASE("missing upstream artifacts name the producing command") {
    TempDir dir("cc_pipe_missing");
    Pipeline p(PipelineConfig::from_json_text(smoke_config(dir.str())));
    CHECK_THROWS_WITH_AS(p.fit(), doctest::Contains("`build`"), std::runtime_error);
    CHECK_THROWS_WITH_AS(p.predict(), doctest::Contains("`fit`"), std::runtime_error);
    CHECK_THROWS_WITH_AS(p.score(), doctest::Contains("`build`"), std::runtime_error);
    CHECK_THROWS_WITH_AS(p.report(), doctest::Contains("`score`"), std::runtime_error);
    // neither metadata nor synth configured
    PipelineConfig bare = PipelineConfig::from_json_text(
        R"({"out_dir": ")" + dir.str() +
        R"(", "schedule": {"start_date": "2024-01-03", "num_weeks": 1}})");
    Pipeline q(bare);
    CHECK_THROWS_AS(q.build(), std::runtime_error);
    CHECK_THROWS_AS(q.simulate(), std::runtime_error);
}

TEST_CASE("pooled aggregate equals the horizon-weighted location mean") {
    TempDir dir("cc_pipe_agg");
    Pipeline p(PipelineConfig::from_json_text(smoke_config(dir.str())));
    p.simulate();
    p.build();
    p.fit();
    p.predict();
    p.score();
    p.report();
    // overall mean must equal the |H|-weighted mean of per-location means,
    // both computed from the same score rows
    std::ifstream in(dir.str() + "/scores/2024-01-03/SLM.csv");
    std::string line;
    std::getline(in, line);
    double total = 0.0;
    std::map<std::string, std::pair<double, int>> by_loc;
    int n = 0;
    while (std::getline(in, line)) {
        auto c1 = line.find(','), c2 = line.find(',', c1 + 1);
        std::string loc = line.substr(c1 + 1, c2 - c1 - 1);
        auto last = line.rfind(',');
        auto prev = line.rfind(',', last - 1);
        double es = std::stod(line.substr(prev + 1, last - prev - 1));
        total += es;
        by_loc[loc].first += es;
        by_loc[loc].second += 1;
        ++n;
    }
    REQUIRE(n > 0);
    double weighted = 0.0;
    for (auto& [loc, acc] : by_loc) weighted += acc.first;
    CHECK(total / n == doctest::Approx(weighted / n).epsilon(1e-12));

    // and the overall report row carries that same pooled mean
    std::ifstream all(dir.str() + "/report/overall.csv");
    std::getline(all, line);  // header
    double reported = -1.0;
    while (std::getline(all, line)) {
        if (line.rfind("SLM,", 0) == 0) {
            auto c1 = line.find(',');
            auto c2 = line.find(',', c1 + 1);
            reported = std::stod(line.substr(c1 + 1, c2 - c1 - 1));
        }
    }
    CHECK(reported == doctest::Approx(total / n).epsilon(1e-8));
}
