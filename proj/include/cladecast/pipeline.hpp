#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "cladecast/dataset.hpp"
#include "cladecast/dates.hpp"
#include "cladecast/metadata.hpp"
#include "cladecast/model.hpp"
#include "cladecast/sampler.hpp"
#include "cladecast/score.hpp"
#include "cladecast/synth.hpp"

namespace cladecast {

struct PredictConfig {
    int draws = 100;  // posterior draws kept per fit (evenly thinned)
    int sims_per_draw = 100;
    bool dm_sample_theta = false;
};

struct ScoreConfig {
    EnergyNorm norm = EnergyNorm::Euclidean;
    int pair_samples = 500;  // members used for the pairwise term; <= 0 exact
};

struct PipelineConfig {
    std::string out_dir = "out";
    std::uint64_t seed = 1;
    int workers = 0;  // <= 0: all hardware threads

    std::string metadata_path;               // input surveillance TSV
    std::string jurisdictions = "builtin";   // "builtin" or a list file
    std::vector<std::string> locations;      // explicit codes (overrides)
    MetadataColumns columns;

    Date start_date;  // first submission Wednesday
    int num_weeks = 1;
    std::vector<std::string> specs{"all"};  // model codes, or "all"

    SamplerConfig sampler;
    PredictConfig predict;
    ScoreConfig score;
    std::optional<SynthConfig> synth;

    // Parses a config document; unknown keys are fatal to catch typos.
    static PipelineConfig from_json_text(const std::string& text);
    std::string to_json_text() const;  // normalized effective form

    std::vector<std::string> resolved_specs() const;
    std::vector<std::string> resolved_locations() const;
    JurisdictionTable jurisdiction_table() const;
};

// out_dir/manifest.json: artifact path -> content hash, written atomically
// after every completed task; already-hashed matching outputs are skipped
// on rerun. A config hash guards against resuming someone else's layout.
class Manifest {
  public:
    Manifest(std::string dir, std::string config_hash, std::string run_info_json = "");

    bool is_current(const std::string& rel_path) const;  // exists + hash matches
    void record(const std::string& rel_path);            // hash now + persist
    void record_batch(const std::vector<std::string>& rel_paths);

    const std::map<std::string, std::string>& entries() const { return entries_; }
    std::string abs(const std::string& rel_path) const;

  private:
    void load();
    void persist() const;

    std::string dir_;
    std::string config_hash_;
    std::string run_info_;  // serialized run descriptor embedded verbatim
    std::map<std::string, std::string> entries_;  // rel path -> sha256
};

class Pipeline {
  public:
    explicit Pipeline(PipelineConfig cfg);

    const PipelineConfig& config() const { return cfg_; }

    void simulate();
    void build();
    void fit();
    void predict();
    void score();
    void report();
    // Rehashes every manifest entry; returns the number of missing or
    // mismatched artifacts after logging one line each.
    int verify(std::ostream& log) const;

    std::vector<Date> submission_dates() const;

  private:
    std::string metadata_path() const;
    std::vector<SequenceRecord> load_records() const;
    // Absolute path of an existing artifact, or an error naming the command
    // that produces it.
    std::string require(const std::string& rel_path, const std::string& producer) const;

    PipelineConfig cfg_;
    Manifest manifest_;
};

}  // namespace cladecast
