#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cladecast/dates.hpp"
#include "cladecast/metadata.hpp"

namespace cladecast {

inline constexpr const char* kReferenceLabel = "other";
inline constexpr int kMaxModeledClades = 9;
inline constexpr int kLookbackDays = 150;
inline constexpr int kEvaluationLagDays = 91;
inline constexpr int kNowcastDays = 31;   // days before the submission date
inline constexpr int kForecastDays = 10;  // days after the submission date

// The modeled clade labels for one submission date. "other" is always the
// final (reference) category; modeled labels are lexicographically sorted,
// contain no duplicates and never the reference label itself.
struct CladeSet {
    std::vector<std::string> modeled;

    int num_categories() const { return static_cast<int>(modeled.size()) + 1; }  // V
    bool degenerate() const { return modeled.empty(); }

    // Category index of a raw clade label; unlisted labels fold into the
    // reference category (index V-1).
    int category_of(const std::string& clade) const;
};

// Daily counts per (location, day, category) as reported by `as_of`.
// Training vintages cover [submission-150, submission]; evaluation
// vintages cover the 42 target days [submission-31, submission+10] as
// reported 91 days after submission.
struct CountDataset {
    Date submission_date;
    Date as_of;
    Date window_start;
    int num_days = 0;
    CladeSet clades;
    std::vector<std::string> locations;  // sorted two-letter codes
    std::vector<std::int64_t> counts;    // flat [location][day][category]

    int num_locations() const { return static_cast<int>(locations.size()); }
    int num_categories() const { return clades.num_categories(); }

    std::int64_t count(int l, int t, int v) const {
        return counts[(static_cast<std::size_t>(l) * num_days + t) * num_categories() + v];
    }
    std::int64_t& at(int l, int t, int v) {
        return counts[(static_cast<std::size_t>(l) * num_days + t) * num_categories() + v];
    }
    std::int64_t total(int l, int t) const;

    Date day_date(int t) const { return window_start + t; }
    // Day index for a date, or nullopt outside the window.
    std::optional<int> day_index(Date d) const;

    std::int64_t total_sequences() const;
};

using AsOfDataset = CountDataset;
using EvaluationDataset = CountDataset;

// Three complete MMWR weeks before the submission date's week: the last
// week whose Saturday precedes the submission date, and the two before.
// Returns the Sunday starting the earliest of the three.
Date selection_window_start(Date submission_date);

// Clades accounting for at least one percent of national sequences in at
// least one of the three complete MMWR weeks before the submission week,
// capped at the nine largest by three-week count (ties broken by label).
// Only reports available by the submission date are considered; a literal
// "other" label never qualifies. Empty result = degenerate.
CladeSet select_clades(const std::vector<SequenceRecord>& records, Date submission_date);

// Records with report_date <= submission_date, collection_date <=
// submission_date, and collection at most 150 days before submission
// (inclusive boundaries), counted per (location, day, category).
AsOfDataset build_asof_dataset(const std::vector<SequenceRecord>& records, Date submission_date,
                               const CladeSet& clades, const std::vector<std::string>& locations);

// Counts over the 42 target days as reported 91 days after submission,
// with categories aligned to the training CladeSet (unlisted clades fold
// into the reference category).
EvaluationDataset build_eval_dataset(const std::vector<SequenceRecord>& records,
                                     Date submission_date, const CladeSet& training_clades,
                                     const std::vector<std::string>& locations);

// Columnar text form: header "location,date,clade,count", one row per
// nonzero cell, ordered by (location, date, category). The JSON sidecar
// carries the window, clade set and provenance needed to reload.
void write_dataset_csv(const CountDataset& data, const std::string& csv_path);
void write_dataset_sidecar(const CountDataset& data, const std::string& json_path, bool evaluation,
                           const DropCounts* drops);
CountDataset read_dataset(const std::string& csv_path, const std::string& json_path);

}  // namespace cladecast
