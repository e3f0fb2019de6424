#include "cladecast/dataset.hpp"

#include <algorithm>
#include <array>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "cladecast/util.hpp"

namespace cladecast {

using json = nlohmann::ordered_json;

int CladeSet::category_of(const std::string& clade) const {
    auto it = std::lower_bound(modeled.begin(), modeled.end(), clade);
    if (it != modeled.end() && *it == clade) return static_cast<int>(it - modeled.begin());
    return static_cast<int>(modeled.size());
}

std::int64_t CountDataset::total(int l, int t) const {
    std::int64_t n = 0;
    for (int v = 0; v < num_categories(); ++v) n += count(l, t, v);
    return n;
}

std::optional<int> CountDataset::day_index(Date d) const {
    std::int64_t off = d - window_start;
    if (off < 0 || off >= num_days) return std::nullopt;
    return static_cast<int>(off);
}

std::int64_t CountDataset::total_sequences() const {
    std::int64_t n = 0;
    for (std::int64_t c : counts) n += c;
    return n;
}

Date selection_window_start(Date submission_date) {
    // Saturday ending the last complete MMWR week before the submission week.
    Date week_end = mmwr_week_start(mmwr_week(submission_date)) - 1;
    return week_end - 20;  // Sunday three weeks back
}

CladeSet select_clades(const std::vector<SequenceRecord>& records, Date submission_date) {
    Date start = selection_window_start(submission_date);
    // Per-clade counts in each of the three weeks plus week totals.
    std::map<std::string, std::array<std::int64_t, 3>> week_counts;
    std::array<std::int64_t, 3> week_totals{0, 0, 0};
    for (const auto& r : records) {
        if (r.report_date > submission_date) continue;
        std::int64_t off = r.collection_date - start;
        if (off < 0 || off >= 21) continue;
        int w = static_cast<int>(off / 7);
        week_totals[w] += 1;
        if (r.clade == kReferenceLabel) continue;  // the literal label never qualifies
        auto& row = week_counts.try_emplace(r.clade, std::array<std::int64_t, 3>{0, 0, 0})
                        .first->second;
        row[w] += 1;
    }

    struct Candidate {
        std::string clade;
        std::int64_t total;
    };
    std::vector<Candidate> qualified;
    for (const auto& [clade, row] : week_counts) {
        bool above = false;
        for (int w = 0; w < 3; ++w) {
            if (week_totals[w] > 0 &&
                100 * row[w] >= week_totals[w])  // proportion >= 0.01, exact in integers
                above = true;
        }
        if (above) qualified.push_back({clade, row[0] + row[1] + row[2]});
    }
    if (static_cast<int>(qualified.size()) > kMaxModeledClades) {
        std::sort(qualified.begin(), qualified.end(), [](const Candidate& a, const Candidate& b) {
            if (a.total != b.total) return a.total > b.total;
            return a.clade < b.clade;
        });
        qualified.resize(kMaxModeledClades);
    }

    CladeSet out;
    out.modeled.reserve(qualified.size());
    for (const auto& c : qualified) out.modeled.push_back(c.clade);
    std::sort(out.modeled.begin(), out.modeled.end());
    return out;
}

namespace {

int location_index(const std::vector<std::string>& locations, const std::string& code) {
    auto it = std::lower_bound(locations.begin(), locations.end(), code);
    if (it == locations.end() || *it != code) return -1;
    return static_cast<int>(it - locations.begin());
}

CountDataset make_empty(Date submission, Date as_of, Date window_start, int num_days,
                        const CladeSet& clades, const std::vector<std::string>& locations) {
    if (!std::is_sorted(locations.begin(), locations.end()))
        throw std::invalid_argument("locations must be sorted");
    CountDataset d;
    d.submission_date = submission;
    d.as_of = as_of;
    d.window_start = window_start;
    d.num_days = num_days;
    d.clades = clades;
    d.locations = locations;
    d.counts.assign(static_cast<std::size_t>(locations.size()) * num_days *
                        clades.num_categories(),
                    0);
    return d;
}

void tally(CountDataset& d, const std::vector<SequenceRecord>& records) {
    for (const auto& r : records) {
        if (r.report_date > d.as_of) continue;
        auto t = d.day_index(r.collection_date);
        if (!t) continue;
        int l = location_index(d.locations, r.location);
        if (l < 0) continue;
        d.at(l, *t, d.clades.category_of(r.clade)) += 1;
    }
}

}  // namespace

AsOfDataset build_asof_dataset(const std::vector<SequenceRecord>& records, Date submission_date,
                               const CladeSet& clades, const std::vector<std::string>& locations) {
    AsOfDataset d = make_empty(submission_date, submission_date, submission_date - kLookbackDays,
                               kLookbackDays + 1, clades, locations);
    tally(d, records);
    return d;
}

EvaluationDataset build_eval_dataset(const std::vector<SequenceRecord>& records,
                                     Date submission_date, const CladeSet& training_clades,
                                     const std::vector<std::string>& locations) {
    EvaluationDataset d =
        make_empty(submission_date, submission_date + kEvaluationLagDays,
                   submission_date - kNowcastDays, kNowcastDays + kForecastDays + 1,
                   training_clades, locations);
    tally(d, records);
    return d;
}

void write_dataset_csv(const CountDataset& data, const std::string& csv_path) {
    std::ostringstream out;
    out << "location,date,clade,count\n";
    int V = data.num_categories();
    for (int l = 0; l < data.num_locations(); ++l) {
        for (int t = 0; t < data.num_days; ++t) {
            for (int v = 0; v < V; ++v) {
                std::int64_t n = data.count(l, t, v);
                if (n == 0) continue;
                const std::string& clade =
                    v + 1 == V ? std::string(kReferenceLabel) : data.clades.modeled[v];
                out << data.locations[l] << ',' << data.day_date(t).iso() << ',' << clade << ','
                    << n << '\n';
            }
        }
    }
    atomic_write_file(csv_path, out.str());
}

void write_dataset_sidecar(const CountDataset& data, const std::string& json_path, bool evaluation,
                           const DropCounts* drops) {
    json j;
    j["kind"] = evaluation ? "evaluation" : "training";
    j["submission_date"] = data.submission_date.iso();
    j["as_of"] = data.as_of.iso();
    j["window"] = {{"start", data.window_start.iso()},
                   {"end", (data.window_start + (data.num_days - 1)).iso()}};
    j["clades"] = {{"modeled", data.clades.modeled}, {"reference", kReferenceLabel}};
    j["degenerate"] = data.clades.degenerate();
    j["locations"] = data.locations;
    j["total_sequences"] = data.total_sequences();
    if (drops) {
        json d;
        d["malformed_row"] = drops->malformed_row;
        d["non_human_host"] = drops->non_human_host;
        d["out_of_scope_country"] = drops->out_of_scope_country;
        d["out_of_scope_location"] = drops->out_of_scope_location;
        d["partial_collection_date"] = drops->partial_collection_date;
        d["partial_report_date"] = drops->partial_report_date;
        d["inconsistent_dates"] = drops->inconsistent_dates;
        d["empty_clade"] = drops->empty_clade;
        j["drop_counts"] = d;
    }
    atomic_write_file(json_path, j.dump(2) + "\n");
}

CountDataset read_dataset(const std::string& csv_path, const std::string& json_path) {
    json j = json::parse(read_file(json_path));
    CountDataset d;
    d.submission_date = parse_date(j.at("submission_date").get<std::string>());
    d.as_of = parse_date(j.at("as_of").get<std::string>());
    d.window_start = parse_date(j.at("window").at("start").get<std::string>());
    Date window_end = parse_date(j.at("window").at("end").get<std::string>());
    d.num_days = static_cast<int>(window_end - d.window_start) + 1;
    d.clades.modeled = j.at("clades").at("modeled").get<std::vector<std::string>>();
    d.locations = j.at("locations").get<std::vector<std::string>>();
    d.counts.assign(static_cast<std::size_t>(d.locations.size()) * d.num_days *
                        d.clades.num_categories(),
                    0);

    std::istringstream in(read_file(csv_path));
    std::string line;
    if (!std::getline(in, line) || line.rfind("location,date,clade,count", 0) != 0)
        throw std::runtime_error("bad dataset header: " + csv_path);
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::array<std::string, 4> f;
        std::size_t pos = 0;
        for (int i = 0; i < 3; ++i) {
            std::size_t comma = line.find(',', pos);
            if (comma == std::string::npos)
                throw std::runtime_error(csv_path + ": malformed row at line " +
                                         std::to_string(lineno));
            f[i] = line.substr(pos, comma - pos);
            pos = comma + 1;
        }
        f[3] = line.substr(pos);
        int l = location_index(d.locations, f[0]);
        auto t = d.day_index(parse_date(f[1]));
        if (l < 0 || !t)
            throw std::runtime_error(csv_path + ": out-of-window row at line " +
                                     std::to_string(lineno));
        d.at(l, *t, d.clades.category_of(f[2])) += std::stoll(f[3]);
    }
    return d;
}

}  // namespace cladecast
