#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "cladecast/dates.hpp"

namespace cladecast {

// One sequenced specimen after filtering. `location` is a two-letter
// jurisdiction code; report_date >= collection_date always holds.
struct SequenceRecord {
    std::string location;
    Date collection_date;
    Date report_date;
    std::string clade;

    auto operator<=>(const SequenceRecord&) const = default;
};

// Maps jurisdiction names (and codes) appearing in metadata files to the
// canonical two-letter codes this pipeline models.
class JurisdictionTable {
  public:
    // 50 US states plus Puerto Rico and Washington D.C. (52 codes).
    static JurisdictionTable builtin();

    // One jurisdiction per line: "CODE<TAB>Name" (name optional).
    static JurisdictionTable from_file(const std::string& path);

    // Codes used verbatim as their own names (synthetic streams).
    static JurisdictionTable from_codes(const std::vector<std::string>& codes);

    // Returns the code for a code or name, or empty if out of scope.
    std::string resolve(const std::string& name_or_code) const;

    const std::vector<std::string>& codes() const { return codes_; }

  private:
    std::vector<std::string> codes_;                // sorted, unique
    std::map<std::string, std::string> name_to_code_;
};

struct MetadataColumns {
    std::string collection_date = "date";
    std::string report_date = "date_submitted";
    std::string location = "division";
    std::string clade = "clade_nextstrain";
    std::string host = "host";
    std::string country = "country";
};

struct ParseFilter {
    std::vector<std::string> allowed_hosts{"Homo sapiens"};
    std::vector<std::string> allowed_countries{"USA"};
    JurisdictionTable jurisdictions = JurisdictionTable::builtin();
    bool strict = false;  // strict: any unparseable row is fatal
};

// Per-reason drop counters. A row is counted under the first check it
// fails (order: structure, host, country, location, collection date,
// report date, date consistency, clade).
struct DropCounts {
    std::int64_t malformed_row = 0;
    std::int64_t non_human_host = 0;
    std::int64_t out_of_scope_country = 0;
    std::int64_t out_of_scope_location = 0;
    std::int64_t partial_collection_date = 0;
    std::int64_t partial_report_date = 0;
    std::int64_t inconsistent_dates = 0;
    std::int64_t empty_clade = 0;

    std::int64_t total() const {
        return malformed_row + non_human_host + out_of_scope_country + out_of_scope_location +
               partial_collection_date + partial_report_date + inconsistent_dates + empty_clade;
    }
};

struct ParseResult {
    std::vector<SequenceRecord> records;
    DropCounts drops;
};

// Parses a tab-separated metadata stream with a header row. Missing
// required columns are fatal (std::runtime_error with the column name).
ParseResult parse_metadata(std::istream& in, const MetadataColumns& columns,
                           const ParseFilter& filter);

ParseResult parse_metadata_file(const std::string& path, const MetadataColumns& columns,
                                const ParseFilter& filter);

// Round-trip counterpart for generated streams: one row per record with
// constant host/country fields, in `columns` order.
void write_metadata_file(const std::vector<SequenceRecord>& records,
                         const MetadataColumns& columns, const std::string& path,
                         const std::string& host = "Homo sapiens",
                         const std::string& country = "USA");

}  // namespace cladecast
