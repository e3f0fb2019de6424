#include "cladecast/metadata.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "cladecast/util.hpp"

namespace cladecast {

namespace {

struct NameCode {
    const char* code;
    const char* name;
};

constexpr NameCode kBuiltinJurisdictions[] = {
    {"AL", "Alabama"},        {"AK", "Alaska"},       {"AZ", "Arizona"},
    {"AR", "Arkansas"},       {"CA", "California"},   {"CO", "Colorado"},
    {"CT", "Connecticut"},    {"DE", "Delaware"},     {"DC", "Washington DC"},
    {"FL", "Florida"},        {"GA", "Georgia"},      {"HI", "Hawaii"},
    {"ID", "Idaho"},          {"IL", "Illinois"},     {"IN", "Indiana"},
    {"IA", "Iowa"},           {"KS", "Kansas"},       {"KY", "Kentucky"},
    {"LA", "Louisiana"},      {"ME", "Maine"},        {"MD", "Maryland"},
    {"MA", "Massachusetts"},  {"MI", "Michigan"},     {"MN", "Minnesota"},
    {"MS", "Mississippi"},    {"MO", "Missouri"},     {"MT", "Montana"},
    {"NE", "Nebraska"},       {"NV", "Nevada"},       {"NH", "New Hampshire"},
    {"NJ", "New Jersey"},     {"NM", "New Mexico"},   {"NY", "New York"},
    {"NC", "North Carolina"}, {"ND", "North Dakota"}, {"OH", "Ohio"},
    {"OK", "Oklahoma"},       {"OR", "Oregon"},       {"PA", "Pennsylvania"},
    {"PR", "Puerto Rico"},    {"RI", "Rhode Island"}, {"SC", "South Carolina"},
    {"SD", "South Dakota"},   {"TN", "Tennessee"},    {"TX", "Texas"},
    {"UT", "Utah"},           {"VT", "Vermont"},      {"VA", "Virginia"},
    {"WA", "Washington"},     {"WV", "West Virginia"},{"WI", "Wisconsin"},
    {"WY", "Wyoming"},
};

void split_tabs(const std::string& line, std::vector<std::string>& out) {
    out.clear();
    std::size_t begin = 0;
    for (;;) {
        const std::size_t tab = line.find('\t', begin);
        if (tab == std::string::npos) {
            out.push_back(line.substr(begin));
            return;
        }
        out.push_back(line.substr(begin, tab - begin));
        begin = tab + 1;
    }
}

}  // namespace

JurisdictionTable JurisdictionTable::builtin() {
    JurisdictionTable t;
    for (const auto& [code, name] : kBuiltinJurisdictions) {
        t.codes_.emplace_back(code);
        t.name_to_code_[code] = code;
        t.name_to_code_[name] = code;
    }
    // common alternate spellings in public metadata
    t.name_to_code_["District of Columbia"] = "DC";
    std::sort(t.codes_.begin(), t.codes_.end());
    return t;
}

JurisdictionTable JurisdictionTable::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open jurisdiction list: " + path);
    JurisdictionTable t;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const std::size_t tab = line.find('\t');
        const std::string code = line.substr(0, tab);
        t.codes_.push_back(code);
        t.name_to_code_[code] = code;
        if (tab != std::string::npos) {
            const std::string name = line.substr(tab + 1);
            if (!name.empty()) t.name_to_code_[name] = code;
        }
    }
    if (t.codes_.empty()) throw std::runtime_error("empty jurisdiction list: " + path);
    std::sort(t.codes_.begin(), t.codes_.end());
    t.codes_.erase(std::unique(t.codes_.begin(), t.codes_.end()), t.codes_.end());
    return t;
}

JurisdictionTable JurisdictionTable::from_codes(const std::vector<std::string>& codes) {
    if (codes.empty()) throw std::runtime_error("empty jurisdiction code list");
    JurisdictionTable t;
    for (const auto& code : codes) {
        t.codes_.push_back(code);
        t.name_to_code_[code] = code;
    }
    std::sort(t.codes_.begin(), t.codes_.end());
    t.codes_.erase(std::unique(t.codes_.begin(), t.codes_.end()), t.codes_.end());
    return t;
}

std::string JurisdictionTable::resolve(const std::string& name_or_code) const {
    const auto it = name_to_code_.find(name_or_code);
    return it == name_to_code_.end() ? std::string{} : it->second;
}

ParseResult parse_metadata(std::istream& in, const MetadataColumns& columns,
                           const ParseFilter& filter) {
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("metadata stream is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();

    std::vector<std::string> header;
    split_tabs(line, header);
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < header.size(); ++i) index.emplace(header[i], i);

    const auto required = [&](const std::string& name) {
        const auto it = index.find(name);
        if (it == index.end())
            throw std::runtime_error("metadata header is missing column '" + name + "'");
        return it->second;
    };
    const std::size_t col_collect = required(columns.collection_date);
    const std::size_t col_report = required(columns.report_date);
    const std::size_t col_location = required(columns.location);
    const std::size_t col_clade = required(columns.clade);
    const std::size_t col_host = required(columns.host);
    const std::size_t col_country = required(columns.country);
    const std::size_t width = header.size();

    const auto contains = [](const std::vector<std::string>& xs, const std::string& x) {
        return std::find(xs.begin(), xs.end(), x) != xs.end();
    };

    ParseResult result;
    std::vector<std::string> fields;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        split_tabs(line, fields);
        if (fields.size() != width) {
            if (filter.strict)
                throw std::runtime_error("metadata line " + std::to_string(line_no) + ": expected " +
                                         std::to_string(width) + " fields, got " +
                                         std::to_string(fields.size()));
            ++result.drops.malformed_row;
            continue;
        }
        if (!contains(filter.allowed_hosts, fields[col_host])) {
            ++result.drops.non_human_host;
            continue;
        }
        if (!contains(filter.allowed_countries, fields[col_country])) {
            ++result.drops.out_of_scope_country;
            continue;
        }
        const std::string code = filter.jurisdictions.resolve(fields[col_location]);
        if (code.empty()) {
            ++result.drops.out_of_scope_location;
            continue;
        }
        Date collected, reported;
        if (!try_parse_date(fields[col_collect], collected)) {
            ++result.drops.partial_collection_date;
            continue;
        }
        if (!try_parse_date(fields[col_report], reported)) {
            ++result.drops.partial_report_date;
            continue;
        }
        if (reported < collected) {
            ++result.drops.inconsistent_dates;
            continue;
        }
        if (fields[col_clade].empty()) {
            ++result.drops.empty_clade;
            continue;
        }
        result.records.push_back({code, collected, reported, fields[col_clade]});
    }
    return result;
}

ParseResult parse_metadata_file(const std::string& path, const MetadataColumns& columns,
                                const ParseFilter& filter) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open metadata file: " + path);
    return parse_metadata(in, columns, filter);
}

void write_metadata_file(const std::vector<SequenceRecord>& records,
                         const MetadataColumns& columns, const std::string& path,
                         const std::string& host, const std::string& country) {
    std::ostringstream out;
    out << columns.collection_date << '\t' << columns.report_date << '\t' << columns.location
        << '\t' << columns.clade << '\t' << columns.host << '\t' << columns.country << '\n';
    for (const auto& r : records)
        out << r.collection_date.iso() << '\t' << r.report_date.iso() << '\t' << r.location
            << '\t' << r.clade << '\t' << host << '\t' << country << '\n';
    atomic_write_file(path, out.str());
}

}  // namespace cladecast
