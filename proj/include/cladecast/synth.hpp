#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cladecast/dates.hpp"
#include "cladecast/metadata.hpp"

namespace cladecast {

// Synthetic surveillance stream with a known hierarchical truth. Clades are
// labeled "V1".."V{J}" plus the literal reference label; locations get
// generated two-letter codes unless given. Trend coefficients live directly
// in the scaled time of a training window ending at end_date.
struct SynthConfig {
    int num_locations = 4;
    int num_categories = 4;  // V, including the reference
    int degree = 2;          // P
    Date end_date;
    int history_days = 151;   // days up to and including end_date
    int forecast_days = 10;   // days past end_date
    double mean_daily_samples = 200.0;  // Poisson mean per location-day
    // per-location means (length L); overrides the scalar when non-empty
    std::vector<double> location_daily_samples;
    double kappa = 0.0;  // 0: multinomial; >0: Dirichlet scale
    double report_delay_mean = 7.0;     // geometric, in days
    std::uint64_t seed = 1;

    // truth hyper-parameters, indexed p * J + j (J = V - 1)
    std::vector<double> mu;
    std::vector<double> sigma;

    std::vector<std::string> locations;  // optional explicit codes
};

struct SynthResult {
    std::vector<SequenceRecord> records;
    std::vector<std::string> locations;
    std::vector<std::string> clades;   // modeled labels, no reference
    std::vector<double> gamma;         // truth, (l * J + j) * P + p
    double truth_gamma(int l, int j, int p, int J, int P) const {
        return gamma[(static_cast<std::size_t>(l) * J + j) * P + p];
    }
};

SynthResult generate_synth(const SynthConfig& cfg);

// "AA", "AB", ... — the codes used when SynthConfig.locations is empty.
std::vector<std::string> synth_location_codes(int n);

}  // namespace cladecast
