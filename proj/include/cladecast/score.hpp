#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cladecast/rng.hpp"

namespace cladecast {

// Distance driving the energy score. Euclidean is the proper choice;
// SumOfSquares (the squared-distance reading, selectable as "paper")
// collapses to the squared error of the ensemble mean and is kept for
// comparison runs.
enum class EnergyNorm { Euclidean, SumOfSquares };

EnergyNorm parse_energy_norm(const std::string& name);  // accepts "paper" too
std::string energy_norm_name(EnergyNorm norm);

// Sample energy score of an ensemble (flat N x V, row-major) against one
// observed vector: mean distance to the observation minus half the mean
// pairwise distance (V-statistic convention). The euclidean pairwise term
// over ensembles larger than pair_samples members is estimated, unbiased,
// from that many members sampled without replacement; pair_samples <= 0
// forces the exact double sum. SumOfSquares always uses the exact O(N*V)
// moment identity.
double energy_score(std::span<const std::int64_t> ensemble, int V,
                    std::span<const std::int64_t> observed, EnergyNorm norm, int pair_samples,
                    Rng& rng);

// Multi-category Brier score of a mean prevalence vector against observed
// proportions; NaN when nothing was observed.
double brier_score(std::span<const double> mean_prevalence,
                   std::span<const std::int64_t> observed);

// Aggregation helpers ignoring NaN entries; NaN when none are finite.
double finite_mean(std::span<const double> values);
double finite_median(std::span<const double> values);

}  // namespace cladecast
