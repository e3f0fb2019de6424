#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cladecast/dates.hpp"
#include "cladecast/model.hpp"
#include "cladecast/rng.hpp"
#include "cladecast/sampler.hpp"

namespace cladecast {

// Nowcast/forecast targets: 31 days back through 10 days ahead of the
// submission date, expressed in the training window's scaled time.
struct PredictionGrid {
    Date submission_date;
    std::vector<int> horizons;
    std::vector<Date> dates;
    std::vector<double> t_scaled;

    static PredictionGrid standard(Date submission_date);
    int size() const { return static_cast<int>(horizons.size()); }
};

// Evenly spaced subset of size keep over [0, total) with both endpoints
// included (identity when total == keep); total < keep is an error.
std::vector<int> thin_indices(int total, int keep);

// Posterior prevalence draws: draws x locations x targets x categories,
// each draw a point on the simplex. Both emissions reduce to the softmax
// of the linear predictor (the Dirichlet-multinomial's mean proportion).
struct PrevalenceSet {
    int num_draws = 0, L = 0, H = 0, V = 0;

    std::vector<double> values;

    double value(int d, int l, int h, int v) const {
        return values[((static_cast<std::size_t>(d) * L + l) * H + h) * V + v];
    }
    double& at(int d, int l, int h, int v) {
        return values[((static_cast<std::size_t>(d) * L + l) * H + h) * V + v];
    }

    // mean over draws at (l, h); out has V entries
    void mean(int l, int h, std::span<double> out) const;
};

PrevalenceSet compute_prevalence(const Posterior& post, const SampleResult& chain,
                                 std::span<const int> draw_indices, const PredictionGrid& grid);

// Same computation from a bare draw matrix (num_draws x dim, row-major),
// e.g. draws reloaded from a fit artifact.
PrevalenceSet compute_prevalence(const ModelSpec& spec, int num_locations, int num_categories,
                                 std::span<const double> draws, const PredictionGrid& grid);

// Prevalence averaged over every row of the draw matrix without holding the
// per-draw grids; flat [location][target][category].
std::vector<double> mean_prevalence(const ModelSpec& spec, int num_locations, int num_categories,
                                    std::span<const double> draws, const PredictionGrid& grid);

// Predictive count vectors at one (location, target) cell: sims_per_draw
// simulations per prevalence draw, each a multinomial of size n_total.
// When dm_sample_theta is set the proportions are first drawn from the
// Dirichlet recovered from the prevalence point (alpha_v = pi_v / pi_ref).
struct CountSimConfig {
    int sims_per_draw = 100;
    bool dm_sample_theta = false;
};

// output: (num_draws * sims_per_draw) x V, draw-major
std::vector<std::int64_t> simulate_cell_counts(const PrevalenceSet& prev, int l, int h,
                                               std::int64_t n_total, const CountSimConfig& cfg,
                                               Rng& rng);

}  // namespace cladecast
