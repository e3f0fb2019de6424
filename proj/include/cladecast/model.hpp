#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cladecast/dataset.hpp"
#include "cladecast/rng.hpp"

namespace cladecast {

enum class PoolStructure { Shared, Individual, Correlated, Pooled };
enum class Emission { Multinomial, DirichletMultinomial };

// Three-letter code: pooling (S/I/C) x trend (L=linear/C=cubic) x emission
// (M/D), e.g. "SLM", "CCD"; plus the pooled-MLR "baseline".
struct ModelSpec {
    PoolStructure pool = PoolStructure::Shared;
    int degree = 2;  // P: columns of the polynomial design row
    Emission emission = Emission::Multinomial;

    bool baseline() const { return pool == PoolStructure::Pooled; }
    bool hierarchical() const { return !baseline(); }
    bool correlated() const { return pool == PoolStructure::Correlated; }

    static ModelSpec parse(const std::string& code);
    std::string code() const;
    static const std::vector<ModelSpec>& all();  // 12 hierarchical + baseline
};

// Scaled model time: raw day offsets within the 151-day training window map
// to [-1, 1]; later targets extrapolate past 1.
struct TimeScale {
    double center = 75.0;
    double scale = 75.0;
    double scaled(double t_raw) const { return (t_raw - center) / scale; }
};

// row = [1, t, t^2, t^3][:P] at scaled time t
void design_row(double t_scaled, int P, double* out);

// Index map into the flat unconstrained parameter vector. Hierarchical
// models order blocks [gamma | mu | log sigma^2 | y]; the baseline has a
// single pooled gamma block (use l = 0).
struct ParamLayout {
    int L = 0;  // gamma groups (1 for the baseline)
    int J = 0;  // non-reference categories, V - 1
    int P = 0;
    PoolStructure pool = PoolStructure::Shared;

    int mu_off = 0, sig_off = 0, y_off = 0, total = 0;

    static ParamLayout make(const ModelSpec& spec, int num_locations, int num_categories);

    int dim() const { return total; }
    int gamma(int l, int j, int p) const { return (l * J + j) * P + p; }
    int mu(int p, int j) const { return mu_off + p * J + j; }
    // Shared pooling keeps one variance per coefficient order; j is ignored.
    int logsig(int p, int j) const {
        return pool == PoolStructure::Shared ? sig_off + p : sig_off + p * J + j;
    }
    // Strict lower triangle of the p-th correlation's unconstrained matrix,
    // row-major: (i, j0) with 0 <= j0 < i < J.
    int y(int p, int i, int j0) const {
        return y_off + p * (J * (J - 1) / 2) + i * (i - 1) / 2 + j0;
    }
};

// Canonical partial correlations z (strict lower triangle, row-major) to the
// lower Cholesky factor W of the correlation matrix; W is row-major K x K.
void cpc_to_cholesky(std::span<const double> z, int K, double* W);

// log of the LKJ(eta) normalizing constant over K x K correlation matrices.
double lkj_log_normalizer(int K, double eta);

// Emission log-pmfs, multinomial coefficient included. pi must sum to ~1;
// alpha holds all V concentrations.
double multinomial_log_pmf(std::span<const double> pi, std::span<const std::int64_t> counts);
double dm_log_pmf(std::span<const double> alpha, std::span<const std::int64_t> counts);

// Observed cells and fixed design for one training dataset + model. All
// likelihood/prior evaluation (with analytic gradients) lives here.
class Posterior {
  public:
    Posterior(const CountDataset& data, const ModelSpec& spec);

    const ModelSpec& spec() const { return spec_; }
    const ParamLayout& layout() const { return layout_; }
    int dim() const { return layout_.total; }
    int num_locations() const { return n_loc_; }
    int num_categories() const { return V_; }

    // Unnormalized log posterior in the unconstrained parametrization,
    // including all change-of-variable terms; grad must have dim() entries.
    // Returns -inf (with grad unspecified) when the emission overflows.
    double log_density(std::span<const double> q, std::span<double> grad) const;

    double log_likelihood(std::span<const double> q) const;
    double log_prior(std::span<const double> q) const;

    // Linear predictors eta (length V, reference entry 0) for one location
    // at scaled time t.
    void linear_predictor(std::span<const double> q, int location, double t_scaled,
                          std::span<double> eta) const;

  private:
    struct Cell {
        int l;
        double t_scaled;
        std::int64_t n;
    };

    double log_prior_impl(std::span<const double> q, double* grad) const;
    double log_likelihood_impl(std::span<const double> q, double* grad) const;

    ModelSpec spec_;
    ParamLayout layout_;
    int n_loc_ = 0;
    int V_ = 0;
    std::vector<Cell> cells_;
    std::vector<std::int64_t> cell_counts_;  // cells x V
    double coeff_const_ = 0.0;               // sum of log multinomial coefficients
};

// Block-aware start point: gamma and mu uniform on [-2, 2], log-variances
// uniform on [-1, 1], correlation coordinates exactly 0; redrawn until the
// log density is finite (at most 100 attempts, then an error).
std::vector<double> initial_point(const Posterior& post, Rng& rng);

}  // namespace cladecast
