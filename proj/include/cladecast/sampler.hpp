#pragma once

#include <functional>
#include <span>
#include <vector>

#include "cladecast/rng.hpp"

namespace cladecast {

struct SamplerConfig {
    int chains = 1;  // chains run back to back; draws concatenate
    int warmup = 7000;
    int samples = 8000;  // retained per chain
    double target_accept = 0.8;
    int max_treedepth = 10;
    double init_radius = 2.0;  // uniform(-r, r) start on the unconstrained scale
    // step-size-only buffers and the first covariance window; windows double
    // and the schedule rescales proportionally when warmup is short
    int init_buffer = 75;
    int term_buffer = 50;
    int base_window = 25;
};

struct SampleResult {
    int dim = 0;
    std::vector<double> draws;        // samples x dim, post-warmup
    std::vector<double> log_density;  // per kept draw

    // per-iteration traces over warmup + sampling
    std::vector<double> accept_stat;
    std::vector<double> step_size;
    std::vector<int> tree_depth;
    std::vector<unsigned char> divergent;

    std::vector<double> inv_metric;  // adapted diagonal
    double step_size_final = 0.0;
    int warmup = 0;
    int max_treedepth = 10;

    int num_draws() const { return dim == 0 ? 0 : static_cast<int>(draws.size()) / dim; }
    std::span<const double> draw(int i) const {
        return {draws.data() + static_cast<std::size_t>(i) * dim, static_cast<std::size_t>(dim)};
    }
};

struct ChainDiagnostics {
    int divergences = 0;            // post-warmup
    int max_depth_hits = 0;         // post-warmup
    double depth_saturation = 0.0;  // max_depth_hits / post-warmup iterations
    double mean_accept = 0.0;       // post-warmup
    double ess_log_density = 0.0;
    double min_param_ess = 0.0;  // over a strided subset of coordinates
    double max_param_rhat = 0.0;
    double step_size = 0.0;
};

// No-U-Turn sampler with multinomial state selection over a diagonal
// metric, dual-averaged step size and doubling covariance windows.
class NutsSampler {
  public:
    // f(q, grad) -> log density; fills grad; -inf marks an invalid point.
    using LogDensityFn = std::function<double(std::span<const double>, std::span<double>)>;

    NutsSampler(int dim, LogDensityFn f, SamplerConfig cfg = {});

    SampleResult run(Rng& rng);
    SampleResult run(Rng& rng, std::span<const double> q0);

    // Uniform draws in (-r, r)^dim until the density and gradient are
    // finite; throws after 100 attempts.
    std::vector<double> initialize(Rng& rng) const;

  private:
    int dim_;
    LogDensityFn f_;
    SamplerConfig cfg_;
};

// One velocity-Verlet step of the sampler's integrator over a diagonal
// inverse metric; updates (q, p, grad, logp) in place, returns false when
// the density turns non-finite. Negative eps steps backwards.
bool leapfrog_step(const NutsSampler::LogDensityFn& f, std::span<const double> inv_metric,
                   std::span<double> q, std::span<double> p, std::span<double> grad,
                   double& logp, double eps);

// Rank-normalized bulk effective sample size; `values` holds `num_chains`
// equal-length chains back to back, each split in half internally.
double bulk_ess(std::span<const double> values, int num_chains = 1);

// Split-chain rank-normalized potential scale reduction.
double split_rhat(std::span<const double> values, int num_chains = 1);

ChainDiagnostics summarize_chain(const SampleResult& result);

// Pooled diagnostics over same-config chains: counters sum, ESS and Rhat
// treat the chains jointly.
ChainDiagnostics summarize_chains(std::span<const SampleResult> results);

}  // namespace cladecast
