#include "cladecast/predict.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace cladecast {

PredictionGrid PredictionGrid::standard(Date submission_date) {
    PredictionGrid g;
    g.submission_date = submission_date;
    TimeScale ts;
    for (int h = -kNowcastDays; h <= kForecastDays; ++h) {
        g.horizons.push_back(h);
        g.dates.push_back(submission_date + h);
        g.t_scaled.push_back(ts.scaled(kLookbackDays + h));
    }
    return g;
}

std::vector<int> thin_indices(int total, int keep) {
    if (keep <= 0) throw std::invalid_argument("thin_indices: keep must be positive");
    if (total < keep)
        throw std::invalid_argument("thin_indices: only " + std::to_string(total) +
                                    " draws for a subset of " + std::to_string(keep));
    std::vector<int> idx;
    if (total == keep) {
        idx.resize(total);
        for (int i = 0; i < total; ++i) idx[i] = i;
        return idx;
    }
    idx.resize(keep);
    if (keep == 1) {
        idx[0] = total - 1;
        return idx;
    }
    for (int i = 0; i < keep; ++i)
        idx[i] = static_cast<int>(
            std::llround(static_cast<double>(i) * (total - 1) / (keep - 1)));
    return idx;
}

void PrevalenceSet::mean(int l, int h, std::span<double> out) const {
    std::fill(out.begin(), out.end(), 0.0);
    for (int d = 0; d < num_draws; ++d)
        for (int v = 0; v < V; ++v) out[v] += value(d, l, h, v);
    for (int v = 0; v < V; ++v) out[v] /= num_draws;
}

namespace {

void softmax_inplace(std::span<double> eta) {
    double m = *std::max_element(eta.begin(), eta.end());
    double z = 0.0;
    for (double& e : eta) {
        e = std::exp(e - m);
        z += e;
    }
    for (double& e : eta) e /= z;
}

}  // namespace

PrevalenceSet compute_prevalence(const Posterior& post, const SampleResult& chain,
                                 std::span<const int> draw_indices, const PredictionGrid& grid) {
    PrevalenceSet out;
    out.num_draws = static_cast<int>(draw_indices.size());
    out.L = post.num_locations();
    out.H = grid.size();
    out.V = post.num_categories();
    out.values.resize(static_cast<std::size_t>(out.num_draws) * out.L * out.H * out.V);
    std::vector<double> eta(out.V);
    for (int d = 0; d < out.num_draws; ++d) {
        std::span<const double> q = chain.draw(draw_indices[d]);
        for (int l = 0; l < out.L; ++l) {
            for (int h = 0; h < out.H; ++h) {
                post.linear_predictor(q, l, grid.t_scaled[h], eta);
                softmax_inplace(eta);
                for (int v = 0; v < out.V; ++v) out.at(d, l, h, v) = eta[v];
            }
        }
    }
    return out;
}

PrevalenceSet compute_prevalence(const ModelSpec& spec, int num_locations, int num_categories,
                                 std::span<const double> draws, const PredictionGrid& grid) {
    ParamLayout ly = ParamLayout::make(spec, num_locations, num_categories);
    const int dim = ly.dim();
    if (dim == 0 || draws.size() % dim != 0) throw std::invalid_argument("bad draw matrix");
    PrevalenceSet out;
    out.num_draws = static_cast<int>(draws.size()) / dim;
    out.L = num_locations;
    out.H = grid.size();
    out.V = num_categories;
    out.values.resize(static_cast<std::size_t>(out.num_draws) * out.L * out.H * out.V);
    const int J = out.V - 1, P = ly.P;
    std::vector<double> eta(out.V), x(P);
    for (int d = 0; d < out.num_draws; ++d) {
        const double* q = draws.data() + static_cast<std::size_t>(d) * dim;
        for (int l = 0; l < out.L; ++l) {
            int lg = spec.baseline() ? 0 : l;
            for (int h = 0; h < out.H; ++h) {
                design_row(grid.t_scaled[h], P, x.data());
                for (int j = 0; j < J; ++j) {
                    double acc = 0.0;
                    for (int p = 0; p < P; ++p) acc += q[ly.gamma(lg, j, p)] * x[p];
                    eta[j] = acc;
                }
                eta[J] = 0.0;
                softmax_inplace(eta);
                for (int v = 0; v < out.V; ++v) out.at(d, l, h, v) = eta[v];
            }
        }
    }
    return out;
}

std::vector<double> mean_prevalence(const ModelSpec& spec, int num_locations, int num_categories,
                                    std::span<const double> draws, const PredictionGrid& grid) {
    ParamLayout ly = ParamLayout::make(spec, num_locations, num_categories);
    const int dim = ly.dim();
    if (dim == 0 || draws.size() % dim != 0) throw std::invalid_argument("bad draw matrix");
    const int R = static_cast<int>(draws.size()) / dim;
    if (R == 0) throw std::invalid_argument("mean_prevalence: no draws");
    const int L = num_locations, H = grid.size(), V = num_categories;
    std::vector<double> acc(static_cast<std::size_t>(L) * H * V, 0.0);
    const int J = V - 1, P = ly.P;
    std::vector<double> eta(V), x(P);
    for (int d = 0; d < R; ++d) {
        const double* q = draws.data() + static_cast<std::size_t>(d) * dim;
        for (int l = 0; l < L; ++l) {
            int lg = spec.baseline() ? 0 : l;
            for (int h = 0; h < H; ++h) {
                design_row(grid.t_scaled[h], P, x.data());
                for (int j = 0; j < J; ++j) {
                    double dot = 0.0;
                    for (int p = 0; p < P; ++p) dot += q[ly.gamma(lg, j, p)] * x[p];
                    eta[j] = dot;
                }
                eta[J] = 0.0;
                softmax_inplace(eta);
                double* cell = acc.data() + (static_cast<std::size_t>(l) * H + h) * V;
                for (int v = 0; v < V; ++v) cell[v] += eta[v];
            }
        }
    }
    for (double& a : acc) a /= R;
    return acc;
}

std::vector<std::int64_t> simulate_cell_counts(const PrevalenceSet& prev, int l, int h,
                                               std::int64_t n_total, const CountSimConfig& cfg,
                                               Rng& rng) {
    const int V = prev.V;
    std::vector<std::int64_t> out(
        static_cast<std::size_t>(prev.num_draws) * cfg.sims_per_draw * V);
    std::vector<double> pi(V), theta(V);
    std::size_t pos = 0;
    for (int d = 0; d < prev.num_draws; ++d) {
        for (int v = 0; v < V; ++v) pi[v] = prev.value(d, l, h, v);
        for (int s = 0; s < cfg.sims_per_draw; ++s) {
            std::span<std::int64_t> row(out.data() + pos, static_cast<std::size_t>(V));
            if (cfg.dm_sample_theta) {
                double ref = std::max(pi[V - 1], 1e-300);
                double z = 0.0;
                for (int v = 0; v < V; ++v) {
                    theta[v] = rng.gamma(pi[v] / ref);
                    z += theta[v];
                }
                for (int v = 0; v < V; ++v) theta[v] = z > 0.0 ? theta[v] / z : pi[v];
                rng.multinomial(n_total, theta, row);
            } else {
                rng.multinomial(n_total, pi, row);
            }
            pos += V;
        }
    }
    return out;
}

}  // namespace cladecast
