#include "cladecast/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <boost/math/distributions/normal.hpp>

namespace cladecast {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kMaxDeltaH = 1000.0;  // energy error marking a divergence

double log_sum_exp(double a, double b) {
    if (a == -kInf) return b;
    if (b == -kInf) return a;
    double m = std::max(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

// Welford accumulator feeding the diagonal metric windows.
class VarAccum {
  public:
    explicit VarAccum(int dim) : mean_(dim, 0.0), m2_(dim, 0.0) {}

    void add(std::span<const double> x) {
        ++n_;
        for (std::size_t i = 0; i < mean_.size(); ++i) {
            double d = x[i] - mean_[i];
            mean_[i] += d / static_cast<double>(n_);
            m2_[i] += d * (x[i] - mean_[i]);
        }
    }

    // n/(n+5) shrinkage toward 1e-3 keeps small-window estimates usable
    std::vector<double> regularized() const {
        std::vector<double> v(mean_.size(), 1.0);
        if (n_ < 2) return v;
        double w = static_cast<double>(n_) / (n_ + 5.0);
        for (std::size_t i = 0; i < v.size(); ++i)
            v[i] = w * (m2_[i] / (n_ - 1.0)) + 1e-3 * (5.0 / (n_ + 5.0));
        return v;
    }

    void reset() {
        n_ = 0;
        std::fill(mean_.begin(), mean_.end(), 0.0);
        std::fill(m2_.begin(), m2_.end(), 0.0);
    }

  private:
    long n_ = 0;
    std::vector<double> mean_, m2_;
};

struct DualAverage {
    double mu = 0.0, log_eps = 0.0, log_eps_bar = 0.0, h_bar = 0.0;
    long t = 0;
    double delta = 0.8;
    static constexpr double kGamma = 0.05, kT0 = 10.0, kKappa = 0.75;

    void restart(double eps, double target) {
        mu = std::log(10.0 * eps);
        log_eps = std::log(eps);
        log_eps_bar = std::log(eps);
        h_bar = 0.0;
        t = 0;
        delta = target;
    }
    void update(double accept) {
        ++t;
        h_bar = (1.0 - 1.0 / (t + kT0)) * h_bar + (delta - accept) / (t + kT0);
        log_eps = mu - std::sqrt(static_cast<double>(t)) / kGamma * h_bar;
        double w = std::pow(static_cast<double>(t), -kKappa);
        log_eps_bar = w * log_eps + (1.0 - w) * log_eps_bar;
    }
    double eps() const { return std::exp(log_eps); }
    double eps_bar() const { return std::exp(log_eps_bar); }
};

struct PState {
    std::vector<double> q, p, grad;
    double logp = -kInf;
};

struct TreeInfo {
    std::vector<double> q_sample, grad_sample;
    double logp_sample = -kInf;
    double log_sum_weight = -kInf;
    bool valid = false;
    bool divergent = false;
    std::vector<double> q_beg, p_beg, q_end, p_end;  // inner / outer subtree edges
};

class Chain {
  public:
    Chain(int dim, const NutsSampler::LogDensityFn& f, const SamplerConfig& cfg, Rng& rng)
        : dim_(dim), f_(f), cfg_(cfg), rng_(rng), inv_metric_(dim, 1.0) {}

    SampleResult run(std::span<const double> q0) {
        SampleResult res;
        res.dim = dim_;
        res.warmup = cfg_.warmup;
        res.max_treedepth = cfg_.max_treedepth;
        cur_.q.assign(q0.begin(), q0.end());
        cur_.grad.resize(dim_);
        cur_.p.resize(dim_);
        cur_.logp = f_(cur_.q, cur_.grad);
        if (!std::isfinite(cur_.logp))
            throw std::runtime_error("initial point has non-finite log density");

        const int W = cfg_.warmup;
        int init_buf = cfg_.init_buffer, term_buf = cfg_.term_buffer, base_win = cfg_.base_window;
        if (W > 0 && W < init_buf + base_win + term_buf) {
            init_buf = static_cast<int>(0.15 * W);
            term_buf = static_cast<int>(0.10 * W);
            base_win = W - init_buf - term_buf;
        }
        std::vector<int> window_ends;
        if (W > 0 && base_win > 0) {
            int cursor = init_buf, win = base_win;
            while (cursor < W - term_buf) {
                int end = cursor + win;
                if (end + 2 * win > W - term_buf || end > W - term_buf) end = W - term_buf;
                window_ends.push_back(end);
                cursor = end;
                win *= 2;
            }
        }

        double eps = find_epsilon();
        DualAverage da;
        da.restart(eps, cfg_.target_accept);
        VarAccum accum(dim_);
        std::size_t next_window = 0;

        for (int i = 0; i < W; ++i) {
            eps = da.eps();
            transition(eps);
            da.update(accept_stat_);
            record(res, eps);
            bool in_phase2 = i >= init_buf && i < W - term_buf && !window_ends.empty();
            if (in_phase2) accum.add(cur_.q);
            if (next_window < window_ends.size() && i + 1 == window_ends[next_window]) {
                inv_metric_ = accum.regularized();
                accum.reset();
                double e2 = find_epsilon();
                da.restart(e2, cfg_.target_accept);
                ++next_window;
            }
        }

        eps = W > 0 ? da.eps_bar() : eps;
        res.step_size_final = eps;
        res.inv_metric = inv_metric_;
        res.draws.reserve(static_cast<std::size_t>(cfg_.samples) * dim_);
        for (int i = 0; i < cfg_.samples; ++i) {
            transition(eps);
            record(res, eps);
            res.draws.insert(res.draws.end(), cur_.q.begin(), cur_.q.end());
            res.log_density.push_back(cur_.logp);
        }
        return res;
    }

  private:
    double hamiltonian(const PState& s) const {
        double ke = 0.0;
        for (int i = 0; i < dim_; ++i) ke += 0.5 * inv_metric_[i] * s.p[i] * s.p[i];
        return -s.logp + ke;
    }

    bool leapfrog(PState& s, double eps, int dir) {
        return leapfrog_step(f_, inv_metric_, s.q, s.p, s.grad, s.logp, eps * dir);
    }

    // d/dt of the squared metric distance between the edges, taken at each
    // edge; negative at either end means the subtree has turned back.
    bool uturn(const std::vector<double>& q_beg, const std::vector<double>& p_beg,
               const std::vector<double>& q_end, const std::vector<double>& p_end,
               int dir) const {
        double dot_beg = 0.0, dot_end = 0.0;
        for (int i = 0; i < dim_; ++i) {
            double dq = (q_end[i] - q_beg[i]) * dir;
            dot_beg += dq * inv_metric_[i] * p_beg[i];
            dot_end += dq * inv_metric_[i] * p_end[i];
        }
        return dot_beg < 0.0 || dot_end < 0.0;
    }

    TreeInfo build_tree(int depth, PState& z, double h0, int dir, double eps) {
        if (depth == 0) {
            TreeInfo t;
            bool ok = leapfrog(z, eps, dir);
            double h = ok ? hamiltonian(z) : kInf;
            if (std::isnan(h)) h = kInf;
            double w = h0 - h;  // log multinomial weight
            ++n_leapfrog_;
            sum_metro_ += w > 0.0 ? 1.0 : std::exp(w);
            if (-w > kMaxDeltaH) {
                t.divergent = true;
                return t;
            }
            t.valid = true;
            t.log_sum_weight = w;
            t.q_sample = z.q;
            t.grad_sample = z.grad;
            t.logp_sample = z.logp;
            t.q_beg = z.q;
            t.p_beg = z.p;
            t.q_end = z.q;
            t.p_end = z.p;
            return t;
        }
        TreeInfo left = build_tree(depth - 1, z, h0, dir, eps);
        if (!left.valid) return left;
        TreeInfo right = build_tree(depth - 1, z, h0, dir, eps);
        if (!right.valid) {
            left.valid = false;
            left.divergent |= right.divergent;
            return left;
        }
        double total = log_sum_exp(left.log_sum_weight, right.log_sum_weight);
        if (std::log(rng_.uniform()) < right.log_sum_weight - total) {
            left.q_sample = std::move(right.q_sample);
            left.grad_sample = std::move(right.grad_sample);
            left.logp_sample = right.logp_sample;
        }
        left.log_sum_weight = total;
        left.q_end = std::move(right.q_end);
        left.p_end = std::move(right.p_end);
        left.valid = !uturn(left.q_beg, left.p_beg, left.q_end, left.p_end, dir);
        return left;
    }

    void transition(double eps) {
        for (int i = 0; i < dim_; ++i) cur_.p[i] = rng_.normal() / std::sqrt(inv_metric_[i]);
        double h0 = hamiltonian(cur_);
        sum_metro_ = 0.0;
        n_leapfrog_ = 0;
        divergent_ = false;

        PState z_fwd = cur_, z_bwd = cur_;
        std::vector<double> q_sample = cur_.q, grad_sample = cur_.grad;
        double logp_sample = cur_.logp;
        double log_sum_weight = 0.0;  // the start state has unit weight

        int depth = 0;
        while (depth < cfg_.max_treedepth) {
            int dir = rng_.uniform() < 0.5 ? -1 : 1;
            TreeInfo t = build_tree(depth, dir == 1 ? z_fwd : z_bwd, h0, dir, eps);
            divergent_ = divergent_ || t.divergent;
            if (!t.valid) break;
            // biased progressive sampling toward the fresh subtree
            if (t.log_sum_weight > log_sum_weight ||
                std::log(rng_.uniform()) < t.log_sum_weight - log_sum_weight) {
                q_sample = std::move(t.q_sample);
                grad_sample = std::move(t.grad_sample);
                logp_sample = t.logp_sample;
            }
            log_sum_weight = log_sum_exp(log_sum_weight, t.log_sum_weight);
            ++depth;
            if (uturn(z_bwd.q, z_bwd.p, z_fwd.q, z_fwd.p, 1)) break;
        }
        tree_depth_ = depth;
        accept_stat_ = n_leapfrog_ > 0 ? sum_metro_ / n_leapfrog_ : 0.0;
        cur_.q = std::move(q_sample);
        cur_.grad = std::move(grad_sample);
        cur_.logp = logp_sample;
    }

    double find_epsilon() {
        PState z0 = cur_;
        for (int i = 0; i < dim_; ++i) z0.p[i] = rng_.normal() / std::sqrt(inv_metric_[i]);
        double h0 = hamiltonian(z0);
        auto accept = [&](double e) {
            PState z = z0;
            if (!leapfrog(z, e, 1)) return 0.0;
            double h = hamiltonian(z);
            if (std::isnan(h)) return 0.0;
            return std::exp(std::min(0.0, h0 - h));
        };
        double eps = 1.0;
        double a = accept(eps);
        int dir = a > 0.5 ? 1 : -1;
        for (int iter = 0; iter < 100; ++iter) {
            if (dir == 1 && a <= 0.5) break;
            if (dir == -1 && a >= 0.5) break;
            eps *= dir == 1 ? 2.0 : 0.5;
            if (eps > 1e7 || eps < 1e-10) break;
            a = accept(eps);
        }
        return eps;
    }

    void record(SampleResult& res, double eps) {
        res.accept_stat.push_back(accept_stat_);
        res.step_size.push_back(eps);
        res.tree_depth.push_back(tree_depth_);
        res.divergent.push_back(divergent_ ? 1 : 0);
    }

    int dim_;
    const NutsSampler::LogDensityFn& f_;
    SamplerConfig cfg_;
    Rng& rng_;
    std::vector<double> inv_metric_;
    PState cur_;
    double sum_metro_ = 0.0;
    long n_leapfrog_ = 0;
    bool divergent_ = false;
    double accept_stat_ = 0.0;
    int tree_depth_ = 0;
};

}  // namespace

NutsSampler::NutsSampler(int dim, LogDensityFn f, SamplerConfig cfg)
    : dim_(dim), f_(std::move(f)), cfg_(cfg) {
    if (dim < 1) throw std::invalid_argument("sampler dimension must be positive");
}

bool leapfrog_step(const NutsSampler::LogDensityFn& f, std::span<const double> inv_metric,
                   std::span<double> q, std::span<double> p, std::span<double> grad,
                   double& logp, double eps) {
    const std::size_t n = q.size();
    for (std::size_t i = 0; i < n; ++i) p[i] += 0.5 * eps * grad[i];
    for (std::size_t i = 0; i < n; ++i) q[i] += eps * inv_metric[i] * p[i];
    logp = f(q, grad);
    if (!std::isfinite(logp)) return false;
    for (std::size_t i = 0; i < n; ++i) p[i] += 0.5 * eps * grad[i];
    return true;
}

std::vector<double> NutsSampler::initialize(Rng& rng) const {
    std::vector<double> q(dim_), g(dim_);
    for (int attempt = 0; attempt < 100; ++attempt) {
        for (auto& x : q) x = (rng.uniform() * 2.0 - 1.0) * cfg_.init_radius;
        double lp = f_(q, g);
        if (!std::isfinite(lp)) continue;
        bool ok = true;
        for (double v : g)
            if (!std::isfinite(v)) ok = false;
        if (ok) return q;
    }
    throw std::runtime_error("no valid starting point after 100 attempts");
}

SampleResult NutsSampler::run(Rng& rng) {
    auto q0 = initialize(rng);
    return run(rng, q0);
}

SampleResult NutsSampler::run(Rng& rng, std::span<const double> q0) {
    if (static_cast<int>(q0.size()) != dim_) throw std::invalid_argument("bad init size");
    Chain chain(dim_, f_, cfg_, rng);
    return chain.run(q0);
}

namespace {

// pooled average ranks -> normal quantiles (rank normalization)
std::vector<double> rank_normalize(std::span<const double> x) {
    const std::size_t n = x.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> z(n);
    boost::math::normal_distribution<double> nd;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && x[idx[j + 1]] == x[idx[i]]) ++j;
        double rank = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
        double q = boost::math::quantile(nd, (rank - 0.375) / (static_cast<double>(n) + 0.25));
        for (std::size_t k = i; k <= j; ++k) z[idx[k]] = q;
        i = j + 1;
    }
    return z;
}

struct SplitChains {
    std::vector<std::vector<double>> chains;  // 2 * num_chains, equal length
};

SplitChains split_and_normalize(std::span<const double> values, int num_chains) {
    const std::size_t per = values.size() / num_chains;
    const std::size_t half = per / 2;
    std::vector<double> pooled;
    pooled.reserve(2 * half * num_chains);
    for (int m = 0; m < num_chains; ++m) {
        const double* base = values.data() + m * per;
        pooled.insert(pooled.end(), base, base + half);
        pooled.insert(pooled.end(), base + (per - half), base + per);
    }
    std::vector<double> z = rank_normalize(pooled);
    SplitChains out;
    for (std::size_t c = 0; c < 2 * static_cast<std::size_t>(num_chains); ++c)
        out.chains.emplace_back(z.begin() + c * half, z.begin() + (c + 1) * half);
    return out;
}

double autocov(const std::vector<double>& x, double mean, std::size_t lag) {
    double acc = 0.0;
    for (std::size_t i = 0; i + lag < x.size(); ++i) acc += (x[i] - mean) * (x[i + lag] - mean);
    return acc / static_cast<double>(x.size());
}

double ess_of_chains(const std::vector<std::vector<double>>& chains) {
    const std::size_t m = chains.size();
    const std::size_t n = chains[0].size();
    if (n < 4) return static_cast<double>(n * m);
    std::vector<double> means(m), vars(m);
    double grand = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
        double s = 0.0;
        for (double v : chains[c]) s += v;
        means[c] = s / static_cast<double>(n);
        grand += means[c];
    }
    grand /= static_cast<double>(m);
    double w = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
        vars[c] = autocov(chains[c], means[c], 0) * static_cast<double>(n) / (n - 1.0);
        w += vars[c];
    }
    w /= static_cast<double>(m);
    double between = 0.0;
    for (std::size_t c = 0; c < m; ++c) between += (means[c] - grand) * (means[c] - grand);
    between /= std::max<std::size_t>(m - 1, 1);
    double var_plus = w * (n - 1.0) / static_cast<double>(n) + between;
    // zero variance means a degenerate trace, not a perfectly mixed one
    if (!(var_plus > 0.0)) return kNaN;

    auto rho = [&](std::size_t lag) {
        double acc = 0.0;
        for (std::size_t c = 0; c < m; ++c)
            acc += autocov(chains[c], means[c], lag) * static_cast<double>(n) / (n - 1.0);
        acc /= static_cast<double>(m);
        return 1.0 - (w - acc) / var_plus;
    };

    // Geyer initial monotone positive pair sequence
    const std::size_t max_lag = std::min<std::size_t>(n - 2, 2000);
    double tau = 0.0, prev_pair = kInf;
    for (std::size_t lag = 0; lag + 1 <= max_lag; lag += 2) {
        double pair = rho(lag) + rho(lag + 1);
        if (pair < 0.0) break;
        pair = std::min(pair, prev_pair);
        prev_pair = pair;
        tau += pair;
    }
    tau = std::max(2.0 * tau - 1.0, 1.0 / std::log10(static_cast<double>(n * m) + 10.0));
    return static_cast<double>(n * m) / tau;
}

double rhat_of_chains(const std::vector<std::vector<double>>& chains) {
    const std::size_t m = chains.size();
    const std::size_t n = chains[0].size();
    if (n < 2) return 1.0;
    std::vector<double> means(m);
    double grand = 0.0, w = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
        double s = 0.0;
        for (double v : chains[c]) s += v;
        means[c] = s / static_cast<double>(n);
        grand += means[c];
        w += autocov(chains[c], means[c], 0) * static_cast<double>(n) / (n - 1.0);
    }
    grand /= static_cast<double>(m);
    w /= static_cast<double>(m);
    double between = 0.0;
    for (std::size_t c = 0; c < m; ++c) between += (means[c] - grand) * (means[c] - grand);
    between /= std::max<std::size_t>(m - 1, 1);
    double var_plus = w * (n - 1.0) / static_cast<double>(n) + between;
    if (!(w > 0.0)) return 1.0;
    return std::sqrt(var_plus / w);
}

}  // namespace

double bulk_ess(std::span<const double> values, int num_chains) {
    if (values.empty() || num_chains < 1) return 0.0;
    return ess_of_chains(split_and_normalize(values, num_chains).chains);
}

double split_rhat(std::span<const double> values, int num_chains) {
    if (values.empty() || num_chains < 1) return 1.0;
    return rhat_of_chains(split_and_normalize(values, num_chains).chains);
}

ChainDiagnostics summarize_chain(const SampleResult& result) {
    return summarize_chains(std::span<const SampleResult>(&result, 1));
}

ChainDiagnostics summarize_chains(std::span<const SampleResult> results) {
    ChainDiagnostics d;
    if (results.empty()) return d;
    const int C = static_cast<int>(results.size());
    d.step_size = results[0].step_size_final;

    int post_iters = 0;
    double acc = 0.0;
    for (const SampleResult& r : results) {
        const int total = static_cast<int>(r.accept_stat.size());
        for (int i = r.warmup; i < total; ++i) {
            acc += r.accept_stat[i];
            if (r.divergent[i]) ++d.divergences;
            if (r.tree_depth[i] >= r.max_treedepth) ++d.max_depth_hits;
            ++post_iters;
        }
    }
    d.mean_accept = post_iters > 0 ? acc / post_iters : 0.0;
    d.depth_saturation = post_iters > 0 ? static_cast<double>(d.max_depth_hits) / post_iters : 0.0;

    const int n = results[0].num_draws();
    const int dim = results[0].dim;
    for (const SampleResult& r : results)
        if (r.num_draws() != n || r.dim != dim)
            throw std::invalid_argument("chains differ in shape");

    std::vector<double> pooled;
    pooled.reserve(static_cast<std::size_t>(n) * C);
    for (const SampleResult& r : results)
        pooled.insert(pooled.end(), r.log_density.begin(), r.log_density.end());
    if (!pooled.empty()) d.ess_log_density = bulk_ess(pooled, C);

    if (n > 3 && dim > 0) {
        d.min_param_ess = kInf;
        int stride = std::max(1, dim / 64);
        std::vector<double> col(static_cast<std::size_t>(n) * C);
        for (int j = 0; j < dim; j += stride) {
            for (int c = 0; c < C; ++c)
                for (int i = 0; i < n; ++i)
                    col[static_cast<std::size_t>(c) * n + i] =
                        results[c].draws[static_cast<std::size_t>(i) * dim + j];
            d.min_param_ess = std::min(d.min_param_ess, bulk_ess(col, C));
            d.max_param_rhat = std::max(d.max_param_rhat, split_rhat(col, C));
        }
    }
    return d;
}

}  // namespace cladecast
