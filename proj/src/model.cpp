#include "cladecast/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/gamma.hpp>

namespace cladecast {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kPriorSd = 400.0;  // both the mean prior and the variance prior scale
constexpr double kLkjEta = 2.0;
constexpr double kEtaCap = 500.0;  // past this the concentration overflows

double lgam(double x) { return boost::math::lgamma(x); }
double digam(double x) { return boost::math::digamma(x); }

double lbeta(double a, double b) { return lgam(a) + lgam(b) - lgam(a + b); }

}  // namespace

ModelSpec ModelSpec::parse(const std::string& code) {
    if (code == "baseline") return ModelSpec{PoolStructure::Pooled, 2, Emission::Multinomial};
    auto bad = [&] { throw std::invalid_argument("unknown model spec: " + code); };
    if (code.size() != 3) bad();
    ModelSpec m;
    switch (code[0]) {
        case 'S': m.pool = PoolStructure::Shared; break;
        case 'I': m.pool = PoolStructure::Individual; break;
        case 'C': m.pool = PoolStructure::Correlated; break;
        default: bad();
    }
    switch (code[1]) {
        case 'L': m.degree = 2; break;
        case 'C': m.degree = 4; break;
        default: bad();
    }
    switch (code[2]) {
        case 'M': m.emission = Emission::Multinomial; break;
        case 'D': m.emission = Emission::DirichletMultinomial; break;
        default: bad();
    }
    return m;
}

std::string ModelSpec::code() const {
    if (baseline()) return "baseline";
    std::string s(3, '?');
    s[0] = pool == PoolStructure::Shared ? 'S' : pool == PoolStructure::Individual ? 'I' : 'C';
    s[1] = degree == 2 ? 'L' : 'C';
    s[2] = emission == Emission::Multinomial ? 'M' : 'D';
    return s;
}

const std::vector<ModelSpec>& ModelSpec::all() {
    static const std::vector<ModelSpec> specs = [] {
        std::vector<ModelSpec> v;
        for (PoolStructure pool :
             {PoolStructure::Shared, PoolStructure::Individual, PoolStructure::Correlated})
            for (int degree : {2, 4})
                for (Emission em : {Emission::Multinomial, Emission::DirichletMultinomial})
                    v.push_back(ModelSpec{pool, degree, em});
        v.push_back(ModelSpec{PoolStructure::Pooled, 2, Emission::Multinomial});
        return v;
    }();
    return specs;
}

void design_row(double t_scaled, int P, double* out) {
    out[0] = 1.0;
    for (int p = 1; p < P; ++p) out[p] = out[p - 1] * t_scaled;
}

ParamLayout ParamLayout::make(const ModelSpec& spec, int num_locations, int num_categories) {
    if (num_categories < 2) throw std::invalid_argument("need at least two categories");
    if (num_locations < 1) throw std::invalid_argument("need at least one location");
    ParamLayout ly;
    ly.pool = spec.pool;
    ly.P = spec.degree;
    ly.J = num_categories - 1;
    ly.L = spec.baseline() ? 1 : num_locations;
    int gamma_size = ly.L * ly.J * ly.P;
    if (spec.baseline()) {
        ly.mu_off = ly.sig_off = ly.y_off = ly.total = gamma_size;
        return ly;
    }
    ly.mu_off = gamma_size;
    ly.sig_off = ly.mu_off + ly.J * ly.P;
    int nsig = spec.pool == PoolStructure::Shared ? ly.P : ly.P * ly.J;
    ly.y_off = ly.sig_off + nsig;
    int ntri = spec.correlated() ? ly.P * ly.J * (ly.J - 1) / 2 : 0;
    ly.total = ly.y_off + ntri;
    return ly;
}

void cpc_to_cholesky(std::span<const double> z, int K, double* W) {
    for (int i = 0; i < K; ++i) {
        double prod = 1.0;
        for (int j0 = 0; j0 < i; ++j0) {
            double zz = z[i * (i - 1) / 2 + j0];
            W[i * K + j0] = zz * prod;
            prod *= std::sqrt(1.0 - zz * zz);
        }
        W[i * K + i] = prod;
        for (int j0 = i + 1; j0 < K; ++j0) W[i * K + j0] = 0.0;
    }
}

double lkj_log_normalizer(int K, double eta) {
    double out = 0.0;
    for (int j = 1; j <= K - 1; ++j) {
        double beta = eta + 0.5 * (K - 1 - j);
        out += (K - j) * ((1.0 - 2.0 * beta) * std::numbers::ln2 - lbeta(beta, beta));
    }
    return out;
}

Posterior::Posterior(const CountDataset& data, const ModelSpec& spec)
    : spec_(spec),
      layout_(ParamLayout::make(spec, data.num_locations(), data.num_categories())),
      n_loc_(data.num_locations()),
      V_(data.num_categories()) {
    TimeScale ts;
    for (int l = 0; l < n_loc_; ++l) {
        for (int t = 0; t < data.num_days; ++t) {
            std::int64_t n = data.total(l, t);
            if (n == 0) continue;
            cells_.push_back({l, ts.scaled(t), n});
            coeff_const_ += lgam(static_cast<double>(n) + 1.0);
            for (int v = 0; v < V_; ++v) {
                std::int64_t c = data.count(l, t, v);
                cell_counts_.push_back(c);
                if (c > 1) coeff_const_ -= lgam(static_cast<double>(c) + 1.0);
            }
        }
    }
}

double Posterior::log_prior_impl(std::span<const double> q, double* grad) const {
    if (spec_.baseline()) return 0.0;  // flat over the pooled coefficients
    const ParamLayout& ly = layout_;
    const int L = ly.L, J = ly.J, P = ly.P;
    const double inv_var = 1.0 / (kPriorSd * kPriorSd);
    double lp = 0.0;

    for (int p = 0; p < P; ++p) {
        for (int j = 0; j < J; ++j) {
            double m = q[ly.mu(p, j)];
            lp += -0.5 * kLog2Pi - std::log(kPriorSd) - 0.5 * m * m * inv_var;
            if (grad) grad[ly.mu(p, j)] += -m * inv_var;
        }
    }

    // variance prior: sigma^2 ~ N(1, 400^2) restricted to (0, inf), in
    // log-variance coordinates (u), with the exp Jacobian folded in
    static const double log_trunc =
        std::log(0.5 * std::erfc(-(1.0 / kPriorSd) / std::sqrt(2.0)));
    int nsig = ly.pool == PoolStructure::Shared ? P : P * J;
    for (int k = 0; k < nsig; ++k) {
        double u = q[ly.sig_off + k];
        double s2 = std::exp(u);
        lp += -0.5 * kLog2Pi - std::log(kPriorSd) - 0.5 * (s2 - 1.0) * (s2 - 1.0) * inv_var -
              log_trunc + u;
        if (grad) grad[ly.sig_off + k] += -(s2 - 1.0) * s2 * inv_var + 1.0;
    }

    if (ly.pool != PoolStructure::Correlated) {
        for (int p = 0; p < P; ++p) {
            for (int j = 0; j < J; ++j) {
                double u = q[ly.logsig(p, j)];
                double inv_s2 = std::exp(-u);
                for (int l = 0; l < L; ++l) {
                    double d = q[ly.gamma(l, j, p)] - q[ly.mu(p, j)];
                    lp += -0.5 * kLog2Pi - 0.5 * u - 0.5 * d * d * inv_s2;
                    if (grad) {
                        double g = d * inv_s2;
                        grad[ly.gamma(l, j, p)] -= g;
                        grad[ly.mu(p, j)] += g;
                        grad[ly.logsig(p, j)] += -0.5 + 0.5 * d * d * inv_s2;
                    }
                }
            }
        }
        return lp;
    }

    // Correlated: gamma_{l.p} ~ N(mu_p, D_p Omega_p D_p), Omega_p ~ LKJ(2),
    // with Omega parametrized by partial correlations z = tanh(y).
    const int ntri = J * (J - 1) / 2;
    std::vector<double> z(ntri), W(J * J), What(J * J), e(J), s(J), t(J), sig(J);
    for (int p = 0; p < P; ++p) {
        const int y_base = ly.y_off + p * ntri;
        for (int k = 0; k < ntri; ++k) z[k] = std::tanh(q[y_base + k]);
        cpc_to_cholesky(z, J, W.data());
        double logdet_w = 0.0;
        for (int j = 0; j < J; ++j) logdet_w += std::log(W[j * J + j]);
        double sum_u = 0.0;
        for (int j = 0; j < J; ++j) {
            sig[j] = std::exp(0.5 * q[ly.logsig(p, j)]);
            sum_u += q[ly.logsig(p, j)];
        }
        std::fill(What.begin(), What.end(), 0.0);

        for (int l = 0; l < L; ++l) {
            for (int j = 0; j < J; ++j) e[j] = (q[ly.gamma(l, j, p)] - q[ly.mu(p, j)]) / sig[j];
            for (int i = 0; i < J; ++i) {  // forward solve W s = e
                double acc = e[i];
                for (int k = 0; k < i; ++k) acc -= W[i * J + k] * s[k];
                s[i] = acc / W[i * J + i];
            }
            double ss = 0.0;
            for (double v : s) ss += v * v;
            lp += -0.5 * J * kLog2Pi - 0.5 * sum_u - logdet_w - 0.5 * ss;
            if (grad) {
                for (int i = J - 1; i >= 0; --i) {  // back solve W' t = s
                    double acc = s[i];
                    for (int k = i + 1; k < J; ++k) acc -= W[k * J + i] * t[k];
                    t[i] = acc / W[i * J + i];
                }
                for (int j = 0; j < J; ++j) {
                    double g = t[j] / sig[j];
                    grad[ly.gamma(l, j, p)] -= g;
                    grad[ly.mu(p, j)] += g;
                    grad[ly.logsig(p, j)] += 0.5 * (t[j] * e[j] - 1.0);
                }
                for (int i = 0; i < J; ++i)
                    for (int j0 = 0; j0 <= i; ++j0) What[i * J + j0] += t[i] * s[j0];
            }
        }

        // LKJ density, the z -> Omega Jacobian and the tanh Jacobian share a
        // per-entry log(1 - z^2) with coefficient eta + (J - j0 - 2) / 2.
        for (int i = 1; i < J; ++i) {
            for (int j0 = 0; j0 < i; ++j0) {
                double zz = z[i * (i - 1) / 2 + j0];
                double coef = kLkjEta + 0.5 * (J - j0 - 2);
                lp += coef * std::log1p(-zz * zz);
                if (grad) grad[ly.y(p, i, j0)] += -2.0 * zz * coef;
            }
        }
        lp += lkj_log_normalizer(J, kLkjEta);

        if (grad) {
            for (int j = 0; j < J; ++j) What[j * J + j] -= L / W[j * J + j];
            // adjoint of the per-row Cholesky construction, then tanh
            for (int i = 1; i < J; ++i) {
                double suffix = What[i * J + i] * W[i * J + i];
                for (int k = i - 1; k >= 0; --k) {
                    double zik = z[i * (i - 1) / 2 + k];
                    double one_m = 1.0 - zik * zik;
                    // prefix product c_{ik}: W_{ik} / z_{ik} is unstable, rebuild
                    double c = 1.0;
                    for (int m = 0; m < k; ++m) {
                        double zm = z[i * (i - 1) / 2 + m];
                        c *= std::sqrt(1.0 - zm * zm);
                    }
                    double zhat = What[i * J + k] * c - zik / one_m * suffix;
                    grad[ly.y(p, i, k)] += zhat * one_m;
                    suffix += What[i * J + k] * W[i * J + k];
                }
            }
        }
    }
    return lp;
}

double Posterior::log_likelihood_impl(std::span<const double> q, double* grad) const {
    const int V = V_, J = V - 1, P = layout_.P;
    double lp = coeff_const_;
    std::vector<double> x(P), eta(V), alpha(V);
    for (std::size_t ci = 0; ci < cells_.size(); ++ci) {
        const Cell& cell = cells_[ci];
        const std::int64_t* cnt = &cell_counts_[ci * static_cast<std::size_t>(V)];
        design_row(cell.t_scaled, P, x.data());
        int l = spec_.baseline() ? 0 : cell.l;
        for (int j = 0; j < J; ++j) {
            double acc = 0.0;
            for (int p = 0; p < P; ++p) acc += q[layout_.gamma(l, j, p)] * x[p];
            eta[j] = acc;
        }
        eta[J] = 0.0;

        if (spec_.emission == Emission::Multinomial) {
            double m = *std::max_element(eta.begin(), eta.end());
            double zsum = 0.0;
            for (int v = 0; v < V; ++v) zsum += std::exp(eta[v] - m);
            double logz = m + std::log(zsum);
            for (int v = 0; v < V; ++v)
                if (cnt[v] > 0) lp += cnt[v] * (eta[v] - logz);
            if (grad) {
                for (int j = 0; j < J; ++j) {
                    double g = cnt[j] - cell.n * std::exp(eta[j] - logz);
                    for (int p = 0; p < P; ++p) grad[layout_.gamma(l, j, p)] += g * x[p];
                }
            }
        } else {
            double A = 0.0;
            bool overflow = false;
            for (int v = 0; v < V; ++v) {
                if (eta[v] > kEtaCap) {
                    overflow = true;
                    break;
                }
                alpha[v] = std::exp(eta[v]);
                A += alpha[v];
            }
            if (overflow) return -std::numeric_limits<double>::infinity();
            lp += lgam(A) - lgam(cell.n + A);
            for (int v = 0; v < V; ++v)
                if (cnt[v] > 0) lp += lgam(cnt[v] + alpha[v]) - lgam(alpha[v]);
            if (grad) {
                double base = digam(A) - digam(cell.n + A);
                for (int j = 0; j < J; ++j) {
                    double g = base;
                    if (cnt[j] > 0) g += digam(cnt[j] + alpha[j]) - digam(alpha[j]);
                    g *= alpha[j];
                    for (int p = 0; p < P; ++p) grad[layout_.gamma(l, j, p)] += g * x[p];
                }
            }
        }
    }
    return lp;
}

double Posterior::log_density(std::span<const double> q, std::span<double> grad) const {
    std::fill(grad.begin(), grad.end(), 0.0);
    double ll = log_likelihood_impl(q, grad.data());
    if (!std::isfinite(ll)) return -std::numeric_limits<double>::infinity();
    return ll + log_prior_impl(q, grad.data());
}

double Posterior::log_likelihood(std::span<const double> q) const {
    return log_likelihood_impl(q, nullptr);
}

double Posterior::log_prior(std::span<const double> q) const {
    return log_prior_impl(q, nullptr);
}

void Posterior::linear_predictor(std::span<const double> q, int location, double t_scaled,
                                 std::span<double> eta) const {
    const int J = V_ - 1, P = layout_.P;
    std::vector<double> x(P);
    design_row(t_scaled, P, x.data());
    int l = spec_.baseline() ? 0 : location;
    for (int j = 0; j < J; ++j) {
        double acc = 0.0;
        for (int p = 0; p < P; ++p) acc += q[layout_.gamma(l, j, p)] * x[p];
        eta[j] = acc;
    }
    eta[J] = 0.0;
}

double multinomial_log_pmf(std::span<const double> pi, std::span<const std::int64_t> counts) {
    if (pi.size() != counts.size()) throw std::invalid_argument("pmf shape mismatch");
    std::int64_t n = 0;
    for (std::int64_t c : counts) n += c;
    double lp = lgam(static_cast<double>(n) + 1.0);
    for (std::size_t v = 0; v < pi.size(); ++v) {
        if (counts[v] == 0) continue;
        lp -= lgam(static_cast<double>(counts[v]) + 1.0);
        lp += static_cast<double>(counts[v]) * std::log(pi[v]);
    }
    return lp;
}

double dm_log_pmf(std::span<const double> alpha, std::span<const std::int64_t> counts) {
    if (alpha.size() != counts.size()) throw std::invalid_argument("pmf shape mismatch");
    std::int64_t n = 0;
    double a_total = 0.0;
    for (std::size_t v = 0; v < alpha.size(); ++v) {
        n += counts[v];
        a_total += alpha[v];
    }
    double lp = lgam(static_cast<double>(n) + 1.0) + lgam(a_total) -
                lgam(static_cast<double>(n) + a_total);
    for (std::size_t v = 0; v < alpha.size(); ++v) {
        lp -= lgam(static_cast<double>(counts[v]) + 1.0);
        lp += lgam(static_cast<double>(counts[v]) + alpha[v]) - lgam(alpha[v]);
    }
    return lp;
}

std::vector<double> initial_point(const Posterior& post, Rng& rng) {
    const ParamLayout& ly = post.layout();
    std::vector<double> q(ly.total), grad(ly.total);
    for (int attempt = 0; attempt < 100; ++attempt) {
        for (int i = 0; i < ly.sig_off; ++i) q[i] = rng.uniform(-2.0, 2.0);
        for (int i = ly.sig_off; i < ly.y_off; ++i) q[i] = rng.uniform(-1.0, 1.0);
        for (int i = ly.y_off; i < ly.total; ++i) q[i] = 0.0;
        if (std::isfinite(post.log_density(q, grad))) return q;
    }
    throw std::runtime_error("no finite start for " + post.spec().code() + " (dim " +
                             std::to_string(ly.total) + ") after 100 attempts");
}

}  // namespace cladecast
