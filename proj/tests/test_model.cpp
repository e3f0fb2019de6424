#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "cladecast/model.hpp"
#include "cladecast/rng.hpp"

using namespace cladecast;

namespace {

CountDataset toy_dataset(int L, int V, int days, double daily_mean, std::uint64_t seed) {
    CountDataset d;
    d.submission_date = Date(2024, 1, 3);
    d.as_of = d.submission_date;
    d.window_start = d.submission_date - (days - 1);
    d.num_days = days;
    for (int j = 1; j < V; ++j) d.clades.modeled.push_back("V" + std::to_string(j));
    for (int l = 0; l < L; ++l) d.locations.push_back({char('A' + l), 'X'});
    d.counts.assign(static_cast<std::size_t>(L) * days * V, 0);
    Rng rng(seed);
    std::vector<double> pi(V), eta(V);
    std::vector<std::int64_t> row(V);
    for (int l = 0; l < L; ++l) {
        for (int t = 0; t < days; ++t) {
            double z = 0.0;
            for (int v = 0; v < V; ++v) {
                eta[v] = v + 1 == V ? 0.0 : 0.3 * (v - 1) + 0.02 * t * (l - 1);
                z += std::exp(eta[v]);
            }
            for (int v = 0; v < V; ++v) pi[v] = std::exp(eta[v]) / z;
            std::int64_t n = rng.poisson(daily_mean);
            rng.multinomial(n, pi, row);
            for (int v = 0; v < V; ++v) d.at(l, t, v) = row[v];
        }
    }
    return d;
}

std::vector<double> random_point(const Posterior& post, Rng& rng) {
    std::vector<double> q(post.dim());
    for (double& x : q) x = rng.uniform(-1.0, 1.0);
    return q;
}

}  // namespace

TEST_CASE("model codes") {
    CHECK(ModelSpec::all().size() == 13);
    ModelSpec slm = ModelSpec::parse("SLM");
    CHECK(slm.pool == PoolStructure::Shared);
    CHECK(slm.degree == 2);
    CHECK(slm.emission == Emission::Multinomial);
    CHECK(slm.code() == "SLM");
    ModelSpec ccd = ModelSpec::parse("CCD");
    CHECK(ccd.correlated());
    CHECK(ccd.degree == 4);
    CHECK(ccd.emission == Emission::DirichletMultinomial);
    ModelSpec base = ModelSpec::parse("baseline");
    CHECK(base.baseline());
    CHECK(base.degree == 2);
    CHECK_THROWS(ModelSpec::parse("XXX"));
    for (const ModelSpec& m : ModelSpec::all()) CHECK(ModelSpec::parse(m.code()).code() == m.code());
}

TEST_CASE("parameter dimensions") {
    CHECK(ParamLayout::make(ModelSpec::parse("SLM"), 52, 10).dim() == 956);
    CHECK(ParamLayout::make(ModelSpec::parse("baseline"), 52, 10).dim() == 18);
    CHECK(ParamLayout::make(ModelSpec::parse("CCD"), 2, 3).dim() == 36);
    // individual variances: one per (order, category)
    CHECK(ParamLayout::make(ModelSpec::parse("ILM"), 5, 3).dim() == 5 * 2 * 2 + 2 * 2 + 2 * 2);
    // baseline ignores the location count
    CHECK(ParamLayout::make(ModelSpec::parse("baseline"), 1, 10).dim() == 18);
}

TEST_CASE("design row and time scale") {
    TimeScale ts;
    CHECK(ts.scaled(75.0) == 0.0);
    CHECK(ts.scaled(0.0) == -1.0);
    CHECK(ts.scaled(150.0) == 1.0);
    CHECK(ts.scaled(160.0) > 1.0);
    double x4[4];
    design_row(-0.5, 4, x4);
    CHECK(x4[0] == 1.0);
    CHECK(x4[1] == -0.5);
    CHECK(x4[2] == 0.25);
    CHECK(x4[3] == -0.125);
}

TEST_CASE("canonical partial correlations to cholesky") {
    // zero entries give the identity factor
    std::vector<double> W(9);
    std::vector<double> z{0.0, 0.0, 0.0};
    cpc_to_cholesky(z, 3, W.data());
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) CHECK(W[i * 3 + j] == (i == j ? 1.0 : 0.0));
    // random entries: rows have unit norm so WW' is a correlation matrix
    Rng rng(7);
    for (int trial = 0; trial < 10; ++trial) {
        const int K = 4;
        std::vector<double> zz(K * (K - 1) / 2);
        for (double& v : zz) v = std::tanh(rng.normal());
        std::vector<double> F(K * K);
        cpc_to_cholesky(zz, K, F.data());
        for (int i = 0; i < K; ++i) {
            double norm = 0.0;
            for (int j = 0; j <= i; ++j) norm += F[i * K + j] * F[i * K + j];
            CHECK(norm == doctest::Approx(1.0).epsilon(1e-12));
            for (int j = i + 1; j < K; ++j) CHECK(F[i * K + j] == 0.0);
        }
        // the (1,0) correlation equals the first canonical entry
        double r10 = 0.0;
        for (int j = 0; j < K; ++j) r10 += F[1 * K + j] * F[0 * K + j];
        CHECK(r10 == doctest::Approx(zz[0]).epsilon(1e-12));
    }
}

TEST_CASE("lkj normalizer against quadrature") {
    CHECK(lkj_log_normalizer(2, 2.0) == doctest::Approx(std::log(3.0 / 4.0)).epsilon(1e-12));
    CHECK(lkj_log_normalizer(2, 1.0) == doctest::Approx(std::log(0.5)).epsilon(1e-12));
    // K=3: midpoint rule over the elliptope for det(Omega)^(eta-1)
    const int N = 120;
    const double h = 2.0 / N;
    double acc = 0.0;
    for (int i = 0; i < N; ++i) {
        double a = -1 + h * (i + 0.5);
        for (int j = 0; j < N; ++j) {
            double b = -1 + h * (j + 0.5);
            for (int k = 0; k < N; ++k) {
                double c = -1 + h * (k + 0.5);
                double det = 1 + 2 * a * b * c - a * a - b * b - c * c;
                if (det > 0) acc += det * h * h * h;
            }
        }
    }
    CHECK(lkj_log_normalizer(3, 2.0) == doctest::Approx(std::log(1.0 / acc)).epsilon(1e-3));
}

TEST_CASE("emission pmfs") {
    // multinomial: V=2, uniform, counts (1,1) -> log(1/2)
    std::vector<double> pi{0.5, 0.5};
    std::vector<std::int64_t> c{1, 1};
    CHECK(multinomial_log_pmf(pi, c) == doctest::Approx(std::log(0.5)).epsilon(1e-14));
    // DM with alpha (1,1): total 2 lands uniformly on {0,1,2}
    std::vector<double> a{1.0, 1.0};
    CHECK(dm_log_pmf(a, c) == doctest::Approx(std::log(1.0 / 3.0)).epsilon(1e-14));
    // pmfs sum to one over the support
    Rng rng(11);
    for (int trial = 0; trial < 5; ++trial) {
        double p = rng.uniform(0.1, 0.9);
        std::vector<double> pp{p, 1 - p};
        std::vector<double> aa{rng.uniform(0.2, 5.0), rng.uniform(0.2, 5.0)};
        const std::int64_t n = 12;
        double sm = 0.0, sd = 0.0;
        for (std::int64_t k = 0; k <= n; ++k) {
            std::vector<std::int64_t> kk{k, n - k};
            sm += std::exp(multinomial_log_pmf(pp, kk));
            sd += std::exp(dm_log_pmf(aa, kk));
        }
        CHECK(sm == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(sd == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("dm pmf approaches the multinomial as concentrations grow") {
    Rng rng(13);
    for (int trial = 0; trial < 100; ++trial) {
        int V = 2 + static_cast<int>(rng.uniform_below(5));
        // keep the simplex away from zero: the finite-K gap at a category is
        // ~ k(k-1) / (2 K pi), so vanishing pi with a lucky count breaks the
        // limit long before K = 1e6
        std::vector<double> pi(V);
        double z = 0.0;
        for (double& p : pi) z += (p = rng.gamma(1.0));
        for (double& p : pi) p = 0.5 * p / z + 0.5 / V;
        std::vector<std::int64_t> counts(V);
        const std::int64_t n = 1 + static_cast<std::int64_t>(rng.uniform_below(25));
        rng.multinomial(n, pi, counts);
        const double K = 1e6;
        std::vector<double> alpha(V);
        for (int v = 0; v < V; ++v) alpha[v] = K * pi[v];
        CHECK(std::abs(dm_log_pmf(alpha, counts) - multinomial_log_pmf(pi, counts)) < 1e-3);
    }
}

TEST_CASE("dm count variance shrinks as total concentration grows") {
    // V=2, n=10, mean ratio fixed at 1:1; variance of the first count
    auto var_at = [](double scale) {
        std::vector<double> a{scale, scale};
        const std::int64_t n = 10;
        double m1 = 0.0, m2 = 0.0;
        for (std::int64_t k = 0; k <= n; ++k) {
            std::vector<std::int64_t> kk{k, n - k};
            double p = std::exp(dm_log_pmf(a, kk));
            m1 += p * k;
            m2 += p * k * k;
        }
        return m2 - m1 * m1;
    };
    double prev = var_at(0.25);
    for (double s : {1.0, 4.0, 16.0, 64.0}) {
        double v = var_at(s);
        CHECK(v < prev);
        prev = v;
    }
    // and the large-concentration limit is the binomial variance
    CHECK(var_at(1e7) == doctest::Approx(10 * 0.5 * 0.5).epsilon(1e-4));
}

TEST_CASE("baseline prior is flat and symmetric gradients vanish") {
    CountDataset d = toy_dataset(1, 2, 1, 0.0, 1);
    d.at(0, 0, 0) = 3;
    d.at(0, 0, 1) = 3;  // symmetric two-category counts
    Posterior post(d, ModelSpec::parse("baseline"));
    REQUIRE(post.dim() == 2);
    std::vector<double> q{0.4, -1.3}, g(2);
    CHECK(post.log_prior(q) == 0.0);
    std::fill(q.begin(), q.end(), 0.0);
    post.log_density(q, g);
    CHECK(g[0] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("hierarchical gamma term is a normal density") {
    // SLM at mu = 0, sigma^2 = 1: moving one gamma from 0 to 1 costs exactly
    // the standard-normal log-density drop of 1/2, with hyperpriors fixed.
    CountDataset d = toy_dataset(4, 3, 5, 20.0, 2);
    Posterior post(d, ModelSpec::parse("SLM"));
    const ParamLayout& ly = post.layout();
    std::vector<double> q(post.dim(), 0.0);  // gamma = mu = 0, log sigma^2 = 0
    std::vector<double> q2 = q;
    q2[ly.gamma(0, 0, 0)] = 1.0;
    CHECK(post.log_prior(q2) - post.log_prior(q) == doctest::Approx(-0.5).epsilon(1e-12));
    // doubling the variance halves the quadratic cost and pays log sigma
    std::vector<double> q3 = q, q4 = q2;
    q3[ly.logsig(0, 0)] = std::log(2.0);
    q4[ly.logsig(0, 0)] = std::log(2.0);
    CHECK(post.log_prior(q4) - post.log_prior(q3) == doctest::Approx(-0.25).epsilon(1e-12));
}

TEST_CASE("likelihood examples and invariances") {
    // V=2, gamma=0, counts (1,1): multinomial log(1/2), DM log(1/3)
    CountDataset d = toy_dataset(1, 2, 1, 0.0, 3);
    d.at(0, 0, 0) = 1;
    d.at(0, 0, 1) = 1;
    Posterior pm(d, ModelSpec::parse("baseline"));
    std::vector<double> q0(pm.dim(), 0.0);
    CHECK(pm.log_likelihood(q0) == doctest::Approx(std::log(0.5)).epsilon(1e-12));
    Posterior pd(d, ModelSpec::parse("SLD"));
    std::vector<double> qd(pd.dim(), 0.0);
    CHECK(pd.log_likelihood(qd) == doctest::Approx(std::log(1.0 / 3.0)).epsilon(1e-12));

    // log-odds reconstruction: eta_v - eta_V = gamma'x with eta_V = 0
    CountDataset d2 = toy_dataset(2, 3, 8, 25.0, 4);
    Posterior p2(d2, ModelSpec::parse("ILM"));
    Rng rng(5);
    std::vector<double> q = random_point(p2, rng);
    std::vector<double> eta(3);
    p2.linear_predictor(q, 1, 0.3, eta);
    CHECK(eta[2] == 0.0);
    const ParamLayout& ly = p2.layout();
    double x[2];
    design_row(0.3, 2, x);
    for (int j = 0; j < 2; ++j) {
        double dot = 0.0;
        for (int p = 0; p < 2; ++p) dot += q[ly.gamma(1, j, p)] * x[p];
        CHECK(eta[j] == doctest::Approx(dot).epsilon(1e-12));
    }
}

TEST_CASE("single-cell likelihood equals the free emission pmfs") {
    CountDataset d = toy_dataset(1, 3, 1, 0.0, 6);
    d.at(0, 0, 0) = 4;
    d.at(0, 0, 1) = 2;
    d.at(0, 0, 2) = 5;
    std::vector<std::int64_t> counts{4, 2, 5};
    Rng rng(17);
    // the lone cell sits at scaled time -1 in the fixed window map
    double x[2];
    design_row(-1.0, 2, x);

    Posterior pm(d, ModelSpec::parse("ILM"));
    std::vector<double> q = random_point(pm, rng);
    const ParamLayout& lym = pm.layout();
    std::vector<double> pi(3), eta(3, 0.0);
    double z = 0.0;
    for (int j = 0; j < 2; ++j) {
        eta[j] = q[lym.gamma(0, j, 0)] * x[0] + q[lym.gamma(0, j, 1)] * x[1];
    }
    for (int v = 0; v < 3; ++v) z += std::exp(eta[v]);
    for (int v = 0; v < 3; ++v) pi[v] = std::exp(eta[v]) / z;
    CHECK(pm.log_likelihood(q) ==
          doctest::Approx(multinomial_log_pmf(pi, counts)).epsilon(1e-12));

    Posterior pdm(d, ModelSpec::parse("ILD"));
    std::vector<double> qd = random_point(pdm, rng);
    const ParamLayout& lyd = pdm.layout();
    std::vector<double> alpha(3);
    for (int j = 0; j < 2; ++j)
        alpha[j] = std::exp(qd[lyd.gamma(0, j, 0)] * x[0] + qd[lyd.gamma(0, j, 1)] * x[1]);
    alpha[2] = 1.0;
    CHECK(pdm.log_likelihood(qd) == doctest::Approx(dm_log_pmf(alpha, counts)).epsilon(1e-12));
}

TEST_CASE("count splitting shifts the likelihood by a constant only") {
    CountDataset d = toy_dataset(1, 3, 1, 0.0, 8);
    d.at(0, 0, 0) = 6;
    d.at(0, 0, 1) = 4;
    d.at(0, 0, 2) = 2;
    // split the day's counts across two locations: a baseline model pools
    // them onto the same linear predictor, so only the multinomial
    // coefficient changes
    CountDataset d2 = toy_dataset(2, 3, 1, 0.0, 8);
    d2.at(0, 0, 0) = 3;
    d2.at(0, 0, 1) = 2;
    d2.at(0, 0, 2) = 1;
    d2.at(1, 0, 0) = 3;
    d2.at(1, 0, 1) = 2;
    d2.at(1, 0, 2) = 1;
    Posterior whole(d, ModelSpec::parse("baseline"));
    Posterior parts(d2, ModelSpec::parse("baseline"));
    REQUIRE(whole.dim() == parts.dim());
    Rng rng(21);
    std::vector<double> q = random_point(whole, rng);
    std::vector<double> g1(q.size()), g2(q.size());
    double a = whole.log_density(q, g1);
    double b = parts.log_density(q, g2);
    std::vector<double> q2 = random_point(whole, rng);
    std::vector<double> h1(q.size()), h2(q.size());
    double a2 = whole.log_density(q2, h1);
    double b2 = parts.log_density(q2, h2);
    CHECK(a - b == doctest::Approx(a2 - b2).epsilon(1e-10));  // constant offset
    for (std::size_t i = 0; i < q.size(); ++i) CHECK(g1[i] == doctest::Approx(g2[i]).epsilon(1e-10));
}

TEST_CASE("gradients match finite differences on every spec") {
    CountDataset d = toy_dataset(3, 3, 12, 30.0, 9);
    Rng rng(23);
    for (const ModelSpec& spec : ModelSpec::all()) {
        Posterior post(d, spec);
        std::vector<double> g(post.dim()), dummy(post.dim());
        for (int pt = 0; pt < 3; ++pt) {
            std::vector<double> q = random_point(post, rng);
            double f0 = post.log_density(q, g);
            REQUIRE(std::isfinite(f0));
            const double h = 1e-5;
            for (int i = 0; i < post.dim(); ++i) {
                std::vector<double> qp = q, qm = q;
                qp[i] += h;
                qm[i] -= h;
                double fd =
                    (post.log_density(qp, dummy) - post.log_density(qm, dummy)) / (2 * h);
                CAPTURE(spec.code());
                CAPTURE(i);
                CHECK(std::abs(g[i] - fd) <=
                      1e-7 + 1e-5 * std::max(std::abs(g[i]), std::abs(fd)));
            }
        }
    }
}

TEST_CASE("posterior composes prior and likelihood at the origin") {
    CountDataset d = toy_dataset(2, 3, 10, 20.0, 10);
    for (const char* code : {"SLM", "CCD", "baseline"}) {
        Posterior post(d, ModelSpec::parse(code));
        std::vector<double> q(post.dim(), 0.0), g(post.dim());
        double v = post.log_density(q, g);
        CHECK(v == doctest::Approx(post.log_prior(q) + post.log_likelihood(q)).epsilon(1e-12));
    }
}

TEST_CASE("shared and individual priors share the hierarchical gamma term") {
    CountDataset d = toy_dataset(3, 3, 6, 15.0, 12);
    Posterior shared(d, ModelSpec::parse("SLM"));
    Posterior indiv(d, ModelSpec::parse("ILM"));
    const ParamLayout& lys = shared.layout();
    const ParamLayout& lyi = indiv.layout();
    Rng rng(29);
    // equal variances across categories; gamma/mu blocks identical
    std::vector<double> qs(shared.dim(), 0.0), qi(indiv.dim(), 0.0);
    for (int l = 0; l < 3; ++l)
        for (int j = 0; j < 2; ++j)
            for (int p = 0; p < 2; ++p) {
                double v = rng.normal();
                qs[lys.gamma(l, j, p)] = v;
                qi[lyi.gamma(l, j, p)] = v;
            }
    for (int p = 0; p < 2; ++p)
        for (int j = 0; j < 2; ++j) {
            double m = rng.normal();
            qs[lys.mu(p, j)] = m;
            qi[lyi.mu(p, j)] = m;
        }
    double ls0 = rng.uniform(-0.5, 0.5), ls1 = rng.uniform(-0.5, 0.5);
    qs[lys.logsig(0, 0)] = ls0;
    qs[lys.logsig(1, 0)] = ls1;
    for (int j = 0; j < 2; ++j) {
        qi[lyi.logsig(0, j)] = ls0;
        qi[lyi.logsig(1, j)] = ls1;
    }
    // difference the gamma term out: change one gamma, priors move equally
    std::vector<double> qs2 = qs, qi2 = qi;
    qs2[lys.gamma(2, 1, 1)] += 0.7;
    qi2[lyi.gamma(2, 1, 1)] += 0.7;
    CHECK(shared.log_prior(qs2) - shared.log_prior(qs) ==
          doctest::Approx(indiv.log_prior(qi2) - indiv.log_prior(qi)).epsilon(1e-12));
}

TEST_CASE("initial point properties") {
    CountDataset d = toy_dataset(3, 3, 10, 25.0, 14);
    Posterior post(d, ModelSpec::parse("CCM"));
    const ParamLayout& ly = post.layout();
    Rng r1(100), r2(101), r3(100);
    auto q = initial_point(post, r1);
    auto qb = initial_point(post, r2);
    auto qc = initial_point(post, r3);
    std::vector<double> g(post.dim());
    CHECK(std::isfinite(post.log_density(q, g)));
    for (int i = 0; i < ly.sig_off; ++i) {
        CHECK(q[i] >= -2.0);
        CHECK(q[i] <= 2.0);
    }
    for (int i = ly.sig_off; i < ly.y_off; ++i) {
        CHECK(q[i] >= -1.0);
        CHECK(q[i] <= 1.0);
    }
    for (int i = ly.y_off; i < ly.total; ++i) CHECK(q[i] == 0.0);
    CHECK(q != qb);  // different seeds move
    CHECK(q == qc);  // same seed reproduces
}
