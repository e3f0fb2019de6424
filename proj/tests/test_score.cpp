#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "cladecast/rng.hpp"
#include "cladecast/score.hpp"

using namespace cladecast;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double dist(const std::int64_t* a, const std::int64_t* b, int V) {
    double s = 0.0;
    for (int v = 0; v < V; ++v) {
        double d = static_cast<double>(a[v] - b[v]);
        s += d * d;
    }
    return std::sqrt(s);
}

// full O(n^2) double-sum oracle, euclidean norm
double oracle_energy(const std::vector<std::int64_t>& ens, int V,
                     const std::vector<std::int64_t>& z) {
    const int n = static_cast<int>(ens.size()) / V;
    double t1 = 0.0;
    for (int i = 0; i < n; ++i) t1 += dist(ens.data() + i * V, z.data(), V);
    t1 /= n;
    double t2 = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) t2 += dist(ens.data() + i * V, ens.data() + j * V, V);
    t2 /= 2.0 * n * n;
    return t1 - t2;
}

std::vector<std::int64_t> random_ensemble(Rng& rng, int n, int V, std::int64_t total) {
    std::vector<std::int64_t> out(static_cast<std::size_t>(n) * V);
    std::vector<double> pi(V);
    for (int i = 0; i < n; ++i) {
        double z = 0.0;
        for (int v = 0; v < V; ++v) {
            pi[v] = rng.gamma(1.0) + 0.05;
            z += pi[v];
        }
        for (int v = 0; v < V; ++v) pi[v] /= z;
        std::span<std::int64_t> row(out.data() + static_cast<std::size_t>(i) * V,
                                    static_cast<std::size_t>(V));
        rng.multinomial(total, pi, row);
    }
    return out;
}

}  // namespace

TEST_CASE("norm names") {
    CHECK(parse_energy_norm("euclidean") == EnergyNorm::Euclidean);
    CHECK(parse_energy_norm("sum_of_squares") == EnergyNorm::SumOfSquares);
    CHECK(parse_energy_norm("paper") == EnergyNorm::SumOfSquares);
    CHECK_THROWS(parse_energy_norm("manhattan"));
    CHECK(energy_norm_name(EnergyNorm::Euclidean) == "euclidean");
    CHECK(energy_norm_name(EnergyNorm::SumOfSquares) == "sum_of_squares");
}

TEST_CASE("single-member ensemble") {
    // f = (1,0), z = (0,1): euclidean sqrt(2), squared 2 (no pairwise term)
    std::vector<std::int64_t> ens{1, 0};
    std::vector<std::int64_t> z{0, 1};
    Rng rng(1);
    CHECK(energy_score(ens, 2, z, EnergyNorm::Euclidean, 0, rng) ==
          doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
    CHECK(energy_score(ens, 2, z, EnergyNorm::SumOfSquares, 0, rng) ==
          doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("euclidean energy matches the double-sum oracle exactly") {
    Rng rng(42);
    for (int trial = 0; trial < 12; ++trial) {
        int n = 2 + static_cast<int>(rng.uniform_below(199));
        int V = 2 + static_cast<int>(rng.uniform_below(9));
        auto ens = random_ensemble(rng, n, V, 30);
        std::vector<std::int64_t> z(V, 0);
        std::span<std::int64_t> zs(z);
        std::vector<double> pi(V, 1.0 / V);
        rng.multinomial(30, pi, zs);
        Rng score_rng(7);
        // pair_samples >= n forces the exact path
        double got = energy_score(ens, V, z, EnergyNorm::Euclidean, n, score_rng);
        CHECK(got == doctest::Approx(oracle_energy(ens, V, z)).epsilon(1e-10));
        Rng score_rng2(7);
        double exact_flag = energy_score(ens, V, z, EnergyNorm::Euclidean, 0, score_rng2);
        CHECK(exact_flag == got);
    }
}

TEST_CASE("sum of squares collapses to the squared error of the mean") {
    Rng rng(43);
    for (int trial = 0; trial < 12; ++trial) {
        int n = 2 + static_cast<int>(rng.uniform_below(150));
        int V = 2 + static_cast<int>(rng.uniform_below(8));
        auto ens = random_ensemble(rng, n, V, 25);
        std::vector<std::int64_t> z(V, 0);
        z[0] = 10;
        z[V - 1] = 15;
        double want = 0.0;
        for (int v = 0; v < V; ++v) {
            double m = 0.0;
            for (int i = 0; i < n; ++i) m += static_cast<double>(ens[i * V + v]);
            m /= n;
            want += (z[v] - m) * (z[v] - m);
        }
        Rng score_rng(1);
        double got = energy_score(ens, V, z, EnergyNorm::SumOfSquares, 500, score_rng);
        CHECK(got == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("member subsampling is unbiased for the pairwise term") {
    Rng rng(44);
    const int n = 120, V = 4;
    auto ens = random_ensemble(rng, n, V, 40);
    std::vector<std::int64_t> z{10, 10, 10, 10};
    Rng exact_rng(0);
    double exact = energy_score(ens, V, z, EnergyNorm::Euclidean, 0, exact_rng);
    // average the subsampled estimator over many seeds
    const int reps = 600;
    double acc = 0.0, acc2 = 0.0;
    for (int r = 0; r < reps; ++r) {
        Rng sub_rng(1000 + r);
        double e = energy_score(ens, V, z, EnergyNorm::Euclidean, 30, sub_rng);
        acc += e;
        acc2 += e * e;
    }
    double mean = acc / reps;
    double sd = std::sqrt((acc2 / reps - mean * mean) / reps);
    CHECK(std::abs(mean - exact) < 4.0 * sd + 1e-12);
    CHECK(sd > 0.0);  // the estimator actually varies
    // determinism for a fixed stream
    Rng a(5), b(5);
    CHECK(energy_score(ens, V, z, EnergyNorm::Euclidean, 30, a) ==
          energy_score(ens, V, z, EnergyNorm::Euclidean, 30, b));
}

TEST_CASE("energy score stays below the plain mean distance") {
    // the half pairwise term rewards spread: ES < mean ||z - f|| whenever
    // members differ
    std::vector<std::int64_t> ens{5, 0, 0, 5, 3, 2};
    std::vector<std::int64_t> z{4, 1};
    Rng rng(3);
    double es = energy_score(ens, 2, z, EnergyNorm::Euclidean, 0, rng);
    double plain = 0.0;
    for (int i = 0; i < 3; ++i) plain += dist(ens.data() + i * 2, z.data(), 2);
    plain /= 3.0;
    CHECK(es < plain);
}

TEST_CASE("energy score is proper on a discrete example") {
    // observations from multinomial(20, (0.6, 0.4)); the matching forecast
    // must win on average over a mis-centered one by a clear margin
    Rng rng(55);
    const std::int64_t n = 20;
    const int reps = 400;
    std::vector<double> diffs;
    std::vector<double> true_pi{0.6, 0.4}, wrong_pi{0.3, 0.7};
    for (int r = 0; r < reps; ++r) {
        std::vector<std::int64_t> z(2);
        std::span<std::int64_t> zs(z);
        rng.multinomial(n, true_pi, zs);
        std::vector<std::int64_t> good(100 * 2), bad(100 * 2);
        for (int i = 0; i < 100; ++i) {
            std::span<std::int64_t> g(good.data() + i * 2, 2);
            std::span<std::int64_t> b(bad.data() + i * 2, 2);
            rng.multinomial(n, true_pi, g);
            rng.multinomial(n, wrong_pi, b);
        }
        Rng sr(900 + r);
        double eg = energy_score(good, 2, z, EnergyNorm::Euclidean, 0, sr);
        double eb = energy_score(bad, 2, z, EnergyNorm::Euclidean, 0, sr);
        diffs.push_back(eb - eg);
    }
    double m = 0.0;
    for (double d : diffs) m += d;
    m /= reps;
    double v = 0.0;
    for (double d : diffs) v += (d - m) * (d - m);
    double se = std::sqrt(v / (reps - 1) / reps);
    CHECK(m > 3.0 * se);  // the true forecast wins by more than 3 sigma
}

TEST_CASE("brier score examples and bounds") {
    // observed all in category 1, forecast mean (1/2, 1/2) -> 1/4
    std::vector<double> mean{0.5, 0.5};
    std::vector<std::int64_t> obs{7, 0};
    CHECK(brier_score(mean, obs) == doctest::Approx(0.25).epsilon(1e-14));
    // perfect forecast scores zero
    std::vector<double> perfect{1.0, 0.0};
    CHECK(brier_score(perfect, obs) == doctest::Approx(0.0).epsilon(1e-14));
    // direct-sum cross-check on a random case
    Rng rng(8);
    std::vector<double> m3{0.2, 0.5, 0.3};
    std::vector<std::int64_t> o3{3, 5, 2};
    double want = 0.0;
    for (int v = 0; v < 3; ++v) {
        double p = o3[v] / 10.0;
        want += 0.5 * (p * (m3[v] - 1) * (m3[v] - 1) + (1 - p) * m3[v] * m3[v]);
    }
    CHECK(brier_score(m3, o3) == doctest::Approx(want).epsilon(1e-14));
    CHECK(brier_score(m3, o3) >= 0.0);
    CHECK(brier_score(m3, o3) <= 1.0);
    // no observations -> NaN
    std::vector<std::int64_t> none{0, 0, 0};
    CHECK(std::isnan(brier_score(m3, none)));
}

TEST_CASE("finite mean and median skip missing values") {
    std::vector<double> v{1.0, kNaN, 3.0};
    CHECK(finite_mean(v) == doctest::Approx(2.0));
    CHECK(finite_median(v) == doctest::Approx(2.0));
    std::vector<double> even{4.0, 1.0, 3.0, 2.0};
    CHECK(finite_median(even) == doctest::Approx(2.5));  // midpoint convention
    std::vector<double> odd{5.0, 1.0, 3.0};
    CHECK(finite_median(odd) == doctest::Approx(3.0));
    std::vector<double> empty;
    CHECK(std::isnan(finite_mean(empty)));
    CHECK(std::isnan(finite_median(empty)));
    std::vector<double> all_nan{kNaN, kNaN};
    CHECK(std::isnan(finite_mean(all_nan)));
    CHECK(std::isnan(finite_median(all_nan)));
    // pooled cells weight every entry equally: a two-group mean with unequal
    // group sizes is the size-weighted average of the group means
    std::vector<double> groups{1.0, 1.0, 1.0, 5.0};  // sizes 3 and 1
    CHECK(finite_mean(groups) == doctest::Approx((3.0 * 1.0 + 1.0 * 5.0) / 4.0));
}
