#include "cladecast/score.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace cladecast {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double euclidean(const std::int64_t* a, const std::int64_t* b, int V) {
    double acc = 0.0;
    for (int v = 0; v < V; ++v) {
        double d = static_cast<double>(a[v] - b[v]);
        acc += d * d;
    }
    return std::sqrt(acc);
}

// mean distance over the distinct pairs within `members`
double mean_pair_distance(std::span<const std::int64_t> ensemble, int V,
                          std::span<const std::size_t> members) {
    const std::size_t k = members.size();
    double sum = 0.0;
    for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b = a + 1; b < k; ++b)
            sum += euclidean(&ensemble[members[a] * V], &ensemble[members[b] * V], V);
    return sum / (static_cast<double>(k) * (k - 1) / 2.0);
}

}  // namespace

EnergyNorm parse_energy_norm(const std::string& name) {
    if (name == "euclidean") return EnergyNorm::Euclidean;
    if (name == "sum_of_squares" || name == "paper") return EnergyNorm::SumOfSquares;
    throw std::invalid_argument("unknown energy norm: " + name);
}

std::string energy_norm_name(EnergyNorm norm) {
    return norm == EnergyNorm::Euclidean ? "euclidean" : "sum_of_squares";
}

double energy_score(std::span<const std::int64_t> ensemble, int V,
                    std::span<const std::int64_t> observed, EnergyNorm norm, int pair_samples,
                    Rng& rng) {
    if (V <= 0 || ensemble.size() % V != 0) throw std::invalid_argument("bad ensemble shape");
    const int n = static_cast<int>(ensemble.size()) / V;
    if (n == 0) return kNaN;

    if (norm == EnergyNorm::SumOfSquares) {
        // squared distance telescopes to the squared error of the mean
        double acc = 0.0;
        for (int v = 0; v < V; ++v) {
            double mean = 0.0;
            for (int i = 0; i < n; ++i) mean += static_cast<double>(ensemble[i * V + v]);
            mean /= n;
            double d = static_cast<double>(observed[v]) - mean;
            acc += d * d;
        }
        return acc;
    }

    double t1 = 0.0;
    for (int i = 0; i < n; ++i) t1 += euclidean(&ensemble[i * V], observed.data(), V);
    t1 /= n;
    if (n == 1) return t1;

    double pair_mean;
    if (pair_samples <= 1 || pair_samples >= n) {
        std::vector<std::size_t> all(n);
        for (int i = 0; i < n; ++i) all[i] = i;
        pair_mean = mean_pair_distance(ensemble, V, all);
    } else {
        auto members = rng.sample_without_replacement(n, pair_samples);
        pair_mean = mean_pair_distance(ensemble, V, members);
    }
    // V-statistic scaling: (1/(2N^2)) sum over ordered pairs incl. self
    double t2 = (static_cast<double>(n - 1) / (2.0 * n)) * pair_mean;
    return t1 - t2;
}

double brier_score(std::span<const double> mean_prevalence,
                   std::span<const std::int64_t> observed) {
    const std::size_t V = mean_prevalence.size();
    if (observed.size() != V) throw std::invalid_argument("bad observation shape");
    std::int64_t n = 0;
    for (std::int64_t c : observed) n += c;
    if (n == 0) return kNaN;
    double acc = 0.0;
    for (std::size_t v = 0; v < V; ++v) {
        double p = static_cast<double>(observed[v]) / static_cast<double>(n);
        double q = mean_prevalence[v];
        acc += p * (q - 1.0) * (q - 1.0) + (1.0 - p) * q * q;
    }
    return 0.5 * acc;
}

double finite_mean(std::span<const double> values) {
    double acc = 0.0;
    std::size_t n = 0;
    for (double v : values) {
        if (std::isfinite(v)) {
            acc += v;
            ++n;
        }
    }
    return n == 0 ? kNaN : acc / static_cast<double>(n);
}

double finite_median(std::span<const double> values) {
    std::vector<double> f;
    f.reserve(values.size());
    for (double v : values)
        if (std::isfinite(v)) f.push_back(v);
    if (f.empty()) return kNaN;
    std::size_t mid = f.size() / 2;
    std::nth_element(f.begin(), f.begin() + mid, f.end());
    double hi = f[mid];
    if (f.size() % 2 == 1) return hi;
    double lo = *std::max_element(f.begin(), f.begin() + mid);
    return 0.5 * (lo + hi);
}

}  // namespace cladecast
