#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace cladecast {

// Deterministic RNG. std::mt19937_64 has a fully specified stream, but the
// standard <random> distributions do not, so the draw algorithms live here.
// Identical seeds give bit-identical draw sequences on any platform.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_{seed} {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform on (0, 1): never returns 0 or 1.
    double uniform() {
        const double u = (static_cast<double>(gen_() >> 11) + 0.5) * 0x1.0p-53;
        return u;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Integer uniform on [0, n) via rejection.
    std::uint64_t uniform_below(std::uint64_t n) {
        const std::uint64_t limit = n * (UINT64_MAX / n);
        std::uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return x % n;
    }

    // Standard normal via Box-Muller; one spare value cached.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    // Marsaglia-Tsang; valid for any shape > 0, rate 1.
    double gamma(double shape) {
        if (shape < 1.0) {
            const double u = uniform();
            return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    // Knuth products, chunked so exp(-m) never underflows.
    std::int64_t poisson(double mean) {
        std::int64_t total = 0;
        while (mean > 0.0) {
            double chunk = std::min(mean, 500.0);
            mean -= chunk;
            const double limit = std::exp(-chunk);
            double prod = uniform();
            while (prod > limit) {
                ++total;
                prod *= uniform();
            }
        }
        return total;
    }

    // Geometric number of failures with mean m (m = 0 gives 0 always).
    std::int64_t geometric_mean(double m) {
        if (m <= 0.0) return 0;
        const double p = 1.0 / (1.0 + m);
        const double u = uniform();
        return static_cast<std::int64_t>(std::floor(std::log(u) / std::log1p(-p)));
    }

    // Multinomial draw by per-trial category selection on the cumulative
    // probabilities. Exact for any nonnegative weights summing to ~1.
    void multinomial(std::int64_t n, std::span<const double> probs, std::span<std::int64_t> out) {
        const std::size_t k = probs.size();
        for (auto& c : out) c = 0;
        if (k == 0) return;
        for (std::int64_t trial = 0; trial < n; ++trial) {
            double u = uniform();
            std::size_t v = k - 1;
            for (std::size_t i = 0; i + 1 < k; ++i) {
                u -= probs[i];
                if (u <= 0.0) {
                    v = i;
                    break;
                }
            }
            ++out[v];
        }
    }

    // Fisher-Yates prefix: k distinct indices from [0, n).
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k) {
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        for (std::size_t i = 0; i < k && i + 1 < n; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(uniform_below(n - i));
            std::swap(idx[i], idx[j]);
        }
        idx.resize(k);
        return idx;
    }

  private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// Stable seed derivation for independent streams: FNV-1a over the tag,
// finalized with a splitmix64 round so nearby tags decorrelate.
std::uint64_t derive_seed(std::uint64_t master, std::string_view tag);

}  // namespace cladecast
