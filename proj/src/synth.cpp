#include "cladecast/synth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cladecast/dataset.hpp"
#include "cladecast/model.hpp"
#include "cladecast/rng.hpp"

namespace cladecast {

namespace {

std::string auto_code(int i) {
    std::string s(2, 'A');
    s[0] = static_cast<char>('A' + i / 26);
    s[1] = static_cast<char>('A' + i % 26);
    return s;
}

}  // namespace

std::vector<std::string> synth_location_codes(int n) {
    std::vector<std::string> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) out.push_back(auto_code(i));
    return out;
}

SynthResult generate_synth(const SynthConfig& cfg) {
    const int L = cfg.num_locations, V = cfg.num_categories, P = cfg.degree;
    const int J = V - 1;
    if (L < 1 || V < 2 || P < 1) throw std::invalid_argument("bad synth shape");
    if (cfg.mu.size() != static_cast<std::size_t>(P * J) || cfg.sigma.size() != cfg.mu.size())
        throw std::invalid_argument("synth truth hyper-parameters need P*(V-1) entries");
    if (!cfg.locations.empty() && static_cast<int>(cfg.locations.size()) != L)
        throw std::invalid_argument("explicit location list size mismatch");
    if (!cfg.location_daily_samples.empty() &&
        static_cast<int>(cfg.location_daily_samples.size()) != L)
        throw std::invalid_argument("location_daily_samples needs one entry per location");

    SynthResult out;
    out.locations.resize(L);
    for (int l = 0; l < L; ++l)
        out.locations[l] = cfg.locations.empty() ? auto_code(l) : cfg.locations[l];
    if (!std::is_sorted(out.locations.begin(), out.locations.end()))
        throw std::invalid_argument("locations must be sorted");
    for (int j = 0; j < J; ++j) out.clades.push_back("V" + std::to_string(j + 1));

    Rng rng(cfg.seed);

    out.gamma.resize(static_cast<std::size_t>(L) * J * P);
    for (int l = 0; l < L; ++l)
        for (int j = 0; j < J; ++j)
            for (int p = 0; p < P; ++p)
                out.gamma[(static_cast<std::size_t>(l) * J + j) * P + p] =
                    rng.normal(cfg.mu[p * J + j], cfg.sigma[p * J + j]);

    TimeScale ts;
    const Date first = cfg.end_date - (cfg.history_days - 1);
    const int total_days = cfg.history_days + cfg.forecast_days;
    std::vector<double> x(P), eta(V), pi(V), theta(V);
    std::vector<std::int64_t> counts(V);

    for (int l = 0; l < L; ++l) {
        const double daily_mean = cfg.location_daily_samples.empty()
                                      ? cfg.mean_daily_samples
                                      : cfg.location_daily_samples[l];
        for (int d = 0; d < total_days; ++d) {
            Date day = first + d;
            // raw index in the window ending at end_date
            double t_raw = static_cast<double>(kLookbackDays) -
                           static_cast<double>(cfg.end_date - day);
            design_row(ts.scaled(t_raw), P, x.data());
            for (int j = 0; j < J; ++j) {
                double acc = 0.0;
                for (int p = 0; p < P; ++p)
                    acc += out.gamma[(static_cast<std::size_t>(l) * J + j) * P + p] * x[p];
                eta[j] = acc;
            }
            eta[J] = 0.0;
            double m = *std::max_element(eta.begin(), eta.end());
            double z = 0.0;
            for (int v = 0; v < V; ++v) {
                pi[v] = std::exp(eta[v] - m);
                z += pi[v];
            }
            for (int v = 0; v < V; ++v) pi[v] /= z;

            std::int64_t n = rng.poisson(daily_mean);
            if (n == 0) continue;
            if (cfg.kappa > 0.0) {
                double tz = 0.0;
                for (int v = 0; v < V; ++v) {
                    theta[v] = rng.gamma(cfg.kappa * std::exp(eta[v]));
                    tz += theta[v];
                }
                for (int v = 0; v < V; ++v) theta[v] = tz > 0.0 ? theta[v] / tz : pi[v];
                rng.multinomial(n, theta, counts);
            } else {
                rng.multinomial(n, pi, counts);
            }

            for (int v = 0; v < V; ++v) {
                const std::string clade = v == J ? std::string(kReferenceLabel) : out.clades[v];
                for (std::int64_t k = 0; k < counts[v]; ++k) {
                    SequenceRecord rec;
                    rec.location = out.locations[l];
                    rec.collection_date = day;
                    rec.report_date = day + rng.geometric_mean(cfg.report_delay_mean);
                    rec.clade = clade;
                    out.records.push_back(std::move(rec));
                }
            }
        }
    }
    return out;
}

}  // namespace cladecast
