#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "firmcast/panel.hpp"
#include "firmcast/rng.hpp"

namespace firmcast {

/// Every step equals the last observed value.
inline std::vector<double> persistence_forecast(double last_value, int horizon) {
    if (horizon < 1) throw ConfigError("persistence_forecast: horizon must be >= 1");
    return std::vector<double>(static_cast<std::size_t>(horizon), last_value);
}

struct GibratFit {
    double g = 0.0;   // mean log-growth per year, size-independent
    double sd = 0.0;  // dispersion of the yearly log growth (sampling mode only)
    std::size_t n_pairs = 0;
};

/// Mean one-year growth of a transformed indicator over all companies and
/// consecutive-year pairs: the size-independent drift of the random-growth
/// null model.
inline GibratFit fit_gibrat(const CompanyPanel& panel, const std::string& indicator) {
    const std::size_t idx = panel.registry.require(indicator);
    double sum = 0.0, sum_sq = 0.0;
    std::size_t n = 0;
    for (const auto& company : panel.companies)
        for (std::size_t r = 1; r < company.records.size(); ++r) {
            const auto& prev = company.records[r - 1];
            const auto& cur = company.records[r];
            if (cur.fiscal_year != prev.fiscal_year + 1) continue;
            if (!prev.values[idx] || !cur.values[idx]) continue;
            const double d = *cur.values[idx] - *prev.values[idx];
            sum += d;
            sum_sq += d * d;
            ++n;
        }
    if (n == 0) throw DataError("fit_gibrat: no consecutive-year pairs for " + indicator);
    GibratFit fit;
    fit.n_pairs = n;
    fit.g = sum / static_cast<double>(n);
    const double var = sum_sq / static_cast<double>(n) - fit.g * fit.g;
    fit.sd = var > 0.0 ? std::sqrt(var) : 0.0;
    return fit;
}

/// Deterministic drift forecast: step k is last_value + k*g. With g = 0 this
/// is exactly the persistence model.
inline std::vector<double> gibrat_forecast(double last_value, double g, int horizon) {
    if (horizon < 1) throw ConfigError("gibrat_forecast: horizon must be >= 1");
    std::vector<double> out(static_cast<std::size_t>(horizon));
    for (int k = 0; k < horizon; ++k) out[static_cast<std::size_t>(k)] = last_value + (k + 1) * g;
    return out;
}

/// Sampling variant for distribution studies: Gaussian growth shocks around
/// the fitted drift. Not used in point-forecast scoring.
inline std::vector<double> gibrat_sample(double last_value, const GibratFit& fit, int horizon, Rng& rng) {
    if (horizon < 1) throw ConfigError("gibrat_sample: horizon must be >= 1");
    std::vector<double> out(static_cast<std::size_t>(horizon));
    double value = last_value;
    for (int k = 0; k < horizon; ++k) {
        value += rng.normal(fit.g, fit.sd);
        out[static_cast<std::size_t>(k)] = value;
    }
    return out;
}

} // namespace firmcast
