#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "firmcast/panel.hpp"
#include "firmcast/preprocess.hpp"
#include "firmcast/util.hpp"

namespace firmcast {

/// One fitted power-law relation X = c * A^beta, estimated as an ordinary
/// least-squares line ln X = ln_c + beta * ln A.
struct ScalingFit {
    std::string indicator;
    double beta = 0.0;
    double ln_c = 0.0;
    double r2 = 0.0;
    std::size_t n_obs = 0;
    std::array<double, 2> beta_ci{0.0, 0.0};  // 95% normal-theory interval
    std::array<double, 2> ln_c_ci{0.0, 0.0};

    double c() const { return std::exp(ln_c); }
};

/// The coefficient set driving the growth equation: the liability and income
/// fits enter the asset ODE, per_indicator supplies the scaling relation of
/// each forecast target.
struct GrowthParams {
    ScalingFit liability;  // beta_L, c_L
    ScalingFit income;     // beta_I, c_I
    std::map<std::string, ScalingFit> per_indicator;

    const ScalingFit* find(const std::string& code) const {
        auto it = per_indicator.find(code);
        return it == per_indicator.end() ? nullptr : &it->second;
    }

    const ScalingFit& require(const std::string& code) const {
        const ScalingFit* fit = find(code);
        if (!fit) throw DataError("no scaling fit for indicator " + code);
        return *fit;
    }
};

inline constexpr double kNormal975 = 1.959963984540054;  // z quantile for 95% CIs

/// OLS fit of lnX on lnA. Requires at least three observations and nonzero
/// variance in lnA; confidence intervals use the standard slope/intercept
/// errors with normal quantiles.
inline ScalingFit fit_power_law(std::span<const std::pair<double, double>> pairs, std::string indicator = {}) {
    const std::size_t n = pairs.size();
    if (n < 3) throw DataError("fit_power_law: need at least 3 observations, got " + std::to_string(n));

    double sum_x = 0.0, sum_y = 0.0;
    for (const auto& [x, y] : pairs) {
        sum_x += x;
        sum_y += y;
    }
    const double mean_x = sum_x / static_cast<double>(n);
    const double mean_y = sum_y / static_cast<double>(n);

    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (const auto& [x, y] : pairs) {
        const double dx = x - mean_x;
        const double dy = y - mean_y;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if (sxx <= 0.0) throw DataError("fit_power_law: lnA values are identical (rank-deficient design)");

    ScalingFit fit;
    fit.indicator = std::move(indicator);
    fit.n_obs = n;
    fit.beta = sxy / sxx;
    fit.ln_c = mean_y - fit.beta * mean_x;

    double ssr = 0.0;
    for (const auto& [x, y] : pairs) {
        const double r = y - fit.ln_c - fit.beta * x;
        ssr += r * r;
    }
    fit.r2 = syy > 0.0 ? 1.0 - ssr / syy : 1.0;
    fit.r2 = std::min(1.0, std::max(0.0, fit.r2));

    const double dof = static_cast<double>(n) - 2.0;
    const double s2 = ssr / dof;
    const double se_beta = std::sqrt(s2 / sxx);
    const double se_ln_c = std::sqrt(s2 * (1.0 / static_cast<double>(n) + mean_x * mean_x / sxx));
    fit.beta_ci = {fit.beta - kNormal975 * se_beta, fit.beta + kNormal975 * se_beta};
    fit.ln_c_ci = {fit.ln_c - kNormal975 * se_ln_c, fit.ln_c + kNormal975 * se_ln_c};
    return fit;
}

/// Row filter for fit_all. Indicators listed in positive_only keep only
/// observations that were positive before the transform (for linlog-coded
/// series that is exactly the positive half in model space).
struct ObservationFilter {
    std::set<std::string> positive_only;

    bool accepts(const std::string& code, double transformed_value) const {
        if (positive_only.count(code)) return transformed_value > 0.0;
        return true;
    }
};

struct FitOptions {
    ObservationFilter filter;
    std::string asset_code = "AT";
    std::string liability_code = "LT";
    std::string income_code = "NI";
    bool per_year = false;  // fit each fiscal year separately, then average
};

namespace detail {

inline std::vector<std::pair<double, double>> gather_pairs(const CompanyPanel& panel, std::size_t asset_idx,
                                                           std::size_t x_idx, const std::string& code,
                                                           const ObservationFilter& filter, int year = INT32_MIN) {
    std::vector<std::pair<double, double>> pairs;
    for (const auto& company : panel.companies)
        for (const auto& rec : company.records) {
            if (year != INT32_MIN && rec.fiscal_year != year) continue;
            if (!rec.values[asset_idx] || !rec.values[x_idx]) continue;
            const double x = *rec.values[x_idx];
            if (!filter.accepts(code, x)) continue;
            pairs.emplace_back(*rec.values[asset_idx], x);
        }
    return pairs;
}

} // namespace detail

/// Pooled cross-sectional regression of every registered financial indicator
/// against assets on a transformed training panel. The liability and income
/// fits are mandatory; other indicators that lack enough data are skipped.
inline GrowthParams fit_all(const CompanyPanel& panel, const FitOptions& options = {}) {
    if (!panel.meta.transformed) throw DataError("fit_all: panel must be transformed first");
    const std::size_t asset_idx = panel.registry.require(options.asset_code);

    GrowthParams params;
    for (std::size_t i = 0; i < panel.registry.size(); ++i) {
        const IndicatorInfo& info = panel.registry.at(i);
        if (info.macro || i == asset_idx) continue;
        ScalingFit fit;
        try {
            if (!options.per_year) {
                auto pairs = detail::gather_pairs(panel, asset_idx, i, info.code, options.filter);
                fit = fit_power_law(pairs, info.code);
            } else {
                std::set<int> years;
                for (const auto& company : panel.companies)
                    for (const auto& rec : company.records) years.insert(rec.fiscal_year);
                std::vector<ScalingFit> yearly;
                for (int y : years) {
                    auto pairs = detail::gather_pairs(panel, asset_idx, i, info.code, options.filter, y);
                    if (pairs.size() < 3) continue;
                    try {
                        yearly.push_back(fit_power_law(pairs, info.code));
                    } catch (const DataError&) {
                    }
                }
                if (yearly.empty()) throw DataError("fit_all: no per-year fit possible for " + info.code);
                fit.indicator = info.code;
                for (const auto& f : yearly) {
                    fit.beta += f.beta;
                    fit.ln_c += f.ln_c;
                    fit.r2 += f.r2;
                    fit.n_obs += f.n_obs;
                    fit.beta_ci[0] += f.beta_ci[0];
                    fit.beta_ci[1] += f.beta_ci[1];
                    fit.ln_c_ci[0] += f.ln_c_ci[0];
                    fit.ln_c_ci[1] += f.ln_c_ci[1];
                }
                const double k = static_cast<double>(yearly.size());
                fit.beta /= k;
                fit.ln_c /= k;
                fit.r2 /= k;
                fit.beta_ci = {fit.beta_ci[0] / k, fit.beta_ci[1] / k};
                fit.ln_c_ci = {fit.ln_c_ci[0] / k, fit.ln_c_ci[1] / k};
            }
        } catch (const DataError& e) {
            if (info.code == options.liability_code || info.code == options.income_code)
                throw DataError("fit_all: mandatory fit for " + info.code + " failed: " + e.what());
            continue;
        }
        params.per_indicator[info.code] = fit;
    }

    auto lt = params.per_indicator.find(options.liability_code);
    auto ni = params.per_indicator.find(options.income_code);
    if (lt == params.per_indicator.end() || ni == params.per_indicator.end())
        throw DataError("fit_all: liability/income indicators missing from panel registry");
    params.liability = lt->second;
    params.income = ni->second;
    return params;
}

/// Persists fitted parameters as a human-readable key=value file.
inline void save_params(const GrowthParams& params, std::ostream& out, const std::string& data_hash = {},
                        const std::string& timestamp = {}, std::uint64_t seed = 0) {
    out << "# firmcast scaling parameters v1\n";
    if (!timestamp.empty()) out << "fitted_at = " << timestamp << "\n";
    if (!data_hash.empty()) out << "data_hash = " << data_hash << "\n";
    out << "seed = " << seed << "\n";
    out << "liability = " << params.liability.indicator << "\n";
    out << "income = " << params.income.indicator << "\n";
    for (const auto& [code, fit] : params.per_indicator) {
        out << "[" << code << "]\n";
        out << "beta = " << format_double(fit.beta) << "\n";
        out << "ln_c = " << format_double(fit.ln_c) << "\n";
        out << "r2 = " << format_double(fit.r2) << "\n";
        out << "n_obs = " << fit.n_obs << "\n";
        out << "beta_ci = " << format_double(fit.beta_ci[0]) << " " << format_double(fit.beta_ci[1]) << "\n";
        out << "ln_c_ci = " << format_double(fit.ln_c_ci[0]) << " " << format_double(fit.ln_c_ci[1]) << "\n";
    }
}

inline void save_params(const GrowthParams& params, const std::filesystem::path& path,
                        const std::string& data_hash = {}, const std::string& timestamp = {},
                        std::uint64_t seed = 0) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write params file: " + path.string());
    save_params(params, out, data_hash, timestamp, seed);
}

inline GrowthParams load_params(std::istream& in) {
    GrowthParams params;
    std::string liability_code, income_code;
    std::string line;
    ScalingFit* current = nullptr;
    while (std::getline(in, line)) {
        std::string_view sv = trim(line);
        if (sv.empty() || sv.front() == '#') continue;
        if (sv.front() == '[' && sv.back() == ']') {
            const std::string code{sv.substr(1, sv.size() - 2)};
            current = &params.per_indicator[code];
            current->indicator = code;
            continue;
        }
        const auto eq = sv.find('=');
        if (eq == std::string_view::npos) continue;
        const std::string key{trim(sv.substr(0, eq))};
        const std::string value{trim(sv.substr(eq + 1))};
        if (!current) {
            if (key == "liability") liability_code = value;
            else if (key == "income") income_code = value;
            continue;
        }
        auto two = split(value, ' ');
        if (key == "beta") current->beta = parse_double(value).value_or(0.0);
        else if (key == "ln_c") current->ln_c = parse_double(value).value_or(0.0);
        else if (key == "r2") current->r2 = parse_double(value).value_or(0.0);
        else if (key == "n_obs") current->n_obs = static_cast<std::size_t>(parse_int(value).value_or(0));
        else if (key == "beta_ci" && two.size() == 2)
            current->beta_ci = {parse_double(two[0]).value_or(0.0), parse_double(two[1]).value_or(0.0)};
        else if (key == "ln_c_ci" && two.size() == 2)
            current->ln_c_ci = {parse_double(two[0]).value_or(0.0), parse_double(two[1]).value_or(0.0)};
    }
    if (liability_code.empty() || income_code.empty())
        throw SchemaError("params file missing liability/income designation");
    params.liability = params.require(liability_code);
    params.income = params.require(income_code);
    return params;
}

inline GrowthParams load_params(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open params file: " + path.string());
    return load_params(in);
}

} // namespace firmcast
