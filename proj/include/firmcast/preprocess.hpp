#pragma once

#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "firmcast/panel.hpp"

namespace firmcast {

struct PreprocessConfig {
    double missing_fraction_cutoff = 0.40;  // drop indicator when missing fraction exceeds this
    int min_series_length = 3;              // shortest usable company series, in years
    int base_year = 2019;
    std::set<std::string> anomaly_indicators = {"AT", "LT", "REVT", "COGS"};  // must be > 0
    std::map<int, double> cpi_series;       // fiscal year -> annual inflation rate, percent

    void check() const {
        if (!(missing_fraction_cutoff > 0.0 && missing_fraction_cutoff <= 1.0))
            throw ConfigError("missing_fraction_cutoff must be in (0, 1]");
        if (min_series_length < 1) throw ConfigError("min_series_length must be >= 1");
    }
};

struct PreprocessReport {
    std::vector<std::string> dropped_indicators;
    std::size_t dropped_companies = 0;
    std::size_t dropped_records = 0;
    std::size_t imputed_cells = 0;
};

/// sign(x) * ln(|x| + 1). Odd, strictly increasing, and equal to the plain
/// logarithm up to O(1/x) for large positive x.
inline double linlog(double x) {
    return x >= 0.0 ? std::log1p(x) : -std::log1p(-x);
}

inline double linlog_inverse(double z) {
    return z >= 0.0 ? std::expm1(z) : -std::expm1(-z);
}

inline double transform_value(double x, Transform t) {
    switch (t) {
        case Transform::Log:
            if (x <= 0.0) throw DomainError("log transform applied to nonpositive value");
            return std::log(x);
        case Transform::LinLog:
            return linlog(x);
        case Transform::None:
            return x;
    }
    return x;
}

inline double untransform_value(double z, Transform t) {
    switch (t) {
        case Transform::Log:
            return std::exp(z);
        case Transform::LinLog:
            return linlog_inverse(z);
        case Transform::None:
            return z;
    }
    return z;
}

struct SelectResult {
    CompanyPanel panel;
    std::vector<std::string> dropped;
};

/// Removes indicators whose panel-wide missing fraction is strictly greater
/// than the cutoff, from both the registry and every record.
inline SelectResult select_features(CompanyPanel panel, const PreprocessConfig& cfg) {
    cfg.check();
    const std::size_t n_records = panel.record_count();
    if (panel.companies.empty() || n_records == 0) throw DataError("select_features: empty panel");

    std::vector<std::size_t> missing(panel.registry.size(), 0);
    for (const auto& company : panel.companies)
        for (const auto& rec : company.records)
            for (std::size_t i = 0; i < rec.values.size(); ++i)
                if (!rec.values[i]) ++missing[i];

    std::vector<std::size_t> to_drop;
    SelectResult result;
    for (std::size_t i = 0; i < panel.registry.size(); ++i) {
        const double fraction = static_cast<double>(missing[i]) / static_cast<double>(n_records);
        if (fraction > cfg.missing_fraction_cutoff) {
            to_drop.push_back(i);
            result.dropped.push_back(panel.registry.at(i).code);
        }
    }
    if (to_drop.size() == panel.registry.size())
        throw DataError("select_features: every indicator exceeds the missing-value cutoff");

    for (std::size_t k = to_drop.size(); k-- > 0;) {
        const std::size_t idx = to_drop[k];
        panel.registry.remove(idx);
        for (auto& company : panel.companies)
            for (auto& rec : company.records) {
                rec.values.erase(rec.values.begin() + static_cast<std::ptrdiff_t>(idx));
                rec.flags.erase(rec.flags.begin() + static_cast<std::ptrdiff_t>(idx));
            }
    }
    result.panel = std::move(panel);
    return result;
}

/// Drops companies with fewer than min_series_length annual records.
inline CompanyPanel filter_short_series(CompanyPanel panel, const PreprocessConfig& cfg) {
    cfg.check();
    std::erase_if(panel.companies, [&](const Company& c) {
        return c.records.size() < static_cast<std::size_t>(cfg.min_series_length);
    });
    return panel;
}

struct DropResult {
    CompanyPanel panel;
    std::size_t deleted_records = 0;
};

/// Deletes any (company, year) record where an anomaly-set indicator is
/// present and <= 0. Indicators outside the set may legitimately be negative
/// (net income, cash) and are left alone.
inline DropResult drop_anomalies(CompanyPanel panel, const PreprocessConfig& cfg) {
    DropResult result;
    std::vector<std::size_t> anomaly_idx;
    for (const auto& code : cfg.anomaly_indicators)
        if (auto idx = panel.registry.index_of(code)) anomaly_idx.push_back(*idx);

    // On a transformed panel the threshold is checked on the raw scale, so a
    // second pass over pipeline output deletes nothing.
    const bool transformed = panel.meta.transformed;
    for (auto& company : panel.companies) {
        const std::size_t before = company.records.size();
        std::erase_if(company.records, [&](const CompanyRecord& rec) {
            for (std::size_t idx : anomaly_idx) {
                if (!rec.values[idx]) continue;
                const Transform t = panel.registry.at(idx).transform;
                const double raw = transformed ? untransform_value(*rec.values[idx], t) : *rec.values[idx];
                if (raw <= 0.0) return true;
            }
            return false;
        });
        result.deleted_records += before - company.records.size();
    }
    std::erase_if(panel.companies, [](const Company& c) { return c.records.empty(); });
    result.panel = std::move(panel);
    return result;
}

struct ImputeResult {
    CompanyPanel panel;
    std::size_t imputed_cells = 0;
};

/// Fills absent values per company and indicator: interior gaps take the mean
/// of the nearest present values before and after (the same mean for every
/// cell of a multi-year gap); gaps at the ends copy the first or last present
/// value. Series with no present value at all stay absent.
inline ImputeResult impute_missing(CompanyPanel panel) {
    ImputeResult result;
    for (auto& company : panel.companies) {
        const std::size_t n = company.records.size();
        for (std::size_t ind = 0; ind < panel.registry.size(); ++ind) {
            std::vector<std::size_t> present;
            for (std::size_t r = 0; r < n; ++r)
                if (company.records[r].values[ind]) present.push_back(r);
            if (present.empty() || present.size() == n) continue;

            for (std::size_t r = 0; r < n; ++r) {
                if (company.records[r].values[ind]) continue;
                auto next = std::lower_bound(present.begin(), present.end(), r);
                double fill = 0.0;
                if (next == present.begin()) {
                    fill = *company.records[present.front()].values[ind];
                } else if (next == present.end()) {
                    fill = *company.records[present.back()].values[ind];
                } else {
                    const double before = *company.records[*(next - 1)].values[ind];
                    const double after = *company.records[*next].values[ind];
                    fill = 0.5 * (before + after);
                }
                company.records[r].values[ind] = fill;
                company.records[r].flags[ind] = ValueFlag::Imputed;
                ++result.imputed_cells;
            }
        }
    }
    result.panel = std::move(panel);
    return result;
}

/// Deflates monetary values to base-year units. The price level is compounded
/// from annual percent rates, P(base_year) = 1 and P(y+1) = P(y)*(1+rate(y+1)/100);
/// a value in year y is multiplied by P(base_year)/P(y). Already-adjusted
/// panels pass through unchanged.
inline CompanyPanel adjust_inflation(CompanyPanel panel, const PreprocessConfig& cfg) {
    if (panel.meta.inflation_adjusted) return panel;
    if (panel.meta.transformed) throw DataError("adjust_inflation: panel already transformed");

    int min_year = 0, max_year = 0;
    bool any = false;
    for (const auto& company : panel.companies)
        for (const auto& rec : company.records) {
            if (!any) {
                min_year = max_year = rec.fiscal_year;
                any = true;
            }
            min_year = std::min(min_year, rec.fiscal_year);
            max_year = std::max(max_year, rec.fiscal_year);
        }
    if (!any) {
        panel.meta.inflation_adjusted = true;
        panel.meta.base_year = cfg.base_year;
        return panel;
    }

    const int lo = std::min(min_year, cfg.base_year);
    const int hi = std::max(max_year, cfg.base_year);
    std::map<int, double> level;  // price level relative to the base year
    level[cfg.base_year] = 1.0;
    for (int y = cfg.base_year + 1; y <= hi; ++y) {
        auto it = cfg.cpi_series.find(y);
        if (it == cfg.cpi_series.end()) throw CoverageError("cpi series does not cover year " + std::to_string(y));
        level[y] = level[y - 1] * (1.0 + it->second / 100.0);
    }
    for (int y = cfg.base_year - 1; y >= lo; --y) {
        auto it = cfg.cpi_series.find(y + 1);
        if (it == cfg.cpi_series.end()) throw CoverageError("cpi series does not cover year " + std::to_string(y + 1));
        level[y] = level[y + 1] / (1.0 + it->second / 100.0);
    }

    for (auto& company : panel.companies)
        for (auto& rec : company.records) {
            const double ratio = 1.0 / level.at(rec.fiscal_year);
            for (std::size_t i = 0; i < panel.registry.size(); ++i)
                if (panel.registry.at(i).monetary && rec.values[i]) rec.values[i] = *rec.values[i] * ratio;
        }
    panel.meta.inflation_adjusted = true;
    panel.meta.base_year = cfg.base_year;
    return panel;
}

/// Moves every value into model space per the registry's transform kinds and
/// records it in the panel meta, so downstream error metrics live in log
/// space. A nonpositive value under a plain-log indicator means the anomaly
/// filter has not run and is reported as such.
inline CompanyPanel transform_panel(CompanyPanel panel) {
    if (panel.meta.transformed) throw DataError("transform_panel: panel already transformed");
    for (auto& company : panel.companies)
        for (auto& rec : company.records)
            for (std::size_t i = 0; i < panel.registry.size(); ++i) {
                if (!rec.values[i]) continue;
                const Transform t = panel.registry.at(i).transform;
                if (t == Transform::Log && *rec.values[i] <= 0.0)
                    throw DomainError("transform_panel: nonpositive " + panel.registry.at(i).code + " for company " +
                                      company.id + " year " + std::to_string(rec.fiscal_year) +
                                      " (anomaly filter must run first)");
                rec.values[i] = transform_value(*rec.values[i], t);
                rec.flags[i] = ValueFlag::Transformed;
            }
    panel.meta.transformed = true;
    return panel;
}

struct PipelineResult {
    CompanyPanel panel;
    PreprocessReport report;
};

/// The full preprocessing pipeline in its fixed order: feature selection,
/// short-series filtering, anomaly removal, imputation, inflation adjustment,
/// transform.
inline PipelineResult run_pipeline(CompanyPanel panel, const PreprocessConfig& cfg) {
    PipelineResult out;
    auto selected = select_features(std::move(panel), cfg);
    out.report.dropped_indicators = std::move(selected.dropped);

    const std::size_t companies_before = selected.panel.companies.size();
    auto filtered = filter_short_series(std::move(selected.panel), cfg);
    out.report.dropped_companies = companies_before - filtered.companies.size();

    const std::size_t companies_pre_anomaly = filtered.companies.size();
    auto dropped = drop_anomalies(std::move(filtered), cfg);
    out.report.dropped_records = dropped.deleted_records;
    out.report.dropped_companies += companies_pre_anomaly - dropped.panel.companies.size();

    auto imputed = impute_missing(std::move(dropped.panel));
    out.report.imputed_cells = imputed.imputed_cells;

    auto adjusted = adjust_inflation(std::move(imputed.panel), cfg);
    out.panel = transform_panel(std::move(adjusted));
    return out;
}

} // namespace firmcast
