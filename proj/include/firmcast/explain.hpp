#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "firmcast/forecaster.hpp"
#include "firmcast/pca.hpp"
#include "firmcast/rng.hpp"

namespace firmcast {

/// Per-feature Shapley attribution of a single prediction.
struct Attribution {
    std::vector<double> phi;  // signed contribution per feature
    bool exact = false;       // exact enumeration vs. permutation sampling
    double f_instance = 0.0;
    double f_baseline = 0.0;
};

/// Shapley values over coalition masks. value(mask) evaluates the model with
/// the masked-on features at their instance values and the rest at baseline.
/// Feature counts up to exact_limit are enumerated exactly (all 2^n
/// coalitions); larger sets fall back to permutation sampling.
inline Attribution shapley_masked(std::size_t n_features, const std::function<double(std::uint64_t)>& value,
                                  std::size_t n_permutations, std::uint64_t seed, std::size_t exact_limit = 12) {
    if (n_features == 0) throw ConfigError("shapley: no features");
    if (n_features >= 63) throw ConfigError("shapley: too many features for mask representation");
    Attribution out;
    out.phi.assign(n_features, 0.0);
    const std::uint64_t full = (std::uint64_t{1} << n_features) - 1;
    out.f_baseline = value(0);
    out.f_instance = value(full);

    if (n_features <= exact_limit) {
        out.exact = true;
        const std::uint64_t n_masks = std::uint64_t{1} << n_features;
        std::vector<double> cache(n_masks);
        for (std::uint64_t mask = 0; mask < n_masks; ++mask) cache[mask] = value(mask);

        // w(s) = s! (n-1-s)! / n!, the Shapley weight of a coalition of size s.
        std::vector<double> weight(n_features);
        std::vector<double> log_fact(n_features + 1, 0.0);
        for (std::size_t i = 1; i <= n_features; ++i) log_fact[i] = log_fact[i - 1] + std::log(static_cast<double>(i));
        for (std::size_t s = 0; s < n_features; ++s)
            weight[s] = std::exp(log_fact[s] + log_fact[n_features - 1 - s] - log_fact[n_features]);

        for (std::uint64_t mask = 0; mask < n_masks; ++mask) {
            const auto size = static_cast<std::size_t>(std::popcount(mask));
            for (std::size_t i = 0; i < n_features; ++i) {
                if (mask & (std::uint64_t{1} << i)) continue;
                out.phi[i] += weight[size] * (cache[mask | (std::uint64_t{1} << i)] - cache[mask]);
            }
        }
        return out;
    }

    if (n_permutations == 0) throw ConfigError("shapley: n_permutations must be >= 1");
    Rng rng(seed);
    std::vector<std::size_t> order(n_features);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t p = 0; p < n_permutations; ++p) {
        rng.shuffle(order);
        std::uint64_t mask = 0;
        double prev = out.f_baseline;
        for (std::size_t i : order) {
            mask |= std::uint64_t{1} << i;
            const double cur = value(mask);
            out.phi[i] += cur - prev;
            prev = cur;
        }
    }
    for (auto& phi : out.phi) phi /= static_cast<double>(n_permutations);
    return out;
}

/// Vector form: toggles each coordinate between baseline and instance.
inline Attribution shapley(const std::function<double(std::span<const double>)>& f, std::span<const double> instance,
                           std::span<const double> baseline, std::size_t n_permutations, std::uint64_t seed,
                           std::size_t exact_limit = 12) {
    if (instance.size() != baseline.size()) throw ConfigError("shapley: instance/baseline dimension mismatch");
    const std::size_t n = instance.size();
    std::vector<double> z(baseline.begin(), baseline.end());
    auto value = [&](std::uint64_t mask) {
        for (std::size_t i = 0; i < n; ++i)
            z[i] = (mask & (std::uint64_t{1} << i)) ? instance[i] : baseline[i];
        return f(z);
    };
    return shapley_masked(n, value, n_permutations, seed, exact_limit);
}

/// The encoder's final hidden vector per company, computed on its most recent
/// gap-free encoder-length history. Companies without one are skipped.
struct HiddenExtraction {
    std::vector<std::string> company_ids;
    std::vector<std::vector<double>> vectors;
    std::size_t skipped = 0;
};

namespace detail {

/// Most recent run of encoder_len consecutive-year records with all features
/// present; returns the start index or nullopt.
inline std::optional<std::size_t> last_valid_history(const Company& company, std::span<const std::size_t> feature_idx,
                                                     std::size_t t) {
    if (company.records.size() < t) return std::nullopt;
    for (std::size_t start = company.records.size() - t + 1; start-- > 0;) {
        bool ok = true;
        for (std::size_t k = 1; k < t && ok; ++k)
            if (company.records[start + k].fiscal_year != company.records[start + k - 1].fiscal_year + 1) ok = false;
        for (std::size_t k = 0; k < t && ok; ++k)
            for (std::size_t idx : feature_idx)
                if (!company.records[start + k].values[idx]) {
                    ok = false;
                    break;
                }
        if (ok) return start;
    }
    return std::nullopt;
}

} // namespace detail

inline HiddenExtraction extract_hidden(const ModelState& m, const CompanyPanel& panel) {
    if (!panel.meta.transformed) throw DataError("extract_hidden: panel must be transformed");
    std::vector<std::size_t> feature_idx;
    for (const auto& code : m.features) feature_idx.push_back(panel.registry.require(code));
    std::vector<std::size_t> macro_idx;
    for (const auto& code : m.macros) macro_idx.push_back(panel.registry.require(code));
    const auto t = static_cast<std::size_t>(m.config.encoder_len);

    std::vector<std::size_t> all_idx = feature_idx;
    all_idx.insert(all_idx.end(), macro_idx.begin(), macro_idx.end());

    HiddenExtraction out;
    const CellView enc = m.encoder();
    for (const auto& company : panel.companies) {
        const auto start = detail::last_valid_history(company, all_idx, t);
        if (!start) {
            ++out.skipped;
            continue;
        }
        RecurrentState state(m.config.hidden_dim);
        for (std::size_t k = 0; k < t; ++k) {
            std::vector<double> row;
            row.reserve(all_idx.size());
            for (std::size_t idx : all_idx) row.push_back(*company.records[*start + k].values[idx]);
            state = cell_step(row, state, enc);
        }
        out.company_ids.push_back(company.id);
        out.vectors.push_back(std::move(state.h));
    }
    return out;
}

struct ExplainOptions {
    std::string target = "AT";
    std::size_t n_permutations = 2000;
    std::uint64_t seed = 1;
    std::size_t sample_companies = 50;  // companies attributed, in panel order
    std::size_t exact_limit = 12;
    std::size_t threads = 1;  // per-company sub-streams keep the result identical
};

/// Mean-|phi| feature importances for the horizon-1 prediction of one target.
/// A feature is one indicator: toggling it swaps that indicator's column at
/// every encoder step (and in the growth-model coupling) between the
/// company's values and the training-mean baseline.
struct FeatureAttribution {
    std::vector<std::string> features;
    std::vector<double> mean_abs_phi;
    std::vector<std::string> company_ids;
    std::vector<std::vector<double>> per_company_phi;
    bool exact = false;
};

inline FeatureAttribution explain_model(const ModelState& m, const GrowthParams& params, const CompanyPanel& panel,
                                        const ExplainOptions& options,
                                        const CompanyPanel* baseline_panel = nullptr) {
    if (!panel.meta.transformed) throw DataError("explain_model: panel must be transformed");
    const auto t = static_cast<std::size_t>(m.config.encoder_len);

    std::vector<std::string> feature_codes = m.features;
    feature_codes.insert(feature_codes.end(), m.macros.begin(), m.macros.end());
    std::vector<std::size_t> feature_idx;
    for (const auto& code : feature_codes) feature_idx.push_back(panel.registry.require(code));
    const std::size_t n_features = feature_codes.size();

    std::size_t target_pos = m.config.targets.size();
    for (std::size_t i = 0; i < m.config.targets.size(); ++i)
        if (m.config.targets[i] == options.target) target_pos = i;
    if (target_pos == m.config.targets.size())
        throw ConfigError("explain_model: target " + options.target + " is not a model output");

    std::vector<std::size_t> target_feature_pos(m.config.targets.size());
    for (std::size_t q = 0; q < m.config.targets.size(); ++q) {
        auto it = std::find(feature_codes.begin(), feature_codes.end(), m.config.targets[q]);
        if (it == feature_codes.end()) throw ConfigError("explain_model: targets must be encoder features");
        target_feature_pos[q] = static_cast<std::size_t>(it - feature_codes.begin());
    }

    // Baseline: per-feature mean over the training panel when given, otherwise
    // over the panel being explained (the conditional-mean default).
    const CompanyPanel& base_src = baseline_panel ? *baseline_panel : panel;
    std::vector<std::size_t> base_idx;
    for (const auto& code : feature_codes) base_idx.push_back(base_src.registry.require(code));
    std::vector<double> baseline(n_features, 0.0);
    std::vector<std::size_t> counts(n_features, 0);
    for (const auto& company : base_src.companies)
        for (const auto& rec : company.records)
            for (std::size_t i = 0; i < n_features; ++i)
                if (rec.values[base_idx[i]]) {
                    baseline[i] += *rec.values[base_idx[i]];
                    ++counts[i];
                }
    for (std::size_t i = 0; i < n_features; ++i) {
        if (counts[i] == 0) throw DataError("explain_model: feature " + feature_codes[i] + " has no observations");
        baseline[i] /= static_cast<double>(counts[i]);
    }

    FeatureAttribution out;
    out.features = feature_codes;
    out.mean_abs_phi.assign(n_features, 0.0);

    std::vector<const Company*> eligible;
    for (const auto& company : panel.companies) {
        if (eligible.size() >= options.sample_companies) break;
        if (detail::last_valid_history(company, feature_idx, t)) eligible.push_back(&company);
    }
    if (eligible.empty()) throw DataError("explain_model: no company had a valid history");

    const CellView enc = m.encoder();
    const CellView dec = m.decoder();
    std::vector<std::optional<Attribution>> results(eligible.size());

    parallel_for(eligible.size(), options.threads, [&](std::size_t ei) {
        const Company& company = *eligible[ei];
        const auto start = detail::last_valid_history(company, feature_idx, t);

        std::vector<std::vector<double>> instance_rows(t, std::vector<double>(n_features));
        for (std::size_t k = 0; k < t; ++k)
            for (std::size_t i = 0; i < n_features; ++i)
                instance_rows[k][i] = *company.records[*start + k].values[feature_idx[i]];

        auto value = [&](std::uint64_t mask) {
            RecurrentState state(m.config.hidden_dim);
            std::vector<double> row(n_features);
            for (std::size_t k = 0; k < t; ++k) {
                for (std::size_t i = 0; i < n_features; ++i)
                    row[i] = (mask & (std::uint64_t{1} << i)) ? instance_rows[k][i] : baseline[i];
                state = cell_step(row, state, enc);
            }
            // Horizon-1 coupling from the (possibly toggled) last history year.
            std::vector<double> last(m.config.targets.size());
            for (std::size_t q = 0; q < m.config.targets.size(); ++q) {
                const std::size_t fpos = target_feature_pos[q];
                last[q] = (mask & (std::uint64_t{1} << fpos)) ? instance_rows[t - 1][fpos] : baseline[fpos];
            }
            std::vector<double> base;
            if (m.config.hybrid)
                base = gm_step_from_prediction(last, m.config.targets, panel.registry, params);
            else
                base = last;
            std::vector<double> in = base;
            if (m.config.use_macro) {
                for (std::size_t i = m.features.size(); i < n_features; ++i)
                    in.push_back((mask & (std::uint64_t{1} << i)) ? instance_rows[t - 1][i] : baseline[i]);
            }
            RecurrentState dstate = cell_step(in, state, dec);
            double acc = m.readout_b()[target_pos];
            for (std::size_t hh = 0; hh < m.config.hidden_dim; ++hh)
                acc += m.readout_w()[target_pos * m.config.hidden_dim + hh] * dstate.h[hh];
            return base[target_pos] + acc;
        };

        try {
            results[ei] = shapley_masked(n_features, value, options.n_permutations,
                                         substream_seed(options.seed, "shapley", ei), options.exact_limit);
        } catch (const Error&) {
            // growth-model domain error on a toggled mix: skip this company
        }
    });

    for (std::size_t ei = 0; ei < eligible.size(); ++ei) {
        if (!results[ei]) continue;
        out.exact = results[ei]->exact;
        out.company_ids.push_back(eligible[ei]->id);
        out.per_company_phi.push_back(results[ei]->phi);
        for (std::size_t i = 0; i < n_features; ++i) out.mean_abs_phi[i] += std::abs(results[ei]->phi[i]);
    }
    if (out.company_ids.empty()) throw DataError("explain_model: no attribution succeeded");
    for (auto& v : out.mean_abs_phi) v /= static_cast<double>(out.company_ids.size());
    return out;
}

} // namespace firmcast
