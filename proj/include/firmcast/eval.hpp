#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "firmcast/baselines.hpp"
#include "firmcast/forecaster.hpp"
#include "firmcast/growth.hpp"
#include "firmcast/panel.hpp"
#include "firmcast/rng.hpp"

namespace firmcast {

struct SplitSpec {
    int cutoff_year = 2010;
    std::array<double, 3> ratios{0.6, 0.2, 0.2};  // train, val, test by company count
    std::uint64_t seed = 1;

    void check() const {
        const double sum = ratios[0] + ratios[1] + ratios[2];
        if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
        for (double r : ratios)
            if (r < 0.0) throw ConfigError("split ratios must be nonnegative");
    }
};

enum class Assignment { Train, Val, Test };

struct SplitResult {
    CompanyPanel train;  // train companies, records before the cutoff
    CompanyPanel val;    // val companies, records before the cutoff
    CompanyPanel test;   // test companies in full, plus everyone's records from the cutoff on
    std::map<std::string, Assignment> assignment;
};

/// Companies with any pre-cutoff record are shuffled by seed and assigned
/// train/val/test by count; companies founded after the cutoff go straight to
/// test. Every record from the cutoff year onward lands in the test
/// partition regardless of assignment.
inline SplitResult split_dataset(const CompanyPanel& panel, const SplitSpec& spec) {
    spec.check();
    std::vector<std::size_t> pre_cutoff;
    SplitResult out;
    for (std::size_t i = 0; i < panel.companies.size(); ++i) {
        const auto& company = panel.companies[i];
        const bool has_pre = !company.records.empty() && company.records.front().fiscal_year < spec.cutoff_year;
        if (has_pre)
            pre_cutoff.push_back(i);
        else
            out.assignment[company.id] = Assignment::Test;
    }
    if (pre_cutoff.empty()) throw DataError("split_dataset: no company has records before the cutoff year");

    Rng rng(substream_seed(spec.seed, "split"));
    rng.shuffle(pre_cutoff);
    const auto n = static_cast<double>(pre_cutoff.size());
    const auto b1 = static_cast<std::size_t>(std::llround(n * spec.ratios[0]));
    const auto b2 = static_cast<std::size_t>(std::llround(n * (spec.ratios[0] + spec.ratios[1])));
    for (std::size_t k = 0; k < pre_cutoff.size(); ++k) {
        const auto& id = panel.companies[pre_cutoff[k]].id;
        out.assignment[id] = k < b1 ? Assignment::Train : (k < b2 ? Assignment::Val : Assignment::Test);
    }

    out.train.registry = out.val.registry = out.test.registry = panel.registry;
    out.train.meta = out.val.meta = out.test.meta = panel.meta;
    for (const auto& company : panel.companies) {
        const Assignment a = out.assignment.at(company.id);
        Company pre, post;
        pre.id = post.id = company.id;
        for (const auto& rec : company.records)
            (rec.fiscal_year < spec.cutoff_year ? pre : post).records.push_back(rec);
        switch (a) {
            case Assignment::Train:
                if (!pre.records.empty()) out.train.companies.push_back(std::move(pre));
                if (!post.records.empty()) out.test.companies.push_back(std::move(post));
                break;
            case Assignment::Val:
                if (!pre.records.empty()) out.val.companies.push_back(std::move(pre));
                if (!post.records.empty()) out.test.companies.push_back(std::move(post));
                break;
            case Assignment::Test: {
                Company full;
                full.id = company.id;
                full.records = company.records;
                out.test.companies.push_back(std::move(full));
                break;
            }
        }
    }
    return out;
}

/// Mean absolute difference of aligned prediction/actual pairs.
inline double mae(std::span<const double> predictions, std::span<const double> actuals) {
    if (predictions.size() != actuals.size()) throw ConfigError("mae: length mismatch");
    if (predictions.empty()) throw DataError("mae: empty input");
    double sum = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) sum += std::abs(predictions[i] - actuals[i]);
    return sum / static_cast<double>(predictions.size());
}

/// Empirical CDF of per-company errors as sorted (threshold, fraction) pairs.
inline std::vector<std::pair<double, double>> cumulative_mae_distribution(std::vector<double> values) {
    if (values.empty()) throw DataError("cumulative_mae_distribution: no values");
    std::sort(values.begin(), values.end());
    std::vector<std::pair<double, double>> curve;
    curve.reserve(values.size());
    for (std::size_t i = 0; i < values.size(); ++i)
        curve.emplace_back(values[i], static_cast<double>(i + 1) / static_cast<double>(values.size()));
    return curve;
}

/// Fraction of values <= x under the empirical distribution.
inline double cdf_at(const std::vector<std::pair<double, double>>& curve, double x) {
    double f = 0.0;
    for (const auto& [v, frac] : curve) {
        if (v <= x)
            f = frac;
        else
            break;
    }
    return f;
}

inline constexpr std::array<const char*, 4> kSizeBucketNames{"micro", "small", "mid", "large"};

/// Size class by average raw-scale assets; intervals are left-closed, so an
/// average of exactly 1e6 belongs to "small".
inline std::size_t size_bucket(double avg_assets) {
    if (avg_assets < 1e6) return 0;
    if (avg_assets < 1e8) return 1;
    if (avg_assets < 1e9) return 2;
    return 3;
}

/// Age bucket by record count against configurable left-closed edges.
inline std::size_t age_bucket(std::size_t age, std::span<const std::size_t> edges) {
    std::size_t b = 0;
    for (std::size_t i = 0; i < edges.size(); ++i)
        if (age >= edges[i]) b = i + 1;
    return b;  // 0 = below the first edge
}

inline std::vector<std::string> age_bucket_labels(std::span<const std::size_t> edges) {
    std::vector<std::string> labels;
    labels.push_back("[0," + std::to_string(edges.empty() ? 0 : edges.front()) + ")");
    for (std::size_t i = 0; i < edges.size(); ++i) {
        if (i + 1 < edges.size())
            labels.push_back("[" + std::to_string(edges[i]) + "," + std::to_string(edges[i + 1]) + ")");
        else
            labels.push_back("[" + std::to_string(edges[i]) + ",inf)");
    }
    return labels;
}

/// Per-company scoring summary for one model.
struct CompanyScore {
    std::string company_id;
    double mae = 0.0;         // mean |error| pooled over windows, steps, targets
    double signed_err = 0.0;  // mean (actual - prediction)
    std::size_t n_terms = 0;
};

struct GmGroups {
    std::vector<std::string> under;  // growth model underestimates on average
    std::vector<std::string> good;   // average GM error below the threshold
    std::vector<std::string> over;   // growth model overestimates
};

/// Splits companies by growth-model performance: "good" when the GM's average
/// MAE is below theta, otherwise "under"/"over" by the sign of the mean error
/// (actual minus prediction).
inline GmGroups gm_performance_groups(std::span<const CompanyScore> gm_scores, double theta) {
    GmGroups groups;
    for (const auto& s : gm_scores) {
        if (s.mae < theta)
            groups.good.push_back(s.company_id);
        else if (s.signed_err > 0.0)
            groups.under.push_back(s.company_id);
        else
            groups.over.push_back(s.company_id);
    }
    return groups;
}

inline const std::vector<std::string> kAllModels{"persistence", "gibrat", "gm", "nn", "nn+gm"};

struct EvalOptions {
    std::vector<std::string> models = kAllModels;
    int horizon = 10;
    std::vector<double> thetas{0.3, 0.4, 0.5};
    std::vector<std::size_t> age_edges{3, 5, 10, 20};
    std::size_t threads = 1;
};

/// One evaluation window: a gap-free encoder history ending just before an
/// eligible origin year.
struct EvalWindow {
    std::size_t company = 0;      // index into the full panel
    std::size_t history_begin = 0;  // record index of the first history year
    int origin_year = 0;
};

/// Enumerates test windows: the origin must fall inside the test partition
/// (test-assigned companies anywhere, everyone else from the cutoff year on),
/// the t preceding years must be consecutive, and every encoder feature must
/// be present so all models score the same windows.
inline std::vector<EvalWindow> enumerate_eval_windows(const CompanyPanel& full, const SplitResult& split,
                                                      int cutoff_year, const ForecastConfig& config) {
    std::vector<std::size_t> feature_idx;
    for (const auto& code : full.registry.financial_codes()) feature_idx.push_back(full.registry.require(code));
    std::vector<std::size_t> macro_idx;
    if (config.use_macro)
        for (const auto& code : full.registry.macro_codes()) macro_idx.push_back(full.registry.require(code));

    const std::size_t t = static_cast<std::size_t>(config.encoder_len);
    std::vector<EvalWindow> windows;
    for (std::size_t ci = 0; ci < full.companies.size(); ++ci) {
        const auto& company = full.companies[ci];
        auto it = split.assignment.find(company.id);
        const Assignment a = it == split.assignment.end() ? Assignment::Test : it->second;
        if (company.records.size() < t + 1) continue;
        for (std::size_t start = 0; start + t < company.records.size(); ++start) {
            const int origin = company.records[start + t - 1].fiscal_year + 1;
            if (a != Assignment::Test && origin < cutoff_year) continue;
            // The first label year must exist so at least one step is scoreable.
            if (company.records[start + t].fiscal_year != origin) continue;
            bool ok = true;
            for (std::size_t k = 1; k < t && ok; ++k)
                if (company.records[start + k].fiscal_year != company.records[start + k - 1].fiscal_year + 1)
                    ok = false;
            for (std::size_t k = 0; k < t && ok; ++k) {
                const auto& rec = company.records[start + k];
                for (std::size_t idx : feature_idx)
                    if (!rec.values[idx]) {
                        ok = false;
                        break;
                    }
                if (ok)
                    for (std::size_t idx : macro_idx)
                        if (!rec.values[idx]) {
                            ok = false;
                            break;
                        }
            }
            if (ok) windows.push_back({ci, start, origin});
        }
    }
    return windows;
}

/// Everything the report writers need, accumulated in deterministic order.
struct EvalReport {
    std::vector<std::string> models;
    std::vector<std::string> targets;
    int horizon = 10;
    std::size_t n_windows = 0;

    // model -> target -> step (1-based at index 0) -> mean absolute error
    std::map<std::string, std::vector<std::vector<double>>> mae_by_step;
    std::map<std::string, std::vector<std::vector<std::size_t>>> count_by_step;
    // model -> pooled per-step MAE across targets
    std::map<std::string, std::vector<double>> pooled_mae_by_step;

    // model -> per-company pooled scores (sorted by company id)
    std::map<std::string, std::vector<CompanyScore>> company_scores;
    // model -> target -> empirical CDF of per-company MAE
    std::map<std::string, std::map<std::string, std::vector<std::pair<double, double>>>> cdf;
    // model -> pooled CDF
    std::map<std::string, std::vector<std::pair<double, double>>> pooled_cdf;

    // group label -> model -> pooled MAE over member companies
    std::map<std::string, std::map<std::string, double>> by_size, by_age, by_sector;
    std::map<std::string, std::size_t> size_counts, age_counts, sector_counts;

    // theta -> group name -> model -> mean per-company MAE
    std::map<double, std::map<std::string, std::map<std::string, double>>> by_gm_threshold;
    std::map<double, std::map<std::string, std::size_t>> gm_group_counts;
};

namespace detail {

struct Accumulator {
    double abs_sum = 0.0;
    double signed_sum = 0.0;  // actual - prediction
    std::size_t n = 0;
};

} // namespace detail

/// Scores the requested models over shared test windows. NN modes require the
/// corresponding trained model; the growth model and the baselines are fitted
/// from the provided parameters and train panel.
inline EvalReport evaluate_models(const CompanyPanel& full, const SplitResult& split, const SplitSpec& spec,
                                  const GrowthParams& params, const ModelState* hybrid_model,
                                  const ModelState* pure_model, const ForecastConfig& config,
                                  const EvalOptions& options) {
    EvalReport report;
    report.models = options.models;
    report.targets = config.targets;
    report.horizon = options.horizon;

    for (const auto& model : options.models) {
        if (model == "nn" && !pure_model) throw ConfigError("evaluate: model roster includes nn but no pure model given");
        if (model == "nn+gm" && !hybrid_model)
            throw ConfigError("evaluate: model roster includes nn+gm but no hybrid model given");
        if (!std::count(kAllModels.begin(), kAllModels.end(), model))
            throw ConfigError("evaluate: unknown model '" + model + "'");
    }

    std::vector<std::size_t> target_idx;
    for (const auto& code : config.targets) target_idx.push_back(full.registry.require(code));
    std::vector<std::size_t> feature_idx;
    for (const auto& code : full.registry.financial_codes()) feature_idx.push_back(full.registry.require(code));
    std::vector<std::size_t> macro_idx;
    if (config.use_macro)
        for (const auto& code : full.registry.macro_codes()) macro_idx.push_back(full.registry.require(code));

    std::map<std::string, GibratFit> gibrat;
    if (std::count(options.models.begin(), options.models.end(), std::string("gibrat")))
        for (const auto& code : config.targets) gibrat[code] = fit_gibrat(split.train, code);

    const auto windows = enumerate_eval_windows(full, split, spec.cutoff_year, config);
    report.n_windows = windows.size();
    const std::size_t K = config.targets.size();
    const std::size_t H = static_cast<std::size_t>(options.horizon);
    const std::size_t t = static_cast<std::size_t>(config.encoder_len);

    // Forecasts per window and model, computed in parallel into fixed slots.
    std::map<std::string, std::vector<ForecastResult>> forecasts;
    for (const auto& model : options.models) forecasts[model].resize(windows.size());

    auto run_window = [&](std::size_t wi) {
        const EvalWindow& w = windows[wi];
        const Company& company = full.companies[w.company];

        RolloutInput input;
        input.company_id = company.id;
        input.origin_year = w.origin_year;
        std::vector<double> last(K);
        const CompanyRecord& last_rec = company.records[w.history_begin + t - 1];
        for (std::size_t k = 0; k < K; ++k) last[k] = *last_rec.values[target_idx[k]];
        input.last_targets = last;

        const bool needs_nn =
            std::count(options.models.begin(), options.models.end(), std::string("nn")) ||
            std::count(options.models.begin(), options.models.end(), std::string("nn+gm"));
        if (needs_nn) {
            for (std::size_t s = 0; s < t; ++s) {
                const auto& rec = company.records[w.history_begin + s];
                std::vector<double> row;
                for (std::size_t idx : feature_idx) row.push_back(*rec.values[idx]);
                for (std::size_t idx : macro_idx) row.push_back(*rec.values[idx]);
                input.history.push_back(std::move(row));
            }
            if (config.use_macro) {
                // Future macro rows are read from the actual records where
                // available; steps beyond the observed span reuse the last row.
                std::vector<double> last_macro;
                for (std::size_t idx : macro_idx) last_macro.push_back(*last_rec.values[idx]);
                for (std::size_t k = 0; k < H; ++k) {
                    std::vector<double> row = last_macro;
                    const std::size_t rec_idx = w.history_begin + t + k;
                    if (rec_idx < company.records.size() &&
                        company.records[rec_idx].fiscal_year == w.origin_year + static_cast<int>(k)) {
                        bool have_all = true;
                        std::vector<double> actual_row;
                        for (std::size_t idx : macro_idx) {
                            if (!company.records[rec_idx].values[idx]) {
                                have_all = false;
                                break;
                            }
                            actual_row.push_back(*company.records[rec_idx].values[idx]);
                        }
                        if (have_all) row = std::move(actual_row);
                    }
                    input.future_macro.push_back(std::move(row));
                    last_macro = input.future_macro.back();
                }
            }
        }

        for (const auto& model : options.models) {
            ForecastResult r;
            if (model == "persistence") {
                r.model = model;
                r.indicators = config.targets;
                for (std::size_t k = 0; k < H; ++k) r.predictions.push_back(last);
                r.valid_steps = H;
            } else if (model == "gibrat") {
                r.model = model;
                r.indicators = config.targets;
                for (std::size_t k = 0; k < H; ++k) {
                    std::vector<double> step(K);
                    for (std::size_t q = 0; q < K; ++q)
                        step[q] = last[q] + static_cast<double>(k + 1) * gibrat.at(config.targets[q]).g;
                    r.predictions.push_back(std::move(step));
                }
                r.valid_steps = H;
            } else if (model == "gm") {
                r = gm_rollout(last, config.targets, full.registry, params, options.horizon);
            } else if (model == "nn") {
                r = pure_nn_rollout(input, options.horizon, *pure_model);
            } else {
                r = hybrid_rollout(input, options.horizon, *hybrid_model, params, full.registry);
            }
            r.company_id = company.id;
            r.origin_year = w.origin_year;
            forecasts[model][wi] = std::move(r);
        }
    };
    parallel_for(windows.size(), options.threads, run_window);

    // Deterministic aggregation over windows in enumeration order.
    std::map<std::string, std::vector<std::vector<detail::Accumulator>>> step_acc;  // model -> target -> step
    std::map<std::string, std::map<std::string, detail::Accumulator>> company_acc;  // model -> company
    std::map<std::string, std::map<std::string, std::map<std::string, detail::Accumulator>>> company_target_acc;
    for (const auto& model : options.models)
        step_acc[model].assign(K, std::vector<detail::Accumulator>(H));

    for (std::size_t wi = 0; wi < windows.size(); ++wi) {
        const EvalWindow& w = windows[wi];
        const Company& company = full.companies[w.company];
        for (const auto& model : options.models) {
            const ForecastResult& r = forecasts[model][wi];
            for (std::size_t k = 0; k < r.valid_steps && k < H; ++k) {
                const std::size_t rec_idx = w.history_begin + t + k;
                if (rec_idx >= company.records.size()) break;
                const CompanyRecord& rec = company.records[rec_idx];
                if (rec.fiscal_year != w.origin_year + static_cast<int>(k)) break;  // gap: later steps misalign
                for (std::size_t q = 0; q < K; ++q) {
                    if (!rec.values[target_idx[q]]) continue;
                    const double actual = *rec.values[target_idx[q]];
                    const double err = actual - r.predictions[k][q];
                    auto& acc = step_acc[model][q][k];
                    acc.abs_sum += std::abs(err);
                    acc.signed_sum += err;
                    ++acc.n;
                    auto& cacc = company_acc[model][company.id];
                    cacc.abs_sum += std::abs(err);
                    cacc.signed_sum += err;
                    ++cacc.n;
                    auto& ctacc = company_target_acc[model][config.targets[q]][company.id];
                    ctacc.abs_sum += std::abs(err);
                    ctacc.signed_sum += err;
                    ++ctacc.n;
                }
            }
        }
    }

    for (const auto& model : options.models) {
        auto& by_step = report.mae_by_step[model];
        auto& counts = report.count_by_step[model];
        by_step.assign(K, std::vector<double>(H, 0.0));
        counts.assign(K, std::vector<std::size_t>(H, 0));
        auto& pooled = report.pooled_mae_by_step[model];
        pooled.assign(H, 0.0);
        std::vector<double> pooled_sum(H, 0.0);
        std::vector<std::size_t> pooled_n(H, 0);
        for (std::size_t q = 0; q < K; ++q)
            for (std::size_t k = 0; k < H; ++k) {
                const auto& acc = step_acc[model][q][k];
                by_step[q][k] = acc.n ? acc.abs_sum / static_cast<double>(acc.n) : 0.0;
                counts[q][k] = acc.n;
                pooled_sum[k] += acc.abs_sum;
                pooled_n[k] += acc.n;
            }
        for (std::size_t k = 0; k < H; ++k)
            pooled[k] = pooled_n[k] ? pooled_sum[k] / static_cast<double>(pooled_n[k]) : 0.0;

        auto& scores = report.company_scores[model];
        for (const auto& [id, acc] : company_acc[model]) {
            CompanyScore s;
            s.company_id = id;
            s.mae = acc.n ? acc.abs_sum / static_cast<double>(acc.n) : 0.0;
            s.signed_err = acc.n ? acc.signed_sum / static_cast<double>(acc.n) : 0.0;
            s.n_terms = acc.n;
            scores.push_back(std::move(s));
        }
        if (!scores.empty()) {
            std::vector<double> maes;
            for (const auto& s : scores) maes.push_back(s.mae);
            report.pooled_cdf[model] = cumulative_mae_distribution(std::move(maes));
        }
        for (const auto& [target, companies] : company_target_acc[model]) {
            std::vector<double> maes;
            for (const auto& [id, acc] : companies)
                if (acc.n) maes.push_back(acc.abs_sum / static_cast<double>(acc.n));
            if (!maes.empty()) report.cdf[model][target] = cumulative_mae_distribution(std::move(maes));
        }
    }

    // Company attributes for the grouped breakdowns, from the full panel.
    const std::size_t at_idx = full.registry.require("AT");
    std::map<std::string, double> avg_assets;
    std::map<std::string, std::size_t> ages;
    std::map<std::string, std::string> sectors;
    for (const auto& company : full.companies) {
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto& rec : company.records)
            if (rec.values[at_idx]) {
                sum += untransform_value(*rec.values[at_idx], full.registry.at(at_idx).transform);
                ++n;
            }
        avg_assets[company.id] = n ? sum / static_cast<double>(n) : 0.0;
        ages[company.id] = company.records.size();
        sectors[company.id] = company.sector().empty() ? "unknown" : company.sector();
    }

    const auto age_labels = age_bucket_labels(options.age_edges);
    for (const auto& model : options.models) {
        std::map<std::string, detail::Accumulator> size_acc, age_acc, sector_acc;
        for (const auto& s : report.company_scores[model]) {
            const std::string size_label = kSizeBucketNames[size_bucket(avg_assets.at(s.company_id))];
            const std::string age_label = age_labels[age_bucket(ages.at(s.company_id), options.age_edges)];
            const std::string& sector = sectors.at(s.company_id);
            size_acc[size_label].abs_sum += s.mae;
            ++size_acc[size_label].n;
            age_acc[age_label].abs_sum += s.mae;
            ++age_acc[age_label].n;
            sector_acc[sector].abs_sum += s.mae;
            ++sector_acc[sector].n;
        }
        for (const auto& [label, acc] : size_acc) {
            report.by_size[label][model] = acc.abs_sum / static_cast<double>(acc.n);
            report.size_counts[label] = acc.n;
        }
        for (const auto& [label, acc] : age_acc) {
            report.by_age[label][model] = acc.abs_sum / static_cast<double>(acc.n);
            report.age_counts[label] = acc.n;
        }
        for (const auto& [label, acc] : sector_acc) {
            report.by_sector[label][model] = acc.abs_sum / static_cast<double>(acc.n);
            report.sector_counts[label] = acc.n;
        }
    }

    if (report.company_scores.count("gm")) {
        const auto& gm_scores = report.company_scores.at("gm");
        std::map<std::string, const CompanyScore*> by_id;
        for (const auto& model : options.models) {
            for (const auto& s : report.company_scores[model]) by_id[model + "/" + s.company_id] = &s;
        }
        for (double theta : options.thetas) {
            const GmGroups groups = gm_performance_groups(gm_scores, theta);
            const std::array<std::pair<const char*, const std::vector<std::string>*>, 3> named{
                std::pair{"under", &groups.under}, std::pair{"good", &groups.good}, std::pair{"over", &groups.over}};
            for (const auto& [name, members] : named) {
                report.gm_group_counts[theta][name] = members->size();
                for (const auto& model : options.models) {
                    double sum = 0.0;
                    std::size_t n = 0;
                    for (const auto& id : *members) {
                        auto it = by_id.find(model + "/" + id);
                        if (it != by_id.end()) {
                            sum += it->second->mae;
                            ++n;
                        }
                    }
                    report.by_gm_threshold[theta][name][model] = n ? sum / static_cast<double>(n) : 0.0;
                }
            }
        }
    }
    return report;
}

} // namespace firmcast
