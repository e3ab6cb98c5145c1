#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "firmcast/config.hpp"
#include "firmcast/eval.hpp"
#include "firmcast/explain.hpp"
#include "firmcast/forecaster.hpp"
#include "firmcast/report.hpp"
#include "firmcast/synth.hpp"
#include "firmcast/version.hpp"

namespace firmcast::cli {

namespace fs = std::filesystem;

inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline std::map<int, double> load_cpi(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open cpi file: " + path.string());
    std::map<int, double> series;
    std::string line;
    while (std::getline(in, line)) {
        const std::string_view sv = trim(line);
        if (sv.empty() || sv.front() == '#') continue;
        auto cells = split(std::string(sv), sv.find('\t') != std::string_view::npos ? '\t' : ',');
        if (cells.size() < 2) continue;
        const auto year = parse_int(cells[0]);
        const auto rate = parse_double(cells[1]);
        if (!year || !rate) continue;  // header line
        series[static_cast<int>(*year)] = *rate;
    }
    if (series.empty()) throw DataError("cpi file has no (year, rate) rows: " + path.string());
    return series;
}

/// Default registry restricted to the columns actually present in a panel
/// file, so absent-everywhere indicators do not poison window construction.
inline IndicatorRegistry registry_for_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open panel file: " + path.string());
    std::string header;
    if (!std::getline(in, header)) throw SchemaError("empty panel file: " + path.string());
    const char delim = header.find('\t') != std::string::npos ? '\t' : ',';
    std::set<std::string> present;
    for (auto& c : split(header, delim)) present.insert(std::string(trim(c)));

    IndicatorRegistry reg;
    for (const auto& info : IndicatorRegistry::default_full().all())
        if (present.count(info.code)) reg.add(info);
    if (reg.size() == 0) throw SchemaError("no registered indicator columns in " + path.string());
    return reg;
}

inline std::map<int, double> zero_cpi_for(const CompanyPanel& panel, int base_year) {
    int lo = base_year, hi = base_year;
    for (const auto& company : panel.companies)
        for (const auto& rec : company.records) {
            lo = std::min(lo, rec.fiscal_year);
            hi = std::max(hi, rec.fiscal_year);
        }
    std::map<int, double> series;
    for (int y = lo; y <= hi + 1; ++y) series[y] = 0.0;
    return series;
}

inline ForecastConfig forecast_config_from(const KeyValueConfig& cfg, std::uint64_t seed) {
    ForecastConfig fc;
    fc.hidden_dim = static_cast<std::size_t>(cfg.get_int("hidden_dim", static_cast<long long>(fc.hidden_dim)));
    fc.encoder_len = static_cast<int>(cfg.get_int("encoder_len", fc.encoder_len));
    fc.decoder_len = static_cast<int>(cfg.get_int("decoder_len", fc.decoder_len));
    if (cfg.has("targets")) fc.targets = split(cfg.get("targets", ""), ',');
    fc.use_macro = cfg.get_int("use_macro", fc.use_macro ? 1 : 0) != 0;
    fc.learning_rate = cfg.get_double("learning_rate", fc.learning_rate);
    fc.weight_decay = cfg.get_double("weight_decay", fc.weight_decay);
    fc.batch_size = static_cast<std::size_t>(cfg.get_int("batch_size", static_cast<long long>(fc.batch_size)));
    fc.max_epochs = static_cast<int>(cfg.get_int("max_epochs", fc.max_epochs));
    fc.patience = static_cast<int>(cfg.get_int("patience", fc.patience));
    fc.scheduled_sampling = cfg.get_double("scheduled_sampling", fc.scheduled_sampling);
    fc.closed_loop_validation = cfg.get_int("closed_loop_validation", fc.closed_loop_validation ? 1 : 0) != 0;
    fc.seed = seed;
    return fc;
}

inline int parse_horizon(const std::string& text) {
    // Accepts "10" or "1..10".
    const auto dots = text.find("..");
    const std::string last = dots == std::string::npos ? text : text.substr(dots + 2);
    const auto v = parse_int(last);
    if (!v || *v < 1) throw ConfigError("bad horizon spec: " + text);
    return static_cast<int>(*v);
}

// ---------------------------------------------------------------------------

inline int cmd_synth(const std::string& config_path, const std::string& out_path, bool suite, std::uint64_t seed,
                     bool seed_given, std::size_t threads) {
    SynthConfig cfg;
    if (!config_path.empty()) {
        const KeyValueConfig kv = KeyValueConfig::from_file(config_path);
        cfg.n_companies = static_cast<std::size_t>(kv.get_int("n_companies", static_cast<long long>(cfg.n_companies)));
        cfg.start_year = static_cast<int>(kv.get_int("start_year", cfg.start_year));
        cfg.end_year = static_cast<int>(kv.get_int("end_year", cfg.end_year));
        cfg.cutoff_year = static_cast<int>(kv.get_int("cutoff_year", cfg.cutoff_year));
        cfg.beta_l = kv.get_double("beta_l", cfg.beta_l);
        cfg.c_l = kv.get_double("c_l", cfg.c_l);
        cfg.beta_i = kv.get_double("beta_i", cfg.beta_i);
        cfg.c_i = kv.get_double("c_i", cfg.c_i);
        cfg.sigma0 = kv.get_double("sigma0", cfg.sigma0);
        cfg.rho = kv.get_double("rho", cfg.rho);
        cfg.gamma = kv.get_double("gamma", cfg.gamma);
        cfg.a0_log10_min = kv.get_double("a0_log10_min", cfg.a0_log10_min);
        cfg.a0_log10_max = kv.get_double("a0_log10_max", cfg.a0_log10_max);
        cfg.noise = kv.get("noise", "iid") == "ar1" ? SynthConfig::Noise::Ar1 : SynthConfig::Noise::Iid;
        cfg.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<long long>(cfg.seed)));
    }
    if (seed_given) cfg.seed = seed;

    if (suite) {
        fs::create_directories(out_path);
        const auto panels = benchmark_suite(cfg.seed);
        for (const auto& [name, panel] : panels) {
            std::string lower = name;
            for (auto& c : lower) c = static_cast<char>(std::tolower(c));
            save_panel(panel, fs::path(out_path) / (lower + ".csv"));
        }
        std::cout << "wrote " << panels.size() << " benchmark panels to " << out_path << "\n";
        return 0;
    }
    const CompanyPanel panel = generate(cfg, threads);
    save_panel(panel, out_path);
    std::cout << "wrote synthetic panel: " << panel.companies.size() << " companies, " << panel.record_count()
              << " records\n";
    return 0;
}

inline int cmd_preprocess(const std::string& input, const std::string& output, const std::string& cpi_path,
                          double cutoff, int min_years, int base_year) {
    // The registry is restricted to columns actually present so the
    // missing-fraction accounting reflects the file, not the default registry.
    const LoadResult loaded = load_panel(fs::path(input), registry_for_file(input));
    CompanyPanel panel = loaded.panel;

    PreprocessConfig cfg;
    cfg.missing_fraction_cutoff = cutoff;
    cfg.min_series_length = min_years;
    cfg.base_year = base_year;
    cfg.cpi_series = cpi_path.empty() ? zero_cpi_for(panel, base_year) : load_cpi(cpi_path);

    const PipelineResult result = run_pipeline(std::move(panel), cfg);
    save_panel(result.panel, fs::path(output));

    std::cout << "preprocess report\n";
    std::cout << "  input records: " << loaded.panel.record_count() << " (" << loaded.panel.companies.size()
              << " companies)\n";
    std::cout << "  loader warnings: " << loaded.warning_count << "\n";
    for (const auto& w : loaded.warnings) std::cout << "    " << w << "\n";
    std::cout << "  dropped indicators (" << result.report.dropped_indicators.size() << "):";
    for (const auto& code : result.report.dropped_indicators) std::cout << " " << code;
    std::cout << "\n";
    std::cout << "  dropped companies: " << result.report.dropped_companies << "\n";
    std::cout << "  dropped records (anomalies): " << result.report.dropped_records << "\n";
    std::cout << "  imputed cells: " << result.report.imputed_cells << "\n";
    std::cout << "  inflation: " << (cpi_path.empty() ? "zero-rate identity (no --cpi given)" : cpi_path) << "\n";
    std::cout << "  output records: " << result.panel.record_count() << " (" << result.panel.companies.size()
              << " companies)\n";
    return 0;
}

inline int cmd_fit_scaling(const std::string& train_path, const std::string& out_path, bool positive_only,
                           bool per_year, std::uint64_t seed) {
    const LoadResult loaded = load_panel(fs::path(train_path), IndicatorRegistry::default_full());
    CompanyPanel panel = loaded.panel;
    panel.meta.transformed = true;  // the fit consumes pipeline output

    FitOptions options;
    options.per_year = per_year;
    if (positive_only) options.filter.positive_only.insert("NI");
    const GrowthParams params = fit_all(panel, options);

    save_params(params, fs::path(out_path), "fnv1a:" + hex64(fnv1a64_file(train_path)), utc_timestamp(), seed);
    std::cout << "fitted " << params.per_indicator.size() << " scaling relations\n";
    for (const auto& [code, fit] : params.per_indicator)
        std::cout << "  " << code << ": beta = " << format_short(fit.beta) << " [" << format_short(fit.beta_ci[0])
                  << ", " << format_short(fit.beta_ci[1]) << "], ln_c = " << format_short(fit.ln_c)
                  << ", R2 = " << format_short(fit.r2) << ", n = " << fit.n_obs << "\n";
    return 0;
}

namespace detail {

/// Panel must already be transformed; loading from file loses the meta flag,
/// so commands that consume pipeline output set it explicitly.
inline CompanyPanel load_transformed(const std::string& path) {
    CompanyPanel panel = load_panel(fs::path(path), registry_for_file(path)).panel;
    panel.meta.transformed = true;
    panel.meta.inflation_adjusted = true;
    return panel;
}

inline std::optional<RolloutInput> rollout_input_for(const Company& company, const CompanyPanel& panel,
                                                     const ModelState& m, int horizon) {
    std::vector<std::size_t> feature_idx;
    for (const auto& code : m.features) feature_idx.push_back(panel.registry.require(code));
    std::vector<std::size_t> macro_idx;
    for (const auto& code : m.macros) macro_idx.push_back(panel.registry.require(code));
    std::vector<std::size_t> all_idx = feature_idx;
    all_idx.insert(all_idx.end(), macro_idx.begin(), macro_idx.end());

    const auto t = static_cast<std::size_t>(m.config.encoder_len);
    const auto start = firmcast::detail::last_valid_history(company, all_idx, t);
    if (!start) return std::nullopt;

    RolloutInput input;
    input.company_id = company.id;
    input.origin_year = company.records[*start + t - 1].fiscal_year + 1;
    for (std::size_t k = 0; k < t; ++k) {
        std::vector<double> row;
        for (std::size_t idx : all_idx) row.push_back(*company.records[*start + k].values[idx]);
        input.history.push_back(std::move(row));
    }
    std::vector<std::size_t> target_idx;
    for (const auto& code : m.config.targets) target_idx.push_back(panel.registry.require(code));
    for (std::size_t idx : target_idx) {
        if (!company.records[*start + t - 1].values[idx]) return std::nullopt;
        input.last_targets.push_back(*company.records[*start + t - 1].values[idx]);
    }
    if (m.config.use_macro) {
        std::vector<double> last_macro;
        for (std::size_t idx : macro_idx) last_macro.push_back(*company.records[*start + t - 1].values[idx]);
        for (int k = 0; k < horizon; ++k) input.future_macro.push_back(last_macro);
    }
    return input;
}

} // namespace detail

inline int cmd_gm_forecast(const std::string& params_path, const std::string& input_path, int horizon,
                           const std::string& out_path) {
    const GrowthParams params = load_params(fs::path(params_path));
    const CompanyPanel panel = detail::load_transformed(input_path);

    std::vector<std::string> targets;
    for (const char* code : {"AT", "LT", "REVT", "NI"})
        if (panel.registry.index_of(code) && (std::string(code) == "AT" || params.find(code)))
            targets.push_back(code);

    std::vector<std::size_t> target_idx;
    for (const auto& code : targets) target_idx.push_back(panel.registry.require(code));

    std::vector<ForecastResult> results;
    for (const auto& company : panel.companies) {
        // Roll from the most recent record carrying every target.
        const CompanyRecord* last = nullptr;
        for (auto it = company.records.rbegin(); it != company.records.rend(); ++it) {
            bool ok = true;
            for (std::size_t idx : target_idx)
                if (!it->values[idx]) ok = false;
            if (ok) {
                last = &*it;
                break;
            }
        }
        if (!last) continue;
        std::vector<double> values;
        for (std::size_t idx : target_idx) values.push_back(*last->values[idx]);
        ForecastResult r = gm_rollout(values, targets, panel.registry, params, horizon);
        r.company_id = company.id;
        r.origin_year = last->fiscal_year + 1;
        results.push_back(std::move(r));
    }
    write_forecasts(results, fs::path(out_path));
    std::cout << "wrote " << results.size() << " growth-model forecasts to " << out_path << "\n";
    return 0;
}

inline int cmd_train(const std::string& train_path, const std::string& val_path, const std::string& params_path,
                     const std::string& config_path, const std::string& out_path, const std::string& mode,
                     std::uint64_t seed) {
    const GrowthParams params = load_params(fs::path(params_path));
    const CompanyPanel train_panel = detail::load_transformed(train_path);
    const CompanyPanel val_panel = detail::load_transformed(val_path);

    KeyValueConfig kv;
    if (!config_path.empty()) kv = KeyValueConfig::from_file(config_path);
    ForecastConfig fc = forecast_config_from(kv, seed);
    fc.hybrid = mode != "nn";

    const WindowSet train_windows = make_windows(train_panel, params, fc);
    const WindowSet val_windows = make_windows(val_panel, params, fc);
    std::cout << "training windows: " << train_windows.samples.size() << ", validation windows: "
              << val_windows.samples.size() << "\n";

    GmCoupling coupling{&params, &train_panel.registry};
    const TrainResult result = train(train_windows, val_windows, fc, &coupling);
    save_model(result.model, fs::path(out_path), "fnv1a:" + hex64(fnv1a64_file(train_path)));

    std::cout << "best validation loss " << format_short(result.best_val) << " at epoch " << result.best_epoch
              << " (" << result.curve.size() << " epochs run)\n";
    return 0;
}

inline int cmd_forecast(const std::string& model_path, const std::string& input_path, int horizon,
                        const std::string& mode, const std::string& params_path, const std::string& out_path) {
    const ModelState model = load_model(fs::path(model_path));
    const CompanyPanel panel = detail::load_transformed(input_path);
    const bool hybrid = mode == "nn+gm";
    if (hybrid && params_path.empty()) throw ConfigError("forecast: --mode nn+gm requires --params");
    if (hybrid && !model.config.hybrid) throw ConfigError("forecast: model was trained in pure mode");
    GrowthParams params;
    if (hybrid) params = load_params(fs::path(params_path));

    std::vector<ForecastResult> results;
    for (const auto& company : panel.companies) {
        const auto input = detail::rollout_input_for(company, panel, model, horizon);
        if (!input) continue;
        ForecastResult r = hybrid ? hybrid_rollout(*input, horizon, model, params, panel.registry)
                                  : pure_nn_rollout(*input, horizon, model);
        results.push_back(std::move(r));
    }
    write_forecasts(results, fs::path(out_path));
    std::cout << "wrote " << results.size() << " " << (hybrid ? "nn+gm" : "nn") << " forecasts to " << out_path
              << "\n";
    return 0;
}

inline int cmd_evaluate(const std::string& input_path, const std::string& params_path,
                        const std::string& hybrid_path, const std::string& pure_path, std::string models_csv,
                        const std::string& groupby, const std::string& thetas_csv, const std::string& horizons,
                        const std::string& report_dir, std::uint64_t split_seed, int cutoff_year,
                        std::size_t threads) {
    const CompanyPanel panel = detail::load_transformed(input_path);
    const GrowthParams params = load_params(fs::path(params_path));

    std::optional<ModelState> hybrid_model, pure_model;
    if (!hybrid_path.empty()) hybrid_model = load_model(fs::path(hybrid_path));
    if (!pure_path.empty()) pure_model = load_model(fs::path(pure_path));

    EvalOptions options;
    options.threads = threads;
    options.horizon = parse_horizon(horizons);
    if (!models_csv.empty()) options.models = split(models_csv, ',');
    if (!thetas_csv.empty()) {
        options.thetas.clear();
        for (const auto& s : split(thetas_csv, ',')) options.thetas.push_back(parse_double(s).value());
    }

    SplitSpec spec;
    spec.seed = split_seed;
    spec.cutoff_year = cutoff_year;
    const SplitResult split_result = split_dataset(panel, spec);

    ForecastConfig fc;
    if (hybrid_model)
        fc = hybrid_model->config;
    else if (pure_model)
        fc = pure_model->config;
    fc.seed = split_seed;

    const EvalReport report =
        evaluate_models(panel, split_result, spec, params, hybrid_model ? &*hybrid_model : nullptr,
                        pure_model ? &*pure_model : nullptr, fc, options);

    std::map<std::string, std::string> header;
    header["input"] = input_path;
    header["split_seed"] = std::to_string(split_seed);
    header["cutoff_year"] = std::to_string(cutoff_year);
    std::set<std::string> groupings;
    if (!groupby.empty())
        for (const auto& g : split(groupby, ',')) groupings.insert(g);
    write_eval_report(report, fs::path(report_dir), fs::path(report_dir) / "plots", header, groupings);
    std::cout << "evaluated " << report.n_windows << " windows; reports in " << report_dir << "\n";
    return 0;
}

inline int cmd_explain(const std::string& model_path, const std::string& input_path, const std::string& params_path,
                       const std::string& target, std::size_t permutations, std::size_t sample, std::uint64_t seed,
                       const std::string& out_dir, std::size_t threads) {
    const ModelState model = load_model(fs::path(model_path));
    const CompanyPanel panel = detail::load_transformed(input_path);
    GrowthParams params;
    if (model.config.hybrid) {
        if (params_path.empty()) throw ConfigError("explain: hybrid model requires --params");
        params = load_params(fs::path(params_path));
    }

    ExplainOptions options;
    options.target = target;
    options.n_permutations = permutations;
    options.sample_companies = sample;
    options.seed = seed;
    options.threads = threads;
    const FeatureAttribution attribution = explain_model(model, params, panel, options);

    fs::create_directories(out_dir);
    {
        auto out = std::ofstream(fs::path(out_dir) / "shapley.tsv");
        out << "# target = " << target << "\n";
        out << "# mode = " << (attribution.exact ? "exact" : "sampled") << "\n";
        out << "feature\tmean_abs_phi\n";
        for (std::size_t i = 0; i < attribution.features.size(); ++i)
            out << attribution.features[i] << "\t" << format_short(attribution.mean_abs_phi[i]) << "\n";
    }
    {
        auto out = std::ofstream(fs::path(out_dir) / "shapley_by_company.tsv");
        out << "company_id";
        for (const auto& f : attribution.features) out << "\t" << f;
        out << "\n";
        for (std::size_t c = 0; c < attribution.company_ids.size(); ++c) {
            out << attribution.company_ids[c];
            for (double phi : attribution.per_company_phi[c]) out << "\t" << format_short(phi);
            out << "\n";
        }
    }
    write_bar_chart(fs::path(out_dir) / ("shapley_" + target + ".svg"),
                    "Mean |Shapley value| for " + target + " prediction", attribution.features, {"mean |phi|"},
                    [&] {
                        std::vector<std::vector<double>> v;
                        for (double phi : attribution.mean_abs_phi) v.push_back({phi});
                        return v;
                    }(),
                    "|phi|");
    std::cout << "attributed " << attribution.company_ids.size() << " companies ("
              << (attribution.exact ? "exact" : "sampled") << " mode)\n";
    return 0;
}

inline int cmd_represent(const std::string& model_path, const std::string& input_path, const std::string& color_by,
                         const std::string& out_dir) {
    const ModelState model = load_model(fs::path(model_path));
    const CompanyPanel panel = detail::load_transformed(input_path);

    const HiddenExtraction hidden = extract_hidden(model, panel);
    if (hidden.vectors.size() < 3) throw DataError("represent: need at least 3 companies with valid histories");
    const Embedding embedding = pca_project(hidden.vectors, 2);

    // Company attributes for coloring.
    const std::size_t at_idx = panel.registry.require("AT");
    std::vector<std::string> categories;
    for (const auto& id : hidden.company_ids) {
        const Company* company = panel.find(id);
        std::string label = "unknown";
        if (company) {
            if (color_by == "size") {
                double sum = 0.0;
                std::size_t n = 0;
                for (const auto& rec : company->records)
                    if (rec.values[at_idx]) {
                        sum += untransform_value(*rec.values[at_idx], panel.registry.at(at_idx).transform);
                        ++n;
                    }
                label = kSizeBucketNames[size_bucket(n ? sum / static_cast<double>(n) : 0.0)];
            } else if (color_by == "age") {
                static const std::vector<std::size_t> edges{3, 5, 10, 20};
                label = age_bucket_labels(edges)[age_bucket(company->records.size(), edges)];
            } else {
                label = company->sector().empty() ? "unknown" : company->sector();
            }
        }
        categories.push_back(label);
    }

    fs::create_directories(out_dir);
    {
        auto out = std::ofstream(fs::path(out_dir) / "representation.tsv");
        out << "# explained_variance = " << format_short(embedding.explained_variance[0]) << " "
            << format_short(embedding.explained_variance[1]) << "\n";
        out << "company_id\tpc1\tpc2\t" << color_by << "\n";
        for (std::size_t i = 0; i < hidden.company_ids.size(); ++i)
            out << hidden.company_ids[i] << "\t" << format_short(embedding.coords[i][0]) << "\t"
                << format_short(embedding.coords[i][1]) << "\t" << categories[i] << "\n";
    }
    std::vector<std::array<double, 2>> points;
    for (const auto& c : embedding.coords) points.push_back({c[0], c[1]});
    write_scatter(fs::path(out_dir) / ("representation_" + color_by + ".svg"),
                  "Encoder state, top-2 principal components (" + color_by + ")", points, categories, "PC1", "PC2");
    std::cout << "projected " << hidden.vectors.size() << " companies (" << hidden.skipped << " skipped); "
              << "explained variance " << format_short(embedding.explained_variance[0]) << " + "
              << format_short(embedding.explained_variance[1]) << "\n";
    return 0;
}

// ---------------------------------------------------------------------------

inline int cmd_reproduce(std::uint64_t seed, const std::string& out_dir, const std::string& config_path,
                         std::size_t threads) {
    KeyValueConfig kv;
    if (!config_path.empty()) kv = KeyValueConfig::from_file(config_path);

    fs::create_directories(fs::path(out_dir) / "panels");
    fs::create_directories(fs::path(out_dir) / "params");
    fs::create_directories(fs::path(out_dir) / "models");
    fs::create_directories(fs::path(out_dir) / "forecasts");
    fs::create_directories(fs::path(out_dir) / "reports");
    fs::create_directories(fs::path(out_dir) / "plots");

    std::string stage = "synth";
    try {
        // synth
        const std::string suite = kv.get("suite", "structured");
        SynthConfig scfg = suite == "noiseless"  ? noiseless_config(seed)
                           : suite == "gibratlike" ? gibratlike_config(seed)
                                                   : structured_config(seed);
        scfg.n_companies = static_cast<std::size_t>(kv.get_int("n_companies", static_cast<long long>(scfg.n_companies)));
        scfg.start_year = static_cast<int>(kv.get_int("start_year", scfg.start_year));
        scfg.end_year = static_cast<int>(kv.get_int("end_year", scfg.end_year));
        scfg.gamma = kv.get_double("gamma", scfg.gamma);
        const CompanyPanel raw = generate(scfg, threads);
        save_panel(raw, fs::path(out_dir) / "panels" / "synthetic.csv");

        // preprocess
        stage = "preprocess";
        PreprocessConfig pcfg;
        pcfg.base_year = scfg.end_year;
        pcfg.cpi_series = zero_cpi_for(raw, pcfg.base_year);
        const PipelineResult processed = run_pipeline(raw, pcfg);
        save_panel(processed.panel, fs::path(out_dir) / "panels" / "processed.csv");
        {
            auto out = std::ofstream(fs::path(out_dir) / "reports" / "preprocess.txt");
            out << "dropped_indicators = " << processed.report.dropped_indicators.size() << "\n";
            out << "dropped_companies = " << processed.report.dropped_companies << "\n";
            out << "dropped_records = " << processed.report.dropped_records << "\n";
            out << "imputed_cells = " << processed.report.imputed_cells << "\n";
        }

        // split
        stage = "split";
        SplitSpec spec;
        spec.seed = seed;
        spec.cutoff_year = scfg.cutoff_year;
        const SplitResult split_result = split_dataset(processed.panel, spec);
        save_panel(split_result.train, fs::path(out_dir) / "panels" / "train.csv");
        save_panel(split_result.val, fs::path(out_dir) / "panels" / "val.csv");
        save_panel(split_result.test, fs::path(out_dir) / "panels" / "test.csv");

        // fit-scaling
        stage = "fit-scaling";
        const GrowthParams params = fit_all(split_result.train);
        save_params(params, fs::path(out_dir) / "params" / "scaling.params",
                    "fnv1a:" + hex64(fnv1a64_file(fs::path(out_dir) / "panels" / "train.csv")), utc_timestamp(),
                    seed);

        // train hybrid and pure models
        stage = "train";
        ForecastConfig fc = forecast_config_from(kv, seed);
        GmCoupling coupling{&params, &processed.panel.registry};

        fc.hybrid = true;
        const WindowSet train_h = make_windows(split_result.train, params, fc);
        const WindowSet val_h = make_windows(split_result.val, params, fc);
        const TrainResult hybrid = train(train_h, val_h, fc, &coupling);
        save_model(hybrid.model, fs::path(out_dir) / "models" / "nn_gm.model");

        fc.hybrid = false;
        const WindowSet train_p = make_windows(split_result.train, params, fc);
        const WindowSet val_p = make_windows(split_result.val, params, fc);
        const TrainResult pure = train(train_p, val_p, fc, &coupling);
        save_model(pure.model, fs::path(out_dir) / "models" / "nn.model");

        auto dump_curve = [&](const TrainResult& r, const std::string& name) {
            auto out = std::ofstream(fs::path(out_dir) / "reports" / ("train_curve_" + name + ".tsv"));
            out << "epoch\ttrain_loss\tval_loss\n";
            for (const auto& row : r.curve)
                out << static_cast<int>(row[0]) << "\t" << format_short(row[1]) << "\t" << format_short(row[2])
                    << "\n";
        };
        dump_curve(hybrid, "nn_gm");
        dump_curve(pure, "nn");

        // evaluate
        stage = "evaluate";
        EvalOptions options;
        options.horizon = static_cast<int>(kv.get_int("horizon", 10));
        options.threads = threads;
        fc.hybrid = true;
        const EvalReport report = evaluate_models(processed.panel, split_result, spec, params, &hybrid.model,
                                                  &pure.model, fc, options);
        std::map<std::string, std::string> header;
        header["seed"] = std::to_string(seed);
        header["suite"] = suite;
        write_eval_report(report, fs::path(out_dir) / "reports", fs::path(out_dir) / "plots", header);

        // sample forecasts from the growth model for the record
        stage = "forecasts";
        {
            std::vector<std::string> targets = fc.targets;
            std::vector<ForecastResult> sample;
            std::size_t done = 0;
            for (const auto& company : split_result.test.companies) {
                if (done >= 20) break;
                const CompanyRecord* last = nullptr;
                for (auto it = company.records.rbegin(); it != company.records.rend(); ++it) {
                    bool ok = true;
                    for (const auto& code : targets)
                        if (!it->values[processed.panel.registry.require(code)]) ok = false;
                    if (ok) {
                        last = &*it;
                        break;
                    }
                }
                if (!last) continue;
                std::vector<double> values;
                for (const auto& code : targets) values.push_back(*last->values[processed.panel.registry.require(code)]);
                ForecastResult r = gm_rollout(values, targets, processed.panel.registry, params, options.horizon);
                r.company_id = company.id;
                r.origin_year = last->fiscal_year + 1;
                sample.push_back(std::move(r));
                ++done;
            }
            write_forecasts(sample, fs::path(out_dir) / "forecasts" / "gm_sample.tsv");
        }

        // explain
        stage = "explain";
        ExplainOptions eopts;
        eopts.target = kv.get("explain_target", "AT");
        eopts.n_permutations = static_cast<std::size_t>(kv.get_int("n_permutations", 500));
        eopts.sample_companies = static_cast<std::size_t>(kv.get_int("sample_companies", 25));
        eopts.seed = seed;
        eopts.threads = threads;
        const FeatureAttribution attribution =
            explain_model(hybrid.model, params, processed.panel, eopts, &split_result.train);
        {
            auto out = std::ofstream(fs::path(out_dir) / "reports" / "shapley.tsv");
            out << "# target = " << eopts.target << "\n";
            out << "# mode = " << (attribution.exact ? "exact" : "sampled") << "\n";
            out << "feature\tmean_abs_phi\n";
            for (std::size_t i = 0; i < attribution.features.size(); ++i)
                out << attribution.features[i] << "\t" << format_short(attribution.mean_abs_phi[i]) << "\n";
        }

        // represent
        stage = "represent";
        const HiddenExtraction hidden = extract_hidden(hybrid.model, processed.panel);
        if (hidden.vectors.size() >= 3) {
            const Embedding embedding = pca_project(hidden.vectors, 2);
            auto out = std::ofstream(fs::path(out_dir) / "reports" / "representation.tsv");
            out << "# explained_variance = " << format_short(embedding.explained_variance[0]) << " "
                << format_short(embedding.explained_variance[1]) << "\n";
            out << "company_id\tpc1\tpc2\n";
            for (std::size_t i = 0; i < hidden.company_ids.size(); ++i)
                out << hidden.company_ids[i] << "\t" << format_short(embedding.coords[i][0]) << "\t"
                    << format_short(embedding.coords[i][1]) << "\n";
        }

        // manifest: the resolved configuration and seeds replay the run
        stage = "manifest";
        {
            auto out = std::ofstream(fs::path(out_dir) / "manifest");
            out << "version = " << kVersion << "\n";
            out << "seed = " << seed << "\n";
            out << "threads = " << threads << "\n";
            out << "synth.suite = " << suite << "\n";
            out << "synth.n_companies = " << scfg.n_companies << "\n";
            out << "synth.start_year = " << scfg.start_year << "\n";
            out << "synth.end_year = " << scfg.end_year << "\n";
            out << "synth.sigma0 = " << format_double(scfg.sigma0) << "\n";
            out << "synth.rho = " << format_double(scfg.rho) << "\n";
            out << "synth.gamma = " << format_double(scfg.gamma) << "\n";
            out << "split.cutoff_year = " << spec.cutoff_year << "\n";
            out << "split.ratios = " << format_double(spec.ratios[0]) << " " << format_double(spec.ratios[1]) << " "
                << format_double(spec.ratios[2]) << "\n";
            out << "model.hidden_dim = " << fc.hidden_dim << "\n";
            out << "model.encoder_len = " << fc.encoder_len << "\n";
            out << "model.decoder_len = " << fc.decoder_len << "\n";
            out << "model.learning_rate = " << format_double(fc.learning_rate) << "\n";
            out << "model.weight_decay = " << format_double(fc.weight_decay) << "\n";
            out << "model.batch_size = " << fc.batch_size << "\n";
            out << "model.max_epochs = " << fc.max_epochs << "\n";
            out << "model.patience = " << fc.patience << "\n";
            out << "model.scheduled_sampling = " << format_double(fc.scheduled_sampling) << "\n";
            out << "model.closed_loop_validation = " << (fc.closed_loop_validation ? 1 : 0) << "\n";
            out << "eval.horizon = " << options.horizon << "\n";
            out << "explain.target = " << eopts.target << "\n";
            out << "explain.n_permutations = " << eopts.n_permutations << "\n";
            for (const auto& [k, v] : kv.values()) out << "config." << k << " = " << v << "\n";
            for (const char* name : {"synthetic.csv", "processed.csv", "train.csv", "val.csv", "test.csv"})
                out << "hash." << name << " = fnv1a:"
                    << hex64(fnv1a64_file(fs::path(out_dir) / "panels" / name)) << "\n";
            out << "windows.train = " << train_h.samples.size() << "\n";
            out << "best_epoch.nn_gm = " << hybrid.best_epoch << "\n";
            out << "best_epoch.nn = " << pure.best_epoch << "\n";
        }
    } catch (const Error& e) {
        std::cerr << "reproduce failed at stage " << stage << ": " << e.what() << "\n";
        return 1;
    }
    std::cout << "reproduce complete: " << out_dir << "\n";
    return 0;
}

// ---------------------------------------------------------------------------

inline int dispatch(std::vector<std::string> args) {
    CLI::App app{"firmcast: company indicator forecasting with a scaling-law growth model and a recurrent residual learner"};
    app.require_subcommand(0, 1);
    app.fallthrough();  // global flags like --threads may follow the subcommand
    app.set_version_flag("--version", std::string(kVersion));

    std::size_t threads = 1;
    app.add_option("--threads", threads, "Worker cap for parallel sections")->capture_default_str();

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic company panel");
    std::string synth_config, synth_out = "panel.csv";
    bool synth_suite = false;
    std::uint64_t synth_seed = 1;
    synth->add_option("--config", synth_config, "key=value generator configuration");
    synth->add_option("--out", synth_out, "Output panel file (or directory with --suite)")->required();
    synth->add_flag("--suite", synth_suite, "Write the canonical NOISELESS/GIBRATLIKE/STRUCTURED trio");
    auto* synth_seed_opt = synth->add_option("--seed", synth_seed, "Master seed");

    // preprocess
    auto* preprocess = app.add_subcommand("preprocess", "Run the preprocessing pipeline on a raw panel");
    std::string pre_in, pre_out, pre_cpi;
    double pre_cutoff = 0.40;
    int pre_min_years = 3, pre_base_year = 2019;
    preprocess->add_option("--input", pre_in)->required();
    preprocess->add_option("--output", pre_out)->required();
    preprocess->add_option("--cpi", pre_cpi, "year,rate file of annual inflation percentages");
    preprocess->add_option("--cutoff", pre_cutoff, "Missing-fraction cutoff for feature selection")
        ->capture_default_str();
    preprocess->add_option("--min-years", pre_min_years, "Minimum series length")->capture_default_str();
    preprocess->add_option("--base-year", pre_base_year, "Inflation base year")->capture_default_str();

    // fit-scaling
    auto* fit = app.add_subcommand("fit-scaling", "Fit power-law scaling relations on a training panel");
    std::string fit_train, fit_out;
    bool fit_positive_only = false, fit_per_year = false;
    std::uint64_t fit_seed = 1;
    fit->add_option("--train", fit_train)->required();
    fit->add_option("--out", fit_out)->required();
    fit->add_flag("--positive-only", fit_positive_only, "Restrict the income fit to pre-transform positive values");
    fit->add_flag("--per-year", fit_per_year, "Fit each fiscal year separately and average");
    fit->add_option("--seed", fit_seed, "Seed recorded with the fit");

    // gm-forecast
    auto* gmf = app.add_subcommand("gm-forecast", "Integrate the growth model forward from each company's last record");
    std::string gmf_params, gmf_in, gmf_out;
    int gmf_horizon = 3;
    gmf->add_option("--params", gmf_params)->required();
    gmf->add_option("--input", gmf_in)->required();
    gmf->add_option("--horizon", gmf_horizon)->required();
    gmf->add_option("--out", gmf_out)->required();

    // train
    auto* tr = app.add_subcommand("train", "Train the encoder-decoder residual forecaster");
    std::string tr_train, tr_val, tr_params, tr_config, tr_out, tr_mode = "nn+gm";
    std::uint64_t tr_seed = 1;
    tr->add_option("--train", tr_train)->required();
    tr->add_option("--val", tr_val)->required();
    tr->add_option("--params", tr_params)->required();
    tr->add_option("--config", tr_config, "key=value training configuration");
    tr->add_option("--out", tr_out)->required();
    tr->add_option("--mode", tr_mode, "nn+gm (hybrid) or nn (pure)")->check(CLI::IsMember({"nn+gm", "nn"}));
    tr->add_option("--seed", tr_seed);

    // forecast
    auto* fc = app.add_subcommand("forecast", "Roll a trained model forward");
    std::string fc_model, fc_in, fc_mode = "nn+gm", fc_params, fc_out;
    int fc_horizon = 3;
    fc->add_option("--model", fc_model)->required();
    fc->add_option("--input", fc_in)->required();
    fc->add_option("--horizon", fc_horizon)->required();
    fc->add_option("--mode", fc_mode)->check(CLI::IsMember({"nn+gm", "nn"}));
    fc->add_option("--params", fc_params, "Scaling parameters (required for nn+gm)");
    fc->add_option("--out", fc_out)->required();

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "Score model roster on test windows with grouped breakdowns");
    std::string ev_in, ev_params, ev_hybrid, ev_pure, ev_models, ev_groupby, ev_thetas, ev_horizons = "1..10",
                ev_report = "eval";
    std::uint64_t ev_seed = 1;
    int ev_cutoff = 2010;
    ev->add_option("--input", ev_in)->required();
    ev->add_option("--params", ev_params)->required();
    ev->add_option("--model-hybrid", ev_hybrid, "Trained nn+gm model file");
    ev->add_option("--model-nn", ev_pure, "Trained pure nn model file");
    ev->add_option("--models", ev_models, "Comma list: persistence,gibrat,gm,nn,nn+gm (default all)");
    ev->add_option("--groupby", ev_groupby, "size|age|sector|gm-threshold (default all)");
    ev->add_option("--theta", ev_thetas, "Comma list of GM-performance thresholds")->capture_default_str();
    ev->add_option("--horizons", ev_horizons, "Max step, e.g. 10 or 1..10")->capture_default_str();
    ev->add_option("--report", ev_report, "Report directory")->capture_default_str();
    ev->add_option("--split-seed", ev_seed)->capture_default_str();
    ev->add_option("--cutoff-year", ev_cutoff)->capture_default_str();

    // explain
    auto* ex = app.add_subcommand("explain", "Shapley attribution of model inputs");
    std::string ex_model, ex_in, ex_params, ex_target = "AT", ex_out = "explain";
    std::size_t ex_perm = 2000, ex_sample = 50;
    std::uint64_t ex_seed = 1;
    ex->add_option("--model", ex_model)->required();
    ex->add_option("--input", ex_in)->required();
    ex->add_option("--params", ex_params, "Scaling parameters (required for hybrid models)");
    ex->add_option("--target", ex_target, "Explained output indicator")->capture_default_str();
    ex->add_option("--permutations", ex_perm)->capture_default_str();
    ex->add_option("--sample", ex_sample, "Number of companies attributed")->capture_default_str();
    ex->add_option("--seed", ex_seed);
    ex->add_option("--out", ex_out)->capture_default_str();

    // represent
    auto* rep = app.add_subcommand("represent", "Project encoder states to 2-D and plot");
    std::string rep_model, rep_in, rep_color = "size", rep_out = "represent";
    rep->add_option("--model", rep_model)->required();
    rep->add_option("--input", rep_in)->required();
    rep->add_option("--color-by", rep_color)->check(CLI::IsMember({"size", "age", "sector"}));
    rep->add_option("--out", rep_out)->capture_default_str();

    // reproduce
    auto* rp = app.add_subcommand("reproduce", "Full synthetic pipeline from one seed into a run directory");
    std::string rp_out = "run", rp_config;
    std::uint64_t rp_seed = 1;
    rp->add_option("--seed", rp_seed)->capture_default_str();
    rp->add_option("--out", rp_out)->capture_default_str();
    rp->add_option("--config", rp_config, "key=value pipeline configuration");

    std::vector<const char*> argv;
    argv.push_back("firmcast");
    for (const auto& a : args) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::CallForVersion& e) {
        std::cout << kVersion << "\n";
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    }

    try {
        if (app.got_subcommand(synth))
            return cmd_synth(synth_config, synth_out, synth_suite, synth_seed, !synth_seed_opt->empty(), threads);
        if (app.got_subcommand(preprocess))
            return cmd_preprocess(pre_in, pre_out, pre_cpi, pre_cutoff, pre_min_years, pre_base_year);
        if (app.got_subcommand(fit))
            return cmd_fit_scaling(fit_train, fit_out, fit_positive_only, fit_per_year, fit_seed);
        if (app.got_subcommand(gmf)) return cmd_gm_forecast(gmf_params, gmf_in, gmf_horizon, gmf_out);
        if (app.got_subcommand(tr)) return cmd_train(tr_train, tr_val, tr_params, tr_config, tr_out, tr_mode, tr_seed);
        if (app.got_subcommand(fc)) return cmd_forecast(fc_model, fc_in, fc_horizon, fc_mode, fc_params, fc_out);
        if (app.got_subcommand(ev))
            return cmd_evaluate(ev_in, ev_params, ev_hybrid, ev_pure, ev_models, ev_groupby, ev_thetas, ev_horizons,
                                ev_report, ev_seed, ev_cutoff, threads);
        if (app.got_subcommand(ex))
            return cmd_explain(ex_model, ex_in, ex_params, ex_target, ex_perm, ex_sample, ex_seed, ex_out, threads);
        if (app.got_subcommand(rep)) return cmd_represent(rep_model, rep_in, rep_color, rep_out);
        if (app.got_subcommand(rp)) return cmd_reproduce(rp_seed, rp_out, rp_config, threads);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    std::cout << app.help();
    return 2;
}

} // namespace firmcast::cli
