#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "firmcast/eval.hpp"
#include "firmcast/svg.hpp"

namespace firmcast {

namespace detail {

inline std::ofstream open_report_file(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write report file: " + path.string());
    return out;
}

inline std::string join_strings(const std::vector<std::string>& v, const char* sep = ",") {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? sep : "") + v[i];
    return s;
}

} // namespace detail

/// Writes the tabular reports and the mirror plots for one evaluation run.
/// Everything is emitted in deterministic order with fixed formatting.
inline void write_eval_report(const EvalReport& report, const std::filesystem::path& report_dir,
                              const std::filesystem::path& plot_dir,
                              const std::map<std::string, std::string>& header,
                              const std::set<std::string>& groupings = {}) {
    namespace fs = std::filesystem;
    fs::create_directories(report_dir);
    fs::create_directories(plot_dir);
    auto wants = [&](const char* name) { return groupings.empty() || groupings.count(name) != 0; };

    {
        auto out = detail::open_report_file(report_dir / "summary.txt");
        out << "# evaluation summary\n";
        out << "models = " << detail::join_strings(report.models) << "\n";
        out << "targets = " << detail::join_strings(report.targets) << "\n";
        out << "horizon = " << report.horizon << "\n";
        for (const auto& [k, v] : header) out << k << " = " << v << "\n";
        out << "n_windows = " << report.n_windows << "\n";
        for (const auto& model : report.models) {
            const auto& pooled = report.pooled_mae_by_step.at(model);
            out << "mae[" << model << "] =";
            for (double v : pooled) out << " " << format_short(v);
            out << "\n";
        }
    }

    {
        auto out = detail::open_report_file(report_dir / "mae_by_step.tsv");
        out << "model\tindicator\tstep\tmae\tn\n";
        for (const auto& model : report.models) {
            const auto& table = report.mae_by_step.at(model);
            const auto& counts = report.count_by_step.at(model);
            for (std::size_t q = 0; q < report.targets.size(); ++q)
                for (std::size_t k = 0; k < table[q].size(); ++k)
                    out << model << "\t" << report.targets[q] << "\t" << k + 1 << "\t" << format_short(table[q][k])
                        << "\t" << counts[q][k] << "\n";
        }
    }

    {
        auto out = detail::open_report_file(report_dir / "mae_pooled.tsv");
        out << "model\tstep\tmae\n";
        for (const auto& model : report.models) {
            const auto& pooled = report.pooled_mae_by_step.at(model);
            for (std::size_t k = 0; k < pooled.size(); ++k)
                out << model << "\t" << k + 1 << "\t" << format_short(pooled[k]) << "\n";
        }
    }

    {
        auto out = detail::open_report_file(report_dir / "cmae_cdf.tsv");
        out << "model\tindicator\tthreshold\tcdf\n";
        for (const auto& model : report.models) {
            if (report.pooled_cdf.count(model))
                for (const auto& [x, f] : report.pooled_cdf.at(model))
                    out << model << "\t__pooled\t" << format_short(x) << "\t" << format_short(f) << "\n";
            if (report.cdf.count(model))
                for (const auto& [target, curve] : report.cdf.at(model))
                    for (const auto& [x, f] : curve)
                        out << model << "\t" << target << "\t" << format_short(x) << "\t" << format_short(f) << "\n";
        }
    }

    auto write_groups = [&](const char* name, const std::map<std::string, std::map<std::string, double>>& table,
                            const std::map<std::string, std::size_t>& counts) {
        auto out = detail::open_report_file(report_dir / (std::string("groups_") + name + ".tsv"));
        out << "group\tmodel\tmae\tn_companies\n";
        for (const auto& [group, models] : table)
            for (const auto& [model, value] : models)
                out << group << "\t" << model << "\t" << format_short(value) << "\t" << counts.at(group) << "\n";
    };
    if (wants("size")) write_groups("size", report.by_size, report.size_counts);
    if (wants("age")) write_groups("age", report.by_age, report.age_counts);
    if (wants("sector")) write_groups("sector", report.by_sector, report.sector_counts);

    if (wants("gm-threshold")) {
        auto out = detail::open_report_file(report_dir / "gm_threshold.tsv");
        out << "theta\tgroup\tmodel\tmae\tn_companies\n";
        for (const auto& [theta, groups] : report.by_gm_threshold)
            for (const auto& [group, models] : groups)
                for (const auto& [model, value] : models)
                    out << format_short(theta) << "\t" << group << "\t" << model << "\t" << format_short(value) << "\t"
                        << report.gm_group_counts.at(theta).at(group) << "\n";
    }

    // Plots mirroring the multi-step, CDF, and grouped-bar analyses.
    {
        std::vector<SvgSeries> series;
        for (const auto& model : report.models) {
            SvgSeries s;
            s.label = model;
            const auto& pooled = report.pooled_mae_by_step.at(model);
            for (std::size_t k = 0; k < pooled.size(); ++k)
                s.points.emplace_back(static_cast<double>(k + 1), pooled[k]);
            series.push_back(std::move(s));
        }
        write_line_chart(plot_dir / "mae_vs_step.svg", "MAE by prediction step", "step", "MAE", series);
    }
    {
        std::vector<SvgSeries> series;
        for (const auto& model : report.models) {
            if (!report.pooled_cdf.count(model)) continue;
            SvgSeries s;
            s.label = model;
            for (const auto& [x, f] : report.pooled_cdf.at(model)) s.points.emplace_back(x, f);
            series.push_back(std::move(s));
        }
        write_line_chart(plot_dir / "cmae_cdf.svg", "Cumulative distribution of company MAE", "MAE", "fraction",
                         series);
    }
    auto bar_plot = [&](const char* name, const std::map<std::string, std::map<std::string, double>>& table,
                        const std::string& title) {
        if (table.empty()) return;
        std::vector<std::string> groups;
        for (const auto& [g, _] : table) groups.push_back(g);
        std::vector<std::vector<double>> values;
        for (const auto& g : groups) {
            std::vector<double> row;
            for (const auto& model : report.models) {
                auto it = table.at(g).find(model);
                row.push_back(it == table.at(g).end() ? 0.0 : it->second);
            }
            values.push_back(std::move(row));
        }
        write_bar_chart(plot_dir / (std::string(name) + "_groups.svg"), title, groups, report.models, values, "MAE");
    };
    if (wants("size")) bar_plot("size", report.by_size, "MAE by size group");
    if (wants("age")) bar_plot("age", report.by_age, "MAE by age group");
    if (wants("sector")) bar_plot("sector", report.by_sector, "MAE by sector");
    if (wants("gm-threshold"))
        for (const auto& [theta, groups] : report.by_gm_threshold) {
            std::map<std::string, std::map<std::string, double>> as_table;
            for (const auto& [group, models] : groups) as_table[group] = models;
            bar_plot(("gm_theta_" + format_short(theta)).c_str(), as_table,
                     "MAE by growth-model performance group (theta = " + format_short(theta) + ")");
        }
}

/// Tabular forecast rows: company, origin year, step, indicator, value, status.
inline void write_forecasts(const std::vector<ForecastResult>& forecasts, const std::filesystem::path& path) {
    auto out = detail::open_report_file(path);
    out << "company_id\torigin_year\tmodel\tstep\tindicator\tpredicted_value\tstatus\n";
    for (const auto& f : forecasts) {
        for (std::size_t k = 0; k < f.predictions.size(); ++k)
            for (std::size_t q = 0; q < f.indicators.size(); ++q)
                out << f.company_id << "\t" << f.origin_year << "\t" << f.model << "\t" << k + 1 << "\t"
                    << f.indicators[q] << "\t" << format_double(f.predictions[k][q]) << "\tok\n";
        if (f.status != "ok")  // truncation marker for the step that failed
            out << f.company_id << "\t" << f.origin_year << "\t" << f.model << "\t" << f.valid_steps + 1
                << "\t\t\t" << f.status << "\n";
    }
}

} // namespace firmcast
