#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "firmcast/growth.hpp"
#include "firmcast/panel.hpp"
#include "firmcast/rng.hpp"
#include "firmcast/scaling.hpp"

namespace firmcast {

/// One generated indicator column: X = c * A^beta * exp(eta) with iid
/// log-noise eta of the given standard deviation.
struct SynthIndicator {
    std::string code;
    double beta = 1.0;
    double c = 1.0;
    double noise_sd = 0.0;
    Transform transform = Transform::Log;
};

struct SynthConfig {
    std::size_t n_companies = 200;
    int start_year = 1986;
    int end_year = 2015;
    int cutoff_year = 2010;              // founding stagger keeps both sides populated
    double pre_cutoff_fraction = 0.7;    // share of companies founded well before the cutoff

    // Asset dynamics: one Euler step of the growth equation per year, then a
    // multiplicative log-space shock.
    double beta_l = 1.0, c_l = 0.5;      // liability scaling in the denominator
    double beta_i = 0.85, c_i = 0.4;     // income scaling in the numerator
    double lt_noise = 0.10;
    double ni_noise = 0.20;
    std::vector<SynthIndicator> extra{
        {"REVT", 0.9, std::exp(1.424), 0.30, Transform::Log},
        {"COGS", 0.866, std::exp(1.724), 0.30, Transform::Log},
    };

    double a0_log10_min = 4.0;           // initial assets, log-uniform
    double a0_log10_max = 9.0;

    enum class Noise { Iid, Ar1 } noise = Noise::Iid;
    double sigma0 = 0.15;                // shock scale at the reference size
    double rho = 0.0;                    // AR(1) coefficient of the shock sequence
    double gamma = 0.0;                  // volatility-size exponent: sd ~ sigma0 * (A/a_ref)^(-gamma)
    double a_ref = 1e6;
    double sigma_cap = 0.8;              // ceiling on the per-year shock sd; the power law is
                                         // an in-range regularity, unbounded only in the formula

    int substeps = 1;
    std::uint64_t seed = 1;
    std::vector<std::string> sectors{"manufacturing", "retail", "utilities", "tech", "finance", "services"};

    void check() const {
        if (n_companies == 0) throw ConfigError("synth: n_companies must be positive");
        if (end_year <= start_year) throw ConfigError("synth: end_year must exceed start_year");
        if (sigma0 < 0.0) throw ConfigError("synth: sigma0 must be >= 0");
        if (sigma_cap <= 0.0) throw ConfigError("synth: sigma_cap must be positive");
        if (!(std::abs(rho) < 1.0)) throw ConfigError("synth: |rho| must be < 1");
        if (gamma < 0.0) throw ConfigError("synth: gamma must be >= 0");
        if (substeps < 1) throw ConfigError("synth: substeps must be >= 1");
        if (!(pre_cutoff_fraction >= 0.0 && pre_cutoff_fraction <= 1.0))
            throw ConfigError("synth: pre_cutoff_fraction must be a probability");
    }

    GrowthParams planted_params() const {
        GrowthParams p;
        auto mk = [](std::string code, double beta, double c) {
            ScalingFit f;
            f.indicator = std::move(code);
            f.beta = beta;
            f.ln_c = std::log(c);
            f.r2 = 1.0;
            f.n_obs = 3;
            f.beta_ci = {beta, beta};
            f.ln_c_ci = {f.ln_c, f.ln_c};
            return f;
        };
        p.liability = mk("LT", beta_l, c_l);
        p.income = mk("NI", beta_i, c_i);
        p.per_indicator["LT"] = p.liability;
        p.per_indicator["NI"] = p.income;
        for (const auto& ind : extra) p.per_indicator[ind.code] = mk(ind.code, ind.beta, ind.c);
        return p;
    }
};

/// Generates a raw-scale panel whose dynamics follow the growth equation plus
/// structured noise, with the scaling relations planted exactly. Sector
/// labels are random and founding years staggered so a cutoff-year split has
/// both sides populated. Companies draw from independent sub-streams, so
/// generation parallelizes without changing the output.
inline CompanyPanel generate(const SynthConfig& cfg, std::size_t threads = 1) {
    cfg.check();
    const GrowthParams params = cfg.planted_params();

    CompanyPanel panel;
    IndicatorRegistry reg;
    reg.add({"AT", true, false, Transform::Log});
    reg.add({"LT", true, false, Transform::Log});
    reg.add({"NI", true, false, Transform::LinLog});
    for (const auto& ind : cfg.extra) reg.add({ind.code, true, false, ind.transform});
    panel.registry = reg;

    std::vector<SynthIndicator> columns;
    columns.push_back({"LT", cfg.beta_l, cfg.c_l, cfg.lt_noise, Transform::Log});
    columns.push_back({"NI", cfg.beta_i, cfg.c_i, cfg.ni_noise, Transform::LinLog});
    for (const auto& ind : cfg.extra) columns.push_back(ind);
    std::vector<std::size_t> column_idx;
    for (const auto& col : columns) column_idx.push_back(reg.require(col.code));
    const std::size_t at_idx = reg.require("AT");

    const int id_width = static_cast<int>(std::to_string(cfg.n_companies).size());
    panel.companies.resize(cfg.n_companies);
    std::vector<std::string> failures(cfg.n_companies);

    parallel_for(cfg.n_companies, threads, [&](std::size_t ci) {
        Rng rng(substream_seed(cfg.seed, "synth", ci));
        Company& company = panel.companies[ci];
        char buf[32];
        std::snprintf(buf, sizeof(buf), "C%0*zu", id_width, ci + 1);
        company.id = buf;
        const std::string sector = cfg.sectors[static_cast<std::size_t>(rng.uniform_index(cfg.sectors.size()))];

        int founded;
        if (rng.next_double() < cfg.pre_cutoff_fraction) {
            const int latest = std::max(cfg.start_year, cfg.cutoff_year - 8);
            founded = cfg.start_year + static_cast<int>(rng.uniform_index(
                                           static_cast<std::uint64_t>(latest - cfg.start_year + 1)));
        } else {
            const int lo = std::max(cfg.start_year, cfg.cutoff_year - 2);
            const int hi = std::max(lo, cfg.end_year - 4);
            founded = lo + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(hi - lo + 1)));
        }

        double assets = std::pow(10.0, rng.uniform(cfg.a0_log10_min, cfg.a0_log10_max));
        double shock = 0.0;
        for (int year = founded; year <= cfg.end_year; ++year) {
            CompanyRecord rec(reg.size());
            rec.fiscal_year = year;
            rec.sector = sector;
            rec.values[at_idx] = assets;
            for (std::size_t q = 0; q < columns.size(); ++q) {
                const auto& col = columns[q];
                const double eta = col.noise_sd > 0.0 ? rng.normal(0.0, col.noise_sd) : 0.0;
                rec.values[column_idx[q]] = col.c * std::pow(assets, col.beta) * std::exp(eta);
            }
            company.records.push_back(std::move(rec));
            if (year == cfg.end_year) break;

            double next = assets;
            const double dt_sub = 1.0 / static_cast<double>(cfg.substeps);
            try {
                for (int s = 0; s < cfg.substeps; ++s) next += dt_sub * asset_growth_rate(next, params);
            } catch (const Error& e) {
                failures[ci] = "synth: growth singularity for company " + company.id + " advancing year " +
                               std::to_string(year) + ": " + e.what();
                return;
            }
            const double sd = std::min(cfg.sigma0 * std::pow(assets / cfg.a_ref, -cfg.gamma), cfg.sigma_cap);
            if (cfg.sigma0 > 0.0) {
                if (cfg.noise == SynthConfig::Noise::Ar1) {
                    const double innovation_sd = sd * std::sqrt(1.0 - cfg.rho * cfg.rho);
                    shock = cfg.rho * shock + rng.normal(0.0, innovation_sd);
                } else {
                    shock = rng.normal(0.0, sd);
                }
            } else {
                shock = 0.0;
            }
            assets = next * std::exp(shock);
            if (!(assets > 0.0) || !std::isfinite(assets)) {
                failures[ci] = "synth: assets left the positive domain for company " + company.id + " at year " +
                               std::to_string(year + 1);
                return;
            }
        }
    });
    for (const auto& failure : failures)
        if (!failure.empty()) throw DataError(failure);
    return panel;
}

/// The three canonical benchmark panels: NOISELESS lies exactly on growth
/// trajectories, GIBRATLIKE has near-constant log drift with iid shocks, and
/// STRUCTURED adds AR(1) shocks with size-dependent volatility for the
/// residual learner to exploit.
inline SynthConfig noiseless_config(std::uint64_t seed) {
    SynthConfig cfg;
    cfg.seed = seed;
    cfg.sigma0 = 0.0;
    cfg.gamma = 0.0;
    cfg.rho = 0.0;
    cfg.lt_noise = cfg.ni_noise = 0.0;
    for (auto& ind : cfg.extra) ind.noise_sd = 0.0;
    return cfg;
}

inline SynthConfig gibratlike_config(std::uint64_t seed) {
    SynthConfig cfg;
    cfg.seed = seed;
    // Nearly scale-free drift: beta_I close to 1 makes dlnA/dt vary only
    // mildly with size, the regime where the random-growth null is strongest.
    cfg.beta_i = 0.95;
    cfg.c_i = 0.085;
    cfg.beta_l = 1.0;
    cfg.c_l = 0.5;
    cfg.noise = SynthConfig::Noise::Iid;
    cfg.sigma0 = 0.10;
    cfg.gamma = 0.0;
    cfg.rho = 0.0;
    return cfg;
}

inline SynthConfig structured_config(std::uint64_t seed) {
    SynthConfig cfg;
    cfg.seed = seed;
    cfg.noise = SynthConfig::Noise::Ar1;
    cfg.rho = 0.6;
    cfg.gamma = 0.2;
    cfg.sigma0 = 0.15;
    return cfg;
}

inline std::map<std::string, CompanyPanel> benchmark_suite(std::uint64_t seed) {
    std::map<std::string, CompanyPanel> suite;
    suite["NOISELESS"] = generate(noiseless_config(seed));
    suite["GIBRATLIKE"] = generate(gibratlike_config(seed));
    suite["STRUCTURED"] = generate(structured_config(seed));
    return suite;
}

} // namespace firmcast
