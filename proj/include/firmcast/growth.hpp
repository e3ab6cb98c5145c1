#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "firmcast/preprocess.hpp"
#include "firmcast/scaling.hpp"

namespace firmcast {

/// Below this magnitude the growth-equation denominator counts as singular;
/// forecasting through the pole is refused rather than clamped.
inline constexpr double kDenominatorGuard = 1e-6;

/// 1 - c_L * beta_L * A^(beta_L - 1), the denominator shared by both growth
/// rates. Throws when it enters the guard band.
inline double growth_denominator(double assets, const GrowthParams& params, double guard = kDenominatorGuard) {
    const double d = 1.0 - params.liability.c() * params.liability.beta *
                               std::pow(assets, params.liability.beta - 1.0);
    if (std::abs(d) < guard)
        throw SingularityError("growth denominator within guard band at assets " + format_short(assets) +
                                   " (D = " + format_short(d) + ")",
                               assets, d);
    return d;
}

/// dA/dt = c_I * A^(beta_I) / (1 - c_L * beta_L * A^(beta_L - 1)).
inline double asset_growth_rate(double assets, const GrowthParams& params, double guard = kDenominatorGuard) {
    if (assets <= 0.0) throw DomainError("asset_growth_rate: assets must be positive");
    const double d = growth_denominator(assets, params, guard);
    return params.income.c() * std::pow(assets, params.income.beta) / d;
}

/// dX/dt = c_X * c_I * beta_X * A^(beta_X + beta_I - 1) / (1 - c_L * beta_L * A^(beta_L - 1)),
/// the general form for any indicator with a scaling relation X = c_X * A^(beta_X).
inline double indicator_growth_rate(double assets, const ScalingFit& fit, const GrowthParams& params,
                                    double guard = kDenominatorGuard) {
    if (assets <= 0.0) throw DomainError("indicator_growth_rate: assets must be positive");
    const double d = growth_denominator(assets, params, guard);
    return fit.c() * params.income.c() * fit.beta * std::pow(assets, fit.beta + params.income.beta - 1.0) / d;
}

/// Raw-scale state of the mechanistic trajectory at one step.
struct GmState {
    double assets = 0.0;
    std::vector<double> indicators;  // aligned with GmTrajectory::tracked
    int year_index = 0;
    double dt = 1.0;
};

struct GmTrajectory {
    std::vector<std::string> tracked;
    std::vector<GmState> states;        // horizon+1 states when not truncated
    std::vector<double> denominators;   // one per substep actually taken
    std::optional<std::size_t> truncated_at;  // step index at which integration stopped
    std::string status = "ok";

    bool complete() const { return !truncated_at.has_value(); }
};

/// Explicit Euler integration of the growth equations. Indicators advance
/// with the asset value at the start of each substep; a singular denominator
/// truncates the trajectory with an error marker instead of throwing.
inline GmTrajectory euler_forecast(const GmState& initial, int horizon, const GrowthParams& params,
                                   std::span<const std::string> tracked, int substeps = 1,
                                   double guard = kDenominatorGuard) {
    if (initial.assets <= 0.0) throw DomainError("euler_forecast: initial assets must be positive");
    if (horizon < 1) throw ConfigError("euler_forecast: horizon must be >= 1");
    if (substeps < 1) throw ConfigError("euler_forecast: substeps must be >= 1");
    if (initial.indicators.size() != tracked.size())
        throw ConfigError("euler_forecast: initial indicator values not aligned with tracked list");

    std::vector<const ScalingFit*> fits;
    fits.reserve(tracked.size());
    for (const auto& code : tracked) fits.push_back(&params.require(code));

    GmTrajectory traj;
    traj.tracked.assign(tracked.begin(), tracked.end());
    traj.states.push_back(initial);

    GmState state = initial;
    const double dt_sub = initial.dt / static_cast<double>(substeps);
    for (int step = 0; step < horizon; ++step) {
        try {
            for (int s = 0; s < substeps; ++s) {
                const double a_prev = state.assets;
                traj.denominators.push_back(growth_denominator(a_prev, params, guard));
                const double rate = asset_growth_rate(a_prev, params, guard);
                for (std::size_t k = 0; k < fits.size(); ++k)
                    state.indicators[k] += dt_sub * indicator_growth_rate(a_prev, *fits[k], params, guard);
                state.assets = a_prev + dt_sub * rate;
                if (state.assets <= 0.0)
                    throw DomainError("euler_forecast: assets driven nonpositive at step " + std::to_string(step));
            }
        } catch (const Error& e) {
            traj.truncated_at = static_cast<std::size_t>(step);
            traj.status = e.what();
            return traj;
        }
        state.year_index = initial.year_index + step + 1;
        traj.states.push_back(state);
    }
    return traj;
}

/// One Euler step expressed in transformed (model) space: inverse-transform
/// the predicted values to the raw scale, advance the growth equations, and
/// re-transform. This is the coupling between the recurrent decoder and the
/// growth model during the hybrid rollout.
inline std::vector<double> gm_step_from_prediction(std::span<const double> predicted,
                                                   std::span<const std::string> targets,
                                                   const IndicatorRegistry& registry, const GrowthParams& params,
                                                   double dt = 1.0, double guard = kDenominatorGuard) {
    if (predicted.size() != targets.size())
        throw ConfigError("gm_step_from_prediction: prediction/target size mismatch");
    std::size_t asset_pos = targets.size();
    for (std::size_t i = 0; i < targets.size(); ++i)
        if (targets[i] == "AT") asset_pos = i;
    if (asset_pos == targets.size()) throw ConfigError("gm_step_from_prediction: targets must include AT");

    std::vector<Transform> kinds(targets.size());
    std::vector<double> raw(targets.size());
    for (std::size_t i = 0; i < targets.size(); ++i) {
        kinds[i] = registry.at(registry.require(targets[i])).transform;
        raw[i] = untransform_value(predicted[i], kinds[i]);
    }
    const double assets = raw[asset_pos];
    if (assets <= 0.0) throw DomainError("gm_step_from_prediction: inverse-transformed assets <= 0");

    const double rate = asset_growth_rate(assets, params, guard);
    std::vector<double> rates(targets.size(), 0.0);
    bool all_zero = rate == 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        if (i == asset_pos) {
            rates[i] = rate;
        } else {
            rates[i] = indicator_growth_rate(assets, params.require(targets[i]), params, guard);
        }
        if (rates[i] != 0.0) all_zero = false;
    }
    // Zero growth is an exact identity; skipping the transform round trip
    // keeps it bit-exact.
    if (all_zero) return std::vector<double>(predicted.begin(), predicted.end());

    std::vector<double> out(targets.size());
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const double next = raw[i] + dt * rates[i];
        if (kinds[i] == Transform::Log && next <= 0.0)
            throw DomainError("gm_step_from_prediction: " + targets[i] + " driven nonpositive");
        out[i] = transform_value(next, kinds[i]);
    }
    return out;
}

/// Per-company forecast in transformed space, for any of the model variants.
struct ForecastResult {
    std::string company_id;
    int origin_year = 0;                       // first predicted fiscal year
    std::string model;                         // "gm", "nn", "nn+gm", "persistence", "gibrat"
    std::vector<std::string> indicators;
    std::vector<std::vector<double>> predictions;  // step-major: predictions[k][i]
    std::size_t valid_steps = 0;               // < horizon when the trajectory truncated
    std::string status = "ok";
};

/// Iterates gm_step_from_prediction from the last observed values: the pure
/// growth-model forecast as scored against the other models.
inline ForecastResult gm_rollout(std::span<const double> last_observed, std::span<const std::string> targets,
                                 const IndicatorRegistry& registry, const GrowthParams& params, int horizon,
                                 double guard = kDenominatorGuard) {
    ForecastResult result;
    result.model = "gm";
    result.indicators.assign(targets.begin(), targets.end());
    std::vector<double> prev(last_observed.begin(), last_observed.end());
    for (int k = 0; k < horizon; ++k) {
        try {
            prev = gm_step_from_prediction(prev, targets, registry, params, 1.0, guard);
        } catch (const Error& e) {
            result.status = e.what();
            return result;
        }
        result.predictions.push_back(prev);
        result.valid_steps = static_cast<std::size_t>(k) + 1;
    }
    return result;
}

} // namespace firmcast
