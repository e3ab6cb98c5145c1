#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "firmcast/adam.hpp"
#include "firmcast/growth.hpp"
#include "firmcast/lstm.hpp"
#include "firmcast/panel.hpp"
#include "firmcast/rng.hpp"

namespace firmcast {

struct ForecastConfig {
    std::size_t hidden_dim = 32;
    int encoder_len = 3;   // history years consumed by the encoder
    int decoder_len = 3;   // prediction years during training; inference is open-ended
    std::vector<std::string> targets{"AT", "LT", "REVT", "NI"};
    bool use_macro = false;
    double learning_rate = 1e-3;
    double weight_decay = 5e-3;
    std::size_t batch_size = 64;
    int max_epochs = 200;
    int patience = 10;
    std::uint64_t seed = 1;
    bool hybrid = true;  // growth-model channel vs. previous-value channel
    // Probability a training sample closes the loop on its own predictions
    // instead of the teacher-forced channel. Training fully in the rollout
    // regime is the default: teacher forcing lets the decoder read realized
    // shocks out of the observed input sequence, a signal that does not exist
    // at inference and that degrades long-horizon rollouts.
    double scheduled_sampling = 1.0;
    bool closed_loop_validation = true;  // score validation windows in rollout mode, the deployment regime

    void check() const {
        if (hidden_dim == 0) throw ConfigError("hidden_dim must be positive");
        if (encoder_len < 1 || decoder_len < 1) throw ConfigError("encoder/decoder lengths must be >= 1");
        if (targets.empty()) throw ConfigError("target list is empty");
        if (std::find(targets.begin(), targets.end(), "AT") == targets.end())
            throw ConfigError("targets must include AT (the rollout advances the growth model on assets)");
        if (batch_size == 0) throw ConfigError("batch_size must be positive");
        if (!(scheduled_sampling >= 0.0 && scheduled_sampling <= 1.0))
            throw ConfigError("scheduled_sampling must be a probability");
    }
};

/// The growth-model side of the hybrid coupling.
struct GmCoupling {
    const GrowthParams* params = nullptr;
    const IndicatorRegistry* registry = nullptr;
};

/// One training window: encoder history, teacher-forced decoder channel, and
/// the absolute labels. Residual targets are label - base at loss time, so the
/// same shape serves the hybrid model (base = growth-model step) and the pure
/// recurrent ablation (base = previous observed value).
struct TrainingSample {
    std::vector<std::vector<double>> encoder_inputs;  // encoder_len x (features [+ macro])
    std::vector<std::vector<double>> decoder_base;    // decoder_len x targets
    std::vector<std::vector<double>> decoder_macro;   // decoder_len x macro (empty unless use_macro)
    std::vector<std::vector<double>> labels;          // decoder_len x targets
    std::string company_id;
    int origin_year = 0;  // fiscal year of the first label
};

struct WindowSet {
    std::vector<TrainingSample> samples;
    std::vector<std::string> features;  // encoder financial codes, registry order
    std::vector<std::string> macros;    // macro codes when use_macro
    std::vector<std::string> targets;
};

/// All trainable weights plus the configuration they were built for. The
/// encoder cell is shared across every encoder step and the decoder cell
/// across every decoder step; there is exactly one parameter set per side.
struct ModelState {
    ForecastConfig config;
    std::vector<std::string> features;
    std::vector<std::string> macros;
    std::vector<double> theta;

    std::size_t enc_in = 0, dec_in = 0, n_targets = 0;
    std::size_t enc_w = 0, enc_b = 0, dec_w = 0, dec_b = 0, out_w = 0, out_b = 0;

    void compute_layout() {
        const std::size_t h = config.hidden_dim;
        enc_in = features.size() + macros.size();
        n_targets = config.targets.size();
        dec_in = n_targets + macros.size();
        enc_w = 0;
        enc_b = enc_w + 4 * h * (enc_in + h);
        dec_w = enc_b + 4 * h;
        dec_b = dec_w + 4 * h * (dec_in + h);
        out_w = dec_b + 4 * h;
        out_b = out_w + n_targets * h;
    }

    std::size_t total_params() const { return out_b + n_targets; }

    CellView encoder() const { return {enc_in, config.hidden_dim, theta.data() + enc_w, theta.data() + enc_b}; }
    CellView decoder() const { return {dec_in, config.hidden_dim, theta.data() + dec_w, theta.data() + dec_b}; }
    const double* readout_w() const { return theta.data() + out_w; }
    const double* readout_b() const { return theta.data() + out_b; }
};

/// Uniform init in +-1/sqrt(fan-in) per gate, forget-gate bias at 1.
inline ModelState init_model(const ForecastConfig& config, std::vector<std::string> features,
                             std::vector<std::string> macros, Rng& rng) {
    config.check();
    ModelState m;
    m.config = config;
    m.features = std::move(features);
    m.macros = std::move(macros);
    m.compute_layout();
    m.theta.assign(m.total_params(), 0.0);

    const std::size_t h = config.hidden_dim;
    auto fill_cell = [&](std::size_t w_off, std::size_t b_off, std::size_t in_dim) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim + h));
        for (std::size_t k = 0; k < 4 * h * (in_dim + h); ++k) m.theta[w_off + k] = rng.uniform(-bound, bound);
        for (std::size_t k = 0; k < 4 * h; ++k) m.theta[b_off + k] = 0.0;
        for (std::size_t k = 0; k < h; ++k) m.theta[b_off + h + k] = 1.0;  // forget gate
    };
    fill_cell(m.enc_w, m.enc_b, m.enc_in);
    fill_cell(m.dec_w, m.dec_b, m.dec_in);
    const double bound = 1.0 / std::sqrt(static_cast<double>(h));
    for (std::size_t k = 0; k < m.n_targets * h; ++k) m.theta[m.out_w + k] = rng.uniform(-bound, bound);
    return m;
}

namespace detail {

inline void gather_row(const CompanyRecord& rec, const IndicatorRegistry& registry,
                       std::span<const std::size_t> indices, std::vector<double>& out, bool& ok) {
    for (std::size_t idx : indices) {
        if (!rec.values[idx]) {
            ok = false;
            return;
        }
        out.push_back(*rec.values[idx]);
    }
    (void)registry;
}

} // namespace detail

/// Slides a length-(encoder_len + decoder_len) window over each company's
/// consecutive-year records. Windows touching an absent value are excluded.
/// The decoder channel is teacher-forced: each base row comes from a one-step
/// advance of the observed values at the label year's predecessor.
inline WindowSet make_windows(const CompanyPanel& panel, const GrowthParams& params, const ForecastConfig& config) {
    config.check();
    if (!panel.meta.transformed) throw DataError("make_windows: panel must be transformed");

    WindowSet out;
    out.features = panel.registry.financial_codes();
    if (config.use_macro) out.macros = panel.registry.macro_codes();
    out.targets = config.targets;

    std::vector<std::size_t> feature_idx, macro_idx, target_idx;
    for (const auto& code : out.features) feature_idx.push_back(panel.registry.require(code));
    for (const auto& code : out.macros) macro_idx.push_back(panel.registry.require(code));
    for (const auto& code : out.targets) target_idx.push_back(panel.registry.require(code));

    const std::size_t t = static_cast<std::size_t>(config.encoder_len);
    const std::size_t T = static_cast<std::size_t>(config.decoder_len);
    const std::size_t window = t + T;

    for (const auto& company : panel.companies) {
        if (company.records.size() < window) continue;
        for (std::size_t start = 0; start + window <= company.records.size(); ++start) {
            bool ok = true;
            for (std::size_t k = 1; k < window && ok; ++k)
                if (company.records[start + k].fiscal_year != company.records[start + k - 1].fiscal_year + 1)
                    ok = false;
            if (!ok) continue;

            TrainingSample sample;
            sample.company_id = company.id;
            sample.origin_year = company.records[start + t].fiscal_year;

            for (std::size_t k = 0; k < t && ok; ++k) {
                std::vector<double> row;
                row.reserve(feature_idx.size() + macro_idx.size());
                detail::gather_row(company.records[start + k], panel.registry, feature_idx, row, ok);
                if (ok && config.use_macro)
                    detail::gather_row(company.records[start + k], panel.registry, macro_idx, row, ok);
                sample.encoder_inputs.push_back(std::move(row));
            }
            for (std::size_t j = 0; j < T && ok; ++j) {
                std::vector<double> label;
                detail::gather_row(company.records[start + t + j], panel.registry, target_idx, label, ok);
                if (!ok) break;
                sample.labels.push_back(std::move(label));
                if (config.use_macro) {
                    std::vector<double> macro;
                    detail::gather_row(company.records[start + t + j], panel.registry, macro_idx, macro, ok);
                    if (!ok) break;
                    sample.decoder_macro.push_back(std::move(macro));
                }
                std::vector<double> prev;
                detail::gather_row(company.records[start + t + j - 1], panel.registry, target_idx, prev, ok);
                if (!ok) break;
                if (config.hybrid) {
                    try {
                        sample.decoder_base.push_back(
                            gm_step_from_prediction(prev, out.targets, panel.registry, params));
                    } catch (const Error&) {
                        ok = false;  // a singular or out-of-domain step disqualifies the window
                    }
                } else {
                    sample.decoder_base.push_back(std::move(prev));
                }
            }
            if (ok) out.samples.push_back(std::move(sample));
        }
    }
    return out;
}

struct SampleCache {
    std::vector<CellCache> enc;
    std::vector<CellCache> dec;
    std::vector<std::vector<double>> dec_h;    // hidden after each decoder step
    std::vector<std::vector<double>> outputs;  // residual vectors O_j
    std::vector<std::vector<double>> base;     // base channel actually fed to the decoder
};

/// Runs encoder and decoder for one sample. When `closed_loop` is set the
/// decoder consumes bases advanced from its own previous prediction instead
/// of the teacher-forced ones; with `fallback_on_error` a growth-model domain
/// failure falls back to the teacher-forced base so training can continue.
inline void forward_sample(const ModelState& m, const TrainingSample& sample, SampleCache& cache,
                           bool closed_loop = false, const GmCoupling* coupling = nullptr,
                           bool fallback_on_error = false) {
    const std::size_t t = sample.encoder_inputs.size();
    const std::size_t T = sample.labels.size();
    const std::size_t K = m.n_targets;

    cache.enc.resize(t);
    cache.dec.resize(T);
    cache.dec_h.assign(T, {});
    cache.outputs.assign(T, std::vector<double>(K, 0.0));
    cache.base.assign(T, {});

    RecurrentState state(m.config.hidden_dim);
    const CellView enc = m.encoder();
    for (std::size_t s = 0; s < t; ++s) state = cell_step(sample.encoder_inputs[s], state, enc, &cache.enc[s]);

    const CellView dec = m.decoder();
    std::vector<double> prev;  // previous prediction, for the closed loop
    for (std::size_t j = 0; j < T; ++j) {
        std::vector<double> base;
        if (!closed_loop || j == 0) {
            base = sample.decoder_base[j];
        } else if (m.config.hybrid) {
            if (fallback_on_error) {
                try {
                    base = gm_step_from_prediction(prev, m.config.targets, *coupling->registry, *coupling->params);
                } catch (const Error&) {
                    base = sample.decoder_base[j];
                }
            } else {
                base = gm_step_from_prediction(prev, m.config.targets, *coupling->registry, *coupling->params);
            }
        } else {
            base = prev;
        }
        std::vector<double> input = base;
        if (!sample.decoder_macro.empty())
            input.insert(input.end(), sample.decoder_macro[j].begin(), sample.decoder_macro[j].end());
        state = cell_step(input, state, dec, &cache.dec[j]);
        cache.dec_h[j] = state.h;

        const double* rw = m.readout_w();
        const double* rb = m.readout_b();
        for (std::size_t k = 0; k < K; ++k) {
            double acc = rb[k];
            for (std::size_t hh = 0; hh < m.config.hidden_dim; ++hh) acc += rw[k * m.config.hidden_dim + hh] * state.h[hh];
            cache.outputs[j][k] = acc;
        }
        if (closed_loop) {
            prev.assign(K, 0.0);
            for (std::size_t k = 0; k < K; ++k) prev[k] = base[k] + cache.outputs[j][k];
        }
        cache.base[j] = std::move(base);
    }
}

/// Residual outputs of the decoder for one sample (T x targets).
inline std::vector<std::vector<double>> forward(const ModelState& m, const TrainingSample& sample) {
    SampleCache cache;
    forward_sample(m, sample, cache);
    return cache.outputs;
}

/// Mean squared residual error over (batch, steps, targets) plus the gradient
/// of every parameter, by reverse-mode differentiation through the unrolled
/// recurrence.
inline double loss_and_gradients(const ModelState& m, std::span<const TrainingSample* const> batch,
                                 std::vector<double>& grad, bool closed_loop = false,
                                 const GmCoupling* coupling = nullptr, const std::vector<bool>* loop_mask = nullptr) {
    if (batch.empty()) throw DataError("loss_and_gradients: empty batch");
    grad.assign(m.theta.size(), 0.0);

    const std::size_t H = m.config.hidden_dim;
    const std::size_t K = m.n_targets;
    double loss = 0.0;
    std::size_t n_terms = 0;
    for (const TrainingSample* s : batch) n_terms += s->labels.size() * K;
    const double scale = 2.0 / static_cast<double>(n_terms);

    SampleCache cache;
    std::vector<double> dh(H), dc(H), dh_prev(H), dc_prev(H);
    std::vector<double> dx_dec, dx_enc;

    for (std::size_t bi = 0; bi < batch.size(); ++bi) {
        const TrainingSample& sample = *batch[bi];
        const bool loop = closed_loop && (!loop_mask || (*loop_mask)[bi]);
        forward_sample(m, sample, cache, loop, coupling, /*fallback_on_error=*/true);
        const std::size_t T = sample.labels.size();

        std::fill(dh.begin(), dh.end(), 0.0);
        std::fill(dc.begin(), dc.end(), 0.0);
        const CellView dec = m.decoder();
        dx_dec.assign(dec.input_dim, 0.0);

        for (std::size_t j = T; j-- > 0;) {
            for (std::size_t k = 0; k < K; ++k) {
                const double resid_label = sample.labels[j][k] - cache.base[j][k];
                const double e = cache.outputs[j][k] - resid_label;
                loss += e * e;
                const double dO = scale * e;
                grad[m.out_b + k] += dO;
                for (std::size_t hh = 0; hh < H; ++hh) {
                    grad[m.out_w + k * H + hh] += dO * cache.dec_h[j][hh];
                    dh[hh] += dO * m.readout_w()[k * H + hh];
                }
            }
            cell_backward(cache.dec[j], dec, dh, dc, grad.data() + m.dec_w, grad.data() + m.dec_b, dx_dec, dh_prev,
                          dc_prev);
            std::swap(dh, dh_prev);
            std::swap(dc, dc_prev);
        }

        const CellView enc = m.encoder();
        dx_enc.assign(enc.input_dim, 0.0);
        for (std::size_t s = sample.encoder_inputs.size(); s-- > 0;) {
            cell_backward(cache.enc[s], enc, dh, dc, grad.data() + m.enc_w, grad.data() + m.enc_b, dx_enc, dh_prev,
                          dc_prev);
            std::swap(dh, dh_prev);
            std::swap(dc, dc_prev);
        }
    }
    return loss / static_cast<double>(n_terms);
}

/// Forward-only mean squared residual error. In closed-loop mode the decoder
/// consumes bases advanced from its own predictions, matching inference.
inline double evaluate_loss(const ModelState& m, std::span<const TrainingSample> samples, bool closed_loop = false,
                            const GmCoupling* coupling = nullptr) {
    if (samples.empty()) throw DataError("evaluate_loss: no samples");
    SampleCache cache;
    double loss = 0.0;
    std::size_t n_terms = 0;
    for (const auto& sample : samples) {
        try {
            forward_sample(m, sample, cache, closed_loop, coupling);
        } catch (const Error&) {
            if (!closed_loop) throw;
            // A rollout that left the growth model's domain is a bad model,
            // not a bad sample: penalize instead of aborting selection.
            loss += 1e3 * static_cast<double>(sample.labels.size() * m.n_targets);
            n_terms += sample.labels.size() * m.n_targets;
            continue;
        }
        for (std::size_t j = 0; j < sample.labels.size(); ++j)
            for (std::size_t k = 0; k < m.n_targets; ++k) {
                const double resid = sample.labels[j][k] - cache.base[j][k];
                const double e = cache.outputs[j][k] - resid;
                loss += e * e;
                ++n_terms;
            }
    }
    return loss / static_cast<double>(n_terms);
}

struct TrainResult {
    ModelState model;
    std::vector<std::array<double, 3>> curve;  // epoch, train loss, validation loss
    int best_epoch = -1;
    double best_val = 0.0;
};

/// Adam with decoupled weight decay, early stopping on validation loss, and a
/// seeded batch order. Returns the best-validation model.
inline TrainResult train(const WindowSet& windows, const WindowSet& val, const ForecastConfig& config,
                         const GmCoupling* coupling = nullptr) {
    config.check();
    if (windows.samples.empty()) throw DataError("train: no training windows");
    if (val.samples.empty()) throw DataError("train: no validation windows");
    if (config.scheduled_sampling > 0.0 && config.hybrid && !coupling)
        throw ConfigError("train: scheduled sampling on the hybrid model needs the growth-model coupling");
    if (config.closed_loop_validation && config.hybrid && !coupling)
        throw ConfigError("train: closed-loop validation on the hybrid model needs the growth-model coupling");

    Rng init_rng(substream_seed(config.seed, "init"));
    Rng batch_rng(substream_seed(config.seed, "batching"));

    TrainResult result;
    result.model = init_model(config, windows.features, windows.macros, init_rng);
    ModelState& m = result.model;

    AdamW optimizer(m.theta.size(), config.learning_rate, config.weight_decay);
    std::vector<double> grad;
    std::vector<std::size_t> order(windows.samples.size());
    std::iota(order.begin(), order.end(), 0);

    std::vector<double> best_theta = m.theta;
    double best_val = std::numeric_limits<double>::infinity();
    int best_epoch = -1;
    int since_best = 0;

    for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
        batch_rng.shuffle(order);
        double train_loss = 0.0;
        std::size_t n_batches = 0;
        for (std::size_t pos = 0; pos < order.size(); pos += config.batch_size) {
            const std::size_t end = std::min(order.size(), pos + config.batch_size);
            std::vector<const TrainingSample*> batch;
            std::vector<bool> loop_mask;
            batch.reserve(end - pos);
            for (std::size_t q = pos; q < end; ++q) {
                batch.push_back(&windows.samples[order[q]]);
                loop_mask.push_back(config.scheduled_sampling > 0.0 &&
                                    batch_rng.next_double() < config.scheduled_sampling);
            }
            const bool any_loop = std::find(loop_mask.begin(), loop_mask.end(), true) != loop_mask.end();
            double batch_loss = 0.0;
            try {
                batch_loss = loss_and_gradients(m, batch, grad, any_loop, coupling, any_loop ? &loop_mask : nullptr);
            } catch (const NumericError& e) {
                throw TrainError("train: diverged at epoch " + std::to_string(epoch) + ": " + e.what());
            }
            if (!std::isfinite(batch_loss))
                throw TrainError("train: loss diverged at epoch " + std::to_string(epoch));
            optimizer.step(m.theta, grad);
            train_loss += batch_loss;
            ++n_batches;
        }
        train_loss /= static_cast<double>(n_batches);

        const double val_loss = evaluate_loss(m, val.samples, config.closed_loop_validation, coupling);
        if (!std::isfinite(val_loss)) throw TrainError("train: validation loss diverged at epoch " + std::to_string(epoch));
        result.curve.push_back({static_cast<double>(epoch), train_loss, val_loss});

        if (val_loss < best_val) {
            best_val = val_loss;
            best_epoch = epoch;
            best_theta = m.theta;
            since_best = 0;
        } else if (++since_best >= config.patience) {
            break;
        }
    }

    m.theta = std::move(best_theta);
    result.best_epoch = best_epoch;
    result.best_val = best_val;
    return result;
}

/// History and coupling inputs for an inference rollout.
struct RolloutInput {
    std::string company_id;
    int origin_year = 0;                            // fiscal year of the first predicted step
    std::vector<std::vector<double>> history;       // encoder_len x encoder inputs
    std::vector<double> last_targets;               // target values at the last history year
    std::vector<std::vector<double>> future_macro;  // horizon x macro (only when use_macro)
};

namespace detail {

enum class BaseKind { GrowthModel, Identity };

inline ForecastResult roll(const RolloutInput& input, int horizon, const ModelState& m, BaseKind kind,
                           const GmCoupling* coupling) {
    m.config.check();
    if (horizon < 1) throw ConfigError("rollout: horizon must be >= 1");
    if (input.history.size() != static_cast<std::size_t>(m.config.encoder_len))
        throw ConfigError("rollout: history length must equal encoder_len");
    if (input.last_targets.size() != m.n_targets) throw ConfigError("rollout: last_targets size mismatch");
    if (m.config.use_macro && input.future_macro.size() < static_cast<std::size_t>(horizon))
        throw ConfigError("rollout: future macro rows required for every step");

    ForecastResult result;
    result.company_id = input.company_id;
    result.origin_year = input.origin_year;
    result.model = kind == BaseKind::GrowthModel ? "nn+gm" : "nn";
    result.indicators = m.config.targets;

    RecurrentState state(m.config.hidden_dim);
    const CellView enc = m.encoder();
    for (const auto& row : input.history) state = cell_step(row, state, enc);

    const CellView dec = m.decoder();
    std::vector<double> prev = input.last_targets;
    for (int k = 0; k < horizon; ++k) {
        std::vector<double> base;
        if (kind == BaseKind::GrowthModel) {
            try {
                base = gm_step_from_prediction(prev, m.config.targets, *coupling->registry, *coupling->params);
            } catch (const Error& e) {
                result.status = e.what();
                return result;
            }
        } else {
            base = prev;
        }
        std::vector<double> in = base;
        if (m.config.use_macro)
            in.insert(in.end(), input.future_macro[static_cast<std::size_t>(k)].begin(),
                      input.future_macro[static_cast<std::size_t>(k)].end());
        state = cell_step(in, state, dec);

        std::vector<double> pred(m.n_targets);
        for (std::size_t t = 0; t < m.n_targets; ++t) {
            double acc = m.readout_b()[t];
            for (std::size_t hh = 0; hh < m.config.hidden_dim; ++hh)
                acc += m.readout_w()[t * m.config.hidden_dim + hh] * state.h[hh];
            pred[t] = base[t] + acc;
        }
        result.predictions.push_back(pred);
        result.valid_steps = static_cast<std::size_t>(k) + 1;
        prev = std::move(pred);
    }
    return result;
}

} // namespace detail

/// Closed-loop hybrid forecast: at every step the growth model advances the
/// previous hybrid prediction, the decoder emits a residual, and the two are
/// added back.
inline ForecastResult hybrid_rollout(const RolloutInput& input, int horizon, const ModelState& m,
                                     const GrowthParams& params, const IndicatorRegistry& registry) {
    if (!m.config.hybrid) throw ConfigError("hybrid_rollout: model was trained in pure mode");
    GmCoupling coupling{&params, &registry};
    return detail::roll(input, horizon, m, detail::BaseKind::GrowthModel, &coupling);
}

/// Ablation without the growth-model channel: the decoder sees the previous
/// prediction and its residual output acts as a per-step growth increment
/// accumulated from the last observed value.
inline ForecastResult pure_nn_rollout(const RolloutInput& input, int horizon, const ModelState& m) {
    if (m.config.hybrid) throw ConfigError("pure_nn_rollout: model was trained in hybrid mode");
    return detail::roll(input, horizon, m, detail::BaseKind::Identity, nullptr);
}

/// Versioned text container: configuration, feature ordering, and every
/// parameter tensor as a flat array. Values round-trip bit-exactly.
inline void save_model(const ModelState& m, std::ostream& out, const std::string& data_hash = {}) {
    out << "firmcast-model v1\n";
    out << "mode = " << (m.config.hybrid ? "hybrid" : "pure") << "\n";
    out << "hidden_dim = " << m.config.hidden_dim << "\n";
    out << "encoder_len = " << m.config.encoder_len << "\n";
    out << "decoder_len = " << m.config.decoder_len << "\n";
    out << "use_macro = " << (m.config.use_macro ? 1 : 0) << "\n";
    out << "seed = " << m.config.seed << "\n";
    if (!data_hash.empty()) out << "data_hash = " << data_hash << "\n";
    auto join = [](const std::vector<std::string>& v) {
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
        return s;
    };
    out << "targets = " << join(m.config.targets) << "\n";
    out << "features = " << join(m.features) << "\n";
    out << "macros = " << join(m.macros) << "\n";
    out << "theta = " << m.theta.size() << "\n";
    for (std::size_t i = 0; i < m.theta.size(); ++i) out << format_double(m.theta[i]) << "\n";
}

inline void save_model(const ModelState& m, const std::filesystem::path& path, const std::string& data_hash = {}) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write model file: " + path.string());
    save_model(m, out, data_hash);
}

inline ModelState load_model(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || trim(line) != "firmcast-model v1")
        throw SchemaError("unrecognized model file header");
    ModelState m;
    std::size_t theta_count = 0;
    while (std::getline(in, line)) {
        const std::string_view sv = trim(line);
        const auto eq = sv.find('=');
        if (eq == std::string_view::npos) continue;
        const std::string key{trim(sv.substr(0, eq))};
        const std::string value{trim(sv.substr(eq + 1))};
        if (key == "mode") m.config.hybrid = value == "hybrid";
        else if (key == "hidden_dim") m.config.hidden_dim = static_cast<std::size_t>(parse_int(value).value_or(0));
        else if (key == "encoder_len") m.config.encoder_len = static_cast<int>(parse_int(value).value_or(0));
        else if (key == "decoder_len") m.config.decoder_len = static_cast<int>(parse_int(value).value_or(0));
        else if (key == "use_macro") m.config.use_macro = parse_int(value).value_or(0) != 0;
        else if (key == "seed") m.config.seed = static_cast<std::uint64_t>(parse_int(value).value_or(0));
        else if (key == "targets") m.config.targets = split(value, ',');
        else if (key == "features") m.features = value.empty() ? std::vector<std::string>{} : split(value, ',');
        else if (key == "macros") m.macros = value.empty() ? std::vector<std::string>{} : split(value, ',');
        else if (key == "theta") {
            theta_count = static_cast<std::size_t>(parse_int(value).value_or(0));
            break;
        }
    }
    m.compute_layout();
    if (theta_count != m.total_params()) throw SchemaError("model file parameter count does not match layout");
    m.theta.reserve(theta_count);
    for (std::size_t i = 0; i < theta_count; ++i) {
        if (!std::getline(in, line)) throw SchemaError("model file truncated");
        const auto v = parse_double(line);
        if (!v) throw SchemaError("unparseable parameter value in model file");
        m.theta.push_back(*v);
    }
    return m;
}

inline ModelState load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open model file: " + path.string());
    return load_model(in);
}

} // namespace firmcast
