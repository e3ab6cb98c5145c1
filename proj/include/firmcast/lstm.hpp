#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "firmcast/error.hpp"

namespace firmcast {

/// Hidden activation and cell memory carried between recurrent steps.
struct RecurrentState {
    std::vector<double> h;
    std::vector<double> c;

    RecurrentState() = default;
    explicit RecurrentState(std::size_t hidden_dim) : h(hidden_dim, 0.0), c(hidden_dim, 0.0) {}
};

/// Non-owning view of one cell's parameters inside a flat parameter vector.
/// Gate rows are packed input, forget, candidate, output; each gate maps the
/// concatenated [x; h] of size input_dim + hidden_dim to hidden_dim.
struct CellView {
    std::size_t input_dim = 0;
    std::size_t hidden_dim = 0;
    const double* w = nullptr;  // [4*hidden_dim][input_dim + hidden_dim], row-major
    const double* b = nullptr;  // [4*hidden_dim]

    std::size_t weight_count() const { return 4 * hidden_dim * (input_dim + hidden_dim); }
    std::size_t bias_count() const { return 4 * hidden_dim; }
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Saved activations of one cell step, enough to run the backward pass.
struct CellCache {
    std::vector<double> x, h_prev, c_prev;
    std::vector<double> i, f, g, o, c_new, tanh_c;
};

/// Standard gated recurrent update:
///   i,f,o = sigmoid(W [x;h] + b),  g = tanh(W [x;h] + b)
///   c' = f*c + i*g,  h' = o*tanh(c')
inline RecurrentState cell_step(std::span<const double> x, const RecurrentState& state, const CellView& p,
                                CellCache* cache = nullptr) {
    const std::size_t in = p.input_dim, hid = p.hidden_dim;
    if (x.size() != in || state.h.size() != hid || state.c.size() != hid)
        throw ConfigError("cell_step: dimension mismatch");

    const std::size_t z_dim = in + hid;
    std::vector<double> a(4 * hid);
    for (std::size_t r = 0; r < 4 * hid; ++r) {
        const double* row = p.w + r * z_dim;
        double acc = p.b[r];
        for (std::size_t k = 0; k < in; ++k) acc += row[k] * x[k];
        for (std::size_t k = 0; k < hid; ++k) acc += row[in + k] * state.h[k];
        a[r] = acc;
    }

    RecurrentState next(hid);
    std::vector<double> gi(hid), gf(hid), gg(hid), go(hid), tc(hid);
    for (std::size_t k = 0; k < hid; ++k) {
        gi[k] = sigmoid(a[k]);
        gf[k] = sigmoid(a[hid + k]);
        gg[k] = std::tanh(a[2 * hid + k]);
        go[k] = sigmoid(a[3 * hid + k]);
        next.c[k] = gf[k] * state.c[k] + gi[k] * gg[k];
        tc[k] = std::tanh(next.c[k]);
        next.h[k] = go[k] * tc[k];
        if (!std::isfinite(next.h[k]) || !std::isfinite(next.c[k]))
            throw NumericError("cell_step: non-finite activation");
    }

    if (cache) {
        cache->x.assign(x.begin(), x.end());
        cache->h_prev = state.h;
        cache->c_prev = state.c;
        cache->i = std::move(gi);
        cache->f = std::move(gf);
        cache->g = std::move(gg);
        cache->o = std::move(go);
        cache->c_new = next.c;
        cache->tanh_c = std::move(tc);
    }
    return next;
}

/// Reverse-mode step: accumulates parameter gradients into (dw, db) and
/// returns the gradients flowing to the inputs and the previous state.
/// dh/dc are the loss gradients w.r.t. this step's outputs h' and c'.
inline void cell_backward(const CellCache& cache, const CellView& p, std::span<const double> dh,
                          std::span<const double> dc_in, double* dw, double* db, std::span<double> dx,
                          std::span<double> dh_prev, std::span<double> dc_prev) {
    const std::size_t in = p.input_dim, hid = p.hidden_dim;
    const std::size_t z_dim = in + hid;

    std::vector<double> da(4 * hid);
    for (std::size_t k = 0; k < hid; ++k) {
        const double tc = cache.tanh_c[k];
        const double do_ = dh[k] * tc;
        const double dc = dc_in[k] + dh[k] * cache.o[k] * (1.0 - tc * tc);
        const double di = dc * cache.g[k];
        const double df = dc * cache.c_prev[k];
        const double dg = dc * cache.i[k];
        dc_prev[k] = dc * cache.f[k];
        da[k] = di * cache.i[k] * (1.0 - cache.i[k]);
        da[hid + k] = df * cache.f[k] * (1.0 - cache.f[k]);
        da[2 * hid + k] = dg * (1.0 - cache.g[k] * cache.g[k]);
        da[3 * hid + k] = do_ * cache.o[k] * (1.0 - cache.o[k]);
    }

    for (std::size_t k = 0; k < in; ++k) dx[k] = 0.0;
    for (std::size_t k = 0; k < hid; ++k) dh_prev[k] = 0.0;
    for (std::size_t r = 0; r < 4 * hid; ++r) {
        const double d = da[r];
        db[r] += d;
        double* wrow = dw + r * z_dim;
        const double* row = p.w + r * z_dim;
        for (std::size_t k = 0; k < in; ++k) {
            wrow[k] += d * cache.x[k];
            dx[k] += row[k] * d;
        }
        for (std::size_t k = 0; k < hid; ++k) {
            wrow[in + k] += d * cache.h_prev[k];
            dh_prev[k] += row[in + k] * d;
        }
    }
}

} // namespace firmcast
