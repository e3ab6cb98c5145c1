#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "firmcast/lstm.hpp"
#include "firmcast/rng.hpp"

using namespace firmcast;

namespace {

struct OwnedCell {
    std::size_t in, hid;
    std::vector<double> w, b;
    CellView view() const { return {in, hid, w.data(), b.data()}; }
};

OwnedCell random_cell(std::size_t in, std::size_t hid, Rng& rng, double scale = 0.5) {
    OwnedCell cell{in, hid, std::vector<double>(4 * hid * (in + hid)), std::vector<double>(4 * hid)};
    for (auto& v : cell.w) v = rng.uniform(-scale, scale);
    for (auto& v : cell.b) v = rng.uniform(-scale, scale);
    return cell;
}

/// Independent oracle: the same update written scalar by scalar from the
/// textbook equations, with no shared code.
RecurrentState naive_cell_step(const std::vector<double>& x, const RecurrentState& s, const OwnedCell& cell) {
    const std::size_t in = cell.in, hid = cell.hid;
    auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    auto affine = [&](std::size_t gate, std::size_t unit) {
        double acc = cell.b[gate * hid + unit];
        for (std::size_t k = 0; k < in; ++k) acc += cell.w[(gate * hid + unit) * (in + hid) + k] * x[k];
        for (std::size_t k = 0; k < hid; ++k) acc += cell.w[(gate * hid + unit) * (in + hid) + in + k] * s.h[k];
        return acc;
    };
    RecurrentState next(hid);
    for (std::size_t u = 0; u < hid; ++u) {
        const double i_gate = sig(affine(0, u));
        const double f_gate = sig(affine(1, u));
        const double g_cand = std::tanh(affine(2, u));
        const double o_gate = sig(affine(3, u));
        next.c[u] = f_gate * s.c[u] + i_gate * g_cand;
        next.h[u] = o_gate * std::tanh(next.c[u]);
    }
    return next;
}

} // namespace

TEST_CASE("all-zero weights and biases map any input to the zero state") {
    OwnedCell cell{3, 4, std::vector<double>(4 * 4 * 7, 0.0), std::vector<double>(16, 0.0)};
    const std::vector<double> x{1.0, -2.0, 0.5};
    const RecurrentState next = cell_step(x, RecurrentState(4), cell.view());
    for (double v : next.h) CHECK(v == 0.0);
    for (double v : next.c) CHECK(v == 0.0);
}

TEST_CASE("saturated forget gate with closed input gate passes the memory through") {
    const std::size_t hid = 3;
    OwnedCell cell{2, hid, std::vector<double>(4 * hid * (2 + hid), 0.0), std::vector<double>(4 * hid, 0.0)};
    for (std::size_t u = 0; u < hid; ++u) {
        cell.b[0 * hid + u] = -50.0;  // input gate -> 0
        cell.b[1 * hid + u] = +50.0;  // forget gate -> 1
    }
    RecurrentState state(hid);
    state.c = {0.3, -0.8, 1.7};
    const std::vector<double> x{0.4, -0.9};
    const RecurrentState next = cell_step(x, state, cell.view());
    for (std::size_t u = 0; u < hid; ++u) CHECK(next.c[u] == doctest::Approx(state.c[u]).epsilon(1e-6));
}

TEST_CASE("cell_step matches the independent scalar implementation") {
    Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t in = 1 + rng.uniform_index(5);
        const std::size_t hid = 1 + rng.uniform_index(6);
        const OwnedCell cell = random_cell(in, hid, rng);
        RecurrentState state(hid);
        for (auto& v : state.h) v = rng.normal(0.0, 1.0);
        for (auto& v : state.c) v = rng.normal(0.0, 1.0);
        std::vector<double> x(in);
        for (auto& v : x) v = rng.normal(0.0, 1.0);

        const RecurrentState got = cell_step(x, state, cell.view());
        const RecurrentState want = naive_cell_step(x, state, cell);
        for (std::size_t u = 0; u < hid; ++u) {
            CHECK(got.h[u] == doctest::Approx(want.h[u]).epsilon(1e-14));
            CHECK(got.c[u] == doctest::Approx(want.c[u]).epsilon(1e-14));
        }
    }
}

TEST_CASE("cell_backward matches central finite differences") {
    Rng rng(47);
    const std::size_t in = 3, hid = 4;
    OwnedCell cell = random_cell(in, hid, rng);
    RecurrentState state(hid);
    for (auto& v : state.h) v = rng.normal(0.0, 0.5);
    for (auto& v : state.c) v = rng.normal(0.0, 0.5);
    std::vector<double> x(in);
    for (auto& v : x) v = rng.normal(0.0, 1.0);

    // Scalar objective: L = sum(h' * u) + sum(c' * w) for fixed random u, w.
    std::vector<double> u(hid), wvec(hid);
    for (auto& v : u) v = rng.normal(0.0, 1.0);
    for (auto& v : wvec) v = rng.normal(0.0, 1.0);
    auto objective = [&](const OwnedCell& c, const std::vector<double>& xin, const RecurrentState& s) {
        const RecurrentState next = cell_step(xin, s, c.view());
        double loss = 0.0;
        for (std::size_t k = 0; k < hid; ++k) loss += next.h[k] * u[k] + next.c[k] * wvec[k];
        return loss;
    };

    CellCache cache;
    cell_step(x, state, cell.view(), &cache);
    std::vector<double> dw(cell.w.size(), 0.0), db(cell.b.size(), 0.0);
    std::vector<double> dx(in, 0.0), dh_prev(hid, 0.0), dc_prev(hid, 0.0);
    cell_backward(cache, cell.view(), u, wvec, dw.data(), db.data(), dx, dh_prev, dc_prev);

    const double eps = 1e-6;
    auto check_grad = [&](double analytic, double* slot) {
        const double saved = *slot;
        *slot = saved + eps;
        const double up = objective(cell, x, state);
        *slot = saved - eps;
        const double down = objective(cell, x, state);
        *slot = saved;
        const double numeric = (up - down) / (2.0 * eps);
        CHECK(analytic == doctest::Approx(numeric).epsilon(1e-5));
    };
    for (std::size_t k = 0; k < cell.w.size(); k += 7) check_grad(dw[k], &cell.w[k]);
    for (std::size_t k = 0; k < cell.b.size(); ++k) check_grad(db[k], &cell.b[k]);
    for (std::size_t k = 0; k < in; ++k) {
        const double saved = x[k];
        x[k] = saved + eps;
        const double up = objective(cell, x, state);
        x[k] = saved - eps;
        const double down = objective(cell, x, state);
        x[k] = saved;
        CHECK(dx[k] == doctest::Approx((up - down) / (2.0 * eps)).epsilon(1e-5));
    }
    for (std::size_t k = 0; k < hid; ++k) {
        const double saved = state.h[k];
        state.h[k] = saved + eps;
        const double up = objective(cell, x, state);
        state.h[k] = saved - eps;
        const double down = objective(cell, x, state);
        state.h[k] = saved;
        CHECK(dh_prev[k] == doctest::Approx((up - down) / (2.0 * eps)).epsilon(1e-5));
    }
    for (std::size_t k = 0; k < hid; ++k) {
        const double saved = state.c[k];
        state.c[k] = saved + eps;
        const double up = objective(cell, x, state);
        state.c[k] = saved - eps;
        const double down = objective(cell, x, state);
        state.c[k] = saved;
        CHECK(dc_prev[k] == doctest::Approx((up - down) / (2.0 * eps)).epsilon(1e-5));
    }
}

TEST_CASE("dimension mismatches are configuration errors") {
    Rng rng(2);
    const OwnedCell cell = random_cell(3, 4, rng);
    const std::vector<double> wrong{1.0, 2.0};
    CHECK_THROWS_AS(cell_step(wrong, RecurrentState(4), cell.view()), ConfigError);
    const std::vector<double> x{1.0, 2.0, 3.0};
    CHECK_THROWS_AS(cell_step(x, RecurrentState(2), cell.view()), ConfigError);
}
