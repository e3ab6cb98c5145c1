#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <optional>
#include <vector>

#include "firmcast/preprocess.hpp"
#include "firmcast/rng.hpp"

using namespace firmcast;

namespace {

IndicatorRegistry registry3() {
    IndicatorRegistry r;
    r.add({"AT", true, false, Transform::Log});
    r.add({"LT", true, false, Transform::Log});
    r.add({"NI", true, false, Transform::LinLog});
    return r;
}

CompanyPanel panel_of(const std::vector<std::vector<std::optional<double>>>& rows_per_company,
                      IndicatorRegistry reg, int first_year = 2000) {
    // Each inner vector is one company's cells, year-major, registry order.
    CompanyPanel panel;
    panel.registry = std::move(reg);
    int c = 0;
    for (const auto& company_rows : rows_per_company) {
        Company company;
        company.id = "C" + std::to_string(++c);
        int year = first_year;
        const std::size_t n = panel.registry.size();
        for (std::size_t r = 0; r < company_rows.size() / n; ++r) {
            CompanyRecord rec(n);
            rec.fiscal_year = year++;
            for (std::size_t i = 0; i < n; ++i) rec.values[i] = company_rows[r * n + i];
            company.records.push_back(std::move(rec));
        }
        panel.companies.push_back(std::move(company));
    }
    return panel;
}

} // namespace

TEST_CASE("select_features drops a 50%-missing indicator at cutoff 0.40") {
    // 2 companies x 2 years; LT absent in 2 of 4 cells.
    const std::optional<double> none;
    auto panel = panel_of({{1.0, none, 2.0, 1.0, 5.0, 2.0}, {1.0, none, 2.0, 1.0, 5.0, 2.0}}, registry3());
    const auto result = select_features(panel, {});
    REQUIRE(result.dropped.size() == 1);
    CHECK(result.dropped[0] == "LT");
    CHECK_FALSE(result.panel.registry.index_of("LT").has_value());
    CHECK(result.panel.companies[0].records[0].values.size() == 2);
}

TEST_CASE("select_features keeps an indicator missing exactly 40% (strict inequality)") {
    // 5 records, LT absent in exactly 2 -> fraction 0.40, not greater than cutoff.
    const std::optional<double> none;
    auto panel = panel_of({{1.0, none, 2.0,
                            1.0, none, 2.0,
                            1.0, 5.0, 2.0,
                            1.0, 5.0, 2.0,
                            1.0, 5.0, 2.0}},
                          registry3());
    const auto result = select_features(panel, {});
    CHECK(result.dropped.empty());
    CHECK(result.panel.registry.index_of("LT").has_value());
}

TEST_CASE("select_features hand-counted fixture: X dropped, Y kept") {
    // 10 records; X absent in 5 (0.5 > 0.4), Y absent in 3 (0.3 <= 0.4).
    IndicatorRegistry reg;
    reg.add({"X", true, false, Transform::Log});
    reg.add({"Y", true, false, Transform::Log});
    std::vector<std::optional<double>> rows;
    for (int r = 0; r < 10; ++r) {
        rows.push_back(r < 5 ? std::optional<double>{} : std::optional<double>{1.0});
        rows.push_back(r < 3 ? std::optional<double>{} : std::optional<double>{2.0});
    }
    auto panel = panel_of({rows}, reg);
    const auto result = select_features(panel, {});
    REQUIRE(result.dropped.size() == 1);
    CHECK(result.dropped[0] == "X");
    CHECK(result.panel.registry.index_of("Y").has_value());
}

TEST_CASE("select_features with every indicator above the cutoff is an error") {
    const std::optional<double> none;
    auto panel = panel_of({{none, none, none, none, none, none}}, registry3());
    CHECK_THROWS_AS(select_features(panel, {}), DataError);
}

TEST_CASE("filter_short_series removes companies under the minimum length") {
    auto one = panel_of({{1.0, 1.0, 1.0}}, registry3());         // 1 record
    auto three = panel_of({{1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 3.0, 3.0, 3.0}}, registry3());  // 3 records
    CHECK(filter_short_series(one, {}).companies.empty());
    CHECK(filter_short_series(three, {}).companies.size() == 1);

    // {A: 2 years, B: 5 years} with min 3 -> only B remains.
    std::vector<std::optional<double>> a(2 * 3, 1.0), b(5 * 3, 1.0);
    auto both = panel_of({a, b}, registry3());
    const auto filtered = filter_short_series(both, {});
    REQUIRE(filtered.companies.size() == 1);
    CHECK(filtered.companies[0].id == "C2");
}

TEST_CASE("drop_anomalies deletes records with nonpositive anomaly indicators only") {
    // LT = 0 -> record deleted.
    auto panel = panel_of({{5.0, 0.0, 1.0}}, registry3());
    auto result = drop_anomalies(panel, {});
    CHECK(result.deleted_records == 1);
    CHECK(result.panel.companies.empty());

    // NI = -5 is outside the anomaly set -> kept.
    auto ok = panel_of({{5.0, 2.0, -5.0}}, registry3());
    result = drop_anomalies(ok, {});
    CHECK(result.deleted_records == 0);
    REQUIRE(result.panel.companies.size() == 1);

    // Years {2000 (LT=3), 2001 (LT=-1), 2002 (LT=2)} -> 2000 and 2002 remain.
    auto path = panel_of({{5.0, 3.0, 1.0, 5.0, -1.0, 1.0, 5.0, 2.0, 1.0}}, registry3());
    result = drop_anomalies(path, {});
    CHECK(result.deleted_records == 1);
    REQUIRE(result.panel.companies.size() == 1);
    REQUIRE(result.panel.companies[0].records.size() == 2);
    CHECK(result.panel.companies[0].records[0].fiscal_year == 2000);
    CHECK(result.panel.companies[0].records[1].fiscal_year == 2002);
}

TEST_CASE("impute_missing fills interior gaps with the nearest-neighbor mean") {
    IndicatorRegistry reg;
    reg.add({"X", true, false, Transform::Log});
    const std::optional<double> none;

    auto check_series = [&](std::vector<std::optional<double>> in, std::vector<double> expected) {
        auto panel = panel_of({in}, reg);
        const auto result = impute_missing(panel);
        const auto& records = result.panel.companies[0].records;
        REQUIRE(records.size() == expected.size());
        for (std::size_t i = 0; i < expected.size(); ++i) {
            REQUIRE(records[i].values[0].has_value());
            CHECK(*records[i].values[0] == doctest::Approx(expected[i]));
        }
    };
    check_series({1.0, none, 3.0}, {1.0, 2.0, 3.0});
    check_series({none, 4.0, 5.0}, {4.0, 4.0, 5.0});
    check_series({2.0, none, none, 6.0}, {2.0, 4.0, 4.0, 6.0});
}

TEST_CASE("impute_missing flags filled cells and counts them") {
    IndicatorRegistry reg;
    reg.add({"X", true, false, Transform::Log});
    const std::optional<double> none;
    auto panel = panel_of({{1.0, none, 3.0}}, reg);
    const auto result = impute_missing(panel);
    CHECK(result.imputed_cells == 1);
    CHECK(result.panel.companies[0].records[1].flags[0] == ValueFlag::Imputed);
    CHECK(result.panel.companies[0].records[0].flags[0] == ValueFlag::Observed);
}

TEST_CASE("impute_missing properties: present values untouched, all-absent stays absent") {
    IndicatorRegistry reg;
    reg.add({"X", true, false, Transform::Log});
    reg.add({"Y", true, false, Transform::Log});
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 3 + rng.uniform_index(8);
        std::vector<std::optional<double>> rows;
        std::vector<std::optional<double>> x_series;
        for (std::size_t r = 0; r < n; ++r) {
            std::optional<double> x;
            if (rng.next_double() < 0.6) x = rng.normal(0.0, 3.0);
            x_series.push_back(x);
            rows.push_back(x);
            rows.push_back(std::nullopt);  // Y absent for the whole company
        }
        auto panel = panel_of({rows}, reg);
        const auto result = impute_missing(panel);
        const auto& records = result.panel.companies[0].records;
        bool any_present = false;
        for (std::size_t r = 0; r < n; ++r) {
            if (x_series[r]) {
                any_present = true;
                CHECK(*records[r].values[0] == *x_series[r]);
            }
            CHECK_FALSE(records[r].values[1].has_value());
        }
        if (any_present)
            for (std::size_t r = 0; r < n; ++r) CHECK(records[r].values[0].has_value());
    }
}

TEST_CASE("adjust_inflation: zero rates are the identity") {
    auto panel = panel_of({{100.0, 50.0, 5.0, 200.0, 60.0, 6.0}}, registry3(), 2018);
    PreprocessConfig cfg;
    cfg.base_year = 2019;
    for (int y = 2000; y <= 2020; ++y) cfg.cpi_series[y] = 0.0;
    const auto adjusted = adjust_inflation(panel, cfg);
    CHECK(*adjusted.companies[0].records[0].values[0] == doctest::Approx(100.0).epsilon(1e-15));
    CHECK(*adjusted.companies[0].records[1].values[0] == doctest::Approx(200.0).epsilon(1e-15));
}

TEST_CASE("adjust_inflation: 2% rate for 2019 lifts a 2018 value of 100 to 102") {
    auto panel = panel_of({{100.0, 50.0, 5.0, 200.0, 60.0, 6.0}}, registry3(), 2018);
    PreprocessConfig cfg;
    cfg.base_year = 2019;
    cfg.cpi_series[2019] = 2.0;
    const auto adjusted = adjust_inflation(panel, cfg);
    CHECK(*adjusted.companies[0].records[0].values[0] == doctest::Approx(102.0).epsilon(1e-12));
    // The base-year record itself is unchanged.
    CHECK(*adjusted.companies[0].records[1].values[0] == doctest::Approx(200.0).epsilon(1e-15));
}

TEST_CASE("adjust_inflation leaves non-monetary indicators untouched") {
    IndicatorRegistry reg;
    reg.add({"AT", true, false, Transform::Log});
    reg.add({"EMP", false, false, Transform::LinLog});
    auto panel = panel_of({{100.0, 7.0}}, reg, 2018);
    PreprocessConfig cfg;
    cfg.base_year = 2019;
    cfg.cpi_series[2019] = 10.0;
    const auto adjusted = adjust_inflation(panel, cfg);
    CHECK(*adjusted.companies[0].records[0].values[0] == doctest::Approx(110.0));
    CHECK(*adjusted.companies[0].records[0].values[1] == doctest::Approx(7.0).epsilon(1e-15));
}

TEST_CASE("adjust_inflation without coverage is an error") {
    auto panel = panel_of({{100.0, 50.0, 5.0}}, registry3(), 2015);
    PreprocessConfig cfg;
    cfg.base_year = 2019;
    cfg.cpi_series[2019] = 2.0;  // 2016..2018 missing
    CHECK_THROWS_AS(adjust_inflation(panel, cfg), CoverageError);
}

TEST_CASE("linlog fixed points and symmetry") {
    CHECK(linlog(0.0) == 0.0);
    CHECK(linlog(std::exp(1.0) - 1.0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(linlog(-(std::exp(1.0) - 1.0)) == doctest::Approx(-1.0).epsilon(1e-15));
}

TEST_CASE("linlog is odd, strictly increasing, and inverts to 1e-12 relative") {
    Rng rng(3);
    for (int i = 0; i < 2000; ++i) {
        const double x = rng.uniform(-1.0, 1.0) * std::pow(10.0, rng.uniform(-6.0, 9.0));
        CHECK(linlog(-x) == doctest::Approx(-linlog(x)).epsilon(1e-15));
        const double round_trip = linlog_inverse(linlog(x));
        CHECK(round_trip == doctest::Approx(x).epsilon(1e-12));
    }
    double prev_z = linlog(-5.25);
    for (double x = -5.0; x <= 5.0; x += 0.25) {
        CHECK(linlog(x) > prev_z);
        prev_z = linlog(x);
    }
}

TEST_CASE("transform_panel: log for strictly positive, linlog for sign-indefinite") {
    auto panel = panel_of({{std::exp(2.0), 1.0, -(std::exp(1.0) - 1.0)}}, registry3());
    const auto transformed = transform_panel(panel);
    CHECK(*transformed.companies[0].records[0].values[0] == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(*transformed.companies[0].records[0].values[2] == doctest::Approx(-1.0).epsilon(1e-15));
    CHECK(transformed.meta.transformed);
}

TEST_CASE("transform_panel: nonpositive value under a log indicator is an anomaly leak") {
    auto panel = panel_of({{5.0, 0.0, 1.0}}, registry3());
    CHECK_THROWS_AS(transform_panel(panel), DomainError);
}

TEST_CASE("transform_panel refuses double application") {
    auto panel = panel_of({{5.0, 2.0, 1.0}}, registry3());
    auto once = transform_panel(panel);
    CHECK_THROWS_AS(transform_panel(once), DataError);
}

TEST_CASE("pipeline: steps 1-5 are a no-op on pipeline output") {
    // A messy panel: a missing cell, an anomaly year, inflation to adjust.
    const std::optional<double> none;
    auto panel = panel_of({{100.0, 40.0, 5.0,
                            110.0, none, 6.0,
                            120.0, 44.0, -2.0,
                            130.0, 46.0, 7.0},
                           {200.0, 80.0, 10.0,
                            210.0, 0.0, 11.0,
                            220.0, 88.0, 12.0,
                            230.0, 92.0, 13.0}},
                          registry3(), 2000);
    PreprocessConfig cfg;
    cfg.base_year = 2003;
    for (int y = 1999; y <= 2005; ++y) cfg.cpi_series[y] = 1.5;

    const auto result = run_pipeline(panel, cfg);
    CHECK(result.report.dropped_records == 1);   // the LT = 0 year
    CHECK(result.report.imputed_cells == 1);     // the absent LT cell

    auto again = select_features(result.panel, cfg);
    CHECK(again.dropped.empty());
    auto filtered = filter_short_series(again.panel, cfg);
    CHECK(filtered.companies.size() == result.panel.companies.size());
    auto dropped = drop_anomalies(filtered, cfg);
    CHECK(dropped.deleted_records == 0);
    auto imputed = impute_missing(dropped.panel);
    CHECK(imputed.imputed_cells == 0);
    auto adjusted = adjust_inflation(imputed.panel, cfg);

    REQUIRE(adjusted.companies.size() == result.panel.companies.size());
    for (std::size_t c = 0; c < adjusted.companies.size(); ++c) {
        const auto& a = adjusted.companies[c];
        const auto& b = result.panel.companies[c];
        REQUIRE(a.records.size() == b.records.size());
        for (std::size_t r = 0; r < a.records.size(); ++r)
            for (std::size_t i = 0; i < adjusted.registry.size(); ++i) {
                REQUIRE(a.records[r].values[i].has_value() == b.records[r].values[i].has_value());
                if (a.records[r].values[i]) CHECK(*a.records[r].values[i] == *b.records[r].values[i]);
            }
    }
    CHECK_THROWS_AS(transform_panel(adjusted), DataError);
}
