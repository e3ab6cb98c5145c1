#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <sstream>

#include "firmcast/panel.hpp"
#include "firmcast/rng.hpp"

using namespace firmcast;

namespace {

IndicatorRegistry small_registry() {
    IndicatorRegistry r;
    r.add({"AT", true, false, Transform::Log});
    r.add({"LT", true, false, Transform::Log});
    r.add({"NI", true, false, Transform::LinLog});
    return r;
}

} // namespace

TEST_CASE("minimal well-formed input: one company, two years") {
    std::istringstream in("company_id,fiscal_year,sector,AT,LT,NI\n"
                          "C1,2001,tech,100,50,5\n"
                          "C1,2002,tech,110,52,6\n");
    const LoadResult r = load_panel(in, small_registry());
    CHECK(r.panel.companies.size() == 1);
    CHECK(r.panel.companies[0].records.size() == 2);
    CHECK(r.panel.companies[0].records[0].fiscal_year == 2001);
    CHECK(*r.panel.companies[0].records[1].values[0] == doctest::Approx(110.0));
    CHECK(r.warning_count == 0);
}

TEST_CASE("duplicate (company, fiscal_year) rows are an integrity error") {
    std::istringstream in("company_id,fiscal_year,sector,AT,LT,NI\n"
                          "C1,2001,tech,100,50,5\n"
                          "C1,2001,tech,101,51,6\n");
    CHECK_THROWS_AS(load_panel(in, small_registry()), IntegrityError);
}

TEST_CASE("unparseable numeric cell becomes absent with one warning") {
    std::istringstream in("company_id,fiscal_year,sector,AT,LT,NI\n"
                          "C1,2001,tech,n/a,50,5\n"
                          "C1,2002,tech,110,52,6\n");
    const LoadResult r = load_panel(in, small_registry());
    CHECK(r.warning_count == 1);
    CHECK_FALSE(r.panel.companies[0].records[0].values[0].has_value());
    CHECK(r.panel.companies[0].records[0].values[1].has_value());
}

TEST_CASE("missing mandatory column is a schema error") {
    std::istringstream in("company_id,sector,AT\nC1,tech,100\n");
    CHECK_THROWS_AS(load_panel(in, small_registry()), SchemaError);
}

TEST_CASE("tab-delimited input is accepted") {
    std::istringstream in("company_id\tfiscal_year\tsector\tAT\tLT\tNI\n"
                          "C1\t2001\ttech\t100\t50\t5\n");
    const LoadResult r = load_panel(in, small_registry());
    CHECK(r.panel.companies.size() == 1);
    CHECK(*r.panel.companies[0].records[0].values[1] == doctest::Approx(50.0));
}

TEST_CASE("registered indicator without a column is absent everywhere") {
    std::istringstream in("company_id,fiscal_year,sector,AT\nC1,2001,tech,100\n");
    const LoadResult r = load_panel(in, small_registry());
    CHECK_FALSE(r.panel.companies[0].records[0].values[1].has_value());
    CHECK(r.warning_count == 0);
}

TEST_CASE("save then load round-trips finite values exactly") {
    CompanyPanel panel;
    panel.registry = small_registry();
    Rng rng(42);
    for (int c = 0; c < 5; ++c) {
        Company company;
        company.id = "C" + std::to_string(c);
        for (int y = 0; y < 8; ++y) {
            CompanyRecord rec(panel.registry.size());
            rec.fiscal_year = 2000 + y;
            rec.sector = c % 2 ? "tech" : "retail";
            for (std::size_t i = 0; i < panel.registry.size(); ++i) {
                if (rng.next_double() < 0.2) continue;  // leave absent
                rec.values[i] = rng.normal(0.0, 1.0) * std::pow(10.0, rng.uniform(-3, 6));
            }
            company.records.push_back(std::move(rec));
        }
        panel.companies.push_back(std::move(company));
    }

    std::ostringstream buffer;
    save_panel(panel, buffer);
    std::istringstream back(buffer.str());
    const LoadResult r = load_panel(back, panel.registry);

    REQUIRE(r.panel.companies.size() == panel.companies.size());
    for (std::size_t c = 0; c < panel.companies.size(); ++c)
        for (std::size_t k = 0; k < panel.companies[c].records.size(); ++k)
            for (std::size_t i = 0; i < panel.registry.size(); ++i) {
                const auto& a = panel.companies[c].records[k].values[i];
                const auto& b = r.panel.companies[c].records[k].values[i];
                CHECK(a.has_value() == b.has_value());
                if (a) CHECK(*a == *b);  // bit-exact via %.17g
            }
}

TEST_CASE("validate_panel on loader output reports zero structural violations") {
    std::istringstream in("company_id,fiscal_year,sector,AT,LT,NI\n"
                          "C2,2003,retail,7,3,1\n"
                          "C1,2001,tech,100,50,5\n"
                          "C1,2002,tech,110,52,-6\n");
    const LoadResult r = load_panel(in, small_registry());
    CHECK(validate_panel(r.panel).empty());
}

TEST_CASE("validate_panel reports non-finite values") {
    CompanyPanel panel;
    panel.registry = small_registry();
    Company company;
    company.id = "C1";
    CompanyRecord rec(panel.registry.size());
    rec.fiscal_year = 2001;
    rec.values[0] = std::numeric_limits<double>::infinity();
    company.records.push_back(rec);
    panel.companies.push_back(company);

    const auto report = validate_panel(panel);
    REQUIRE(report.size() == 1);
    CHECK(report[0].indicator == "AT");
    CHECK(report[0].message == "non-finite value");
}

TEST_CASE("validate_panel reports duplicate years") {
    CompanyPanel panel;
    panel.registry = small_registry();
    Company company;
    company.id = "C1";
    for (int k = 0; k < 2; ++k) {
        CompanyRecord rec(panel.registry.size());
        rec.fiscal_year = 2001;
        company.records.push_back(rec);
    }
    panel.companies.push_back(company);

    const auto report = validate_panel(panel);
    REQUIRE(report.size() == 1);
    CHECK(report[0].message == "duplicate fiscal year");
}

TEST_CASE("well-formed panel validates clean") {
    CompanyPanel panel;
    panel.registry = small_registry();
    Company company;
    company.id = "C1";
    for (int y = 0; y < 3; ++y) {
        CompanyRecord rec(panel.registry.size());
        rec.fiscal_year = 2000 + y;
        rec.values[0] = 10.0 * (y + 1);
        company.records.push_back(rec);
    }
    panel.companies.push_back(company);
    CHECK(validate_panel(panel).empty());
}

TEST_CASE("duplicate indicator codes are rejected by the registry") {
    IndicatorRegistry r;
    r.add({"AT", true, false, Transform::Log});
    CHECK_THROWS_AS(r.add({"AT", true, false, Transform::Log}), IntegrityError);
}
