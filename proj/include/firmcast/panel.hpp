#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "firmcast/error.hpp"
#include "firmcast/util.hpp"

namespace firmcast {

/// How an indicator is rescaled when the panel is moved into model space.
/// Log is for strictly positive monetary series; LinLog handles series that
/// may be negative, zero, or occasionally equal to one.
enum class Transform { Log, LinLog, None };

struct IndicatorInfo {
    std::string code;
    bool monetary = true;  // inflation-adjusted when true
    bool macro = false;    // economy-wide series rather than a company account
    Transform transform = Transform::LinLog;
};

/// Ordered list of registered indicators. Codes are unique; company-level
/// (financial) and economy-level (macro) codes live in one index space.
class IndicatorRegistry {
public:
    IndicatorRegistry() = default;

    explicit IndicatorRegistry(std::vector<IndicatorInfo> indicators) {
        for (auto& info : indicators) add(std::move(info));
    }

    void add(IndicatorInfo info) {
        if (index_.count(info.code)) throw IntegrityError("duplicate indicator code: " + info.code);
        index_[info.code] = indicators_.size();
        indicators_.push_back(std::move(info));
    }

    void remove(std::size_t idx) {
        indicators_.erase(indicators_.begin() + static_cast<std::ptrdiff_t>(idx));
        index_.clear();
        for (std::size_t i = 0; i < indicators_.size(); ++i) index_[indicators_[i].code] = i;
    }

    std::size_t size() const { return indicators_.size(); }
    const IndicatorInfo& at(std::size_t i) const { return indicators_[i]; }
    const std::vector<IndicatorInfo>& all() const { return indicators_; }

    std::optional<std::size_t> index_of(std::string_view code) const {
        auto it = index_.find(std::string(code));
        return it == index_.end() ? std::nullopt : std::optional<std::size_t>(it->second);
    }

    std::size_t require(std::string_view code) const {
        auto idx = index_of(code);
        if (!idx) throw DataError("indicator not registered: " + std::string(code));
        return *idx;
    }

    std::vector<std::string> financial_codes() const {
        std::vector<std::string> out;
        for (const auto& info : indicators_)
            if (!info.macro) out.push_back(info.code);
        return out;
    }

    std::vector<std::string> macro_codes() const {
        std::vector<std::string> out;
        for (const auto& info : indicators_)
            if (info.macro) out.push_back(info.code);
        return out;
    }

    /// Annual financial-statement codes used by default. AT, LT, REVT, COGS
    /// are strictly positive after anomaly filtering and take a plain log;
    /// the other accounts can be negative or zero and use the linear-log map.
    static IndicatorRegistry default_financial() {
        IndicatorRegistry r;
        r.add({"EMP", false, false, Transform::LinLog});
        r.add({"AT", true, false, Transform::Log});
        r.add({"ACO", true, false, Transform::LinLog});
        r.add({"LT", true, false, Transform::Log});
        r.add({"DLTT", true, false, Transform::LinLog});
        r.add({"DD1", true, false, Transform::LinLog});
        r.add({"CSTK", true, false, Transform::LinLog});
        r.add({"CEQ", true, false, Transform::LinLog});
        r.add({"REVT", true, false, Transform::Log});
        r.add({"NI", true, false, Transform::LinLog});
        r.add({"XSGA", true, false, Transform::LinLog});
        r.add({"RE", true, false, Transform::LinLog});
        r.add({"EBITDA", true, false, Transform::LinLog});
        r.add({"COGS", true, false, Transform::Log});
        r.add({"TXT", true, false, Transform::LinLog});
        r.add({"XINT", true, false, Transform::LinLog});
        r.add({"CH", true, false, Transform::LinLog});
        return r;
    }

    /// Financial codes plus the default macroeconomic series.
    static IndicatorRegistry default_full() {
        IndicatorRegistry r = default_financial();
        r.add({"GDP", true, true, Transform::Log});
        r.add({"MEXP", true, true, Transform::Log});
        r.add({"MIMP", true, true, Transform::Log});
        r.add({"STVT", true, true, Transform::Log});
        r.add({"ICP", false, true, Transform::LinLog});
        r.add({"GDPG", false, true, Transform::LinLog});
        r.add({"GDPPCG", false, true, Transform::LinLog});
        r.add({"DIR", false, true, Transform::LinLog});
        r.add({"LIR", false, true, Transform::LinLog});
        r.add({"BMG", false, true, Transform::LinLog});
        r.add({"STTR", false, true, Transform::LinLog});
        r.add({"EXGS", false, true, Transform::LinLog});
        return r;
    }

private:
    std::vector<IndicatorInfo> indicators_;
    std::map<std::string, std::size_t, std::less<>> index_;
};

enum class ValueFlag : std::uint8_t { Observed, Imputed, Transformed };

/// One fiscal year of one company. `values` and `flags` are aligned with the
/// owning panel's registry, so a record can only carry registered indicators.
struct CompanyRecord {
    int fiscal_year = 0;
    std::string sector;
    std::vector<std::optional<double>> values;
    std::vector<ValueFlag> flags;

    explicit CompanyRecord(std::size_t n_indicators = 0)
        : values(n_indicators), flags(n_indicators, ValueFlag::Observed) {}
};

struct Company {
    std::string id;
    std::vector<CompanyRecord> records;  // strictly increasing fiscal years

    const std::string& sector() const {
        static const std::string empty;
        return records.empty() ? empty : records.front().sector;
    }
};

struct PanelMeta {
    int base_year = 2019;
    bool inflation_adjusted = false;
    bool transformed = false;
};

struct CompanyPanel {
    IndicatorRegistry registry;
    std::vector<Company> companies;  // sorted by id
    PanelMeta meta;

    std::size_t record_count() const {
        std::size_t n = 0;
        for (const auto& c : companies) n += c.records.size();
        return n;
    }

    const Company* find(std::string_view id) const {
        auto it = std::lower_bound(companies.begin(), companies.end(), id,
                                   [](const Company& c, std::string_view v) { return c.id < v; });
        if (it == companies.end() || it->id != id) return nullptr;
        return &*it;
    }
};

struct LoadResult {
    CompanyPanel panel;
    std::size_t warning_count = 0;
    std::vector<std::string> warnings;  // first few, for the processing report
};

namespace detail {

inline char sniff_delimiter(const std::string& header) {
    return header.find('\t') != std::string::npos ? '\t' : ',';
}

} // namespace detail

/// Reads a delimiter-separated panel (comma default, tab accepted). Mandatory
/// columns: company_id, fiscal_year, sector. Each registered indicator maps to
/// the column of the same name; registered indicators without a column are
/// absent everywhere. Unparseable numeric cells become absent values and are
/// counted as warnings.
inline LoadResult load_panel(std::istream& in, const IndicatorRegistry& registry) {
    LoadResult result;
    result.panel.registry = registry;

    std::string header;
    if (!std::getline(in, header)) throw SchemaError("empty input: no header line");
    const char delim = detail::sniff_delimiter(header);
    std::vector<std::string> cols = split(std::string(trim(header)), delim);
    for (auto& c : cols) c = std::string(trim(c));

    auto col_of = [&](std::string_view name) -> std::optional<std::size_t> {
        for (std::size_t i = 0; i < cols.size(); ++i)
            if (cols[i] == name) return i;
        return std::nullopt;
    };
    const auto id_col = col_of("company_id");
    const auto year_col = col_of("fiscal_year");
    const auto sector_col = col_of("sector");
    if (!id_col || !year_col || !sector_col)
        throw SchemaError("missing mandatory column (need company_id, fiscal_year, sector)");

    std::vector<std::optional<std::size_t>> indicator_col(registry.size());
    for (std::size_t i = 0; i < registry.size(); ++i) indicator_col[i] = col_of(registry.at(i).code);

    std::map<std::string, Company> companies;
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        std::vector<std::string> cells = split(line, delim);
        if (cells.size() < cols.size()) cells.resize(cols.size());

        CompanyRecord rec(registry.size());
        const std::string id = std::string(trim(cells[*id_col]));
        if (id.empty()) throw SchemaError("empty company_id at line " + std::to_string(line_no));
        const auto year = parse_int(cells[*year_col]);
        if (!year) throw SchemaError("unparseable fiscal_year at line " + std::to_string(line_no));
        rec.fiscal_year = static_cast<int>(*year);
        rec.sector = std::string(trim(cells[*sector_col]));

        for (std::size_t i = 0; i < registry.size(); ++i) {
            if (!indicator_col[i]) continue;
            const std::string_view cell = trim(cells[*indicator_col[i]]);
            if (cell.empty()) continue;
            if (auto v = parse_double(cell)) {
                rec.values[i] = *v;
            } else {
                ++result.warning_count;
                if (result.warnings.size() < 20)
                    result.warnings.push_back("line " + std::to_string(line_no) + ": unparseable " +
                                              registry.at(i).code + " cell '" + std::string(cell) + "'");
            }
        }
        companies[id].records.push_back(std::move(rec));
        companies[id].id = id;
    }

    for (auto& [id, company] : companies) {
        std::sort(company.records.begin(), company.records.end(),
                  [](const CompanyRecord& a, const CompanyRecord& b) { return a.fiscal_year < b.fiscal_year; });
        for (std::size_t i = 1; i < company.records.size(); ++i)
            if (company.records[i].fiscal_year == company.records[i - 1].fiscal_year)
                throw IntegrityError("duplicate (company_id, fiscal_year): (" + id + ", " +
                                     std::to_string(company.records[i].fiscal_year) + ")");
        result.panel.companies.push_back(std::move(company));
    }
    return result;
}

inline LoadResult load_panel(const std::filesystem::path& path, const IndicatorRegistry& registry) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open panel file: " + path.string());
    return load_panel(in, registry);
}

/// Writes the same delimiter-separated shape load_panel reads. Values are
/// printed losslessly, so save followed by load reproduces finite values.
inline void save_panel(const CompanyPanel& panel, std::ostream& out, char delim = ',') {
    out << "company_id" << delim << "fiscal_year" << delim << "sector";
    for (const auto& info : panel.registry.all()) out << delim << info.code;
    out << "\n";
    for (const auto& company : panel.companies) {
        for (const auto& rec : company.records) {
            out << company.id << delim << rec.fiscal_year << delim << rec.sector;
            for (std::size_t i = 0; i < panel.registry.size(); ++i) {
                out << delim;
                if (rec.values[i]) out << format_double(*rec.values[i]);
            }
            out << "\n";
        }
    }
}

inline void save_panel(const CompanyPanel& panel, const std::filesystem::path& path, char delim = ',') {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write panel file: " + path.string());
    save_panel(panel, out, delim);
}

struct Violation {
    std::string company_id;
    int fiscal_year = 0;
    std::string indicator;  // empty for record-level violations
    std::string message;
};

/// Reports every structural violation without mutating the panel: duplicate
/// or unsorted fiscal years, non-finite values, registry misalignment.
inline std::vector<Violation> validate_panel(const CompanyPanel& panel) {
    std::vector<Violation> out;
    for (const auto& company : panel.companies) {
        for (std::size_t i = 0; i < company.records.size(); ++i) {
            const auto& rec = company.records[i];
            if (i > 0 && rec.fiscal_year == company.records[i - 1].fiscal_year)
                out.push_back({company.id, rec.fiscal_year, "", "duplicate fiscal year"});
            else if (i > 0 && rec.fiscal_year < company.records[i - 1].fiscal_year)
                out.push_back({company.id, rec.fiscal_year, "", "fiscal years out of order"});
            if (rec.values.size() != panel.registry.size() || rec.flags.size() != panel.registry.size()) {
                out.push_back({company.id, rec.fiscal_year, "", "record not aligned with indicator registry"});
                continue;
            }
            for (std::size_t k = 0; k < rec.values.size(); ++k)
                if (rec.values[k] && !std::isfinite(*rec.values[k]))
                    out.push_back({company.id, rec.fiscal_year, panel.registry.at(k).code, "non-finite value"});
        }
    }
    return out;
}

} // namespace firmcast
