#pragma once

// Minimal CSV for numeric tables. Lines starting with '#' carry provenance
// and are skipped on read. No quoting: every field is a number or a bare token.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>

#include "invdp/errors.hpp"
#include "invdp/model_core.hpp"

namespace invdp::io {

/// Shortest representation that round-trips.
inline std::string num(double v) { return fmt::format("{}", v); }
inline std::string num(int v) { return std::to_string(v); }

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(std::string_view name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw ConfigError("csv: missing column '" + std::string(name) + "'");
    }
};

inline std::vector<std::string> split(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = line.find(',', start);
        out.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline Table read_table(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    Table t;
    std::string line;
    bool have_header = false;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        auto fields = split(line);
        if (!have_header) {
            t.header = std::move(fields);
            have_header = true;
            continue;
        }
        if (fields.size() != t.header.size())
            throw ConfigError(fmt::format("{}:{}: expected {} fields, found {}", path.string(), lineno,
                                          t.header.size(), fields.size()));
        t.rows.push_back(std::move(fields));
    }
    if (!have_header) throw ConfigError(path.string() + ": no header line");
    return t;
}

inline double to_double(const std::string& s, std::string_view what) {
    double v = 0.0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
        throw ConfigError("csv: bad number '" + s + "' in column " + std::string(what));
    return v;
}

inline int to_int(const std::string& s, std::string_view what) {
    int v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
        throw ConfigError("csv: bad integer '" + s + "' in column " + std::string(what));
    return v;
}

/// Builds a table in memory and writes it in one go.
class TableWriter {
public:
    explicit TableWriter(std::vector<std::string> header) : header_(std::move(header)) {}

    void add(std::vector<std::string> row) {
        if (row.size() != header_.size()) throw DomainError("TableWriter: row width does not match header");
        rows_.push_back(std::move(row));
    }

    std::string str(const std::vector<std::string>& provenance) const {
        std::ostringstream os;
        for (const auto& p : provenance) os << "# " << p << '\n';
        join(os, header_);
        for (const auto& r : rows_) join(os, r);
        return os.str();
    }

private:
    static void join(std::ostringstream& os, const std::vector<std::string>& f) {
        for (std::size_t i = 0; i < f.size(); ++i) os << (i ? "," : "") << f[i];
        os << '\n';
    }
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

// ---------------------------------------------------------------------------
// Panels.

inline const std::vector<std::string>& panel_header() {
    static const std::vector<std::string> h{"store_id", "product_id", "day",      "inventory", "order", "demand",
                                            "sales",    "price",      "trailing7", "weekend",  "holiday"};
    return h;
}

inline std::vector<std::string> panel_fields(const PanelRow& r) {
    return {num(r.store_id), num(r.product_id), num(r.day),        num(r.inventory),
            num(r.order),    r.demand ? num(*r.demand) : "",      num(r.sales),
            num(r.price),    num(r.trailing7), num(int(r.weekend)), num(int(r.holiday))};
}

/// Panels grouped by (store, product) in sorted order.
inline std::map<std::pair<int, int>, std::vector<PanelRow>> read_panels(const std::filesystem::path& path) {
    const Table t = read_table(path);
    std::vector<std::size_t> c;
    for (const auto& name : panel_header()) c.push_back(t.column(name));
    std::map<std::pair<int, int>, std::vector<PanelRow>> out;
    for (const auto& f : t.rows) {
        PanelRow r;
        r.store_id = to_int(f[c[0]], "store_id");
        r.product_id = to_int(f[c[1]], "product_id");
        r.day = to_int(f[c[2]], "day");
        r.inventory = to_int(f[c[3]], "inventory");
        r.order = to_int(f[c[4]], "order");
        if (!f[c[5]].empty()) r.demand = to_int(f[c[5]], "demand");
        r.sales = to_int(f[c[6]], "sales");
        r.price = to_double(f[c[7]], "price");
        r.trailing7 = to_double(f[c[8]], "trailing7");
        r.weekend = to_int(f[c[9]], "weekend") != 0;
        r.holiday = to_int(f[c[10]], "holiday") != 0;
        if (r.inventory < 0 || r.order < 0 || r.sales < 0 || r.sales > r.inventory || !(r.price > 0))
            throw ConfigError(fmt::format("{}: invalid panel row (store {}, product {}, day {})", path.string(),
                                          r.store_id, r.product_id, r.day));
        out[{r.store_id, r.product_id}].push_back(r);
    }
    return out;
}

}  // namespace invdp::io
