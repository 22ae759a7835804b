#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <variant>
#include <vector>

#include "expface/error.hpp"

namespace expface::io {

/// Reals are written with 17 significant digits so they parse back to the
/// identical double.
inline std::string format_real(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

/// Shortest representation that round-trips; used in file names.
inline std::string format_short(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline std::optional<double> parse_real(std::string_view text) {
    if (text == "nan") return std::nan("");
    if (text == "inf") return HUGE_VAL;
    if (text == "-inf") return -HUGE_VAL;
    double v = 0.0;
    const char* first = text.data();
    const char* last = first + text.size();
    if (first != last && *first == '+') ++first;
    auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc{} || res.ptr != last) return std::nullopt;
    return v;
}

using CsvCell = std::variant<double, std::int64_t, std::string>;

/// Header plus rows of the same arity.
class CsvTable {
public:
    CsvTable() = default;
    explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

    const std::vector<std::string>& header() const noexcept { return header_; }
    const std::vector<std::vector<CsvCell>>& rows() const noexcept { return rows_; }

    void add_row(std::vector<CsvCell> row) {
        if (row.size() != header_.size()) {
            throw Error("csv row has " + std::to_string(row.size()) + " cells, header has " +
                        std::to_string(header_.size()));
        }
        rows_.push_back(std::move(row));
    }

    /// Column `name` as reals (strings that do not parse become NaN).
    std::vector<double> column(std::string_view name) const {
        std::size_t idx = header_.size();
        for (std::size_t i = 0; i < header_.size(); ++i) {
            if (header_[i] == name) idx = i;
        }
        if (idx == header_.size()) throw Error("csv has no column '" + std::string(name) + "'");
        std::vector<double> out;
        out.reserve(rows_.size());
        for (const auto& row : rows_) {
            const auto& cell = row[idx];
            if (auto d = std::get_if<double>(&cell)) {
                out.push_back(*d);
            } else if (auto n = std::get_if<std::int64_t>(&cell)) {
                out.push_back(static_cast<double>(*n));
            } else {
                out.push_back(parse_real(std::get<std::string>(cell)).value_or(std::nan("")));
            }
        }
        return out;
    }

private:
    std::vector<std::string> header_;
    std::vector<std::vector<CsvCell>> rows_;
};

namespace detail {

inline std::string quote_if_needed(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

inline std::string format_cell(const CsvCell& cell) {
    struct {
        std::string operator()(double v) const { return format_real(v); }
        std::string operator()(std::int64_t v) const { return std::to_string(v); }
        std::string operator()(const std::string& v) const { return quote_if_needed(v); }
    } visitor;
    return std::visit(visitor, cell);
}

}  // namespace detail

/// Comma-separated, header row first, LF line endings.
inline void write_csv(std::ostream& os, const CsvTable& table) {
    auto write_line = [&](const auto& cells, auto&& fmt) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) os << ',';
            os << fmt(cells[i]);
        }
        os << '\n';
    };
    write_line(table.header(), [](const std::string& h) { return detail::quote_if_needed(h); });
    for (const auto& row : table.rows()) write_line(row, detail::format_cell);
}

inline std::string to_csv_string(const CsvTable& table) {
    std::ostringstream os;
    write_csv(os, table);
    return os.str();
}

inline void write_csv_file(const std::filesystem::path& path, const CsvTable& table) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    write_csv(out, table);
    out.flush();
    if (!out) throw IoError("failed writing " + path.string());
}

/// Parses CSV text into string cells; quoted fields may contain commas and
/// doubled quotes.
inline CsvTable parse_csv(std::string_view text) {
    std::vector<std::vector<std::string>> lines;
    std::vector<std::string> fields;
    std::string field;
    bool in_quotes = false;
    bool any = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        any = true;
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"') {
            in_quotes = true;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else if (c == '\n') {
            fields.push_back(std::move(field));
            field.clear();
            lines.push_back(std::move(fields));
            fields.clear();
            any = false;
        } else if (c != '\r') {
            field += c;
        }
    }
    if (in_quotes) throw Error("csv: unterminated quoted field");
    if (any) {
        fields.push_back(std::move(field));
        lines.push_back(std::move(fields));
    }
    if (lines.empty()) throw Error("csv: missing header");

    CsvTable table(lines.front());
    for (std::size_t i = 1; i < lines.size(); ++i) {
        std::vector<CsvCell> row(lines[i].begin(), lines[i].end());
        table.add_row(std::move(row));
    }
    return table;
}

}  // namespace expface::io
