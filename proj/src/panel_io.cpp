#include "sdemix/panel_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "sdemix/error.hpp"

namespace sdemix {
namespace {

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return {};
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

double parse_number(const std::string& field, std::size_t line) {
    std::string f = trim(field);
    double v = 0.0;
    const char* first = f.data();
    const char* last = f.data() + f.size();
    if (!f.empty() && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (f.empty() || ec != std::errc() || ptr != last) throw ParseError("malformed number '" + f + "'", line);
    return v;
}

// skips blank and '#' lines; returns false at end of input
bool next_line(std::istream& in, std::string& line, std::size_t& lineno) {
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        return true;
    }
    return false;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open '" + path + "' for writing");
    return f;
}

void write_comments(std::ostream& out, const std::vector<std::string>& comments) {
    for (const std::string& c : comments) out << "# " << c << '\n';
}

}  // namespace

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc()) throw NumericError("cannot format number");
    return std::string(buf, ptr);
}

PanelData read_panel_csv(std::istream& in) {
    std::string line;
    std::size_t lineno = 0;
    if (!next_line(in, line, lineno)) throw ParseError("missing header", lineno);
    std::vector<std::string> head = split(line);
    if (head.size() != 3 || trim(head[0]) != "unit" || trim(head[1]) != "time" || trim(head[2]) != "value")
        throw ParseError("expected header 'unit,time,value'", lineno);

    PanelData data;
    std::set<std::string> seen;
    while (next_line(in, line, lineno)) {
        std::vector<std::string> f = split(line);
        if (f.size() != 3) throw ParseError("expected 3 fields, got " + std::to_string(f.size()), lineno);
        std::string id = trim(f[0]);
        if (id.empty()) throw ParseError("empty unit label", lineno);
        double t = parse_number(f[1], lineno);
        double x = parse_number(f[2], lineno);
        if (!std::isfinite(t) || !std::isfinite(x)) throw ParseError("non-finite value", lineno);
        if (data.unit_ids.empty() || data.unit_ids.back() != id) {
            if (!seen.insert(id).second) throw ParseError("rows of unit '" + id + "' are not contiguous", lineno);
            data.unit_ids.push_back(id);
            data.units.emplace_back();
        }
        UnitData& u = data.units.back();
        if (!u.times.empty()) {
            if (t == u.times.back()) throw ParseError("duplicate row for unit '" + id + "'", lineno);
            if (t < u.times.back()) throw ParseError("times of unit '" + id + "' are not increasing", lineno);
        }
        u.times.push_back(t);
        u.values.push_back(x);
    }
    if (data.units.empty()) throw ParseError("no data rows", lineno);
    data.validate();
    return data;
}

PanelData load_panel_csv(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open '" + path + "'");
    return read_panel_csv(f);
}

void write_panel_csv(std::ostream& out, const PanelData& data, const std::vector<std::string>& comments) {
    write_comments(out, comments);
    out << "unit,time,value\n";
    for (std::size_t i = 0; i < data.size(); ++i) {
        std::string id = i < data.unit_ids.size() ? data.unit_ids[i] : std::to_string(i + 1);
        const UnitData& u = data.units[i];
        for (std::size_t j = 0; j < u.size(); ++j)
            out << id << ',' << format_double(u.times[j]) << ',' << format_double(u.values[j]) << '\n';
    }
}

void write_panel_csv(const std::string& path, const PanelData& data, const std::vector<std::string>& comments) {
    std::ofstream f = open_out(path);
    write_panel_csv(f, data, comments);
    if (!f) throw ConfigError("write to '" + path + "' failed");
}

void write_trace_csv(std::ostream& out, const DrawTrace& trace, const std::vector<std::string>& comments) {
    write_comments(out, comments);
    const bool eff = !trace.effect_columns.empty();
    if (eff && trace.effect_rows.size() != trace.rows.size())
        throw ConsistencyError("trace: effect rows do not match parameter rows");
    out << "iter";
    for (const auto& c : trace.columns) out << ',' << c;
    if (eff)
        for (const auto& c : trace.effect_columns) out << ',' << c;
    out << '\n';
    for (std::size_t r = 0; r < trace.rows.size(); ++r) {
        out << (r + 1);
        for (double v : trace.rows[r]) out << ',' << format_double(v);
        if (eff)
            for (double v : trace.effect_rows[r]) out << ',' << format_double(v);
        out << '\n';
    }
}

void write_table_csv(std::ostream& out, const Table& t, const std::vector<std::string>& comments) {
    write_comments(out, comments);
    for (std::size_t c = 0; c < t.columns.size(); ++c) out << (c ? "," : "") << t.columns[c];
    out << '\n';
    for (const auto& row : t.rows) {
        for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << format_double(row[c]);
        out << '\n';
    }
}

Table read_table_csv(std::istream& in) {
    std::string line;
    std::size_t lineno = 0;
    if (!next_line(in, line, lineno)) throw ParseError("missing header", lineno);
    Table t;
    for (const auto& c : split(line)) t.columns.push_back(trim(c));
    while (next_line(in, line, lineno)) {
        std::vector<std::string> f = split(line);
        if (f.size() != t.columns.size())
            throw ParseError("expected " + std::to_string(t.columns.size()) + " fields, got " +
                                 std::to_string(f.size()),
                             lineno);
        std::vector<double> row;
        row.reserve(f.size());
        for (const auto& s : f) row.push_back(parse_number(s, lineno));
        t.rows.push_back(std::move(row));
    }
    return t;
}

Table load_table_csv(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open '" + path + "'");
    return read_table_csv(f);
}

}  // namespace sdemix
