#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "sdemix/gibbs.hpp"
#include "sdemix/likelihood.hpp"

namespace sdemix {

// Shortest round-trip decimal form.
std::string format_double(double v);

PanelData read_panel_csv(std::istream& in);
PanelData load_panel_csv(const std::string& path);
void write_panel_csv(std::ostream& out, const PanelData& data, const std::vector<std::string>& comments = {});
void write_panel_csv(const std::string& path, const PanelData& data, const std::vector<std::string>& comments = {});

struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
};

// header `iter,<params...>[,<effects...>]`
void write_trace_csv(std::ostream& out, const DrawTrace& trace, const std::vector<std::string>& comments = {});
void write_table_csv(std::ostream& out, const Table& t, const std::vector<std::string>& comments = {});
Table read_table_csv(std::istream& in);
Table load_table_csv(const std::string& path);

}  // namespace sdemix
