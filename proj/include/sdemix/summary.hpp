#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "sdemix/panel_io.hpp"

namespace sdemix {

struct SummaryRow {
    std::string param;
    double mean = 0.0;
    double q025 = 0.0;
    double q975 = 0.0;
};

// Linear-interpolation (type 7) empirical quantile of sorted data.
double quantile_sorted(const std::vector<double>& sorted, double q);

// Skips the first burn_in rows and the `iter` column.
std::vector<SummaryRow> summarize(const Table& trace, std::size_t burn_in);

void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows,
                       const std::vector<std::string>& comments = {});
void write_summary_text(std::ostream& out, const std::vector<SummaryRow>& rows);

}  // namespace sdemix
