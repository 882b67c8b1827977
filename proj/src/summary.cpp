#include "sdemix/summary.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

#include "sdemix/error.hpp"

namespace sdemix {

double quantile_sorted(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) throw ConfigError("quantile of an empty sample");
    if (!(q >= 0.0 && q <= 1.0)) throw DomainError("quantile level outside [0, 1]");
    double h = (static_cast<double>(sorted.size()) - 1.0) * q;
    std::size_t lo = static_cast<std::size_t>(std::floor(h));
    std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

std::vector<SummaryRow> summarize(const Table& trace, std::size_t burn_in) {
    if (burn_in >= trace.rows.size())
        throw ConfigError("burn-in " + std::to_string(burn_in) + " leaves no rows out of " +
                          std::to_string(trace.rows.size()));
    std::vector<SummaryRow> out;
    for (std::size_t c = 0; c < trace.columns.size(); ++c) {
        if (trace.columns[c] == "iter") continue;
        std::vector<double> x;
        x.reserve(trace.rows.size() - burn_in);
        for (std::size_t r = burn_in; r < trace.rows.size(); ++r) x.push_back(trace.rows[r][c]);
        double sum = 0.0;
        for (double v : x) sum += v;
        std::sort(x.begin(), x.end());
        SummaryRow row;
        row.param = trace.columns[c];
        row.mean = sum / static_cast<double>(x.size());
        row.q025 = quantile_sorted(x, 0.025);
        row.q975 = quantile_sorted(x, 0.975);
        out.push_back(row);
    }
    return out;
}

void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows,
                       const std::vector<std::string>& comments) {
    for (const auto& c : comments) out << "# " << c << '\n';
    out << "param,mean,q025,q975\n";
    for (const auto& r : rows)
        out << r.param << ',' << format_double(r.mean) << ',' << format_double(r.q025) << ','
            << format_double(r.q975) << '\n';
}

void write_summary_text(std::ostream& out, const std::vector<SummaryRow>& rows) {
    out << std::left << std::setw(12) << "param" << std::right << std::setw(14) << "mean" << std::setw(14)
        << "2.5%" << std::setw(14) << "97.5%" << '\n';
    for (const auto& r : rows)
        out << std::left << std::setw(12) << r.param << std::right << std::setprecision(6) << std::setw(14)
            << r.mean << std::setw(14) << r.q025 << std::setw(14) << r.q975 << '\n';
}

}  // namespace sdemix
