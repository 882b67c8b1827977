#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "sdemix/bridge.hpp"
#include "sdemix/model.hpp"

namespace sdemix {

struct UnitData {
    std::vector<double> times;
    std::vector<double> values;

    std::size_t size() const { return times.size(); }
    void validate() const;
};

struct PanelData {
    std::vector<UnitData> units;
    std::vector<std::string> unit_ids;

    std::size_t size() const { return units.size(); }
    std::size_t total_obs() const;
    void validate() const;
};

using UnitBridges = std::vector<BridgePath>;

// Trapezoid rule on a uniform grid.
double path_integral(std::span<const double> fvals, double delta);

double ell_interp(double h1, double h2, double t1, double t2, double t);

double loglik_unit(const ModelSpec& m, const Params& p, const Effects& e, const UnitData& unit,
                   std::span<const BridgePath> bridges);

struct SuffStats {
    std::vector<Vec> t;        // per unit, at the given alpha
    std::vector<Mat> B;        // per unit
    std::vector<Vec> t0;       // per unit, at alpha = 0
    std::vector<Vec> v_unit;   // per unit, at that unit's effects
    std::vector<Mat> D_unit;
    std::vector<double> rest;  // per unit remainder r_i
    Vec v;
    Mat D;
    double G1 = 0.0, G2 = 0.0;  // only when sigma = beta * c
    std::map<std::string, double> extra;
};

SuffStats suff_stats(const ModelSpec& m, const Params& p, const std::vector<Effects>& effects,
                     const PanelData& data, const std::vector<UnitBridges>& bridges);

// loglik via alpha v' - alpha D alpha'/2 + a t0' - a B a'/2 + r for unit i
double assemble_loglik(const SuffStats& s, std::size_t i, const Vec& alpha, const Vec& a);

void check_bridges(const UnitData& unit, std::span<const BridgePath> bridges);

}  // namespace sdemix
