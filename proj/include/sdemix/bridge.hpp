#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "sdemix/model.hpp"
#include "sdemix/rng.hpp"

namespace sdemix {

struct Path {
    double t0 = 0.0;
    double delta = 0.0;
    std::vector<double> values;
};

struct BridgePath {
    double t1 = 0.0, t2 = 0.0;
    double x1 = 0.0, x2 = 0.0;
    double delta = 0.0;
    std::vector<double> values;
    std::size_t mu_idx = 0;
    std::vector<double> ystar;
    std::size_t attempts = 0;
    // filled only with BridgeOptions::keep_paths
    std::vector<double> forward, reversed;

    std::size_t steps() const { return values.size() - 1; }
};

struct GeomVar {
    std::uint64_t s = 1;
};

struct BridgeOptions {
    std::size_t max_attempts = 10000;
    std::size_t max_geom_draws = 100000;
    int max_step_retries = 100;
    bool keep_paths = false;
};

// ell on grid point k of n for transformed endpoints h1, h2
inline double grid_ell(double h1, double h2, std::size_t k, std::size_t n) {
    if (k == 0) return h1;
    if (k == n) return h2;
    return h1 + (h2 - h1) * (static_cast<double>(k) / static_cast<double>(n));
}

Path euler_simulate(const ModelSpec& m, const Params& p, const Effects& e, double x0, double t0,
                    double t1, double delta, Rng& rng, const BridgeOptions& opt = {});

BridgePath simulate_bridge_approx(const ModelSpec& m, const Params& p, const Effects& e, double t1,
                                  double x1, double t2, double x2, std::size_t steps, Rng& rng,
                                  const BridgeOptions& opt = {});

GeomVar draw_geom_var(const ModelSpec& m, const Params& p, const Effects& e, const BridgePath& bridge,
                      Rng& rng, const BridgeOptions& opt = {});

struct BridgeState {
    BridgePath bridge;
    GeomVar geom;
    bool accepted = true;
};

BridgeState mh_bridge_step(const BridgePath& prev, GeomVar prev_s, BridgePath proposal, GeomVar prop_s,
                           Rng& rng);

double stationary_draw(const ModelSpec& m, const Params& p, const Effects& e, Rng& rng);

// ystar from values under (beta, b)
void recenter(const ModelSpec& m, const Vec& beta, const Vec& b, BridgePath& bridge);
// values from ystar under (beta, b)
void rebase(const ModelSpec& m, const Vec& beta, const Vec& b, BridgePath& bridge);

// Minimal crossing index per the forward/reversed rule; 0 if none.
std::size_t crossing_index(const std::vector<double>& forward, const std::vector<double>& reversed);

}  // namespace sdemix
