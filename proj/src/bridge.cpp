#include "sdemix/bridge.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sdemix/error.hpp"

namespace sdemix {
namespace {

struct Stepper {
    const ModelSpec& m;
    const Params& p;
    const Effects& e;
    double dt, sq;
    int retries;

    double operator()(double x, Rng& rng) const {
        double mu = x + m.drift(p.alpha, e.a, x) * dt;
        double s = m.sigma(p.beta, e.b, x) * sq;
        for (int r = 0; r <= retries; ++r) {
            double nx = mu + s * rng.normal();
            if (m.in_state(nx)) return nx;
        }
        throw NumericError("Euler step left the state interval " + std::to_string(retries + 1) +
                           " times from x=" + std::to_string(x));
    }
};

std::size_t grid_count(double span, double delta) {
    if (!(delta > 0.0) || !(span > 0.0)) throw DomainError("Euler grid: need delta > 0 and t1 > t0");
    double r = span / delta;
    auto n = static_cast<std::size_t>(std::llround(r));
    if (n == 0 || std::fabs(r - static_cast<double>(n)) > 1e-6 * std::max(1.0, r))
        throw DomainError("Euler grid: delta does not divide the interval");
    return n;
}

}  // namespace

Path euler_simulate(const ModelSpec& m, const Params& p, const Effects& e, double x0, double t0,
                    double t1, double delta, Rng& rng, const BridgeOptions& opt) {
    if (!m.in_state(x0)) throw DomainError("euler_simulate: x0 outside the state interval");
    std::size_t n = grid_count(t1 - t0, delta);
    double dt = (t1 - t0) / static_cast<double>(n);
    Stepper step{m, p, e, dt, std::sqrt(dt), opt.max_step_retries};
    Path path;
    path.t0 = t0;
    path.delta = dt;
    path.values.resize(n + 1);
    path.values[0] = x0;
    for (std::size_t k = 0; k < n; ++k) path.values[k + 1] = step(path.values[k], rng);
    return path;
}

std::size_t crossing_index(const std::vector<double>& forward, const std::vector<double>& reversed) {
    std::size_t n = reversed.size() - 1;
    bool down = forward[0] >= reversed[n];
    for (std::size_t i = 1; i < forward.size() && i <= n; ++i) {
        double other = reversed[n - i];
        if (down ? forward[i] <= other : forward[i] >= other) return i;
    }
    return 0;
}

BridgePath simulate_bridge_approx(const ModelSpec& m, const Params& p, const Effects& e, double t1,
                                  double x1, double t2, double x2, std::size_t steps, Rng& rng,
                                  const BridgeOptions& opt) {
    if (!m.in_state(x1) || !m.in_state(x2)) throw DomainError("bridge endpoints outside the state interval");
    if (!(t2 > t1)) throw DomainError("bridge interval must have t2 > t1");
    if (steps == 0) throw DomainError("bridge needs at least one grid step");
    const std::size_t n = steps;
    double dt = (t2 - t1) / static_cast<double>(n);
    Stepper step{m, p, e, dt, std::sqrt(dt), opt.max_step_retries};

    std::vector<double> rev(n + 1), fwd(n + 1);
    for (std::size_t attempt = 1; attempt <= opt.max_attempts; ++attempt) {
        rev[0] = x2;
        for (std::size_t k = 0; k < n; ++k) rev[k + 1] = step(rev[k], rng);
        fwd[0] = x1;
        bool down = x1 >= rev[n];
        std::size_t mu = 0;
        for (std::size_t i = 1; i <= n; ++i) {
            fwd[i] = step(fwd[i - 1], rng);
            double other = rev[n - i];
            if (down ? fwd[i] <= other : fwd[i] >= other) {
                mu = i;
                break;
            }
        }
        if (mu == 0) continue;

        BridgePath b;
        b.t1 = t1;
        b.t2 = t2;
        b.x1 = x1;
        b.x2 = x2;
        b.delta = dt;
        b.mu_idx = mu;
        b.attempts = attempt;
        b.values.resize(n + 1);
        for (std::size_t k = 0; k < mu; ++k) b.values[k] = fwd[k];
        for (std::size_t k = mu; k <= n; ++k) b.values[k] = rev[n - k];
        b.values[0] = x1;
        b.values[n] = x2;
        if (opt.keep_paths) {
            b.forward.assign(fwd.begin(), fwd.begin() + static_cast<std::ptrdiff_t>(mu) + 1);
            b.reversed = rev;
        }
        recenter(m, p.beta, e.b, b);
        return b;
    }
    throw NumericError("bridge rejection: no crossing after " + std::to_string(opt.max_attempts) +
                       " attempts on [" + std::to_string(t1) + ", " + std::to_string(t2) + "] (x1=" +
                       std::to_string(x1) + ", x2=" + std::to_string(x2) +
                       ", a=" + (e.a.size() ? std::to_string(e.a[0]) : "-") +
                       ", beta=" + (p.beta.size() ? std::to_string(p.beta[0]) : "-") +
                       "); check the grid step or the parameters");
}

GeomVar draw_geom_var(const ModelSpec& m, const Params& p, const Effects& e, const BridgePath& bridge,
                      Rng& rng, const BridgeOptions& opt) {
    const std::size_t n = bridge.steps();
    Stepper step{m, p, e, bridge.delta, std::sqrt(bridge.delta), opt.max_step_retries};
    for (std::uint64_t s = 1; s <= opt.max_geom_draws; ++s) {
        double z = stationary_draw(m, p, e, rng);
        double d = z - bridge.values[0];
        bool below = d <= 0.0, above = d >= 0.0;
        for (std::size_t k = 1; k <= n && !(below && above); ++k) {
            z = step(z, rng);
            d = z - bridge.values[k];
            below = below || d <= 0.0;
            above = above || d >= 0.0;
        }
        if (below && above) return GeomVar{s};
    }
    throw NumericError("geometric variable: no intersecting stationary path after " +
                       std::to_string(opt.max_geom_draws) + " draws (x1=" + std::to_string(bridge.x1) +
                       ", x2=" + std::to_string(bridge.x2) + ", a=" + (e.a.size() ? std::to_string(e.a[0]) : "-") +
                       ", beta=" + (p.beta.size() ? std::to_string(p.beta[0]) : "-") + ")");
}

BridgeState mh_bridge_step(const BridgePath& prev, GeomVar prev_s, BridgePath proposal, GeomVar prop_s,
                           Rng& rng) {
    bool accept = prop_s.s >= prev_s.s ||
                  rng.uniform() < static_cast<double>(prop_s.s) / static_cast<double>(prev_s.s);
    if (accept) return BridgeState{std::move(proposal), prop_s, true};
    return BridgeState{prev, prev_s, false};
}

double stationary_draw(const ModelSpec& m, const Params& p, const Effects& e, Rng& rng) {
    if (m.invariant_sampler) return m.invariant_sampler(p, e, rng);
    if (!m.mean_reversion) throw DomainError("stationary_draw: model has no invariant sampler or mean-reversion rate");
    double rate = m.mean_reversion(p, e);
    if (!(rate > 0.0)) throw DomainError("stationary_draw: non-ergodic parameters");
    const std::size_t n = 10000;
    double horizon = 50.0 / rate;
    Path path = euler_simulate(m, p, e, m.x_star, 0.0, horizon, horizon / n, rng);
    return path.values.back();
}

void recenter(const ModelSpec& m, const Vec& beta, const Vec& b, BridgePath& bridge) {
    const std::size_t n = bridge.steps();
    double h1 = lamperti(m, beta, b, bridge.x1), h2 = lamperti(m, beta, b, bridge.x2);
    bridge.ystar.resize(n + 1);
    bridge.ystar[0] = 0.0;
    bridge.ystar[n] = 0.0;
    for (std::size_t k = 1; k < n; ++k)
        bridge.ystar[k] = lamperti(m, beta, b, bridge.values[k]) - grid_ell(h1, h2, k, n);
}

void rebase(const ModelSpec& m, const Vec& beta, const Vec& b, BridgePath& bridge) {
    const std::size_t n = bridge.steps();
    double h1 = lamperti(m, beta, b, bridge.x1), h2 = lamperti(m, beta, b, bridge.x2);
    bridge.values[0] = bridge.x1;
    bridge.values[n] = bridge.x2;
    for (std::size_t k = 1; k < n; ++k)
        bridge.values[k] = lamperti_inv(m, beta, b, bridge.ystar[k] + grid_ell(h1, h2, k, n));
}

}  // namespace sdemix
