#include "sdemix/likelihood.hpp"

#include <cmath>
#include <string>

#include "sdemix/error.hpp"
#include "sdemix/quadrature.hpp"

namespace sdemix {

void UnitData::validate() const {
    if (times.size() != values.size()) throw DomainError("unit: times and values differ in length");
    if (times.size() < 2) throw DomainError("unit: need at least two observations");
    for (std::size_t j = 1; j < times.size(); ++j)
        if (!(times[j] > times[j - 1])) throw DomainError("unit: times not strictly increasing at index " + std::to_string(j));
    for (double x : values)
        if (!std::isfinite(x)) throw DomainError("unit: non-finite observation");
}

std::size_t PanelData::total_obs() const {
    std::size_t n = 0;
    for (const auto& u : units) n += u.size();
    return n;
}

void PanelData::validate() const {
    if (units.empty()) throw DomainError("panel: no units");
    for (const auto& u : units) u.validate();
}

double path_integral(std::span<const double> fvals, double delta) {
    if (fvals.size() < 2) throw DomainError("path_integral: need at least two grid points");
    double s = 0.5 * (fvals.front() + fvals.back());
    for (std::size_t k = 1; k + 1 < fvals.size(); ++k) s += fvals[k];
    return s * delta;
}

double ell_interp(double h1, double h2, double t1, double t2, double t) {
    if (t < t1 || t > t2) throw DomainError("ell_interp: t outside [t1, t2]");
    return ((t2 - t) * h1 + (t - t1) * h2) / (t2 - t1);
}

void check_bridges(const UnitData& unit, std::span<const BridgePath> bridges) {
    if (bridges.size() + 1 != unit.size())
        throw ConsistencyError("expected " + std::to_string(unit.size() - 1) + " bridges, got " +
                               std::to_string(bridges.size()));
    for (std::size_t j = 0; j < bridges.size(); ++j) {
        const BridgePath& b = bridges[j];
        if (b.t1 != unit.times[j] || b.t2 != unit.times[j + 1] || b.x1 != unit.values[j] ||
            b.x2 != unit.values[j + 1])
            throw ConsistencyError("bridge " + std::to_string(j) + " endpoints do not match the observations");
        if (b.ystar.size() != b.values.size() || b.values.size() < 2)
            throw ConsistencyError("bridge " + std::to_string(j) + " has an inconsistent grid");
    }
}

double loglik_unit(const ModelSpec& m, const Params& p, const Effects& e, const UnitData& unit,
                   std::span<const BridgePath> bridges) {
    check_bridges(unit, bridges);
    const std::size_t n = unit.size();
    double total = H_term(m, p, e, unit.values.front(), unit.values.back());
    std::vector<double> grid;
    double hprev = lamperti(m, p.beta, e.b, unit.values[0]);
    for (std::size_t j = 1; j < n; ++j) {
        const BridgePath& b = bridges[j - 1];
        double hj = lamperti(m, p.beta, e.b, unit.values[j]);
        double dt = unit.times[j] - unit.times[j - 1];
        double dh = hj - hprev;
        std::size_t steps = b.steps();
        grid.resize(steps + 1);
        for (std::size_t k = 0; k <= steps; ++k) grid[k] = phi(m, p, e, b.ystar[k] + grid_ell(hprev, hj, k, steps));
        total -= dh * dh / (2.0 * dt) + std::log(m.sigma(p.beta, e.b, unit.values[j])) +
                 0.5 * path_integral(grid, b.delta);
        hprev = hj;
    }
    return total;
}

namespace {

Vec endpoint_integral(const ModelSpec& m, const std::vector<ScalarFn>& fns,
                      const std::function<Vec(const Vec&, const Vec&, double, double)>& closed,
                      const Vec& beta, const Vec& b, double x, double y) {
    if (closed) return closed(beta, b, x, y);
    Vec r(fns.size());
    for (std::size_t k = 0; k < fns.size(); ++k) {
        r[k] = adaptive_simpson(
            [&](double u) {
                double s = m.sigma(beta, b, u);
                return fns[k](u) / (s * s);
            },
            x, y);
    }
    return r;
}

Vec unit_beta(const Vec& beta) {
    Vec r = beta;
    r[0] = 1.0;
    return r;
}

}  // namespace

SuffStats suff_stats(const ModelSpec& m, const Params& p, const std::vector<Effects>& effects,
                     const PanelData& data, const std::vector<UnitBridges>& bridges) {
    if (!m.expfam) throw ConfigError("suff_stats: model has no exponential-family basis");
    const ExpFamBasis& fb = *m.expfam;
    const std::size_t p1 = fb.p1(), p2 = fb.p2(), N = data.size();
    if (effects.size() != N || bridges.size() != N) throw ConsistencyError("suff_stats: unit count mismatch");

    SuffStats s;
    s.v = Vec::Zero(static_cast<Eigen::Index>(p1));
    s.D = Mat::Zero(static_cast<Eigen::Index>(p1), static_cast<Eigen::Index>(p1));
    const bool scaled = fb.factor == ScaleFactor::beta;

    std::vector<double> fbar(p1), ftil(p1), gbar(p2), gtil(p2);
    for (std::size_t i = 0; i < N; ++i) {
        const UnitData& u = data.units[i];
        const Effects& e = effects[i];
        check_bridges(u, bridges[i]);
        const double x1 = u.values.front(), xn = u.values.back();

        Vec intf = endpoint_integral(m, fb.f, fb.int_f_sigma2, p.beta, e.b, x1, xn);
        Vec intg = endpoint_integral(m, fb.g, fb.int_g_sigma2, p.beta, e.b, x1, xn);
        Vec ti = intg, t0 = intg, vi = intf;
        Mat Bi = Mat::Zero(static_cast<Eigen::Index>(p2), static_cast<Eigen::Index>(p2));
        Mat Di = Mat::Zero(static_cast<Eigen::Index>(p1), static_cast<Eigen::Index>(p1));
        double rest = -0.5 * std::log(m.sigma(p.beta, e.b, xn) / m.sigma(p.beta, e.b, x1));

        double hprev = lamperti(m, p.beta, e.b, u.values[0]);
        for (std::size_t j = 1; j < u.size(); ++j) {
            const BridgePath& b = bridges[i][j - 1];
            double hj = lamperti(m, p.beta, e.b, u.values[j]);
            double dt = u.times[j] - u.times[j - 1];
            rest -= (hj - hprev) * (hj - hprev) / (2.0 * dt) + std::log(m.sigma(p.beta, e.b, u.values[j]));
            const std::size_t steps = b.steps();
            double w_end = 0.5 * b.delta;
            for (std::size_t k = 0; k <= steps; ++k) {
                double w = (k == 0 || k == steps) ? w_end : b.delta;
                double x = k == 0 ? b.x1 : k == steps ? b.x2
                                  : lamperti_inv(m, p.beta, e.b, b.ystar[k] + grid_ell(hprev, hj, k, steps));
                double sg = m.sigma(p.beta, e.b, x), s1 = m.sigma_dx(p.beta, e.b, x);
                double s2 = m.sigma_dxx(p.beta, e.b, x);
                double dlog = s1 / sg;
                double af = 0.0, ag = 0.0;
                for (std::size_t q = 0; q < p1; ++q) {
                    double fq = fb.f[q](x);
                    fbar[q] = fb.f_dx[q](x) - 2.0 * fq * dlog;
                    ftil[q] = fq / sg;
                    af += p.alpha[static_cast<Eigen::Index>(q)] * ftil[q];
                }
                for (std::size_t q = 0; q < p2; ++q) {
                    double gq = fb.g[q](x);
                    gbar[q] = fb.g_dx[q](x) - 2.0 * gq * dlog;
                    gtil[q] = gq / sg;
                    ag += e.a[static_cast<Eigen::Index>(q)] * gtil[q];
                }
                for (std::size_t q = 0; q < p2; ++q) {
                    auto qi = static_cast<Eigen::Index>(q);
                    ti[qi] -= w * (0.5 * gbar[q] + af * gtil[q]);
                    t0[qi] -= w * 0.5 * gbar[q];
                    for (std::size_t r = 0; r < p2; ++r) Bi(qi, static_cast<Eigen::Index>(r)) += w * gtil[q] * gtil[r];
                }
                for (std::size_t q = 0; q < p1; ++q) {
                    auto qi = static_cast<Eigen::Index>(q);
                    vi[qi] -= w * (0.5 * fbar[q] + ag * ftil[q]);
                    for (std::size_t r = 0; r < p1; ++r) Di(qi, static_cast<Eigen::Index>(r)) += w * ftil[q] * ftil[r];
                }
                rest -= 0.5 * w * (0.25 * s1 * s1 - 0.5 * s2 * sg);
            }
            hprev = hj;
        }

        if (scaled) {
            Vec b1 = unit_beta(p.beta);
            double h1prev = lamperti(m, b1, e.b, u.values[0]);
            for (std::size_t j = 1; j < u.size(); ++j) {
                double h1j = lamperti(m, b1, e.b, u.values[j]);
                s.G1 += (h1j - h1prev) * (h1j - h1prev) / (2.0 * (u.times[j] - u.times[j - 1]));
                h1prev = h1j;
            }
            Vec f1 = endpoint_integral(m, fb.f, fb.int_f_sigma2, b1, e.b, x1, xn);
            Vec g1 = endpoint_integral(m, fb.g, fb.int_g_sigma2, b1, e.b, x1, xn);
            s.G2 -= (p1 ? p.alpha.dot(f1) : 0.0) + (p2 ? e.a.dot(g1) : 0.0);
        }

        s.t.push_back(ti);
        s.t0.push_back(t0);
        s.B.push_back(Bi);
        s.v_unit.push_back(vi);
        s.D_unit.push_back(Di);
        s.rest.push_back(rest);
        s.v += vi;
        s.D += Di;
    }
    return s;
}

double assemble_loglik(const SuffStats& s, std::size_t i, const Vec& alpha, const Vec& a) {
    double r = s.rest[i];
    if (alpha.size() > 0) r += alpha.dot(s.v_unit[i]) - 0.5 * alpha.dot(s.D_unit[i] * alpha);
    if (a.size() > 0) r += a.dot(s.t0[i]) - 0.5 * a.dot(s.B[i] * a);
    return r;
}

}  // namespace sdemix
