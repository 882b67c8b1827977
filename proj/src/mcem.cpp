#include "sdemix/mcem.hpp"

#include <cmath>
#include <string>

#include <Eigen/Cholesky>

#include "sdemix/error.hpp"
#include "sdemix/functionals.hpp"
#include "sdemix/parallel.hpp"
#include "sdemix/samplers.hpp"

namespace sdemix {
namespace {

constexpr std::uint64_t kSiteEm = 3;

const ModelSpec& em_model(ModelId id) {
    static const ModelSpec ou = ou_speed_model();
    static const ModelSpec td = t_diffusion_model();
    switch (id) {
        case ModelId::ou_speed: return ou;
        case ModelId::t_diffusion: return td;
        case ModelId::ou_level: break;
    }
    throw ConfigError("EM is available for ou-speed and t-diffusion only");
}

Params em_params(double beta) {
    Params p;
    p.alpha = Vec(0);
    p.beta = Vec::Constant(1, beta);
    return p;
}

Effects scalar_effect(double a) {
    Effects e;
    e.a = Vec::Constant(1, a);
    e.b = Vec(0);
    return e;
}

void check_theta(const EmTheta& th) {
    if (!(th.beta > 0.0) || !(th.gamma > 0.0) || !std::isfinite(th.beta) || !std::isfinite(th.gamma))
        throw DomainError("EM parameters must be positive and finite");
}

struct UnitAcc {
    double G2 = 0.0, E1 = 0.0, E2 = 0.0, a = 0.0;
};

}  // namespace

EmFixed em_fixed(ModelId id, const PanelData& data) {
    em_model(id);
    EmFixed fx;
    fx.G1 = data_G1(id, data);
    fx.N = data.size();
    fx.n_dot = data.total_obs();
    for (const UnitData& u : data.units) fx.span_sum += u.times.back() - u.times.front();
    if (id == ModelId::t_diffusion) {
        fx.asinh_obs.reserve(data.size());
        for (const UnitData& u : data.units) {
            std::vector<double> h(u.size());
            for (std::size_t j = 0; j < u.size(); ++j) h[j] = std::asinh(u.values[j]);
            fx.asinh_obs.push_back(std::move(h));
        }
    }
    return fx;
}

EStepStats mcem_estep(ModelId id, const PanelData& data, const EmTheta& theta, const EmConfig& cfg,
                      std::uint64_t k) {
    const ModelSpec& m = em_model(id);
    check_theta(theta);
    if (cfg.M == 0) throw ConfigError("EM needs at least one Monte Carlo sample");
    if (cfg.thin == 0) throw ConfigError("EM thinning must be at least 1");
    if (cfg.bridge_steps < 2) throw ConfigError("bridge steps must be at least 2");
    const std::size_t N = data.size();
    const Params p = em_params(theta.beta);
    const double beta = theta.beta, b2 = beta * beta, gam = theta.gamma;
    Streams streams(cfg.seed);

    EStepStats st;
    st.M = cfg.M;
    st.N = N;
    st.steps = cfg.bridge_steps;
    st.a.assign(N, std::vector<double>(cfg.M));
    if (id == ModelId::t_diffusion) st.ystar.assign(N, std::vector<std::vector<double>>(cfg.M));
    if (cfg.keep_samples) st.samples.assign(N, std::vector<UnitBridges>(cfg.M));
    std::vector<UnitAcc> acc(N);

    parallel_for(
        N,
        [&](std::size_t i) {
            Rng rng = streams.make(k, i, kSiteEm);
            const UnitData& u = data.units[i];
            const std::size_t J = u.size() - 1;
            const double x1 = u.values.front(), xn = u.values.back();
            const double span = u.times.back() - u.times.front();
            const double lr = std::log1p(xn * xn) - std::log1p(x1 * x1);
            UnitBridges ub(J);
            std::vector<GeomVar> gs(J);
            bool fresh = true;
            double a = rng.exponential(gam);
            const std::size_t total = cfg.inner_burn_in + cfg.M * cfg.thin;
            std::size_t rec = 0;
            for (std::size_t sweep = 1; sweep <= total; ++sweep) {
                const Effects e = scalar_effect(a);
                for (std::size_t j = 0; j < J; ++j) {
                    BridgePath prop = simulate_bridge_approx(m, p, e, u.times[j], u.values[j], u.times[j + 1],
                                                             u.values[j + 1], cfg.bridge_steps, rng, cfg.bridge);
                    if (!cfg.exact_bridges) {
                        ub[j] = std::move(prop);
                        continue;
                    }
                    if (fresh) {
                        ub[j] = std::move(prop);
                        gs[j] = GeomVar{0};
                        continue;
                    }
                    GeomVar sp = draw_geom_var(m, p, e, prop, rng, cfg.bridge);
                    if (gs[j].s == 0 || sp.s >= gs[j].s ||
                        rng.uniform() < static_cast<double>(sp.s) / static_cast<double>(gs[j].s)) {
                        ub[j] = std::move(prop);
                        gs[j] = sp;
                    } else {
                        rebase(m, p.beta, e.b, ub[j]);
                    }
                }
                fresh = false;

                double t = 0.0, B = 0.0;
                UnitPathSums ps;
                if (id == ModelId::ou_speed) {
                    ps = ou_path_sums(ub);
                    t = -(xn * xn - x1 * x1) / (2.0 * b2) + 0.5 * span;
                    B = ps.yy + 2.0 * ps.yl / beta + ps.ll / b2;
                } else {
                    double S = tanh2_integral(ub, beta);
                    t = -lr / (2.0 * b2) + 0.5 * span - S;
                    B = S / b2;
                }
                if (!(B > 0.0)) throw NumericError("EM inner chain: non-positive effect precision");
                a = sample_truncnorm_pos((t - gam) / B, 1.0 / B, rng);

                if (sweep <= cfg.inner_burn_in || (sweep - cfg.inner_burn_in) % cfg.thin != 0) continue;
                st.a[i][rec] = a;
                acc[i].a += a;
                if (id == ModelId::ou_speed) {
                    acc[i].G2 += 0.5 * a * (xn * xn - x1 * x1);
                    acc[i].E1 += 0.5 * a * a * ps.ll;
                    acc[i].E2 -= a * a * ps.yl;
                } else {
                    acc[i].G2 += 0.5 * a * lr;
                    std::vector<double>& ys = st.ystar[i][rec];
                    ys.reserve(J * (cfg.bridge_steps - 1));
                    for (const BridgePath& bp : ub) ys.insert(ys.end(), bp.ystar.begin() + 1, bp.ystar.end() - 1);
                }
                if (cfg.keep_samples) st.samples[i][rec] = ub;
                ++rec;
            }
        },
        cfg.threads);

    const double inv_m = 1.0 / static_cast<double>(cfg.M);
    double asum = 0.0;
    for (const UnitAcc& x : acc) {
        st.G2 += x.G2 * inv_m;
        st.E1 += x.E1 * inv_m;
        st.E2 += x.E2 * inv_m;
        asum += x.a;
    }
    st.a_bar = asum * inv_m / static_cast<double>(N);
    return st;
}

double ou_speed_beta_hat(double C, double E2, double m) {
    if (!(m > 0.0)) throw NumericError("M-step: no transitions in the panel");
    const double disc = E2 * E2 + 8.0 * C * m;
    double beta = -1.0;
    if (disc >= 0.0) {
        const double r = std::sqrt(disc);
        if (E2 >= 0.0)
            beta = (E2 + r) > 0.0 ? 4.0 * C / (E2 + r) : -1.0;
        else
            beta = (-E2 + r) / (2.0 * m);
    }
    if (!(beta > 0.0) || !std::isfinite(beta))
        throw NumericError("M-step: a positive maximum does not exist (C=" + std::to_string(C) +
                           ", E2=" + std::to_string(E2) + ")");
    return beta;
}

double tdiff_qtilde(const EStepStats& st, const EmFixed& fx, const PanelData& data, double beta,
                    std::size_t threads) {
    if (st.ystar.size() != st.N) throw ConsistencyError("t-diffusion E-step statistics carry no paths");
    const double bb = beta * beta;
    std::vector<double> part(st.N, 0.0);
    parallel_for(
        st.N,
        [&](std::size_t i) {
            double s = 0.0;
            for (std::size_t r = 0; r < st.M; ++r) {
                double a = st.a[i][r];
                double S = tanh2_integral(st.ystar[i][r], st.steps, data.units[i].times, fx.asinh_obs[i], beta);
                s += (2.0 * a + a * a / bb + 0.75 * bb) * S;
            }
            part[i] = s;
        },
        threads);
    double total = 0.0;
    for (double v : part) total += v;
    return 0.5 * total / static_cast<double>(st.M);
}

namespace {

double tdiff_beta_objective(const EStepStats& st, const EmFixed& fx, const PanelData& data, double beta,
                            std::size_t threads) {
    const double m = static_cast<double>(fx.n_dot - fx.N);
    return -(fx.G1 + st.G2) / (beta * beta) + 0.25 * beta * beta * fx.span_sum - m * std::log(beta) -
           tdiff_qtilde(st, fx, data, beta, threads);
}

}  // namespace

double em_objective(ModelId id, const EStepStats& st, const EmFixed& fx, const PanelData& data,
                    const EmTheta& theta, std::size_t threads) {
    check_theta(theta);
    const double b = theta.beta;
    const double m = static_cast<double>(fx.n_dot - fx.N);
    const double gpart = static_cast<double>(fx.N) * (std::log(theta.gamma) - theta.gamma * st.a_bar);
    if (id == ModelId::ou_speed) {
        const double C = fx.G1 + st.G2 + st.E1;
        return -C / (b * b) + st.E2 / b - m * std::log(b) + gpart;
    }
    em_model(id);
    return tdiff_beta_objective(st, fx, data, b, threads) + gpart;
}

EmTheta mcem_mstep(ModelId id, const EStepStats& st, const EmFixed& fx, const PanelData& data,
                   const EmConfig& cfg) {
    em_model(id);
    if (!(st.a_bar > 0.0)) throw NumericError("M-step: mean effect is not positive");
    EmTheta out;
    out.gamma = 1.0 / st.a_bar;
    const double m = static_cast<double>(fx.n_dot - fx.N);
    if (id == ModelId::ou_speed) {
        out.beta = ou_speed_beta_hat(fx.G1 + st.G2 + st.E1, st.E2, m);
        return out;
    }
    if (!(cfg.beta_lo > 0.0) || !(cfg.beta_hi > cfg.beta_lo)) throw ConfigError("invalid beta search bracket");
    // golden-section search for the maximum
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    double lo = cfg.beta_lo, hi = cfg.beta_hi;
    double c = hi - g * (hi - lo), d = lo + g * (hi - lo);
    double fc = tdiff_beta_objective(st, fx, data, c, cfg.threads);
    double fd = tdiff_beta_objective(st, fx, data, d, cfg.threads);
    while (hi - lo > cfg.tol) {
        if (fc > fd) {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = tdiff_beta_objective(st, fx, data, c, cfg.threads);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = tdiff_beta_objective(st, fx, data, d, cfg.threads);
        }
    }
    out.beta = 0.5 * (lo + hi);
    return out;
}

EmState run_em(ModelId id, const PanelData& data, const EmTheta& init, const EmConfig& cfg,
               const EmCallback& on_iter) {
    em_model(id);
    data.validate();
    check_theta(init);
    EmState state;
    state.theta = init;
    state.M = cfg.M;
    if (cfg.iterations == 0) return state;
    const EmFixed fx = em_fixed(id, data);
    for (std::size_t k = 1; k <= cfg.iterations; ++k) {
        EStepStats st = mcem_estep(id, data, state.theta, cfg, k);
        state.theta = mcem_mstep(id, st, fx, data, cfg);
        state.k = k;
        state.trajectory.push_back(state.theta);
        if (on_iter) on_iter(state);
    }
    return state;
}

GaussianEffectsUpdate gaussian_effects_update(const std::vector<Vec>& draws) {
    if (draws.empty()) throw ConfigError("no effect draws");
    const Eigen::Index p = draws.front().size();
    Vec mean = Vec::Zero(p);
    for (const Vec& a : draws) mean += a;
    mean /= static_cast<double>(draws.size());
    Mat S = Mat::Zero(p, p);
    for (const Vec& a : draws) S += (a - mean) * (a - mean).transpose();
    S /= static_cast<double>(draws.size());
    Eigen::LLT<Mat> llt(S);
    if (llt.info() != Eigen::Success) throw NumericError("effect scatter matrix is singular");
    GaussianEffectsUpdate out;
    out.xi = mean;
    out.Gamma = llt.solve(Mat::Identity(p, p));
    return out;
}

GammaEffectsUpdate gamma_effects_update(double e_bar, double l_bar) {
    if (!(e_bar > 0.0)) throw DomainError("gamma update needs a positive mean");
    const double c = std::log(e_bar) - l_bar;
    if (!(c > 0.0)) throw NumericError("gamma update: degenerate effect draws");
    GammaEffectsUpdate out;
    out.kappa = solve_gamma_shape(c);
    out.delta = out.kappa / e_bar;
    return out;
}

}  // namespace sdemix
