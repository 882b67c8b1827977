#include <cmath>
#include <limits>
#include <numeric>

#include "sdemix/error.hpp"
#include "sdemix/functionals.hpp"
#include "sdemix/gibbs.hpp"
#include "sdemix/parallel.hpp"

namespace sdemix {
namespace {

constexpr std::uint64_t kMaster = 0xffffffffffffULL;
constexpr std::uint64_t kSiteBridge = 1;

const ModelSpec& builtin_ref(ModelId id) {
    static const ModelSpec ou = ou_speed_model();
    static const ModelSpec td = t_diffusion_model();
    static const ModelSpec lv = ou_level_model();
    switch (id) {
        case ModelId::ou_speed: return ou;
        case ModelId::t_diffusion: return td;
        case ModelId::ou_level: return lv;
    }
    return ou;
}

Effects scalar_effect(double a) {
    Effects e;
    e.a = Vec::Constant(1, a);
    e.b = Vec(0);
    return e;
}

double positive_draw(const std::function<double()>& draw, const char* what) {
    for (int k = 0; k < 100; ++k) {
        double v = draw();
        if (v > 0.0 && std::isfinite(v)) return v;
    }
    throw ConfigError(std::string("prior draw for ") + what + " violates the model constraints");
}

// shared by the t-diffusion a-step and F(beta)
std::vector<double> tanh2_all(const std::vector<UnitBridges>& bridges, double beta, std::size_t threads) {
    std::vector<double> S(bridges.size());
    parallel_for(bridges.size(), [&](std::size_t i) { S[i] = tanh2_integral(bridges[i], beta); }, threads);
    return S;
}

// Rejection draw with a truncation window where the target is within exp(-40)
// of its peak. Among a few gamma proposals (the given one and curvature-matched
// ones with inflated variance) the one with the best acceptance on the window,
// estimated on a grid, is used.
WgResult rejection_draw(const WeightedGamma& wg, Rng& rng) {
    constexpr int kGrid = 400;
    constexpr double kNegInf = -std::numeric_limits<double>::infinity();
    double mode = weighted_gamma_mode(wg);
    double h = 1e-3 * mode;
    double c = (wg.log_density(mode + h) - 2.0 * wg.log_density(mode) + wg.log_density(mode - h)) / (h * h);
    double sd = c < 0.0 && std::isfinite(c) ? 1.0 / std::sqrt(-c) : mode;
    double lo = std::max(1e-3 * mode, mode - 15.0 * sd), hi = mode + 30.0 * sd;
    std::vector<double> ld(kGrid + 1);
    double top = kNegInf;
    for (int k = 0; k <= kGrid; ++k) {
        ld[k] = wg.log_density(lo + (hi - lo) * k / kGrid);
        top = std::max(top, ld[k]);
    }
    int k0 = 0, k1 = kGrid;
    while (k0 < kGrid && !(ld[k0] > top - 40.0)) ++k0;
    while (k1 > 0 && !(ld[k1] > top - 40.0)) --k1;
    double step = (hi - lo) / kGrid;
    double tlo = std::max(lo, lo + (k0 - 1) * step), thi = std::min(hi, lo + (k1 + 1) * step);

    std::vector<WeightedGamma> cands{wg};
    if (c < 0.0 && std::isfinite(c))
        for (double f : {1.0, 1.5, 2.0, 4.0}) cands.push_back(match_curvature(wg, f));
    std::size_t best = 0;
    double best_acc = -1.0, best_logM = kNegInf;
    for (std::size_t q = 0; q < cands.size(); ++q) {
        const WeightedGamma& w = cands[q];
        double rate = w.proposal_rate();
        std::vector<double> lw(kGrid + 1), lp(kGrid + 1);
        double logM = kNegInf, pmax = kNegInf;
        for (int k = 0; k <= kGrid; ++k) {
            double e = tlo + (thi - tlo) * k / kGrid;
            lw[k] = w.log_weight(e);
            lp[k] = (w.shape - 1.0) * std::log(e) - rate * e;
            logM = std::max(logM, lw[k]);
            pmax = std::max(pmax, lp[k]);
        }
        double num = 0.0, den = 0.0;
        for (int k = 0; k <= kGrid; ++k) {
            double p = std::exp(lp[k] - pmax);
            num += p * std::exp(lw[k] - logM - 0.25);
            den += p;
        }
        double acc = num / den;
        if (acc > best_acc) {
            best_acc = acc;
            best = q;
            best_logM = logM;
        }
    }
    return sample_weighted_gamma_rejection(cands[best], best_logM + 0.25, tlo, thi, rng, 100000);
}

}  // namespace

void Diagnostics::merge(const Diagnostics& o) {
    bridges += o.bridges;
    bridge_attempts += o.bridge_attempts;
    bridge_mh_rejected += o.bridge_mh_rejected;
    wg_proposed += o.wg_proposed;
    wg_accepted += o.wg_accepted;
    wg_fallback += o.wg_fallback;
    wg_burnin_exact += o.wg_burnin_exact;
    rw_proposed += o.rw_proposed;
    rw_accepted += o.rw_accepted;
    rw_zero_windows += o.rw_zero_windows;
}

WgStrategy parse_wg_strategy(const std::string& s) {
    if (s == "mh") return WgStrategy::mh;
    if (s == "rejection") return WgStrategy::rejection;
    if (s == "approx") return WgStrategy::approx;
    throw ConfigError("unknown weighted-gamma strategy '" + s + "' (expected mh, rejection or approx)");
}

std::string to_string(WgStrategy s) {
    switch (s) {
        case WgStrategy::mh: return "mh";
        case WgStrategy::rejection: return "rejection";
        case WgStrategy::approx: return "approx";
    }
    return "?";
}

WgStrategy default_wg_strategy(ModelId id) {
    return id == ModelId::t_diffusion ? WgStrategy::mh : WgStrategy::approx;
}

void refresh_bridges(const ModelSpec& m, ChainState& s, const PanelData& data, const GibbsConfig& cfg,
                     std::uint64_t sweep, Diagnostics& diag) {
    const std::size_t N = data.size();
    Streams streams(cfg.seed);
    if (s.bridges.size() != N) s.bridges.assign(N, {});
    if (cfg.exact_bridges && s.geoms.size() != N) s.geoms.assign(N, {});
    const Params p = s.params();
    std::vector<Diagnostics> per(N);
    parallel_for(
        N,
        [&](std::size_t i) {
            Rng rng = streams.make(sweep, i, kSiteBridge);
            const UnitData& u = data.units[i];
            const Effects& e = s.effects[i];
            UnitBridges& ub = s.bridges[i];
            const std::size_t J = u.size() - 1;
            bool fresh = ub.size() != J;
            if (fresh) ub.assign(J, BridgePath{});
            if (cfg.exact_bridges && s.geoms[i].size() != J) {
                s.geoms[i].assign(J, GeomVar{});
                fresh = true;
            }
            for (std::size_t j = 0; j < J; ++j) {
                BridgePath prop = simulate_bridge_approx(m, p, e, u.times[j], u.values[j], u.times[j + 1],
                                                         u.values[j + 1], cfg.bridge_steps, rng, cfg.bridge);
                per[i].bridges += 1;
                per[i].bridge_attempts += prop.attempts;
                if (!cfg.exact_bridges) {
                    ub[j] = std::move(prop);
                    continue;
                }
                // no geometric variable before the effects have seen the data once
                if (fresh || s.iter == 0) {
                    ub[j] = std::move(prop);
                    s.geoms[i][j] = GeomVar{0};
                    continue;
                }
                GeomVar sp = draw_geom_var(m, p, e, prop, rng, cfg.bridge);
                GeomVar sprev = s.geoms[i][j];
                bool accept = sprev.s == 0 || sp.s >= sprev.s ||
                              rng.uniform() < static_cast<double>(sp.s) / static_cast<double>(sprev.s);
                if (accept) {
                    ub[j] = std::move(prop);
                    s.geoms[i][j] = sp;
                } else {
                    rebase(m, p.beta, e.b, ub[j]);
                    per[i].bridge_mh_rejected += 1;
                }
            }
        },
        cfg.threads);
    for (const auto& d : per) diag.merge(d);
}

WgResult draw_eta(const WeightedGamma& wg_in, WgStrategy strategy, double current_eta, const GibbsConfig& cfg,
                  Rng& rng, bool burn_in) {
    const WeightedGamma wg = cfg.wg_recentre ? recentre(wg_in) : wg_in;
    if (burn_in && strategy == WgStrategy::mh &&
        wg_in.log_density(weighted_gamma_mode(wg_in)) - wg_in.log_density(current_eta) > kStrandedLogGap) {
        WgResult r = rejection_draw(wg, rng);
        r.full_branch = wg_in.full_branch();
        r.exact_escape = true;
        return r;
    }
    WgResult r = draw_eta_raw(wg, strategy, current_eta, cfg, rng);
    r.full_branch = wg_in.full_branch();
    return r;
}

WgResult draw_eta_raw(const WeightedGamma& wg, WgStrategy strategy, double current_eta, const GibbsConfig& cfg,
                      Rng& rng) {
    switch (strategy) {
        case WgStrategy::mh: return sample_weighted_gamma_mh(wg, current_eta, rng);
        case WgStrategy::approx: return sample_weighted_gamma_approx(wg, cfg.wg_K, rng);
        case WgStrategy::rejection: return rejection_draw(wg, rng);
    }
    throw ConfigError("unknown weighted-gamma strategy");
}

std::vector<std::string> trace_columns(ModelId id) {
    if (id == ModelId::ou_level) return {"alpha", "beta", "xi", "sigma"};
    return {"beta", "gamma"};
}

std::vector<double> trace_row(ModelId id, const ChainState& s) {
    if (id == ModelId::ou_level) return {s.alpha[0], s.beta[0], s.xi[0], 1.0 / std::sqrt(s.gamma[0])};
    return {s.beta[0], s.gamma[0]};
}

ChainState gibbs_init(ModelId id, const PanelData& data, const PriorSpec& pr, const GibbsConfig& cfg,
                      Diagnostics& diag) {
    data.validate();
    pr.validate();
    if (cfg.bridge_steps < 1) throw ConfigError("bridge_steps must be >= 1");
    const std::size_t N = data.size();
    Rng rng = Streams(cfg.seed).make(0, kMaster, 0);
    ChainState s;
    s.effects.resize(N);
    if (id == ModelId::ou_level) {
        const auto& l = pr.neuronal;
        auto expo = [&](double rate, const char* what) {
            if (!(rate > 0.0)) throw ConfigError(std::string("initial ") + what + " needs a positive prior rate or an explicit value");
            return positive_draw([&] { return rng.exponential(rate); }, what);
        };
        double alpha = cfg.init_alpha ? *cfg.init_alpha : expo(l[0], "alpha");
        double beta = cfg.init_beta ? *cfg.init_beta : 1.0 / std::sqrt(expo(l[1], "eta"));
        double xi = cfg.init_xi ? *cfg.init_xi : expo(l[2], "xi");
        double gam = cfg.init_gamma ? *cfg.init_gamma : expo(l[3], "gamma");
        s.alpha = Vec::Constant(1, alpha);
        s.beta = Vec::Constant(1, beta);
        s.xi = Vec::Constant(1, xi);
        s.gamma = Vec::Constant(1, gam);
        for (std::size_t i = 0; i < N; ++i) s.effects[i] = scalar_effect(xi + rng.normal() / std::sqrt(gam));
    } else {
        if (!pr.effects_rate) throw ConfigError("model needs a gamma prior on the effect rate");
        double beta = cfg.init_beta ? *cfg.init_beta
                                    : 1.0 / std::sqrt(positive_draw([&] { return rng.gamma(pr.eta.shape, pr.eta.rate); }, "eta"));
        double gam = cfg.init_gamma ? *cfg.init_gamma
                                    : positive_draw([&] { return rng.gamma(pr.effects_rate->shape, pr.effects_rate->rate); }, "gamma");
        if (!(beta > 0.0) || !(gam > 0.0)) throw ConfigError("initial beta and gamma must be positive");
        s.alpha = Vec(0);
        s.beta = Vec::Constant(1, beta);
        s.gamma = Vec::Constant(1, gam);
        for (std::size_t i = 0; i < N; ++i)
            s.effects[i] = scalar_effect(positive_draw([&] { return rng.exponential(gam); }, "a"));
    }
    refresh_bridges(builtin_ref(id), s, data, cfg, 0, diag);
    s.iter = 0;
    return s;
}

void exp_effects_sweep(ModelId id, ChainState& s, const PanelData& data, const PriorSpec& pr,
                       const GibbsConfig& cfg, Diagnostics& diag) {
    if (id == ModelId::ou_level) throw ConfigError("exp_effects_sweep: ou-level uses neuronal_sweep");
    const std::uint64_t sweep = s.iter + 1;
    refresh_bridges(builtin_ref(id), s, data, cfg, sweep, diag);
    Rng rng = Streams(cfg.seed).make(sweep, kMaster, 0);

    const std::size_t N = data.size();
    const double beta = s.beta[0], b2 = beta * beta, gam = s.gamma[0];
    const bool tdiff = id == ModelId::t_diffusion;

    std::vector<UnitPathSums> sums;
    std::vector<double> S;
    if (tdiff) S = tanh2_all(s.bridges, beta, cfg.threads);
    else {
        sums.resize(N);
        for (std::size_t i = 0; i < N; ++i) sums[i] = ou_path_sums(s.bridges[i]);
    }

    // effects
    double asum = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        const UnitData& u = data.units[i];
        double x1 = u.values.front(), xn = u.values.back();
        double span = u.times.back() - u.times.front();
        double t, B;
        if (tdiff) {
            double lr = std::log1p(xn * xn) - std::log1p(x1 * x1);
            t = -lr / (2.0 * b2) + 0.5 * span - S[i];
            B = S[i] / b2;
        } else {
            t = -(xn * xn - x1 * x1) / (2.0 * b2) + 0.5 * span;
            B = sums[i].yy + 2.0 * sums[i].yl / beta + sums[i].ll / b2;
        }
        double a = sample_truncnorm_pos((t - gam) / B, 1.0 / B, rng);
        s.effects[i].a[0] = a;
        asum += a;
    }

    // eta
    const double G1 = data_G1(id, data);
    const double shape = 0.5 * static_cast<double>(data.total_obs() - N) + pr.eta.shape;
    WeightedGamma wg;
    wg.shape = shape;
    double G2 = 0.0;
    if (tdiff) {
        std::vector<double> av(N), spans(N);
        for (std::size_t i = 0; i < N; ++i) {
            const UnitData& u = data.units[i];
            double x1 = u.values.front(), xn = u.values.back();
            av[i] = s.effects[i].a[0];
            spans[i] = u.times.back() - u.times.front();
            G2 += 0.5 * av[i] * (std::log1p(xn * xn) - std::log1p(x1 * x1));
        }
        wg.rate_pos = pr.eta.rate + G1;
        wg.rate_signed = G2;
        wg.F = [&, av, spans](double bt) {
            std::vector<double> Sb = bt == beta ? S : tanh2_all(s.bridges, bt, cfg.threads);
            double f = 0.0, bb = bt * bt;
            for (std::size_t i = 0; i < N; ++i)
                f -= 0.5 * ((av[i] * av[i] / bb + 2.0 * av[i] + 0.75 * bb) * Sb[i] - (av[i] + 0.5 * bb) * spans[i]);
            return f;
        };
    } else {
        double E1 = 0.0, E2 = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            const UnitData& u = data.units[i];
            double x1 = u.values.front(), xn = u.values.back(), a = s.effects[i].a[0];
            G2 += 0.5 * a * (xn * xn - x1 * x1);
            E1 += 0.5 * a * a * sums[i].ll;
            E2 -= a * a * sums[i].yl;
        }
        wg.rate_pos = pr.eta.rate + G1 + E1;
        wg.rate_signed = G2;
        wg.F = [E2](double bt) { return E2 / bt; };
    }
    WgStrategy strat = cfg.wg_strategy ? *cfg.wg_strategy : default_wg_strategy(id);
    WgResult r = draw_eta(wg, strat, 1.0 / b2, cfg, rng, sweep <= cfg.burn_in);
    diag.wg_proposed += r.tries;
    diag.wg_accepted += r.accepted ? 1 : 0;
    diag.wg_fallback += r.full_branch ? 0 : 1;
    diag.wg_burnin_exact += r.exact_escape ? 1 : 0;
    s.beta[0] = 1.0 / std::sqrt(r.eta);

    // gamma
    s.gamma[0] = sample_gamma_posterior(pr.effects_rate->shape, pr.effects_rate->rate, asum, N, rng);
    s.iter = sweep;
}

void neuronal_sweep(ChainState& s, const PanelData& data, const PriorSpec& pr, const GibbsConfig& cfg,
                    Diagnostics& diag) {
    const std::uint64_t sweep = s.iter + 1;
    refresh_bridges(builtin_ref(ModelId::ou_level), s, data, cfg, sweep, diag);
    Rng rng = Streams(cfg.seed).make(sweep, kMaster, 0);
    const auto& lam = pr.neuronal;
    const std::size_t N = data.size();
    const double beta = s.beta[0], b2 = beta * beta;

    std::vector<UnitPathSums> sums(N);
    std::vector<double> span(N), x1(N), xn(N);
    for (std::size_t i = 0; i < N; ++i) {
        sums[i] = ou_path_sums(s.bridges[i]);
        const UnitData& u = data.units[i];
        span[i] = u.times.back() - u.times.front();
        x1[i] = u.values.front();
        xn[i] = u.values.back();
    }

    // a
    double al = s.alpha[0], xi = s.xi[0], gam = s.gamma[0];
    for (std::size_t i = 0; i < N; ++i) {
        double intY = sums[i].y + sums[i].l / beta;
        double t = (xn[i] - x1[i]) / b2 + al / beta * intY;
        double B = span[i] / b2;
        double prec = B + gam;
        s.effects[i].a[0] = (t + xi * gam) / prec + rng.normal() / std::sqrt(prec);
    }

    // alpha
    double v = 0.0, D = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        double a = s.effects[i].a[0];
        double intY = sums[i].y + sums[i].l / beta;
        v += 0.5 * (x1[i] * x1[i] - xn[i] * xn[i]) / b2 + 0.5 * span[i] + a / beta * intY;
        D += sums[i].yy + 2.0 * sums[i].yl / beta + sums[i].ll / b2;
    }
    al = sample_truncnorm_pos((v - lam[0]) / D, 1.0 / D, rng);
    s.alpha[0] = al;

    // eta
    double G1 = data_G1(ModelId::ou_level, data), G2 = 0.0, E1 = 0.0, E2 = 0.0, E3 = 0.0, asum = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        double a = s.effects[i].a[0];
        asum += a;
        G2 += 0.5 * al * (xn[i] * xn[i] - x1[i] * x1[i]) - a * (xn[i] - x1[i]);
        E1 += 0.5 * (a * a * span[i] + al * al * sums[i].ll);
        E2 += al * a * sums[i].y - al * al * sums[i].yl;
        E3 -= al * a * sums[i].l;
    }
    WeightedGamma wg;
    wg.shape = 0.5 * static_cast<double>(data.total_obs() - N) + 1.0;
    wg.rate_pos = lam[1] + G1 + E1;
    wg.rate_signed = G2 + E3;
    wg.F = [E2](double bt) { return E2 / bt; };
    WgStrategy strat = cfg.wg_strategy ? *cfg.wg_strategy : default_wg_strategy(ModelId::ou_level);
    WgResult r = draw_eta(wg, strat, 1.0 / b2, cfg, rng, sweep <= cfg.burn_in);
    diag.wg_proposed += r.tries;
    diag.wg_accepted += r.accepted ? 1 : 0;
    diag.wg_fallback += r.full_branch ? 0 : 1;
    diag.wg_burnin_exact += r.exact_escape ? 1 : 0;
    s.beta[0] = 1.0 / std::sqrt(r.eta);

    // xi
    double n = static_cast<double>(N);
    xi = sample_truncnorm_pos(asum / n - lam[2] / (gam * n), 1.0 / (gam * n), rng);
    s.xi[0] = xi;

    // gamma
    double ss = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        double d = s.effects[i].a[0] - xi;
        ss += d * d;
    }
    s.gamma[0] = rng.gamma(0.5 * n + 1.0, lam[3] + 0.5 * ss);
    s.iter = sweep;
}

void gibbs_sweep(ModelId id, ChainState& s, const PanelData& data, const PriorSpec& pr, const GibbsConfig& cfg,
                 Diagnostics& diag) {
    if (id == ModelId::ou_level) neuronal_sweep(s, data, pr, cfg, diag);
    else exp_effects_sweep(id, s, data, pr, cfg, diag);
}

DrawTrace run_chain(ModelId id, const PanelData& data, const PriorSpec& pr, const GibbsConfig& cfg,
                    const TraceCallback& on_sweep) {
    if (cfg.iterations < 1) throw ConfigError("iterations must be >= 1");
    DrawTrace tr;
    tr.columns = trace_columns(id);
    if (cfg.save_effects) {
        for (std::size_t i = 0; i < data.size(); ++i)
            tr.effect_columns.push_back("a_" + (i < data.unit_ids.size() ? data.unit_ids[i] : std::to_string(i + 1)));
    }
    ChainState s = gibbs_init(id, data, pr, cfg, tr.diag);
    tr.rows.reserve(cfg.iterations);
    for (std::size_t it = 0; it < cfg.iterations; ++it) {
        gibbs_sweep(id, s, data, pr, cfg, tr.diag);
        tr.rows.push_back(trace_row(id, s));
        if (cfg.save_effects) {
            std::vector<double> row(data.size());
            for (std::size_t i = 0; i < data.size(); ++i) row[i] = s.effects[i].a[0];
            tr.effect_rows.push_back(std::move(row));
        }
        if (on_sweep) on_sweep(s);
    }
    return tr;
}

}  // namespace sdemix
