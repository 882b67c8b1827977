#include <cmath>
#include <limits>

#include "sdemix/error.hpp"
#include "sdemix/gibbs.hpp"
#include "sdemix/parallel.hpp"

namespace sdemix {
namespace {

constexpr std::uint64_t kMaster = 0xffffffffffffULL;
constexpr std::uint64_t kSiteEffects = 2;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double& coord(Theta& th, std::size_t c) {
    auto na = static_cast<std::size_t>(th.alpha.size()), nb = static_cast<std::size_t>(th.beta.size());
    if (c < na) return th.alpha[static_cast<Eigen::Index>(c)];
    if (c < na + nb) return th.beta[static_cast<Eigen::Index>(c - na)];
    return th.gamma[static_cast<Eigen::Index>(c - na - nb)];
}

double& effect_coord(Effects& e, std::size_t c) {
    auto na = static_cast<std::size_t>(e.a.size());
    if (c < na) return e.a[static_cast<Eigen::Index>(c)];
    return e.b[static_cast<Eigen::Index>(c - na)];
}

std::vector<double> unit_logliks(const GeneralModel& g, const Theta& th, const ChainState& s, const PanelData& data,
                                 std::size_t threads) {
    std::vector<double> ll(data.size());
    Params p{th.alpha, th.beta};
    parallel_for(
        data.size(), [&](std::size_t i) { ll[i] = loglik_unit(g.model, p, s.effects[i], data.units[i], s.bridges[i]); },
        threads);
    return ll;
}

double sum(const std::vector<double>& v) {
    double r = 0.0;
    for (double x : v) r += x;
    return r;
}

double effect_sum(const GeneralModel& g, const Theta& th, const ChainState& s) {
    double r = 0.0;
    for (const auto& e : s.effects) r += g.log_effect_density(th, e);
    return r;
}

double initial_scale(double v) { return 0.1 * std::max(std::fabs(v), 0.1); }

}  // namespace

bool rw_accept(double log_target_current, double log_target_proposal, Rng& rng) {
    if (!(log_target_proposal > kNegInf)) return false;
    double d = log_target_proposal - log_target_current;
    return d >= 0.0 || rng.uniform() < std::exp(d);
}

GeneralModel ou_speed_general(const PriorSpec& pr) {
    if (!pr.effects_rate) throw ConfigError("ou-speed general model needs a gamma prior on the effect rate");
    GeneralModel g;
    g.model = ou_speed_model();
    g.names = {"beta", "gamma"};
    const double kappa = pr.eta.shape, delta = pr.eta.rate;
    const double nu = pr.effects_rate->shape, lam = pr.effects_rate->rate;
    g.log_prior = [=](const Theta& th) {
        double b = th.beta[0], gm = th.gamma[0];
        if (!(b > 0.0) || !(gm > 0.0)) return kNegInf;
        double eta = 1.0 / (b * b);
        return (kappa - 1.0) * std::log(eta) - delta * eta + std::log(2.0) - 3.0 * std::log(b) +
               (nu - 1.0) * std::log(gm) - lam * gm;
    };
    g.log_effect_density = [](const Theta& th, const Effects& e) {
        double a = e.a[0], gm = th.gamma[0];
        if (!(a > 0.0)) return kNegInf;
        return std::log(gm) - gm * a;
    };
    g.draw_prior = [=](Rng& rng) {
        Theta th;
        th.alpha = Vec(0);
        th.beta = Vec::Constant(1, 1.0 / std::sqrt(rng.gamma(kappa, delta)));
        th.gamma = Vec::Constant(1, rng.gamma(nu, lam));
        return th;
    };
    g.draw_effects = [](const Theta& th, Rng& rng) {
        Effects e;
        e.a = Vec::Constant(1, rng.exponential(th.gamma[0]));
        e.b = Vec(0);
        return e;
    };
    return g;
}

Theta theta_of(const ChainState& s) { return Theta{s.alpha, s.beta, s.gamma}; }

double log_target_theta(const GeneralModel& g, const Theta& th, const ChainState& s, const PanelData& data,
                        std::size_t threads) {
    double lp = g.log_prior(th);
    if (!(lp > kNegInf)) return kNegInf;
    return lp + sum(unit_logliks(g, th, s, data, threads)) + effect_sum(g, th, s);
}

GeneralState gibbs_init_general(const GeneralModel& g, const PanelData& data, const GibbsConfig& cfg,
                                Diagnostics& diag) {
    data.validate();
    Rng rng = Streams(cfg.seed).make(0, kMaster, 0);
    Theta th = g.draw_prior(rng);
    if (cfg.init_beta && th.beta.size() > 0) th.beta[0] = *cfg.init_beta;
    if (cfg.init_gamma && th.gamma.size() > 0) th.gamma[0] = *cfg.init_gamma;
    if (cfg.init_alpha && th.alpha.size() > 0) th.alpha.setConstant(*cfg.init_alpha);
    if (!(g.log_prior(th) > kNegInf)) throw ConfigError("initial parameters outside the prior support");
    GeneralState gs;
    ChainState& s = gs.chain;
    s.alpha = th.alpha;
    s.beta = th.beta;
    s.gamma = th.gamma;
    for (std::size_t i = 0; i < data.size(); ++i) s.effects.push_back(g.draw_effects(th, rng));
    refresh_bridges(g.model, s, data, cfg, 0, diag);

    const std::size_t nt = static_cast<std::size_t>(th.alpha.size() + th.beta.size() + th.gamma.size());
    gs.theta_scale = Vec(static_cast<Eigen::Index>(nt));
    for (std::size_t c = 0; c < nt; ++c) gs.theta_scale[static_cast<Eigen::Index>(c)] = initial_scale(coord(th, c));
    gs.theta_acc = Vec::Zero(static_cast<Eigen::Index>(nt));
    gs.theta_tries = Vec::Zero(static_cast<Eigen::Index>(nt));
    for (auto& e : s.effects) {
        Eigen::Index ne = e.a.size() + e.b.size();
        Vec sc(ne);
        for (Eigen::Index c = 0; c < ne; ++c) sc[c] = initial_scale(effect_coord(e, static_cast<std::size_t>(c)));
        gs.effect_scale.push_back(sc);
        gs.effect_acc.push_back(Vec::Zero(ne));
        gs.effect_tries.push_back(Vec::Zero(ne));
    }
    return gs;
}

void gibbs_sweep_general(GeneralState& gs, const GeneralModel& g, const PanelData& data, const GibbsConfig& cfg,
                         Diagnostics& diag) {
    ChainState& s = gs.chain;
    const std::uint64_t sweep = s.iter + 1;
    Streams streams(cfg.seed);
    Rng rng = streams.make(sweep, kMaster, 0);
    const std::size_t N = data.size();

    // theta given effects and Y*
    Theta th = theta_of(s);
    std::vector<double> ll = unit_logliks(g, th, s, data, cfg.threads);
    double eff = effect_sum(g, th, s);
    double cur = g.log_prior(th) + sum(ll) + eff;
    const std::size_t n_lik = static_cast<std::size_t>(th.alpha.size() + th.beta.size());
    for (Eigen::Index c = 0; c < gs.theta_scale.size(); ++c) {
        Theta prop = th;
        coord(prop, static_cast<std::size_t>(c)) += gs.theta_scale[c] * rng.normal();
        diag.rw_proposed += 1;
        gs.theta_tries[c] += 1;
        double lp = g.log_prior(prop);
        if (!(lp > kNegInf)) {
            rng.uniform();
            continue;
        }
        std::vector<double> ll_new = static_cast<std::size_t>(c) < n_lik ? unit_logliks(g, prop, s, data, cfg.threads) : ll;
        double eff_new = effect_sum(g, prop, s);
        double tgt = lp + sum(ll_new) + eff_new;
        if (rw_accept(cur, tgt, rng)) {
            th = prop;
            ll = std::move(ll_new);
            eff = eff_new;
            cur = tgt;
            diag.rw_accepted += 1;
            gs.theta_acc[c] += 1;
        }
    }
    s.alpha = th.alpha;
    s.beta = th.beta;
    s.gamma = th.gamma;

    // effects given theta and Y*
    const Params p{th.alpha, th.beta};
    std::vector<Diagnostics> per(N);
    parallel_for(
        N,
        [&](std::size_t i) {
            Rng r = streams.make(sweep, i, kSiteEffects);
            Effects& e = s.effects[i];
            double cur_i = ll[i] + g.log_effect_density(th, e);
            for (Eigen::Index c = 0; c < gs.effect_scale[i].size(); ++c) {
                Effects prop = e;
                effect_coord(prop, static_cast<std::size_t>(c)) += gs.effect_scale[i][c] * r.normal();
                per[i].rw_proposed += 1;
                gs.effect_tries[i][c] += 1;
                double le = g.log_effect_density(th, prop);
                if (!(le > kNegInf)) {
                    r.uniform();
                    continue;
                }
                double tgt = loglik_unit(g.model, p, prop, data.units[i], s.bridges[i]) + le;
                if (rw_accept(cur_i, tgt, r)) {
                    e = prop;
                    cur_i = tgt;
                    per[i].rw_accepted += 1;
                    gs.effect_acc[i][c] += 1;
                }
            }
        },
        cfg.threads);
    for (const auto& d : per) diag.merge(d);

    // Y*
    refresh_bridges(g.model, s, data, cfg, sweep, diag);

    // adaptation toward 0.3 acceptance during burn-in
    if (cfg.adapt_window > 0 && sweep % cfg.adapt_window == 0) {
        bool adapt = sweep <= cfg.burn_in;
        auto step = [&](Vec& scale, Vec& acc, Vec& tries) {
            for (Eigen::Index c = 0; c < scale.size(); ++c) {
                if (tries[c] <= 0) continue;
                double rate = acc[c] / tries[c];
                if (acc[c] == 0) diag.rw_zero_windows += 1;
                if (adapt) scale[c] *= std::exp(2.0 * (rate - 0.3));
            }
            acc.setZero();
            tries.setZero();
        };
        step(gs.theta_scale, gs.theta_acc, gs.theta_tries);
        for (std::size_t i = 0; i < N; ++i) step(gs.effect_scale[i], gs.effect_acc[i], gs.effect_tries[i]);
    }
    s.iter = sweep;
}

DrawTrace run_chain_general(const GeneralModel& g, const PanelData& data, const GibbsConfig& cfg) {
    if (cfg.iterations < 1) throw ConfigError("iterations must be >= 1");
    DrawTrace tr;
    tr.columns = g.names;
    GeneralState gs = gibbs_init_general(g, data, cfg, tr.diag);
    for (std::size_t it = 0; it < cfg.iterations; ++it) {
        gibbs_sweep_general(gs, g, data, cfg, tr.diag);
        Theta th = theta_of(gs.chain);
        std::vector<double> row;
        const std::size_t nt = static_cast<std::size_t>(gs.theta_scale.size());
        for (std::size_t c = 0; c < nt; ++c) row.push_back(coord(th, c));
        tr.rows.push_back(std::move(row));
    }
    return tr;
}

}  // namespace sdemix
