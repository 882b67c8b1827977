#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include <boost/math/special_functions/gamma.hpp>

#include "sdemix/error.hpp"
#include "sdemix/gibbs.hpp"
#include "sdemix/likelihood.hpp"
#include "sdemix/synth.hpp"
#include "test_models.hpp"

using namespace sdemix;
using namespace sdemix::testing;

namespace {

PanelData small_panel(ModelId id, std::size_t N, std::size_t n, double dt, std::uint64_t seed) {
    return synth_generate(id, default_truth(id), N, n, dt, seed).data;
}

// survival form, accurate deep in the truncated tail
double truncnorm_cdf(double x, double mean, double var) {
    double s = std::sqrt(var * 2.0);
    return 1.0 - std::erfc((x - mean) / s) / std::erfc(-mean / s);
}

double gamma_cdf(double x, double shape, double rate) { return boost::math::gamma_p(shape, rate * x); }

// Numeric CDF at eta_x of exp(logt(eta)) on (0, inf).
double numeric_cdf(const std::function<double(double)>& logt, double eta_x) {
    double best = -INFINITY, arg = 1.0;
    for (int k = 0; k <= 400; ++k) {
        double e = std::exp(std::log(1e-3) + (std::log(1e5) - std::log(1e-3)) * k / 400.0);
        double v = logt(e);
        if (v > best) {
            best = v;
            arg = e;
        }
    }
    double lo = arg, hi = arg;
    while (logt(lo) > best - 40.0 && lo > 1e-8) lo *= 0.97;
    while (logt(hi) > best - 40.0) hi *= 1.03;
    const int n = 1500;
    double h = (hi - lo) / n, total = 0.0, below = 0.0, prev = std::exp(logt(lo) - best);
    for (int k = 1; k <= n; ++k) {
        double x0 = lo + (k - 1) * h, x1 = lo + k * h;
        double cur = std::exp(logt(x1) - best);
        double w = 0.5 * (prev + cur) * h;
        total += w;
        if (x1 <= eta_x) below += w;
        else if (x0 < eta_x) below += w * (eta_x - x0) / h;
        prev = cur;
    }
    return below / total;
}

double eta_logtarget(const ModelSpec& m, const ChainState& s, const PanelData& data, const GammaPrior& prior,
                     double eta) {
    Params p{s.alpha, Vec::Constant(1, 1.0 / std::sqrt(eta))};
    double lt = (prior.shape - 1.0) * std::log(eta) - prior.rate * eta;
    for (std::size_t i = 0; i < data.size(); ++i) lt += loglik_unit(m, p, s.effects[i], data.units[i], s.bridges[i]);
    return lt;
}

struct Pits {
    std::vector<double> a, alpha, eta, xi, gamma;
};

void check_uniform(const std::vector<double>& u, const std::string& what) {
    double d = ks_statistic(u, [](double x) { return std::clamp(x, 0.0, 1.0); });
    INFO(what << " ks=" << d << " crit=" << ks_critical_01(u.size()));
    CHECK(d < ks_critical_01(u.size()));
}

}  // namespace

TEST_CASE("gibbs init: explicit values, effects and bridges") {
    PanelData data = small_panel(ModelId::ou_speed, 4, 6, 1.0, 3);
    PriorSpec pr = default_priors(ModelId::ou_speed);
    GibbsConfig cfg;
    cfg.seed = 11;
    cfg.bridge_steps = 10;
    cfg.init_beta = 0.7;
    cfg.init_gamma = 2.5;
    Diagnostics diag;
    ChainState s = gibbs_init(ModelId::ou_speed, data, pr, cfg, diag);
    CHECK(s.beta[0] == 0.7);
    CHECK(s.gamma[0] == 2.5);
    REQUIRE(s.effects.size() == 4);
    REQUIRE(s.bridges.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(s.effects[i].a[0] > 0.0);
        REQUIRE(s.bridges[i].size() == 5);
        for (std::size_t j = 0; j < 5; ++j) {
            const BridgePath& b = s.bridges[i][j];
            CHECK(b.values.front() == data.units[i].values[j]);
            CHECK(b.values.back() == data.units[i].values[j + 1]);
            CHECK(b.t1 == data.units[i].times[j]);
            CHECK(b.steps() == 10);
        }
    }
    CHECK(diag.bridges == 20);
    CHECK(s.iter == 0);
}

TEST_CASE("gibbs init: prior draws are positive and seed-determined") {
    PanelData data = small_panel(ModelId::ou_level, 3, 8, 0.01, 5);
    PriorSpec pr = default_priors(ModelId::ou_level);
    GibbsConfig cfg;
    cfg.seed = 4;
    cfg.bridge_steps = 8;
    Diagnostics d1, d2;
    ChainState s1 = gibbs_init(ModelId::ou_level, data, pr, cfg, d1);
    ChainState s2 = gibbs_init(ModelId::ou_level, data, pr, cfg, d2);
    CHECK(s1.alpha[0] > 0.0);
    CHECK(s1.beta[0] > 0.0);
    CHECK(s1.xi[0] > 0.0);
    CHECK(s1.gamma[0] > 0.0);
    CHECK(s1.alpha[0] == s2.alpha[0]);
    CHECK(s1.effects[2].a[0] == s2.effects[2].a[0]);
    CHECK(s1.bridges[1][3].values == s2.bridges[1][3].values);
}

TEST_CASE("gibbs: trace columns and rows") {
    CHECK(trace_columns(ModelId::ou_speed) == std::vector<std::string>{"beta", "gamma"});
    CHECK(trace_columns(ModelId::t_diffusion) == std::vector<std::string>{"beta", "gamma"});
    CHECK(trace_columns(ModelId::ou_level) == std::vector<std::string>{"alpha", "beta", "xi", "sigma"});

    PanelData data = small_panel(ModelId::ou_speed, 3, 4, 1.0, 8);
    PriorSpec pr = default_priors(ModelId::ou_speed);
    GibbsConfig cfg;
    cfg.seed = 2;
    cfg.bridge_steps = 10;
    cfg.iterations = 1;
    cfg.save_effects = true;
    DrawTrace tr = run_chain(ModelId::ou_speed, data, pr, cfg);
    REQUIRE(tr.rows.size() == 1);
    CHECK(tr.rows[0].size() == 2);
    REQUIRE(tr.effect_columns.size() == 3);
    CHECK(tr.effect_columns[0] == "a_" + data.unit_ids[0]);
    REQUIRE(tr.effect_rows.size() == 1);
    for (double a : tr.effect_rows[0]) CHECK(a > 0.0);
    CHECK(tr.diag.wg_proposed == 1);

    cfg.iterations = 0;
    CHECK_THROWS_AS(run_chain(ModelId::ou_speed, data, pr, cfg), ConfigError);
}

TEST_CASE("gibbs: positivity along a chain") {
    PanelData data = small_panel(ModelId::t_diffusion, 4, 6, 1.0, 9);
    PriorSpec pr = default_priors(ModelId::t_diffusion);
    GibbsConfig cfg;
    cfg.seed = 6;
    cfg.bridge_steps = 10;
    cfg.iterations = 40;
    bool ok = true;
    DrawTrace tr = run_chain(ModelId::t_diffusion, data, pr, cfg, [&](const ChainState& s) {
        ok = ok && s.beta[0] > 0.0 && s.gamma[0] > 0.0;
        for (const auto& e : s.effects) ok = ok && e.a[0] > 0.0;
    });
    CHECK(ok);
    CHECK(tr.rows.size() == 40);
}

TEST_CASE("gibbs: stranded MH start escapes during burn-in only") {
    PanelData data = small_panel(ModelId::t_diffusion, 8, 30, 1.0, 4);
    PriorSpec pr = default_priors(ModelId::t_diffusion);
    GibbsConfig cfg;
    cfg.seed = 3;
    cfg.bridge_steps = 10;
    cfg.iterations = 6;
    cfg.wg_strategy = WgStrategy::mh;
    cfg.init_beta = 5.0;
    cfg.init_gamma = 1.0;
    cfg.burn_in = 0;
    DrawTrace stuck = run_chain(ModelId::t_diffusion, data, pr, cfg);
    CHECK(stuck.diag.wg_burnin_exact == 0);
    CHECK(stuck.rows.back()[0] == 5.0);

    cfg.burn_in = 3;
    DrawTrace tr = run_chain(ModelId::t_diffusion, data, pr, cfg);
    CHECK(tr.diag.wg_burnin_exact >= 1);
    CHECK(tr.diag.wg_burnin_exact <= 3);
    CHECK(tr.rows.back()[0] < 1.0);
}

TEST_CASE("gibbs: identical traces for any thread count") {
    for (ModelId id : {ModelId::ou_speed, ModelId::t_diffusion, ModelId::ou_level}) {
        PanelData data = id == ModelId::ou_level ? small_panel(id, 6, 10, 0.01, 12) : small_panel(id, 6, 5, 1.0, 12);
        PriorSpec pr = default_priors(id);
        GibbsConfig cfg;
        cfg.seed = 21;
        cfg.bridge_steps = 10;
        cfg.iterations = 15;
        cfg.save_effects = true;
        cfg.threads = 1;
        DrawTrace a = run_chain(id, data, pr, cfg);
        cfg.threads = 3;
        DrawTrace b = run_chain(id, data, pr, cfg);
        CHECK(a.rows == b.rows);
        CHECK(a.effect_rows == b.effect_rows);
        CHECK(a.diag.bridge_attempts == b.diag.bridge_attempts);
    }
}

TEST_CASE("gibbs: exact bridge mode runs the pseudo-marginal step") {
    PanelData data = small_panel(ModelId::ou_speed, 3, 4, 1.0, 14);
    PriorSpec pr = default_priors(ModelId::ou_speed);
    GibbsConfig cfg;
    cfg.seed = 3;
    cfg.bridge_steps = 10;
    cfg.iterations = 30;
    cfg.exact_bridges = true;
    cfg.init_beta = 1.0;
    cfg.init_gamma = 1.0;
    DrawTrace tr = run_chain(ModelId::ou_speed, data, pr, cfg);
    CHECK(tr.rows.size() == 30);
    CHECK(tr.diag.bridge_mh_rejected > 0);
    CHECK(tr.diag.bridge_mh_rejected < tr.diag.bridges);
}

// Each conditional draw is transformed by its conditional CDF. The oracles are
// built from the generic sufficient statistics and likelihood, not from the
// sampler's closed forms.
TEST_CASE("gibbs: ou-speed conditionals (PIT)") {
    const ModelSpec m = ou_speed_model();
    PanelData data = small_panel(ModelId::ou_speed, 5, 4, 1.0, 31);
    PriorSpec pr = default_priors(ModelId::ou_speed);
    GibbsConfig cfg;
    cfg.seed = 17;
    cfg.bridge_steps = 12;
    cfg.wg_strategy = WgStrategy::rejection;
    cfg.init_beta = 1.0;
    cfg.init_gamma = 1.0;
    Diagnostics diag;
    ChainState s = gibbs_init(ModelId::ou_speed, data, pr, cfg, diag);
    Pits u;
    for (int it = 0; it < 1200; ++it) {
        ChainState in = s;
        gibbs_sweep(ModelId::ou_speed, s, data, pr, cfg, diag);
        // a | bridges, beta_in, gamma_in
        SuffStats st = suff_stats(m, in.params(), in.effects, data, s.bridges);
        double asum = 0.0;
        for (std::size_t i = 0; i < data.size(); ++i) {
            double B = st.B[i](0, 0), t = st.t[i][0];
            u.a.push_back(truncnorm_cdf(s.effects[i].a[0], (t - in.gamma[0]) / B, 1.0 / B));
            asum += s.effects[i].a[0];
        }
        // eta | new a, bridges
        ChainState cur = in;
        cur.effects = s.effects;
        cur.bridges = s.bridges;
        double eta = 1.0 / (s.beta[0] * s.beta[0]);
        u.eta.push_back(numeric_cdf([&](double e) { return eta_logtarget(m, cur, data, pr.eta, e); }, eta));
        // gamma | new a
        u.gamma.push_back(gamma_cdf(s.gamma[0], pr.effects_rate->shape + data.size(), pr.effects_rate->rate + asum));
    }
    check_uniform(u.a, "a");
    check_uniform(u.eta, "eta");
    check_uniform(u.gamma, "gamma");
}

TEST_CASE("gibbs: t-diffusion conditionals (PIT)") {
    const ModelSpec m = t_diffusion_model();
    PanelData data = small_panel(ModelId::t_diffusion, 4, 4, 1.0, 41);
    PriorSpec pr = default_priors(ModelId::t_diffusion);
    GibbsConfig cfg;
    cfg.seed = 19;
    cfg.bridge_steps = 12;
    cfg.wg_strategy = WgStrategy::rejection;
    cfg.init_beta = 0.3;
    cfg.init_gamma = 1.0;
    Diagnostics diag;
    ChainState s = gibbs_init(ModelId::t_diffusion, data, pr, cfg, diag);
    Pits u;
    for (int it = 0; it < 800; ++it) {
        ChainState in = s;
        gibbs_sweep(ModelId::t_diffusion, s, data, pr, cfg, diag);
        SuffStats st = suff_stats(m, in.params(), in.effects, data, s.bridges);
        for (std::size_t i = 0; i < data.size(); ++i) {
            double B = st.B[i](0, 0), t = st.t[i][0];
            u.a.push_back(truncnorm_cdf(s.effects[i].a[0], (t - in.gamma[0]) / B, 1.0 / B));
        }
        ChainState cur = in;
        cur.effects = s.effects;
        cur.bridges = s.bridges;
        double eta = 1.0 / (s.beta[0] * s.beta[0]);
        u.eta.push_back(numeric_cdf([&](double e) { return eta_logtarget(m, cur, data, pr.eta, e); }, eta));
    }
    check_uniform(u.a, "a");
    check_uniform(u.eta, "eta");
}

TEST_CASE("gibbs: ou-level conditionals (PIT)") {
    const ModelSpec m = ou_level_model();
    PanelData data = small_panel(ModelId::ou_level, 5, 12, 0.01, 51);
    PriorSpec pr = default_priors(ModelId::ou_level);
    // weak rates keep five units near the truth
    pr.neuronal = {0.01, 0.02, 0.01, 0.35};
    const auto& lam = pr.neuronal;
    GibbsConfig cfg;
    cfg.seed = 23;
    cfg.bridge_steps = 10;
    cfg.wg_strategy = WgStrategy::rejection;
    cfg.init_alpha = 20.0;
    cfg.init_beta = 0.015;
    cfg.init_xi = 0.25;
    cfg.init_gamma = 400.0;
    Diagnostics diag;
    ChainState s = gibbs_init(ModelId::ou_level, data, pr, cfg, diag);
    Pits u;
    const double n = static_cast<double>(data.size());
    for (int it = 0; it < 1200; ++it) {
        ChainState in = s;
        gibbs_sweep(ModelId::ou_level, s, data, pr, cfg, diag);
        // a | alpha_in, beta_in, xi_in, gamma_in: Gaussian prior N(xi, 1/gamma)
        SuffStats st = suff_stats(m, in.params(), in.effects, data, s.bridges);
        double asum = 0.0;
        for (std::size_t i = 0; i < data.size(); ++i) {
            double prec = st.B[i](0, 0) + in.gamma[0];
            double mean = (st.t[i][0] + in.gamma[0] * in.xi[0]) / prec;
            u.a.push_back(normal_cdf(s.effects[i].a[0], mean, 1.0 / std::sqrt(prec)));
            asum += s.effects[i].a[0];
        }
        // alpha | new a: exponential prior with rate lambda1
        SuffStats sa = suff_stats(m, in.params(), s.effects, data, s.bridges);
        double D = sa.D(0, 0), v = sa.v[0];
        u.alpha.push_back(truncnorm_cdf(s.alpha[0], (v - lam[0]) / D, 1.0 / D));
        // eta | new a, new alpha: Exp(lambda2) prior on eta
        ChainState cur = in;
        cur.alpha = s.alpha;
        cur.effects = s.effects;
        cur.bridges = s.bridges;
        double eta = 1.0 / (s.beta[0] * s.beta[0]);
        u.eta.push_back(numeric_cdf([&](double e) { return eta_logtarget(m, cur, data, GammaPrior{1.0, lam[1]}, e); }, eta));
        // xi | new a, gamma_in: exponential prior with rate lambda3
        u.xi.push_back(truncnorm_cdf(s.xi[0], asum / n - lam[2] / (in.gamma[0] * n), 1.0 / (in.gamma[0] * n)));
        // gamma | new a, new xi: Exp(lambda4)
        double ss = 0.0;
        for (const auto& e : s.effects) ss += (e.a[0] - s.xi[0]) * (e.a[0] - s.xi[0]);
        u.gamma.push_back(gamma_cdf(s.gamma[0], 0.5 * n + 1.0, lam[3] + 0.5 * ss));
    }
    check_uniform(u.a, "a");
    check_uniform(u.alpha, "alpha");
    check_uniform(u.eta, "eta");
    check_uniform(u.xi, "xi");
    check_uniform(u.gamma, "gamma");
}

TEST_CASE("random-walk acceptance") {
    Rng rng(61);
    const int n = 100000;
    int acc = 0;
    for (int k = 0; k < n; ++k) acc += rw_accept(0.0, std::log(0.25), rng) ? 1 : 0;
    double p = static_cast<double>(acc) / n, se = std::sqrt(0.25 * 0.75 / n);
    CHECK(std::fabs(p - 0.25) < 3.0 * se);
    CHECK(rw_accept(0.0, 0.5, rng));
    CHECK(rw_accept(-3.0, -3.0, rng));
    CHECK_FALSE(rw_accept(0.0, -INFINITY, rng));
}

TEST_CASE("general sampler: theta target with frozen bridges") {
    PanelData data = small_panel(ModelId::ou_speed, 3, 4, 1.0, 71);
    PriorSpec pr = default_priors(ModelId::ou_speed);
    GeneralModel g = ou_speed_general(pr);
    GibbsConfig cfg;
    cfg.seed = 5;
    cfg.bridge_steps = 10;
    cfg.init_beta = 0.9;
    cfg.init_gamma = 1.2;
    Diagnostics diag;
    GeneralState gs = gibbs_init_general(g, data, cfg, diag);
    const ChainState& s = gs.chain;
    std::vector<std::vector<double>> ystar_before;
    for (const auto& ub : s.bridges)
        for (const auto& b : ub) ystar_before.push_back(b.ystar);

    for (double beta : {0.6, 0.9, 1.4}) {
        Theta th{Vec(0), Vec::Constant(1, beta), Vec::Constant(1, 1.2)};
        double direct = g.log_prior(th);
        Params p{Vec(0), th.beta};
        for (std::size_t i = 0; i < data.size(); ++i)
            direct += loglik_unit(g.model, p, s.effects[i], data.units[i], s.bridges[i]) +
                      std::log(1.2) - 1.2 * s.effects[i].a[0];
        CHECK(log_target_theta(g, th, s, data, 1) == doctest::Approx(direct).epsilon(1e-12));
        CHECK(log_target_theta(g, th, s, data, 3) == log_target_theta(g, th, s, data, 1));
    }
    std::size_t k = 0;
    for (const auto& ub : s.bridges)
        for (const auto& b : ub) CHECK(b.ystar == ystar_before[k++]);

    Theta bad{Vec(0), Vec::Constant(1, -1.0), Vec::Constant(1, 1.0)};
    CHECK(log_target_theta(g, bad, s, data, 1) == -INFINITY);
}

TEST_CASE("general sampler: chain runs and adapts") {
    PanelData data = small_panel(ModelId::ou_speed, 4, 5, 1.0, 81);
    PriorSpec pr = default_priors(ModelId::ou_speed);
    GeneralModel g = ou_speed_general(pr);
    GibbsConfig cfg;
    cfg.seed = 9;
    cfg.bridge_steps = 10;
    cfg.iterations = 100;
    cfg.burn_in = 100;
    cfg.adapt_window = 25;
    cfg.threads = 1;
    DrawTrace a = run_chain_general(g, data, cfg);
    cfg.threads = 2;
    DrawTrace b = run_chain_general(g, data, cfg);
    CHECK(a.columns == std::vector<std::string>{"beta", "gamma"});
    CHECK(a.rows.size() == 100);
    CHECK(a.rows == b.rows);
    double rate = static_cast<double>(a.diag.rw_accepted) / static_cast<double>(a.diag.rw_proposed);
    CHECK(rate > 0.05);
    CHECK(rate < 0.95);
    for (const auto& r : a.rows) CHECK((r[0] > 0.0 && r[1] > 0.0));
}

TEST_CASE("alpha conditional matches a grid of the likelihood") {
    const ModelSpec m = ou_level_model();
    PanelData data = small_panel(ModelId::ou_level, 3, 10, 0.01, 91);
    PriorSpec pr = default_priors(ModelId::ou_level);
    GibbsConfig cfg;
    cfg.seed = 1;
    cfg.bridge_steps = 10;
    cfg.init_alpha = 20.0;
    cfg.init_beta = 0.015;
    cfg.init_xi = 0.25;
    cfg.init_gamma = 400.0;
    Diagnostics diag;
    ChainState s = gibbs_init(ModelId::ou_level, data, pr, cfg, diag);
    SuffStats st = suff_stats(m, s.params(), s.effects, data, s.bridges);
    NormalPrior prior{Vec::Constant(1, 15.0), Mat::Constant(1, 1, 25.0)};
    auto [mean, cov] = alpha_conditional(st, prior);

    auto logt = [&](double al) {
        Params p{Vec::Constant(1, al), s.beta};
        double v = -0.5 * (al - 15.0) * (al - 15.0) / 25.0;
        for (std::size_t i = 0; i < data.size(); ++i) v += loglik_unit(m, p, s.effects[i], data.units[i], s.bridges[i]);
        return v;
    };
    double sd = std::sqrt(cov(0, 0)), lo = mean[0] - 12.0 * sd, hi = mean[0] + 12.0 * sd;
    const int n = 4000;
    double ref = logt(mean[0]), w = 0.0, m1 = 0.0, m2 = 0.0;
    for (int k = 0; k <= n; ++k) {
        double x = lo + (hi - lo) * k / n;
        double d = std::exp(logt(x) - ref) * ((k == 0 || k == n) ? 0.5 : 1.0);
        w += d;
        m1 += d * x;
        m2 += d * x * x;
    }
    m1 /= w;
    double var = m2 / w - m1 * m1;
    CHECK(m1 == doctest::Approx(mean[0]).epsilon(1e-6));
    CHECK(var == doctest::Approx(cov(0, 0)).epsilon(1e-4));
}

TEST_CASE("exponential-family sampler with normal-Wishart effects") {
    const ModelSpec m = ou_level_model();
    PanelData data = small_panel(ModelId::ou_level, 5, 10, 0.01, 101);
    PriorSpec pr;
    pr.alpha = NormalPrior{Vec::Constant(1, 20.0), Mat::Constant(1, 1, 100.0)};
    pr.eta = GammaPrior{1.0, 0.02};
    pr.effects_nw = NormalWishartPrior{Vec::Constant(1, 0.25), 1.0, Mat::Constant(1, 1, 100.0), 3.0};
    GibbsConfig cfg;
    cfg.seed = 13;
    cfg.bridge_steps = 10;
    cfg.iterations = 20;
    cfg.init_beta = 0.015;
    cfg.init_alpha = 20.0;
    cfg.threads = 1;
    DrawTrace a = run_chain_expfam(m, data, pr, cfg);
    cfg.threads = 3;
    DrawTrace b = run_chain_expfam(m, data, pr, cfg);
    CHECK(a.columns == std::vector<std::string>{"alpha_1", "beta", "xi_1", "Gamma_11"});
    CHECK(a.rows.size() == 20);
    CHECK(a.rows == b.rows);
    for (const auto& r : a.rows) CHECK((r[1] > 0.0 && r[3] > 0.0 && std::isfinite(r[0])));

    PriorSpec bad = pr;
    bad.effects_nw.reset();
    CHECK_THROWS_AS(run_chain_expfam(m, data, bad, cfg), ConfigError);
    ModelSpec nobasis = m;
    nobasis.expfam.reset();
    CHECK_THROWS_AS(run_chain_expfam(nobasis, data, pr, cfg), ConfigError);
}

TEST_CASE("weighted-gamma strategy names") {
    CHECK(parse_wg_strategy("mh") == WgStrategy::mh);
    CHECK(parse_wg_strategy("rejection") == WgStrategy::rejection);
    CHECK(to_string(parse_wg_strategy("approx")) == "approx");
    CHECK_THROWS_AS(parse_wg_strategy("gibbs"), ConfigError);
    CHECK(default_wg_strategy(ModelId::t_diffusion) == WgStrategy::mh);
}
