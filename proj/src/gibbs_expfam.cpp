#include <cmath>

#include "sdemix/error.hpp"
#include "sdemix/gibbs.hpp"
#include "sdemix/parallel.hpp"
#include "sdemix/quadrature.hpp"

namespace sdemix {
namespace {

constexpr std::uint64_t kMaster = 0xffffffffffffULL;

Vec unit_beta(const Vec& beta) {
    Vec r = beta;
    r[0] = 1.0;
    return r;
}

Vec draw_mvn(const Vec& mean, const Mat& cov, Rng& rng) {
    Eigen::LLT<Mat> llt(cov);
    if (llt.info() != Eigen::Success) throw NumericError("covariance not positive definite");
    Vec z(mean.size());
    for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = rng.normal();
    return mean + llt.matrixL() * z;
}

// mean and covariance of N((t + Gamma xi) P^-1, P^-1) with P = B + Gamma
Vec draw_precision_form(const Vec& lin, const Mat& prec, Rng& rng) {
    Eigen::LLT<Mat> llt(prec);
    if (llt.info() != Eigen::Success) throw NumericError("conditional precision not positive definite");
    Vec mean = llt.solve(lin);
    Vec z(lin.size());
    for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = rng.normal();
    return mean + llt.matrixU().solve(z);
}

void require_scaled(const ModelSpec& m) {
    if (!m.expfam) throw ConfigError("exponential-family sampler needs a model with a basis");
    if (m.expfam->factor != ScaleFactor::beta) throw ConfigError("exponential-family sampler needs sigma = beta * c(x)");
}

// G1 and G2 for sigma = beta c: endpoint terms at beta = 1
std::pair<double, double> endpoint_G(const ModelSpec& m, const ChainState& s, const PanelData& data) {
    const ExpFamBasis& fb = *m.expfam;
    double G1 = 0.0, G2 = 0.0;
    Vec b1 = unit_beta(s.beta);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const UnitData& u = data.units[i];
        const Effects& e = s.effects[i];
        double hp = lamperti(m, b1, e.b, u.values[0]);
        for (std::size_t j = 1; j < u.size(); ++j) {
            double hj = lamperti(m, b1, e.b, u.values[j]);
            G1 += (hj - hp) * (hj - hp) / (2.0 * (u.times[j] - u.times[j - 1]));
            hp = hj;
        }
        const double x1 = u.values.front(), xn = u.values.back();
        auto integ = [&](const std::vector<ScalarFn>& fns, const auto& closed) -> Vec {
            if (closed) return closed(b1, e.b, x1, xn);
            Vec r(fns.size());
            for (std::size_t k = 0; k < fns.size(); ++k) {
                r[static_cast<Eigen::Index>(k)] = adaptive_simpson(
                    [&](double x) {
                        double sg = m.sigma(b1, e.b, x);
                        return fns[k](x) / (sg * sg);
                    },
                    x1, xn);
            }
            return r;
        };
        Vec fi = integ(fb.f, fb.int_f_sigma2);
        Vec gi = integ(fb.g, fb.int_g_sigma2);
        if (fb.p1()) G2 -= s.alpha.dot(fi);
        if (fb.p2()) G2 -= e.a.dot(gi);
    }
    return {G1, G2};
}

}  // namespace

double expfam_F(const ModelSpec& m, const ChainState& s, const PanelData& data, double beta) {
    Params p{s.alpha, s.beta};
    p.beta[0] = beta;
    Vec b1 = unit_beta(s.beta);
    double f = 0.0;
    std::vector<double> grid;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const UnitData& u = data.units[i];
        const Effects& e = s.effects[i];
        double hp = lamperti(m, b1, e.b, u.values[0]);
        for (std::size_t j = 1; j < u.size(); ++j) {
            const BridgePath& b = s.bridges[i][j - 1];
            double hj = lamperti(m, b1, e.b, u.values[j]);
            const std::size_t n = b.steps();
            grid.resize(n + 1);
            for (std::size_t k = 0; k <= n; ++k) grid[k] = phi(m, p, e, b.ystar[k] + grid_ell(hp, hj, k, n) / beta);
            f -= 0.5 * path_integral(grid, b.delta);
            hp = hj;
        }
    }
    return f;
}

std::pair<Vec, Mat> alpha_conditional(const SuffStats& st, const NormalPrior& prior) {
    Mat Sinv = prior.cov.inverse();
    Mat P = st.D + Sinv;
    Eigen::LLT<Mat> llt(P);
    if (llt.info() != Eigen::Success) throw NumericError("alpha conditional: D + Sigma^-1 not positive definite");
    Mat cov = llt.solve(Mat::Identity(P.rows(), P.cols()));
    Vec mean = llt.solve(st.v + Sinv * prior.mean);
    return {mean, cov};
}

std::vector<std::string> expfam_columns(const ModelSpec& m, const PriorSpec& pr) {
    std::vector<std::string> c;
    for (std::size_t k = 0; k < m.expfam->p1(); ++k) c.push_back("alpha_" + std::to_string(k + 1));
    c.push_back("beta");
    if (pr.effects_rate) {
        c.push_back("gamma");
    } else {
        const std::size_t p2 = m.expfam->p2();
        for (std::size_t k = 0; k < p2; ++k) c.push_back("xi_" + std::to_string(k + 1));
        for (std::size_t k = 0; k < p2; ++k)
            for (std::size_t l = k; l < p2; ++l) c.push_back("Gamma_" + std::to_string(k + 1) + std::to_string(l + 1));
    }
    return c;
}

std::vector<double> expfam_row(const ChainState& s, const PriorSpec& pr) {
    std::vector<double> r(s.alpha.data(), s.alpha.data() + s.alpha.size());
    r.push_back(s.beta[0]);
    if (pr.effects_rate) {
        r.push_back(s.gamma[0]);
    } else {
        for (Eigen::Index k = 0; k < s.xi.size(); ++k) r.push_back(s.xi[k]);
        for (Eigen::Index k = 0; k < s.Gamma.rows(); ++k)
            for (Eigen::Index l = k; l < s.Gamma.cols(); ++l) r.push_back(s.Gamma(k, l));
    }
    return r;
}

ChainState gibbs_init_expfam(const ModelSpec& m, const PanelData& data, const PriorSpec& pr,
                             const GibbsConfig& cfg, Diagnostics& diag) {
    require_scaled(m);
    const ExpFamBasis& fb = *m.expfam;
    const auto p1 = static_cast<Eigen::Index>(fb.p1()), p2 = static_cast<Eigen::Index>(fb.p2());
    data.validate();
    pr.validate(fb.p2());
    Rng rng = Streams(cfg.seed).make(0, kMaster, 0);
    ChainState s;
    s.alpha = Vec(p1);
    if (p1 > 0) {
        if (cfg.init_alpha) s.alpha.setConstant(*cfg.init_alpha);
        else if (pr.alpha) s.alpha = draw_mvn(pr.alpha->mean, pr.alpha->cov, rng);
        else throw ConfigError("exponential-family sampler needs a normal prior on alpha");
    }
    double eta = rng.gamma(pr.eta.shape, pr.eta.rate);
    s.beta = Vec::Constant(1, cfg.init_beta ? *cfg.init_beta : 1.0 / std::sqrt(eta));
    s.effects.resize(data.size());
    if (pr.effects_rate) {
        if (p2 != 1) throw ConfigError("exponential effects need a scalar random effect");
        double gam = cfg.init_gamma ? *cfg.init_gamma : rng.gamma(pr.effects_rate->shape, pr.effects_rate->rate);
        s.gamma = Vec::Constant(1, gam);
        for (auto& e : s.effects) {
            e.a = Vec::Constant(1, rng.exponential(gam));
            e.b = Vec(0);
        }
    } else {
        if (!pr.effects_nw) throw ConfigError("exponential-family sampler needs an effect-law prior");
        NwDraw d = sample_nw(*pr.effects_nw, rng);
        s.xi = d.xi;
        s.Gamma = d.Gamma;
        Mat cov = d.Gamma.inverse();
        for (auto& e : s.effects) {
            e.a = p2 > 0 ? draw_mvn(s.xi, cov, rng) : Vec(0);
            e.b = Vec(0);
        }
    }
    refresh_bridges(m, s, data, cfg, 0, diag);
    return s;
}

void gibbs_sweep_expfam(ChainState& s, const ModelSpec& m, const PanelData& data, const PriorSpec& pr,
                        const GibbsConfig& cfg, Diagnostics& diag) {
    require_scaled(m);
    const ExpFamBasis& fb = *m.expfam;
    const std::uint64_t sweep = s.iter + 1;
    Rng rng = Streams(cfg.seed).make(sweep, kMaster, 0);
    const std::size_t N = data.size();

    // 1: alpha
    if (fb.p1() > 0) {
        SuffStats st = suff_stats(m, s.params(), s.effects, data, s.bridges);
        auto [mean, cov] = alpha_conditional(st, *pr.alpha);
        s.alpha = draw_mvn(mean, cov, rng);
    }

    // 2: beta through eta
    {
        auto [G1, G2] = endpoint_G(m, s, data);
        WeightedGamma wg;
        wg.shape = 0.5 * static_cast<double>(data.total_obs() - N) + pr.eta.shape;
        wg.rate_pos = pr.eta.rate + G1;
        wg.rate_signed = G2;
        wg.F = [&](double bt) { return expfam_F(m, s, data, bt); };
        double beta = s.beta[0];
        WgResult r = draw_eta(wg, cfg.wg_strategy ? *cfg.wg_strategy : WgStrategy::mh, 1.0 / (beta * beta), cfg, rng,
                              sweep <= cfg.burn_in);
        diag.wg_proposed += r.tries;
        diag.wg_accepted += r.accepted ? 1 : 0;
        diag.wg_fallback += r.full_branch ? 0 : 1;
        diag.wg_burnin_exact += r.exact_escape ? 1 : 0;
        s.beta[0] = 1.0 / std::sqrt(r.eta);
    }

    // 3: effect law
    if (pr.effects_rate) {
        double asum = 0.0;
        for (const auto& e : s.effects) asum += e.a[0];
        s.gamma[0] = sample_gamma_posterior(pr.effects_rate->shape, pr.effects_rate->rate, asum, N, rng);
    } else if (fb.p2() > 0) {
        std::vector<Vec> draws;
        for (const auto& e : s.effects) draws.push_back(e.a);
        NwDraw d = sample_nw_posterior(*pr.effects_nw, draws, rng);
        s.xi = d.xi;
        s.Gamma = d.Gamma;
    }

    // 5: effects
    if (fb.p2() > 0) {
        SuffStats st = suff_stats(m, s.params(), s.effects, data, s.bridges);
        for (std::size_t i = 0; i < N; ++i) {
            if (pr.effects_rate) {
                double B = st.B[i](0, 0), t = st.t[i][0];
                s.effects[i].a[0] = sample_truncnorm_pos((t - s.gamma[0]) / B, 1.0 / B, rng);
            } else {
                s.effects[i].a = draw_precision_form(st.t[i] + s.Gamma * s.xi, st.B[i] + s.Gamma, rng);
            }
        }
    }

    // 7: bridges
    refresh_bridges(m, s, data, cfg, sweep, diag);
    s.iter = sweep;
}

DrawTrace run_chain_expfam(const ModelSpec& m, const PanelData& data, const PriorSpec& pr, const GibbsConfig& cfg) {
    if (cfg.iterations < 1) throw ConfigError("iterations must be >= 1");
    DrawTrace tr;
    ChainState s = gibbs_init_expfam(m, data, pr, cfg, tr.diag);
    tr.columns = expfam_columns(m, pr);
    for (std::size_t it = 0; it < cfg.iterations; ++it) {
        gibbs_sweep_expfam(s, m, data, pr, cfg, tr.diag);
        tr.rows.push_back(expfam_row(s, pr));
    }
    return tr;
}

}  // namespace sdemix
