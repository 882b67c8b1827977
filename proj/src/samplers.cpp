#include "sdemix/samplers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/tools/minima.hpp>

#include "sdemix/error.hpp"

namespace sdemix {

void PriorSpec::validate(std::size_t p2) const {
    if (!(eta.shape > 0.0) || !(eta.rate > 0.0)) throw ConfigError("prior on eta needs kappa > 0 and delta > 0");
    if (effects_rate && (!(effects_rate->shape > 0.0) || !(effects_rate->rate > 0.0)))
        throw ConfigError("prior on the effect rate needs nu > 0 and lambda > 0");
    if (effects_nw) {
        const auto& nw = *effects_nw;
        if (!(nw.lambda > 0.0)) throw ConfigError("normal-Wishart prior needs lambda > 0");
        if (!(nw.nu > static_cast<double>(p2) - 1.0)) throw ConfigError("normal-Wishart prior needs nu > p2 - 1");
        Eigen::LLT<Mat> llt(nw.V);
        if (llt.info() != Eigen::Success) throw ConfigError("normal-Wishart prior needs V positive definite");
    }
    if (alpha) {
        Eigen::LLT<Mat> llt(alpha->cov);
        if (llt.info() != Eigen::Success) throw ConfigError("alpha prior covariance not positive definite");
    }
    for (double l : neuronal)
        if (!(l >= 0.0) || !std::isfinite(l)) throw ConfigError("neuronal prior rates must be finite and >= 0");
}

PriorSpec default_priors(ModelId id) {
    PriorSpec p;
    switch (id) {
        case ModelId::ou_speed:
            p.eta = {1.0, 0.5};
            p.effects_rate = GammaPrior{1.0, 2.0};
            break;
        case ModelId::t_diffusion:
            p.eta = {1.0, 5.0};
            p.effects_rate = GammaPrior{1.0, 0.75};
            break;
        case ModelId::ou_level:
            p.neuronal = {5.0, 0.02, 400.0, 0.35};
            p.eta = {1.0, 0.02};
            break;
    }
    return p;
}

double sample_truncnorm_pos(double mean, double variance, Rng& rng) {
    if (!(variance > 0.0)) throw DomainError("truncated normal: variance must be positive");
    double sd = std::sqrt(variance);
    if (mean >= 0.0) {
        while (true) {
            double x = mean + sd * rng.normal();
            if (x > 0.0) return x;
        }
    }
    // standardized lower bound z0 > 0: exponential proposal (Robert)
    double z0 = -mean / sd;
    double lam = 0.5 * (z0 + std::sqrt(z0 * z0 + 4.0));
    while (true) {
        double z = z0 + rng.exponential(lam);
        double d = z - lam;
        if (rng.uniform() <= std::exp(-0.5 * d * d)) {
            double x = mean + sd * z;
            if (x > 0.0) return x;
        }
    }
}

NormalWishartPrior nw_posterior(const NormalWishartPrior& prior, const std::vector<Vec>& a_draws) {
    const std::size_t N = a_draws.size();
    if (N == 0) return prior;
    const auto p = prior.xi0.size();
    Vec abar = Vec::Zero(p);
    for (const Vec& a : a_draws) abar += a;
    abar /= static_cast<double>(N);
    Mat scatter = Mat::Zero(p, p);
    for (const Vec& a : a_draws) scatter += (a - abar) * (a - abar).transpose();
    double n = static_cast<double>(N);
    Vec d = abar - prior.xi0;
    Mat Vinv = prior.V.inverse() + scatter + (prior.lambda * n / (prior.lambda + n)) * d * d.transpose();
    NormalWishartPrior post;
    post.xi0 = (prior.lambda * prior.xi0 + n * abar) / (prior.lambda + n);
    post.lambda = prior.lambda + n;
    post.V = Vinv.inverse();
    post.V = 0.5 * (post.V + post.V.transpose());
    post.nu = prior.nu + n;
    return post;
}

Mat sample_wishart(const Mat& scale, double dof, Rng& rng) {
    const auto p = scale.rows();
    Eigen::LLT<Mat> llt(scale);
    if (llt.info() != Eigen::Success) throw NumericError("Wishart: scale matrix is not positive definite");
    Mat L = llt.matrixL();
    Mat A = Mat::Zero(p, p);
    for (Eigen::Index i = 0; i < p; ++i) {
        A(i, i) = std::sqrt(rng.chi_squared(dof - static_cast<double>(i)));
        for (Eigen::Index j = 0; j < i; ++j) A(i, j) = rng.normal();
    }
    Mat LA = L * A;
    Mat W = LA * LA.transpose();
    return 0.5 * (W + W.transpose());
}

NwDraw sample_nw(const NormalWishartPrior& nw, Rng& rng) {
    NwDraw d;
    d.Gamma = sample_wishart(nw.V, nw.nu, rng);
    Eigen::LLT<Mat> llt(d.Gamma);
    if (llt.info() != Eigen::Success) throw NumericError("normal-Wishart: singular precision draw");
    const auto p = nw.xi0.size();
    Vec z(p);
    for (Eigen::Index k = 0; k < p; ++k) z[k] = rng.normal();
    Vec u = llt.matrixU().solve(z);
    d.xi = nw.xi0 + u / std::sqrt(nw.lambda);
    return d;
}

NwDraw sample_nw_posterior(const NormalWishartPrior& prior, const std::vector<Vec>& a_draws, Rng& rng) {
    return sample_nw(nw_posterior(prior, a_draws), rng);
}

double WeightedGamma::proposal_rate() const {
    if (full_branch()) return rate_pos + rate_signed;
    if (!(rate_pos > 0.0))
        throw NumericError("weighted gamma: both candidate rates are nonpositive (" + std::to_string(rate_pos) + ", " +
                           std::to_string(rate_pos + rate_signed) + ")");
    return rate_pos;
}

double WeightedGamma::log_weight(double eta) const {
    double w = F ? F(1.0 / std::sqrt(eta)) : 0.0;
    if (!full_branch()) w -= eta * rate_signed;
    return w;
}

double WeightedGamma::log_density(double eta) const {
    if (!(eta > 0.0)) return -std::numeric_limits<double>::infinity();
    double w = F ? F(1.0 / std::sqrt(eta)) : 0.0;
    return (shape - 1.0) * std::log(eta) - (rate_pos + rate_signed) * eta + w;
}

double weighted_gamma_mode(const WeightedGamma& wg) {
    if (!(wg.shape > 0.0)) throw DomainError("weighted gamma: shape must be positive");
    double R = wg.rate_pos + wg.rate_signed;
    double start = R > 0.0 && wg.shape > 1.0 ? (wg.shape - 1.0) / R : wg.shape / wg.proposal_rate();
    auto f = [&](double u) { return -wg.log_density(std::exp(u)); };
    double u0 = std::log(start), w = 0.25;
    for (int k = 0; k < 60; ++k) {
        std::uintmax_t iters = 200;
        auto r = boost::math::tools::brent_find_minima(f, u0 - w, u0 + w, 40, iters);
        if (!std::isfinite(r.second)) throw NumericError("weighted gamma: density not finite near the mode");
        bool interior = r.first - (u0 - w) > 0.05 * w && (u0 + w) - r.first > 0.05 * w;
        u0 = r.first;
        if (interior) return std::exp(u0);
        w *= 2.0;
    }
    throw NumericError("weighted gamma: no interior mode");
}

WeightedGamma recentre(const WeightedGamma& wg) {
    if (!(wg.shape > 1.0)) return wg;
    double mode = weighted_gamma_mode(wg);
    WeightedGamma out;
    out.shape = wg.shape;
    out.rate_pos = (wg.shape - 1.0) / mode;
    out.rate_signed = 0.0;
    double shift = wg.rate_pos + wg.rate_signed - out.rate_pos;
    auto F = wg.F;
    out.F = [F, shift](double beta) { return (F ? F(beta) : 0.0) - shift / (beta * beta); };
    return out;
}

WeightedGamma match_curvature(const WeightedGamma& wg, double inflate) {
    if (!(inflate >= 1.0)) throw DomainError("match_curvature: inflate must be >= 1");
    double mode = weighted_gamma_mode(wg);
    double h = 1e-3 * mode;
    double c = (wg.log_density(mode + h) - 2.0 * wg.log_density(mode) + wg.log_density(mode - h)) / (h * h);
    if (!(c < 0.0) || !std::isfinite(c)) throw NumericError("weighted gamma: density not log-concave at its mode");
    WeightedGamma out;
    out.shape = 1.0 - c * mode * mode / inflate;
    out.rate_pos = (out.shape - 1.0) / mode;
    out.rate_signed = 0.0;
    WeightedGamma src = wg;
    const double s1 = out.shape - 1.0, r1 = out.rate_pos;
    out.F = [src, s1, r1](double beta) {
        double eta = 1.0 / (beta * beta);
        return src.log_density(eta) - s1 * std::log(eta) + r1 * eta;
    };
    return out;
}

double mh_accept_prob(double log_w_current, double log_w_proposal) {
    double d = log_w_proposal - log_w_current;
    if (d >= 0.0) return 1.0;
    return std::exp(d);
}

WgResult sample_weighted_gamma_mh(const WeightedGamma& wg, double current_eta, Rng& rng) {
    if (!(wg.shape > 0.0)) throw DomainError("weighted gamma: shape must be positive");
    double rate = wg.proposal_rate();
    double prop = rng.gamma(wg.shape, rate);
    double acc = mh_accept_prob(wg.log_weight(current_eta), wg.log_weight(prop));
    WgResult r;
    r.full_branch = wg.full_branch();
    r.accepted = acc >= 1.0 || rng.uniform() < acc;
    r.eta = r.accepted ? prop : current_eta;
    return r;
}

WgResult sample_weighted_gamma_rejection(const WeightedGamma& wg, double log_M, double eta_lo, double eta_hi,
                                         Rng& rng, std::size_t max_tries) {
    namespace bm = boost::math;
    if (!(wg.shape > 0.0)) throw DomainError("weighted gamma: shape must be positive");
    if (!(eta_lo > 0.0) || eta_hi < eta_lo) throw DomainError("weighted gamma: truncation needs 0 < E1 <= E2");
    WgResult r;
    r.full_branch = wg.full_branch();
    if (eta_lo == eta_hi) {
        r.eta = eta_lo;
        return r;
    }
    double rate = wg.proposal_rate();
    double p_lo = bm::gamma_p(wg.shape, rate * eta_lo), p_hi = bm::gamma_p(wg.shape, rate * eta_hi);
    bool upper = p_lo > 0.5;
    double q_lo = bm::gamma_q(wg.shape, rate * eta_lo), q_hi = bm::gamma_q(wg.shape, rate * eta_hi);
    for (std::size_t k = 0; k < max_tries; ++k) {
        double u = rng.uniform();
        double eta;
        if (upper) eta = bm::gamma_q_inv(wg.shape, q_hi + u * (q_lo - q_hi)) / rate;
        else eta = bm::gamma_p_inv(wg.shape, p_lo + u * (p_hi - p_lo)) / rate;
        eta = std::clamp(eta, eta_lo, eta_hi);
        double lw = wg.log_weight(eta);
        if (lw > log_M + 1e-12)
            throw ConsistencyError("weighted gamma rejection: weight exceeds the bound at eta=" + std::to_string(eta));
        if (rng.uniform() < std::exp(lw - log_M)) {
            r.eta = eta;
            r.tries = k + 1;
            return r;
        }
    }
    throw NumericError("weighted gamma rejection: no acceptance after " + std::to_string(max_tries) + " tries");
}

double approx_scale(double rate) {
    if (!(rate > 0.0)) return 1.0;
    return std::pow(10.0, std::floor(std::log10(rate)));
}

WgResult sample_weighted_gamma_approx(const WeightedGamma& wg, std::size_t K, Rng& rng, double M) {
    if (K == 0) throw DomainError("approximate direct sampling needs K >= 1");
    if (!(wg.shape > 0.0)) throw DomainError("weighted gamma: shape must be positive");
    double rate = wg.proposal_rate();
    if (!(M > 0.0)) M = approx_scale(rate);
    WgResult r;
    r.full_branch = wg.full_branch();
    if (K == 1) {
        r.eta = rng.gamma(wg.shape, rate / M) / M;
        return r;
    }
    std::vector<double> eta(K), lw(K);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < K; ++k) {
        eta[k] = rng.gamma(wg.shape, rate / M) / M;
        lw[k] = wg.log_weight(eta[k]);
        if (lw[k] > mx) mx = lw[k];
    }
    if (!std::isfinite(mx)) throw NumericError("approximate direct sampling: all weights underflow; rescale M");
    double total = 0.0;
    for (std::size_t k = 0; k < K; ++k) total += (lw[k] = std::exp(lw[k] - mx));
    double u = rng.uniform() * total, acc = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        acc += lw[k];
        if (u < acc) {
            r.eta = eta[k];
            return r;
        }
    }
    r.eta = eta[K - 1];
    return r;
}

double sample_gamma_posterior(double nu, double lambda, double effect_sum, std::size_t N, Rng& rng) {
    if (effect_sum < 0.0) throw DomainError("gamma posterior: effect sum must be >= 0");
    return rng.gamma(nu + static_cast<double>(N), lambda + effect_sum);
}

namespace {

// log x - digamma(x) for x >= 6 by the asymptotic series
double lmd_series(double x) {
    double f = 1.0 / (x * x);
    return 0.5 / x +
           f * (1.0 / 12 - f * (1.0 / 120 - f * (1.0 / 252 - f * (1.0 / 240 - f * (1.0 / 132 - f * (691.0 / 32760 - f / 12.0))))));
}

}  // namespace

double digamma(double x) {
    if (!(x > 0.0)) throw DomainError("digamma: argument must be positive");
    double r = 0.0;
    while (x < 6.0) {
        r -= 1.0 / x;
        x += 1.0;
    }
    return r + std::log(x) - lmd_series(x);
}

double log_minus_digamma(double x) {
    if (!(x > 0.0)) throw DomainError("digamma: argument must be positive");
    if (x >= 6.0) return lmd_series(x);
    return std::log(x) - digamma(x);
}

double trigamma(double x) {
    if (!(x > 0.0)) throw DomainError("trigamma: argument must be positive");
    double r = 0.0;
    while (x < 6.0) {
        r += 1.0 / (x * x);
        x += 1.0;
    }
    double f = 1.0 / (x * x);
    return r + 1.0 / x + 0.5 * f +
           (f / x) * (1.0 / 6 - f * (1.0 / 30 - f * (1.0 / 42 - f * (1.0 / 30 - f * (5.0 / 66 - f * (691.0 / 2730 - f * 7.0 / 6))))));
}

double solve_gamma_shape(double c) {
    if (!(c > 0.0) || !std::isfinite(c)) throw DomainError("solve_gamma_shape: need c > 0");
    auto g = [c](double k) { return log_minus_digamma(k) - c; };
    double k = (3.0 - c + std::sqrt((c - 3.0) * (c - 3.0) + 24.0 * c)) / (12.0 * c);
    double lo = k, hi = k;
    if (g(k) > 0.0) {
        do {
            lo = hi;
            hi *= 2.0;
        } while (g(hi) > 0.0);
    } else {
        do {
            hi = lo;
            lo *= 0.5;
        } while (g(lo) < 0.0 && lo > 1e-300);
    }
    for (int it = 0; it < 200; ++it) {
        double gk = g(k);
        if (std::fabs(gk) < 1e-14) break;
        if (gk > 0.0) lo = k;
        else hi = k;
        double nk = k - gk / (1.0 / k - trigamma(k));
        if (!(nk > lo && nk < hi)) nk = 0.5 * (lo + hi);
        if (std::fabs(nk - k) <= 1e-16 * k) {
            k = nk;
            break;
        }
        k = nk;
    }
    if (!(std::fabs(g(k)) < 1e-10)) throw NumericError("solve_gamma_shape: no convergence for c=" + std::to_string(c));
    return k;
}

}  // namespace sdemix
