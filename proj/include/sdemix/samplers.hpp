#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

#include "sdemix/model.hpp"
#include "sdemix/rng.hpp"

namespace sdemix {

struct GammaPrior {
    double shape = 1.0;
    double rate = 1.0;
};

struct NormalPrior {
    Vec mean;
    Mat cov;
};

struct NormalWishartPrior {
    Vec xi0;
    double lambda = 1.0;
    Mat V;
    double nu = 1.0;
};

struct PriorSpec {
    std::optional<NormalPrior> alpha;
    GammaPrior eta{1.0, 1.0};                      // on eta = beta^-2: (kappa, delta)
    std::optional<NormalWishartPrior> effects_nw;  // Gaussian effects
    std::optional<GammaPrior> effects_rate;        // exponential effects: (nu, lambda)
    std::array<double, 4> neuronal{5.0, 0.02, 400.0, 0.35};

    void validate(std::size_t p2 = 1) const;
};

PriorSpec default_priors(ModelId id);

double sample_truncnorm_pos(double mean, double variance, Rng& rng);

struct NwDraw {
    Vec xi;
    Mat Gamma;
};

NormalWishartPrior nw_posterior(const NormalWishartPrior& prior, const std::vector<Vec>& a_draws);
Mat sample_wishart(const Mat& scale, double dof, Rng& rng);
NwDraw sample_nw(const NormalWishartPrior& nw, Rng& rng);
NwDraw sample_nw_posterior(const NormalWishartPrior& prior, const std::vector<Vec>& a_draws, Rng& rng);

// Gamma(shape, rate_pos + rate_signed) density times exp(F(eta^-1/2)).
// rate_pos >= 0 always; rate_signed may be negative.
struct WeightedGamma {
    double shape = 1.0;
    double rate_pos = 0.0;
    double rate_signed = 0.0;
    std::function<double(double beta)> F;

    bool full_branch() const { return rate_pos + rate_signed > 0.0; }
    double proposal_rate() const;
    // F plus the -eta*rate_signed correction on the fallback branch
    double log_weight(double eta) const;
    double log_density(double eta) const;  // unnormalized
};

struct WgResult {
    double eta = 0.0;
    bool accepted = true;
    bool full_branch = true;
    std::size_t tries = 1;  // proposals drawn (rejection)
    bool exact_escape = false;
};

// Mode of the weighted gamma density.
double weighted_gamma_mode(const WeightedGamma& wg);
// Same density, proposal Gamma(shape, (shape - 1) / mode); the linear
// remainder moves into F. Unchanged when shape <= 1.
WeightedGamma recentre(const WeightedGamma& wg);
// Same density, proposal gamma with the mode of the density and its
// log-curvature divided by `inflate`; shape and the log remainder move into F.
WeightedGamma match_curvature(const WeightedGamma& wg, double inflate = 1.0);

WgResult sample_weighted_gamma_mh(const WeightedGamma& wg, double current_eta, Rng& rng);

double mh_accept_prob(double log_w_current, double log_w_proposal);

WgResult sample_weighted_gamma_rejection(const WeightedGamma& wg, double log_M, double eta_lo, double eta_hi,
                                         Rng& rng, std::size_t max_tries = 1000000);

// M with (G1+G2)/M in [1,100]; K candidates from Gamma(shape, rate/M) rescaled by M.
WgResult sample_weighted_gamma_approx(const WeightedGamma& wg, std::size_t K, Rng& rng, double M = 0.0);
double approx_scale(double rate);

double sample_gamma_posterior(double nu, double lambda, double effect_sum, std::size_t N, Rng& rng);

double digamma(double x);
double trigamma(double x);
double log_minus_digamma(double x);  // log x - digamma(x)
double solve_gamma_shape(double c);

}  // namespace sdemix
