#pragma once

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sdemix/rng.hpp"

namespace sdemix {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct Effects {
    Vec a;
    Vec b;
};

// Fixed effects entering the coefficients.
struct Params {
    Vec alpha;
    Vec beta;
};

using DriftFn = std::function<double(const Vec& alpha, const Vec& a, double x)>;
using SigmaFn = std::function<double(const Vec& beta, const Vec& b, double x)>;
using ScalarFn = std::function<double(double)>;

enum class ScaleFactor { none, beta, b };

// Drift alpha.f(x) + a.g(x). When factor is set, sigma = s * c(other, x)
// with s the first component of beta (or b) and other the remaining vector.
struct ExpFamBasis {
    std::vector<ScalarFn> f, f_dx, g, g_dx;
    ScaleFactor factor = ScaleFactor::none;
    std::function<double(const Vec& other, double x)> c, c_dx;
    // optional closed forms of int_x^y f_k/sigma^2 and int_x^y g_k/sigma^2
    std::function<Vec(const Vec& beta, const Vec& b, double x, double y)> int_f_sigma2, int_g_sigma2;

    std::size_t p1() const { return f.size(); }
    std::size_t p2() const { return g.size(); }
};

struct ModelSpec {
    std::string name;
    DriftFn drift, drift_dx;
    SigmaFn sigma, sigma_dx, sigma_dxx;
    double state_lo = -std::numeric_limits<double>::infinity();
    double state_hi = std::numeric_limits<double>::infinity();
    double x_star = 0.0;
    std::optional<ExpFamBasis> expfam;

    // optional closed forms
    std::function<double(const Vec& beta, const Vec& b, double x)> lamperti_closed;
    std::function<double(const Vec& beta, const Vec& b, double y)> lamperti_inv_closed;
    std::function<double(const Params&, const Effects&, double x, double y)> H_closed;
    std::function<double(const Params&, const Effects&, double y)> phi_closed;
    std::function<double(const Params&, const Effects&, Rng&)> invariant_sampler;
    // rough mean-reversion rate for the long-run stationary fallback
    std::function<double(const Params&, const Effects&)> mean_reversion;

    bool in_state(double x) const { return x > state_lo && x < state_hi; }
    // copy with every closed form removed
    ModelSpec generic() const;
};

enum class ModelId { ou_speed, t_diffusion, ou_level };

ModelId parse_model_id(const std::string& s);
std::string to_string(ModelId id);

ModelSpec ou_speed_model();     // dX = -a X dt + beta dW
ModelSpec t_diffusion_model();  // dX = -a X dt + beta sqrt(1+X^2) dW
ModelSpec ou_level_model();     // dX = (a - alpha X) dt + beta dW
ModelSpec builtin_model(ModelId id);

double lamperti(const ModelSpec& m, const Vec& beta, const Vec& b, double x);
double lamperti_inv(const ModelSpec& m, const Vec& beta, const Vec& b, double y);
double drift_mu(const ModelSpec& m, const Params& p, const Effects& e, double y);
double phi(const ModelSpec& m, const Params& p, const Effects& e, double y);
double H_term(const ModelSpec& m, const Params& p, const Effects& e, double x, double y);

// Drift rebuilt from the basis; phi from the f_bar/g_bar/f_tilde/g_tilde kernels.
double drift_from_basis(const ExpFamBasis& basis, const Vec& alpha, const Vec& a, double x);
double phi_from_basis(const ModelSpec& m, const Params& p, const Effects& e, double y);

}  // namespace sdemix
