#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "sdemix/bridge.hpp"
#include "sdemix/likelihood.hpp"
#include "sdemix/model.hpp"

namespace sdemix {

struct EmConfig {
    std::size_t iterations = 50;
    std::size_t M = 50;
    std::size_t inner_burn_in = 10;
    std::size_t thin = 2;
    std::size_t bridge_steps = 50;
    bool exact_bridges = false;
    std::uint64_t seed = 0;
    std::size_t threads = 0;
    double beta_lo = 0.01, beta_hi = 1.0, tol = 1e-6;  // t-diffusion bracket
    bool keep_samples = false;  // retain every sampled bridge set (tests)
    BridgeOptions bridge;
};

struct EmTheta {
    double beta = 1.0;
    double gamma = 1.0;
};

// Data-only quantities of the M-step.
struct EmFixed {
    double G1 = 0.0;
    std::size_t n_dot = 0, N = 0;
    double span_sum = 0.0;
    std::vector<std::vector<double>> asinh_obs;  // t-diffusion
};

EmFixed em_fixed(ModelId id, const PanelData& data);

struct EStepStats {
    std::size_t M = 0, N = 0, steps = 0;
    double G2 = 0.0, E1 = 0.0, E2 = 0.0;  // MC averages of the panel sums
    double a_bar = 0.0;                   // average over units and samples
    std::vector<std::vector<double>> a;   // [unit][m]
    // t-diffusion: interior Y* grids, [unit][m], interval-major
    std::vector<std::vector<std::vector<double>>> ystar;
    // keep_samples: [unit][m]
    std::vector<std::vector<UnitBridges>> samples;
};

EStepStats mcem_estep(ModelId id, const PanelData& data, const EmTheta& theta, const EmConfig& cfg, std::uint64_t k);
EmTheta mcem_mstep(ModelId id, const EStepStats& st, const EmFixed& fx, const PanelData& data, const EmConfig& cfg);

// MC objective Q-hat(theta) up to a theta-free constant.
double em_objective(ModelId id, const EStepStats& st, const EmFixed& fx, const PanelData& data, const EmTheta& theta,
                    std::size_t threads = 0);

// Argmax over beta of -C/beta^2 + E2/beta - m log beta.
double ou_speed_beta_hat(double C, double E2, double m);

// q-tilde(beta) for the t-diffusion
double tdiff_qtilde(const EStepStats& st, const EmFixed& fx, const PanelData& data, double beta, std::size_t threads = 0);

struct EmState {
    EmTheta theta;
    std::size_t k = 0;
    std::size_t M = 0;
    std::vector<EmTheta> trajectory;
};

using EmCallback = std::function<void(const EmState&)>;
EmState run_em(ModelId id, const PanelData& data, const EmTheta& init, const EmConfig& cfg,
               const EmCallback& on_iter = {});

struct GaussianEffectsUpdate {
    Vec xi;
    Mat Gamma;
};
GaussianEffectsUpdate gaussian_effects_update(const std::vector<Vec>& draws);

struct GammaEffectsUpdate {
    double kappa = 1.0;
    double delta = 1.0;
};
// e_bar: mean of E, l_bar: mean of log E
GammaEffectsUpdate gamma_effects_update(double e_bar, double l_bar);

}  // namespace sdemix
