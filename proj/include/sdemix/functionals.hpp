#pragma once

#include <functional>
#include <span>
#include <vector>

#include "sdemix/likelihood.hpp"

namespace sdemix {

// Per-unit integrals over all intervals, with l1 the linear trend of h at beta = 1.
struct UnitPathSums {
    double yy = 0.0;  // int Y*^2
    double yl = 0.0;  // int Y* l1
    double ll = 0.0;  // int l1^2
    double y = 0.0;   // int Y*
    double l = 0.0;   // int l1
};

UnitPathSums ou_path_sums(std::span<const BridgePath> bridges);

// S_i(beta) = sum_j int tanh^2(beta Y* + l1) for the t-diffusion (l1 from asinh)
double tanh2_integral(std::span<const BridgePath> bridges, double beta);
double tanh2_integral(std::span<const double> ystar_interior, std::size_t steps,
                      std::span<const double> times,
                      std::span<const double> asinh_obs, double beta);

// Data-only quantity G1 = sum_i sum_j (h1(x_j) - h1(x_{j-1}))^2 / (2 dt), h1 = h at beta = 1.
double data_G1(ModelId id, const PanelData& data);

struct ModelFunctionals {
    double G1 = 0.0, G2 = 0.0, E1 = 0.0, E2 = 0.0, E3 = 0.0;
    double v = 0.0, D = 0.0;    // ou-level
    std::vector<double> t, B;   // per-unit effect-conditional statistics
    std::function<double(double)> F;  // t-diffusion log-weight in beta
};

ModelFunctionals model_functionals(ModelId id, const Params& p, std::span<const double> a,
                                   const PanelData& data, const std::vector<UnitBridges>& bridges);

}  // namespace sdemix
