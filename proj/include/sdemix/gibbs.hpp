#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sdemix/bridge.hpp"
#include "sdemix/likelihood.hpp"
#include "sdemix/model.hpp"
#include "sdemix/rng.hpp"
#include "sdemix/samplers.hpp"

namespace sdemix {

enum class WgStrategy { mh, rejection, approx };

WgStrategy parse_wg_strategy(const std::string& s);
std::string to_string(WgStrategy s);
WgStrategy default_wg_strategy(ModelId id);

struct GibbsConfig {
    std::size_t iterations = 1000;
    std::size_t burn_in = 100;
    std::size_t bridge_steps = 50;
    bool exact_bridges = false;
    std::optional<WgStrategy> wg_strategy;  // model default when empty
    std::size_t wg_K = 1000;
    bool wg_recentre = true;  // proposal re-centred at the conditional mode
    bool save_effects = false;
    std::uint64_t seed = 0;
    std::size_t threads = 0;
    BridgeOptions bridge;
    // starting values; drawn from the prior when empty
    std::optional<double> init_alpha, init_beta, init_gamma, init_xi;
    std::size_t adapt_window = 50;  // general sampler
};

struct ChainState {
    Vec alpha;
    Vec beta;
    Vec gamma;  // scalar effect-law parameters (rate, or precision for ou-level)
    Vec xi;     // Gaussian effect mean (ou-level, normal-Wishart)
    Mat Gamma;  // Gaussian effect precision (normal-Wishart)
    std::vector<Effects> effects;
    std::vector<UnitBridges> bridges;
    std::vector<std::vector<GeomVar>> geoms;
    std::size_t iter = 0;

    Params params() const { return Params{alpha, beta}; }
};

struct Diagnostics {
    std::uint64_t bridges = 0;
    std::uint64_t bridge_attempts = 0;
    std::uint64_t bridge_mh_rejected = 0;
    std::uint64_t wg_proposed = 0;
    std::uint64_t wg_accepted = 0;
    std::uint64_t wg_fallback = 0;
    std::uint64_t wg_burnin_exact = 0;
    std::uint64_t rw_proposed = 0;
    std::uint64_t rw_accepted = 0;
    std::uint64_t rw_zero_windows = 0;

    void merge(const Diagnostics& o);
};

struct DrawTrace {
    std::vector<std::string> columns;  // parameter names (iter excluded)
    std::vector<std::vector<double>> rows;
    std::vector<std::string> effect_columns;
    std::vector<std::vector<double>> effect_rows;
    Diagnostics diag;
};

// Refresh every bridge under the current state (site 7 / first site). In
// exact mode each proposal carries a geometric variable and goes through the
// pseudo-marginal MH step; rejected bridges keep their Y* and are re-based.
void refresh_bridges(const ModelSpec& m, ChainState& s, const PanelData& data, const GibbsConfig& cfg,
                     std::uint64_t sweep, Diagnostics& diag);

// Built-in models.
std::vector<std::string> trace_columns(ModelId id);
std::vector<double> trace_row(ModelId id, const ChainState& s);

ChainState gibbs_init(ModelId id, const PanelData& data, const PriorSpec& pr, const GibbsConfig& cfg,
                      Diagnostics& diag);
void gibbs_sweep(ModelId id, ChainState& s, const PanelData& data, const PriorSpec& pr, const GibbsConfig& cfg,
                 Diagnostics& diag);
// ou-speed and t-diffusion: bridges, effects, eta, gamma
void exp_effects_sweep(ModelId id, ChainState& s, const PanelData& data, const PriorSpec& pr,
                       const GibbsConfig& cfg, Diagnostics& diag);
// ou-level: bridges, a, alpha, eta, xi, gamma
void neuronal_sweep(ChainState& s, const PanelData& data, const PriorSpec& pr, const GibbsConfig& cfg,
                    Diagnostics& diag);

using TraceCallback = std::function<void(const ChainState&)>;
DrawTrace run_chain(ModelId id, const PanelData& data, const PriorSpec& pr, const GibbsConfig& cfg,
                    const TraceCallback& on_sweep = {});

// eta draw by the chosen weighted-gamma strategy; draw_eta_raw skips re-centring
WgResult draw_eta_raw(const WeightedGamma& wg, WgStrategy strategy, double current_eta, const GibbsConfig& cfg,
                      Rng& rng);
// In burn-in sweeps an MH chain whose current eta sits more than kStrandedLogGap
// below the conditional mode takes an exact draw instead (an independence
// proposal cannot leave such a point).
inline constexpr double kStrandedLogGap = 50.0;
WgResult draw_eta(const WeightedGamma& wg, WgStrategy strategy, double current_eta, const GibbsConfig& cfg,
                  Rng& rng, bool burn_in = false);

// Exponential-family sampler (sigma = beta c(x), Gaussian normal-Wishart effects
// or exponential scalar effects when priors.effects_rate is set).
ChainState gibbs_init_expfam(const ModelSpec& m, const PanelData& data, const PriorSpec& pr,
                             const GibbsConfig& cfg, Diagnostics& diag);
void gibbs_sweep_expfam(ChainState& s, const ModelSpec& m, const PanelData& data, const PriorSpec& pr,
                        const GibbsConfig& cfg, Diagnostics& diag);
std::vector<std::string> expfam_columns(const ModelSpec& m, const PriorSpec& pr);
std::vector<double> expfam_row(const ChainState& s, const PriorSpec& pr);
DrawTrace run_chain_expfam(const ModelSpec& m, const PanelData& data, const PriorSpec& pr, const GibbsConfig& cfg);

// The beta log-weight F(beta) = -1/2 sum int phi(Y* + l1/beta) for sigma = beta c(x).
double expfam_F(const ModelSpec& m, const ChainState& s, const PanelData& data, double beta);

// Alpha full conditional (mean, covariance) from the sufficient statistics.
std::pair<Vec, Mat> alpha_conditional(const SuffStats& st, const NormalPrior& prior);

// General Metropolis-within-Gibbs sampler.
struct Theta {
    Vec alpha, beta, gamma;
};

struct GeneralModel {
    ModelSpec model;
    std::function<double(const Theta&)> log_prior;  // -inf outside the support
    std::function<double(const Theta&, const Effects&)> log_effect_density;
    std::function<Theta(Rng&)> draw_prior;
    std::function<Effects(const Theta&, Rng&)> draw_effects;
    std::vector<std::string> names;  // alpha..., beta..., gamma...
};

GeneralModel ou_speed_general(const PriorSpec& pr);

struct GeneralState {
    ChainState chain;
    Vec theta_scale;                  // per-coordinate proposal sd (alpha, beta, gamma)
    std::vector<Vec> effect_scale;    // per unit, (a, b)
    Vec theta_acc, theta_tries;       // current adaptation window
    std::vector<Vec> effect_acc, effect_tries;
};

Theta theta_of(const ChainState& s);
double log_target_theta(const GeneralModel& g, const Theta& th, const ChainState& s, const PanelData& data,
                        std::size_t threads);
GeneralState gibbs_init_general(const GeneralModel& g, const PanelData& data, const GibbsConfig& cfg,
                                Diagnostics& diag);
void gibbs_sweep_general(GeneralState& gs, const GeneralModel& g, const PanelData& data, const GibbsConfig& cfg,
                         Diagnostics& diag);
DrawTrace run_chain_general(const GeneralModel& g, const PanelData& data, const GibbsConfig& cfg);

// Random-walk acceptance for a symmetric proposal.
bool rw_accept(double log_target_current, double log_target_proposal, Rng& rng);

}  // namespace sdemix
