#include "sdemix/synth.hpp"

#include <cmath>

#include "sdemix/bridge.hpp"
#include "sdemix/error.hpp"
#include "sdemix/panel_io.hpp"
#include "sdemix/parallel.hpp"

namespace sdemix {
namespace {

constexpr std::uint64_t kSiteSynth = 4;

}  // namespace

SynthTruth default_truth(ModelId id) {
    SynthTruth t;
    if (id == ModelId::t_diffusion) t.beta = 0.1;
    if (id == ModelId::ou_level) t.beta = 0.015;
    return t;
}

SynthPanel synth_generate(ModelId id, const SynthTruth& truth, std::size_t N, std::size_t n, double dt,
                          std::uint64_t seed, double t0, std::size_t threads) {
    if (N < 1) throw ConfigError("need at least one unit");
    if (n < 2) throw ConfigError("need at least two observations per unit");
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("time step must be positive");
    if (!(truth.beta > 0.0)) throw DomainError("beta must be positive");
    if (id == ModelId::ou_level) {
        if (!(truth.alpha > 0.0) || !(truth.sigma > 0.0)) throw DomainError("alpha and sigma must be positive");
    } else if (!(truth.gamma > 0.0)) {
        throw DomainError("gamma must be positive");
    }

    const ModelSpec m = builtin_model(id);
    Params p;
    p.alpha = id == ModelId::ou_level ? Vec::Constant(1, truth.alpha) : Vec(0);
    p.beta = Vec::Constant(1, truth.beta);
    const double delta = dt / 100.0;

    SynthPanel out;
    out.data.units.resize(N);
    out.data.unit_ids.resize(N);
    out.effects.resize(N);
    Streams streams(seed);
    parallel_for(
        N,
        [&](std::size_t i) {
            Rng rng = streams.make(0, i, kSiteSynth);
            double a = id == ModelId::ou_level ? truth.xi + truth.sigma * rng.normal() : rng.exponential(truth.gamma);
            out.effects[i] = a;
            Effects e;
            e.a = Vec::Constant(1, a);
            e.b = Vec(0);
            UnitData& u = out.data.units[i];
            u.times.resize(n);
            u.values.resize(n);
            u.times[0] = t0;
            u.values[0] = stationary_draw(m, p, e, rng);
            for (std::size_t j = 1; j < n; ++j) {
                u.times[j] = t0 + static_cast<double>(j) * dt;
                Path path = euler_simulate(m, p, e, u.values[j - 1], u.times[j - 1], u.times[j], delta, rng);
                u.values[j] = path.values.back();
            }
            out.data.unit_ids[i] = std::to_string(i + 1);
        },
        threads);

    out.provenance.push_back("sdemix simulate model=" + to_string(id) + " seed=" + std::to_string(seed));
    std::string par = "units=" + std::to_string(N) + " obs=" + std::to_string(n) + " dt=" + format_double(dt) +
                      " t0=" + format_double(t0) + " beta=" + format_double(truth.beta);
    if (id == ModelId::ou_level)
        par += " alpha=" + format_double(truth.alpha) + " xi=" + format_double(truth.xi) +
               " sigma=" + format_double(truth.sigma);
    else
        par += " gamma=" + format_double(truth.gamma);
    out.provenance.push_back(par + " euler_step=dt/100");
    return out;
}

}  // namespace sdemix
