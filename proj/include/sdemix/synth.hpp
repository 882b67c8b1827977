#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sdemix/likelihood.hpp"
#include "sdemix/model.hpp"

namespace sdemix {

// True values; alpha, xi and sigma are used by ou-level only.
struct SynthTruth {
    double beta = 1.0;
    double gamma = 1.0;
    double alpha = 20.0;
    double xi = 0.25;
    double sigma = 0.05;
};

SynthTruth default_truth(ModelId id);

struct SynthPanel {
    PanelData data;
    std::vector<double> effects;
    std::vector<std::string> provenance;
};

// N units observed at t0 + j dt, j = 0..n-1, Euler on dt/100.
SynthPanel synth_generate(ModelId id, const SynthTruth& truth, std::size_t N, std::size_t n, double dt,
                          std::uint64_t seed, double t0 = 0.0, std::size_t threads = 0);

}  // namespace sdemix
