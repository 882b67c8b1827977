#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace sdemix {

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t mix_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> tags);

// mt19937_64 plus a cached normal generator.
class Rng {
  public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    double normal() { return normal_(engine_); }
    double uniform() { return std::generate_canonical<double, 53>(engine_); }
    double uniform_pos();  // (0,1)
    double exponential(double rate) { return -std::log(uniform_pos()) / rate; }
    double gamma(double shape, double rate);
    double chi_squared(double dof) { return gamma(0.5 * dof, 0.5); }
    std::mt19937_64& engine() { return engine_; }

  private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_;
};

// Independent streams keyed by (seed, sweep, unit, site).
class Streams {
  public:
    explicit Streams(std::uint64_t seed) : seed_(seed) {}
    Rng make(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) const {
        return Rng(mix_seed(seed_, {a, b, c}));
    }
    std::uint64_t seed() const { return seed_; }

  private:
    std::uint64_t seed_;
};

}  // namespace sdemix
