#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <string>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "sdemix/bridge.hpp"
#include "sdemix/error.hpp"
#include "test_models.hpp"

using namespace sdemix;
using namespace sdemix::testing;

namespace {

// Var(X_s | X_0 = 0, X_T = 0) for dX = -a X dt + dW
double ou_bridge_var(double a, double s, double T) {
    auto v = [a](double t) { return (1.0 - std::exp(-2.0 * a * t)) / (2.0 * a); };
    double c = std::exp(-a * (T - s)) * v(s);
    return v(s) - c * c / v(T);
}

// Independent crossing check: the stationary-start path touches the bridge grid.
bool intersects(const std::vector<double>& z, const std::vector<double>& b) {
    bool below = false, above = false;
    for (std::size_t k = 0; k < z.size(); ++k) {
        below = below || z[k] <= b[k];
        above = above || z[k] >= b[k];
    }
    return below && above;
}

}  // namespace

TEST_CASE("euler: driftless martingale") {
    ModelSpec bm = brownian_model();
    Rng rng(1);
    const std::size_t n = 100000;
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        Path p = euler_simulate(bm, params_beta(1.0), effects(0.0), 0.0, 0.0, 1.0, 0.01, rng);
        CHECK_EQ(p.values.size(), 101);
        sum += p.values.back();
    }
    CHECK(std::fabs(sum / n) < 3.0 * std::sqrt(1.0 / n));
}

TEST_CASE("euler: OU transition moments") {
    ModelSpec ou = unit_ou_model();
    Rng rng(2);
    std::vector<double> xs;
    for (int i = 0; i < 100000; ++i)
        xs.push_back(euler_simulate(ou, params_beta(1.0), effects(1.0), 5.0, 0.0, 1.0, 0.01, rng).values.back());
    Moments m = moments(xs);
    double mean = 5.0 * std::exp(-1.0), var = (1.0 - std::exp(-2.0)) / 2.0;
    CHECK(std::fabs(m.mean - mean) < 3.0 * m.se() + 0.02);
    double var_se = m.var * std::sqrt(2.0 / static_cast<double>(m.n));
    CHECK(std::fabs(m.var - var) < 3.0 * var_se + 0.02);
}

TEST_CASE("euler: t-diffusion long-run variance") {
    ModelSpec td = t_diffusion_model();
    double a = 1.0, b = 0.1, nu = 2 * a / (b * b) + 1;
    Rng rng(3);
    Path p = euler_simulate(td, params_beta(b), effects(a), 0.0, 0.0, 20000.0, 0.01, rng);
    std::vector<double> xs(p.values.begin() + 1000, p.values.end());
    double expect = 1.0 / (nu - 2.0);  // scaled t with scale nu^-1/2
    CHECK(moments(xs).var == doctest::Approx(expect).epsilon(0.1));
}

TEST_CASE("euler: grid contract") {
    ModelSpec bm = brownian_model();
    Rng rng(4);
    CHECK_THROWS_AS(euler_simulate(bm, params_beta(1.0), effects(0.0), 0.0, 0.0, 1.0, 0.3, rng), DomainError);
    ModelSpec pos = brownian_model();
    pos.state_lo = 0.0;
    CHECK_THROWS_AS(euler_simulate(pos, params_beta(1.0), effects(0.0), -1.0, 0.0, 1.0, 0.1, rng), DomainError);
    BridgeOptions opt;
    opt.max_step_retries = 3;
    CHECK_THROWS_AS(euler_simulate(pos, params_beta(1.0), effects(0.0), 1e-9, 0.0, 100.0, 1.0, rng, opt),
                    NumericError);
}

TEST_CASE("bridge: endpoints, ystar and crossing index") {
    ModelSpec td = t_diffusion_model();
    BridgeOptions opt;
    opt.keep_paths = true;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        Rng rng(seed);
        double x1 = 0.1 * (seed % 7) - 0.3, x2 = -0.05 * (seed % 5);
        BridgePath b = simulate_bridge_approx(td, params_beta(0.3), effects(0.8), 2.0, x1, 3.0, x2, 50, rng, opt);
        REQUIRE_EQ(b.values.size(), 51);
        CHECK(b.values.front() == x1);
        CHECK(b.values.back() == x2);
        CHECK(b.ystar.front() == 0.0);
        CHECK(b.ystar.back() == 0.0);
        CHECK(b.mu_idx >= 1);
        CHECK(b.mu_idx <= 50);
        CHECK(crossing_index(b.forward, b.reversed) == b.mu_idx);
        double h1 = std::asinh(x1) / 0.3, h2 = std::asinh(x2) / 0.3;
        for (std::size_t k = 1; k < 50; ++k) {
            double ell = h1 + (h2 - h1) * k / 50.0;
            CHECK(b.ystar[k] == doctest::Approx(std::asinh(b.values[k]) / 0.3 - ell).epsilon(1e-12));
        }
    }
}

TEST_CASE("crossing index: weak inequalities and minimality") {
    // reversed is read backwards: forward[i] is compared to reversed[n - i]
    CHECK(crossing_index({0.0, 0.5, 2.0, 3.0}, {1.0, 1.0, 1.0, 1.0}) == 2);
    CHECK(crossing_index({0.0, 1.0, 2.0}, {0.0, 1.0, 5.0}) == 1);  // tie counts
    CHECK(crossing_index({3.0, 2.5, 2.0}, {0.0, 0.0, 0.0}) == 0);
    CHECK(crossing_index({3.0, 2.5, 0.5}, {1.0, 1.0, 1.0}) == 2);
}

TEST_CASE("bridge: Brownian midpoint law") {
    ModelSpec bm = brownian_model();
    Rng rng(11);
    std::vector<double> mid;
    for (int i = 0; i < 10000; ++i)
        mid.push_back(simulate_bridge_approx(bm, params_beta(1.0), effects(0.0), 0.0, 0.0, 1.0, 0.0, 200, rng)
                          .values[100]);
    double d = ks_statistic(mid, [](double x) { return normal_cdf(x, 0.0, 0.5); });
    CHECK(d < ks_critical_01(mid.size()));
}

TEST_CASE("bridge: ystar pointwise mean zero for Brownian bridges") {
    ModelSpec bm = brownian_model();
    Rng rng(12);
    const std::size_t n = 20, reps = 5000;
    std::vector<std::vector<double>> cols(n + 1);
    for (std::size_t r = 0; r < reps; ++r) {
        BridgePath b = simulate_bridge_approx(bm, params_beta(1.0), effects(0.0), 0.0, 0.3, 1.0, -0.2, n, rng);
        for (std::size_t k = 1; k < n; ++k) cols[k].push_back(b.ystar[k]);
    }
    for (std::size_t k = 1; k < n; ++k) {
        Moments m = moments(cols[k]);
        CHECK(std::fabs(m.mean) < 3.0 * m.se() + 1e-12);
    }
}

TEST_CASE("bridge: OU midpoint moments") {
    ModelSpec ou = unit_ou_model();
    Rng rng(13);
    std::vector<double> mid;
    for (int i = 0; i < 20000; ++i)
        mid.push_back(simulate_bridge_approx(ou, params_beta(1.0), effects(1.0), 0.0, 0.0, 1.0, 0.0, 200, rng)
                          .values[100]);
    Moments m = moments(mid);
    CHECK(std::fabs(m.mean) < 3.0 * m.se());
    CHECK(m.var == doctest::Approx(ou_bridge_var(1.0, 0.5, 1.0)).epsilon(0.05));
}

TEST_CASE("bridge: acceptance improves with interval length") {
    ModelSpec ou = unit_ou_model();
    std::vector<double> rate;
    for (double T : {0.25, 1.0, 4.0}) {
        Rng rng(14);
        double attempts = 0.0;
        const int reps = 4000;
        for (int i = 0; i < reps; ++i)
            attempts += static_cast<double>(
                simulate_bridge_approx(ou, params_beta(1.0), effects(1.0), 0.0, -0.8, T, 0.8,
                                       static_cast<std::size_t>(T * 50), rng)
                    .attempts);
        rate.push_back(reps / attempts);
    }
    CHECK(rate[0] > 0.0);
    CHECK(rate[1] > rate[0]);
    CHECK(rate[2] > rate[1]);
}

TEST_CASE("bridge: failure reports attempts") {
    ModelSpec bm = brownian_model();
    Rng rng(15);
    BridgeOptions opt;
    opt.max_attempts = 5;
    try {
        simulate_bridge_approx(bm, params_beta(1.0), effects(0.0), 0.0, 0.0, 1.0, 100.0, 2, rng, opt);
        FAIL("expected failure");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("5 attempts") != std::string::npos);
    }
}

TEST_CASE("geometric variable: immediate crossing gives s = 1") {
    ModelSpec bm = brownian_model();
    BridgePath b;
    b.t1 = 0.0;
    b.t2 = 1.0;
    b.x1 = 100.0;
    b.x2 = -100.0;
    b.delta = 0.1;
    for (int k = 0; k <= 10; ++k) b.values.push_back(100.0 - 20.0 * k);
    Rng rng(16);
    for (int i = 0; i < 100; ++i) CHECK(draw_geom_var(bm, params_beta(1.0), effects(0.0), b, rng).s == 1);
}

TEST_CASE("geometric variable: law against an independent crossing oracle") {
    ModelSpec bm = brownian_model();  // stationary law replaced by N(0,1)
    Rng rng(17);
    BridgePath b = simulate_bridge_approx(bm, params_beta(1.0), effects(0.0), 0.0, 2.0, 1.0, 2.5, 20, rng);

    Rng orng(99);
    const int K = 100000;
    int hits = 0;
    double sq = std::sqrt(b.delta);
    for (int i = 0; i < K; ++i) {
        std::vector<double> z(b.values.size());
        z[0] = orng.normal();
        for (std::size_t k = 1; k < z.size(); ++k) z[k] = z[k - 1] + sq * orng.normal();
        hits += intersects(z, b.values);
    }
    double p = static_cast<double>(hits) / K;
    REQUIRE(p > 0.05);
    REQUIRE(p < 0.8);

    const int n = 10000;
    std::vector<double> s(n);
    for (auto& v : s) v = static_cast<double>(draw_geom_var(bm, params_beta(1.0), effects(0.0), b, rng).s);
    CHECK(moments(s).mean == doctest::Approx(1.0 / p).epsilon(0.05));

    // chi-square on bins 1..k-1 plus a tail bin, expected counts >= 5
    std::vector<double> obs, expct;
    double tail = 1.0;
    for (int k = 1;; ++k) {
        double pk = p * std::pow(1.0 - p, k - 1);
        if (n * (tail - pk) < 5.0 || k > 60) break;
        expct.push_back(n * pk);
        obs.push_back(0.0);
        tail -= pk;
    }
    obs.push_back(0.0);
    expct.push_back(n * tail);
    for (double v : s) {
        auto k = static_cast<std::size_t>(v) - 1;
        obs[std::min(k, obs.size() - 1)] += 1.0;
    }
    double chi2 = 0.0;
    for (std::size_t i = 0; i < obs.size(); ++i) chi2 += (obs[i] - expct[i]) * (obs[i] - expct[i]) / expct[i];
    // one parameter estimated from independent data, so df = bins - 1
    double df = static_cast<double>(obs.size() - 1);
    CHECK(chi2 < boost::math::quantile(boost::math::chi_squared(df), 0.99));
}

TEST_CASE("mh bridge step") {
    BridgePath a, b;
    a.values = {0.0};
    b.values = {1.0};
    Rng rng(18);
    for (int i = 0; i < 1000; ++i) {
        CHECK(mh_bridge_step(a, GeomVar{3}, b, GeomVar{3}, rng).accepted);
        CHECK(mh_bridge_step(a, GeomVar{3}, b, GeomVar{7}, rng).accepted);
    }
    const int n = 100000;
    int acc = 0;
    for (int i = 0; i < n; ++i) {
        BridgeState st = mh_bridge_step(a, GeomVar{4}, b, GeomVar{1}, rng);
        acc += st.accepted;
        CHECK(st.bridge.values[0] == (st.accepted ? 1.0 : 0.0));
        CHECK(st.geom.s == (st.accepted ? 1u : 4u));
    }
    double se = std::sqrt(0.25 * 0.75 / n);
    CHECK(std::fabs(static_cast<double>(acc) / n - 0.25) < 3.0 * se);
}

TEST_CASE("mh bridge chain keeps the Brownian midpoint law") {
    ModelSpec bm = brownian_model();
    Params p = params_beta(1.0);
    Effects e = effects(0.0);
    std::vector<double> mid;
    for (std::uint64_t c = 0; c < 5000; ++c) {
        Rng rng(1000 + c);
        BridgePath cur = simulate_bridge_approx(bm, p, e, 0.0, 0.0, 1.0, 0.0, 200, rng);
        GeomVar s = draw_geom_var(bm, p, e, cur, rng);
        for (int it = 0; it < 3; ++it) {
            BridgePath prop = simulate_bridge_approx(bm, p, e, 0.0, 0.0, 1.0, 0.0, 200, rng);
            GeomVar sp = draw_geom_var(bm, p, e, prop, rng);
            BridgeState st = mh_bridge_step(cur, s, std::move(prop), sp, rng);
            cur = std::move(st.bridge);
            s = st.geom;
        }
        mid.push_back(cur.values[100]);
    }
    double d = ks_statistic(mid, [](double x) { return normal_cdf(x, 0.0, 0.5); });
    CHECK(d < ks_critical_01(mid.size()));
}

TEST_CASE("stationary draws") {
    Rng rng(19);
    ModelSpec ou = ou_speed_model();
    double a = 0.7, b = 1.3;
    std::vector<double> xs(20000);
    for (auto& x : xs) x = stationary_draw(ou, params_beta(b), effects(a), rng);
    CHECK(ks_statistic(xs, [&](double x) { return normal_cdf(x, 0.0, b / std::sqrt(2 * a)); }) <
          ks_critical_01(xs.size()));

    ModelSpec td = t_diffusion_model();
    a = 1.0;
    b = 0.4;
    double nu = 2 * a / (b * b) + 1;
    boost::math::students_t tdist(nu);
    Rng trng(100);
    std::vector<double> ts(200000);
    for (auto& x : ts) x = stationary_draw(td, params_beta(b), effects(a), trng);
    CHECK(ks_statistic(ts, [&](double x) { return boost::math::cdf(tdist, x * std::sqrt(nu)); }) <
          ks_critical_01(ts.size()));
    Moments m = moments(ts);
    double m4 = 0.0;
    for (double x : ts) m4 += std::pow(x - m.mean, 4);
    m4 /= static_cast<double>(ts.size());
    CHECK(m4 / (m.var * m.var) - 3.0 == doctest::Approx(6.0 / (nu - 4.0)).epsilon(0.15));

    ModelSpec lv = ou_level_model();
    std::vector<double> ls(20000);
    for (auto& x : ls) x = stationary_draw(lv, params(20.0, 0.015), effects(5.0), rng);
    Moments lm = moments(ls);
    CHECK(std::fabs(lm.mean - 0.25) < 3.0 * lm.se());

    CHECK_THROWS_AS(stationary_draw(ou, params_beta(1.0), effects(-0.5), rng), DomainError);
}

TEST_CASE("stationary draws without a registered sampler") {
    ModelSpec m = unit_ou_model();
    m.invariant_sampler = nullptr;
    Rng rng(20);
    std::vector<double> xs(1500);
    for (auto& x : xs) x = stationary_draw(m, params_beta(1.0), effects(2.0), rng);
    CHECK(ks_statistic(xs, [](double x) { return normal_cdf(x, 0.0, 0.5); }) < ks_critical_01(xs.size()));
    CHECK_THROWS_AS(stationary_draw(m, params_beta(1.0), effects(0.0), rng), DomainError);
}

TEST_CASE("recenter and rebase are inverse") {
    ModelSpec td = t_diffusion_model();
    Rng rng(21);
    BridgePath b = simulate_bridge_approx(td, params_beta(0.2), effects(1.0), 0.0, 0.4, 1.0, -0.3, 50, rng);
    BridgePath c = b;
    rebase(td, vec1(0.2), Vec(0), c);
    for (std::size_t k = 0; k <= 50; ++k) CHECK(c.values[k] == doctest::Approx(b.values[k]).epsilon(1e-12));
    // new beta keeps ystar and moves values
    rebase(td, vec1(0.25), Vec(0), c);
    recenter(td, vec1(0.25), Vec(0), c);
    for (std::size_t k = 0; k <= 50; ++k) CHECK(c.ystar[k] == doctest::Approx(b.ystar[k]).epsilon(1e-9));
}
